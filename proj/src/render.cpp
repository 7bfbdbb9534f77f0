#include "dposer/render.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace dposer {

std::string render_svg(const KinematicTree& tree, const std::vector<Joints3>& skeletons, double panel_size) {
  const double margin = 0.1 * panel_size;
  double extent = 1.0;
  for (const auto& s : skeletons) extent = std::max(extent, s.topRows<2>().cwiseAbs().maxCoeff());
  const double k = (0.5 * panel_size - margin) / extent;

  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << panel_size * std::max<std::size_t>(1, skeletons.size())
      << "\" height=\"" << panel_size << "\">\n";
  for (std::size_t i = 0; i < skeletons.size(); ++i) {
    const Joints3& s = skeletons[i];
    if (s.cols() != tree.num_joints()) throw ShapeError("render_svg: skeleton does not match the tree");
    const double cx = (static_cast<double>(i) + 0.5) * panel_size, cy = 0.5 * panel_size;
    out << "  <g stroke=\"#1f4e79\" stroke-width=\"3\" stroke-linecap=\"round\">\n";
    for (int j = 1; j < tree.num_joints(); ++j) {
      const int p = tree.parent[j];
      out << "    <line x1=\"" << cx + k * s(0, p) << "\" y1=\"" << cy - k * s(1, p) << "\" x2=\"" << cx + k * s(0, j)
          << "\" y2=\"" << cy - k * s(1, j) << "\"/>\n";
    }
    out << "  </g>\n";
  }
  out << "</svg>\n";
  return out.str();
}

void write_svg(const KinematicTree& tree, const std::vector<Joints3>& skeletons, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path);
  f << render_svg(tree, skeletons);
}

}  // namespace dposer
