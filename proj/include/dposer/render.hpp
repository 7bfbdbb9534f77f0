#pragma once

#include <string>
#include <vector>

#include "dposer/body_model.hpp"

namespace dposer {

// Orthographic front view (x to the right, y up) of one or more skeletons
// laid out side by side, one line element per bone.
std::string render_svg(const KinematicTree& tree, const std::vector<Joints3>& skeletons, double panel_size = 240.0);

void write_svg(const KinematicTree& tree, const std::vector<Joints3>& skeletons, const std::string& path);

}  // namespace dposer
