#include "dposer/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "detail/binary_io.hpp"
#include "dposer/rng.hpp"

namespace dposer {

namespace {

constexpr double kPi = std::numbers::pi;

// Skeleton joint -> pose slot (joint 1 is slot 0).
void set_angle(PoseVector& p, int joint, int axis, double value) { p[3 * (joint - 1) + axis] = value; }

enum Joint {
  kLHip = 1, kRHip = 2, kSpine1 = 3, kLKnee = 4, kRKnee = 5, kSpine2 = 6, kLAnkle = 7, kRAnkle = 8,
  kSpine3 = 9, kNeck = 12, kLCollar = 13, kRCollar = 14, kHead = 15, kLShoulder = 16, kRShoulder = 17,
  kLElbow = 18, kRElbow = 19, kLWrist = 20, kRWrist = 21
};

PoseFamily family_of_mode(PoseFamily family, int mode) {
  if (family != PoseFamily::mixture) return family;
  static constexpr PoseFamily order[] = {PoseFamily::walk_cycle, PoseFamily::reach, PoseFamily::squat};
  return order[mode % 3];
}

// Every family is a closed curve over phi in [0, 2pi); reach and squat go out
// and back through the extension u = (1 - cos phi) / 2.
PoseVector family_curve(PoseFamily family, double phi) {
  PoseVector p = PoseVector::Zero();
  switch (family) {
    case PoseFamily::walk_cycle: {
      const double s = std::sin(phi), c = std::cos(phi);
      set_angle(p, kLHip, 0, -0.45 * s);
      set_angle(p, kRHip, 0, 0.45 * s);
      set_angle(p, kLKnee, 0, 0.3 + 0.3 * c);
      set_angle(p, kRKnee, 0, 0.3 - 0.3 * c);
      set_angle(p, kLAnkle, 0, 0.15 * s);
      set_angle(p, kRAnkle, 0, -0.15 * s);
      set_angle(p, kSpine2, 1, 0.08 * s);
      set_angle(p, kLShoulder, 1, 0.35 * s);
      set_angle(p, kLShoulder, 2, -1.2);
      set_angle(p, kRShoulder, 1, 0.35 * s);
      set_angle(p, kRShoulder, 2, 1.2);
      set_angle(p, kLElbow, 1, -0.3 - 0.15 * s);
      set_angle(p, kRElbow, 1, 0.3 - 0.15 * s);
      break;
    }
    case PoseFamily::reach: {
      const double u = 0.5 - 0.5 * std::cos(phi);
      set_angle(p, kSpine1, 0, 0.25 * u);
      set_angle(p, kSpine2, 1, -0.2 * u);
      set_angle(p, kRCollar, 2, 0.2 * u);
      set_angle(p, kRShoulder, 1, 0.7 * u);
      set_angle(p, kRShoulder, 2, 1.2 - 1.1 * u);
      set_angle(p, kRElbow, 1, 1.3 * (1.0 - u));
      set_angle(p, kRWrist, 2, -0.3 * u);
      set_angle(p, kLShoulder, 2, -1.2);
      set_angle(p, kLElbow, 1, -0.3);
      set_angle(p, kHead, 0, 0.2 * u);
      set_angle(p, kRKnee, 0, 0.15 * u);
      set_angle(p, kRHip, 0, -0.1 * u);
      break;
    }
    case PoseFamily::squat: {
      const double u = 0.5 - 0.5 * std::cos(phi);
      set_angle(p, kLHip, 0, -1.3 * u);
      set_angle(p, kRHip, 0, -1.3 * u);
      set_angle(p, kLHip, 2, -0.15 * u);
      set_angle(p, kRHip, 2, 0.15 * u);
      set_angle(p, kLKnee, 0, 2.0 * u);
      set_angle(p, kRKnee, 0, 2.0 * u);
      set_angle(p, kLAnkle, 0, -0.5 * u);
      set_angle(p, kRAnkle, 0, -0.5 * u);
      set_angle(p, kSpine1, 0, 0.45 * u);
      set_angle(p, kLShoulder, 1, -0.9 * u);
      set_angle(p, kLShoulder, 2, -1.2 + 0.2 * u);
      set_angle(p, kRShoulder, 1, 0.9 * u);
      set_angle(p, kRShoulder, 2, 1.2 - 0.2 * u);
      set_angle(p, kNeck, 0, -0.2 * u);
      break;
    }
    case PoseFamily::mixture: break;
  }
  return p;
}

// Phase of mode m: modes sit evenly along the curve, mixtures cycle through
// the three families.
double mode_phase(PoseFamily family, int mode, int modes) {
  if (family != PoseFamily::mixture) return 2.0 * kPi * mode / modes;
  const int per_family = (modes + 2) / 3;
  return 2.0 * kPi * (mode / 3) / per_family;
}

double quantize(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

std::string to_string(PoseFamily family) {
  switch (family) {
    case PoseFamily::walk_cycle: return "walk_cycle";
    case PoseFamily::reach: return "reach";
    case PoseFamily::squat: return "squat";
    case PoseFamily::mixture: return "mixture";
  }
  return "walk_cycle";
}

PoseFamily parse_pose_family(std::string_view name) {
  if (name == "walk_cycle") return PoseFamily::walk_cycle;
  if (name == "reach") return PoseFamily::reach;
  if (name == "squat") return PoseFamily::squat;
  if (name == "mixture") return PoseFamily::mixture;
  throw DomainError("unknown pose family '" + std::string(name) + "'");
}

void PoseDataset::validate() const {
  if (poses.cols() < 1) throw DataError("dataset '" + name + "' is empty");
  if (!poses.allFinite()) throw DataError("dataset '" + name + "' contains non-finite values");
}

void SyntheticFamilySpec::validate() const {
  if (modes < 1) throw DomainError("synthetic family needs at least one mode");
  if (!(std >= 0.0)) throw DomainError("synthetic family jitter std must be non-negative");
  if (count < 1) throw DomainError("synthetic family count must be positive");
}

PoseVector synthetic_mode_center(PoseFamily family, int mode, int modes) {
  if (modes < 1 || mode < 0 || mode >= modes) throw DomainError("synthetic_mode_center: mode out of range");
  PoseVector c = family_curve(family_of_mode(family, mode), mode_phase(family, mode, modes));
  for (int k = 0; k < kPoseDim; ++k) c[k] = std::clamp(c[k], -kPi, kPi);
  return c;
}

PoseDataset generate_synthetic(const SyntheticFamilySpec& spec) {
  spec.validate();
  PoseDataset ds;
  ds.name = to_string(spec.family);
  ds.seed = spec.seed;
  ds.poses.resize(kPoseDim, spec.count);
  Rng rng(spec.seed, {0xda7a});
  std::vector<PoseVector> centers;
  for (int m = 0; m < spec.modes; ++m) centers.push_back(synthetic_mode_center(spec.family, m, spec.modes));
  for (int i = 0; i < spec.count; ++i) {
    const PoseVector& c = centers[static_cast<std::size_t>(i % spec.modes)];
    for (int k = 0; k < kPoseDim; ++k)
      ds.poses(k, i) = quantize(std::clamp(c[k] + spec.std * rng.normal(), -kPi, kPi));
  }
  return ds;
}

PoseVector draw_family_pose(const SyntheticFamilySpec& spec, Rng& rng) {
  spec.validate();
  const int m = static_cast<int>(rng.index(static_cast<std::uint64_t>(spec.modes)));
  const PoseVector c = synthetic_mode_center(spec.family, m, spec.modes);
  PoseVector p;
  for (int k = 0; k < kPoseDim; ++k) p[k] = quantize(std::clamp(c[k] + spec.std * rng.normal(), -kPi, kPi));
  return p;
}

PoseBatch generate_motion(const SyntheticFamilySpec& spec, int frames) {
  spec.validate();
  if (frames < 1) throw DomainError("generate_motion: frames must be positive");
  Rng rng(spec.seed, {0x307104});
  const int m = static_cast<int>(spec.seed % static_cast<std::uint64_t>(spec.modes));
  const PoseFamily f = family_of_mode(spec.family, m);
  const double phase = rng.uniform(0.0, 2.0 * kPi);
  const double speed = rng.uniform(0.08, 0.16);
  PoseBatch out(kPoseDim, frames);
  for (int i = 0; i < frames; ++i) {
    const PoseVector p = family_curve(f, phase + speed * i);
    for (int k = 0; k < kPoseDim; ++k) out(k, i) = quantize(std::clamp(p[k], -kPi, kPi));
  }
  return out;
}

// --- PPD1 ----------------------------------------------------------------------

std::vector<unsigned char> encode_ppd(const PoseBatch& poses) {
  detail::ByteWriter w;
  w.put_bytes("PPD1", 4);
  w.put<std::uint32_t>(kDatasetVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(poses.cols()));
  w.put<std::uint32_t>(kPoseDim);
  for (Eigen::Index c = 0; c < poses.cols(); ++c)
    for (int r = 0; r < kPoseDim; ++r) w.put<float>(static_cast<float>(poses(r, c)));
  w.seal();
  return w.bytes();
}

PoseBatch decode_ppd(std::vector<unsigned char> bytes) {
  detail::ByteReader r(std::move(bytes), "pose dataset");
  r.expect_magic("PPD1");
  r.verify_crc();
  const auto version = r.get<std::uint32_t>();
  if (version != kDatasetVersion) throw FormatError("pose dataset: unsupported version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  const auto dim = r.get<std::uint32_t>();
  if (dim != kPoseDim) throw FormatError("pose dataset: dimension must be 63, got " + std::to_string(dim));
  if (r.remaining() != static_cast<std::size_t>(count) * dim * sizeof(float))
    throw CorruptionError("pose dataset: payload size does not match header");
  PoseBatch poses(kPoseDim, count);
  for (std::uint32_t c = 0; c < count; ++c)
    for (int k = 0; k < kPoseDim; ++k) poses(k, c) = static_cast<double>(r.get<float>());
  return poses;
}

void write_ppd(const PoseDataset& dataset, const std::string& path) {
  detail::write_file(path, encode_ppd(dataset.poses));
}

PoseDataset read_ppd(const std::string& path) {
  PoseDataset ds;
  ds.name = path;
  ds.poses = decode_ppd(detail::read_file(path));
  return ds;
}

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view tok, const std::string& what) {
  while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
  while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t' || tok.back() == '\r')) tok.remove_suffix(1);
  double v = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
    throw FormatError(what + ": cannot parse number '" + std::string(tok) + "'");
  return v;
}

// Numeric CSV rows; a leading non-numeric header line is skipped.
std::vector<std::vector<double>> read_numeric_csv(const std::string& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + what + " '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> toks;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      toks.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (first) {
      first = false;
      double dummy;
      auto t = toks.front();
      while (!t.empty() && t.front() == ' ') t.remove_prefix(1);
      const auto res = std::from_chars(t.data(), t.data() + t.size(), dummy);
      if (res.ec != std::errc()) continue;
    }
    std::vector<double> row;
    for (auto t : toks) row.push_back(parse_double(t, what));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

PoseDataset read_poses(const std::string& path) {
  if (ends_with(path, ".csv")) {
    PoseDataset ds;
    ds.name = path;
    ds.poses = read_poses_csv(path);
    return ds;
  }
  return read_ppd(path);
}

void write_poses(const PoseDataset& dataset, const std::string& path) {
  if (ends_with(path, ".csv"))
    write_poses_csv(dataset.poses, path);
  else
    write_ppd(dataset, path);
}

void write_poses_csv(const PoseBatch& poses, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  for (Eigen::Index c = 0; c < poses.cols(); ++c) {
    for (int k = 0; k < kPoseDim; ++k) out << (k ? "," : "") << format_double(poses(k, c));
    out << "\n";
  }
}

PoseBatch read_poses_csv(const std::string& path) {
  const auto rows = read_numeric_csv(path, "pose CSV");
  PoseBatch poses(kPoseDim, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != kPoseDim)
      throw FormatError("pose CSV: row " + std::to_string(i) + " has " + std::to_string(rows[i].size()) + " values");
    for (int k = 0; k < kPoseDim; ++k) poses(k, static_cast<Eigen::Index>(i)) = rows[i][k];
  }
  return poses;
}

void write_keypoints_csv(const Keypoints2D& kps, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "joint,x,y,confidence\n";
  for (std::size_t j = 0; j < kps.size(); ++j)
    out << j << "," << format_double(kps[j].position.x()) << "," << format_double(kps[j].position.y()) << ","
        << format_double(kps[j].confidence) << "\n";
}

Keypoints2D read_keypoints_csv(const std::string& path, int num_joints) {
  const auto rows = read_numeric_csv(path, "keypoint CSV");
  Keypoints2D kps(static_cast<std::size_t>(num_joints));
  for (const auto& row : rows) {
    if (row.size() != 4) throw FormatError("keypoint CSV: expected joint,x,y,confidence");
    const int j = static_cast<int>(row[0]);
    if (j < 0 || j >= num_joints) throw FormatError("keypoint CSV: joint index out of range");
    if (row[3] < 0.0 || row[3] > 1.0) throw FormatError("keypoint CSV: confidence must lie in [0, 1]");
    kps[j] = {Vec2(row[1], row[2]), row[3]};
  }
  return kps;
}

void write_trajectory_csv(const std::vector<Joints3>& frames, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "frame,joint,x,y,z\n";
  for (std::size_t f = 0; f < frames.size(); ++f)
    for (Eigen::Index j = 0; j < frames[f].cols(); ++j)
      out << f << "," << j << "," << format_double(frames[f](0, j)) << "," << format_double(frames[f](1, j)) << ","
          << format_double(frames[f](2, j)) << "\n";
}

std::vector<Joints3> read_trajectory_csv(const std::string& path, int num_joints) {
  const auto rows = read_numeric_csv(path, "trajectory CSV");
  std::vector<Joints3> frames;
  std::vector<std::vector<bool>> seen;
  for (const auto& row : rows) {
    if (row.size() != 5) throw FormatError("trajectory CSV: expected frame,joint,x,y,z");
    const auto f = static_cast<std::size_t>(row[0]);
    const int j = static_cast<int>(row[1]);
    if (row[0] < 0 || j < 0 || j >= num_joints) throw FormatError("trajectory CSV: index out of range");
    while (frames.size() <= f) {
      frames.push_back(Joints3::Zero(3, num_joints));
      seen.emplace_back(static_cast<std::size_t>(num_joints), false);
    }
    frames[f].col(j) = Vec3(row[2], row[3], row[4]);
    seen[f][j] = true;
  }
  for (const auto& s : seen)
    for (bool b : s)
      if (!b) throw FormatError("trajectory CSV: every frame must list every joint");
  return frames;
}

Corrupted<PoseBatch> corrupt(const PoseBatch& poses, double noise_std, std::uint64_t seed,
                             const std::optional<Eigen::Array<bool, kPoseDim, 1>>& mask) {
  if (!(noise_std >= 0.0)) throw DomainError("corrupt: noise_std must be non-negative");
  Corrupted<PoseBatch> out{poses, poses};
  Rng rng(seed, {0xc0de});
  for (Eigen::Index c = 0; c < poses.cols(); ++c)
    for (int k = 0; k < kPoseDim; ++k) {
      const double n = rng.normal();
      if (noise_std > 0.0 && (!mask || (*mask)[k])) out.corrupted(k, c) += noise_std * n;
    }
  return out;
}

Corrupted<std::vector<Joints3>> corrupt(const std::vector<Joints3>& frames, double noise_std, std::uint64_t seed,
                                        const std::optional<std::vector<bool>>& joint_mask) {
  if (!(noise_std >= 0.0)) throw DomainError("corrupt: noise_std must be non-negative");
  Corrupted<std::vector<Joints3>> out{frames, frames};
  Rng rng(seed, {0xc0de, 3});
  for (auto& f : out.corrupted) {
    if (joint_mask && static_cast<Eigen::Index>(joint_mask->size()) != f.cols())
      throw ShapeError("corrupt: joint mask length mismatch");
    for (Eigen::Index j = 0; j < f.cols(); ++j)
      for (int k = 0; k < 3; ++k) {
        const double n = rng.normal();
        if (noise_std > 0.0 && (!joint_mask || (*joint_mask)[static_cast<std::size_t>(j)])) f(k, j) += noise_std * n;
      }
  }
  return out;
}

}  // namespace dposer
