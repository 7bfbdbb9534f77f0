#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dposer/rng.hpp"
#include "dposer/types.hpp"

namespace dposer {

struct PoseDataset {
  std::string name;
  std::uint64_t seed = 0;
  PoseBatch poses;  // raw axis-angle, one column per pose

  Eigen::Index count() const { return poses.cols(); }
  void validate() const;
};

enum class PoseFamily { walk_cycle, reach, squat, mixture };

std::string to_string(PoseFamily family);
PoseFamily parse_pose_family(std::string_view name);

struct SyntheticFamilySpec {
  PoseFamily family = PoseFamily::walk_cycle;
  int modes = 2;
  double std = 0.05;  // within-mode jitter, radians
  int count = 4096;
  std::uint64_t seed = 0;

  void validate() const;
};

// Each family is a smooth closed curve in joint-angle space. Mode centres sit
// evenly along the curve (mixtures cycle through walk, reach and squat) and
// pose i is the centre of mode i % modes plus Gaussian jitter, clamped to
// [-pi, pi]. Values are rounded to f32 so datasets survive the binary format
// bit-exactly.
PoseDataset generate_synthetic(const SyntheticFamilySpec& spec);

PoseVector synthetic_mode_center(PoseFamily family, int mode, int modes);

// One pose from the same distribution with a uniformly drawn mode; used for
// held-out evaluation cases.
PoseVector draw_family_pose(const SyntheticFamilySpec& spec, Rng& rng);

// A smooth motion sequence (one column per frame) that travels along the
// family curve from a random phase at a random speed. Mixtures use the family
// of mode `seed % modes`. No jitter.
PoseBatch generate_motion(const SyntheticFamilySpec& spec, int frames);

// --- PPD1 binary format ------------------------------------------------------
//   "PPD1" | u32 version = 1 | u32 count | u32 dim = 63 | f32[count * 63] | u32 CRC32
inline constexpr std::uint32_t kDatasetVersion = 1;

void write_ppd(const PoseDataset& dataset, const std::string& path);
PoseDataset read_ppd(const std::string& path);
std::vector<unsigned char> encode_ppd(const PoseBatch& poses);
PoseBatch decode_ppd(std::vector<unsigned char> bytes);

// Reads either format, picked by extension (.csv or anything else -> PPD1).
PoseDataset read_poses(const std::string& path);
void write_poses(const PoseDataset& dataset, const std::string& path);

// --- CSV ---------------------------------------------------------------------
void write_poses_csv(const PoseBatch& poses, const std::string& path);
PoseBatch read_poses_csv(const std::string& path);

struct Keypoint2D {
  Vec2 position = Vec2::Zero();
  double confidence = 0.0;
};
using Keypoints2D = std::vector<Keypoint2D>;

// joint,x,y,confidence
void write_keypoints_csv(const Keypoints2D& kps, const std::string& path);
Keypoints2D read_keypoints_csv(const std::string& path, int num_joints);

// frame,joint,x,y,z (mm)
void write_trajectory_csv(const std::vector<Joints3>& frames, const std::string& path);
std::vector<Joints3> read_trajectory_csv(const std::string& path, int num_joints);

// --- corruption --------------------------------------------------------------
template <typename T>
struct Corrupted {
  T corrupted;
  T clean;
};

// Additive i.i.d. Gaussian noise. Entries where `mask` is false are left
// untouched; an absent mask corrupts everything.
Corrupted<PoseBatch> corrupt(const PoseBatch& poses, double noise_std, std::uint64_t seed,
                             const std::optional<Eigen::Array<bool, kPoseDim, 1>>& mask = std::nullopt);
Corrupted<std::vector<Joints3>> corrupt(const std::vector<Joints3>& frames, double noise_std, std::uint64_t seed,
                                        const std::optional<std::vector<bool>>& joint_mask = std::nullopt);

}  // namespace dposer
