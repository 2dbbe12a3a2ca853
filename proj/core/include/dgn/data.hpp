#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dgn/linalg.hpp"
#include "dgn/losses.hpp"

namespace dgn {

enum class Geometry { GaussianBlobs, PlanarPatches, Mixed };

/// Width of the per-point geometric features: a normal-like direction (3)
/// followed by height (1).
inline constexpr int kExtraFeatureDim = 4;

struct SceneSpec {
  int num_classes = 6;
  int points_min = 80;
  int points_max = 120;
  Geometry geometry = Geometry::Mixed;
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SceneBatch {
  Matrix coords;       // n x 3
  Matrix extra_feats;  // n x d_extra
  std::vector<int> gt_labels;
  SparseLabels sparse;
  int num_classes = 0;

  Eigen::Index size() const noexcept { return coords.rows(); }
  /// coords and extra features side by side: the network input.
  Matrix inputs() const;
  void validate() const;
  bool operator==(const SceneBatch& other) const;
};

/// Deterministic scene for spec.seed. Class c always occupies the same
/// region of a ring layout (jittered per scene); odd classes are planar
/// patches and even classes blobs under Geometry::Mixed.
SceneBatch gen_scene(const SceneSpec& spec);

/// m = max(1, round(rate * n)) points drawn uniformly without replacement;
/// indices are returned in ascending order.
SparseLabels sample_sparse_labels(const SceneBatch& scene, double rate, std::uint64_t seed);

struct DatasetSpec {
  SceneSpec scene;
  int num_scenes = 20;
  double label_rate = 1e-3;
};

/// num_scenes scenes with sparse labels, every stream derived from seed.
std::vector<SceneBatch> make_dataset(const DatasetSpec& spec, std::uint64_t seed);

struct IoUReport {
  std::vector<double> per_class_iou;
  /// False for classes absent from both prediction and ground truth; those
  /// are excluded from the mean and their IoU is reported as 0.
  std::vector<bool> counted;
  double miou = 0.0;
};

/// Accumulating confusion matrix, for mIoU over several scenes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  void add(const std::vector<int>& pred, const std::vector<int>& gt);
  IoUReport report() const;
  std::int64_t at(int gt, int pred) const;

 private:
  int num_classes_;
  std::vector<std::int64_t> counts_;
};

/// IoU_c = TP / (TP + FP + FN), averaged over classes occurring in gt or pred.
IoUReport miou(const std::vector<int>& pred, const std::vector<int>& gt, int num_classes);

/// `dgn/1` text scene format; see docs/formats.md.
void write_scene(std::ostream& out, const SceneBatch& scene);
void write_scene(const std::filesystem::path& path, const SceneBatch& scene);
/// Throws ParseError (index = 1-based line) or IoError.
SceneBatch read_scene(std::istream& in, const std::string& source_name = "<stream>");
SceneBatch read_scene(const std::filesystem::path& path);

/// Shortest decimal representation that reads back to the same double.
std::string format_exact(double value);
/// Six significant digits, printf %.6g; used by every report.
std::string format_report(double value);

}  // namespace dgn
