#include "dgn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include <Eigen/Geometry>

#include "dgn/error.hpp"
#include "dgn/rng.hpp"

namespace dgn {
namespace {

constexpr double kBlobSigma = 0.15;
constexpr double kBlobRadius = 2.5 * kBlobSigma;
constexpr double kPatchHalfWidth = 0.3;
constexpr double kCenterJitter = 0.2;

bool is_blob(Geometry geometry, int cls) {
  switch (geometry) {
    case Geometry::GaussianBlobs: return true;
    case Geometry::PlanarPatches: return false;
    case Geometry::Mixed: return cls % 2 == 0;
  }
  return true;
}

Eigen::Vector3d class_anchor(int cls, int num_classes) {
  const double ring = std::max(2.5, 0.35 * num_classes);
  const double angle = 2.0 * std::numbers::pi * cls / num_classes;
  const double height = 0.8 * ((cls * 7) % 3);
  return {ring * std::cos(angle), ring * std::sin(angle), height};
}

Eigen::Vector3d class_normal(int cls) {
  const double tilt = (cls % 4) * std::numbers::pi / 8.0;
  const double azimuth = cls * 2.0 * std::numbers::pi / 5.0;
  return {std::sin(tilt) * std::cos(azimuth), std::sin(tilt) * std::sin(azimuth), std::cos(tilt)};
}

/// Two unit vectors spanning the plane orthogonal to n.
std::pair<Eigen::Vector3d, Eigen::Vector3d> plane_basis(const Eigen::Vector3d& n) {
  const Eigen::Vector3d helper = std::abs(n.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
  Eigen::Vector3d e1 = n.cross(helper).normalized();
  Eigen::Vector3d e2 = n.cross(e1);
  return {e1, e2};
}

[[noreturn]] void parse_fail(const std::string& source, std::int64_t line, std::int64_t offset,
                             const std::string& reason) {
  throw Error(ErrorKind::ParseError,
              source + ":" + std::to_string(line) + " (offset " + std::to_string(offset) + "): " + reason,
              line);
}

std::vector<std::string_view> split_ws(std::string_view text) {
  std::vector<std::string_view> tokens;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    const std::size_t start = pos;
    while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    if (pos > start) tokens.push_back(text.substr(start, pos - start));
  }
  return tokens;
}

template <typename T>
bool parse_token(std::string_view token, T& value) {
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  return ec == std::errc() && ptr == token.data() + token.size();
}

}  // namespace

void SceneSpec::validate() const {
  if (num_classes < 2) throw Error(ErrorKind::InvalidArgument, "scene needs num_classes >= 2");
  if (points_min < 1 || points_max < points_min) {
    throw Error(ErrorKind::InvalidArgument, "points per class range must satisfy 1 <= min <= max");
  }
  if (!(noise_sigma >= 0.0)) throw Error(ErrorKind::InvalidArgument, "noise_sigma must be >= 0");
}

Matrix SceneBatch::inputs() const {
  Matrix out(size(), coords.cols() + extra_feats.cols());
  out << coords, extra_feats;
  return out;
}

void SceneBatch::validate() const {
  const Eigen::Index n = size();
  if (coords.cols() != 3 || extra_feats.rows() != n || static_cast<Eigen::Index>(gt_labels.size()) != n) {
    throw Error(ErrorKind::DimensionMismatch, "scene arrays disagree on the number of points");
  }
  for (std::size_t i = 0; i < gt_labels.size(); ++i) {
    if (gt_labels[i] < 0 || gt_labels[i] >= num_classes) {
      throw Error(ErrorKind::InvalidArgument, "ground-truth label out of range", static_cast<std::int64_t>(i));
    }
  }
  sparse.validate(n);
  for (std::size_t j = 0; j < sparse.size(); ++j) {
    if (gt_labels[static_cast<std::size_t>(sparse.indices[j])] != sparse.classes[j]) {
      throw Error(ErrorKind::InvalidArgument, "sparse label disagrees with ground truth",
                  static_cast<std::int64_t>(j));
    }
  }
}

bool SceneBatch::operator==(const SceneBatch& other) const {
  return num_classes == other.num_classes && coords.rows() == other.coords.rows() &&
         extra_feats.cols() == other.extra_feats.cols() && coords == other.coords &&
         extra_feats == other.extra_feats && gt_labels == other.gt_labels &&
         sparse.indices == other.sparse.indices && sparse.classes == other.sparse.classes;
}

SceneBatch gen_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::vector<Eigen::Vector3d> points;
  std::vector<Eigen::Vector3d> normals;
  std::vector<int> labels;

  for (int c = 0; c < spec.num_classes; ++c) {
    Eigen::Vector3d center = class_anchor(c, spec.num_classes);
    for (int a = 0; a < 3; ++a) center[a] += rng.uniform(-kCenterJitter, kCenterJitter);
    const int count = spec.points_min +
                      static_cast<int>(rng.index(static_cast<std::size_t>(spec.points_max - spec.points_min + 1)));
    const bool blob = is_blob(spec.geometry, c);
    const Eigen::Vector3d normal = class_normal(c);
    const auto [e1, e2] = plane_basis(normal);

    for (int s = 0; s < count; ++s) {
      Eigen::Vector3d offset;
      Eigen::Vector3d direction;
      if (blob) {
        do {
          offset = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()) * kBlobSigma;
        } while (offset.norm() > kBlobRadius || offset.norm() <= kZeroNorm);
        direction = offset.normalized();
      } else {
        offset = rng.uniform(-kPatchHalfWidth, kPatchHalfWidth) * e1 +
                 rng.uniform(-kPatchHalfWidth, kPatchHalfWidth) * e2;
        direction = normal;
      }
      points.push_back(center + offset);
      normals.push_back(direction);
      labels.push_back(c);
    }
  }

  const std::size_t n = points.size();
  std::vector<std::size_t> order = rng.sample_without_replacement(n, n);
  SceneBatch scene;
  scene.num_classes = spec.num_classes;
  scene.coords.resize(static_cast<Eigen::Index>(n), 3);
  scene.extra_feats.resize(static_cast<Eigen::Index>(n), kExtraFeatureDim);
  scene.gt_labels.resize(n);
  for (std::size_t row = 0; row < n; ++row) {
    const std::size_t src = order[row];
    const auto r = static_cast<Eigen::Index>(row);
    for (int a = 0; a < 3; ++a) {
      scene.coords(r, a) = points[src][a] + (spec.noise_sigma > 0.0 ? spec.noise_sigma * rng.normal() : 0.0);
      scene.extra_feats(r, a) = normals[src][a] + (spec.noise_sigma > 0.0 ? spec.noise_sigma * rng.normal() : 0.0);
    }
    scene.extra_feats(r, 3) = scene.coords(r, 2);
    scene.gt_labels[row] = labels[src];
  }
  return scene;
}

SparseLabels sample_sparse_labels(const SceneBatch& scene, double rate, std::uint64_t seed) {
  const Eigen::Index n = scene.size();
  if (n == 0) throw Error(ErrorKind::EmptyScene, "cannot label an empty scene");
  if (!(rate > 0.0 && rate <= 1.0)) throw Error(ErrorKind::InvalidArgument, "label rate must lie in (0, 1]");
  const auto m = static_cast<std::size_t>(std::max<double>(1.0, std::round(rate * static_cast<double>(n))));
  Rng rng(seed);
  std::vector<std::size_t> picked = rng.sample_without_replacement(static_cast<std::size_t>(n), m);
  std::sort(picked.begin(), picked.end());
  SparseLabels out;
  for (const std::size_t i : picked) {
    out.indices.push_back(static_cast<int>(i));
    out.classes.push_back(scene.gt_labels[i]);
  }
  return out;
}

std::vector<SceneBatch> make_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  if (spec.num_scenes < 1) throw Error(ErrorKind::InvalidArgument, "dataset needs at least one scene");
  std::vector<SceneBatch> scenes;
  scenes.reserve(static_cast<std::size_t>(spec.num_scenes));
  for (int s = 0; s < spec.num_scenes; ++s) {
    SceneSpec scene_spec = spec.scene;
    scene_spec.seed = mix_seed(seed, 2 * static_cast<std::uint64_t>(s));
    SceneBatch scene = gen_scene(scene_spec);
    scene.sparse = sample_sparse_labels(scene, spec.label_rate, mix_seed(seed, 2 * static_cast<std::uint64_t>(s) + 1));
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : num_classes_(num_classes),
      counts_(static_cast<std::size_t>(num_classes) * static_cast<std::size_t>(num_classes), 0) {
  if (num_classes < 1) throw Error(ErrorKind::InvalidArgument, "confusion matrix needs >= 1 class");
}

void ConfusionMatrix::add(const std::vector<int>& pred, const std::vector<int>& gt) {
  if (pred.size() != gt.size()) {
    throw Error(ErrorKind::LengthMismatch, "prediction and ground truth lengths differ");
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || pred[i] >= num_classes_ || gt[i] < 0 || gt[i] >= num_classes_) {
      throw Error(ErrorKind::InvalidArgument, "class index out of range", static_cast<std::int64_t>(i));
    }
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ++counts_[static_cast<std::size_t>(gt[i] * num_classes_ + pred[i])];
  }
}

std::int64_t ConfusionMatrix::at(int gt, int pred) const {
  return counts_[static_cast<std::size_t>(gt * num_classes_ + pred)];
}

IoUReport ConfusionMatrix::report() const {
  IoUReport out;
  out.per_class_iou.assign(static_cast<std::size_t>(num_classes_), 0.0);
  out.counted.assign(static_cast<std::size_t>(num_classes_), false);
  double sum = 0.0;
  int counted = 0;
  for (int c = 0; c < num_classes_; ++c) {
    std::int64_t gt_total = 0;
    std::int64_t pred_total = 0;
    for (int o = 0; o < num_classes_; ++o) {
      gt_total += at(c, o);
      pred_total += at(o, c);
    }
    const std::int64_t tp = at(c, c);
    const std::int64_t uni = gt_total + pred_total - tp;
    if (uni == 0) continue;
    const double iou = static_cast<double>(tp) / static_cast<double>(uni);
    out.per_class_iou[static_cast<std::size_t>(c)] = iou;
    out.counted[static_cast<std::size_t>(c)] = true;
    sum += iou;
    ++counted;
  }
  out.miou = counted > 0 ? sum / counted : 0.0;
  return out;
}

IoUReport miou(const std::vector<int>& pred, const std::vector<int>& gt, int num_classes) {
  ConfusionMatrix cm(num_classes);
  cm.add(pred, gt);
  return cm.report();
}

std::string format_exact(double value) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, result.ptr);
}

std::string format_report(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", value);
  return buf;
}

void write_scene(std::ostream& out, const SceneBatch& scene) {
  scene.validate();
  const Eigen::Index n = scene.size();
  std::vector<int> annotation(static_cast<std::size_t>(n), -1);
  for (std::size_t j = 0; j < scene.sparse.size(); ++j) {
    annotation[static_cast<std::size_t>(scene.sparse.indices[j])] = scene.sparse.classes[j];
  }
  out << "dgn/1 " << n << ' ' << scene.extra_feats.cols() << ' ' << scene.num_classes << '\n';
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) out << format_exact(scene.coords(i, a)) << ' ';
    for (Eigen::Index j = 0; j < scene.extra_feats.cols(); ++j) {
      out << format_exact(scene.extra_feats(i, j)) << ' ';
    }
    out << annotation[static_cast<std::size_t>(i)] << '\n';
  }
  out << "gt";
  for (const int label : scene.gt_labels) out << ' ' << label;
  out << '\n';
}

void write_scene(const std::filesystem::path& path, const SceneBatch& scene) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  write_scene(out, scene);
  if (!out) throw Error(ErrorKind::IoError, "failed writing " + path.string());
}

SceneBatch read_scene(std::istream& in, const std::string& source_name) {
  std::string line;
  std::int64_t line_no = 0;
  std::int64_t offset = 0;
  auto next_line = [&]() -> bool {
    offset += line_no > 0 ? static_cast<std::int64_t>(line.size()) + 1 : 0;
    if (!std::getline(in, line)) return false;
    ++line_no;
    return true;
  };

  if (!next_line()) parse_fail(source_name, 1, 0, "empty file, expected a dgn/1 header");
  const auto header = split_ws(line);
  long long n = 0;
  int d_extra = 0;
  int num_classes = 0;
  if (header.size() != 4 || header[0] != "dgn/1" || !parse_token(header[1], n) ||
      !parse_token(header[2], d_extra) || !parse_token(header[3], num_classes) || n < 0 ||
      d_extra < 0 || num_classes < 1) {
    parse_fail(source_name, line_no, offset, "malformed header, expected `dgn/1 n d_extra num_classes`");
  }

  SceneBatch scene;
  scene.num_classes = num_classes;
  scene.coords.resize(n, 3);
  scene.extra_feats.resize(n, d_extra);
  std::vector<int> annotation(static_cast<std::size_t>(n));
  const std::size_t width = 3 + static_cast<std::size_t>(d_extra) + 1;
  for (long long i = 0; i < n; ++i) {
    if (!next_line()) {
      parse_fail(source_name, line_no + 1, offset + static_cast<std::int64_t>(line.size()),
                 "truncated: expected " + std::to_string(n) + " point lines, found " + std::to_string(i));
    }
    const auto tokens = split_ws(line);
    if (tokens.size() != width) {
      parse_fail(source_name, line_no, offset,
                 "expected " + std::to_string(width) + " columns, found " + std::to_string(tokens.size()));
    }
    for (std::size_t t = 0; t + 1 < width; ++t) {
      double value = 0.0;
      if (!parse_token(tokens[t], value) || !std::isfinite(value)) {
        parse_fail(source_name, line_no, offset, "bad number `" + std::string(tokens[t]) + "`");
      }
      if (t < 3) scene.coords(i, static_cast<Eigen::Index>(t)) = value;
      else scene.extra_feats(i, static_cast<Eigen::Index>(t - 3)) = value;
    }
    int label = 0;
    if (!parse_token(tokens.back(), label) || label < -1 || label >= num_classes) {
      parse_fail(source_name, line_no, offset, "bad label `" + std::string(tokens.back()) + "`");
    }
    annotation[static_cast<std::size_t>(i)] = label;
  }

  bool have_gt = false;
  while (next_line()) {
    const auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    if (have_gt || tokens[0] != "gt" || tokens.size() != static_cast<std::size_t>(n) + 1) {
      parse_fail(source_name, line_no, offset, "expected a single `gt` line with one label per point");
    }
    scene.gt_labels.resize(static_cast<std::size_t>(n));
    for (long long i = 0; i < n; ++i) {
      int label = 0;
      if (!parse_token(tokens[static_cast<std::size_t>(i) + 1], label) || label < 0 || label >= num_classes) {
        parse_fail(source_name, line_no, offset, "bad gt label at position " + std::to_string(i));
      }
      scene.gt_labels[static_cast<std::size_t>(i)] = label;
    }
    have_gt = true;
  }

  for (long long i = 0; i < n; ++i) {
    const int label = annotation[static_cast<std::size_t>(i)];
    if (label < 0) continue;
    scene.sparse.indices.push_back(static_cast<int>(i));
    scene.sparse.classes.push_back(label);
  }
  if (!have_gt) {
    if (scene.sparse.size() != static_cast<std::size_t>(n)) {
      parse_fail(source_name, line_no + 1, offset, "unlabelled points (-1) require a `gt` line");
    }
    scene.gt_labels = annotation;
  }
  try {
    scene.validate();
  } catch (const Error& e) {
    parse_fail(source_name, line_no, offset, e.message());
  }
  return scene;
}

SceneBatch read_scene(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  return read_scene(in, path.string());
}

}  // namespace dgn
