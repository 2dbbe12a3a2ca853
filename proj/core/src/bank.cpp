#include "dgn/bank.hpp"

#include <algorithm>
#include <cmath>

#include "dgn/error.hpp"
#include "dgn/rng.hpp"

namespace dgn {
namespace {

void check_momentum(double momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "bank momentum must satisfy 0 <= momentum < 1");
  }
}

RowVector fallback_direction(Eigen::Index dim, std::uint64_t seed, Eigen::Index cls) {
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(cls)));
  RowVector v(dim);
  double norm = 0.0;
  do {
    for (Eigen::Index j = 0; j < dim; ++j) v[j] = rng.normal();
    norm = v.norm();
  } while (norm <= kZeroNorm);
  return v / norm;
}

}  // namespace

MemoryBank MemoryBank::empty(int num_classes, int dim, double momentum) {
  check_momentum(momentum);
  if (num_classes < 1 || dim < 2) {
    throw Error(ErrorKind::InvalidArgument, "bank needs >= 1 class and dimension >= 2");
  }
  MemoryBank bank;
  bank.prototypes = Matrix::Zero(num_classes, dim);
  bank.seen.assign(static_cast<std::size_t>(num_classes), false);
  bank.momentum = momentum;
  return bank;
}

void MemoryBank::validate() const {
  check_momentum(momentum);
  if (static_cast<Eigen::Index>(seen.size()) != prototypes.rows()) {
    throw Error(ErrorKind::InvalidParams, "bank seen flags differ from prototype count");
  }
  for (Eigen::Index c = 0; c < prototypes.rows(); ++c) {
    if (seen[static_cast<std::size_t>(c)] && std::abs(prototypes.row(c).norm() - 1.0) > 1e-9) {
      throw Error(ErrorKind::InvalidParams, "seen prototype is not unit norm", c);
    }
  }
}

std::vector<int> labelled_classes(const SparseLabels& labels) {
  std::vector<int> classes = labels.classes;
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  return classes;
}

InitCenters init_centers(const EmbeddingMatrix& embeddings, const SparseLabels& labels,
                         const MemoryBank& bank, std::uint64_t seed) {
  const Eigen::Index k = bank.num_classes();
  const Eigen::Index d = embeddings.dim();
  if (bank.prototypes.cols() != d) {
    throw Error(ErrorKind::DimensionMismatch, "bank dimension differs from embedding dimension");
  }
  labels.validate(embeddings.rows());

  Matrix sums = Matrix::Zero(k, d);
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const int c = labels.classes[j];
    if (c < 0 || c >= k) {
      throw Error(ErrorKind::InvalidArgument, "label class outside bank range", static_cast<std::int64_t>(j));
    }
    sums.row(c) += embeddings.values().row(labels.indices[j]);
    ++counts[static_cast<std::size_t>(c)];
  }

  InitCenters out;
  out.centers.resize(k, d);
  out.provenance.resize(static_cast<std::size_t>(k));
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto slot = static_cast<std::size_t>(c);
    if (counts[slot] > 0) {
      const double norm = sums.row(c).norm();
      if (norm > kZeroNorm) {
        out.centers.row(c) = sums.row(c) / norm;
        out.provenance[slot] = CenterSource::SceneLabeled;
        continue;
      }
      out.degenerate.push_back(static_cast<int>(c));
    }
    if (bank.seen[slot]) {
      out.centers.row(c) = bank.prototypes.row(c);
      out.provenance[slot] = CenterSource::Bank;
    } else {
      out.centers.row(c) = fallback_direction(d, seed, c);
      out.provenance[slot] = CenterSource::UnseenFallback;
    }
  }
  return out;
}

MemoryBank update_bank(const MemoryBank& bank, const Matrix& means,
                       const std::vector<int>& present_classes) {
  check_momentum(bank.momentum);
  if (means.rows() != bank.num_classes() || means.cols() != bank.prototypes.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "means differ in shape from the bank");
  }
  MemoryBank out = bank;
  for (const int c : present_classes) {
    if (c < 0 || c >= bank.num_classes()) {
      throw Error(ErrorKind::InvalidArgument, "present class outside bank range", c);
    }
    const auto slot = static_cast<std::size_t>(c);
    const RowVector prior = bank.seen[slot] ? RowVector(bank.prototypes.row(c))
                                            : RowVector::Zero(bank.prototypes.cols());
    const RowVector blended = bank.momentum * prior + (1.0 - bank.momentum) * means.row(c);
    const double norm = blended.norm();
    out.prototypes.row(c) = norm > kZeroNorm ? RowVector(blended / norm) : RowVector(means.row(c));
    out.seen[slot] = true;
  }
  return out;
}

}  // namespace dgn
