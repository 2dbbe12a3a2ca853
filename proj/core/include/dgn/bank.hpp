#pragma once

#include <cstdint>
#include <vector>

#include "dgn/linalg.hpp"
#include "dgn/losses.hpp"
#include "dgn/movmf.hpp"

namespace dgn {

/// Dataset-wide class prototypes used to seed EM for classes that have no
/// labelled point in the current scene.
struct MemoryBank {
  Matrix prototypes;
  std::vector<bool> seen;
  double momentum = 0.9;

  /// All-unseen bank with zero prototypes. Throws InvalidArgument unless
  /// 0 <= momentum < 1.
  static MemoryBank empty(int num_classes, int dim, double momentum = 0.9);

  Eigen::Index num_classes() const noexcept { return prototypes.rows(); }
  void validate() const;
};

enum class CenterSource { SceneLabeled, Bank, UnseenFallback };

struct InitCenters {
  Matrix centers;
  std::vector<CenterSource> provenance;
  /// Classes whose labelled directions cancelled out (norm <= 1e-12).
  std::vector<int> degenerate;
};

/// Initial EM directions h_c: the normalised sum of labelled embeddings of
/// class c when the scene has any, otherwise the bank prototype, otherwise a
/// unit vector drawn from mix_seed(seed, c).
InitCenters init_centers(const EmbeddingMatrix& embeddings, const SparseLabels& labels,
                         const MemoryBank& bank, std::uint64_t seed);

/// EMA update rho_c <- norm(m rho_c + (1 - m) u_c) for each present class.
/// Classes not listed are left untouched.
MemoryBank update_bank(const MemoryBank& bank, const Matrix& means,
                       const std::vector<int>& present_classes);

/// Sorted distinct classes appearing in the labels.
std::vector<int> labelled_classes(const SparseLabels& labels);

}  // namespace dgn
