#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "dgn/bank.hpp"
#include "dgn/baselines.hpp"
#include "dgn/data.hpp"
#include "dgn/losses.hpp"
#include "dgn/movmf.hpp"
#include "dgn/network.hpp"

namespace dgn {

enum class EmVariant { Soft, Hard };
enum class DisGradMode { ThroughMeans, FrozenMeans };

/// How the trainer reduces the per-point vMF (or GMM) terms. Sum is the
/// literal objective; Mean divides it by the scene's point count.
enum class Reduction { Sum, Mean };

/// Feature-space description used by the alignment branch. GMM swaps the
/// vMF term for the Gaussian negative log-likelihood; the prototype models
/// keep only tCE and DIS, with Q the one-hot nearest-prototype assignment.
enum class Distribution { MoVMF, GMM, ProtoEuclid, ProtoCosine };

struct TrainConfig {
  double kappa = 10.0;
  int em_iters = 10;
  double beta = 0.8;
  int warmup_epochs = 5;
  int epochs = 30;
  double lr = 0.03;
  double label_rate = 1e-3;
  LossToggles loss_toggles;
  std::uint64_t seed = 0;
  EmVariant em_variant = EmVariant::Soft;
  DisGradMode dis_grad_mode = DisGradMode::ThroughMeans;

  Distribution distribution = Distribution::MoVMF;
  Reduction vmf_reduction = Reduction::Mean;
  std::vector<int> hidden{32, 32};
  int feat_dim = 16;
  double momentum = 0.9;
  double em_tol = 1e-6;
  int threads = 1;

  // Synthetic dataset used by the CLI and the ablation runner.
  int num_scenes = 20;
  SceneSpec scene;

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

/// Sets one field from its config-file spelling. Throws ConfigError for an
/// unknown key or an unparsable value.
void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value);

/// `key = value` lines; `#` starts a comment. Errors carry source:line.
TrainConfig parse_config(std::istream& in, const std::string& source_name = "<config>");
TrainConfig load_config(const std::string& path);

/// Every key in canonical order, one `key = value` per line; parses back to
/// an identical config.
std::string format_config(const TrainConfig& cfg);

/// The dataset a config describes: cfg.num_scenes scenes of cfg.scene at
/// cfg.label_rate, seeded from cfg.seed.
std::vector<SceneBatch> dataset_for(const TrainConfig& cfg);

ModelParams init_model(const TrainConfig& cfg, int input_dim);

/// Output of the E step for one scene. Everything here is held constant
/// while the network is updated.
struct Alignment {
  bool active = false;
  Posterior q;
  MoVMFParams theta;
  GMMParams gmm;
  /// Unit directions per class, fed to the bank and to frozen-mean DIS.
  Matrix directions;
  int em_iterations = 0;
  int degenerate = 0;
};

/// Runs the configured clustering on the features of one scene.
Alignment compute_alignment(const Matrix& features, const SparseLabels& labels,
                            const MemoryBank& bank, const TrainConfig& cfg);

struct LossEval {
  LossReport report;
  ModelParams grads;
};

/// Loss terms enabled by cfg for the given alignment and their gradient wrt
/// every network parameter. An inactive alignment yields tCE only.
LossEval evaluate_losses(const ModelParams& params, const Matrix& inputs, const SparseLabels& labels,
                         const Alignment& alignment, const TrainConfig& cfg);

struct StepResult {
  ModelParams params;
  MemoryBank bank;
  LossReport report;
  int em_iterations = 0;
  int degenerate = 0;
};

/// One forward pass, E step (after warmup), backward pass and SGD update.
StepResult train_step(const SceneBatch& scene, const ModelParams& params, const MemoryBank& bank,
                      const TrainConfig& cfg, int epoch);

/// Folds the labelled mean direction of every class labelled in each scene
/// into the bank, leaving the network untouched. fit runs this once when
/// warmup ends so the first aligned epoch starts from class prototypes
/// rather than random directions.
MemoryBank prime_bank(const ModelParams& params, const MemoryBank& bank, const std::vector<SceneBatch>& scenes,
                      const TrainConfig& cfg);

struct EpochReport {
  int epoch = 0;
  /// Mean over the epoch's training scenes.
  LossReport losses;
  double train_miou = 0.0;
  double val_miou = 0.0;
  /// EM iterations and degenerate clusters summed over the epoch's scenes.
  int em_converged_iters = 0;
  int degenerate_clusters = 0;
};

/// One line of space-separated key=value fields, floats as %.6g.
std::string format_epoch(const EpochReport& report);

struct FitResult {
  ModelParams params;
  MemoryBank bank;
  std::vector<EpochReport> reports;
};

using EpochCallback = std::function<void(const EpochReport&)>;

/// Trains on the first 80% of the scenes and validates on the rest (no
/// validation split below two scenes, val_miou then reads 0). mIoU uses
/// head argmax only.
FitResult fit(const std::vector<SceneBatch>& dataset, const TrainConfig& cfg,
              const EpochCallback& on_epoch = {});

/// Head argmax per point. Never runs EM.
std::vector<int> predict(const ModelParams& params, const Matrix& inputs);

/// mIoU of head predictions against dense ground truth over the scenes.
IoUReport evaluate(const ModelParams& params, const std::vector<SceneBatch>& scenes);

/// One EM pass on the frozen embeddings of a scene, initialised from its
/// labels and the bank.
Posterior explain(const SceneBatch& scene, const ModelParams& params, const TrainConfig& cfg,
                  const MemoryBank& bank);

struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

struct AblationRow {
  std::vector<std::pair<std::string, std::string>> overrides;
  std::vector<double> val_miou;  // one per seed
  double mean = 0.0;
  double stderr_ = 0.0;
};

using DatasetSource = std::function<std::vector<SceneBatch>(const TrainConfig&)>;

/// fit for every cell of the cartesian product of the axes and every seed;
/// each cell reports the final-epoch val mIoU mean and standard error.
std::vector<AblationRow> ablate(const DatasetSource& source, const TrainConfig& base,
                                const std::vector<GridAxis>& grid,
                                const std::vector<std::uint64_t>& seeds);

std::string format_ablation(const std::vector<AblationRow>& rows);

/// Sample mean and standard error (0 for fewer than two values).
std::pair<double, double> mean_stderr(const std::vector<double>& values);

std::string to_string(EmVariant v);
std::string to_string(DisGradMode m);
std::string to_string(Distribution d);
std::string to_string(Reduction r);
std::string to_string(Geometry g);

}  // namespace dgn
