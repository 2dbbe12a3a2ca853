#include "dgn/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "dgn/error.hpp"
#include "dgn/rng.hpp"

namespace dgn {
namespace {

constexpr std::uint64_t kModelStream = 1;
constexpr std::uint64_t kDataStream = 2;
constexpr std::uint64_t kFallbackStream = 3;
constexpr std::uint64_t kShuffleStream = 4;

EMConfig em_config(const TrainConfig& cfg) {
  EMConfig em;
  em.max_iters = cfg.em_iters;
  em.tol = cfg.em_tol;
  em.kappa = cfg.kappa;
  em.threads = cfg.threads;
  return em;
}

/// Raw-feature class centers for the Euclidean models: the labelled mean
/// where a class has labels, otherwise the initial direction scaled to the
/// average feature norm.
Matrix euclidean_centers(const Matrix& features, const SparseLabels& labels, const InitCenters& init) {
  const Eigen::Index k = init.centers.rows();
  Matrix sums = Matrix::Zero(k, features.cols());
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (std::size_t j = 0; j < labels.size(); ++j) {
    sums.row(labels.classes[j]) += features.row(labels.indices[j]);
    ++counts[static_cast<std::size_t>(labels.classes[j])];
  }
  const double scale = features.rowwise().norm().mean();
  Matrix centers(k, features.cols());
  for (Eigen::Index c = 0; c < k; ++c) {
    const int count = counts[static_cast<std::size_t>(c)];
    centers.row(c) = count > 0 ? RowVector(sums.row(c) / count) : RowVector(scale * init.centers.row(c));
  }
  return centers;
}

Matrix unit_rows_or(const Matrix& values, const Matrix& fallback) {
  Matrix out(values.rows(), values.cols());
  for (Eigen::Index c = 0; c < values.rows(); ++c) {
    const double norm = values.row(c).norm();
    out.row(c) = norm > kZeroNorm ? RowVector(values.row(c) / norm) : RowVector(fallback.row(c));
  }
  return out;
}

LossToggles effective_toggles(const TrainConfig& cfg) {
  LossToggles t = cfg.loss_toggles;
  if (cfg.distribution == Distribution::ProtoEuclid || cfg.distribution == Distribution::ProtoCosine) {
    t.vmf = false;
    t.con = false;
  }
  return t;
}

void accumulate(LossReport& into, const LossReport& add) {
  into.tce += add.tce;
  into.vmf += add.vmf;
  into.dis += add.dis;
  into.con += add.con;
  into.total += add.total;
}

}  // namespace

MemoryBank prime_bank(const ModelParams& params, const MemoryBank& bank, const std::vector<SceneBatch>& scenes,
                      const TrainConfig& cfg) {
  MemoryBank out = bank;
  const MemoryBank blank = MemoryBank::empty(static_cast<int>(bank.num_classes()),
                                             static_cast<int>(bank.prototypes.cols()), bank.momentum);
  for (const auto& scene : scenes) {
    const EmbeddingMatrix unit = normalize_rows(forward(params, scene.inputs()).features);
    const InitCenters init = init_centers(unit, scene.sparse, blank, mix_seed(cfg.seed, kFallbackStream));
    std::vector<int> present;
    for (const int c : labelled_classes(scene.sparse)) {
      if (init.provenance[static_cast<std::size_t>(c)] == CenterSource::SceneLabeled) present.push_back(c);
    }
    out = update_bank(out, init.centers, present);
  }
  return out;
}

std::vector<SceneBatch> dataset_for(const TrainConfig& cfg) {
  cfg.validate();
  DatasetSpec spec;
  spec.scene = cfg.scene;
  spec.num_scenes = cfg.num_scenes;
  spec.label_rate = cfg.label_rate;
  return make_dataset(spec, mix_seed(cfg.seed, kDataStream));
}

ModelParams init_model(const TrainConfig& cfg, int input_dim) {
  return init_params(input_dim, cfg.hidden, cfg.feat_dim, cfg.scene.num_classes,
                     mix_seed(cfg.seed, kModelStream));
}

Alignment compute_alignment(const Matrix& features, const SparseLabels& labels, const MemoryBank& bank,
                            const TrainConfig& cfg) {
  Alignment out;
  out.active = true;
  const EmbeddingMatrix unit = normalize_rows(features);
  const InitCenters init = init_centers(unit, labels, bank, mix_seed(cfg.seed, kFallbackStream));
  out.degenerate = static_cast<int>(init.degenerate.size());
  const EMConfig em = em_config(cfg);

  switch (cfg.distribution) {
    case Distribution::MoVMF: {
      EMResult res = cfg.em_variant == EmVariant::Soft ? soft_movmf_em(unit, init.centers, em)
                                                        : hard_movmf_em(unit, init.centers, em);
      out.q = std::move(res.posterior);
      out.theta = std::move(res.params);
      out.directions = out.theta.means;
      out.em_iterations = res.iterations;
      out.degenerate += static_cast<int>(res.degenerate_clusters.size());
      break;
    }
    case Distribution::GMM: {
      GMMResult res = gmm_em(features, euclidean_centers(features, labels, init), em);
      out.q = std::move(res.posterior);
      out.gmm = std::move(res.params);
      out.directions = unit_rows_or(out.gmm.means, init.centers);
      out.em_iterations = res.iterations;
      out.degenerate += static_cast<int>(res.degenerate_clusters.size());
      break;
    }
    case Distribution::ProtoEuclid:
    case Distribution::ProtoCosine: {
      PrototypeSet protos;
      if (cfg.distribution == Distribution::ProtoEuclid) {
        protos.metric = PrototypeMetric::Euclidean;
        protos.prototypes = euclidean_centers(features, labels, init);
      } else {
        protos.metric = PrototypeMetric::Cosine;
        protos.prototypes = init.centers;
      }
      out.q.values = one_hot(prototype_assign(features, protos), init.centers.rows());
      out.directions = unit_rows_or(protos.prototypes, init.centers);
      break;
    }
  }
  return out;
}

LossEval evaluate_losses(const ModelParams& params, const Matrix& inputs, const SparseLabels& labels,
                         const Alignment& alignment, const TrainConfig& cfg) {
  const ForwardCache cache = forward(params, inputs);
  const Eigen::Index n = inputs.rows();
  LossReport parts;
  const LossToggles toggles = alignment.active ? effective_toggles(cfg) : LossToggles{true, false, false, false};

  Matrix grad_logits = Matrix::Zero(n, params.num_classes());
  Matrix grad_features = Matrix::Zero(n, params.feature_dim());

  if (toggles.tce) {
    const LossValue tce = tce_loss(cache.probs, labels, cfg.beta);
    parts.tce = tce.value;
    grad_logits += softmax_backward(cache.probs, tce.grad);
  }
  if (toggles.vmf) {
    const LossValue term = cfg.distribution == Distribution::GMM
                               ? gmm_nll_loss(cache.features, alignment.q, alignment.gmm)
                               : vmf_loss(cache.features, alignment.q, alignment.theta);
    const double scale = cfg.vmf_reduction == Reduction::Mean ? 1.0 / static_cast<double>(n) : 1.0;
    parts.vmf = scale * term.value;
    grad_features += scale * term.grad;
  }
  if (toggles.dis) {
    if (cfg.dis_grad_mode == DisGradMode::ThroughMeans) {
      const LossValue dis = dis_loss_through_means(cache.features, alignment.q);
      parts.dis = dis.value;
      grad_features += dis.grad;
    } else {
      MoVMFParams frozen;
      frozen.means = alignment.directions;
      parts.dis = dis_loss(frozen).value;
    }
  }
  if (toggles.con) {
    const LossValue con = con_loss(cache.probs, alignment.q);
    parts.con = con.value;
    grad_logits += con.grad;
  }

  LossEval out;
  out.report = total_loss(parts, toggles);
  out.grads = backward(params, cache, grad_features, grad_logits);
  return out;
}

StepResult train_step(const SceneBatch& scene, const ModelParams& params, const MemoryBank& bank,
                      const TrainConfig& cfg, int epoch) {
  if (epoch < 0) throw Error(ErrorKind::InvalidArgument, "epoch must be >= 0");
  const Matrix inputs = scene.inputs();
  StepResult out;
  out.bank = bank;
  Alignment alignment;
  if (epoch >= cfg.warmup_epochs) {
    const ForwardCache cache = forward(params, inputs);
    alignment = compute_alignment(cache.features, scene.sparse, bank, cfg);
    out.em_iterations = alignment.em_iterations;
    out.degenerate = alignment.degenerate;
  }
  LossEval eval = evaluate_losses(params, inputs, scene.sparse, alignment, cfg);
  out.params = sgd_step(params, eval.grads, cfg.lr);
  out.report = eval.report;
  if (alignment.active) {
    out.bank = update_bank(bank, alignment.directions, labelled_classes(scene.sparse));
  }
  return out;
}

std::string format_epoch(const EpochReport& r) {
  std::ostringstream out;
  out << "epoch=" << r.epoch << " tce=" << format_report(r.losses.tce) << " vmf=" << format_report(r.losses.vmf)
      << " dis=" << format_report(r.losses.dis) << " con=" << format_report(r.losses.con)
      << " total=" << format_report(r.losses.total) << " train_miou=" << format_report(r.train_miou)
      << " val_miou=" << format_report(r.val_miou) << " em_iters=" << r.em_converged_iters
      << " degenerate=" << r.degenerate_clusters;
  return out.str();
}

std::vector<int> predict(const ModelParams& params, const Matrix& inputs) {
  return argmax_rows(forward(params, inputs).logits).labels;
}

IoUReport evaluate(const ModelParams& params, const std::vector<SceneBatch>& scenes) {
  ConfusionMatrix cm(static_cast<int>(params.num_classes()));
  for (const auto& scene : scenes) cm.add(predict(params, scene.inputs()), scene.gt_labels);
  return cm.report();
}

FitResult fit(const std::vector<SceneBatch>& dataset, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (dataset.empty()) throw Error(ErrorKind::InvalidArgument, "fit needs a non-empty dataset");
  for (const auto& scene : dataset) {
    scene.validate();
    if (scene.num_classes != cfg.scene.num_classes) {
      throw Error(ErrorKind::DimensionMismatch, "scene class count differs from num_classes");
    }
  }
  const std::size_t n_val = dataset.size() >= 2 ? std::max<std::size_t>(1, dataset.size() / 5) : 0;
  const std::vector<SceneBatch> train(dataset.begin(), dataset.end() - static_cast<std::ptrdiff_t>(n_val));
  const std::vector<SceneBatch> val(dataset.end() - static_cast<std::ptrdiff_t>(n_val), dataset.end());

  FitResult out;
  out.params = init_model(cfg, static_cast<int>(dataset.front().inputs().cols()));
  out.bank = MemoryBank::empty(cfg.scene.num_classes, cfg.feat_dim, cfg.momentum);
  Rng shuffle(mix_seed(cfg.seed, kShuffleStream));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (epoch == cfg.warmup_epochs) out.bank = prime_bank(out.params, out.bank, train, cfg);
    EpochReport report;
    report.epoch = epoch;
    for (const std::size_t idx : shuffle.sample_without_replacement(train.size(), train.size())) {
      StepResult step = train_step(train[idx], out.params, out.bank, cfg, epoch);
      out.params = std::move(step.params);
      out.bank = std::move(step.bank);
      accumulate(report.losses, step.report);
      report.em_converged_iters += step.em_iterations;
      report.degenerate_clusters += step.degenerate;
    }
    const double scale = 1.0 / static_cast<double>(train.size());
    report.losses.tce *= scale;
    report.losses.vmf *= scale;
    report.losses.dis *= scale;
    report.losses.con *= scale;
    report.losses.total *= scale;
    report.train_miou = evaluate(out.params, train).miou;
    report.val_miou = val.empty() ? 0.0 : evaluate(out.params, val).miou;
    if (on_epoch) on_epoch(report);
    out.reports.push_back(report);
  }
  return out;
}

Posterior explain(const SceneBatch& scene, const ModelParams& params, const TrainConfig& cfg,
                  const MemoryBank& bank) {
  const ForwardCache cache = forward(params, scene.inputs());
  const EmbeddingMatrix unit = normalize_rows(cache.features);
  const InitCenters init = init_centers(unit, scene.sparse, bank, mix_seed(cfg.seed, kFallbackStream));
  const EMConfig em = em_config(cfg);
  EMResult res = cfg.em_variant == EmVariant::Soft ? soft_movmf_em(unit, init.centers, em)
                                                    : hard_movmf_em(unit, init.centers, em);
  return std::move(res.posterior);
}

std::pair<double, double> mean_stderr(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (const double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (const double v : values) ss += (v - mean) * (v - mean);
  const double var = ss / static_cast<double>(values.size() - 1);
  return {mean, std::sqrt(var / static_cast<double>(values.size()))};
}

std::vector<AblationRow> ablate(const DatasetSource& source, const TrainConfig& base,
                                const std::vector<GridAxis>& grid, const std::vector<std::uint64_t>& seeds) {
  if (grid.empty()) throw Error(ErrorKind::InvalidArgument, "ablation grid is empty");
  if (seeds.empty()) throw Error(ErrorKind::InvalidArgument, "ablation needs at least one seed");
  for (const auto& axis : grid) {
    if (axis.values.empty()) throw Error(ErrorKind::InvalidArgument, "grid axis `" + axis.key + "` has no values");
  }

  std::vector<AblationRow> rows;
  std::vector<std::size_t> cursor(grid.size(), 0);
  while (true) {
    AblationRow row;
    TrainConfig cell = base;
    for (std::size_t a = 0; a < grid.size(); ++a) {
      const std::string& value = grid[a].values[cursor[a]];
      apply_setting(cell, grid[a].key, value);
      row.overrides.emplace_back(grid[a].key, value);
    }
    for (const std::uint64_t seed : seeds) {
      TrainConfig run = cell;
      run.seed = seed;
      const FitResult result = fit(source(run), run);
      row.val_miou.push_back(result.reports.empty() ? 0.0 : result.reports.back().val_miou);
    }
    std::tie(row.mean, row.stderr_) = mean_stderr(row.val_miou);
    rows.push_back(std::move(row));

    std::size_t a = grid.size();
    while (a > 0) {
      --a;
      if (++cursor[a] < grid[a].values.size()) break;
      cursor[a] = 0;
      if (a == 0) return rows;
    }
  }
}

std::string format_ablation(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  for (const auto& row : rows) {
    for (const auto& [key, value] : row.overrides) out << key << '=' << value << ' ';
    out << "mean_val_miou=" << format_report(row.mean) << " stderr=" << format_report(row.stderr_)
        << " seeds=" << row.val_miou.size() << '\n';
  }
  return out.str();
}

}  // namespace dgn
