#include "commands.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "dgn/bank.hpp"
#include "dgn/baselines.hpp"
#include "dgn/checkpoint.hpp"
#include "dgn/data.hpp"
#include "dgn/movmf.hpp"
#include "dgn/rng.hpp"
#include "dgn/trainer.hpp"

namespace dgn::cli {
namespace {

[[noreturn]] void parse_fail(const std::filesystem::path& path, std::int64_t line, const std::string& reason) {
  throw Error(ErrorKind::ParseError, path.string() + ":" + std::to_string(line) + ": " + reason, line);
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  return in;
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  out << contents;
  if (!out) throw Error(ErrorKind::IoError, "failed writing " + path.string());
}

template <typename T>
bool parse_token(const std::string& token, T& value) {
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  return ec == std::errc() && ptr == token.data() + token.size();
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) out.push_back(item);
  return out;
}

std::string format_posterior(const Matrix& q) {
  std::string out;
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    for (Eigen::Index c = 0; c < q.cols(); ++c) {
      if (c > 0) out += ' ';
      out += format_report(q(i, c));
    }
    out += '\n';
  }
  return out;
}

std::string format_labels(const std::vector<int>& labels) {
  std::string out;
  for (const int v : labels) out += std::to_string(v) + '\n';
  return out;
}

/// Applies --config then --seed / --threads / --set overrides.
TrainConfig resolve_config(const std::string& config_path, const std::optional<std::uint64_t>& seed,
                           const std::optional<int>& threads, const std::vector<std::string>& sets) {
  TrainConfig cfg = config_path.empty() ? TrainConfig{} : load_config(config_path);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::ConfigError, "--set expects key=value, got `" + kv + "`");
    apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (seed) cfg.seed = *seed;
  if (threads) cfg.threads = *threads;
  cfg.validate();
  return cfg;
}

struct ClusterArgs {
  std::string input;
  std::string variant = "soft";
  int classes = 2;
  double kappa = 10.0;
  int iters = 10;
  std::uint64_t seed = 0;
  std::string labels;
  std::string out_prefix;
  int threads = 1;
};

Matrix initial_centers(const Matrix& x, const std::optional<SparseLabels>& labels, int k, std::uint64_t seed) {
  Matrix centers(k, x.cols());
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  centers.setZero();
  if (labels) {
    for (std::size_t j = 0; j < labels->size(); ++j) {
      centers.row(labels->classes[j]) += x.row(labels->indices[j]);
      ++counts[static_cast<std::size_t>(labels->classes[j])];
    }
  }
  std::vector<int> missing;
  for (int c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0) centers.row(c) /= counts[static_cast<std::size_t>(c)];
    else missing.push_back(c);
  }
  if (!missing.empty()) {
    if (static_cast<std::size_t>(x.rows()) < missing.size()) {
      throw Error(ErrorKind::DimensionMismatch, "fewer rows than clusters to initialise");
    }
    Rng rng(seed);
    const auto rows = rng.sample_without_replacement(static_cast<std::size_t>(x.rows()), missing.size());
    for (std::size_t j = 0; j < missing.size(); ++j) {
      centers.row(missing[j]) = x.row(static_cast<Eigen::Index>(rows[j]));
    }
  }
  return centers;
}

int cmd_cluster(const ClusterArgs& a, std::ostream& out) {
  const Matrix x = read_matrix(a.input);
  std::optional<SparseLabels> labels;
  if (!a.labels.empty()) labels = read_labels(a.labels, x.rows(), a.classes);
  const Matrix init = initial_centers(x, labels, a.classes, a.seed);

  EMConfig em;
  em.max_iters = a.iters;
  em.kappa = a.kappa;
  em.threads = a.threads;

  Matrix posterior;
  std::vector<int> assignment;
  int iterations = 0;
  bool converged = false;
  if (a.variant == "soft" || a.variant == "hard") {
    const EmbeddingMatrix v = normalize_rows(x);
    const EmbeddingMatrix h = normalize_rows(init);
    EMResult res = a.variant == "soft" ? soft_movmf_em(v, h.values(), em) : hard_movmf_em(v, h.values(), em);
    posterior = std::move(res.posterior.values);
    assignment = std::move(res.assignment.labels);
    iterations = res.iterations;
    converged = res.converged;
  } else if (a.variant == "gmm") {
    GMMResult res = gmm_em(x, init, em);
    posterior = std::move(res.posterior.values);
    assignment = std::move(res.assignment.labels);
    iterations = res.iterations;
    converged = res.converged;
  } else {
    PrototypeSet protos;
    if (a.variant == "proto-euclid") {
      protos.metric = PrototypeMetric::Euclidean;
      protos.prototypes = init;
    } else {
      protos.metric = PrototypeMetric::Cosine;
      protos.prototypes = normalize_rows(init).values();
    }
    Assignment z = prototype_assign(x, protos);
    posterior = one_hot(z, a.classes);
    assignment = std::move(z.labels);
    converged = true;
  }

  const std::string prefix = a.out_prefix.empty() ? a.input : a.out_prefix;
  write_file(prefix + ".assign", format_labels(assignment));
  write_file(prefix + ".posterior", format_posterior(posterior));
  out << "variant=" << a.variant << " n=" << x.rows() << " k=" << a.classes << " iterations=" << iterations
      << " converged=" << (converged ? 1 : 0) << '\n';
  return kExitOk;
}

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::vector<std::string> sets;

  TrainConfig resolve() const { return resolve_config(config, seed, threads, sets); }
};

void add_common(CLI::App* cmd, CommonArgs& c) {
  cmd->add_option("--config", c.config, "key = value training config file");
  cmd->add_option("--seed", c.seed, "overrides the config seed");
  cmd->add_option("--threads", c.threads, "EM worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
  cmd->add_option("--set", c.sets, "extra key=value override, repeatable");
}

int cmd_train(const CommonArgs& common, const std::string& report_path, const std::string& checkpoint_path,
              std::ostream& out) {
  const TrainConfig cfg = common.resolve();
  std::string report;
  const FitResult result = fit(dataset_for(cfg), cfg, [&](const EpochReport& r) {
    const std::string line = format_epoch(r) + '\n';
    report += line;
    out << line;
  });
  if (!report_path.empty()) write_file(report_path, report);
  if (!checkpoint_path.empty()) save_checkpoint(std::filesystem::path(checkpoint_path), Checkpoint{result.params, result.bank});
  return kExitOk;
}

int cmd_ablate(const CommonArgs& common, const std::vector<std::string>& grid_specs, const std::string& seeds_spec,
               const std::string& out_path, std::ostream& out) {
  const TrainConfig cfg = common.resolve();
  std::vector<GridAxis> grid;
  for (const auto& spec : grid_specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(ErrorKind::ConfigError, "--grid expects key=v1,v2,..., got `" + spec + "`");
    GridAxis axis;
    axis.key = spec.substr(0, eq);
    const std::string values = spec.substr(eq + 1);
    axis.values = split(values, values.find('|') != std::string::npos ? '|' : ',');
    TrainConfig probe = cfg;
    for (const auto& v : axis.values) apply_setting(probe, axis.key, v);
    grid.push_back(std::move(axis));
  }
  if (grid.empty()) throw Error(ErrorKind::ConfigError, "ablate needs at least one --grid axis");
  std::vector<std::uint64_t> seeds;
  for (const auto& token : split(seeds_spec, ',')) {
    std::uint64_t s = 0;
    if (!parse_token(token, s)) throw Error(ErrorKind::ConfigError, "--seeds: cannot parse `" + token + "`");
    seeds.push_back(s);
  }
  const std::string table = format_ablation(ablate(dataset_for, cfg, grid, seeds));
  if (!out_path.empty()) write_file(out_path, table);
  out << table;
  return kExitOk;
}

int cmd_explain(const CommonArgs& common, const std::string& checkpoint_path, const std::string& scene_path,
                const std::string& out_path, std::ostream& out) {
  const TrainConfig cfg = common.resolve();
  const Checkpoint ckpt = load_checkpoint(std::filesystem::path(checkpoint_path));
  const SceneBatch scene = read_scene(std::filesystem::path(scene_path));
  const MemoryBank bank = ckpt.bank ? *ckpt.bank
                                    : MemoryBank::empty(static_cast<int>(ckpt.params.num_classes()),
                                                        static_cast<int>(ckpt.params.feature_dim()), cfg.momentum);
  const Posterior q = explain(scene, ckpt.params, cfg, bank);
  const std::string text = format_posterior(q.values);
  if (!out_path.empty()) write_file(out_path, text);
  else out << text;
  return kExitOk;
}

int cmd_gen_data(const CommonArgs& common, const std::string& out_dir, std::ostream& out) {
  const TrainConfig cfg = common.resolve();
  std::filesystem::create_directories(out_dir);
  const auto scenes = dataset_for(cfg);
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%03zu.dgn", s);
    write_scene(std::filesystem::path(out_dir) / name, scenes[s]);
  }
  out << "scenes=" << scenes.size() << " dir=" << out_dir << '\n';
  return kExitOk;
}

int cmd_eval(const std::string& scene_path, const std::string& pred_path, const std::string& checkpoint_path,
             const std::string& out_path, std::ostream& out) {
  const SceneBatch scene = read_scene(std::filesystem::path(scene_path));
  std::vector<int> pred;
  if (!pred_path.empty()) {
    pred = read_label_column(pred_path);
  } else {
    pred = predict(load_checkpoint(std::filesystem::path(checkpoint_path)).params, scene.inputs());
  }
  const IoUReport report = miou(pred, scene.gt_labels, scene.num_classes);
  std::ostringstream text;
  text << "miou=" << format_report(report.miou) << '\n';
  for (std::size_t c = 0; c < report.per_class_iou.size(); ++c) {
    text << "class=" << c << " iou=" << format_report(report.per_class_iou[c])
         << " counted=" << (report.counted[c] ? 1 : 0) << '\n';
  }
  if (!out_path.empty()) write_file(out_path, text.str());
  out << text.str();
  return kExitOk;
}

}  // namespace

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ParseError:
    case ErrorKind::ConfigError:
    case ErrorKind::InvalidBeta:
      return kExitConfig;
    case ErrorKind::ZeroVectorRow:
    case ErrorKind::NonUnitInput:
    case ErrorKind::DimensionMismatch:
    case ErrorKind::EmptyLabelSet:
    case ErrorKind::SingleCluster:
    case ErrorKind::ShapeMismatch:
    case ErrorKind::LengthMismatch:
    case ErrorKind::EmptyScene:
    case ErrorKind::InvalidArgument:
    case ErrorKind::IoError:
      return kExitData;
    case ErrorKind::DegenerateRow:
    case ErrorKind::InvalidParams:
    case ErrorKind::StaleCache:
      return kExitInternal;
  }
  return kExitInternal;
}

Matrix read_matrix(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::vector<double> values;
  Eigen::Index cols = -1;
  Eigen::Index rows = 0;
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream tokens(line);
    std::string token;
    Eigen::Index count = 0;
    while (tokens >> token) {
      double v = 0.0;
      if (!parse_token(token, v) || !std::isfinite(v)) parse_fail(path, line_no, "bad number `" + token + "`");
      values.push_back(v);
      ++count;
    }
    if (count == 0) continue;
    if (cols >= 0 && count != cols) {
      parse_fail(path, line_no, "expected " + std::to_string(cols) + " columns, found " + std::to_string(count));
    }
    cols = count;
    ++rows;
  }
  if (rows == 0) parse_fail(path, line_no, "no data rows");
  Matrix x(rows, cols);
  std::copy(values.begin(), values.end(), x.data());
  return x;
}

SparseLabels read_labels(const std::filesystem::path& path, Eigen::Index num_points, int num_classes) {
  std::ifstream in = open_in(path);
  SparseLabels labels;
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream tokens(line);
    std::string a;
    std::string b;
    std::string extra;
    if (!(tokens >> a)) continue;
    int index = 0;
    int cls = 0;
    if (!(tokens >> b) || (tokens >> extra) || !parse_token(a, index) || !parse_token(b, cls)) {
      parse_fail(path, line_no, "expected `index class`");
    }
    if (index < 0 || index >= num_points || cls < 0 || cls >= num_classes) {
      throw Error(ErrorKind::InvalidArgument,
                  path.string() + ":" + std::to_string(line_no) + ": index or class out of range", line_no);
    }
    labels.indices.push_back(index);
    labels.classes.push_back(cls);
  }
  labels.validate(num_points);
  return labels;
}

std::vector<int> read_label_column(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::vector<int> labels;
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream tokens(line);
    std::string token;
    std::string extra;
    if (!(tokens >> token)) continue;
    int v = 0;
    if ((tokens >> extra) || !parse_token(token, v)) parse_fail(path, line_no, "expected one integer label");
    labels.push_back(v);
  }
  return labels;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"dgn: spherical mixture alignment for sparsely labelled point clouds"};
  app.require_subcommand(1, 1);

  ClusterArgs cluster;
  auto* c = app.add_subcommand("cluster", "cluster the rows of a matrix file");
  c->add_option("input", cluster.input, "matrix file, one row per line")->required();
  c->add_option("--variant", cluster.variant)
      ->check(CLI::IsMember({"soft", "hard", "gmm", "proto-euclid", "proto-cosine"}));
  c->add_option("--classes,-k", cluster.classes)->check(CLI::PositiveNumber);
  c->add_option("--kappa", cluster.kappa)->check(CLI::NonNegativeNumber);
  c->add_option("--iters", cluster.iters)->check(CLI::NonNegativeNumber);
  c->add_option("--seed", cluster.seed);
  c->add_option("--labels", cluster.labels, "`index class` lines used to seed the centers");
  c->add_option("--out-prefix", cluster.out_prefix, "defaults to the input path");
  c->add_option("--threads", cluster.threads)->check(CLI::PositiveNumber);

  CommonArgs common;
  std::string report_path;
  std::string checkpoint_path;
  auto* t = app.add_subcommand("train", "fit on the synthetic dataset described by the config");
  add_common(t, common);
  t->add_option("--report", report_path, "epoch report file");
  t->add_option("--checkpoint", checkpoint_path, "model and bank output");

  std::vector<std::string> grid;
  std::string seeds = "0,1,2,3,4";
  std::string out_path;
  auto* ab = app.add_subcommand("ablate", "fit every grid cell over several seeds");
  add_common(ab, common);
  ab->add_option("--grid", grid, "key=v1,v2,... (use | to separate values containing commas)")->required();
  ab->add_option("--seeds", seeds, "comma-separated seeds");
  ab->add_option("--out", out_path, "table file");

  std::string scene_path;
  auto* ex = app.add_subcommand("explain", "posteriors of one EM pass on a trained model's embeddings");
  add_common(ex, common);
  ex->add_option("--checkpoint", checkpoint_path)->required();
  ex->add_option("--scene", scene_path)->required();
  ex->add_option("--out", out_path);

  std::string out_dir;
  auto* gd = app.add_subcommand("gen-data", "write the config's synthetic scenes in dgn/1 format");
  add_common(gd, common);
  gd->add_option("--out-dir", out_dir)->required();

  std::string pred_path;
  auto* ev = app.add_subcommand("eval", "mIoU of predictions against a scene's ground truth");
  ev->add_option("--scene", scene_path)->required();
  auto* pred_opt = ev->add_option("--pred", pred_path, "one class per line");
  auto* ckpt_opt = ev->add_option("--checkpoint", checkpoint_path, "predict with this model instead");
  pred_opt->excludes(ckpt_opt);
  ev->add_option("--out", out_path);

  std::vector<std::string> argv_storage{"dgn"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_storage) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*c) return cmd_cluster(cluster, out);
    if (*t) return cmd_train(common, report_path, checkpoint_path, out);
    if (*ab) return cmd_ablate(common, grid, seeds, out_path, out);
    if (*ex) return cmd_explain(common, checkpoint_path, scene_path, out_path, out);
    if (*gd) return cmd_gen_data(common, out_dir, out);
    if (*ev) {
      if (pred_path.empty() && checkpoint_path.empty()) {
        err << "eval: one of --pred or --checkpoint is required\n";
        return kExitConfig;
      }
      return cmd_eval(scene_path, pred_path, checkpoint_path, out_path, out);
    }
  } catch (const Error& e) {
    err << "dgn: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "dgn: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "dgn: internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitInternal;
}

}  // namespace dgn::cli
