#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include "dgn/error.hpp"
#include "dgn/trainer.hpp"

namespace dgn {
namespace {

[[noreturn]] void config_fail(const std::string& message) {
  throw Error(ErrorKind::ConfigError, message);
}

std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string token;
  for (const char ch : value) {
    if (ch == ',' || ch == ' ' || ch == '\t') {
      if (!token.empty()) out.push_back(std::move(token));
      token.clear();
    } else {
      token.push_back(ch);
    }
  }
  if (!token.empty()) out.push_back(std::move(token));
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    config_fail(key + ": cannot parse `" + value + "`");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "on") return true;
  if (value == "0" || value == "false" || value == "off") return false;
  config_fail(key + ": expected a boolean, got `" + value + "`");
}

template <typename E>
E parse_enum(const std::string& key, const std::string& value, const std::map<std::string, E>& names) {
  const auto it = names.find(value);
  if (it == names.end()) {
    std::string allowed;
    for (const auto& [name, _] : names) allowed += (allowed.empty() ? "" : "|") + name;
    config_fail(key + ": expected one of " + allowed + ", got `" + value + "`");
  }
  return it->second;
}

const std::map<std::string, EmVariant> kEmVariants{{"soft", EmVariant::Soft}, {"hard", EmVariant::Hard}};
const std::map<std::string, DisGradMode> kDisModes{{"through_means", DisGradMode::ThroughMeans},
                                                   {"frozen_means", DisGradMode::FrozenMeans}};
const std::map<std::string, Distribution> kDistributions{{"movmf", Distribution::MoVMF},
                                                         {"gmm", Distribution::GMM},
                                                         {"proto_euclid", Distribution::ProtoEuclid},
                                                         {"proto_cosine", Distribution::ProtoCosine}};
const std::map<std::string, Reduction> kReductions{{"sum", Reduction::Sum}, {"mean", Reduction::Mean}};
const std::map<std::string, Geometry> kGeometries{{"gaussian_blobs", Geometry::GaussianBlobs},
                                                  {"planar_patches", Geometry::PlanarPatches},
                                                  {"mixed", Geometry::Mixed}};

template <typename E>
std::string enum_name(E value, const std::map<std::string, E>& names) {
  for (const auto& [name, v] : names) {
    if (v == value) return name;
  }
  return "?";
}

using Setter = std::function<void(TrainConfig&, const std::string&, const std::string&)>;
using Getter = std::function<std::string(const TrainConfig&)>;

struct Field {
  std::string key;
  Setter set;
  Getter get;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"kappa", [](auto& c, auto& k, auto& v) { c.kappa = parse_number<double>(k, v); },
       [](const auto& c) { return format_exact(c.kappa); }},
      {"em_iters", [](auto& c, auto& k, auto& v) { c.em_iters = parse_number<int>(k, v); },
       [](const auto& c) { return std::to_string(c.em_iters); }},
      {"beta", [](auto& c, auto& k, auto& v) { c.beta = parse_number<double>(k, v); },
       [](const auto& c) { return format_exact(c.beta); }},
      {"warmup_epochs", [](auto& c, auto& k, auto& v) { c.warmup_epochs = parse_number<int>(k, v); },
       [](const auto& c) { return std::to_string(c.warmup_epochs); }},
      {"epochs", [](auto& c, auto& k, auto& v) { c.epochs = parse_number<int>(k, v); },
       [](const auto& c) { return std::to_string(c.epochs); }},
      {"lr", [](auto& c, auto& k, auto& v) { c.lr = parse_number<double>(k, v); },
       [](const auto& c) { return format_exact(c.lr); }},
      {"label_rate", [](auto& c, auto& k, auto& v) { c.label_rate = parse_number<double>(k, v); },
       [](const auto& c) { return format_exact(c.label_rate); }},
      {"loss_toggles",
       [](auto& c, auto& k, auto& v) {
         const auto parts = split_list(v);
         if (parts.size() != 4) config_fail(k + ": expected four flags in the order tce vmf dis con");
         c.loss_toggles = {parse_bool(k, parts[0]), parse_bool(k, parts[1]), parse_bool(k, parts[2]),
                           parse_bool(k, parts[3])};
       },
       [](const auto& c) {
         const auto& t = c.loss_toggles;
         return std::string() + (t.tce ? "1" : "0") + " " + (t.vmf ? "1" : "0") + " " + (t.dis ? "1" : "0") +
                " " + (t.con ? "1" : "0");
       }},
      {"seed", [](auto& c, auto& k, auto& v) { c.seed = parse_number<std::uint64_t>(k, v); },
       [](const auto& c) { return std::to_string(c.seed); }},
      {"em_variant", [](auto& c, auto& k, auto& v) { c.em_variant = parse_enum(k, v, kEmVariants); },
       [](const auto& c) { return enum_name(c.em_variant, kEmVariants); }},
      {"dis_grad_mode", [](auto& c, auto& k, auto& v) { c.dis_grad_mode = parse_enum(k, v, kDisModes); },
       [](const auto& c) { return enum_name(c.dis_grad_mode, kDisModes); }},
      {"distribution", [](auto& c, auto& k, auto& v) { c.distribution = parse_enum(k, v, kDistributions); },
       [](const auto& c) { return enum_name(c.distribution, kDistributions); }},
      {"vmf_reduction", [](auto& c, auto& k, auto& v) { c.vmf_reduction = parse_enum(k, v, kReductions); },
       [](const auto& c) { return enum_name(c.vmf_reduction, kReductions); }},
      {"hidden",
       [](auto& c, auto& k, auto& v) {
         c.hidden.clear();
         if (v == "none") return;
         for (const auto& part : split_list(v)) c.hidden.push_back(parse_number<int>(k, part));
       },
       [](const auto& c) {
         if (c.hidden.empty()) return std::string("none");
         std::string out;
         for (const int w : c.hidden) out += (out.empty() ? "" : ",") + std::to_string(w);
         return out;
       }},
      {"feat_dim", [](auto& c, auto& k, auto& v) { c.feat_dim = parse_number<int>(k, v); },
       [](const auto& c) { return std::to_string(c.feat_dim); }},
      {"momentum", [](auto& c, auto& k, auto& v) { c.momentum = parse_number<double>(k, v); },
       [](const auto& c) { return format_exact(c.momentum); }},
      {"em_tol", [](auto& c, auto& k, auto& v) { c.em_tol = parse_number<double>(k, v); },
       [](const auto& c) { return format_exact(c.em_tol); }},
      {"threads", [](auto& c, auto& k, auto& v) { c.threads = parse_number<int>(k, v); },
       [](const auto& c) { return std::to_string(c.threads); }},
      {"num_scenes", [](auto& c, auto& k, auto& v) { c.num_scenes = parse_number<int>(k, v); },
       [](const auto& c) { return std::to_string(c.num_scenes); }},
      {"num_classes", [](auto& c, auto& k, auto& v) { c.scene.num_classes = parse_number<int>(k, v); },
       [](const auto& c) { return std::to_string(c.scene.num_classes); }},
      {"points_min", [](auto& c, auto& k, auto& v) { c.scene.points_min = parse_number<int>(k, v); },
       [](const auto& c) { return std::to_string(c.scene.points_min); }},
      {"points_max", [](auto& c, auto& k, auto& v) { c.scene.points_max = parse_number<int>(k, v); },
       [](const auto& c) { return std::to_string(c.scene.points_max); }},
      {"geometry", [](auto& c, auto& k, auto& v) { c.scene.geometry = parse_enum(k, v, kGeometries); },
       [](const auto& c) { return enum_name(c.scene.geometry, kGeometries); }},
      {"noise_sigma", [](auto& c, auto& k, auto& v) { c.scene.noise_sigma = parse_number<double>(k, v); },
       [](const auto& c) { return format_exact(c.scene.noise_sigma); }},
  };
  return table;
}

}  // namespace

std::string to_string(EmVariant v) { return enum_name(v, kEmVariants); }
std::string to_string(DisGradMode m) { return enum_name(m, kDisModes); }
std::string to_string(Distribution d) { return enum_name(d, kDistributions); }
std::string to_string(Reduction r) { return enum_name(r, kReductions); }
std::string to_string(Geometry g) { return enum_name(g, kGeometries); }

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* message) {
    if (!ok) config_fail(message);
  };
  require(kappa >= 0.0 && std::isfinite(kappa), "kappa: must be finite and >= 0");
  require(em_iters >= 0, "em_iters: must be >= 0");
  require(beta > 0.0 && beta <= 1.0, "beta: must lie in (0, 1]");
  require(warmup_epochs >= 0, "warmup_epochs: must be >= 0");
  require(epochs >= 0, "epochs: must be >= 0");
  require(lr > 0.0 && std::isfinite(lr), "lr: must be positive");
  require(label_rate > 0.0 && label_rate <= 1.0, "label_rate: must lie in (0, 1]");
  require(feat_dim >= 2, "feat_dim: must be >= 2");
  for (const int w : hidden) require(w >= 1, "hidden: widths must be positive");
  require(momentum >= 0.0 && momentum < 1.0, "momentum: must satisfy 0 <= momentum < 1");
  require(em_tol > 0.0, "em_tol: must be positive");
  require(threads >= 1, "threads: must be >= 1");
  require(num_scenes >= 1, "num_scenes: must be >= 1");
  require(scene.num_classes >= 2, "num_classes: must be >= 2");
  require(scene.points_min >= 1 && scene.points_max >= scene.points_min,
          "points_min/points_max: need 1 <= points_min <= points_max");
  require(scene.noise_sigma >= 0.0, "noise_sigma: must be >= 0");
}

void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& field : fields()) {
    if (field.key == key) {
      field.set(cfg, key, value);
      return;
    }
  }
  config_fail("unknown key `" + key + "`");
}

TrainConfig parse_config(std::istream& in, const std::string& source_name) {
  TrainConfig cfg;
  std::set<std::string> seen;
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = source_name + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) {
      throw Error(ErrorKind::ConfigError, where + "expected `key = value`", line_no);
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (!seen.insert(key).second) {
      throw Error(ErrorKind::ConfigError, where + "duplicate key `" + key + "`", line_no);
    }
    try {
      apply_setting(cfg, key, value);
    } catch (const Error& e) {
      throw Error(ErrorKind::ConfigError, where + e.message(), line_no);
    }
  }
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::ConfigError, source_name + ": " + e.message());
  }
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  return parse_config(in, path);
}

std::string format_config(const TrainConfig& cfg) {
  std::string out;
  for (const auto& field : fields()) out += field.key + " = " + field.get(cfg) + "\n";
  return out;
}

}  // namespace dgn
