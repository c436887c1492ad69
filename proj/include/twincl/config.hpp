#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "twincl/error.hpp"
#include "twincl/memory_queue.hpp"
#include "twincl/rng.hpp"
#include "twincl/synth.hpp"
#include "twincl/training.hpp"

// Flat key=value configuration. '#' starts a comment, blank lines are
// ignored, unknown keys are rejected. See README for the key list.

namespace twincl {

struct Ablation {
  bool fraternal = false;  // FI: drop l_F and the fraternal channel
  bool twins = false;      // TL: drop l_T
  bool queue = false;      // HQ: queue capacity 0
};

inline Ablation parse_ablation(std::string_view text) {
  Ablation a;
  std::string item;
  std::istringstream ss{std::string(text)};
  while (std::getline(ss, item, ',')) {
    while (!item.empty() && item.front() == ' ') item.erase(item.begin());
    while (!item.empty() && item.back() == ' ') item.pop_back();
    if (item.empty() || item == "none") continue;
    if (item == "FI") a.fraternal = true;
    else if (item == "TL") a.twins = true;
    else if (item == "HQ") a.queue = true;
    else throw ConfigError("unknown ablation '" + item + "' (expected FI, TL, HQ)");
  }
  return a;
}

struct RunConfig {
  // Defaults: the full-scale profile.
  double rho = 0.15;
  double epsilon = 0.9;
  double lambda = 0.002;
  double tau = 0.05;
  std::size_t batch_size = 64;
  std::size_t queue_capacity = 416;
  std::size_t max_len = 32;
  std::size_t dim = 64;
  std::size_t enc_hidden = 0;  // 0: same as dim
  std::size_t dim_out = 0;     // 0: same as dim
  double lr = 1e-5;
  double momentum = 0.0;
  std::size_t epochs = 1;
  std::size_t eval_every = 151;
  std::uint64_t seed = 42;
  std::size_t vocab_size = 0;  // required
  TwinsMode twins_mode = TwinsMode::Diagonal;
  Ablation ablate;
  std::optional<AugmentKind> positive_aug;
  double positive_aug_rate = 0.1;
  std::size_t inject_nan_step = 0;
  std::string corpus;
  std::string dev;
  std::string test;
  std::string out_dir = "out";

  // Synthetic data (gen command).
  std::optional<SynthSpec> synth;
  std::size_t dev_pairs = 0;
  std::size_t test_pairs = 0;

  std::size_t hidden() const { return enc_hidden == 0 ? dim : enc_hidden; }
  std::size_t output() const { return dim_out == 0 ? dim : dim_out; }
  std::size_t effective_queue_capacity() const { return ablate.queue ? 0 : queue_capacity; }
  EncoderShape shape() const { return {dim, hidden(), output()}; }

  TrainConfig train_config() const {
    TrainConfig t;
    t.twins = {rho, epsilon, max_len, !ablate.fraternal};
    t.objective.tau = tau;
    t.objective.twins_mode = twins_mode;
    t.objective.terms = {true, !ablate.fraternal, !ablate.twins && !ablate.fraternal};
    t.batch_size = batch_size;
    t.lr = lr;
    t.momentum = momentum;
    t.positive_aug = positive_aug;
    t.positive_aug_rate = positive_aug_rate;
    t.inject_nan_step = inject_nan_step;
    return t;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

inline double to_real(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(x))
    throw ConfigError("key '" + key + "': expected a real number, got '" + v + "'");
  return x;
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
  char* end = nullptr;
  if (v.empty() || v.front() == '-')
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size())
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return x;
}

inline TwinsMode to_twins_mode(const std::string& v) {
  if (v == "diag" || v == "diagonal") return TwinsMode::Diagonal;
  if (v == "pairwise") return TwinsMode::Pairwise;
  throw ConfigError("twins_mode must be diag or pairwise, got '" + v + "'");
}

inline std::optional<AugmentKind> to_augment(const std::string& v) {
  if (v == "none") return std::nullopt;
  if (v == "delete") return AugmentKind::Delete;
  if (v == "insert") return AugmentKind::Insert;
  if (v == "substitute") return AugmentKind::Substitute;
  throw ConfigError("positive_aug must be none, delete, insert or substitute, got '" + v + "'");
}

inline const std::set<std::string>& synth_keys() {
  static const std::set<std::string> keys{"n_clusters",         "sentences_per_cluster",
                                          "cluster_core_size",  "min_len",
                                          "cluster_token_overlap", "dev_pairs",
                                          "test_pairs",         "remap_seed",
                                          "corpus_seed"};
  return keys;
}

}  // namespace detail

// Raw key/value pairs, in file order of last assignment.
using ConfigMap = std::map<std::string, std::string>;

inline ConfigMap parse_config_text(std::string_view text) {
  ConfigMap out;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string line = detail::trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "expected key = value");
    const std::string key = detail::trim(std::string_view(line).substr(0, eq));
    const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ParseError(line_no, "empty key");
    out[key] = value;
  }
  return out;
}

inline void validate(const RunConfig& c) {
  if (!(c.rho >= 0.0 && c.rho < 1.0)) throw ConfigError("rho must lie in [0, 1)");
  if (!(c.epsilon >= 0.0 && c.epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
  if (!(c.tau > 0.0)) throw ConfigError("tau must be > 0");
  if (!(c.lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (!(c.lr >= 0.0)) throw ConfigError("lr must be >= 0");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(c.positive_aug_rate >= 0.0 && c.positive_aug_rate <= 1.0))
    throw ConfigError("positive_aug_rate must lie in [0, 1]");
  if (c.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (c.max_len == 0) throw ConfigError("max_len must be >= 1");
  if (c.dim == 0) throw ConfigError("dim must be >= 1");
  if (c.epochs == 0) throw ConfigError("epochs must be >= 1");
  if (c.eval_every == 0) throw ConfigError("eval_every must be >= 1");
  if (c.vocab_size < 2) throw ConfigError("missing required key 'vocab_size' (must be >= 2)");
  // Queue preconditions (capacity, block size, coefficient positivity).
  HippocampusQueue probe(c.effective_queue_capacity(), c.batch_size, c.lambda);
  if (c.synth) {
    validate(*c.synth);
    if (c.synth->vocab_size != c.vocab_size) throw ConfigError("synthetic vocab_size mismatch");
    if (c.synth->max_len > c.max_len)
      throw ConfigError("synthetic sentences longer than max_len");
  }
}

// Applies one key. Throws ConfigError naming the key on any problem.
inline void set_key(RunConfig& c, const std::string& key, const std::string& v) {
  using detail::to_real;
  using detail::to_uint;
  if (key == "rho") c.rho = to_real(key, v);
  else if (key == "epsilon") c.epsilon = to_real(key, v);
  else if (key == "lambda") c.lambda = to_real(key, v);
  else if (key == "tau") c.tau = to_real(key, v);
  else if (key == "batch_size") c.batch_size = to_uint(key, v);
  else if (key == "queue_capacity") c.queue_capacity = to_uint(key, v);
  else if (key == "max_len") c.max_len = to_uint(key, v);
  else if (key == "dim") c.dim = to_uint(key, v);
  else if (key == "enc_hidden") c.enc_hidden = to_uint(key, v);
  else if (key == "dim_out") c.dim_out = to_uint(key, v);
  else if (key == "lr") c.lr = to_real(key, v);
  else if (key == "momentum") c.momentum = to_real(key, v);
  else if (key == "epochs") c.epochs = to_uint(key, v);
  else if (key == "eval_every") c.eval_every = to_uint(key, v);
  else if (key == "seed") c.seed = to_uint(key, v);
  else if (key == "vocab_size") c.vocab_size = to_uint(key, v);
  else if (key == "twins_mode") c.twins_mode = detail::to_twins_mode(v);
  else if (key == "ablate") c.ablate = parse_ablation(v);
  else if (key == "positive_aug") c.positive_aug = detail::to_augment(v);
  else if (key == "positive_aug_rate") c.positive_aug_rate = to_real(key, v);
  else if (key == "inject_nan_step") c.inject_nan_step = to_uint(key, v);
  else if (key == "corpus") c.corpus = v;
  else if (key == "dev") c.dev = v;
  else if (key == "test") c.test = v;
  else if (key == "out_dir") c.out_dir = v;
  else if (detail::synth_keys().count(key) == 0)
    throw ConfigError("unknown config key '" + key + "'");
}

// Builds a RunConfig from parsed keys. The synthetic-data section is
// optional as a whole, but once any of its keys appears all of the
// required ones must be present.
inline RunConfig build_config(const ConfigMap& kv) {
  RunConfig c;
  for (const auto& [key, value] : kv) set_key(c, key, value);

  bool any_synth = false;
  for (const auto& k : detail::synth_keys()) any_synth = any_synth || kv.count(k) > 0;
  if (any_synth) {
    auto need = [&](const std::string& key) -> const std::string& {
      const auto it = kv.find(key);
      if (it == kv.end()) throw ConfigError("missing required key '" + key + "'");
      return it->second;
    };
    SynthSpec s;
    s.n_clusters = detail::to_uint("n_clusters", need("n_clusters"));
    s.sentences_per_cluster =
        detail::to_uint("sentences_per_cluster", need("sentences_per_cluster"));
    s.core_size = detail::to_uint("cluster_core_size", need("cluster_core_size"));
    s.min_len = detail::to_uint("min_len", need("min_len"));
    s.overlap = detail::to_real("cluster_token_overlap", need("cluster_token_overlap"));
    c.dev_pairs = detail::to_uint("dev_pairs", need("dev_pairs"));
    c.test_pairs = detail::to_uint("test_pairs", need("test_pairs"));
    need("vocab_size");
    s.vocab_size = c.vocab_size;
    s.max_len = c.max_len;
    const auto rs = kv.find("remap_seed");
    const auto cs = kv.find("corpus_seed");
    s.remap_seed = rs != kv.end() ? detail::to_uint("remap_seed", rs->second)
                                  : splitmix64(c.seed ^ fnv1a("remap"));
    s.corpus_seed = cs != kv.end() ? detail::to_uint("corpus_seed", cs->second)
                                   : splitmix64(c.seed ^ fnv1a("corpus"));
    if (c.dev_pairs < 2 || c.test_pairs < 2) throw ConfigError("dev_pairs and test_pairs must be >= 2");
    c.synth = s;
  }
  return c;
}

}  // namespace twincl
