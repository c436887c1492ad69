// twincl: command-line driver for data generation, training, evaluation,
// mutual-information analysis and hyperparameter sweeps.
//
// Exit codes: 0 success, 2 configuration / parse / I/O error, 3 numeric abort.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "twincl/twincl.hpp"

namespace fs = std::filesystem;
using namespace twincl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct Options {
  std::string config;
  std::string ablate;
  std::string twins_mode;
  std::optional<std::uint64_t> seed;
  std::string out;
  // eval / mi
  std::string checkpoint;
  std::string data;
  std::string predictions;
  std::optional<std::size_t> n;
  std::optional<double> tau;
  // sweep
  std::string param;
  std::vector<std::string> values;
};

// Numeric abort that already saved the last good parameters.
struct AbortedRun : NumericError {
  AbortedRun(const std::string& what, std::string ckpt)
      : NumericError(what), checkpoint(std::move(ckpt)) {}
  std::string checkpoint;
};

ConfigMap load_config_map(const Options& opt) {
  ConfigMap kv = parse_config_text(read_file(opt.config));
  if (!opt.ablate.empty()) kv["ablate"] = opt.ablate;
  if (!opt.twins_mode.empty()) kv["twins_mode"] = opt.twins_mode;
  if (opt.seed) kv["seed"] = std::to_string(*opt.seed);
  if (!opt.out.empty()) kv["out_dir"] = opt.out;
  return kv;
}

RunConfig load_config(const Options& opt) {
  RunConfig c = build_config(load_config_map(opt));
  validate(c);
  return c;
}

std::string path_or(const std::string& path, const RunConfig& c, const char* file) {
  return path.empty() ? (fs::path(c.out_dir) / file).string() : path;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir);
}

std::vector<TokenSentence> load_corpus(const std::string& path, const RunConfig& c) {
  std::istringstream in(read_file(path));
  try {
    auto corpus = parse_corpus(in, c.max_len, !c.ablate.fraternal, c.vocab_size);
    if (corpus.empty()) throw ParseError(1, "corpus is empty");
    return corpus;
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path + ": " + e.what());
  }
}

std::vector<StsPair> load_eval(const std::string& path, const RunConfig& c) {
  std::istringstream in(read_file(path));
  try {
    return parse_eval(in, c.max_len, c.vocab_size);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path + ": " + e.what());
  }
}

EncoderParams load_checkpoint(const std::string& path) {
  std::istringstream in(read_file(path));
  return read_checkpoint(in);
}

void save_checkpoint(const std::string& path, const EncoderParams& theta) {
  std::ostringstream out;
  write_checkpoint(out, theta);
  write_file(path, out.str());
}

std::string fmt(double x) { return format_double(x); }

std::string metrics_line(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["loss_I"] = r.loss_identical;
  j["loss_F"] = r.loss_fraternal;
  j["loss_T"] = r.loss_twins;
  j["loss_total"] = r.loss_total;
  j["spearman_dev"] = r.spearman_dev;
  j["queue_len"] = r.queue_len;
  return j.dump() + "\n";
}

// Trains for c.epochs epochs, writing metrics.jsonl, final.ckpt and
// best.ckpt under c.out_dir. Returns the best dev Spearman.
double run_training(const RunConfig& c) {
  const std::string corpus_path = path_or(c.corpus, c, "corpus.tsv");
  const std::string dev_path = path_or(c.dev, c, "dev.tsv");
  const auto corpus = load_corpus(corpus_path, c);
  const auto dev = load_eval(dev_path, c);
  if (corpus.size() < c.batch_size)
    throw ConfigError("corpus has fewer sentences than batch_size");
  if (dev.size() < 2) throw ConfigError("dev set needs at least 2 pairs");
  ensure_dir(c.out_dir);

  const Tables tables = make_tables(c.vocab_size, c.dim, c.seed);
  Rng init_rng = Rng::stream(c.seed, "init");
  TrainingRun run(EncoderParams::init(c.shape(), init_rng), c.train_config(), tables,
                  c.effective_queue_capacity(), c.lambda, c.seed);

  const std::string metrics_path = (fs::path(c.out_dir) / "metrics.jsonl").string();
  std::ofstream metrics(metrics_path, std::ios::binary | std::ios::trunc);
  if (!metrics) throw IoError("cannot write " + metrics_path);
  const auto sink = [&](const MetricsRecord& r) { metrics << metrics_line(r) << std::flush; };

  try {
    for (std::size_t e = 0; e < c.epochs; ++e) run.run_epoch(corpus, dev, c.eval_every, sink);
  } catch (const NumericError& err) {
    const std::string last_good = (fs::path(c.out_dir) / "last_good.ckpt").string();
    save_checkpoint(last_good, run.params());
    throw AbortedRun(std::string(err.what()) + " at step " + std::to_string(run.step() + 1),
                     last_good);
  }
  save_checkpoint((fs::path(c.out_dir) / "final.ckpt").string(), run.params());
  save_checkpoint((fs::path(c.out_dir) / "best.ckpt").string(), run.best_params());
  return run.best_dev();
}

int cmd_gen(const Options& opt) {
  const RunConfig c = load_config(opt);
  if (!c.synth) throw ConfigError("missing required key 'n_clusters' (synthetic data section)");
  ensure_dir(c.out_dir);
  const std::string corpus_path = path_or(c.corpus, c, "corpus.tsv");
  const std::string dev_path = path_or(c.dev, c, "dev.tsv");
  const std::string test_path = path_or(c.test, c, "test.tsv");
  const auto corpus = gen_corpus(*c.synth);
  const auto dev = gen_sts(*c.synth, c.dev_pairs, "dev");
  const auto test = gen_sts(*c.synth, c.test_pairs, "test");
  write_file(corpus_path, format_corpus(corpus));
  write_file(dev_path, format_eval(dev));
  write_file(test_path, format_eval(test));
  std::cout << corpus_path << '\t' << corpus.size() << '\n'
            << dev_path << '\t' << dev.size() << '\n'
            << test_path << '\t' << test.size() << '\n';
  return kExitOk;
}

int cmd_train(const Options& opt) {
  const RunConfig c = load_config(opt);
  const double best = run_training(c);
  std::cout << "best_dev_spearman=" << fmt(best) << '\n';
  return kExitOk;
}

int cmd_eval(const Options& opt) {
  const RunConfig c = load_config(opt);
  const std::string ckpt = path_or(opt.checkpoint, c, "best.ckpt");
  const std::string data = opt.data.empty() ? path_or(c.test, c, "test.tsv") : opt.data;
  const EncoderParams theta = load_checkpoint(ckpt);
  if (!(theta.shape == c.shape())) throw ConfigError("checkpoint shape does not match config");
  const auto pairs = load_eval(data, c);
  const Tables tables = make_tables(c.vocab_size, c.dim, c.seed);
  const EvalReport report = evaluate_sts(theta, pairs, tables.source, c.max_len);
  const std::string pred_path =
      opt.predictions.empty() ? (fs::path(c.out_dir) / "predictions.tsv").string()
                              : opt.predictions;
  if (opt.predictions.empty()) ensure_dir(c.out_dir);
  write_file(pred_path, format_predictions(report.predictions));
  std::cout << "spearman=" << fmt(report.spearman) << '\n';
  return kExitOk;
}

int cmd_mi(const Options& opt) {
  const RunConfig c = load_config(opt);
  const double tau = opt.tau.value_or(c.tau);
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
  const EncoderParams theta = load_checkpoint(path_or(opt.checkpoint, c, "best.ckpt"));
  if (!(theta.shape == c.shape())) throw ConfigError("checkpoint shape does not match config");
  const auto corpus = load_corpus(path_or(c.corpus, c, "corpus.tsv"), c);
  const std::size_t n = opt.n.value_or(std::min(c.batch_size, corpus.size()));
  if (n == 0 || n > corpus.size()) throw ConfigError("--n must lie in [1, corpus size]");

  const Tables tables = make_tables(c.vocab_size, c.dim, c.seed);
  TwinsOptions twins{c.rho, c.epsilon, c.max_len, !c.ablate.fraternal};
  Rng rng = Rng::stream(c.seed, "mi");
  std::vector<Vec> h, h_pos, h_frat;
  for (std::size_t i = 0; i < n; ++i) {
    const Twins t = make_twins(corpus[i], tables.source, tables.fraternal, twins, rng);
    h.push_back(encode(theta, t.anchor).output);
    h_pos.push_back(encode(theta, t.identical).output);
    if (twins.fraternal) h_frat.push_back(encode(theta, t.fraternal).output);
  }

  ensure_dir(c.out_dir);
  std::string dump;
  auto dump_rows = [&](const char* kind, const std::vector<Vec>& reps) {
    for (std::size_t i = 0; i < reps.size(); ++i) {
      dump += std::string(kind) + '\t' + std::to_string(i) + '\t';
      for (std::size_t k = 0; k < reps[i].size(); ++k) dump += (k ? " " : "") + fmt(reps[i][k]);
      dump += '\n';
    }
  };
  dump_rows("anchor", h);
  dump_rows("identical", h_pos);
  dump_rows("fraternal", h_frat);
  write_file((fs::path(c.out_dir) / "mi_reps.tsv").string(), dump);

  std::cout << "n=" << n << '\n';
  std::cout << "tau=" << fmt(tau) << '\n';
  std::cout << "mi_identical=" << fmt(mutual_information(h, h_pos, tau)) << '\n';
  if (!h_frat.empty())
    std::cout << "mi_fraternal=" << fmt(mutual_information(h, h_frat, tau)) << '\n';
  if (!opt.data.empty()) {
    std::vector<StsPair> top;
    for (auto& p : load_eval(opt.data, c))
      if (p.gold == kMaxGold) top.push_back(std::move(p));
    if (!top.empty())
      std::cout << "mi_task=" << fmt(task_relevant_mi(theta, top, tau, tables.source, c.max_len))
                << '\n';
    std::cout << "n_task=" << top.size() << '\n';
  }
  return kExitOk;
}

int cmd_sweep(const Options& opt) {
  if (opt.param.empty() || opt.values.empty())
    throw ConfigError("sweep needs --param and --values");
  const ConfigMap base = load_config_map(opt);
  const RunConfig base_cfg = build_config(base);
  validate(base_cfg);

  // Validate every value before any training starts.
  std::vector<RunConfig> runs;
  for (const auto& v : opt.values) {
    ConfigMap kv = base;
    kv[opt.param] = v;
    if (opt.param == "out_dir" || opt.param == "corpus" || opt.param == "dev" ||
        opt.param == "test")
      throw ConfigError("cannot sweep over path key '" + opt.param + "'");
    RunConfig c = build_config(kv);
    // Each run reads the base data files and writes its own directory.
    c.corpus = path_or(base_cfg.corpus, base_cfg, "corpus.tsv");
    c.dev = path_or(base_cfg.dev, base_cfg, "dev.tsv");
    c.test = path_or(base_cfg.test, base_cfg, "test.tsv");
    c.out_dir = (fs::path(base_cfg.out_dir) / ("sweep_" + opt.param + "_" + v)).string();
    try {
      validate(c);
    } catch (const ConfigError& e) {
      throw ConfigError(opt.param + "=" + v + ": " + e.what());
    }
    runs.push_back(std::move(c));
  }

  std::string table = opt.param + "\tbest_dev_spearman\n";
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const double best = run_training(runs[k]);
    table += opt.values[k] + '\t' + fmt(best) + '\n';
    std::cout << opt.param << '=' << opt.values[k] << "\tbest_dev_spearman=" << fmt(best) << '\n';
  }
  ensure_dir(base_cfg.out_dir);
  const std::string path = (fs::path(base_cfg.out_dir) / "sweep.tsv").string();
  write_file(path, table);
  std::cout << path << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"twincl: contrastive sentence-representation engine with identical / fraternal "
               "twins, a forgetting-weighted negative queue and the twins margin loss"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "key=value configuration file")->required();
    sub->add_option("--seed", opt.seed, "override the config seed");
    sub->add_option("--out", opt.out, "override the output directory");
  };
  auto add_train_flags = [&](CLI::App* sub) {
    sub->add_option("--ablate", opt.ablate, "comma list of FI, TL, HQ");
    sub->add_option("--twins-mode", opt.twins_mode, "diag or pairwise");
  };

  auto* gen = app.add_subcommand("gen", "generate synthetic corpus, dev and test sets");
  add_common(gen);
  auto* train = app.add_subcommand("train", "train the encoder");
  add_common(train);
  add_train_flags(train);
  auto* eval = app.add_subcommand("eval", "Spearman evaluation and prediction dump");
  add_common(eval);
  eval->add_option("--checkpoint", opt.checkpoint, "checkpoint (default <out>/best.ckpt)");
  eval->add_option("--data", opt.data, "eval TSV (default: config test file)");
  eval->add_option("--predictions", opt.predictions, "prediction dump path");
  auto* mi = app.add_subcommand("mi", "mutual information of the twins");
  add_common(mi);
  add_train_flags(mi);
  mi->add_option("--checkpoint", opt.checkpoint, "checkpoint (default <out>/best.ckpt)");
  mi->add_option("--n", opt.n, "number of corpus sentences (default batch_size)");
  mi->add_option("--tau", opt.tau, "temperature (default: config tau)");
  mi->add_option("--data", opt.data, "eval TSV; its maximum-gold pairs give mi_task");
  auto* sweep = app.add_subcommand("sweep", "train once per value of one config key");
  add_common(sweep);
  add_train_flags(sweep);
  sweep->add_option("--param", opt.param, "config key to sweep")->required();
  sweep->add_option("--values", opt.values, "values")->required()->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen(opt);
    if (train->parsed()) return cmd_train(opt);
    if (eval->parsed()) return cmd_eval(opt);
    if (mi->parsed()) return cmd_mi(opt);
    if (sweep->parsed()) return cmd_sweep(opt);
  } catch (const AbortedRun& e) {
    std::cerr << "numeric abort: " << e.what() << "\nlast good checkpoint: " << e.checkpoint
              << '\n';
    return kExitNumeric;
  } catch (const NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}
