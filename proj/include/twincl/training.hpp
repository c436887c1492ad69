#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "twincl/augmentation.hpp"
#include "twincl/encoder.hpp"
#include "twincl/error.hpp"
#include "twincl/eval.hpp"
#include "twincl/memory_queue.hpp"
#include "twincl/objective.hpp"
#include "twincl/rng.hpp"

namespace twincl {

struct TrainConfig {
  TwinsOptions twins;
  ObjectiveConfig objective;
  std::size_t batch_size = 64;
  double lr = 1e-5;
  double momentum = 0.0;
  // Token-level augmentation applied to the identical twin's source tokens
  // (baseline comparison); nullopt keeps dropout-only identical twins.
  std::optional<AugmentKind> positive_aug;
  double positive_aug_rate = 0.1;
  // Fault injection for exercising the numeric-abort path: the loss of
  // this 1-based global step is replaced by NaN. 0 disables it.
  std::size_t inject_nan_step = 0;
};

// Frozen source / fraternal embedding layers.
struct Tables {
  EmbeddingTable source;
  EmbeddingTable fraternal;
};

inline Tables make_tables(std::size_t vocab_size, std::size_t dim, std::uint64_t seed) {
  Rng rs = Rng::stream(seed, "bel_s");
  Rng rf = Rng::stream(seed, "bel_f");
  return {EmbeddingTable::gaussian(vocab_size, dim, rs),
          EmbeddingTable::gaussian(vocab_size, dim, rf)};
}

inline TwinsBatch build_batch(const EncoderParams& theta, std::span<const TokenSentence> sentences,
                              const Tables& tables, const TrainConfig& cfg, Rng& rng) {
  std::vector<Twins> twins;
  twins.reserve(sentences.size());
  for (const TokenSentence& s : sentences) {
    if (cfg.positive_aug) {
      const TokenSentence alt = baseline_augment(s, *cfg.positive_aug, cfg.positive_aug_rate,
                                                 tables.source.size(), cfg.twins.max_len, rng);
      twins.push_back(make_twins(s, tables.source, tables.fraternal, cfg.twins, rng, &alt.tokens));
    } else {
      twins.push_back(make_twins(s, tables.source, tables.fraternal, cfg.twins, rng));
    }
  }
  return encode_batch(theta, std::move(twins));
}

struct StepResult {
  EncoderParams params;
  LossBreakdown losses;
};

// One mini-batch: augment, encode, margins, loss, backward, SGD update,
// then enqueue the detached anchors. On any error neither the queue nor
// the optimizer state changes.
inline StepResult train_step(const EncoderParams& theta, std::span<const TokenSentence> sentences,
                             HippocampusQueue& queue, const TrainConfig& cfg, const Tables& tables,
                             Sgd& optimizer, Rng& rng, bool poison_loss = false) {
  if (sentences.size() != cfg.batch_size)
    throw DomainError("train_step: expected " + std::to_string(cfg.batch_size) + " sentences");
  if (queue.block_size() != cfg.batch_size)
    throw ConfigError("train_step: queue block size differs from batch size");

  const TwinsBatch batch = build_batch(theta, sentences, tables, cfg, rng);
  std::optional<Margins> m;
  if (cfg.objective.terms.twins) m = margins(batch, cfg.objective.twins_mode);
  ObjectiveResult res =
      objective_gradient(theta, batch, queue, cfg.objective, m ? &*m : nullptr);
  if (poison_loss) res.losses.total = std::numeric_limits<double>::quiet_NaN();
  if (!std::isfinite(res.losses.total)) throw NumericError("train_step: non-finite loss");
  if (!res.grads.all_finite()) throw NumericError("train_step: non-finite gradient");

  EncoderParams next = optimizer.step(theta, res.grads);
  if (!next.all_finite()) throw NumericError("train_step: parameters became non-finite");
  queue.push_batch(batch.anchor_reps());
  return {std::move(next), std::move(res.losses)};
}

struct MetricsRecord {
  std::size_t step = 0;
  double loss_identical = 0.0;  // window means of the per-step sums
  double loss_fraternal = 0.0;
  double loss_twins = 0.0;
  double loss_total = 0.0;
  double spearman_dev = 0.0;
  std::size_t queue_len = 0;
};

// Sequential training driver. Randomness comes from named sub-streams of
// one seed: "init" (parameters), "masks" (dropout and token augmentation),
// "shuffle" (per-epoch sentence order).
class TrainingRun {
 public:
  TrainingRun(EncoderParams init, TrainConfig cfg, const Tables& tables, std::size_t queue_capacity,
              double forgetting_rate, std::uint64_t seed)
      : cfg_(std::move(cfg)),
        tables_(tables),
        params_(std::move(init)),
        best_params_(params_),
        queue_(queue_capacity, cfg_.batch_size, forgetting_rate),
        optimizer_(cfg_.lr, cfg_.momentum),
        masks_(Rng::stream(seed, "masks")),
        shuffle_(Rng::stream(seed, "shuffle")) {}

  using Sink = std::function<void(const MetricsRecord&)>;

  // Shuffles the corpus, trains on every full batch (a ragged tail is
  // dropped) and emits a record every eval_every steps plus one at the end
  // of the epoch if the last step was not already reported.
  void run_epoch(const std::vector<TokenSentence>& corpus, std::span<const StsPair> dev,
                 std::size_t eval_every, const Sink& sink) {
    if (eval_every == 0) throw ConfigError("eval_every must be >= 1");
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, shuffle_);
    const std::size_t n = cfg_.batch_size;
    const std::size_t steps = corpus.size() / n;
    std::vector<TokenSentence> batch(n);
    for (std::size_t b = 0; b < steps; ++b) {
      for (std::size_t k = 0; k < n; ++k) batch[k] = corpus[order[b * n + k]];
      const bool poison = cfg_.inject_nan_step != 0 && step_ + 1 == cfg_.inject_nan_step;
      StepResult r = train_step(params_, batch, queue_, cfg_, tables_, optimizer_, masks_, poison);
      params_ = std::move(r.params);
      ++step_;
      window_.loss_identical += r.losses.sum_identical();
      window_.loss_fraternal += r.losses.sum_fraternal();
      window_.loss_twins += r.losses.sum_twins();
      window_.loss_total += r.losses.total;
      ++window_steps_;
      if (step_ % eval_every == 0 || b + 1 == steps) emit(dev, sink);
    }
  }

  const EncoderParams& params() const noexcept { return params_; }
  const EncoderParams& best_params() const noexcept { return best_params_; }
  double best_dev() const noexcept { return best_dev_; }
  bool has_best() const noexcept { return has_best_; }
  std::size_t step() const noexcept { return step_; }
  const HippocampusQueue& queue() const noexcept { return queue_; }
  const TrainConfig& config() const noexcept { return cfg_; }

 private:
  void emit(std::span<const StsPair> dev, const Sink& sink) {
    MetricsRecord rec;
    const double w = static_cast<double>(window_steps_);
    rec.step = step_;
    rec.loss_identical = window_.loss_identical / w;
    rec.loss_fraternal = window_.loss_fraternal / w;
    rec.loss_twins = window_.loss_twins / w;
    rec.loss_total = window_.loss_total / w;
    rec.spearman_dev = evaluate_sts(params_, dev, tables_.source, cfg_.twins.max_len).spearman;
    rec.queue_len = queue_.size();
    if (!has_best_ || rec.spearman_dev > best_dev_) {
      best_dev_ = rec.spearman_dev;
      best_params_ = params_;
      has_best_ = true;
    }
    window_ = {};
    window_steps_ = 0;
    if (sink) sink(rec);
  }

  TrainConfig cfg_;
  const Tables& tables_;
  EncoderParams params_;
  EncoderParams best_params_;
  HippocampusQueue queue_;
  Sgd optimizer_;
  Rng masks_;
  Rng shuffle_;
  std::size_t step_ = 0;
  MetricsRecord window_;
  std::size_t window_steps_ = 0;
  double best_dev_ = -std::numeric_limits<double>::infinity();
  bool has_best_ = false;
};

struct EpochResult {
  EncoderParams params;
  EncoderParams best_params;
  double best_dev = 0.0;
  std::vector<MetricsRecord> metrics;
};

inline EpochResult train_epoch(const EncoderParams& theta, const std::vector<TokenSentence>& corpus,
                               std::span<const StsPair> dev, const TrainConfig& cfg,
                               const Tables& tables, std::size_t queue_capacity,
                               double forgetting_rate, std::uint64_t seed, std::size_t eval_every) {
  TrainingRun run(theta, cfg, tables, queue_capacity, forgetting_rate, seed);
  EpochResult out{theta, theta, 0.0, {}};
  run.run_epoch(corpus, dev, eval_every,
                [&](const MetricsRecord& r) { out.metrics.push_back(r); });
  out.params = run.params();
  out.best_params = run.best_params();
  out.best_dev = run.best_dev();
  return out;
}

}  // namespace twincl
