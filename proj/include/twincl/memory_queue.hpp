#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "twincl/error.hpp"
#include "twincl/numeric.hpp"

namespace twincl {

// Fixed-capacity FIFO of detached anchor representations from previous
// mini-batches. Entry m = 1 is the most recently enqueued one and carries
// the forgetting coefficient p_m = 1 - lambda * ceil(m / N).
//
// A capacity of 0 is a disabled queue: pushes are dropped and phi is 0.
class HippocampusQueue {
 public:
  HippocampusQueue(std::size_t capacity, std::size_t block_size, double forgetting_rate)
      : capacity_(capacity), block_size_(block_size), forgetting_rate_(forgetting_rate) {
    if (block_size_ == 0) throw ConfigError("queue block size N must be >= 1");
    if (capacity_ != 0 && capacity_ < block_size_)
      throw ConfigError("queue capacity M must be 0 or >= block size N (M=" +
                        std::to_string(capacity_) + ", N=" + std::to_string(block_size_) + ")");
    if (!(forgetting_rate_ >= 0.0) || !std::isfinite(forgetting_rate_))
      throw ConfigError("forgetting rate must be >= 0");
    const double oldest = 1.0 - forgetting_rate_ * static_cast<double>(blocks());
    if (!(oldest > 0.0))
      throw ConfigError("forgetting coefficients must stay positive: 1 - lambda * ceil(M/N) = " +
                        std::to_string(oldest));
  }

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t block_size() const noexcept { return block_size_; }
  double forgetting_rate() const noexcept { return forgetting_rate_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  bool enabled() const noexcept { return capacity_ > 0; }

  // Newest first.
  const std::deque<Vec>& entries() const noexcept { return entries_; }

  double coefficient(std::size_t m) const {
    const std::size_t block = (m + block_size_ - 1) / block_size_;
    return 1.0 - forgetting_rate_ * static_cast<double>(block);
  }

  // Coefficients aligned with entries(), m = 1 at the newest entry.
  std::vector<double> coefficients() const {
    std::vector<double> p(entries_.size());
    for (std::size_t m = 1; m <= p.size(); ++m) p[m - 1] = coefficient(m);
    return p;
  }

  // Enqueue a batch as the newest block. batch[0] becomes the newest entry.
  void push_batch(std::span<const Vec> batch) {
    if (batch.size() != block_size_)
      throw DomainError("push_batch: expected " + std::to_string(block_size_) + " vectors, got " +
                        std::to_string(batch.size()));
    for (const Vec& v : batch) {
      if (!all_finite(v)) throw NumericError("push_batch: non-finite representation");
      if (!(norm(v) > 0.0)) throw DomainError("push_batch: zero-norm representation");
    }
    if (!enabled()) return;
    for (std::size_t k = batch.size(); k-- > 0;) entries_.push_front(batch[k]);
    while (entries_.size() > capacity_) entries_.pop_back();
  }

  void clear() { entries_.clear(); }

  // sum_m p_m exp(sim(h, H_m) / tau).
  double phi(std::span<const double> h, double tau) const {
    if (!(tau > 0.0)) throw ConfigError("temperature must be > 0");
    double sum = 0.0;
    std::size_t m = 1;
    for (const Vec& entry : entries_) {
      sum += coefficient(m) * std::exp(cosine_similarity(h, entry) / tau);
      ++m;
    }
    return sum;
  }

 private:
  std::size_t blocks() const { return (capacity_ + block_size_ - 1) / block_size_; }

  std::size_t capacity_;
  std::size_t block_size_;
  double forgetting_rate_;
  std::deque<Vec> entries_;
};

}  // namespace twincl
