#include "hyperscore/training.hpp"

#include <algorithm>
#include <numeric>

namespace hyperscore {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (lr_main < 0 || lr_encoder < 0) throw ConfigError("learning rates must be >= 0");
  if (lr_decay <= 0 || lr_decay_every < 1) throw ConfigError("lr decay must be positive");
  if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

namespace {

// Fisher-Yates driven by the counter generator so the order is portable.
template <typename V>
void seeded_shuffle(V& v, const CounterRng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.bits(i) % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

std::vector<Fold> crossval_split(std::vector<std::string> prompt_ids, int k, std::uint64_t seed) {
  std::sort(prompt_ids.begin(), prompt_ids.end());
  prompt_ids.erase(std::unique(prompt_ids.begin(), prompt_ids.end()), prompt_ids.end());
  const auto n = static_cast<int>(prompt_ids.size());
  if (k < 2) throw ArgumentError("crossval_split: k must be >= 2");
  if (k > n) throw ArgumentError("crossval_split: k exceeds the number of prompts");
  seeded_shuffle(prompt_ids, CounterRng(seed).child("crossval"));
  std::vector<Fold> folds(k);
  int pos = 0;
  for (int f = 0; f < k; ++f) {
    const int size = n / k + (f < n % k ? 1 : 0);
    for (int i = 0; i < n; ++i) {
      if (i >= pos && i < pos + size)
        folds[f].test_prompts.push_back(prompt_ids[i]);
      else
        folds[f].train_prompts.push_back(prompt_ids[i]);
    }
    pos += size;
  }
  return folds;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  seeded_shuffle(order, CounterRng(seed).child("shuffle").child(std::to_string(epoch)));
  return order;
}

std::vector<DimensionMetrics> dimension_metrics(const Mat<double>& preds, const Mat<double>& targets) {
  std::vector<DimensionMetrics> out;
  for (Eigen::Index k = 0; k < preds.cols(); ++k) {
    const std::vector<double> x(preds.col(k).begin(), preds.col(k).end());
    const std::vector<double> y(targets.col(k).begin(), targets.col(k).end());
    DimensionMetrics m;
    auto guarded = [&](auto fn, double& dst) {
      try {
        dst = fn(x, y);
      } catch (const UndefinedCorrelationError&) {
      } catch (const ArgumentError&) {
      }
    };
    guarded([](const auto& a, const auto& b) { return plcc(a, b); }, m.plcc);
    guarded([](const auto& a, const auto& b) { return srcc(a, b); }, m.srcc);
    guarded([](const auto& a, const auto& b) { return krcc(a, b); }, m.krcc);
    out.push_back(m);
  }
  return out;
}

std::vector<DimensionMetrics> average_metrics(const std::vector<FoldReport>& folds) {
  if (folds.empty()) return {};
  const std::size_t k = folds.front().metrics.size();
  std::vector<DimensionMetrics> out(k);
  for (std::size_t d = 0; d < k; ++d) {
    auto mean_of = [&](auto field) {
      double sum = 0;
      int n = 0;
      for (const auto& f : folds) {
        const double v = f.metrics[d].*field;
        if (!std::isnan(v)) {
          sum += v;
          ++n;
        }
      }
      return n ? sum / n : std::numeric_limits<double>::quiet_NaN();
    };
    out[d].plcc = mean_of(&DimensionMetrics::plcc);
    out[d].srcc = mean_of(&DimensionMetrics::srcc);
    out[d].krcc = mean_of(&DimensionMetrics::krcc);
  }
  return out;
}

}  // namespace hyperscore
