#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "hyperscore/model.hpp"
#include "hyperscore/stats.hpp"

namespace hyperscore {

struct TrainConfig {
  int batch_size = 8;
  int epochs = 30;
  double lr_main = 2e-4;
  double lr_encoder = 2e-6;  // visual-encoder group; empty unless an adapter is plugged in
  double lr_decay = 0.9;
  int lr_decay_every = 5;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double lambda = 1.0;
  double epsilon = 0.0;  // L_dis margin
  std::uint64_t seed = 0;
  int threads = 1;
  int folds = 5;

  void validate() const;
};

// ---------------------------------------------------------------- losses

template <typename T>
T loss_regression(const Mat<T>& preds, const Mat<T>& targets) {
  if (preds.rows() != targets.rows() || preds.cols() != targets.cols())
    throw ArgumentError("loss_regression: shape mismatch");
  if (preds.size() == 0) throw ArgumentError("loss_regression: empty batch");
  return (preds - targets).squaredNorm() / static_cast<T>(preds.size());
}

template <typename T>
struct DisentangleLoss {
  T value{};
  bool warning = false;  // fewer than two conditions
};

// Mean over unordered pairs i < j of max(epsilon, cos(f_i, f_j)).
template <typename T>
DisentangleLoss<T> loss_disentangle(const std::vector<Vec<T>>& conditions, T epsilon) {
  const std::size_t k = conditions.size();
  if (k < 2) return {T(0), true};
  std::vector<Vec<T>> n;
  for (const auto& c : conditions) n.push_back(normalize(c));
  T sum = 0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) sum += std::max(epsilon, n[i].dot(n[j]));
  return {sum / static_cast<T>(k * (k - 1) / 2), false};
}

// d(L_dis)/d(f_c^i). Clipped pairs (cos <= epsilon) contribute nothing.
template <typename T>
std::vector<Vec<T>> loss_disentangle_backward(const std::vector<Vec<T>>& conditions, T epsilon) {
  const std::size_t k = conditions.size();
  std::vector<Vec<T>> g(k);
  for (std::size_t i = 0; i < k; ++i) g[i] = Vec<T>::Zero(conditions[i].size());
  if (k < 2) return g;
  std::vector<Vec<T>> n;
  for (const auto& c : conditions) n.push_back(normalize(c));
  const T scale = T(1) / static_cast<T>(k * (k - 1) / 2);
  std::vector<Vec<T>> g_n(k, Vec<T>::Zero(conditions[0].size()));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j)
      if (n[i].dot(n[j]) > epsilon) {
        g_n[i] += scale * n[j];
        g_n[j] += scale * n[i];
      }
  for (std::size_t i = 0; i < k; ++i) g[i] = normalize_backward(conditions[i], g_n[i]);
  return g;
}

template <typename T>
T loss_total(T l_reg, T l_dis, T lambda) {
  return l_reg + lambda * l_dis;
}

// ---------------------------------------------------------------- data

template <typename T>
struct TrainSample {
  std::string sample_id;
  std::string prompt_id;
  std::string method_id;
  std::shared_ptr<const SampleFeatures<T>> features;
  Vec<T> target;  // K MOS values
};

template <typename T>
using SampleSpan = std::span<const TrainSample<T>* const>;

template <typename T>
struct BatchLoss {
  T l_reg{};
  T l_dis{};
  T total{};
  bool dis_warning = false;
};

// Objective weights: L = reg_weight * L_reg + lambda * L_dis.
struct Objective {
  double reg_weight = 1.0;
  double lambda = 1.0;
  double epsilon = 0.0;
};

namespace detail {

template <typename F>
void parallel_for(std::size_t n, int threads, F&& f) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) f(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

// Loss of one mini-batch and, when `grads` is non-null, its analytic gradient
// written into `grads` (overwritten). With threads > 1, per-sample gradients
// are computed concurrently and reduced in sample order.
template <typename T>
BatchLoss<T> loss_and_grad(const HyperScoreModel<T>& model, SampleSpan<T> batch, const Objective& obj,
                           HyperScoreModel<T>* grads, int threads = 1) {
  if (batch.empty()) throw ArgumentError("loss_and_grad: empty batch");
  const int k = model.config().num_conditions();
  const auto cs = model.prepare_conditions();
  const T inv = T(1) / static_cast<T>(batch.size() * k);
  const T reg_w = static_cast<T>(obj.reg_weight);

  BatchLoss<T> out;
  const auto dis = loss_disentangle(cs.features, static_cast<T>(obj.epsilon));
  out.l_dis = dis.value;
  out.dis_warning = dis.warning;

  Mat<T> preds(batch.size(), k);
  Mat<T> targets(batch.size(), k);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b]->target.size() != k) throw DimensionError("target count differs from K for " + batch[b]->sample_id);
    targets.row(b) = batch[b]->target.transpose();
  }

  if (!grads) {
    for (std::size_t b = 0; b < batch.size(); ++b) preds.row(b) = model.forward(*batch[b]->features, cs).transpose();
  } else {
    auto score_grad_for = [&](std::size_t b) {
      return [&, b](int i, T score) { return reg_w * T(2) * (score - targets(b, i)) * inv; };
    };
    SampleGrads<T> acc = model.zero_sample_grads();
    if (threads <= 1) {
      for (std::size_t b = 0; b < batch.size(); ++b)
        preds.row(b) = model.sample_backward(*batch[b]->features, cs, score_grad_for(b), acc).transpose();
    } else {
      std::vector<SampleGrads<T>> per(batch.size());
      detail::parallel_for(batch.size(), threads, [&](std::size_t b) {
        per[b] = model.zero_sample_grads();
        preds.row(b) = model.sample_backward(*batch[b]->features, cs, score_grad_for(b), per[b]).transpose();
      });
      for (const auto& p : per) acc.add(p);
    }
    std::vector<Vec<T>> g_dis = loss_disentangle_backward(cs.features, static_cast<T>(obj.epsilon));
    for (auto& g : g_dis) g *= static_cast<T>(obj.lambda);
    *grads = model.zeros_like();
    model.conditions_backward(cs, acc, g_dis, *grads);
    grads->visit_params([](const ParamRef<T>& p) {
      for (Eigen::Index i = 0; i < p.size; ++i)
        if (!std::isfinite(p.data[i])) throw NumericalError("non-finite gradient in " + p.name);
    });
  }
  out.l_reg = loss_regression(preds, targets);
  out.total = reg_w * out.l_reg + static_cast<T>(obj.lambda) * out.l_dis;
  return out;
}

// ---------------------------------------------------------------- optimizer

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

template <typename T>
AdamState<T> make_adam_state(HyperScoreModel<T>& model, const TrainConfig& cfg) {
  AdamState<T> s;
  s.beta1 = cfg.beta1;
  s.beta2 = cfg.beta2;
  s.eps = cfg.adam_eps;
  s.weight_decay = cfg.weight_decay;
  for (const auto& p : model.parameters()) {
    s.m.emplace_back(p.size, T(0));
    s.v.emplace_back(p.size, T(0));
  }
  return s;
}

// Adam with L2-coupled weight decay (g <- g + wd * p) and a learning rate per
// parameter group.
template <typename T>
void adam_step(HyperScoreModel<T>& model, HyperScoreModel<T>& grads, AdamState<T>& state,
               const std::function<double(ParamGroup)>& lr_for) {
  auto params = model.parameters();
  auto g = grads.parameters();
  if (params.size() != g.size() || params.size() != state.m.size()) throw ArgumentError("adam_step: shape mismatch");
  for (const auto& p : params)
    if (!(lr_for(p.group) > 0.0)) throw ArgumentError(std::string("adam_step: lr must be > 0 for group ") + group_name(p.group));
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].size != g[t].size) throw ArgumentError("adam_step: gradient shape mismatch for " + params[t].name);
    const T lr = static_cast<T>(lr_for(params[t].group));
    const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
    const T wd = static_cast<T>(state.weight_decay), eps = static_cast<T>(state.eps);
    const T c1 = static_cast<T>(bc1), c2 = static_cast<T>(bc2);
    auto& m = state.m[t];
    auto& v = state.v[t];
    T* p = params[t].data;
    const T* gr = g[t].data;
    for (Eigen::Index i = 0; i < params[t].size; ++i) {
      const T gi = gr[i] + wd * p[i];
      m[i] = b1 * m[i] + (T(1) - b1) * gi;
      v[i] = b2 * v[i] + (T(1) - b2) * gi * gi;
      const T mhat = m[i] / c1;
      const T vhat = v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

// Step decay: base * decay^floor(epoch / every), epochs counted from 0.
inline double lr_at_epoch(double base, int epoch, double decay, int every) {
  return base * std::pow(decay, static_cast<double>(epoch / std::max(1, every)));
}

// ---------------------------------------------------------------- splits

struct Fold {
  std::vector<std::string> train_prompts;
  std::vector<std::string> test_prompts;
};

// Prompt-disjoint k-fold split. Prompts are deduplicated, sorted, shuffled
// with the seed, and dealt into k test folds; the first n % k folds get one
// extra prompt.
std::vector<Fold> crossval_split(std::vector<std::string> prompt_ids, int k, std::uint64_t seed);

// ---------------------------------------------------------------- fit

struct EpochRecord {
  int fold = -1;  // -1 for a run on the full dataset
  int epoch = 0;
  double l_reg = 0;
  double l_dis = 0;
  double loss = 0;
  double lr_main = 0;
  double lr_encoder = 0;
};

struct DimensionMetrics {
  double plcc = std::numeric_limits<double>::quiet_NaN();
  double srcc = std::numeric_limits<double>::quiet_NaN();
  double krcc = std::numeric_limits<double>::quiet_NaN();
};

template <typename T>
struct TrainResult {
  HyperScoreModel<T> best;   // snapshot with minimal epoch training loss
  HyperScoreModel<T> last;
  std::vector<EpochRecord> log;
  int best_epoch = -1;
  double best_loss = std::numeric_limits<double>::infinity();
  double initial_l_reg = 0;  // over the training set before the first step
  double final_l_reg = 0;    // of the best snapshot over the training set
};

template <typename T>
Mat<T> predict_samples(const HyperScoreModel<T>& model, SampleSpan<T> samples) {
  const auto cs = model.prepare_conditions();
  Mat<T> preds(samples.size(), model.config().num_conditions());
  for (std::size_t b = 0; b < samples.size(); ++b) preds.row(b) = model.forward(*samples[b]->features, cs).transpose();
  return preds;
}

template <typename T>
double dataset_l_reg(const HyperScoreModel<T>& model, SampleSpan<T> samples) {
  const Mat<T> preds = predict_samples(model, samples);
  Mat<T> targets(samples.size(), model.config().num_conditions());
  for (std::size_t b = 0; b < samples.size(); ++b) targets.row(b) = samples[b]->target.transpose();
  return static_cast<double>(loss_regression(preds, targets));
}

// Deterministic per-epoch permutation of 0..n-1.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

template <typename T>
TrainResult<T> train_model(SampleSpan<T> train, const ModelConfig& model_cfg, const TrainConfig& cfg, int fold = -1,
                           const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  if (train.empty()) throw ConfigError("training set is empty");
  TrainResult<T> r{HyperScoreModel<T>(model_cfg), HyperScoreModel<T>(), {}, -1,
                   std::numeric_limits<double>::infinity(), 0, 0};
  HyperScoreModel<T> model(model_cfg);
  AdamState<T> adam = make_adam_state(model, cfg);
  HyperScoreModel<T> grads = model.zeros_like();
  const Objective obj{1.0, cfg.lambda, cfg.epsilon};
  r.initial_l_reg = dataset_l_reg(model, train);

  std::vector<const TrainSample<T>*> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr_main = lr_at_epoch(cfg.lr_main, epoch, cfg.lr_decay, cfg.lr_decay_every);
    const double lr_enc = lr_at_epoch(cfg.lr_encoder, epoch, cfg.lr_decay, cfg.lr_decay_every);
    const auto order = epoch_order(train.size(), cfg.seed, epoch);
    double sum_reg = 0, sum_dis = 0, sum_loss = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      batch.clear();
      for (std::size_t j = start; j < std::min(order.size(), start + cfg.batch_size); ++j)
        batch.push_back(train[order[j]]);
      const auto loss = loss_and_grad(model, SampleSpan<T>(batch), obj, &grads, cfg.threads);
      const double w = static_cast<double>(batch.size());
      sum_reg += w * static_cast<double>(loss.l_reg);
      sum_dis += w * static_cast<double>(loss.l_dis);
      sum_loss += w * static_cast<double>(loss.total);
      if (lr_main > 0.0)
        adam_step(model, grads, adam, [&](ParamGroup g) { return g == ParamGroup::kEncoderAdapter ? lr_enc : lr_main; });
    }
    const double n = static_cast<double>(train.size());
    EpochRecord rec{fold, epoch, sum_reg / n, sum_dis / n, sum_loss / n, lr_main, lr_enc};
    r.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.loss < r.best_loss) {
      r.best_loss = rec.loss;
      r.best_epoch = epoch;
      r.best = model;
    }
  }
  if (cfg.epochs == 0) r.best = model;
  r.last = model;
  r.final_l_reg = dataset_l_reg(r.best, train);
  return r;
}

// Correlations per dimension; undefined correlations stay NaN.
std::vector<DimensionMetrics> dimension_metrics(const Mat<double>& preds, const Mat<double>& targets);

struct FoldReport {
  int fold = 0;
  std::size_t train_prompts = 0;
  std::size_t test_prompts = 0;
  std::size_t train_samples = 0;
  std::size_t test_samples = 0;
  int best_epoch = -1;
  double best_loss = 0;
  std::vector<DimensionMetrics> metrics;
};

template <typename T>
struct CrossvalResult {
  std::vector<FoldReport> folds;
  std::vector<DimensionMetrics> mean;  // NaN-skipping average over folds
  std::vector<EpochRecord> log;
  std::vector<HyperScoreModel<T>> models;
};

std::vector<DimensionMetrics> average_metrics(const std::vector<FoldReport>& folds);

template <typename T>
CrossvalResult<T> crossval_fit(const std::vector<TrainSample<T>>& dataset, const ModelConfig& model_cfg,
                               const TrainConfig& cfg,
                               const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  if (dataset.empty()) throw ConfigError("dataset is empty");
  std::vector<std::string> prompts;
  for (const auto& s : dataset) prompts.push_back(s.prompt_id);
  const auto folds = crossval_split(prompts, cfg.folds, cfg.seed);
  CrossvalResult<T> out;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const std::set<std::string> test(folds[f].test_prompts.begin(), folds[f].test_prompts.end());
    std::vector<const TrainSample<T>*> train_set, test_set;
    for (const auto& s : dataset) (test.count(s.prompt_id) ? test_set : train_set).push_back(&s);
    if (train_set.empty() || test_set.empty()) throw ConfigError("fold " + std::to_string(f) + " is empty");
    auto r = train_model<T>(SampleSpan<T>(train_set), model_cfg, cfg, static_cast<int>(f), on_epoch);
    const Mat<double> preds = predict_samples(r.best, SampleSpan<T>(test_set)).template cast<double>();
    Mat<double> targets(test_set.size(), model_cfg.num_conditions());
    for (std::size_t b = 0; b < test_set.size(); ++b) targets.row(b) = test_set[b]->target.template cast<double>().transpose();
    FoldReport rep;
    rep.fold = static_cast<int>(f);
    rep.train_prompts = folds[f].train_prompts.size();
    rep.test_prompts = folds[f].test_prompts.size();
    rep.train_samples = train_set.size();
    rep.test_samples = test_set.size();
    rep.best_epoch = r.best_epoch;
    rep.best_loss = r.best_loss;
    rep.metrics = dimension_metrics(preds, targets);
    out.folds.push_back(std::move(rep));
    out.log.insert(out.log.end(), r.log.begin(), r.log.end());
    out.models.push_back(std::move(r.best));
  }
  out.mean = average_metrics(out.folds);
  return out;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckEntry {
  std::string tensor;
  ParamGroup group;
  double max_rel_error = 0;
  Eigen::Index worst_index = 0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> tensors;
  std::map<std::string, double> worst_by_group;
  double threshold = 1e-4;
  bool passed = true;
};

// |a - n| / max(|a|, |n|, floor)
inline double gradcheck_rel_error(double analytic, double numeric, double floor = 1e-6) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

// Central finite differences against loss_and_grad for every trainable entry.
// `corrupt` lets a test tamper with the analytic gradients (negative control).
template <typename T>
GradcheckReport gradcheck(HyperScoreModel<T> model, SampleSpan<T> batch, const Objective& obj, double threshold,
                          double step, const std::function<void(HyperScoreModel<T>&)>& corrupt = {},
                          double floor = 1e-6) {
  GradcheckReport rep;
  rep.threshold = threshold;
  HyperScoreModel<T> grads;
  loss_and_grad(model, batch, obj, &grads);
  if (corrupt) corrupt(grads);
  auto params = model.parameters();
  auto g = grads.parameters();
  for (std::size_t t = 0; t < params.size(); ++t) {
    GradcheckEntry e{params[t].name, params[t].group, 0.0, 0};
    for (Eigen::Index i = 0; i < params[t].size; ++i) {
      T& p = params[t].data[i];
      const T saved = p;
      const T h = static_cast<T>(step * std::max(1.0, std::abs(static_cast<double>(saved))));
      p = saved + h;
      const double up = static_cast<double>(loss_and_grad<T>(model, batch, obj, nullptr).total);
      p = saved - h;
      const double down = static_cast<double>(loss_and_grad<T>(model, batch, obj, nullptr).total);
      p = saved;
      const double numeric = (up - down) / (2.0 * static_cast<double>(h));
      const double err = gradcheck_rel_error(static_cast<double>(g[t].data[i]), numeric, floor);
      if (err > e.max_rel_error) {
        e.max_rel_error = err;
        e.worst_index = i;
      }
    }
    auto& worst = rep.worst_by_group[group_name(e.group)];
    worst = std::max(worst, e.max_rel_error);
    if (!(e.max_rel_error < threshold)) rep.passed = false;
    rep.tensors.push_back(std::move(e));
  }
  return rep;
}

}  // namespace hyperscore
