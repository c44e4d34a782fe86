#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hyperscore/condition_encoder.hpp"
#include "hyperscore/feature_store.hpp"
#include "hyperscore/fusion.hpp"
#include "hyperscore/hypernet_head.hpp"

namespace hyperscore {

struct ModelConfig {
  int dim = 512;            // D
  int quality_dim = 224;    // D_q
  int mlp_hidden = 0;       // 0 -> D
  int prompt_tokens = 12;   // L
  int channels = 112;
  int grid = 7;
  std::vector<int> head_widths;  // empty -> D_q halved three times, then 1
  int encoder_rank = 32;
  std::uint64_t seed = 0;
  std::uint64_t encoder_seed = 0x5eedULL;
  Activation mlp_activation = Activation::kGelu;
  std::vector<std::string> dimension_names{"alignment", "geometry", "texture", "overall"};

  int num_conditions() const { return static_cast<int>(dimension_names.size()); }
  int hidden() const { return mlp_hidden > 0 ? mlp_hidden : dim; }
  std::vector<int> resolved_head_widths() const {
    if (!head_widths.empty()) return head_widths;
    return {quality_dim, std::max(1, quality_dim / 2), std::max(1, quality_dim / 4), std::max(1, quality_dim / 8), 1};
  }
  HypernetShape hypernet_shape() const { return {dim, channels, grid, resolved_head_widths()}; }
  void validate() const;
};

enum class ParamGroup { kPrompt, kFusion, kHypernet, kEncoderAdapter, kFrozen };

const char* group_name(ParamGroup g);

template <typename T>
struct ParamRef {
  std::string name;
  ParamGroup group;
  T* data;
  Eigen::Index size;
  std::vector<Eigen::Index> shape;
};

// Precomputed, frozen per-sample quantities.
template <typename T>
struct SampleFeatures {
  Mat<T> views;   // (M N_v) x D, raw
  Vec<T> eot;     // raw EOT token
  Mat<T> text_normed;
  Mat<T> i_v2t;   // (M N_v) x N_t

  static SampleFeatures from_bundle(const FeatureBundle& b) {
    SampleFeatures s;
    s.views = concat_views<T>(b);
    const Mat<T> text = b.text_tokens.template cast<T>();
    s.eot = text.row(b.eot_index).transpose();
    s.text_normed = normalize_rows(text);
    s.i_v2t = correlation_v2t(normalize_rows(s.views), s.text_normed);
    return s;
  }
};

// Per-condition state shared by every sample in a step.
template <typename T>
struct ConditionState {
  std::vector<Vec<T>> features;  // f_c^i
  std::vector<Vec<T>> normed;
  std::vector<MappingHeadParams<T>> heads;
  std::vector<HypernetCache<T>> caches;
};

template <typename T>
struct DimensionCache {
  Vec<T> i_t2c;
  FusionResult<T> fusion;
  MlpCache<T> mlp;
  HeadCache<T> head;
  T score{};
};

// Gradients of one sample's scores that are reduced across a batch.
template <typename T>
struct SampleGrads {
  FusionMlp<T> mlp;
  std::vector<MappingHeadParams<T>> heads;
  std::vector<Vec<T>> cond_normed;

  void add(const SampleGrads& o) {
    mlp.w1 += o.mlp.w1;
    mlp.b1 += o.mlp.b1;
    mlp.w2 += o.mlp.w2;
    mlp.b2 += o.mlp.b2;
    for (std::size_t i = 0; i < heads.size(); ++i) {
      for (int l = 0; l < heads[i].num_layers(); ++l) {
        heads[i].weights[l] += o.heads[i].weights[l];
        heads[i].biases[l] += o.heads[i].biases[l];
      }
      cond_normed[i] += o.cond_normed[i];
    }
  }
};

template <typename T>
class HyperScoreModel {
 public:
  HyperScoreModel() = default;

  // Fresh parameters drawn from config.seed.
  explicit HyperScoreModel(const ModelConfig& config) : config_(config) {
    config_.validate();
    const CounterRng root(config_.seed);
    prompts_ = init_learnable_tokens<T>(config_.seed, config_.dimension_names, config_.prompt_tokens, config_.dim);
    mlp_ = init_fusion_mlp<T>(root.child("fusion"), config_.dim, config_.hidden(), config_.quality_dim);
    mlp_.activation = config_.mlp_activation;
    hypernet_ = init_hypernet<T>(root.child("hypernet"), config_.hypernet_shape());
    encoder_ = std::make_shared<ToyTextEncoder<T>>(config_.dim, 1 + config_.prompt_tokens, config_.encoder_rank,
                                                   config_.encoder_seed);
  }

  // Same shapes, every trainable entry zero. Used as a gradient buffer.
  HyperScoreModel zeros_like() const {
    HyperScoreModel z = *this;
    z.visit_params([](const ParamRef<T>& p) { std::fill(p.data, p.data + p.size, T(0)); }, true);
    return z;
  }

  template <typename U>
  HyperScoreModel<U> cast() const {
    HyperScoreModel<U> m;
    m.config_ = config_;
    m.prompts_ = prompts_.template cast<U>();
    m.mlp_ = mlp_.template cast<U>();
    m.hypernet_ = hypernet_.template cast<U>();
    m.encoder_ = std::make_shared<ToyTextEncoder<U>>(config_.dim, 1 + config_.prompt_tokens, config_.encoder_rank,
                                                     config_.encoder_seed);
    return m;
  }

  const ModelConfig& config() const { return config_; }
  ConditionPromptSet<T>& prompts() { return prompts_; }
  const ConditionPromptSet<T>& prompts() const { return prompts_; }
  FusionMlp<T>& mlp() { return mlp_; }
  const FusionMlp<T>& mlp() const { return mlp_; }
  HyperNetParams<T>& hypernet() { return hypernet_; }
  const HyperNetParams<T>& hypernet() const { return hypernet_; }
  const TextEncoder<T>& encoder() const { return *encoder_; }
  void set_encoder(std::shared_ptr<const TextEncoder<T>> enc) { encoder_ = std::move(enc); }

  // Visits trainable tensors in a fixed order; frozen ones (meta tokens)
  // only when include_frozen is set.
  void visit_params(const std::function<void(const ParamRef<T>&)>& f, bool include_frozen = false) {
    auto mat = [&](const std::string& n, ParamGroup g, auto& m) {
      f({n, g, m.data(), m.size(), {m.rows(), m.cols()}});
    };
    auto vec = [&](const std::string& n, ParamGroup g, auto& v) { f({n, g, v.data(), v.size(), {v.size()}}); };
    if (include_frozen) mat("prompt.meta", ParamGroup::kFrozen, prompts_.meta);
    mat("prompt.learnable", ParamGroup::kPrompt, prompts_.learnable);
    mat("fusion.fc1.weight", ParamGroup::kFusion, mlp_.w1);
    vec("fusion.fc1.bias", ParamGroup::kFusion, mlp_.b1);
    mat("fusion.fc2.weight", ParamGroup::kFusion, mlp_.w2);
    vec("fusion.fc2.bias", ParamGroup::kFusion, mlp_.b2);
    mat("hyper.transform.weight", ParamGroup::kHypernet, hypernet_.trans_w);
    vec("hyper.transform.bias", ParamGroup::kHypernet, hypernet_.trans_b);
    for (std::size_t l = 0; l < hypernet_.layers.size(); ++l) {
      auto& g = hypernet_.layers[l];
      const std::string p = "hyper.fc" + std::to_string(l + 1);
      if (g.conv_w.size() > 0) {
        mat(p + ".weight_conv.kernel", ParamGroup::kHypernet, g.conv_w);
        vec(p + ".weight_conv.bias", ParamGroup::kHypernet, g.conv_b);
      } else {
        mat(p + ".weight_pool.weight", ParamGroup::kHypernet, g.pool_w);
        vec(p + ".weight_pool.bias", ParamGroup::kHypernet, g.pool_b);
      }
      mat(p + ".bias_gen.weight", ParamGroup::kHypernet, g.bias_w);
      vec(p + ".bias_gen.bias", ParamGroup::kHypernet, g.bias_b);
    }
  }

  std::vector<ParamRef<T>> parameters(bool include_frozen = false) {
    std::vector<ParamRef<T>> out;
    visit_params([&](const ParamRef<T>& p) { out.push_back(p); }, include_frozen);
    return out;
  }

  ConditionState<T> prepare_conditions() const {
    ConditionState<T> s;
    s.features = encode_conditions(prompts_, *encoder_);
    for (const auto& f : s.features) {
      s.normed.push_back(normalize(f));
      HypernetCache<T> c;
      s.heads.push_back(generate_params(f, hypernet_, &c));
      s.caches.push_back(std::move(c));
    }
    return s;
  }

  // Score of dimension i for one sample.
  T forward_dimension(const SampleFeatures<T>& x, const ConditionState<T>& cs, int i,
                      DimensionCache<T>* cache = nullptr) const {
    DimensionCache<T> local;
    DimensionCache<T>& c = cache ? *cache : local;
    c.i_t2c = correlation_t2c(x.text_normed, cs.normed[i]);
    c.fusion = fuse_conditional(x.i_v2t, c.i_t2c, x.views);
    c.mlp = mlp_forward(mlp_, (c.fusion.fused.array() * x.eot.array()).matrix().eval());
    c.score = mapping_forward(c.mlp.output, cs.heads[i], &c.head);
    return c.score;
  }

  Vec<T> forward(const SampleFeatures<T>& x, const ConditionState<T>& cs) const {
    Vec<T> out(config_.num_conditions());
    for (int i = 0; i < config_.num_conditions(); ++i) out[i] = forward_dimension(x, cs, i);
    return out;
  }

  SampleGrads<T> zero_sample_grads() const {
    SampleGrads<T> g;
    g.mlp = FusionMlp<T>::zeros(config_.dim, config_.hidden(), config_.quality_dim);
    for (int i = 0; i < config_.num_conditions(); ++i) {
      g.heads.push_back(MappingHeadParams<T>::zeros(config_.resolved_head_widths()));
      g.cond_normed.push_back(Vec<T>::Zero(config_.dim));
    }
    return g;
  }

  // Forward + backward of sum_i g_score(i, score_i) for one sample. Returns the scores.
  template <typename ScoreGrad>
  Vec<T> sample_backward(const SampleFeatures<T>& x, const ConditionState<T>& cs, ScoreGrad&& score_grad,
                         SampleGrads<T>& acc) const {
    const int k = config_.num_conditions();
    Vec<T> scores(k);
    DimensionCache<T> c;
    MappingHeadParams<T> g_head = MappingHeadParams<T>::zeros(config_.resolved_head_widths());
    for (int i = 0; i < k; ++i) {
      scores[i] = forward_dimension(x, cs, i, &c);
      const T g = score_grad(i, scores[i]);
      const Vec<T> g_q = mapping_backward(cs.heads[i], c.head, g, g_head);
      for (int l = 0; l < g_head.num_layers(); ++l) {
        acc.heads[i].weights[l] += g_head.weights[l];
        acc.heads[i].biases[l] += g_head.biases[l];
      }
      const Vec<T> g_u = mlp_backward(mlp_, c.mlp, g_q, acc.mlp);
      const Vec<T> g_fused = g_u.array() * x.eot.array();
      const Vec<T> g_w = x.views * g_fused;
      const Vec<T> g_logits = c.fusion.weights.array() * (g_w.array() - c.fusion.weights.dot(g_w));
      const Vec<T> g_t2c = x.i_v2t.transpose() * g_logits;
      acc.cond_normed[i].noalias() += x.text_normed.transpose() * g_t2c;
    }
    return scores;
  }

  // Pushes reduced per-condition gradients back to the trainable tensors of
  // `grads`. extra_cond_grad[i] is any additional d/d(f_c^i), e.g. from L_dis.
  void conditions_backward(const ConditionState<T>& cs, const SampleGrads<T>& acc,
                           const std::vector<Vec<T>>& extra_cond_grad, HyperScoreModel& grads) const {
    grads.mlp_.w1 += acc.mlp.w1;
    grads.mlp_.b1 += acc.mlp.b1;
    grads.mlp_.w2 += acc.mlp.w2;
    grads.mlp_.b2 += acc.mlp.b2;
    std::vector<Vec<T>> g_cond(config_.num_conditions());
    for (int i = 0; i < config_.num_conditions(); ++i) {
      g_cond[i] = normalize_backward(cs.features[i], acc.cond_normed[i]);
      g_cond[i] += generate_params_backward(cs.features[i], hypernet_, cs.caches[i], acc.heads[i], grads.hypernet_);
      if (!extra_cond_grad.empty()) g_cond[i] += extra_cond_grad[i];
    }
    encode_conditions_backward(prompts_, *encoder_, g_cond, grads.prompts_.learnable);
  }

 private:
  template <typename U>
  friend class HyperScoreModel;

  ModelConfig config_;
  ConditionPromptSet<T> prompts_;
  FusionMlp<T> mlp_;
  HyperNetParams<T> hypernet_;
  std::shared_ptr<const TextEncoder<T>> encoder_;
};

inline void ModelConfig::validate() const {
  if (dim < 1 || quality_dim < 1 || prompt_tokens < 1 || channels < 1 || grid < 1 || encoder_rank < 1)
    throw ConfigError("model dims must be >= 1");
  if (dimension_names.empty()) throw ConfigError("at least one evaluation dimension required");
  const auto w = resolved_head_widths();
  if (w.front() != quality_dim) throw ConfigError("head input width must equal quality_dim");
  hypernet_shape().validate();
}

inline const char* group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::kPrompt: return "learnable_tokens";
    case ParamGroup::kFusion: return "fusion_mlp";
    case ParamGroup::kHypernet: return "hypernetwork";
    case ParamGroup::kEncoderAdapter: return "encoder_adapter";
    case ParamGroup::kFrozen: return "frozen";
  }
  return "unknown";
}

// Runs condition encoding, fusion, parameter generation and the mapping head
// for every dimension. Scores follow the manifest dimension order.
template <typename T>
Vec<T> predict_all(const FeatureBundle& bundle, const HyperScoreModel<T>& model) {
  bundle.validate();
  if (static_cast<int>(bundle.dims().dim) != model.config().dim)
    throw DimensionError("bundle feature width differs from model D");
  const auto cs = model.prepare_conditions();
  return model.forward(SampleFeatures<T>::from_bundle(bundle), cs);
}

}  // namespace hyperscore
