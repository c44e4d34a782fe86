#pragma once

#include <cstdint>
#include <string>

#include "hyperscore/rng.hpp"
#include "hyperscore/tensor.hpp"

namespace hyperscore {

inline constexpr double kMinFeatureNorm = 1e-12;

// L2-normalizes every row. Rows with norm below 1e-12 are rejected.
template <typename T>
Mat<T> normalize_rows(const Mat<T>& x) {
  if (!x.allFinite()) throw DataError("normalize_rows: non-finite input");
  Mat<T> out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const T n = x.row(r).norm();
    if (!(n >= T(kMinFeatureNorm))) throw DegenerateFeatureError("feature row " + std::to_string(r) + " has zero norm");
    out.row(r) = x.row(r) / n;
  }
  return out;
}

template <typename T>
Vec<T> normalize(const Vec<T>& x) {
  const T n = x.norm();
  if (!(n >= T(kMinFeatureNorm))) throw DegenerateFeatureError("feature vector has zero norm");
  return x / n;
}

// Gradient through y = x / |x| per row, given the input and the upstream grad.
template <typename T>
Mat<T> normalize_rows_backward(const Mat<T>& x, const Mat<T>& grad_out) {
  Mat<T> g(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const T n = x.row(r).norm();
    const auto y = x.row(r) / n;
    g.row(r) = (grad_out.row(r) - y * y.dot(grad_out.row(r))) / n;
  }
  return g;
}

template <typename T>
Vec<T> normalize_backward(const Vec<T>& x, const Vec<T>& grad_out) {
  const T n = x.norm();
  const Vec<T> y = x / n;
  return (grad_out - y * y.dot(grad_out)) / n;
}

// Patch-to-token cosine matrix, (M N_v) x N_t.
template <typename T>
Mat<T> correlation_v2t(const Mat<T>& views_normed, const Mat<T>& text_normed) {
  if (views_normed.cols() != text_normed.cols()) throw ArgumentError("correlation_v2t: feature widths differ");
  return views_normed * text_normed.transpose();
}

// Token-to-condition cosine vector, length N_t.
template <typename T>
Vec<T> correlation_t2c(const Mat<T>& text_normed, const Vec<T>& condition_normed) {
  if (text_normed.cols() != condition_normed.size()) throw ArgumentError("correlation_t2c: feature widths differ");
  return text_normed * condition_normed;
}

template <typename T>
struct FusionResult {
  Vec<T> weights;  // softmax over all M N_v patches
  Vec<T> fused;    // D
};

// Softmax(I_v2t I_t2c) weighted sum of the raw (unnormalized) patch features.
template <typename T>
FusionResult<T> fuse_conditional(const Mat<T>& i_v2t, const Vec<T>& i_t2c, const Mat<T>& views) {
  if (i_v2t.cols() != i_t2c.size() || i_v2t.rows() != views.rows())
    throw ArgumentError("fuse_conditional: shape mismatch");
  const Vec<T> logits = i_v2t * i_t2c;
  Vec<T> w = (logits.array() - logits.maxCoeff()).exp().matrix();
  w /= w.sum();
  Vec<T> fused = views.transpose() * w;
  return {std::move(w), std::move(fused)};
}

template <typename T>
struct FusionGrad {
  Mat<T> i_v2t;
  Vec<T> i_t2c;
  Mat<T> views;
};

template <typename T>
FusionGrad<T> fuse_conditional_backward(const Mat<T>& i_v2t, const Vec<T>& i_t2c, const Mat<T>& views,
                                        const FusionResult<T>& fwd, const Vec<T>& grad_fused) {
  FusionGrad<T> g;
  g.views = fwd.weights * grad_fused.transpose();
  const Vec<T> g_w = views * grad_fused;
  const Vec<T> g_logits = fwd.weights.array() * (g_w.array() - fwd.weights.dot(g_w));
  g.i_v2t = g_logits * i_t2c.transpose();
  g.i_t2c = i_v2t.transpose() * g_logits;
  return g;
}

enum class Activation { kGelu, kIdentity };

// Two affine layers D -> hidden -> D_q, activation after the first.
// Weights are stored (in x out): y = x W + b.
template <typename T>
struct FusionMlp {
  Mat<T> w1;
  Vec<T> b1;
  Mat<T> w2;
  Vec<T> b2;
  Activation activation = Activation::kGelu;

  int in_dim() const { return static_cast<int>(w1.rows()); }
  int out_dim() const { return static_cast<int>(w2.cols()); }

  static FusionMlp zeros(int in, int hidden, int out) {
    return {Mat<T>::Zero(in, hidden), Vec<T>::Zero(hidden), Mat<T>::Zero(hidden, out), Vec<T>::Zero(out)};
  }

  template <typename U>
  FusionMlp<U> cast() const {
    return {w1.template cast<U>(), b1.template cast<U>(), w2.template cast<U>(), b2.template cast<U>(), activation};
  }
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
template <typename T>
void fill_affine(Mat<T>& w, Vec<T>& b, const CounterRng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(w.rows()));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(bound * rng.symmetric(i));
  const std::uint64_t off = static_cast<std::uint64_t>(w.size());
  for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = static_cast<T>(bound * rng.symmetric(off + i));
}

template <typename T>
FusionMlp<T> init_fusion_mlp(const CounterRng& rng, int in, int hidden, int out) {
  auto mlp = FusionMlp<T>::zeros(in, hidden, out);
  fill_affine(mlp.w1, mlp.b1, rng.child("fc1"));
  fill_affine(mlp.w2, mlp.b2, rng.child("fc2"));
  return mlp;
}

template <typename T>
struct MlpCache {
  Vec<T> input;
  Vec<T> pre;     // first-layer pre-activation
  Vec<T> hidden;  // activation(pre)
  Vec<T> output;
};

template <typename T>
MlpCache<T> mlp_forward(const FusionMlp<T>& mlp, const Vec<T>& x) {
  if (x.size() != mlp.in_dim()) throw ArgumentError("mlp_forward: input width mismatch");
  MlpCache<T> c;
  c.input = x;
  c.pre = mlp.w1.transpose() * x + mlp.b1;
  c.hidden = mlp.activation == Activation::kGelu ? c.pre.unaryExpr([](T v) { return gelu(v); }).eval() : c.pre;
  c.output = mlp.w2.transpose() * c.hidden + mlp.b2;
  return c;
}

// Accumulates parameter gradients into `grad` and returns d/d(input).
template <typename T>
Vec<T> mlp_backward(const FusionMlp<T>& mlp, const MlpCache<T>& c, const Vec<T>& g_out, FusionMlp<T>& grad) {
  grad.w2.noalias() += c.hidden * g_out.transpose();
  grad.b2 += g_out;
  Vec<T> g_hidden = mlp.w2 * g_out;
  if (mlp.activation == Activation::kGelu)
    g_hidden.array() *= c.pre.unaryExpr([](T v) { return gelu_grad(v); }).array();
  grad.w1.noalias() += c.input * g_hidden.transpose();
  grad.b1 += g_hidden;
  return mlp.w1 * g_hidden;
}

// f_q = MLP(f_vc ⊙ f_t^eot), the EOT vector taken un-normalized.
template <typename T>
Vec<T> quality_feature(const Vec<T>& fused, const Vec<T>& eot, const FusionMlp<T>& mlp) {
  if (fused.size() != eot.size()) throw ArgumentError("quality_feature: fused and EOT widths differ");
  return mlp_forward(mlp, Vec<T>(fused.array() * eot.array())).output;
}

}  // namespace hyperscore
