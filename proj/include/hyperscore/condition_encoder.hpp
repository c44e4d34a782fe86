#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hyperscore/rng.hpp"
#include "hyperscore/tensor.hpp"

namespace hyperscore {

// K tokenized condition prompts: one frozen meta token followed by L
// learnable tokens per evaluation dimension.
template <typename T>
struct ConditionPromptSet {
  Mat<T> meta;       // K x D, frozen
  Mat<T> learnable;  // (K * L) x D, row i * L + l is token l of prompt i
  int tokens_per_prompt = 1;  // L

  int count() const { return static_cast<int>(meta.rows()); }
  int dim() const { return static_cast<int>(meta.cols()); }

  // [meta_i; learnable_i,1..L] as a (1 + L) x D sequence.
  Mat<T> sequence(int i) const {
    Mat<T> seq(1 + tokens_per_prompt, dim());
    seq.row(0) = meta.row(i);
    seq.bottomRows(tokens_per_prompt) = learnable.middleRows(i * tokens_per_prompt, tokens_per_prompt);
    return seq;
  }

  template <typename U>
  ConditionPromptSet<U> cast() const {
    return {meta.template cast<U>(), learnable.template cast<U>(), tokens_per_prompt};
  }
};

// Toy embedding of a meta text: a seeded vector in [-1, 1]^D keyed by the text.
template <typename T>
Vec<T> embed_meta_text(const std::string& text, int dim) {
  const CounterRng rng(CounterRng::fnv1a(text));
  Vec<T> v(dim);
  for (int j = 0; j < dim; ++j) v[j] = static_cast<T>(rng.symmetric(j));
  return v;
}

// Learnable tokens ~ N(0, 0.02^2), meta tokens embedded from the dimension names.
template <typename T>
ConditionPromptSet<T> init_learnable_tokens(std::uint64_t seed, const std::vector<std::string>& names,
                                            int tokens, int dim, double stddev = 0.02) {
  const int k = static_cast<int>(names.size());
  if (k < 1 || tokens < 1 || dim < 1) throw ArgumentError("init_learnable_tokens: K, L, D must be >= 1");
  ConditionPromptSet<T> p;
  p.tokens_per_prompt = tokens;
  p.meta.resize(k, dim);
  for (int i = 0; i < k; ++i) p.meta.row(i) = embed_meta_text<T>(names[i], dim).transpose();
  const CounterRng rng = CounterRng(seed).child("prompt.learnable");
  p.learnable.resize(static_cast<Eigen::Index>(k) * tokens, dim);
  for (Eigen::Index i = 0; i < p.learnable.size(); ++i)
    p.learnable.data()[i] = static_cast<T>(stddev * rng.normal(i));
  return p;
}

// Frozen text encoder: maps a token sequence (S x D) to one D-vector.
// backward() returns the vector-Jacobian product with respect to the input
// sequence; the encoder's own parameters never receive gradient.
template <typename T>
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual int dim() const = 0;
  virtual Vec<T> encode(const Mat<T>& sequence) const = 0;
  virtual Mat<T> backward(const Mat<T>& sequence, const Vec<T>& grad_out) const = 0;
};

// Mean of the input tokens. Used as a transparent plug-in in tests.
template <typename T>
class MeanTokenEncoder final : public TextEncoder<T> {
 public:
  explicit MeanTokenEncoder(int dim) : dim_(dim) {}
  int dim() const override { return dim_; }
  Vec<T> encode(const Mat<T>& seq) const override { return seq.colwise().mean().transpose(); }
  Mat<T> backward(const Mat<T>& seq, const Vec<T>& g) const override {
    Mat<T> out(seq.rows(), seq.cols());
    out.rowwise() = (g / static_cast<T>(seq.rows())).transpose();
    return out;
  }

 private:
  int dim_;
};

// Position-weighted low-rank mixing:
//   x = concat_s(scale_s * token_s),  out = tanh(U (V x)),
// scale_s = 1 / sqrt(1 + s). V is rank x (S * D), U is D x rank, both frozen.
template <typename T>
class ToyTextEncoder final : public TextEncoder<T> {
 public:
  ToyTextEncoder(int dim, int seq_len, int rank, std::uint64_t seed)
      : dim_(dim), seq_len_(seq_len), rank_(rank) {
    if (dim < 1 || seq_len < 1 || rank < 1) throw ArgumentError("ToyTextEncoder: sizes must be >= 1");
    const CounterRng root(seed);
    const CounterRng rv = root.child("encoder.down");
    const CounterRng ru = root.child("encoder.up");
    down_.resize(rank, static_cast<Eigen::Index>(seq_len) * dim);
    up_.resize(dim, rank);
    const double sv = 1.0 / std::sqrt(static_cast<double>(dim));
    const double su = 1.0 / std::sqrt(static_cast<double>(rank));
    for (Eigen::Index i = 0; i < down_.size(); ++i) down_.data()[i] = static_cast<T>(sv * rv.normal(i));
    for (Eigen::Index i = 0; i < up_.size(); ++i) up_.data()[i] = static_cast<T>(su * ru.normal(i));
  }

  int dim() const override { return dim_; }
  int seq_len() const { return seq_len_; }
  int rank() const { return rank_; }
  const Mat<T>& down() const { return down_; }
  const Mat<T>& up() const { return up_; }

  static T position_scale(int s) { return T(1) / std::sqrt(T(1 + s)); }

  Vec<T> encode(const Mat<T>& seq) const override {
    check(seq);
    return (up_ * (down_ * flatten(seq))).array().tanh().matrix();
  }

  Mat<T> backward(const Mat<T>& seq, const Vec<T>& g) const override {
    check(seq);
    const Vec<T> out = encode(seq);
    const Vec<T> g_pre = g.array() * (T(1) - out.array().square());
    const Vec<T> g_x = down_.transpose() * (up_.transpose() * g_pre);
    Mat<T> g_seq(seq_len_, dim_);
    for (int s = 0; s < seq_len_; ++s)
      g_seq.row(s) = position_scale(s) * g_x.segment(static_cast<Eigen::Index>(s) * dim_, dim_).transpose();
    return g_seq;
  }

 private:
  void check(const Mat<T>& seq) const {
    if (seq.rows() != seq_len_ || seq.cols() != dim_)
      throw ArgumentError("ToyTextEncoder: expected " + std::to_string(seq_len_) + "x" +
                          std::to_string(dim_) + " sequence");
  }

  Vec<T> flatten(const Mat<T>& seq) const {
    Vec<T> x(static_cast<Eigen::Index>(seq_len_) * dim_);
    for (int s = 0; s < seq_len_; ++s)
      x.segment(static_cast<Eigen::Index>(s) * dim_, dim_) = position_scale(s) * seq.row(s).transpose();
    return x;
  }

  int dim_;
  int seq_len_;
  int rank_;
  Mat<T> down_;
  Mat<T> up_;
};

// One condition feature per prompt, in prompt order.
template <typename T>
std::vector<Vec<T>> encode_conditions(const ConditionPromptSet<T>& prompts, const TextEncoder<T>& encoder) {
  if (prompts.dim() != encoder.dim()) throw ArgumentError("encode_conditions: prompt and encoder D differ");
  std::vector<Vec<T>> out;
  out.reserve(prompts.count());
  for (int i = 0; i < prompts.count(); ++i) out.push_back(encoder.encode(prompts.sequence(i)));
  return out;
}

// Accumulates d(loss)/d(learnable tokens) given d(loss)/d(f_c^i) for each i.
// Meta-token gradients are dropped.
template <typename T>
void encode_conditions_backward(const ConditionPromptSet<T>& prompts, const TextEncoder<T>& encoder,
                                const std::vector<Vec<T>>& grad_conditions, Mat<T>& grad_learnable) {
  const int l = prompts.tokens_per_prompt;
  for (int i = 0; i < prompts.count(); ++i) {
    const Mat<T> g_seq = encoder.backward(prompts.sequence(i), grad_conditions[i]);
    grad_learnable.middleRows(static_cast<Eigen::Index>(i) * l, l) += g_seq.bottomRows(l);
  }
}

}  // namespace hyperscore
