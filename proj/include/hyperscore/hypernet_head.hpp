#pragma once

#include <string>
#include <vector>

#include "hyperscore/fusion.hpp"
#include "hyperscore/rng.hpp"
#include "hyperscore/tensor.hpp"

namespace hyperscore {

struct HypernetShape {
  int cond_dim = 512;                             // D
  int channels = 112;                             // transformation output is channels x grid x grid
  int grid = 7;
  std::vector<int> head_widths{224, 112, 56, 28, 1};  // mapping head chain, last must be 1

  int transform_size() const { return channels * grid * grid; }
  int num_layers() const { return static_cast<int>(head_widths.size()) - 1; }
  int fan_in(int layer) const { return head_widths[layer]; }
  int fan_out(int layer) const { return head_widths[layer + 1]; }
  // A layer's weight comes from the 3x3 conv when in * out is a multiple of
  // grid^2; otherwise from the pooled affine path.
  bool conv_generated(int layer) const { return (fan_in(layer) * fan_out(layer)) % (grid * grid) == 0; }
  int conv_channels(int layer) const { return fan_in(layer) * fan_out(layer) / (grid * grid); }

  void validate() const {
    if (cond_dim < 1 || channels < 1 || grid < 1) throw ArgumentError("hypernet: sizes must be >= 1");
    if (head_widths.size() < 2) throw ArgumentError("hypernet: head needs at least one layer");
    for (int w : head_widths)
      if (w < 1) throw ArgumentError("hypernet: head widths must be >= 1");
    if (head_widths.back() != 1) throw ArgumentError("hypernet: head must end in a single output");
  }
};

// Generated parameters of the mapping head, weights stored (in x out).
template <typename T>
struct MappingHeadParams {
  std::vector<Mat<T>> weights;
  std::vector<Vec<T>> biases;

  int num_layers() const { return static_cast<int>(weights.size()); }

  static MappingHeadParams zeros(const std::vector<int>& widths) {
    MappingHeadParams p;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      p.weights.push_back(Mat<T>::Zero(widths[l], widths[l + 1]));
      p.biases.push_back(Vec<T>::Zero(widths[l + 1]));
    }
    return p;
  }
};

template <typename T>
struct LayerGenerator {
  // conv path: kernel (out_channels x channels*9), row-major over (ch, kr, kc)
  Mat<T> conv_w;
  Vec<T> conv_b;
  // pooled path: affine channels -> in*out
  Mat<T> pool_w;
  Vec<T> pool_b;
  // bias: affine channels -> out
  Mat<T> bias_w;
  Vec<T> bias_b;
};

template <typename T>
struct HyperNetParams {
  HypernetShape shape;
  Mat<T> trans_w;  // D x (C G G)
  Vec<T> trans_b;
  std::vector<LayerGenerator<T>> layers;

  static HyperNetParams zeros(const HypernetShape& s) {
    s.validate();
    HyperNetParams p;
    p.shape = s;
    p.trans_w = Mat<T>::Zero(s.cond_dim, s.transform_size());
    p.trans_b = Vec<T>::Zero(s.transform_size());
    for (int l = 0; l < s.num_layers(); ++l) {
      LayerGenerator<T> g;
      if (s.conv_generated(l)) {
        g.conv_w = Mat<T>::Zero(s.conv_channels(l), s.channels * 9);
        g.conv_b = Vec<T>::Zero(s.conv_channels(l));
      } else {
        g.pool_w = Mat<T>::Zero(s.channels, s.fan_in(l) * s.fan_out(l));
        g.pool_b = Vec<T>::Zero(s.fan_in(l) * s.fan_out(l));
      }
      g.bias_w = Mat<T>::Zero(s.channels, s.fan_out(l));
      g.bias_b = Vec<T>::Zero(s.fan_out(l));
      p.layers.push_back(std::move(g));
    }
    return p;
  }

  template <typename U>
  HyperNetParams<U> cast() const {
    HyperNetParams<U> p;
    p.shape = shape;
    p.trans_w = trans_w.template cast<U>();
    p.trans_b = trans_b.template cast<U>();
    for (const auto& g : layers)
      p.layers.push_back({g.conv_w.template cast<U>(), g.conv_b.template cast<U>(), g.pool_w.template cast<U>(),
                          g.pool_b.template cast<U>(), g.bias_w.template cast<U>(), g.bias_b.template cast<U>()});
    return p;
  }
};

template <typename T>
HyperNetParams<T> init_hypernet(const CounterRng& rng, const HypernetShape& shape) {
  auto p = HyperNetParams<T>::zeros(shape);
  fill_affine(p.trans_w, p.trans_b, rng.child("transform"));
  for (int l = 0; l < shape.num_layers(); ++l) {
    auto& g = p.layers[l];
    const CounterRng lr = rng.child("layer" + std::to_string(l));
    if (shape.conv_generated(l))
      fill_affine(g.conv_w, g.conv_b, lr.child("conv"));
    else
      fill_affine(g.pool_w, g.pool_b, lr.child("pool"));
    fill_affine(g.bias_w, g.bias_b, lr.child("bias"));
  }
  return p;
}

namespace detail {

// 3x3, stride 1, zero padding 1 patch matrix: (C*9) x (G*G).
template <typename T>
Mat<T> im2col3x3(const Vec<T>& grid_values, int channels, int grid) {
  Mat<T> cols = Mat<T>::Zero(static_cast<Eigen::Index>(channels) * 9, grid * grid);
  for (int ch = 0; ch < channels; ++ch)
    for (int kr = 0; kr < 3; ++kr)
      for (int kc = 0; kc < 3; ++kc) {
        const Eigen::Index row = static_cast<Eigen::Index>(ch) * 9 + kr * 3 + kc;
        for (int r = 0; r < grid; ++r) {
          const int sr = r + kr - 1;
          if (sr < 0 || sr >= grid) continue;
          for (int c = 0; c < grid; ++c) {
            const int sc = c + kc - 1;
            if (sc < 0 || sc >= grid) continue;
            cols(row, r * grid + c) = grid_values[(static_cast<Eigen::Index>(ch) * grid + sr) * grid + sc];
          }
        }
      }
  return cols;
}

template <typename T>
void col2im3x3_add(const Mat<T>& g_cols, int channels, int grid, Vec<T>& g_grid) {
  for (int ch = 0; ch < channels; ++ch)
    for (int kr = 0; kr < 3; ++kr)
      for (int kc = 0; kc < 3; ++kc) {
        const Eigen::Index row = static_cast<Eigen::Index>(ch) * 9 + kr * 3 + kc;
        for (int r = 0; r < grid; ++r) {
          const int sr = r + kr - 1;
          if (sr < 0 || sr >= grid) continue;
          for (int c = 0; c < grid; ++c) {
            const int sc = c + kc - 1;
            if (sc < 0 || sc >= grid) continue;
            g_grid[(static_cast<Eigen::Index>(ch) * grid + sr) * grid + sc] += g_cols(row, r * grid + c);
          }
        }
      }
}

template <typename T>
Vec<T> global_avg_pool(const Vec<T>& grid_values, int channels, int grid) {
  const Eigen::Map<const Mat<T>> t(grid_values.data(), channels, grid * grid);
  return t.rowwise().mean();
}

}  // namespace detail

template <typename T>
struct HypernetCache {
  Vec<T> transformed;  // C*G*G
  Mat<T> cols;         // im2col of transformed
  Vec<T> pooled;       // C
};

template <typename T>
MappingHeadParams<T> generate_params(const Vec<T>& condition, const HyperNetParams<T>& hp,
                                     HypernetCache<T>* cache = nullptr) {
  const auto& s = hp.shape;
  if (condition.size() != s.cond_dim) throw ArgumentError("generate_params: condition width mismatch");
  if (!condition.allFinite()) throw DataError("generate_params: non-finite condition feature");
  HypernetCache<T> local;
  HypernetCache<T>& c = cache ? *cache : local;
  c.transformed = hp.trans_w.transpose() * condition + hp.trans_b;
  c.cols = detail::im2col3x3(c.transformed, s.channels, s.grid);
  c.pooled = detail::global_avg_pool(c.transformed, s.channels, s.grid);

  MappingHeadParams<T> out;
  for (int l = 0; l < s.num_layers(); ++l) {
    const auto& g = hp.layers[l];
    Mat<T> w(s.fan_in(l), s.fan_out(l));
    if (s.conv_generated(l)) {
      Mat<T> y = g.conv_w * c.cols;
      y.colwise() += g.conv_b;
      w = Eigen::Map<const Mat<T>>(y.data(), s.fan_in(l), s.fan_out(l));
    } else {
      const Vec<T> flat = g.pool_w.transpose() * c.pooled + g.pool_b;
      w = Eigen::Map<const Mat<T>>(flat.data(), s.fan_in(l), s.fan_out(l));
    }
    out.weights.push_back(std::move(w));
    out.biases.push_back(g.bias_w.transpose() * c.pooled + g.bias_b);
  }
  return out;
}

// Accumulates into `grad` and returns d/d(condition).
template <typename T>
Vec<T> generate_params_backward(const Vec<T>& condition, const HyperNetParams<T>& hp, const HypernetCache<T>& c,
                                const MappingHeadParams<T>& g_head, HyperNetParams<T>& grad) {
  const auto& s = hp.shape;
  Vec<T> g_pooled = Vec<T>::Zero(s.channels);
  Mat<T> g_cols = Mat<T>::Zero(c.cols.rows(), c.cols.cols());
  for (int l = 0; l < s.num_layers(); ++l) {
    const auto& g = hp.layers[l];
    auto& gg = grad.layers[l];
    const Vec<T>& gb = g_head.biases[l];
    gg.bias_w.noalias() += c.pooled * gb.transpose();
    gg.bias_b += gb;
    g_pooled.noalias() += g.bias_w * gb;
    if (s.conv_generated(l)) {
      const Eigen::Map<const Mat<T>> g_y(g_head.weights[l].data(), s.conv_channels(l), s.grid * s.grid);
      gg.conv_w.noalias() += g_y * c.cols.transpose();
      gg.conv_b += g_y.rowwise().sum();
      g_cols.noalias() += g.conv_w.transpose() * g_y;
    } else {
      const Eigen::Map<const Vec<T>> g_flat(g_head.weights[l].data(), g_head.weights[l].size());
      gg.pool_w.noalias() += c.pooled * g_flat.transpose();
      gg.pool_b += g_flat;
      g_pooled.noalias() += g.pool_w * g_flat;
    }
  }
  Vec<T> g_t = Vec<T>::Zero(s.transform_size());
  detail::col2im3x3_add(g_cols, s.channels, s.grid, g_t);
  const T inv_area = T(1) / static_cast<T>(s.grid * s.grid);
  for (int ch = 0; ch < s.channels; ++ch)
    g_t.segment(static_cast<Eigen::Index>(ch) * s.grid * s.grid, s.grid * s.grid).array() += g_pooled[ch] * inv_area;
  grad.trans_w.noalias() += condition * g_t.transpose();
  grad.trans_b += g_t;
  return hp.trans_w * g_t;
}

template <typename T>
struct HeadCache {
  std::vector<Vec<T>> inputs;  // input to each layer
  std::vector<Vec<T>> pre;     // pre-activation of each layer
};

// Affine layers with GELU between them and none after the last.
template <typename T>
T mapping_forward(const Vec<T>& quality, const MappingHeadParams<T>& head, HeadCache<T>* cache = nullptr) {
  if (head.num_layers() == 0) throw ArgumentError("mapping_forward: empty head");
  if (quality.size() != head.weights.front().rows()) throw ArgumentError("mapping_forward: quality width mismatch");
  Vec<T> x = quality;
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  for (int l = 0; l < head.num_layers(); ++l) {
    if (head.weights[l].rows() != x.size()) throw ArgumentError("mapping_forward: broken layer chain");
    Vec<T> a = head.weights[l].transpose() * x + head.biases[l];
    if (cache) {
      cache->inputs.push_back(x);
      cache->pre.push_back(a);
    }
    x = (l + 1 < head.num_layers()) ? a.unaryExpr([](T v) { return gelu(v); }).eval() : a;
  }
  if (x.size() != 1) throw ArgumentError("mapping_forward: head must end in one output");
  return x[0];
}

// Writes d(score)/d(head) * g_score into `g_head` (overwriting) and returns d/d(quality).
template <typename T>
Vec<T> mapping_backward(const MappingHeadParams<T>& head, const HeadCache<T>& c, T g_score,
                        MappingHeadParams<T>& g_head) {
  Vec<T> g = Vec<T>::Constant(1, g_score);
  for (int l = head.num_layers() - 1; l >= 0; --l) {
    if (l + 1 < head.num_layers()) g.array() *= c.pre[l].unaryExpr([](T v) { return gelu_grad(v); }).array();
    g_head.weights[l] = c.inputs[l] * g.transpose();
    g_head.biases[l] = g;
    g = head.weights[l] * g;
  }
  return g;
}

}  // namespace hyperscore
