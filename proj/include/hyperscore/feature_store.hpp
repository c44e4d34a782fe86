#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hyperscore/tensor.hpp"

namespace hyperscore {

struct Viewpoint {
  float elevation_deg = 0.0f;
  float azimuth_deg = 0.0f;
  bool operator==(const Viewpoint&) const = default;
};

struct FeatureDims {
  std::uint32_t views = 6;          // M
  std::uint32_t patches = 196;      // N_v, 14x14 grid of 16x16 patches at 224x224
  std::uint32_t text_tokens = 77;   // N_t
  std::uint32_t dim = 512;          // D
  bool operator==(const FeatureDims&) const = default;
};

// Precomputed encoder output for one rendered mesh and its prompt.
// Stored in f32 exactly as read from the container.
struct FeatureBundle {
  std::string sample_id;
  std::string prompt_id;
  std::string method_id;
  std::vector<Mat<float>> views;  // M blocks of N_v x D
  Mat<float> text_tokens;         // N_t x D
  std::uint32_t eot_index = 0;
  std::vector<Viewpoint> viewpoints;

  FeatureDims dims() const;
  const float* eot_row() const { return text_tokens.row(eot_index).data(); }

  // Throws DimensionError / DataError when an invariant is broken.
  void validate() const;
};

inline constexpr std::array<const char*, 8> kPromptCategories = {
    "Basic", "Refined", "Complex", "Fantastical", "Grouped", "Action", "Spatial", "Imaginative"};

bool is_known_category(const std::string& name);

struct ManifestEntry {
  std::string sample_id;
  std::string prompt_id;
  std::string method_id;
  std::string feature_path;  // relative paths resolve against the manifest directory
};

struct DatasetManifest {
  std::vector<ManifestEntry> samples;
  std::map<std::string, std::string> prompt_categories;
  std::vector<std::string> dimension_names{"alignment", "geometry", "texture", "overall"};

  void validate() const;
  const ManifestEntry& find(const std::string& sample_id) const;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// Camera table: M in {4, 6, 9, 12, 16} uses the fixed layouts, any other M
// falls back to an equatorial ring.
std::vector<Viewpoint> default_viewpoints(std::uint32_t views);

// HSF1 container: magic, u32 {M, N_v, N_t, D, eot}, M (elev, azim) f32 pairs,
// then views and text tokens as row-major f32. All little-endian.
void write_feature_bundle(const FeatureBundle& bundle, const std::filesystem::path& path);
FeatureBundle load_feature_bundle(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_feature_bundle(const FeatureBundle& bundle);
FeatureBundle decode_feature_bundle(const std::vector<std::uint8_t>& bytes);

// Deterministic stand-in for the frozen encoders; values in [-1, 1].
FeatureBundle synth_toy_bundle(std::uint64_t seed, const FeatureDims& dims);

// Stacks the M views into an (M * N_v) x D matrix, view-major.
template <typename T = float>
Mat<T> concat_views(const FeatureBundle& bundle) {
  const auto d = bundle.dims();
  Mat<T> out(static_cast<Eigen::Index>(d.views) * d.patches, d.dim);
  for (std::uint32_t m = 0; m < d.views; ++m)
    out.middleRows(static_cast<Eigen::Index>(m) * d.patches, d.patches) =
        bundle.views[m].template cast<T>();
  return out;
}

}  // namespace hyperscore
