#include "hyperscore/feature_store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "byte_io.hpp"
#include "hyperscore/rng.hpp"

namespace hyperscore {

namespace {

constexpr char kMagic[4] = {'H', 'S', 'F', '1'};

}  // namespace

FeatureDims FeatureBundle::dims() const {
  FeatureDims d;
  d.views = static_cast<std::uint32_t>(views.size());
  d.patches = views.empty() ? 0 : static_cast<std::uint32_t>(views.front().rows());
  d.text_tokens = static_cast<std::uint32_t>(text_tokens.rows());
  d.dim = static_cast<std::uint32_t>(text_tokens.cols());
  return d;
}

void FeatureBundle::validate() const {
  require_dims(!views.empty(), "bundle has no views");
  const auto rows = views.front().rows();
  const auto cols = views.front().cols();
  require_dims(rows >= 1 && cols >= 1, "empty view matrix");
  for (const auto& v : views)
    require_dims(v.rows() == rows && v.cols() == cols, "views disagree in shape");
  require_dims(text_tokens.rows() >= 1, "no text tokens");
  require_dims(text_tokens.cols() == cols, "text feature width differs from view width");
  require_dims(eot_index < text_tokens.rows(), "eot_index out of range");
  require_dims(viewpoints.size() == views.size(), "one viewpoint per view required");
  for (const auto& v : views)
    if (!v.allFinite()) throw DataError("non-finite view feature in " + sample_id);
  if (!text_tokens.allFinite()) throw DataError("non-finite text feature in " + sample_id);
}

bool is_known_category(const std::string& name) {
  return std::find(kPromptCategories.begin(), kPromptCategories.end(), name) != kPromptCategories.end();
}

void DatasetManifest::validate() const {
  if (dimension_names.empty()) throw ConfigError("manifest needs at least one dimension");
  std::set<std::string> seen;
  for (const auto& s : samples) {
    if (!seen.insert(s.sample_id).second) throw DataError("duplicate sample_id " + s.sample_id);
    auto it = prompt_categories.find(s.prompt_id);
    if (it == prompt_categories.end()) throw DataError("prompt without category: " + s.prompt_id);
  }
  for (const auto& [prompt, cat] : prompt_categories)
    if (!is_known_category(cat)) throw DataError("unknown category '" + cat + "' for " + prompt);
}

const ManifestEntry& DatasetManifest::find(const std::string& sample_id) const {
  auto it = std::find_if(samples.begin(), samples.end(),
                         [&](const ManifestEntry& e) { return e.sample_id == sample_id; });
  if (it == samples.end()) throw DataError("unknown sample " + sample_id);
  return *it;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    if (j.contains("dimension_names")) m.dimension_names = j.at("dimension_names").get<std::vector<std::string>>();
    m.prompt_categories = j.at("prompt_categories").get<std::map<std::string, std::string>>();
    for (const auto& s : j.at("samples")) {
      m.samples.push_back({s.at("sample_id").get<std::string>(), s.at("prompt_id").get<std::string>(),
                           s.at("method_id").get<std::string>(), s.at("feature_path").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }
  m.validate();
  return m;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["dimension_names"] = manifest.dimension_names;
  j["prompt_categories"] = manifest.prompt_categories;
  auto& samples = j["samples"] = nlohmann::ordered_json::array();
  for (const auto& s : manifest.samples) {
    nlohmann::ordered_json e;
    e["sample_id"] = s.sample_id;
    e["prompt_id"] = s.prompt_id;
    e["method_id"] = s.method_id;
    e["feature_path"] = s.feature_path;
    samples.push_back(e);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<Viewpoint> default_viewpoints(std::uint32_t views) {
  auto grid = [](std::vector<float> elev, std::vector<float> azim) {
    std::vector<Viewpoint> out;
    for (float e : elev)
      for (float a : azim) out.push_back({e, a});
    return out;
  };
  switch (views) {
    case 4: return grid({-60, 60}, {0, 180});
    case 6: return {{0, 0}, {0, 90}, {0, 180}, {0, 270}, {90, 0}, {-90, 0}};
    case 9: return grid({-60, 0, 60}, {0, 120, 240});
    case 12: return grid({-60, 0, 60}, {0, 90, 180, 270});
    case 16: return grid({-60, -30, 30, 60}, {0, 90, 180, 270});
    default: break;
  }
  std::vector<Viewpoint> ring;
  for (std::uint32_t m = 0; m < views; ++m) ring.push_back({0.0f, 360.0f * static_cast<float>(m) / views});
  return ring;
}

std::vector<std::uint8_t> encode_feature_bundle(const FeatureBundle& bundle) {
  bundle.validate();
  const auto d = bundle.dims();
  detail::ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(d.views);
  w.u32(d.patches);
  w.u32(d.text_tokens);
  w.u32(d.dim);
  w.u32(bundle.eot_index);
  for (const auto& vp : bundle.viewpoints) {
    w.f32(vp.elevation_deg);
    w.f32(vp.azimuth_deg);
  }
  for (const auto& v : bundle.views)
    for (Eigen::Index i = 0; i < v.size(); ++i) w.f32(v.data()[i]);
  for (Eigen::Index i = 0; i < bundle.text_tokens.size(); ++i) w.f32(bundle.text_tokens.data()[i]);
  return std::move(w.buffer());
}

FeatureBundle decode_feature_bundle(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes);
  if (!r.has(4) || r.raw(4) != std::string(kMagic, 4)) throw FormatError("bad container magic");
  if (!r.has(20)) throw FormatError("truncated header");
  FeatureDims d;
  d.views = r.u32();
  d.patches = r.u32();
  d.text_tokens = r.u32();
  d.dim = r.u32();
  const std::uint32_t eot = r.u32();
  if (d.views == 0 || d.patches == 0 || d.text_tokens == 0 || d.dim == 0)
    throw DimensionError("container declares a zero dimension");
  const std::uint64_t floats = 2ull * d.views + static_cast<std::uint64_t>(d.views) * d.patches * d.dim +
                               static_cast<std::uint64_t>(d.text_tokens) * d.dim;
  if (r.remaining() != floats * 4)
    throw DimensionError("payload holds " + std::to_string(r.remaining()) + " bytes, header implies " +
                         std::to_string(floats * 4));
  FeatureBundle b;
  b.eot_index = eot;
  for (std::uint32_t m = 0; m < d.views; ++m) {
    const float e = r.f32();
    const float a = r.f32();
    b.viewpoints.push_back({e, a});
  }
  b.views.assign(d.views, Mat<float>(d.patches, d.dim));
  for (auto& v : b.views)
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = r.f32();
  b.text_tokens.resize(d.text_tokens, d.dim);
  for (Eigen::Index i = 0; i < b.text_tokens.size(); ++i) b.text_tokens.data()[i] = r.f32();
  b.validate();
  return b;
}

void write_feature_bundle(const FeatureBundle& bundle, const std::filesystem::path& path) {
  detail::write_file(path, encode_feature_bundle(bundle));
}

FeatureBundle load_feature_bundle(const std::filesystem::path& path) {
  FeatureBundle b = decode_feature_bundle(detail::read_file(path));
  b.sample_id = path.stem().string();
  return b;
}

FeatureBundle synth_toy_bundle(std::uint64_t seed, const FeatureDims& dims) {
  if (dims.views == 0 || dims.patches == 0 || dims.text_tokens == 0 || dims.dim == 0)
    throw ArgumentError("synth_toy_bundle: all dims must be >= 1");
  const CounterRng root(seed);
  FeatureBundle b;
  b.sample_id = "toy-" + std::to_string(seed);
  b.views.reserve(dims.views);
  for (std::uint32_t m = 0; m < dims.views; ++m) {
    const CounterRng rng = root.child("view" + std::to_string(m));
    Mat<float> v(dims.patches, dims.dim);
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = static_cast<float>(rng.symmetric(i));
    b.views.push_back(std::move(v));
  }
  const CounterRng text = root.child("text");
  b.text_tokens.resize(dims.text_tokens, dims.dim);
  for (Eigen::Index i = 0; i < b.text_tokens.size(); ++i)
    b.text_tokens.data()[i] = static_cast<float>(text.symmetric(i));
  b.eot_index = dims.text_tokens - 1;
  b.viewpoints = default_viewpoints(dims.views);
  return b;
}

}  // namespace hyperscore
