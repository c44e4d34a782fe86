#include "hyperscore/checkpoint.hpp"

#include <map>

#include "byte_io.hpp"

namespace hyperscore {

namespace {
constexpr char kMagic[4] = {'H', 'S', 'C', '1'};
}

nlohmann::ordered_json model_config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["D"] = c.dim;
  j["D_q"] = c.quality_dim;
  j["mlp_hidden"] = c.hidden();
  j["L"] = c.prompt_tokens;
  j["channels"] = c.channels;
  j["grid"] = c.grid;
  j["head_widths"] = c.resolved_head_widths();
  j["encoder_rank"] = c.encoder_rank;
  j["seed"] = c.seed;
  j["encoder_seed"] = c.encoder_seed;
  j["mlp_activation"] = c.mlp_activation == Activation::kGelu ? "gelu" : "identity";
  j["dimension_names"] = c.dimension_names;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.dim = j.value("D", c.dim);
    c.quality_dim = j.value("D_q", c.quality_dim);
    c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
    c.prompt_tokens = j.value("L", c.prompt_tokens);
    c.channels = j.value("channels", c.channels);
    c.grid = j.value("grid", c.grid);
    c.head_widths = j.value("head_widths", c.head_widths);
    c.encoder_rank = j.value("encoder_rank", c.encoder_rank);
    c.seed = j.value("seed", c.seed);
    c.encoder_seed = j.value("encoder_seed", c.encoder_seed);
    const std::string act = j.value("mlp_activation", std::string("gelu"));
    if (act != "gelu" && act != "identity") throw ConfigError("mlp_activation must be gelu or identity");
    c.mlp_activation = act == "gelu" ? Activation::kGelu : Activation::kIdentity;
    c.dimension_names = j.value("dimension_names", c.dimension_names);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

void save_checkpoint(const HyperScoreModel<float>& model_in, const std::filesystem::path& path,
                     const nlohmann::ordered_json& meta) {
  HyperScoreModel<float> model = model_in;
  nlohmann::ordered_json header;
  header["model"] = model_config_to_json(model.config());
  header["meta"] = meta;
  detail::ByteWriter w;
  w.bytes(kMagic, 4);
  w.str(header.dump());
  const auto params = model.parameters(true);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.shape.size()));
    for (auto d : p.shape) w.u32(static_cast<std::uint32_t>(d));
    for (Eigen::Index i = 0; i < p.size; ++i) w.f32(p.data[i]);
  }
  detail::write_file(path, w.buffer());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  detail::ByteReader r(bytes);
  if (!r.has(4) || r.raw(4) != std::string(kMagic, 4)) throw FormatError("bad checkpoint magic in " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  LoadedCheckpoint out{HyperScoreModel<float>(model_config_from_json(header.at("model"))),
                       header.value("meta", nlohmann::json::object())};
  std::map<std::string, ParamRef<float>> by_name;
  for (const auto& p : out.model.parameters(true)) by_name.emplace(p.name, p);
  const std::uint32_t count = r.u32();
  std::size_t seen = 0;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::string name = r.str();
    const std::uint32_t ndim = r.u32();
    std::vector<Eigen::Index> shape;
    for (std::uint32_t d = 0; d < ndim; ++d) shape.push_back(r.u32());
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint tensor not in model: " + name);
    if (it->second.shape != shape) throw DimensionError("checkpoint tensor shape mismatch: " + name);
    for (Eigen::Index i = 0; i < it->second.size; ++i) it->second.data[i] = r.f32();
    ++seen;
  }
  if (seen != by_name.size()) throw FormatError("checkpoint is missing tensors");
  if (r.remaining() != 0) throw FormatError("trailing bytes in checkpoint");
  return out;
}

}  // namespace hyperscore
