#include "hyperscore/run_config.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "hyperscore/checkpoint.hpp"
#include "hyperscore/rng.hpp"

namespace hyperscore {

nlohmann::json default_run_config_json() {
  using nlohmann::json;
  json j;
  j["seed"] = 0;
  j["paths"] = {{"manifest", ""},    {"feature_dir", ""}, {"annotations", ""}, {"labels", ""},
                {"predictions", ""}, {"checkpoint", ""},  {"output_dir", "out"}};
  j["dims"] = {{"M", 6},        {"N_v", 196},   {"N_t", 77},         {"D", 512},        {"D_q", 224},
               {"K", 4},        {"L", 12},      {"channels", 112},   {"grid", 7},       {"mlp_hidden", 0},
               {"head_widths", json::array()}, {"encoder_rank", 32}, {"encoder_seed", 0x5eed}};
  j["dimension_names"] = {"alignment", "geometry", "texture", "overall"};
  const TrainConfig t;
  j["train"] = {{"batch_size", t.batch_size},   {"epochs", t.epochs},       {"lr_main", t.lr_main},
                {"lr_encoder", t.lr_encoder},   {"lr_decay", t.lr_decay},   {"lr_decay_every", t.lr_decay_every},
                {"weight_decay", t.weight_decay}, {"beta1", t.beta1},       {"beta2", t.beta2},
                {"adam_eps", t.adam_eps},       {"lambda", t.lambda},       {"epsilon", t.epsilon},
                {"threads", 1},                 {"folds", t.folds}};
  j["modes"] = {{"gradcheck_precision", "f64"}, {"logistic_mapping", false}, {"parallel", false}, {"baseline", true}};
  j["synth"] = {{"num_samples", 32}, {"num_methods", 8}, {"teacher_seed", 1000}};
  j["screening"] = {{"t_low", 3.0}, {"t_dup", 3.0}, {"sentinel_ids", json::array()}, {"duplicate_pairs", json::array()}};
  j["score"] = {{"sample_ids", json::array()}};
  j["report"] = {{"dimension", "overall"}};
  return j;
}

namespace {

void check_known_keys(const nlohmann::json& doc, const nlohmann::json& schema, const std::string& prefix) {
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!schema.contains(it.key())) throw ConfigError("unknown config key '" + path + "'");
    if (it->is_object() && schema.at(it.key()).is_object()) check_known_keys(*it, schema.at(it.key()), path);
  }
}

template <typename V>
V get(const nlohmann::json& j, const char* section, const char* key) {
  try {
    return j.at(section).at(key).get<V>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config ") + section + "." + key + ": " + e.what());
  }
}

}  // namespace

void apply_overrides(nlohmann::json& doc, const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string key = args[i];
    std::string value;
    if (key.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + key + "'");
    key = key.substr(2);
    if (auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= args.size()) throw ConfigError("override --" + key + " needs a value");
      value = args[++i];
    }
    std::string pointer = "/" + key;
    std::replace(pointer.begin(), pointer.end(), '.', '/');
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(value);
    } catch (const nlohmann::json::exception&) {
      parsed = value;
    }
    const nlohmann::json::json_pointer ptr(pointer);
    const auto defaults = default_run_config_json();
    if (!defaults.contains(ptr)) throw ConfigError("unknown config key '" + key + "'");
    doc[ptr] = parsed;
  }
}

RunConfig run_config_from_json(const nlohmann::json& doc_in) {
  nlohmann::json doc = default_run_config_json();
  check_known_keys(doc_in, doc, "");
  doc.merge_patch(doc_in);

  RunConfig c;
  c.raw = doc;
  try {
    c.seed = doc.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config seed: ") + e.what());
  }
  c.paths.manifest = get<std::string>(doc, "paths", "manifest");
  c.paths.feature_dir = get<std::string>(doc, "paths", "feature_dir");
  c.paths.annotations = get<std::string>(doc, "paths", "annotations");
  c.paths.labels = get<std::string>(doc, "paths", "labels");
  c.paths.predictions = get<std::string>(doc, "paths", "predictions");
  c.paths.checkpoint = get<std::string>(doc, "paths", "checkpoint");
  c.paths.output_dir = get<std::string>(doc, "paths", "output_dir");

  auto pos = [](int v, const char* what) {
    if (v < 1) throw ConfigError(std::string("dims.") + what + " must be >= 1");
    return static_cast<std::uint32_t>(v);
  };
  c.features.views = pos(get<int>(doc, "dims", "M"), "M");
  c.features.patches = pos(get<int>(doc, "dims", "N_v"), "N_v");
  c.features.text_tokens = pos(get<int>(doc, "dims", "N_t"), "N_t");
  c.features.dim = pos(get<int>(doc, "dims", "D"), "D");

  try {
    c.model.dimension_names = doc.at("dimension_names").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dimension_names: ") + e.what());
  }
  const int k = get<int>(doc, "dims", "K");
  if (k != static_cast<int>(c.model.dimension_names.size()))
    throw ConfigError("dims.K (" + std::to_string(k) + ") differs from the number of dimension_names");
  c.model.dim = static_cast<int>(c.features.dim);
  c.model.quality_dim = get<int>(doc, "dims", "D_q");
  c.model.prompt_tokens = get<int>(doc, "dims", "L");
  c.model.channels = get<int>(doc, "dims", "channels");
  c.model.grid = get<int>(doc, "dims", "grid");
  c.model.mlp_hidden = get<int>(doc, "dims", "mlp_hidden");
  c.model.head_widths = get<std::vector<int>>(doc, "dims", "head_widths");
  c.model.encoder_rank = get<int>(doc, "dims", "encoder_rank");
  c.model.encoder_seed = get<std::uint64_t>(doc, "dims", "encoder_seed");
  c.model.seed = c.seed;
  c.model.validate();

  c.train.batch_size = get<int>(doc, "train", "batch_size");
  c.train.epochs = get<int>(doc, "train", "epochs");
  c.train.lr_main = get<double>(doc, "train", "lr_main");
  c.train.lr_encoder = get<double>(doc, "train", "lr_encoder");
  c.train.lr_decay = get<double>(doc, "train", "lr_decay");
  c.train.lr_decay_every = get<int>(doc, "train", "lr_decay_every");
  c.train.weight_decay = get<double>(doc, "train", "weight_decay");
  c.train.beta1 = get<double>(doc, "train", "beta1");
  c.train.beta2 = get<double>(doc, "train", "beta2");
  c.train.adam_eps = get<double>(doc, "train", "adam_eps");
  c.train.lambda = get<double>(doc, "train", "lambda");
  c.train.epsilon = get<double>(doc, "train", "epsilon");
  c.train.threads = get<int>(doc, "train", "threads");
  c.train.folds = get<int>(doc, "train", "folds");
  c.train.seed = c.seed;
  c.train.validate();

  c.modes.gradcheck_precision = get<std::string>(doc, "modes", "gradcheck_precision");
  if (c.modes.gradcheck_precision != "f64" && c.modes.gradcheck_precision != "f32")
    throw ConfigError("modes.gradcheck_precision must be f64 or f32");
  c.modes.logistic_mapping = get<bool>(doc, "modes", "logistic_mapping");
  c.modes.parallel = get<bool>(doc, "modes", "parallel");
  c.modes.baseline = get<bool>(doc, "modes", "baseline");

  c.synth.num_samples = get<int>(doc, "synth", "num_samples");
  c.synth.num_methods = get<int>(doc, "synth", "num_methods");
  c.synth.teacher_seed = get<std::uint64_t>(doc, "synth", "teacher_seed");
  if (c.synth.num_samples < 1 || c.synth.num_methods < 1) throw ConfigError("synth sizes must be >= 1");

  c.trapping.t_low = get<double>(doc, "screening", "t_low");
  c.trapping.t_dup = get<double>(doc, "screening", "t_dup");
  c.sentinel_ids = get<std::vector<std::string>>(doc, "screening", "sentinel_ids");
  for (const auto& pair : get<std::vector<std::vector<std::string>>>(doc, "screening", "duplicate_pairs")) {
    if (pair.size() != 2) throw ConfigError("screening.duplicate_pairs entries must be [first, second]");
    c.duplicate_pairs.emplace_back(pair[0], pair[1]);
  }
  c.score_sample_ids = get<std::vector<std::string>>(doc, "score", "sample_ids");
  c.report_dimension = get<std::string>(doc, "report", "dimension");
  return c;
}

RunConfig load_run_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  nlohmann::json doc = nlohmann::json::object();
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config " + file.string());
    try {
      in >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config " + file.string() + ": " + e.what());
    }
  }
  nlohmann::json merged = default_run_config_json();
  check_known_keys(doc, merged, "");
  merged.merge_patch(doc);
  apply_overrides(merged, overrides);
  return run_config_from_json(merged);
}

int RunConfig::worker_threads() const {
  int n = modes.parallel ? train.threads : 1;
  if (const char* env = std::getenv("HS_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return std::max(1, n);
}

std::string RunConfig::config_hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(CounterRng::fnv1a(raw.dump())));
  return buf;
}

std::string RunConfig::header_line() const {
  return "# hyperscore config_hash=" + config_hash() + " seed=" + std::to_string(seed);
}

}  // namespace hyperscore
