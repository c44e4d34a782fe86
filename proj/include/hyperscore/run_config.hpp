#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hyperscore/feature_store.hpp"
#include "hyperscore/model.hpp"
#include "hyperscore/stats.hpp"
#include "hyperscore/training.hpp"

namespace hyperscore {

struct RunPaths {
  std::filesystem::path manifest;
  std::filesystem::path feature_dir;  // overrides the manifest directory for relative feature paths
  std::filesystem::path annotations;
  std::filesystem::path labels;
  std::filesystem::path predictions;
  std::filesystem::path checkpoint;
  std::filesystem::path output_dir = "out";
};

struct SynthOptions {
  int num_samples = 32;
  int num_methods = 8;
  std::uint64_t teacher_seed = 1000;
};

struct RunModes {
  std::string gradcheck_precision = "f64";
  bool logistic_mapping = false;
  bool parallel = false;
  bool baseline = true;
};

struct RunConfig {
  std::uint64_t seed = 0;
  RunPaths paths;
  FeatureDims features;
  ModelConfig model;
  TrainConfig train;
  RunModes modes;
  SynthOptions synth;
  TrappingConfig trapping;
  std::vector<std::string> sentinel_ids;
  std::vector<std::pair<std::string, std::string>> duplicate_pairs;
  std::vector<std::string> score_sample_ids;
  std::string report_dimension = "overall";

  nlohmann::json raw;  // resolved document, echoed into output headers

  // Worker count after applying modes.parallel and the HS_THREADS cap.
  int worker_threads() const;
  std::string config_hash() const;
  // "# hyperscore config_hash=<hex> seed=<n>"
  std::string header_line() const;
};

// Defaults, overlaid with the JSON file (if any), overlaid with
// `--a.b value` pairs from the command line.
RunConfig load_run_config(const std::filesystem::path& file, const std::vector<std::string>& overrides);
RunConfig run_config_from_json(const nlohmann::json& doc);
nlohmann::json default_run_config_json();

// Applies `--a.b value` pairs to a JSON document; values parse as JSON when
// possible, otherwise as strings.
void apply_overrides(nlohmann::json& doc, const std::vector<std::string>& args);

}  // namespace hyperscore
