#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "hyperscore/run_config.hpp"

namespace hyperscore {

// Labels CSV: '#' header line, then sample_id,<dim...>[,retained_subjects].
struct LabelTable {
  std::vector<std::string> dimension_names;
  std::map<std::string, std::vector<double>> mos;
};

LabelTable load_labels_csv(const std::filesystem::path& path);
void write_labels_csv(const std::filesystem::path& path, const std::string& header,
                      const std::vector<std::string>& dimension_names, const std::vector<SampleLabel>& labels);

// Features and labels for every manifest sample, in manifest order.
template <typename T>
std::vector<TrainSample<T>> load_dataset(const DatasetManifest& manifest, const std::filesystem::path& feature_root,
                                         const LabelTable& labels, const FeatureDims* expect = nullptr);

void cmd_synth(const RunConfig& cfg, std::ostream& log);
void cmd_mos(const RunConfig& cfg, std::ostream& log);
void cmd_train(const RunConfig& cfg, std::ostream& log);
void cmd_crossval(const RunConfig& cfg, std::ostream& log);
void cmd_score(const RunConfig& cfg, std::ostream& log);
void cmd_stats(const RunConfig& cfg, std::ostream& log);
// Gradient suite on the tiny configuration. f64 compares at threshold 1e-4;
// f32 compares single-precision analytic gradients at 1e-2.
GradcheckReport gradcheck_tiny(const RunConfig& cfg, bool f32);
// Returns the process exit code: 0 when every group passes, 3 otherwise.
int cmd_gradcheck(const RunConfig& cfg, std::ostream& log);

// Tiny configuration used by gradcheck and the acceptance gradient suite:
// D=16, D_q=8, M=2, N_v=4, N_t=3, K=3, L=2, hypernet grid 2x2x2.
ModelConfig tiny_model_config(std::uint64_t seed = 0);
FeatureDims tiny_feature_dims();

}  // namespace hyperscore
