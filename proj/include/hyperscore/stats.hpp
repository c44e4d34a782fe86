#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hyperscore/feature_store.hpp"

namespace hyperscore {

// ---------------------------------------------------------------- correlation

// 1-based ranks; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> x);

double plcc(std::span<const double> x, std::span<const double> y);
double srcc(std::span<const double> x, std::span<const double> y);
// Kendall tau-b.
double krcc(std::span<const double> x, std::span<const double> y);

// f(x) = b1 (1/2 - 1/(1 + exp(b2 (x - b3)))) + b4 x + b5
double logistic5(const std::array<double, 5>& beta, double x);

struct LogisticFit {
  std::array<double, 5> beta{};
  std::vector<double> mapped;
  double rms_residual = 0;
  int iterations = 0;
  bool warning = false;  // degenerate input or no convergence
};

// Least-squares fit of logistic5 from preds to mos by damped Gauss-Newton
// (Levenberg-Marquardt), at most 200 iterations.
LogisticFit logistic_map(std::span<const double> preds, std::span<const double> mos);

// ---------------------------------------------------------------- subjective scores

// Subjects x samples x dimensions on the 0..10 scale.
struct AnnotationMatrix {
  std::vector<std::string> subjects;
  std::vector<std::string> samples;
  std::vector<std::string> dimensions;
  std::vector<double> scores;  // row-major (subject, sample, dimension)
  // trapping stimuli
  std::vector<std::string> sentinel_ids;
  std::vector<std::pair<std::string, std::string>> duplicate_pairs;

  std::size_t num_subjects() const { return subjects.size(); }
  std::size_t num_samples() const { return samples.size(); }
  std::size_t num_dimensions() const { return dimensions.size(); }
  double& at(std::size_t s, std::size_t n, std::size_t k) {
    return scores[(s * samples.size() + n) * dimensions.size() + k];
  }
  double at(std::size_t s, std::size_t n, std::size_t k) const {
    return scores[(s * samples.size() + n) * dimensions.size() + k];
  }
  std::size_t sample_index(const std::string& id) const;
  bool is_trapping(const std::string& sample_id) const;
  void validate() const;
};

// CSV rows of subject_id,sample_id,dimension,score. A header line is optional.
// Every (subject, sample, dimension) cell must appear exactly once.
AnnotationMatrix parse_annotations_csv(const std::string& text, const std::vector<std::string>& dimension_order = {});
AnnotationMatrix load_annotations_csv(const std::filesystem::path& path,
                                      const std::vector<std::string>& dimension_order = {});

struct TrappingConfig {
  double t_low = 3.0;  // max acceptable score for the low-quality sentinel
  double t_dup = 3.0;  // max acceptable gap between duplicate presentations
};

struct Rejection {
  std::string subject;
  std::string stage;   // "trapping" or "bt500"
  std::string reason;
};

struct ScreeningResult {
  std::vector<bool> retained;  // per subject
  std::vector<Rejection> rejected;

  std::size_t retained_count() const;
};

// Rejects a subject whose sentinel score exceeds t_low, or whose duplicate
// gap exceeds t_dup, in any dimension. Gaps equal to the threshold pass.
ScreeningResult screen_trapping(const AnnotationMatrix& raw, const TrappingConfig& cfg = {});

struct Bt500Options {
  double exceed_ratio = 0.05;
  double symmetry_ratio = 0.3;
  double kurtosis_low = 2.0;
  double kurtosis_high = 4.0;
};

// Per-stimulus mean / standard deviation / kurtosis screening over the
// candidate subjects and non-trapping samples. A subject is rejected iff
// (P+Q)/(N K) > 0.05 and |P-Q|/(P+Q) < 0.3.
ScreeningResult screen_bt500(const AnnotationMatrix& raw, const std::vector<bool>& candidates = {},
                             const Bt500Options& opt = {});

struct SampleLabel {
  std::string sample_id;
  std::vector<double> mos;
  std::size_t retained_subject_count = 0;
};

// Mean over retained subjects for every non-trapping sample.
std::vector<SampleLabel> compute_mos(const AnnotationMatrix& raw, const std::vector<bool>& retained);

struct MosPipelineResult {
  ScreeningResult trapping;
  ScreeningResult bt500;
  std::vector<bool> retained;
  std::vector<SampleLabel> labels;
};

MosPipelineResult run_mos_pipeline(const AnnotationMatrix& raw, const TrappingConfig& trap = {},
                                   const Bt500Options& bt = {});

// ---------------------------------------------------------------- reports

struct ScoreRecord {
  std::string method_id;
  std::string prompt_id;
  double value = 0;
};

struct TableCell {
  std::string row;     // method (or metric)
  std::string column;  // category (or dimension)
  double value = 0;
  int rank = 0;        // 1 = highest in the row; ties share the minimum rank
  std::size_t count = 0;
};

// Per-method x per-category means, ranked within each method row.
std::vector<TableCell> category_table(const std::vector<ScoreRecord>& records,
                                      const std::map<std::string, std::string>& prompt_categories);

struct CorrelationRow {
  std::string metric;
  std::string dimension;
  double plcc = 0;
  double srcc = 0;
  double krcc = 0;
};

// One row per (metric, dimension). `predictions[metric]` is samples x K.
std::vector<CorrelationRow> correlation_table(const std::map<std::string, std::vector<std::vector<double>>>& predictions,
                                              const std::vector<std::vector<double>>& mos,
                                              const std::vector<std::string>& dimension_names,
                                              bool logistic = false);

// SRCC of each metric within each prompt category for one dimension; cells
// are ranked down each category column.
std::vector<TableCell> category_srcc_table(const std::map<std::string, std::vector<double>>& predictions,
                                           const std::vector<double>& mos,
                                           const std::vector<std::string>& sample_categories);

// ---------------------------------------------------------------- baseline

inline constexpr double kClipScoreWeight = 2.5;

// View-averaged 2.5 * max(cos(mean patch feature, EOT feature), 0).
double baseline_cosine_score(const FeatureBundle& bundle);

}  // namespace hyperscore
