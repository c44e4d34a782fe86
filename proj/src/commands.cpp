#include "hyperscore/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hyperscore/checkpoint.hpp"
#include "hyperscore/rng.hpp"

namespace hyperscore {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("write failed for " + path.string());
}

ojson header_json(const RunConfig& cfg) {
  ojson h;
  h["config_hash"] = cfg.config_hash();
  h["seed"] = cfg.seed;
  h["config"] = cfg.raw;
  return h;
}

double json_num(double v) { return std::isnan(v) ? 0.0 : v; }

ojson metric_json(const DimensionMetrics& m) {
  ojson j;
  // NaN is not valid JSON; undefined correlations are written as null
  auto put = [&](const char* k, double v) { j[k] = std::isnan(v) ? ojson(nullptr) : ojson(json_num(v)); };
  put("plcc", m.plcc);
  put("srcc", m.srcc);
  put("krcc", m.krcc);
  return j;
}

fs::path feature_root(const RunConfig& cfg) {
  if (!cfg.paths.feature_dir.empty()) return cfg.paths.feature_dir;
  return cfg.paths.manifest.parent_path();
}

void require_path(const fs::path& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("paths.") + what + " is required");
  if (!fs::exists(p)) throw ConfigError(std::string("paths.") + what + " does not exist: " + p.string());
}

void check_label_dims(const LabelTable& labels, const RunConfig& cfg) {
  if (labels.dimension_names != cfg.model.dimension_names)
    throw ConfigError("label columns do not match dimension_names");
}

std::string cell_csv(const std::string& header, const std::vector<TableCell>& cells, const char* row_name,
                     const char* col_name) {
  std::ostringstream os;
  os << header << '\n' << row_name << ',' << col_name << ",value,rank,count\n";
  for (const auto& c : cells) os << c.row << ',' << c.column << ',' << num(c.value) << ',' << c.rank << ',' << c.count << '\n';
  return os.str();
}

ojson cell_json(const std::vector<TableCell>& cells, const char* row_name, const char* col_name) {
  ojson arr = ojson::array();
  for (const auto& c : cells) {
    ojson e;
    e[row_name] = c.row;
    e[col_name] = c.column;
    e["value"] = std::isnan(c.value) ? ojson(nullptr) : ojson(c.value);
    e["rank"] = c.rank;
    e["count"] = c.count;
    arr.push_back(e);
  }
  return arr;
}

}  // namespace

// ---------------------------------------------------------------- labels

LabelTable load_labels_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open labels " + path.string());
  LabelTable t;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  bool has_count = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!have_header) {
      if (f.empty() || f[0] != "sample_id") throw FormatError("labels line " + std::to_string(line_no) + ": expected header");
      has_count = f.back() == "retained_subjects";
      t.dimension_names.assign(f.begin() + 1, f.end() - (has_count ? 1 : 0));
      have_header = true;
      continue;
    }
    const std::size_t expect = 1 + t.dimension_names.size() + (has_count ? 1 : 0);
    if (f.size() != expect) throw FormatError("labels line " + std::to_string(line_no) + ": wrong field count");
    std::vector<double> mos;
    for (std::size_t k = 0; k < t.dimension_names.size(); ++k) {
      char* end = nullptr;
      const double v = std::strtod(f[k + 1].c_str(), &end);
      if (end != f[k + 1].c_str() + f[k + 1].size() || f[k + 1].empty() || !std::isfinite(v))
        throw FormatError("labels line " + std::to_string(line_no) + ": bad value '" + f[k + 1] + "'");
      mos.push_back(v);
    }
    if (!t.mos.emplace(f[0], std::move(mos)).second) throw DataError("labels: duplicate sample " + f[0]);
  }
  if (!have_header) throw FormatError("labels file " + path.string() + " is empty");
  return t;
}

void write_labels_csv(const fs::path& path, const std::string& header, const std::vector<std::string>& dims,
                      const std::vector<SampleLabel>& labels) {
  std::ostringstream os;
  os << header << "\nsample_id";
  for (const auto& d : dims) os << ',' << d;
  os << ",retained_subjects\n";
  for (const auto& l : labels) {
    os << l.sample_id;
    for (double v : l.mos) os << ',' << num(v);
    os << ',' << l.retained_subject_count << '\n';
  }
  write_text(path, os.str());
}

template <typename T>
std::vector<TrainSample<T>> load_dataset(const DatasetManifest& manifest, const fs::path& root, const LabelTable& labels,
                                         const FeatureDims* expect) {
  std::vector<TrainSample<T>> out;
  for (const auto& e : manifest.samples) {
    auto it = labels.mos.find(e.sample_id);
    if (it == labels.mos.end()) throw DataError("no label for sample " + e.sample_id);
    const fs::path p = fs::path(e.feature_path).is_absolute() ? fs::path(e.feature_path) : root / e.feature_path;
    FeatureBundle b = load_feature_bundle(p);
    if (expect && b.dims().dim != expect->dim)
      throw ConfigError("feature width of " + e.sample_id + " (" + std::to_string(b.dims().dim) +
                        ") differs from configured D=" + std::to_string(expect->dim));
    TrainSample<T> s;
    s.sample_id = e.sample_id;
    s.prompt_id = e.prompt_id;
    s.method_id = e.method_id;
    s.features = std::make_shared<const SampleFeatures<T>>(SampleFeatures<T>::from_bundle(b));
    s.target = Eigen::Map<const Eigen::VectorXd>(it->second.data(), it->second.size()).cast<T>();
    out.push_back(std::move(s));
  }
  return out;
}

template std::vector<TrainSample<float>> load_dataset<float>(const DatasetManifest&, const fs::path&, const LabelTable&,
                                                             const FeatureDims*);
template std::vector<TrainSample<double>> load_dataset<double>(const DatasetManifest&, const fs::path&,
                                                               const LabelTable&, const FeatureDims*);

ModelConfig tiny_model_config(std::uint64_t seed) {
  ModelConfig c;
  c.dim = 16;
  c.quality_dim = 8;
  c.mlp_hidden = 16;
  c.prompt_tokens = 2;
  c.channels = 2;
  c.grid = 2;
  c.encoder_rank = 8;
  c.seed = seed;
  c.dimension_names = {"alignment", "geometry", "texture"};
  return c;
}

FeatureDims tiny_feature_dims() { return {2, 4, 3, 16}; }

// ---------------------------------------------------------------- synth

void cmd_synth(const RunConfig& cfg, std::ostream& log) {
  const fs::path out = cfg.paths.output_dir;
  const int n = cfg.synth.num_samples;
  const int methods = std::min(cfg.synth.num_methods, n);
  DatasetManifest manifest;
  manifest.dimension_names = cfg.model.dimension_names;

  ModelConfig teacher_cfg = cfg.model;
  teacher_cfg.seed = cfg.synth.teacher_seed;
  const HyperScoreModel<float> teacher(teacher_cfg);
  const auto conditions = teacher.prepare_conditions();

  std::vector<SampleLabel> labels;
  for (int i = 0; i < n; ++i) {
    const int prompt = i / methods;
    char sid[32], pid[32], mid[32];
    std::snprintf(sid, sizeof sid, "s%04d", i);
    std::snprintf(pid, sizeof pid, "p%03d", prompt);
    std::snprintf(mid, sizeof mid, "method%d", i % methods);
    FeatureBundle b = synth_toy_bundle(CounterRng::mix(cfg.seed ^ CounterRng::mix(static_cast<std::uint64_t>(i))),
                                       cfg.features);
    b.sample_id = sid;
    b.prompt_id = pid;
    b.method_id = mid;
    const std::string rel = std::string("features/") + sid + ".hsf";
    write_feature_bundle(b, out / rel);
    manifest.samples.push_back({sid, pid, mid, rel});
    manifest.prompt_categories[pid] = kPromptCategories[prompt % kPromptCategories.size()];
    const Vec<float> scores = teacher.forward(SampleFeatures<float>::from_bundle(b), conditions);
    labels.push_back({sid, std::vector<double>(scores.data(), scores.data() + scores.size()), 0});
  }
  write_manifest(manifest, out / "manifest.json");
  write_labels_csv(out / "labels.csv", cfg.header_line(), cfg.model.dimension_names, labels);
  ojson meta;
  meta["role"] = "teacher";
  meta["config_hash"] = cfg.config_hash();
  meta["seed"] = cfg.seed;
  save_checkpoint(teacher, out / "teacher.ckpt", meta);
  log << "synth: wrote " << n << " containers, manifest, labels and teacher checkpoint to " << out.string() << '\n';
}

// ---------------------------------------------------------------- mos

void cmd_mos(const RunConfig& cfg, std::ostream& log) {
  require_path(cfg.paths.annotations, "annotations");
  AnnotationMatrix raw = load_annotations_csv(cfg.paths.annotations, cfg.model.dimension_names);
  raw.sentinel_ids = cfg.sentinel_ids;
  raw.duplicate_pairs = cfg.duplicate_pairs;
  const auto result = run_mos_pipeline(raw, cfg.trapping);
  const fs::path out = cfg.paths.output_dir;
  write_labels_csv(out / "labels.csv", cfg.header_line(), cfg.model.dimension_names, result.labels);

  ojson report;
  report["header"] = header_json(cfg);
  report["subjects"] = raw.subjects;
  report["trapping_checked"] = !(raw.sentinel_ids.empty() && raw.duplicate_pairs.empty());
  ojson rejected = ojson::array();
  for (const auto* stage : {&result.trapping.rejected, &result.bt500.rejected})
    for (const auto& r : *stage) {
      rejected.push_back({{"subject", r.subject}, {"stage", r.stage}, {"reason", r.reason}});
      log << "mos: rejected " << r.subject << " (" << r.stage << "): " << r.reason << '\n';
    }
  report["rejected"] = rejected;
  std::vector<std::string> kept;
  for (std::size_t s = 0; s < raw.num_subjects(); ++s)
    if (result.retained[s]) kept.push_back(raw.subjects[s]);
  report["retained"] = kept;
  write_text(out / "screening_report.json", report.dump(2) + "\n");
  log << "mos: " << kept.size() << " of " << raw.num_subjects() << " subjects retained, " << result.labels.size()
      << " labels written\n";
}

// ---------------------------------------------------------------- train / crossval

namespace {

std::vector<TrainSample<float>> dataset_from_config(const RunConfig& cfg) {
  require_path(cfg.paths.manifest, "manifest");
  require_path(cfg.paths.labels, "labels");
  const auto manifest = load_manifest(cfg.paths.manifest);
  if (manifest.dimension_names != cfg.model.dimension_names)
    throw ConfigError("manifest dimension_names differ from config");
  const auto labels = load_labels_csv(cfg.paths.labels);
  check_label_dims(labels, cfg);
  auto data = load_dataset<float>(manifest, feature_root(cfg), labels, &cfg.features);
  if (data.empty()) throw ConfigError("manifest lists no samples");
  return data;
}

std::string epoch_json(const EpochRecord& r) {
  ojson j;
  j["fold"] = r.fold;
  j["epoch"] = r.epoch;
  j["l_reg"] = r.l_reg;
  j["l_dis"] = r.l_dis;
  j["loss"] = r.loss;
  j["lr"] = {{"main", r.lr_main}, {"encoder", r.lr_encoder}};
  return j.dump();
}

std::string log_text(const RunConfig& cfg, const std::vector<EpochRecord>& log) {
  std::ostringstream os;
  os << ojson({{"header", header_json(cfg)}}).dump() << '\n';
  for (const auto& r : log) os << epoch_json(r) << '\n';
  return os.str();
}

}  // namespace

void cmd_train(const RunConfig& cfg, std::ostream& log) {
  const auto data = dataset_from_config(cfg);
  std::vector<const TrainSample<float>*> ptrs;
  for (const auto& s : data) ptrs.push_back(&s);
  TrainConfig t = cfg.train;
  t.threads = cfg.worker_threads();
  const auto r = train_model<float>(SampleSpan<float>(ptrs), cfg.model, t, -1, [&](const EpochRecord& e) {
    log << "epoch " << e.epoch << " L_reg=" << num(e.l_reg) << " L_dis=" << num(e.l_dis) << " L=" << num(e.loss) << '\n';
  });
  const fs::path out = cfg.paths.output_dir;
  ojson meta;
  meta["config_hash"] = cfg.config_hash();
  meta["seed"] = cfg.seed;
  meta["best_epoch"] = r.best_epoch;
  save_checkpoint(r.best, out / "model.ckpt", meta);
  write_text(out / "train_log.jsonl", log_text(cfg, r.log));
  ojson report;
  report["header"] = header_json(cfg);
  report["samples"] = data.size();
  report["best_epoch"] = r.best_epoch;
  report["best_loss"] = r.best_loss;
  report["initial_l_reg"] = r.initial_l_reg;
  report["final_l_reg"] = r.final_l_reg;
  write_text(out / "train_report.json", report.dump(2) + "\n");
  log << "train: best epoch " << r.best_epoch << ", L_reg " << num(r.initial_l_reg) << " -> " << num(r.final_l_reg)
      << '\n';
}

void cmd_crossval(const RunConfig& cfg, std::ostream& log) {
  if (cfg.train.folds < 2) throw ConfigError("crossval needs train.folds >= 2");
  const auto data = dataset_from_config(cfg);
  TrainConfig t = cfg.train;
  t.threads = cfg.worker_threads();
  const auto r = crossval_fit<float>(data, cfg.model, t, [&](const EpochRecord& e) {
    log << "fold " << e.fold << " epoch " << e.epoch << " L=" << num(e.loss) << '\n';
  });
  const fs::path out = cfg.paths.output_dir;
  for (std::size_t f = 0; f < r.models.size(); ++f) {
    ojson meta;
    meta["config_hash"] = cfg.config_hash();
    meta["seed"] = cfg.seed;
    meta["fold"] = f;
    save_checkpoint(r.models[f], out / ("fold_" + std::to_string(f) + ".ckpt"), meta);
  }
  write_text(out / "train_log.jsonl", log_text(cfg, r.log));

  const auto& dims = cfg.model.dimension_names;
  ojson report;
  report["header"] = header_json(cfg);
  ojson folds = ojson::array();
  std::ostringstream csv;
  csv << cfg.header_line() << "\nfold,dimension,plcc,srcc,krcc\n";
  for (const auto& f : r.folds) {
    ojson fj;
    fj["fold"] = f.fold;
    fj["train_prompts"] = f.train_prompts;
    fj["test_prompts"] = f.test_prompts;
    fj["train_samples"] = f.train_samples;
    fj["test_samples"] = f.test_samples;
    fj["best_epoch"] = f.best_epoch;
    fj["best_loss"] = f.best_loss;
    for (std::size_t k = 0; k < dims.size(); ++k) {
      fj["metrics"][dims[k]] = metric_json(f.metrics[k]);
      csv << f.fold << ',' << dims[k] << ',' << num(f.metrics[k].plcc) << ',' << num(f.metrics[k].srcc) << ','
          << num(f.metrics[k].krcc) << '\n';
    }
    folds.push_back(fj);
    log << "fold " << f.fold << ": " << f.train_prompts << ":" << f.test_prompts << " prompts, best epoch "
        << f.best_epoch << '\n';
  }
  report["folds"] = folds;
  for (std::size_t k = 0; k < dims.size(); ++k) {
    report["mean"][dims[k]] = metric_json(r.mean[k]);
    csv << "mean," << dims[k] << ',' << num(r.mean[k].plcc) << ',' << num(r.mean[k].srcc) << ','
        << num(r.mean[k].krcc) << '\n';
    log << dims[k] << ": PLCC " << num(r.mean[k].plcc) << " SRCC " << num(r.mean[k].srcc) << " KRCC "
        << num(r.mean[k].krcc) << '\n';
  }
  write_text(out / "crossval_report.json", report.dump(2) + "\n");
  write_text(out / "crossval_metrics.csv", csv.str());
}

// ---------------------------------------------------------------- score

void cmd_score(const RunConfig& cfg, std::ostream& log) {
  require_path(cfg.paths.manifest, "manifest");
  require_path(cfg.paths.checkpoint, "checkpoint");
  const auto manifest = load_manifest(cfg.paths.manifest);
  const auto ckpt = load_checkpoint(cfg.paths.checkpoint);
  const auto& model = ckpt.model;
  const auto& dims = model.config().dimension_names;
  std::vector<std::string> ids = cfg.score_sample_ids;
  if (ids.empty())
    for (const auto& e : manifest.samples) ids.push_back(e.sample_id);

  const auto conditions = model.prepare_conditions();
  std::ostringstream os;
  os << cfg.header_line() << "\nsample_id";
  for (const auto& d : dims) os << ',' << d << "_raw";
  for (const auto& d : dims) os << ',' << d << "_clamped";
  os << '\n';
  for (const auto& id : ids) {
    const auto& e = manifest.find(id);
    const fs::path p = fs::path(e.feature_path).is_absolute() ? fs::path(e.feature_path) : feature_root(cfg) / e.feature_path;
    const FeatureBundle b = load_feature_bundle(p);
    if (static_cast<int>(b.dims().dim) != model.config().dim)
      throw ConfigError("checkpoint D=" + std::to_string(model.config().dim) + " but " + id + " has D=" +
                        std::to_string(b.dims().dim));
    const Vec<float> s = model.forward(SampleFeatures<float>::from_bundle(b), conditions);
    os << id;
    for (Eigen::Index k = 0; k < s.size(); ++k) os << ',' << num(s[k]);
    for (Eigen::Index k = 0; k < s.size(); ++k) os << ',' << num(std::clamp(static_cast<double>(s[k]), 0.0, 10.0));
    os << '\n';
  }
  write_text(fs::path(cfg.paths.output_dir) / "scores.csv", os.str());
  log << "score: wrote " << ids.size() << " rows\n";
}

// ---------------------------------------------------------------- stats

namespace {

// sample_id -> raw scores from a scores.csv written by cmd_score.
std::map<std::string, std::vector<double>> load_scores_csv(const fs::path& path, const std::vector<std::string>& dims) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open predictions " + path.string());
  std::map<std::string, std::vector<double>> out;
  std::string line;
  std::vector<int> cols;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (cols.empty()) {
      for (const auto& d : dims) {
        auto it = std::find(f.begin(), f.end(), d + "_raw");
        if (it == f.end()) throw FormatError("predictions lack column " + d + "_raw");
        cols.push_back(static_cast<int>(it - f.begin()));
      }
      continue;
    }
    std::vector<double> v;
    for (int c : cols) {
      if (c >= static_cast<int>(f.size())) throw FormatError("predictions line " + std::to_string(line_no) + " is short");
      v.push_back(std::strtod(f[c].c_str(), nullptr));
    }
    out[f[0]] = v;
  }
  return out;
}

}  // namespace

void cmd_stats(const RunConfig& cfg, std::ostream& log) {
  require_path(cfg.paths.manifest, "manifest");
  require_path(cfg.paths.labels, "labels");
  const auto manifest = load_manifest(cfg.paths.manifest);
  const auto labels = load_labels_csv(cfg.paths.labels);
  const auto& dims = labels.dimension_names;
  const fs::path out = cfg.paths.output_dir;

  auto dim_it = std::find(dims.begin(), dims.end(), cfg.report_dimension);
  if (dim_it == dims.end()) throw ConfigError("report.dimension '" + cfg.report_dimension + "' not in labels");
  const std::size_t report_k = static_cast<std::size_t>(dim_it - dims.begin());

  std::vector<ScoreRecord> records;
  std::vector<std::vector<double>> mos;
  std::vector<std::string> categories;
  std::vector<const ManifestEntry*> entries;
  for (const auto& e : manifest.samples) {
    auto it = labels.mos.find(e.sample_id);
    if (it == labels.mos.end()) continue;
    records.push_back({e.method_id, e.prompt_id, it->second[report_k]});
    mos.push_back(it->second);
    categories.push_back(manifest.prompt_categories.at(e.prompt_id));
    entries.push_back(&e);
  }
  if (records.empty()) throw DataError("no labelled samples in manifest");

  const auto table = category_table(records, manifest.prompt_categories);
  write_text(out / "category_means.csv", cell_csv(cfg.header_line(), table, "method", "category"));
  ojson tj;
  tj["header"] = header_json(cfg);
  tj["dimension"] = cfg.report_dimension;
  tj["cells"] = cell_json(table, "method", "category");
  write_text(out / "category_means.json", tj.dump(2) + "\n");

  std::map<std::string, std::vector<std::vector<double>>> predictions;
  if (!cfg.paths.predictions.empty()) {
    const auto scores = load_scores_csv(cfg.paths.predictions, dims);
    auto& p = predictions["hyperscore"];
    for (const auto* e : entries) {
      auto it = scores.find(e->sample_id);
      if (it == scores.end()) throw DataError("no prediction for sample " + e->sample_id);
      p.push_back(it->second);
    }
  }
  if (cfg.modes.baseline) {
    auto& p = predictions["baseline_cosine"];
    for (const auto* e : entries) {
      const fs::path path = fs::path(e->feature_path).is_absolute() ? fs::path(e->feature_path) : feature_root(cfg) / e->feature_path;
      p.emplace_back(dims.size(), baseline_cosine_score(load_feature_bundle(path)));
    }
  }
  if (predictions.empty()) {
    log << "stats: category table written; no prediction sources for correlations\n";
    return;
  }
  const auto rows = correlation_table(predictions, mos, dims, cfg.modes.logistic_mapping);
  std::ostringstream csv;
  csv << cfg.header_line() << "\nmetric,dimension,plcc,srcc,krcc\n";
  ojson cj;
  cj["header"] = header_json(cfg);
  cj["logistic_mapping"] = cfg.modes.logistic_mapping;
  cj["rows"] = ojson::array();
  for (const auto& r : rows) {
    csv << r.metric << ',' << r.dimension << ',' << num(r.plcc) << ',' << num(r.srcc) << ',' << num(r.krcc) << '\n';
    cj["rows"].push_back({{"metric", r.metric}, {"dimension", r.dimension},
                          {"correlation", metric_json({r.plcc, r.srcc, r.krcc})}});
    log << r.metric << ' ' << r.dimension << ": PLCC " << num(r.plcc) << " SRCC " << num(r.srcc) << " KRCC "
        << num(r.krcc) << '\n';
  }
  write_text(out / "correlations.csv", csv.str());
  write_text(out / "correlations.json", cj.dump(2) + "\n");

  std::ostringstream ccsv;
  ccsv << cfg.header_line() << "\ndimension,metric,category,srcc,rank,count\n";
  ojson ccj;
  ccj["header"] = header_json(cfg);
  for (std::size_t k = 0; k < dims.size(); ++k) {
    std::map<std::string, std::vector<double>> per;
    for (const auto& [metric, p] : predictions)
      for (const auto& row : p) per[metric].push_back(row[k]);
    std::vector<double> y;
    for (const auto& m : mos) y.push_back(m[k]);
    const auto cells = category_srcc_table(per, y, categories);
    for (const auto& c : cells)
      ccsv << dims[k] << ',' << c.row << ',' << c.column << ',' << num(c.value) << ',' << c.rank << ',' << c.count << '\n';
    ccj["dimensions"][dims[k]] = cell_json(cells, "metric", "category");
  }
  write_text(out / "category_srcc.csv", ccsv.str());
  write_text(out / "category_srcc.json", ccj.dump(2) + "\n");
}

// ---------------------------------------------------------------- gradcheck

namespace {

template <typename T>
std::vector<TrainSample<T>> gradcheck_batch(const RunConfig& cfg, const ModelConfig& mc) {
  std::vector<TrainSample<T>> batch;
  const CounterRng rng = CounterRng(cfg.seed).child("gradcheck.targets");
  for (int b = 0; b < 4; ++b) {
    TrainSample<T> s;
    s.sample_id = "g" + std::to_string(b);
    s.features = std::make_shared<const SampleFeatures<T>>(
        SampleFeatures<T>::from_bundle(synth_toy_bundle(cfg.seed * 31 + b, tiny_feature_dims())));
    s.target.resize(mc.num_conditions());
    for (int k = 0; k < mc.num_conditions(); ++k) s.target[k] = static_cast<T>(10.0 * rng.uniform(b * 16 + k));
    batch.push_back(std::move(s));
  }
  return batch;
}

template <typename T>
std::vector<const TrainSample<T>*> pointers(const std::vector<TrainSample<T>>& v) {
  std::vector<const TrainSample<T>*> out;
  for (const auto& s : v) out.push_back(&s);
  return out;
}

}  // namespace

GradcheckReport gradcheck_tiny(const RunConfig& cfg, bool f32) {
  const ModelConfig mc = tiny_model_config(cfg.seed);
  const Objective obj{1.0, cfg.train.lambda, cfg.train.epsilon};
  const auto batch = gradcheck_batch<double>(cfg, mc);
  const auto ptrs = pointers(batch);
  if (!f32) return gradcheck<double>(HyperScoreModel<double>(mc), SampleSpan<double>(ptrs), obj, 1e-4, 1e-4);

  // f32 analytic gradients against f64 differences of the same weights
  const HyperScoreModel<float> model(mc);
  const auto batch32 = gradcheck_batch<float>(cfg, mc);
  const auto ptrs32 = pointers(batch32);
  HyperScoreModel<float> g32;
  loss_and_grad(model, SampleSpan<float>(ptrs32), obj, &g32);
  return gradcheck<double>(model.cast<double>(), SampleSpan<double>(ptrs), obj, 1e-2, 1e-4,
                           [&](HyperScoreModel<double>& g) { g = g32.cast<double>(); });
}


int cmd_gradcheck(const RunConfig& cfg, std::ostream& log) {
  const auto& precision = cfg.modes.gradcheck_precision;
  if (precision != "f64" && precision != "f32") throw ConfigError("modes.gradcheck_precision must be f32 or f64");
  const auto rep = gradcheck_tiny(cfg, precision == "f32");
  ojson j;
  j["header"] = header_json(cfg);
  j["precision"] = cfg.modes.gradcheck_precision;
  j["threshold"] = rep.threshold;
  j["passed"] = rep.passed;
  for (const auto& [group, worst] : rep.worst_by_group) {
    j["worst_by_group"][group] = worst;
    log << "gradcheck " << group << ": worst relative error " << num(worst)
        << (worst < rep.threshold ? "  ok" : "  FAIL") << '\n';
  }
  for (const auto& t : rep.tensors)
    j["tensors"].push_back({{"name", t.tensor}, {"max_rel_error", t.max_rel_error}, {"worst_index", t.worst_index}});
  write_text(fs::path(cfg.paths.output_dir) / "gradcheck_report.json", j.dump(2) + "\n");
  log << "gradcheck " << (rep.passed ? "passed" : "FAILED") << " (" << cfg.modes.gradcheck_precision << ", threshold "
      << num(rep.threshold) << ")\n";
  return rep.passed ? 0 : 3;
}

}  // namespace hyperscore
