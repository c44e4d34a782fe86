#include "hyperscore/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "hyperscore/errors.hpp"

namespace hyperscore {

namespace {

void check_pair(std::span<const double> x, std::span<const double> y, const char* who) {
  if (x.size() != y.size()) throw ArgumentError(std::string(who) + ": length mismatch");
  if (x.size() < 2) throw ArgumentError(std::string(who) + ": need at least two observations");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw DataError(std::string(who) + ": non-finite input");
}

double pearson_unchecked(std::span<const double> x, std::span<const double> y, const char* who) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw UndefinedCorrelationError(std::string(who) + ": zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// Sum over tie groups of t (t - 1) / 2 for an already sorted range.
template <typename It, typename Eq>
std::int64_t tied_pairs(It first, It last, Eq eq) {
  std::int64_t total = 0;
  while (first != last) {
    It run = first + 1;
    while (run != last && eq(*first, *run)) ++run;
    const std::int64_t t = run - first;
    total += t * (t - 1) / 2;
    first = run;
  }
  return total;
}

// Merge sort counting inversions (swaps needed to sort).
std::int64_t count_inversions(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t inv = count_inversions(v, buf, lo, mid) + count_inversions(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      inv += static_cast<std::int64_t>(mid - i);
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + lo, buf.begin() + hi, v.begin() + lo);
  return inv;
}

std::vector<int> min_ranks_desc(const std::vector<double>& values) {
  std::vector<int> ranks(values.size(), 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (std::isnan(values[i])) continue;
    int higher = 0;
    for (double v : values)
      if (!std::isnan(v) && v > values[i]) ++higher;
    ranks[i] = higher + 1;
  }
  return ranks;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i + 1;
    while (j < idx.size() && x[idx[j]] == x[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);  // mean of positions i+1 .. j
    for (std::size_t t = i; t < j; ++t) ranks[idx[t]] = r;
    i = j;
  }
  return ranks;
}

double plcc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, "plcc");
  return pearson_unchecked(x, y, "plcc");
}

double srcc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, "srcc");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson_unchecked(rx, ry, "srcc");
}

// Knight's O(n log n) tau-b: sort by (x, y), count ties, then count the
// discordant pairs as merge-sort inversions of y.
double krcc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, "krcc");
  const std::size_t n = x.size();
  std::vector<std::pair<double, double>> xy(n);
  for (std::size_t i = 0; i < n; ++i) xy[i] = {x[i], y[i]};
  std::sort(xy.begin(), xy.end());
  const std::int64_t n0 = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  const std::int64_t tx = tied_pairs(xy.begin(), xy.end(), [](const auto& a, const auto& b) { return a.first == b.first; });
  const std::int64_t txy = tied_pairs(xy.begin(), xy.end(), [](const auto& a, const auto& b) { return a == b; });
  std::vector<double> ys(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = xy[i].second;
  const std::int64_t swaps = count_inversions(ys, buf, 0, n);
  const std::int64_t ty = tied_pairs(ys.begin(), ys.end(), [](double a, double b) { return a == b; });
  const std::int64_t denom_x = n0 - tx, denom_y = n0 - ty;
  if (denom_x == 0 || denom_y == 0) throw UndefinedCorrelationError("krcc: all values tied");
  // concordant - discordant = n0 - tx - ty + txy - 2 * swaps
  const double s = static_cast<double>(n0 - tx - ty + txy - 2 * swaps);
  return std::clamp(s / std::sqrt(static_cast<double>(denom_x) * static_cast<double>(denom_y)), -1.0, 1.0);
}

double logistic5(const std::array<double, 5>& b, double x) {
  return b[0] * (0.5 - 1.0 / (1.0 + std::exp(b[1] * (x - b[2])))) + b[3] * x + b[4];
}

LogisticFit logistic_map(std::span<const double> preds, std::span<const double> mos) {
  if (preds.size() != mos.size()) throw ArgumentError("logistic_map: length mismatch");
  const std::size_t n = preds.size();
  if (n < 5) throw ArgumentError("logistic_map: need at least five points");
  const Eigen::Map<const Eigen::VectorXd> x(preds.data(), n), y(mos.data(), n);
  const double mx = x.mean(), my = y.mean();
  const double sx = std::sqrt((x.array() - mx).square().sum() / static_cast<double>(n));

  LogisticFit fit;
  if (!(sx > 0.0)) {
    fit.beta = {0.0, 0.0, mx, 0.0, my};
    fit.mapped.assign(n, my);
    fit.rms_residual = std::sqrt((y.array() - my).square().mean());
    fit.warning = true;
    return fit;
  }

  auto residuals = [&](const std::array<double, 5>& b) {
    Eigen::VectorXd r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = logistic5(b, x[i]) - y[i];
    return r;
  };
  struct Run {
    std::array<double, 5> beta;
    double sse;
    int iterations;
    bool converged;
  };
  auto run = [&](std::array<double, 5> beta) {
    Eigen::VectorXd r = residuals(beta);
    double sse = r.squaredNorm();
    double mu = 1e-3;
    bool converged = false;
    int it = 0;
    for (; it < 200; ++it) {
      Eigen::MatrixXd jac(n, 5);
      for (std::size_t i = 0; i < n; ++i) {
        const double s = 1.0 / (1.0 + std::exp(beta[1] * (x[i] - beta[2])));
        const double ds = s * (1.0 - s);
        jac(i, 0) = 0.5 - s;
        jac(i, 1) = beta[0] * ds * (x[i] - beta[2]);
        jac(i, 2) = -beta[0] * ds * beta[1];
        jac(i, 3) = x[i];
        jac(i, 4) = 1.0;
      }
      const Eigen::MatrixXd jtj = jac.transpose() * jac;
      const Eigen::VectorXd jtr = jac.transpose() * r;
      if (jtr.lpNorm<Eigen::Infinity>() < 1e-14 || sse < 1e-28) {
        converged = true;
        break;
      }
      bool improved = false;
      for (int tries = 0; tries < 30 && !improved; ++tries) {
        Eigen::MatrixXd a = jtj;
        for (int d = 0; d < 5; ++d) a(d, d) += mu * std::max(jtj(d, d), 1e-12);
        const Eigen::VectorXd delta = a.ldlt().solve(-jtr);
        std::array<double, 5> trial = beta;
        for (int d = 0; d < 5; ++d) trial[d] += delta[d];
        const Eigen::VectorXd rt = residuals(trial);
        const double st = rt.squaredNorm();
        if (std::isfinite(st) && st < sse) {
          const double rel = (sse - st) / std::max(sse, 1e-300);
          beta = trial;
          r = rt;
          sse = st;
          mu = std::max(mu / 10.0, 1e-12);
          improved = true;
          if (rel < 1e-15) converged = true;
        } else {
          mu *= 10.0;
        }
      }
      if (!improved) {
        converged = true;  // no descent direction left at any damping
        break;
      }
      if (converged) break;
    }
    return Run{beta, sse, it, converged};
  };

  // two starts: sigmoid over the MOS range, and the least-squares line
  const double cov = ((x.array() - mx) * (y.array() - my)).sum() / static_cast<double>(n);
  const double slope = cov / (sx * sx);
  const Run sigmoid = run({y.maxCoeff() - y.minCoeff(), 1.0 / sx, mx, 0.0, my});
  const Run linear = run({0.0, 1.0 / sx, mx, slope, my - slope * mx});
  const Run& best = linear.sse < sigmoid.sse ? linear : sigmoid;
  const auto& beta = best.beta;
  const double sse = best.sse;
  const int it = best.iterations;
  const bool converged = best.converged;
  fit.beta = beta;
  fit.iterations = it;
  fit.mapped.resize(n);
  for (std::size_t i = 0; i < n; ++i) fit.mapped[i] = logistic5(beta, x[i]);
  fit.rms_residual = std::sqrt(sse / static_cast<double>(n));
  fit.warning = !converged;
  return fit;
}

// ---------------------------------------------------------------- annotations

std::size_t AnnotationMatrix::sample_index(const std::string& id) const {
  auto it = std::find(samples.begin(), samples.end(), id);
  if (it == samples.end()) throw ConfigError("unknown sample id " + id);
  return static_cast<std::size_t>(it - samples.begin());
}

bool AnnotationMatrix::is_trapping(const std::string& id) const {
  if (std::find(sentinel_ids.begin(), sentinel_ids.end(), id) != sentinel_ids.end()) return true;
  for (const auto& [a, b] : duplicate_pairs)
    if (b == id) return true;  // the first presentation of a duplicate is a real stimulus
  return false;
}

void AnnotationMatrix::validate() const {
  if (scores.size() != subjects.size() * samples.size() * dimensions.size())
    throw DimensionError("annotation matrix size mismatch");
  for (double v : scores)
    if (!(v >= 0.0 && v <= 10.0) || v != std::floor(v)) throw DataError("score outside the 0..10 integer scale");
}

AnnotationMatrix parse_annotations_csv(const std::string& text, const std::vector<std::string>& dimension_order) {
  struct Row {
    std::string subject, sample, dim;
    double score;
    int line;
  };
  std::vector<Row> rows;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::vector<std::string> f;
    std::stringstream ss(t);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(trim(cell));
    if (rows.empty() && !f.empty() && f[0] == "subject_id") continue;
    if (f.size() != 4) throw FormatError("annotations line " + std::to_string(line_no) + ": expected 4 fields");
    char* end = nullptr;
    const double v = std::strtod(f[3].c_str(), &end);
    if (f[3].empty() || end != f[3].c_str() + f[3].size())
      throw FormatError("annotations line " + std::to_string(line_no) + ": bad score '" + f[3] + "'");
    if (!(v >= 0.0 && v <= 10.0) || v != std::floor(v))
      throw DataError("annotations line " + std::to_string(line_no) + ": score must be an integer in 0..10");
    if (f[0].empty() || f[1].empty() || f[2].empty())
      throw FormatError("annotations line " + std::to_string(line_no) + ": empty field");
    rows.push_back({f[0], f[1], f[2], v, line_no});
  }
  if (rows.empty()) throw FormatError("annotations: no data rows");

  AnnotationMatrix m;
  auto index_of = [](std::vector<std::string>& names, const std::string& v) {
    auto it = std::find(names.begin(), names.end(), v);
    if (it != names.end()) return static_cast<std::size_t>(it - names.begin());
    names.push_back(v);
    return names.size() - 1;
  };
  m.dimensions = dimension_order;
  for (const auto& r : rows) {
    index_of(m.subjects, r.subject);
    index_of(m.samples, r.sample);
    if (dimension_order.empty()) {
      index_of(m.dimensions, r.dim);
    } else if (std::find(m.dimensions.begin(), m.dimensions.end(), r.dim) == m.dimensions.end()) {
      throw DataError("annotations line " + std::to_string(r.line) + ": unknown dimension '" + r.dim + "'");
    }
  }
  m.scores.assign(m.subjects.size() * m.samples.size() * m.dimensions.size(), std::numeric_limits<double>::quiet_NaN());
  for (const auto& r : rows) {
    double& cell = m.at(index_of(m.subjects, r.subject), index_of(m.samples, r.sample), index_of(m.dimensions, r.dim));
    if (!std::isnan(cell)) throw DataError("annotations line " + std::to_string(r.line) + ": duplicate rating");
    cell = r.score;
  }
  for (std::size_t s = 0; s < m.subjects.size(); ++s)
    for (std::size_t n = 0; n < m.samples.size(); ++n)
      for (std::size_t k = 0; k < m.dimensions.size(); ++k)
        if (std::isnan(m.at(s, n, k)))
          throw DataError("annotations: subject " + m.subjects[s] + " has no score for " + m.samples[n] + "/" +
                          m.dimensions[k]);
  return m;
}

AnnotationMatrix load_annotations_csv(const std::filesystem::path& path, const std::vector<std::string>& dims) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open annotations " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_annotations_csv(ss.str(), dims);
}

std::size_t ScreeningResult::retained_count() const {
  return static_cast<std::size_t>(std::count(retained.begin(), retained.end(), true));
}

ScreeningResult screen_trapping(const AnnotationMatrix& raw, const TrappingConfig& cfg) {
  raw.validate();
  if (raw.sentinel_ids.empty() && raw.duplicate_pairs.empty())
    throw ConfigError("screen_trapping: no trapping samples flagged");
  std::vector<std::size_t> sentinels;
  for (const auto& id : raw.sentinel_ids) sentinels.push_back(raw.sample_index(id));
  std::vector<std::pair<std::size_t, std::size_t>> dups;
  for (const auto& [a, b] : raw.duplicate_pairs) dups.emplace_back(raw.sample_index(a), raw.sample_index(b));

  ScreeningResult out;
  out.retained.assign(raw.num_subjects(), true);
  for (std::size_t s = 0; s < raw.num_subjects(); ++s) {
    std::string reason;
    for (std::size_t n : sentinels)
      for (std::size_t k = 0; k < raw.num_dimensions() && reason.empty(); ++k)
        if (raw.at(s, n, k) > cfg.t_low) {
          std::ostringstream os;
          os << "sentinel " << raw.samples[n] << " scored " << raw.at(s, n, k) << " on " << raw.dimensions[k]
             << " (limit " << cfg.t_low << ")";
          reason = os.str();
        }
    for (const auto& [a, b] : dups)
      for (std::size_t k = 0; k < raw.num_dimensions() && reason.empty(); ++k) {
        const double gap = std::abs(raw.at(s, a, k) - raw.at(s, b, k));
        if (gap > cfg.t_dup) {
          std::ostringstream os;
          os << "duplicate pair " << raw.samples[a] << "/" << raw.samples[b] << " differs by " << gap << " on "
             << raw.dimensions[k] << " (limit " << cfg.t_dup << ")";
          reason = os.str();
        }
      }
    if (!reason.empty()) {
      out.retained[s] = false;
      out.rejected.push_back({raw.subjects[s], "trapping", reason});
    }
  }
  return out;
}

ScreeningResult screen_bt500(const AnnotationMatrix& raw, const std::vector<bool>& candidates_in,
                             const Bt500Options& opt) {
  raw.validate();
  std::vector<bool> cand = candidates_in.empty() ? std::vector<bool>(raw.num_subjects(), true) : candidates_in;
  if (cand.size() != raw.num_subjects()) throw ArgumentError("screen_bt500: candidate mask size mismatch");
  std::vector<std::size_t> subj;
  for (std::size_t s = 0; s < cand.size(); ++s)
    if (cand[s]) subj.push_back(s);
  if (subj.size() < 3) throw ConfigError("screen_bt500: need at least three subjects");
  std::vector<std::size_t> stimuli_samples;
  for (std::size_t n = 0; n < raw.num_samples(); ++n)
    if (!raw.is_trapping(raw.samples[n])) stimuli_samples.push_back(n);
  if (stimuli_samples.empty()) throw ConfigError("screen_bt500: no stimuli left after removing trapping samples");

  std::vector<int> p(raw.num_subjects(), 0), q(raw.num_subjects(), 0);
  const double cnt = static_cast<double>(subj.size());
  for (std::size_t n : stimuli_samples)
    for (std::size_t k = 0; k < raw.num_dimensions(); ++k) {
      double mean = 0;
      for (std::size_t s : subj) mean += raw.at(s, n, k);
      mean /= cnt;
      double m2 = 0, m4 = 0;
      for (std::size_t s : subj) {
        const double d = raw.at(s, n, k) - mean;
        m2 += d * d;
        m4 += d * d * d * d;
      }
      const double sd = std::sqrt(m2 / (cnt - 1.0));
      if (!(sd > 0.0)) continue;  // unanimous stimulus: nobody deviates
      const double kurt = (m4 / cnt) / ((m2 / cnt) * (m2 / cnt));
      const double width = (kurt >= opt.kurtosis_low && kurt <= opt.kurtosis_high) ? 2.0 * sd : std::sqrt(20.0) * sd;
      for (std::size_t s : subj) {
        const double v = raw.at(s, n, k);
        if (v >= mean + width) ++p[s];
        if (v <= mean - width) ++q[s];
      }
    }

  ScreeningResult out;
  out.retained = cand;
  const double stimuli = static_cast<double>(stimuli_samples.size() * raw.num_dimensions());
  for (std::size_t s : subj) {
    const int pq = p[s] + q[s];
    if (pq == 0) continue;
    const double frac = pq / stimuli;
    const double sym = std::abs(p[s] - q[s]) / static_cast<double>(pq);
    if (frac > opt.exceed_ratio && sym < opt.symmetry_ratio) {
      out.retained[s] = false;
      std::ostringstream os;
      os << "P=" << p[s] << " Q=" << q[s] << " over " << stimuli << " stimuli ((P+Q)/NK=" << frac
         << ", |P-Q|/(P+Q)=" << sym << ")";
      out.rejected.push_back({raw.subjects[s], "bt500", os.str()});
    }
  }
  return out;
}

std::vector<SampleLabel> compute_mos(const AnnotationMatrix& raw, const std::vector<bool>& retained) {
  raw.validate();
  if (retained.size() != raw.num_subjects()) throw ArgumentError("compute_mos: retained mask size mismatch");
  const auto count = static_cast<std::size_t>(std::count(retained.begin(), retained.end(), true));
  if (count == 0) throw ConfigError("compute_mos: no retained subjects");
  std::vector<SampleLabel> out;
  for (std::size_t n = 0; n < raw.num_samples(); ++n) {
    if (raw.is_trapping(raw.samples[n])) continue;
    SampleLabel l{raw.samples[n], std::vector<double>(raw.num_dimensions(), 0.0), count};
    for (std::size_t k = 0; k < raw.num_dimensions(); ++k) {
      double sum = 0;
      for (std::size_t s = 0; s < raw.num_subjects(); ++s)
        if (retained[s]) sum += raw.at(s, n, k);
      l.mos[k] = sum / static_cast<double>(count);
    }
    out.push_back(std::move(l));
  }
  return out;
}

MosPipelineResult run_mos_pipeline(const AnnotationMatrix& raw, const TrappingConfig& trap, const Bt500Options& bt) {
  MosPipelineResult r;
  if (raw.sentinel_ids.empty() && raw.duplicate_pairs.empty()) {
    r.trapping.retained.assign(raw.num_subjects(), true);
  } else {
    r.trapping = screen_trapping(raw, trap);
  }
  r.bt500 = screen_bt500(raw, r.trapping.retained, bt);
  r.retained = r.bt500.retained;
  r.labels = compute_mos(raw, r.retained);
  return r;
}

// ---------------------------------------------------------------- reports

std::vector<TableCell> category_table(const std::vector<ScoreRecord>& records,
                                      const std::map<std::string, std::string>& prompt_categories) {
  std::vector<std::string> methods;
  std::map<std::pair<std::string, std::string>, std::pair<double, std::size_t>> acc;
  std::set<std::string> present;
  for (const auto& r : records) {
    auto it = prompt_categories.find(r.prompt_id);
    if (it == prompt_categories.end()) throw DataError("no category for prompt " + r.prompt_id);
    if (!is_known_category(it->second)) throw DataError("unknown category " + it->second);
    if (std::find(methods.begin(), methods.end(), r.method_id) == methods.end()) methods.push_back(r.method_id);
    auto& a = acc[{r.method_id, it->second}];
    a.first += r.value;
    a.second += 1;
    present.insert(it->second);
  }
  std::vector<TableCell> out;
  for (const auto& m : methods) {
    std::vector<TableCell> row;
    for (const char* c : kPromptCategories) {
      if (!present.count(c)) continue;
      auto it = acc.find({m, c});
      if (it == acc.end()) continue;
      row.push_back({m, c, it->second.first / static_cast<double>(it->second.second), 0, it->second.second});
    }
    std::vector<double> vals;
    for (const auto& cell : row) vals.push_back(cell.value);
    const auto ranks = min_ranks_desc(vals);
    for (std::size_t i = 0; i < row.size(); ++i) row[i].rank = ranks[i];
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

namespace {

double safe_corr(double (*fn)(std::span<const double>, std::span<const double>), std::span<const double> x,
                 std::span<const double> y) {
  try {
    return fn(x, y);
  } catch (const UndefinedCorrelationError&) {
    return std::numeric_limits<double>::quiet_NaN();
  } catch (const ArgumentError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

std::vector<CorrelationRow> correlation_table(const std::map<std::string, std::vector<std::vector<double>>>& predictions,
                                              const std::vector<std::vector<double>>& mos,
                                              const std::vector<std::string>& dimension_names, bool logistic) {
  std::vector<CorrelationRow> out;
  for (const auto& [metric, preds] : predictions) {
    if (preds.size() != mos.size()) throw DimensionError("correlation_table: " + metric + " sample count mismatch");
    for (std::size_t k = 0; k < dimension_names.size(); ++k) {
      std::vector<double> x, y;
      for (std::size_t n = 0; n < mos.size(); ++n) {
        if (preds[n].size() <= k || mos[n].size() <= k)
          throw DimensionError("correlation_table: missing dimension " + dimension_names[k]);
        x.push_back(preds[n][k]);
        y.push_back(mos[n][k]);
      }
      std::vector<double> xp = x;
      if (logistic && x.size() >= 5) xp = logistic_map(x, y).mapped;
      out.push_back({metric, dimension_names[k], safe_corr(&plcc, xp, y), safe_corr(&srcc, x, y),
                     safe_corr(&krcc, x, y)});
    }
  }
  return out;
}

std::vector<TableCell> category_srcc_table(const std::map<std::string, std::vector<double>>& predictions,
                                           const std::vector<double>& mos,
                                           const std::vector<std::string>& sample_categories) {
  if (sample_categories.size() != mos.size()) throw DimensionError("category_srcc_table: category count mismatch");
  std::vector<TableCell> out;
  for (const char* c : kPromptCategories) {
    std::vector<std::size_t> idx;
    for (std::size_t n = 0; n < mos.size(); ++n)
      if (sample_categories[n] == c) idx.push_back(n);
    if (idx.empty()) continue;
    std::vector<TableCell> column;
    for (const auto& [metric, preds] : predictions) {
      if (preds.size() != mos.size()) throw DimensionError("category_srcc_table: " + metric + " sample count mismatch");
      std::vector<double> x, y;
      for (std::size_t n : idx) {
        x.push_back(preds[n]);
        y.push_back(mos[n]);
      }
      column.push_back({metric, c, safe_corr(&srcc, x, y), 0, idx.size()});
    }
    std::vector<double> vals;
    for (const auto& cell : column) vals.push_back(cell.value);
    const auto ranks = min_ranks_desc(vals);
    for (std::size_t i = 0; i < column.size(); ++i) column[i].rank = ranks[i];
    out.insert(out.end(), column.begin(), column.end());
  }
  for (const auto& c : sample_categories)
    if (!is_known_category(c)) throw DataError("unknown category " + c);
  return out;
}

double baseline_cosine_score(const FeatureBundle& bundle) {
  bundle.validate();
  const Eigen::VectorXd eot = bundle.text_tokens.row(bundle.eot_index).cast<double>().transpose();
  const double en = eot.norm();
  if (!(en >= 1e-12)) throw DegenerateFeatureError("baseline: EOT feature has zero norm");
  double total = 0;
  for (const auto& v : bundle.views) {
    const Eigen::VectorXd mean = v.cast<double>().colwise().mean().transpose();
    const double mn = mean.norm();
    if (!(mn >= 1e-12)) throw DegenerateFeatureError("baseline: mean patch feature has zero norm");
    total += kClipScoreWeight * std::max(mean.dot(eot) / (mn * en), 0.0);
  }
  return total / static_cast<double>(bundle.views.size());
}

}  // namespace hyperscore
