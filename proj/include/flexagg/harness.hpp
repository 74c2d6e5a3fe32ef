#pragma once

// Experiment plumbing: INI configuration, profile CSVs, seeded trials and
// the result files (summary.csv, distributions.json, manifest.json).

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "flexagg/federated.hpp"
#include "flexagg/flexibility.hpp"
#include "flexagg/protocols.hpp"
#include "flexagg/usecases.hpp"

#ifndef FLEXAGG_VERSION
#define FLEXAGG_VERSION "unknown"
#endif

namespace flexagg {

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
  int T = 6;
  double dt = 1.0;
  int N = 10;
  std::uint64_t seed = 1;
  double epsilon_rel = 1e-3;
  int grid_points = 200;
  int max_iters = 100;
  double init_step = 1.0;
  double tol = 1e-5;
  int trials = 10;
  std::string task = "volume-ratio";  // volume-ratio | peak | cost | all
  int threads = 1;

  Horizon horizon() const { return Horizon(T, dt); }

  AscentConfig ascent() const {
    AscentConfig a;
    a.max_iters = max_iters;
    a.init_step = init_step;
    a.tol = tol;
    a.epsilon_rel = epsilon_rel;
    a.grid_points = grid_points;
    return a;
  }

  bool wants_peak() const { return task == "peak" || task == "all"; }
  bool wants_cost() const { return task == "cost" || task == "all"; }

  bool operator==(const ExperimentConfig&) const = default;
};

inline void validate(const ExperimentConfig& c) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::kInvalidArgument, "config: " + what);
  };
  require(c.T >= 2, "horizon.T must be ≥ 2");
  require(c.dt > 0.0 && std::isfinite(c.dt), "horizon.dt must be positive");
  require(c.N >= 1, "fleet.N must be positive");
  require(c.epsilon_rel > 0.0 && std::isfinite(c.epsilon_rel), "projection.epsilon-rel must be positive");
  require(c.grid_points >= 1, "volume.grid-points must be positive");
  require(c.max_iters >= 1, "ascent.max-iters must be positive");
  require(c.init_step > 0.0 && std::isfinite(c.init_step), "ascent.init-step must be positive");
  require(c.tol > 0.0 && std::isfinite(c.tol), "ascent.tol must be positive");
  require(c.trials >= 1, "experiment.trials must be positive");
  require(c.threads >= 1, "experiment.threads must be positive");
  require(c.task == "volume-ratio" || c.task == "peak" || c.task == "cost" || c.task == "all",
          "experiment.task must be volume-ratio, peak, cost or all");
}

namespace detail {

template <class V>
V ini_get(const boost::property_tree::ptree& pt, const std::string& key, V fallback) {
  const auto node = pt.get_child_optional(boost::property_tree::ptree::path_type(key, '.'));
  if (!node) return fallback;
  const std::string raw = node->get_value<std::string>();
  if constexpr (std::is_same_v<V, std::string>) {
    return raw;
  } else {
    V out{};
    const char* b = raw.data();
    const char* e = raw.data() + raw.size();
    const auto res = std::from_chars(b, e, out);
    if (res.ec != std::errc() || res.ptr != e) {
      throw Error(ErrorCode::kInvalidArgument, "config: " + key + " = '" + raw + "' is not a valid number");
    }
    return out;
  }
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline ExperimentConfig config_from_ini_text(const std::string& text) {
  boost::property_tree::ptree pt;
  std::istringstream in(text);
  try {
    boost::property_tree::read_ini(in, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("config: ") + e.what());
  }
  static const std::set<std::string> known = {
      "horizon.T",           "horizon.dt",     "fleet.N",          "fleet.seed",  "projection.epsilon-rel",
      "volume.grid-points",  "ascent.max-iters", "ascent.init-step", "ascent.tol", "experiment.trials",
      "experiment.task",     "experiment.threads"};
  for (const auto& [section, body] : pt) {
    if (body.empty()) throw Error(ErrorCode::kInvalidArgument, "config: key '" + section + "' outside a section");
    for (const auto& [key, value] : body) {
      if (!known.count(section + "." + key)) {
        throw Error(ErrorCode::kInvalidArgument, "config: unknown key " + section + "." + key);
      }
    }
  }
  ExperimentConfig c;
  c.T = detail::ini_get(pt, "horizon.T", c.T);
  c.dt = detail::ini_get(pt, "horizon.dt", c.dt);
  c.N = detail::ini_get(pt, "fleet.N", c.N);
  c.seed = detail::ini_get(pt, "fleet.seed", c.seed);
  c.epsilon_rel = detail::ini_get(pt, "projection.epsilon-rel", c.epsilon_rel);
  c.grid_points = detail::ini_get(pt, "volume.grid-points", c.grid_points);
  c.max_iters = detail::ini_get(pt, "ascent.max-iters", c.max_iters);
  c.init_step = detail::ini_get(pt, "ascent.init-step", c.init_step);
  c.tol = detail::ini_get(pt, "ascent.tol", c.tol);
  c.trials = detail::ini_get(pt, "experiment.trials", c.trials);
  c.task = detail::ini_get(pt, "experiment.task", c.task);
  c.threads = detail::ini_get(pt, "experiment.threads", c.threads);
  validate(c);
  return c;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  return config_from_ini_text(read_text_file(path));
}

inline std::string to_ini(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "[horizon]\nT = " << c.T << "\ndt = " << detail::format_double(c.dt) << "\n\n"
    << "[fleet]\nN = " << c.N << "\nseed = " << c.seed << "\n\n"
    << "[projection]\nepsilon-rel = " << detail::format_double(c.epsilon_rel) << "\n\n"
    << "[volume]\ngrid-points = " << c.grid_points << "\n\n"
    << "[ascent]\nmax-iters = " << c.max_iters << "\ninit-step = " << detail::format_double(c.init_step)
    << "\ntol = " << detail::format_double(c.tol) << "\n\n"
    << "[experiment]\ntrials = " << c.trials << "\ntask = " << c.task << "\nthreads = " << c.threads << "\n";
  return o.str();
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"T", c.T},
          {"dt", c.dt},
          {"N", c.N},
          {"seed", c.seed},
          {"epsilon_rel", c.epsilon_rel},
          {"grid_points", c.grid_points},
          {"max_iters", c.max_iters},
          {"init_step", c.init_step},
          {"tol", c.tol},
          {"trials", c.trials},
          {"task", c.task},
          {"threads", c.threads}};
}

// ---------------------------------------------------------------------------
// Profiles

enum class ProfileKind { kLoad, kPrice };

/// One numeric column, optional header, exactly T data rows.
inline Vec parse_profile_csv(const std::string& text, int T, const std::string& source = "<csv>") {
  std::vector<double> values;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool seen_data = false;
  auto trim = [](std::string s) {
    const auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::string cell = trim(line);
    if (cell.empty()) continue;
    double v = 0.0;
    const char* b = cell.data();
    const char* e = cell.data() + cell.size();
    const auto res = std::from_chars(b, e, v);
    const bool numeric = res.ec == std::errc() && res.ptr == e && std::isfinite(v);
    if (!numeric) {
      if (!seen_data && values.empty() && line_no == 1) {
        seen_data = true;  // header
        continue;
      }
      throw Error(ErrorCode::kNonNumericCell,
                  source + ":" + std::to_string(line_no) + ": '" + cell + "' is not a single numeric cell");
    }
    seen_data = true;
    values.push_back(v);
  }
  if (static_cast<int>(values.size()) != T) {
    throw Error(ErrorCode::kRowCountMismatch, source + ": expected " + std::to_string(T) + " data rows, found " +
                                                  std::to_string(values.size()) + " (last line " +
                                                  std::to_string(line_no) + ")");
  }
  return Eigen::Map<const Vec>(values.data(), T);
}

inline Vec ingest_profile_csv(const std::filesystem::path& path, int T) {
  return parse_profile_csv(read_text_file(path), T, path.string());
}

/// Synthetic commercial-building day, kW, peaking in hour 19.
inline const std::vector<double>& evening_peak_day() {
  static const std::vector<double> day = {52, 49, 47, 46, 46, 48, 55, 63, 70, 74, 76, 77,
                                          78, 77, 76, 78, 84, 95, 108, 102, 90, 77, 65, 57};
  return day;
}

/// Synthetic day-ahead price, $/kWh.
inline const std::vector<double>& day_ahead_price() {
  static const std::vector<double> day = {0.028, 0.026, 0.025, 0.025, 0.026, 0.029, 0.034, 0.040,
                                          0.044, 0.046, 0.047, 0.048, 0.049, 0.050, 0.052, 0.056,
                                          0.064, 0.078, 0.095, 0.088, 0.070, 0.055, 0.042, 0.034};
  return day;
}

/// The T hourly slots of a 24-hour profile ending with hour 22 (T ≤ 22), or
/// the whole day repeated for longer horizons.
inline Vec window_of_day(const std::vector<double>& day, int T) {
  Vec out(T);
  const int start = T <= 22 ? 22 - T : 0;
  for (int t = 0; t < T; ++t) out[t] = day[static_cast<size_t>((start + t) % 24)];
  return out;
}

inline Vec default_load_profile(int T) { return window_of_day(evening_peak_day(), T); }
inline Vec default_price_profile(int T) { return window_of_day(day_ahead_price(), T); }

// ---------------------------------------------------------------------------
// Trials

struct UseCaseRecord {
  double centralized = 0.0;
  double avg = 0.0;
  double proposed = 0.0;
  GapReport gaps;
};

struct TrialRecord {
  int trial = 0;
  std::uint64_t seed = 0;
  double r_ratio = 1.0;
  double logJ_avg = 0.0;
  double logJ_opt = 0.0;
  int evaluations = 0;
  int accepted = 0;
  int skipped_gradients = 0;  // summed over evaluations
  std::optional<UseCaseRecord> peak;
  std::optional<UseCaseRecord> cost;
  double seconds = 0.0;
};

/// Normalized volume ratio (vol ũ(h_opt) / vol ũ(h_avg))^{1/T}.
inline double volume_ratio(double logJ_opt, double logJ_avg, int T) { return std::exp((logJ_opt - logJ_avg) / T); }

inline std::uint64_t trial_seed(const ExperimentConfig& c, int trial) {
  return c.seed + static_cast<std::uint64_t>(trial);
}

struct TrialArtifacts {
  std::vector<FacetOffsets> fleet;
  AscentResult ascent;
};

inline TrialArtifacts optimize_trial(const ExperimentConfig& c, std::uint64_t seed, Transcript* transcript = nullptr) {
  const Horizon hz = c.horizon();
  TrialArtifacts a;
  a.fleet = fleet_offsets(sample_covering_fleet(c.N, hz, seed), hz);
  AscentConfig ac = c.ascent();
  ac.mask_seed = seed ^ 0x5EC0DE0000ull;
  a.ascent = run_federated_optimization(a.fleet, hz, ac, transcript);
  return a;
}

inline UseCaseRecord run_use_case(const std::vector<FacetOffsets>& fleet, const AggregateModel& avg,
                                  const AggregateModel& opt, const Horizon& hz, const Vec* load, const Vec* price) {
  DispatchResult c, a, p;
  if (load) {
    c = peak_min_centralized(fleet, *load, hz);
    a = peak_min_over_aggregate(avg, *load, hz, DispatchMethod::kAvg);
    p = peak_min_over_aggregate(opt, *load, hz, DispatchMethod::kProposed);
  } else {
    c = cost_min_centralized(fleet, *price, hz);
    a = cost_min_over_aggregate(avg, *price, hz, DispatchMethod::kAvg);
    p = cost_min_over_aggregate(opt, *price, hz, DispatchMethod::kProposed);
  }
  for (const DispatchResult* r : {&c, &a, &p}) {
    if (r->status != SolveStatus::kOptimal) {
      throw Error(ErrorCode::kNumericFailure, std::string(to_string(r->method)) + " dispatch " +
                                                  std::string(to_string(r->status)));
    }
  }
  UseCaseRecord rec;
  rec.gaps = gap_metrics(c, a, p);
  rec.centralized = c.objective;
  rec.avg = a.objective;
  rec.proposed = p.objective;
  return rec;
}

inline TrialRecord run_trial(const ExperimentConfig& c, int trial, const Vec& load, const Vec& price) {
  const auto t0 = std::chrono::steady_clock::now();
  TrialRecord r;
  r.trial = trial;
  r.seed = trial_seed(c, trial);
  const TrialArtifacts a = optimize_trial(c, r.seed);
  const AscentState& first = a.ascent.trace.front();
  const AscentState& best = a.ascent.best();
  r.logJ_avg = first.logJ;
  r.logJ_opt = best.logJ;
  r.r_ratio = volume_ratio(best.logJ, first.logJ, c.T);
  r.evaluations = static_cast<int>(a.ascent.trace.size());
  for (const AscentState& s : a.ascent.trace) {
    r.accepted += s.accepted ? 1 : 0;
    r.skipped_gradients += static_cast<int>(s.skipped_dsrs.size());
  }
  if (c.wants_peak() || c.wants_cost()) {
    const Horizon hz = c.horizon();
    const AggregationOptions ao{{}, r.seed ^ 0xA66E0000ull, 0};
    const AggregateModel avg = aggregate(a.fleet, first.h_tilde, hz, ao).model;
    const AggregateModel opt = aggregate(a.fleet, a.ascent.h_opt, hz, ao).model;
    if (c.wants_peak()) r.peak = run_use_case(a.fleet, avg, opt, hz, &load, nullptr);
    if (c.wants_cost()) r.cost = run_use_case(a.fleet, avg, opt, hz, nullptr, &price);
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// All trials of a config. Trials are distributed over `threads` workers;
/// records come back in trial order.
inline std::vector<TrialRecord> run_experiment(const ExperimentConfig& c, const Vec& load, const Vec& price) {
  validate(c);
  if (load.size() != c.T || price.size() != c.T) throw Error(ErrorCode::kDimensionMismatch, "profiles must have length T");
  std::vector<TrialRecord> out(static_cast<size_t>(c.trials));
  std::vector<std::exception_ptr> errors(static_cast<size_t>(c.trials));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < c.trials; i = next++) {
      try {
        out[static_cast<size_t>(i)] = run_trial(c, i, load, price);
      } catch (...) {
        errors[static_cast<size_t>(i)] = std::current_exception();
      }
    }
  };
  const int workers = std::min(c.threads, c.trials);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Results

/// Linear interpolation between order statistics (q in [0, 1]).
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline nlohmann::json distribution(const std::vector<double>& v) {
  if (v.empty()) return {{"count", 0}};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  return {{"count", v.size()},
          {"min", quantile(v, 0.0)},
          {"p10", quantile(v, 0.1)},
          {"q1", quantile(v, 0.25)},
          {"median", quantile(v, 0.5)},
          {"q3", quantile(v, 0.75)},
          {"p90", quantile(v, 0.9)},
          {"max", quantile(v, 1.0)},
          {"mean", mean}};
}

inline std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// One row per trial; no timings, so identical runs give identical bytes.
inline std::string summary_csv(const std::vector<TrialRecord>& records) {
  std::ostringstream o;
  o << "trial,seed,r_ratio,logJ_avg,logJ_opt,evaluations,accepted,skipped_gradients,"
       "peak_centralized,peak_avg,peak_proposed,peak_gap_avg,peak_gap_proposed,peak_improvement,"
       "cost_centralized,cost_avg,cost_proposed,cost_gap_avg,cost_gap_proposed,cost_improvement\n";
  auto use_case = [&](const std::optional<UseCaseRecord>& u) {
    if (!u) {
      o << ",,,,,";
      return;
    }
    o << csv_number(u->centralized) << ',' << csv_number(u->avg) << ',' << csv_number(u->proposed) << ','
      << csv_number(u->gaps.gap_avg) << ',' << csv_number(u->gaps.gap_proposed) << ','
      << csv_number(u->gaps.improvement);
  };
  for (const TrialRecord& r : records) {
    o << r.trial << ',' << r.seed << ',' << csv_number(r.r_ratio) << ',' << csv_number(r.logJ_avg) << ','
      << csv_number(r.logJ_opt) << ',' << r.evaluations << ',' << r.accepted << ',' << r.skipped_gradients << ',';
    use_case(r.peak);
    o << ',';
    use_case(r.cost);
    o << '\n';
  }
  return o.str();
}

inline nlohmann::json distributions_json(const std::vector<TrialRecord>& records) {
  std::vector<double> r, pg_avg, pg_opt, p_imp, cg_avg, cg_opt, c_imp;
  for (const TrialRecord& t : records) {
    r.push_back(t.r_ratio);
    if (t.peak) {
      pg_avg.push_back(t.peak->gaps.gap_avg);
      pg_opt.push_back(t.peak->gaps.gap_proposed);
      p_imp.push_back(t.peak->gaps.improvement);
    }
    if (t.cost) {
      cg_avg.push_back(t.cost->gaps.gap_avg);
      cg_opt.push_back(t.cost->gaps.gap_proposed);
      c_imp.push_back(t.cost->gaps.improvement);
    }
  }
  nlohmann::json j = {{"r_ratio", distribution(r)}};
  if (!pg_avg.empty()) {
    j["peak_gap_avg"] = distribution(pg_avg);
    j["peak_gap_proposed"] = distribution(pg_opt);
    j["peak_improvement"] = distribution(p_imp);
  }
  if (!cg_avg.empty()) {
    j["cost_gap_avg"] = distribution(cg_avg);
    j["cost_gap_proposed"] = distribution(cg_opt);
    j["cost_improvement"] = distribution(c_imp);
  }
  return j;
}

struct EmittedPaths {
  std::filesystem::path summary, distributions, manifest;
  std::vector<std::string> warnings;
};

/// Writes summary.csv, distributions.json and manifest.json into `out_dir`.
inline EmittedPaths emit_results(const std::vector<TrialRecord>& records, const std::filesystem::path& out_dir,
                                 const nlohmann::json& manifest_extra = nlohmann::json::object()) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + out_dir.string() + ": " + ec.message());
  EmittedPaths p{out_dir / "summary.csv", out_dir / "distributions.json", out_dir / "manifest.json", {}};
  if (records.empty()) p.warnings.push_back("no trial records; writing empty results");
  write_text_file(p.summary, summary_csv(records));
  write_text_file(p.distributions, distributions_json(records).dump(2) + "\n");
  nlohmann::json m = manifest_extra;
  m["version"] = FLEXAGG_VERSION;
  nlohmann::json timings = nlohmann::json::array();
  double total = 0.0;
  for (const TrialRecord& r : records) {
    timings.push_back({{"trial", r.trial}, {"seconds", r.seconds}});
    total += r.seconds;
  }
  m["trial_timings"] = timings;
  m["trial_seconds_total"] = total;
  m["warnings"] = p.warnings;
  write_text_file(p.manifest, m.dump(2) + "\n");
  return p;
}

inline nlohmann::json to_json(const TrialRecord& r) {
  nlohmann::json j = {{"trial", r.trial},
                      {"seed", r.seed},
                      {"r_ratio", r.r_ratio},
                      {"logJ_avg", r.logJ_avg},
                      {"logJ_opt", r.logJ_opt},
                      {"evaluations", r.evaluations},
                      {"accepted", r.accepted},
                      {"skipped_gradients", r.skipped_gradients}};
  auto use_case = [](const UseCaseRecord& u) {
    return nlohmann::json{{"centralized", u.centralized},
                          {"avg", u.avg},
                          {"proposed", u.proposed},
                          {"gap_avg", u.gaps.gap_avg},
                          {"gap_proposed", u.gaps.gap_proposed},
                          {"improvement", u.gaps.improvement},
                          {"absolute_gaps", u.gaps.absolute}};
  };
  if (r.peak) j["peak"] = use_case(*r.peak);
  if (r.cost) j["cost"] = use_case(*r.cost);
  return j;
}

}  // namespace flexagg
