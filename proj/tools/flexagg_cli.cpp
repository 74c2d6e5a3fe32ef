// flexagg: command-line front end for base-set optimization, aggregation,
// disaggregation, dispatch use cases, experiments and self-checks.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "flexagg/checks.hpp"
#include "flexagg/harness.hpp"

namespace fs = std::filesystem;
using namespace flexagg;

namespace {

struct Options {
  std::string config;
  std::string load;
  std::string price;
  std::string out = "results";
  std::string base;
  std::string target;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
};

int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kDimensionMismatch:
    case ErrorCode::kRowCountMismatch:
    case ErrorCode::kNonNumericCell:
    case ErrorCode::kIo:
      return 1;
    default:
      return 2;
  }
}

ExperimentConfig load_options(const Options& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.trials) c.trials = *o.trials;
  validate(c);
  return c;
}

nlohmann::json manifest(const std::string& command, const ExperimentConfig& c, const Options& o) {
  return {{"command", command},
          {"config", to_json(c)},
          {"config_ini", to_ini(c)},
          {"inputs", {{"config", o.config}, {"load", o.load}, {"price", o.price}, {"base", o.base}, {"target", o.target}}}};
}

void write_manifest(const fs::path& dir, nlohmann::json m, double seconds) {
  m["version"] = FLEXAGG_VERSION;
  m["seconds"] = seconds;
  write_text_file(dir / "manifest.json", m.dump(2) + "\n");
}

fs::path prepare_out(const Options& o) {
  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + o.out + ": " + ec.message());
  return fs::path(o.out);
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

nlohmann::json base_json(const ExperimentConfig& c, const AscentResult& a) {
  nlohmann::json trace = nlohmann::json::array();
  for (const AscentState& s : a.trace) {
    trace.push_back({{"iteration", s.iteration},
                     {"logJ", s.singular ? nlohmann::json(nullptr) : nlohmann::json(s.logJ)},
                     {"step", s.step},
                     {"accepted", s.accepted},
                     {"skipped_dsrs", s.skipped_dsrs}});
  }
  const AscentState& first = a.trace.front();
  const AscentState& best = a.best();
  return {{"T", c.T},
          {"dt", c.dt},
          {"epsilon", a.epsilon},
          {"h_avg", detail::to_json_vec(first.h_tilde.values)},
          {"h_opt", detail::to_json_vec(a.h_opt.values)},
          {"h0_opt", detail::to_json_vec(a.h0_opt.values)},
          {"logJ_avg", first.logJ},
          {"logJ_opt", best.logJ},
          {"r_ratio", volume_ratio(best.logJ, first.logJ, c.T)},
          {"trace", trace}};
}

/// Fleet of the config seed plus the base to aggregate over: from --base if
/// given, otherwise from a fresh optimization.
struct Prepared {
  std::vector<FacetOffsets> fleet;
  FacetOffsets base;
};

Prepared prepare_base(const ExperimentConfig& c, const Options& o) {
  const Horizon hz = c.horizon();
  Prepared p;
  if (o.base.empty()) {
    TrialArtifacts a = optimize_trial(c, c.seed);
    p.fleet = std::move(a.fleet);
    p.base = a.ascent.h_opt;
    return p;
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(o.base));
    p.base = FacetOffsets(detail::vec_from_json(j.at("h_opt")));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, o.base + ": " + e.what());
  }
  if (p.base.values.size() != hz.num_facets()) {
    throw Error(ErrorCode::kDimensionMismatch, o.base + ": base has " + std::to_string(p.base.values.size()) +
                                                   " offsets, config needs " + std::to_string(hz.num_facets()));
  }
  p.fleet = fleet_offsets(sample_covering_fleet(c.N, hz, c.seed), hz);
  return p;
}

int cmd_optimize(const Options& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig c = load_options(o);
  const fs::path dir = prepare_out(o);
  Transcript transcript;
  const TrialArtifacts a = optimize_trial(c, c.seed, &transcript);
  write_text_file(dir / "base.json", base_json(c, a.ascent).dump(2) + "\n");
  write_text_file(dir / "transcript.jsonl", transcript.to_json_lines());
  std::ostringstream csv;
  csv << "iteration,logJ,step,accepted,skipped\n";
  for (const AscentState& s : a.ascent.trace) {
    csv << s.iteration << ',' << (s.singular ? std::string() : csv_number(s.logJ)) << ',' << csv_number(s.step) << ','
        << (s.accepted ? 1 : 0) << ',' << s.skipped_dsrs.size() << '\n';
  }
  write_text_file(dir / "summary.csv", csv.str());
  write_manifest(dir, manifest("optimize-base", c, o), elapsed(t0));
  const AscentState& first = a.ascent.trace.front();
  std::printf("r = %.6f over %zu evaluations (log J %.6f -> %.6f)\n",
              volume_ratio(a.ascent.best().logJ, first.logJ, c.T), a.ascent.trace.size(), first.logJ,
              a.ascent.best().logJ);
  return 0;
}

int cmd_aggregate(const Options& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig c = load_options(o);
  const fs::path dir = prepare_out(o);
  const Prepared p = prepare_base(c, o);
  const AggregationResult agg = aggregate(p.fleet, p.base, c.horizon());
  nlohmann::json j = to_json(agg.model);
  j["excluded"] = agg.excluded;
  j["warnings"] = agg.warnings;
  write_text_file(dir / "aggregate.json", j.dump(2) + "\n");
  const double log_det = std::log(std::abs(agg.model.S_agg.determinant()));
  write_text_file(dir / "summary.csv", "N,T,condition,log_abs_det,excluded\n" + std::to_string(c.N) + ',' +
                                           std::to_string(c.T) + ',' + csv_number(agg.model.condition) + ',' +
                                           csv_number(log_det) + ',' + std::to_string(agg.excluded.size()) + '\n');
  write_manifest(dir, manifest("aggregate", c, o), elapsed(t0));
  for (const auto& w : agg.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("aggregate: cond(S_agg) = %.3g, %zu excluded\n", agg.model.condition, agg.excluded.size());
  return 0;
}

int cmd_disaggregate(const Options& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig c = load_options(o);
  const Horizon hz = c.horizon();
  const fs::path dir = prepare_out(o);
  const Prepared p = prepare_base(c, o);
  const AggregationResult agg = aggregate(p.fleet, p.base, hz);
  Vec target;
  if (o.target.empty()) {
    target = agg.model.s_agg + agg.model.S_agg * chebyshev_radius(HPolytope{hz, p.base}).center;
  } else {
    target = ingest_profile_csv(o.target, c.T);
  }
  const DisaggregationResult d = disaggregate(agg.model, agg.participants, target);
  nlohmann::json profiles = nlohmann::json::array();
  std::ostringstream csv;
  csv << "participant,dispatched,max_violation,energy\n";
  const Mat H = build_facet_matrix(hz);
  for (size_t i = 0; i < d.profiles.size(); ++i) {
    if (!d.profiles[i]) {
      profiles.push_back(nullptr);
      csv << i << ",0,,\n";
      continue;
    }
    const Vec& u = *d.profiles[i];
    profiles.push_back(detail::to_json_vec(u));
    csv << i << ",1," << csv_number((H * u - p.fleet[i].values).maxCoeff()) << ',' << csv_number(u.sum() * hz.dt)
        << '\n';
  }
  const nlohmann::json j = {{"target", detail::to_json_vec(target)},
                            {"u0", detail::to_json_vec(d.u0)},
                            {"profiles", profiles},
                            {"total", detail::to_json_vec(d.total())},
                            {"sum_error", (d.total() - target).cwiseAbs().maxCoeff()},
                            {"max_violation", max_feasibility_violation(d, agg.participants, hz)}};
  write_text_file(dir / "disaggregation.json", j.dump(2) + "\n");
  write_text_file(dir / "summary.csv", csv.str());
  write_manifest(dir, manifest("disaggregate", c, o), elapsed(t0));
  std::printf("disaggregate: |sum - target| = %.3g, worst facet violation %.3g\n", j["sum_error"].get<double>(),
              j["max_violation"].get<double>());
  return 0;
}

int cmd_usecase(const Options& o, const std::string& task) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig c = load_options(o);
  c.task = task;
  const Vec load = o.load.empty() ? default_load_profile(c.T) : ingest_profile_csv(o.load, c.T);
  const Vec price = o.price.empty() ? default_price_profile(c.T) : ingest_profile_csv(o.price, c.T);
  const fs::path dir = prepare_out(o);
  const TrialRecord r = run_trial(c, 0, load, price);
  const UseCaseRecord& u = task == "peak" ? *r.peak : *r.cost;
  std::ostringstream csv;
  csv << "method,objective,gap\n";
  csv << "Centralized," << csv_number(u.centralized) << ",0\n";
  csv << "AVG," << csv_number(u.avg) << ',' << csv_number(u.gaps.gap_avg) << '\n';
  csv << "Proposed," << csv_number(u.proposed) << ',' << csv_number(u.gaps.gap_proposed) << '\n';
  write_text_file(dir / "summary.csv", csv.str());
  write_text_file(dir / "usecase.json", to_json(r).dump(2) + "\n");
  write_manifest(dir, manifest("usecase " + task, c, o), elapsed(t0));
  std::printf("%s: centralized %.6g, AVG %.6g (gap %.4f), Proposed %.6g (gap %.4f)%s\n", task.c_str(), u.centralized,
              u.avg, u.gaps.gap_avg, u.proposed, u.gaps.gap_proposed, u.gaps.absolute ? " [absolute gaps]" : "");
  return 0;
}

int cmd_experiment(const Options& o, const std::string& task) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig c = load_options(o);
  c.task = task;
  const Vec load = o.load.empty() ? default_load_profile(c.T) : ingest_profile_csv(o.load, c.T);
  const Vec price = o.price.empty() ? default_price_profile(c.T) : ingest_profile_csv(o.price, c.T);
  const std::vector<TrialRecord> records = run_experiment(c, load, price);
  nlohmann::json m = manifest("experiment " + task, c, o);
  m["seconds"] = elapsed(t0);
  const EmittedPaths paths = emit_results(records, o.out, m);
  nlohmann::json results = nlohmann::json::array();
  for (const TrialRecord& r : records) results.push_back(to_json(r));
  write_text_file(fs::path(o.out) / "results.json", nlohmann::json{{"trials", results}}.dump(2) + "\n");
  int regressions = 0;
  for (const TrialRecord& r : records) regressions += r.r_ratio < 1.0 - 1e-3 ? 1 : 0;
  std::vector<double> rs;
  for (const TrialRecord& r : records) rs.push_back(r.r_ratio);
  std::printf("%d trials, median r = %.5f, %d below 1 - 1e-3; wrote %s\n", c.trials, quantile(rs, 0.5), regressions,
              paths.summary.string().c_str());
  return 0;
}

int cmd_check(const Options& o, const std::string& what) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig c = load_options(o);
  const fs::path dir = prepare_out(o);
  nlohmann::json report;
  bool pass = false;
  std::ostringstream csv;
  if (what == "gradients") {
    const GradientCheckSummary s = run_gradient_checks();
    nlohmann::json rows = nlohmann::json::array();
    csv << "kind,T,solve,compared,passed,max_rel_error\n";
    for (const auto& r : s.instances) {
      rows.push_back({{"kind", r.kind},
                      {"T", r.T},
                      {"solve", to_string(r.solve)},
                      {"compared", r.compared},
                      {"passed", r.passed},
                      {"max_rel_error", r.max_rel_error}});
      csv << r.kind << ',' << r.T << ',' << to_string(r.solve) << ',' << r.compared << ',' << r.passed << ','
          << csv_number(r.max_rel_error) << '\n';
    }
    pass = s.pass_fraction() >= 0.95;
    report = {{"instances", rows}, {"pass_fraction", s.pass_fraction()}, {"pass", pass}};
    std::printf("gradients: %d/%d coordinates within tolerance (%.1f%%) -> %s\n", s.passed(), s.compared(),
                100.0 * s.pass_fraction(), pass ? "pass" : "fail");
  } else {
    VolumeCheckOptions vo;
    vo.grid_points = c.grid_points;
    const VolumeCheckSummary s = run_volume_checks(vo);
    nlohmann::json fixtures = nlohmann::json::array(), mc = nlohmann::json::array();
    csv << "check,T,estimate,reference,tolerance,ok\n";
    for (const auto& f : s.fixtures) {
      fixtures.push_back({{"name", f.name}, {"estimate", f.estimate}, {"exact", f.exact}, {"rel_error", f.rel_error()}});
      csv << f.name << ",," << csv_number(f.estimate) << ',' << csv_number(f.exact) << ",0.02,"
          << (f.rel_error() <= 0.02 ? 1 : 0) << '\n';
    }
    for (const auto& r : s.mc) {
      mc.push_back({{"T", r.T}, {"estimate", r.estimate}, {"mc", r.mc}, {"standard_error", r.standard_error}, {"ok", r.ok()}});
      csv << "monte-carlo," << r.T << ',' << csv_number(r.estimate) << ',' << csv_number(r.mc) << ','
          << csv_number(r.tolerance()) << ',' << (r.ok() ? 1 : 0) << '\n';
    }
    pass = s.fixtures_ok() && s.mc_ok() && s.gradient_ok();
    report = {{"fixtures", fixtures},
              {"monte_carlo", mc},
              {"gradient", {{"compared", s.gradient_compared}, {"passed", s.gradient_passed}, {"max_rel_error", s.gradient_max_rel_error}}},
              {"pass", pass}};
    std::printf("volume: fixtures %s, Monte Carlo %s, gradient %d/%d -> %s\n", s.fixtures_ok() ? "ok" : "FAIL",
                s.mc_ok() ? "ok" : "FAIL", s.gradient_passed, s.gradient_compared, pass ? "pass" : "fail");
  }
  write_text_file(dir / ("check_" + what + ".json"), report.dump(2) + "\n");
  write_text_file(dir / "summary.csv", csv.str());
  write_manifest(dir, manifest("check " + what, c, o), elapsed(t0));
  return pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated base-set optimization for aggregate flexibility"};
  app.require_subcommand(1);
  Options o;
  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "INI experiment configuration")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed", o.seed, "override fleet.seed");
  };

  auto* optimize = app.add_subcommand("optimize-base", "run the federated base-set ascent");
  common(optimize);

  auto* agg = app.add_subcommand("aggregate", "aggregate the fleet over a base set");
  common(agg);
  agg->add_option("--base", o.base, "base.json from optimize-base (default: optimize first)");

  auto* dis = app.add_subcommand("disaggregate", "split an aggregate target into participant profiles");
  common(dis);
  dis->add_option("--base", o.base, "base.json from optimize-base (default: optimize first)");
  dis->add_option("--target", o.target, "CSV aggregate target (default: image of the base set's center)");

  std::string usecase_task;
  auto* uc = app.add_subcommand("usecase", "dispatch against AVG, Proposed and centralized sets");
  common(uc);
  uc->add_option("task", usecase_task, "peak or cost")->required()->check(CLI::IsMember({"peak", "cost"}));
  uc->add_option("--load", o.load, "load CSV, kW");
  uc->add_option("--price", o.price, "price CSV, $/kWh");

  std::string experiment_task;
  auto* ex = app.add_subcommand("experiment", "seeded trials with result distributions");
  common(ex);
  ex->add_option("task", experiment_task, "volume-ratio, peak, cost or all")
      ->required()
      ->check(CLI::IsMember({"volume-ratio", "peak", "cost", "all"}));
  ex->add_option("--trials", o.trials, "override experiment.trials");
  ex->add_option("--load", o.load, "load CSV, kW");
  ex->add_option("--price", o.price, "price CSV, $/kWh");

  std::string check_what;
  auto* ck = app.add_subcommand("check", "finite-difference and Monte-Carlo self-checks");
  common(ck);
  ck->add_option("what", check_what, "gradients or volume")->required()->check(CLI::IsMember({"gradients", "volume"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*optimize) return cmd_optimize(o);
    if (*agg) return cmd_aggregate(o);
    if (*dis) return cmd_disaggregate(o);
    if (*uc) return cmd_usecase(o, usecase_task);
    if (*ex) return cmd_experiment(o, experiment_task);
    if (*ck) return cmd_check(o, check_what);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
