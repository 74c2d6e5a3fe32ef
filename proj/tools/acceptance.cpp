// acceptance: runs the eight acceptance criteria and prints one PASS/FAIL
// line for each. Details go to <out>/acceptance.json.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <string>

#include "flexagg/checks.hpp"
#include "flexagg/harness.hpp"

namespace fs = std::filesystem;
using namespace flexagg;

namespace {

struct Outcome {
  bool pass = false;
  std::string summary;
  nlohmann::json detail = nlohmann::json::object();
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome gradient_fidelity() {
  const GradientCheckSummary s = run_gradient_checks();
  Outcome o;
  o.pass = s.pass_fraction() >= 0.95 && s.seconds < 60.0;
  o.summary = fmt("%d/%d coordinates within 1e-3 (%.1f%%, need 95%%), %.1f s (limit 60 s)", s.passed(), s.compared(),
                  100.0 * s.pass_fraction(), s.seconds);
  int regularized = 0;
  for (const auto& r : s.instances) regularized += r.solve != JacobianSolve::kDirect ? 1 : 0;
  o.detail = {{"compared", s.compared()}, {"passed", s.passed()}, {"seconds", s.seconds},
              {"non_direct_solves", regularized}};
  return o;
}

Outcome volume_fidelity() {
  const VolumeCheckSummary s = run_volume_checks();
  Outcome o;
  o.pass = s.fixtures_ok(0.02) && s.mc_ok() && s.gradient_ok();
  int mc_ok = 0;
  for (const auto& r : s.mc) mc_ok += r.ok() ? 1 : 0;
  double worst_fixture = 0.0;
  for (const auto& f : s.fixtures) worst_fixture = std::max(worst_fixture, f.rel_error());
  o.summary = fmt("fixtures max rel err %.2e (limit 2e-2); Monte Carlo %d/%zu within max(3 se, 3%%); "
                  "gradient %d/%d active coordinates within 2%% (max %.2e)",
                  worst_fixture, mc_ok, s.mc.size(), s.gradient_passed, s.gradient_compared, s.gradient_max_rel_error);
  nlohmann::json mc = nlohmann::json::array();
  for (const auto& r : s.mc) mc.push_back({{"T", r.T}, {"estimate", r.estimate}, {"mc", r.mc}, {"se", r.standard_error}});
  o.detail = {{"mc", mc}, {"seconds", s.seconds}};
  return o;
}

/// Criteria 3 and 5 share the seeded N = 10, T = 6 run.
struct SeededRun {
  Horizon hz{6, 1.0};
  std::vector<FacetOffsets> fleet;
  AscentResult federated;
};

Outcome federated_equals_monolithic(SeededRun& run) {
  const std::uint64_t seed = 1;
  run.fleet = fleet_offsets(sample_covering_fleet(10, run.hz, seed), run.hz);
  AscentConfig cfg;
  Transcript transcript;
  run.federated = run_federated_optimization(run.fleet, run.hz, cfg, &transcript);
  const AscentResult mono = run_monolithic_reference(run.fleet, run.hz, cfg);
  const AscentResult plain = run_monolithic_reference(run.fleet, run.hz, cfg, false);

  auto max_gap = [](const AscentResult& a, const AscentResult& b, bool& aligned) {
    aligned = a.trace.size() == b.trace.size();
    double worst = 0.0;
    for (size_t i = 0; i < std::min(a.trace.size(), b.trace.size()); ++i) {
      if (a.trace[i].singular != b.trace[i].singular) {
        aligned = false;
        continue;
      }
      if (!a.trace[i].singular) worst = std::max(worst, std::abs(a.trace[i].logJ - b.trace[i].logJ));
    }
    return worst;
  };
  bool aligned = false, plain_aligned = false;
  const double worst = max_gap(run.federated, mono, aligned);
  const double plain_worst = max_gap(run.federated, plain, plain_aligned);

  // Secure sum against plain sums of the same fixed-point payloads.
  const FacetOffsets h_tilde = run.federated.trace.front().h_tilde;
  std::vector<Vec> payloads;
  for (const FacetOffsets& hi : run.fleet) payloads.push_back(pack_local_step(dsr_local_step(h_tilde, hi, run.hz)));
  const SecureSumSession session(10, 0xACCE55, 1, static_cast<size_t>(payloads.front().size()));
  std::vector<std::optional<FixedVec>> masked;
  for (int i = 0; i < 10; ++i) masked.push_back(session.mask(i, payloads[static_cast<size_t>(i)]));
  const Vec secure = secure_sum(masked, session), reference = plain_fixed_sum(payloads);
  bool bit_exact = secure.size() == reference.size();
  for (Eigen::Index k = 0; bit_exact && k < secure.size(); ++k) {
    bit_exact = std::memcmp(&secure[k], &reference[k], sizeof(double)) == 0;
  }

  Outcome o;
  o.pass = aligned && worst <= 1e-9 && bit_exact;
  o.summary = fmt("%zu iterates, max |log J federated - log J monolithic| = %.2e (limit 1e-9); secure sum %s "
                  "plain fixed-point sum over %zd entries; [info] vs double-precision sums: %.2e over %s traces",
                  run.federated.trace.size(), worst, bit_exact ? "bit-identical to" : "DIFFERS from", secure.size(),
                  plain_worst, plain_aligned ? "aligned" : "misaligned");
  o.detail = {{"iterates", run.federated.trace.size()},
              {"max_abs_diff", worst},
              {"bit_exact", bit_exact},
              {"double_reference_max_abs_diff", plain_worst},
              {"messages", transcript.messages.size()}};
  return o;
}

Outcome volume_ratio_improvement(int threads) {
  ExperimentConfig c;
  c.trials = 10;
  c.task = "volume-ratio";
  c.threads = threads;
  const auto t0 = std::chrono::steady_clock::now();
  const auto records = run_experiment(c, default_load_profile(c.T), default_price_profile(c.T));
  const double secs = seconds_since(t0);
  std::vector<double> r;
  int regressions = 0;
  for (const TrialRecord& t : records) {
    r.push_back(t.r_ratio);
    regressions += t.r_ratio < 1.0 - 1e-3 ? 1 : 0;
  }
  const double median = quantile(r, 0.5);
  Outcome o;
  o.pass = regressions == 0 && median >= 1.05 && secs <= 900.0;
  o.summary = fmt("min r %.4f, median r %.4f (need >= 1.05), max r %.4f, %d trials below 1 - 1e-3, %.0f s (limit 900 s)",
                  *std::min_element(r.begin(), r.end()), median, *std::max_element(r.begin(), r.end()), regressions, secs);
  o.detail = {{"r", r}, {"seconds", secs}};
  return o;
}

Outcome protocol_soundness(const SeededRun& run) {
  const Horizon& hz = run.hz;
  const Mat H = build_facet_matrix(hz);
  const AggregationResult agg = aggregate(run.fleet, run.federated.h_opt, hz);

  // Transformed sets inside their owners.
  long sampled = 0, inside = 0;
  for (size_t i = 0; i < run.fleet.size(); ++i) {
    const auto& p = agg.participants[i];
    if (!p.map) continue;
    HitAndRun walker(HPolytope{hz, run.federated.h_opt}, 500 + i);
    for (int s = 0; s < 1000; ++s) {
      if (s > 0) walker.step();
      const Vec u = p.map->apply(walker.current());
      ++sampled;
      inside += (H * u - run.fleet[i].values).maxCoeff() <= 1e-7 ? 1 : 0;
    }
  }

  // Disaggregation of interior targets.
  double worst_sum = 0.0, worst_violation = -std::numeric_limits<double>::infinity();
  HitAndRun targets(HPolytope{hz, run.federated.h_opt}, 99);
  for (int k = 0; k < 100; ++k) {
    for (int burn = 0; burn < 5; ++burn) targets.step();
    const Vec u_agg = agg.model.s_agg + agg.model.S_agg * targets.current();
    const DisaggregationResult d = disaggregate(agg.model, agg.participants, u_agg);
    worst_sum = std::max(worst_sum, (d.total() - u_agg).cwiseAbs().maxCoeff());
    worst_violation = std::max(worst_violation, max_feasibility_violation(d, agg.participants, hz));
  }

  // Brute-force Minkowski membership on small instances.
  int oracle_points = 0, oracle_inside = 0;
  for (int inst = 0; inst < 6; ++inst) {
    const int N = 2 + inst % 2, T = 2 + (inst / 2) % 2;
    const Horizon small(T, 1.0);
    const auto fleet = fleet_offsets(sample_covering_fleet(N, small, 300 + inst), small);
    AscentConfig cfg;
    cfg.max_iters = 20;
    const AscentResult a = run_federated_optimization(fleet, small, cfg);
    const AggregateModel m = aggregate(fleet, a.h_opt, small).model;
    std::vector<HPolytope> polys;
    for (const auto& h : fleet) polys.push_back({small, h});
    HitAndRun walker(HPolytope{small, a.h_opt}, 700 + inst);
    for (int s = 0; s < 50; ++s) {
      const auto [lo, hi] = walker.step();
      for (const Vec& u0 : {lo, hi, walker.current()}) {
        ++oracle_points;
        oracle_inside += minkowski_membership_oracle(polys, m.s_agg + m.S_agg * u0) ? 1 : 0;
      }
    }
  }

  Outcome o;
  o.pass = inside == sampled && worst_sum <= 1e-8 && worst_violation <= 1e-7 && oracle_inside == oracle_points;
  o.summary = fmt("%ld/%ld mapped samples inside their sets (tol 1e-7); 100 targets: max |sum - target| %.2e "
                  "(limit 1e-8), max violation %.2e (limit 1e-7); Minkowski oracle %d/%d",
                  inside, sampled, worst_sum, worst_violation, oracle_inside, oracle_points);
  o.detail = {{"excluded", agg.excluded}};
  return o;
}

Outcome use_case_ordering(int threads) {
  ExperimentConfig c;
  c.trials = 20;
  c.seed = 1001;
  c.task = "all";
  c.threads = threads;
  const auto records = run_experiment(c, default_load_profile(c.T), default_price_profile(c.T));
  int order_ok = 0, order_total = 0, peak_better = 0;
  std::vector<double> gap_avg, gap_opt, improvement, cost_imp;
  for (const TrialRecord& t : records) {
    for (const auto* u : {&*t.peak, &*t.cost}) {
      order_total += 2;
      order_ok += u->centralized <= u->proposed + 1e-7 ? 1 : 0;
      order_ok += u->centralized <= u->avg + 1e-7 ? 1 : 0;
    }
    peak_better += t.peak->gaps.gap_proposed <= t.peak->gaps.gap_avg ? 1 : 0;
    gap_avg.push_back(t.peak->gaps.gap_avg);
    gap_opt.push_back(t.peak->gaps.gap_proposed);
    improvement.push_back(t.peak->gaps.gap_avg - t.peak->gaps.gap_proposed);
    cost_imp.push_back(t.cost->gaps.gap_avg - t.cost->gaps.gap_proposed);
  }
  const double share = static_cast<double>(peak_better) / static_cast<double>(records.size());
  Outcome o;
  o.pass = order_ok == order_total && share >= 0.8 && quantile(improvement, 0.5) > 0.0;
  o.summary = fmt("centralized <= AVG, Proposed within 1e-7 in %d/%d comparisons; peak gap Proposed <= AVG on %d/%zu "
                  "(need 80%%); median peak gaps AVG %.1f%%, Proposed %.1f%%, median gap reduction %.1f points (need > 0); "
                  "[info] median cost gap reduction %.1f points",
                  order_ok, order_total, peak_better, records.size(), 100.0 * quantile(gap_avg, 0.5),
                  100.0 * quantile(gap_opt, 0.5), 100.0 * quantile(improvement, 0.5), 100.0 * quantile(cost_imp, 0.5));
  o.detail = distributions_json(records);
  return o;
}

Outcome privacy_scan_canary() {
  const Horizon hz(4, 1.0);
  const auto fleet = make_canary_fleet(6, hz, 2024);
  Transcript t;
  AscentConfig cfg;
  cfg.max_iters = 10;
  const AscentResult a = run_federated_optimization(fleet, hz, cfg, &t);
  const AggregationResult agg = aggregate(fleet, a.h_opt, hz, {}, &t);
  const Vec center = chebyshev_radius(HPolytope{hz, a.h_opt}).center;
  disaggregate(agg.model, agg.participants, agg.model.s_agg + agg.model.S_agg * center, &t);
  const std::string text = t.to_json_lines();
  const auto findings = privacy_scan(text, fleet);

  // The scan must notice a planted leak.
  Transcript leak;
  leak.push(BroadcastBase{0, fleet[3]});
  const bool control = !privacy_scan(leak.to_json_lines(), fleet).empty();

  Outcome o;
  o.pass = findings.empty() && control;
  o.summary = fmt("%zu messages (%zu bytes) scanned for %zu sentinel offsets: %zu findings; planted leak %s",
                  t.messages.size(), text.size(), fleet.size() * static_cast<size_t>(4 * hz.T), findings.size(),
                  control ? "detected" : "NOT detected");
  return o;
}

Outcome determinism(const fs::path& out, int threads) {
  ExperimentConfig c;
  c.trials = 2;
  c.seed = 77;
  c.task = "all";
  const Vec load = default_load_profile(c.T), price = default_price_profile(c.T);
  const EmittedPaths a = emit_results(run_experiment(c, load, price), out / "determinism_a");
  c.threads = std::max(threads, 2);
  const EmittedPaths b = emit_results(run_experiment(c, load, price), out / "determinism_b");
  const std::string sa = read_text_file(a.summary), sb = read_text_file(b.summary);
  Outcome o;
  o.pass = sa == sb && !sa.empty();
  o.summary = fmt("summary.csv %s across two runs (%zu bytes)", sa == sb ? "byte-identical" : "DIFFERS", sa.size());
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string out = "acceptance";
  int threads = 1;
  std::set<int> only;
  app.add_option("--out", out, "directory for acceptance.json and artifacts");
  app.add_option("--threads", threads, "worker threads for the experiment criteria")->check(CLI::PositiveNumber);
  app.add_option("--only", only, "run only these criteria")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);

  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) {
    std::fprintf(stderr, "cannot create %s: %s\n", out.c_str(), ec.message().c_str());
    return 1;
  }

  SeededRun seeded;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient fidelity", [] { return gradient_fidelity(); }},
      {"volume fidelity", [] { return volume_fidelity(); }},
      {"federated = monolithic", [&] { return federated_equals_monolithic(seeded); }},
      {"volume-ratio improvement", [&] { return volume_ratio_improvement(threads); }},
      {"protocol soundness", [&] {
         if (seeded.fleet.empty()) federated_equals_monolithic(seeded);
         return protocol_soundness(seeded);
       }},
      {"use-case ordering", [&] { return use_case_ordering(threads); }},
      {"privacy scan", [] { return privacy_scan_canary(); }},
      {"determinism", [&] { return determinism(out, threads); }},
  };

  nlohmann::json report = nlohmann::json::array();
  int failed = 0;
  for (size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.summary = std::string("error: ") + e.what();
    }
    const double secs = seconds_since(t0);
    failed += o.pass ? 0 : 1;
    std::printf("%s %d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[k].first.c_str(), o.summary.c_str(),
                secs);
    std::fflush(stdout);
    report.push_back({{"criterion", id},
                      {"name", criteria[k].first},
                      {"pass", o.pass},
                      {"summary", o.summary},
                      {"seconds", secs},
                      {"detail", o.detail}});
  }
  write_text_file(fs::path(out) / "acceptance.json",
                  nlohmann::json{{"version", FLEXAGG_VERSION}, {"criteria", report}}.dump(2) + "\n");
  return failed == 0 ? 0 : 1;
}
