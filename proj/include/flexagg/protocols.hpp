#pragma once

// Aggregation and disaggregation over a fixed base set h̃.
//
// Aggregation: every participant solves its containment program at h̃ and
// keeps (γᵢ, Γᵢ); the aggregator learns only s_agg = Σγᵢ and S_agg = ΣΓᵢ
// through a secure sum, so ũ = s_agg + S_agg·U₀(h̃) ⊆ Σ Uᵢ.
//
// Disaggregation: the aggregator maps a target back to u₀ = S_agg⁻¹(u_agg − s_agg)
// and broadcasts it; participant i dispatches uᵢ = γᵢ + Γᵢ u₀.

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

#include "flexagg/containment.hpp"
#include "flexagg/federated.hpp"
#include "flexagg/flexibility.hpp"

namespace flexagg {

struct AggregateModel {
  Vec s_agg;
  Mat S_agg;
  FacetOffsets h_tilde;
  double dt = 1.0;         // slot length the offsets refer to
  double condition = 0.0;  // 2-norm condition number of S_agg

  int T() const { return static_cast<int>(s_agg.size()); }
};

inline double condition_number(const Mat& m) {
  const Vec sv = Eigen::JacobiSVD<Mat>(m).singularValues();
  if (sv.size() == 0) return 0.0;
  const double lo = sv[sv.size() - 1];
  return lo > 0.0 ? sv[0] / lo : std::numeric_limits<double>::infinity();
}

inline nlohmann::json to_json(const AggregateModel& m) {
  return {{"s_agg", detail::to_json_vec(m.s_agg)},
          {"S_agg", detail::to_json_rows(m.S_agg)},
          {"h_tilde", detail::to_json_vec(m.h_tilde.values)},
          {"dt", m.dt},
          {"condition", m.condition}};
}

inline AggregateModel aggregate_model_from_json(const nlohmann::json& j) {
  AggregateModel m;
  m.s_agg = detail::vec_from_json(j.at("s_agg"));
  m.S_agg = detail::mat_from_json_rows(j.at("S_agg"));
  m.h_tilde = FacetOffsets(detail::vec_from_json(j.at("h_tilde")));
  m.dt = j.value("dt", 1.0);
  if (!(m.dt > 0.0)) throw Error(ErrorCode::kInvalidArgument, "aggregate model has a nonpositive dt");
  const Eigen::Index T = m.s_agg.size();
  if (m.S_agg.rows() != T || m.S_agg.cols() != T || m.h_tilde.values.size() != 4 * T) {
    throw Error(ErrorCode::kDimensionMismatch, "aggregate model has inconsistent sizes");
  }
  m.condition = condition_number(m.S_agg);
  return m;
}

/// What a participant keeps after aggregation. Never sent to the aggregator.
struct ParticipantState {
  FacetOffsets offsets;
  std::optional<AffineMap> map;  // empty when the participant was excluded
};

struct AggregationResult {
  AggregateModel model;
  std::vector<ParticipantState> participants;
  std::vector<int> excluded;
  std::vector<std::string> warnings;
};

struct AggregationOptions {
  LocalSolveOptions local;
  std::uint64_t mask_seed = 0xA66Eull;
  std::uint64_t round = 0;
};

/// Phase-two aggregation. A participant whose containment solve fails
/// contributes zeros and is listed in `excluded`.
inline AggregationResult aggregate(const std::vector<FacetOffsets>& fleet, const FacetOffsets& h_tilde,
                                   const Horizon& hz, const AggregationOptions& opts = {},
                                   Transcript* transcript = nullptr) {
  const int N = static_cast<int>(fleet.size());
  if (N < 1) throw Error(ErrorCode::kInvalidArgument, "fleet is empty");
  const int T = hz.T;
  if (h_tilde.values.size() != hz.num_facets()) throw Error(ErrorCode::kDimensionMismatch, "base offsets must have length 4T");
  auto record = [&](Message msg) {
    if (transcript) transcript->push(std::move(msg));
  };
  record(BroadcastBase{-1, h_tilde});

  AggregationResult out;
  const size_t T2 = static_cast<size_t>(T) * T;
  const SecureSumSession session(N, opts.mask_seed, opts.round, static_cast<size_t>(T) + T2);
  std::vector<std::optional<FixedVec>> updates(static_cast<size_t>(N));
  for (int i = 0; i < N; ++i) {
    const FacetOffsets& hi = fleet[static_cast<size_t>(i)];
    const ContainmentCertificate cert = solve_containment(h_tilde, hi, hz, opts.local.tol, opts.local.proximal);
    ParticipantState ps{hi, std::nullopt};
    Vec payload = Vec::Zero(static_cast<Eigen::Index>(T + T2));
    if (cert.optimal()) {
      ps.map = cert.map;
      payload.head(T) = cert.map.gamma;
      payload.tail(static_cast<Eigen::Index>(T2)) = vec(cert.map.Gamma);
    } else {
      out.excluded.push_back(i);
      out.warnings.push_back("participant " + std::to_string(i) + " excluded: containment solve " +
                             std::string(to_string(cert.status)));
    }
    out.participants.push_back(std::move(ps));
    FixedVec masked = session.mask(i, payload);
    DsrUpdate u;
    u.round = -1;
    u.tag = participant_tag(opts.mask_seed, i);
    u.masked_gamma.assign(masked.begin(), masked.begin() + T);
    u.masked_Gamma.assign(masked.begin() + T, masked.end());
    updates[static_cast<size_t>(i)] = std::move(masked);
    record(std::move(u));
  }
  const Vec total = secure_sum(updates, session);
  out.model.s_agg = total.head(T);
  out.model.S_agg = Eigen::Map<const Mat>(total.data() + T, T, T);
  out.model.h_tilde = h_tilde;
  out.model.dt = hz.dt;
  out.model.condition = condition_number(out.model.S_agg);
  record(AggregateAnnounce{out.model.s_agg, out.model.S_agg, h_tilde});
  return out;
}

inline constexpr double kDisaggregationConditionLimit = 1e10;

/// Aggregator side: u₀ for a target, after checking u₀ ∈ U₀(h̃) to `tol`
/// (scaled by the offsets' magnitude).
inline Vec base_profile_for_target(const AggregateModel& model, const Vec& u_agg, double tol = 1e-9) {
  const int T = model.T();
  if (u_agg.size() != T) throw Error(ErrorCode::kDimensionMismatch, "target has wrong length");
  if (!u_agg.allFinite()) throw Error(ErrorCode::kInvalidArgument, "target is not finite");
  if (!(model.condition < kDisaggregationConditionLimit)) {
    throw Error(ErrorCode::kSingularAggregate, "aggregate matrix is numerically singular");
  }
  const Vec u0 = Eigen::PartialPivLU<Mat>(model.S_agg).solve(u_agg - model.s_agg);
  const Mat H = build_facet_matrix(Horizon(T, model.dt));
  const double scale = 1.0 + model.h_tilde.values.cwiseAbs().maxCoeff();
  if ((H * u0 - model.h_tilde.values).maxCoeff() > tol * scale) {
    throw Error(ErrorCode::kInfeasibleTarget, "target lies outside the aggregate set");
  }
  return u0;
}

/// Participant side: uᵢ = γᵢ + Γᵢ u₀, or nothing for an excluded participant.
inline std::optional<Vec> participant_profile(const ParticipantState& p, const Vec& u0) {
  if (!p.map) return std::nullopt;
  return p.map->apply(u0);
}

struct DisaggregationResult {
  Vec u0;
  std::vector<std::optional<Vec>> profiles;

  Vec total() const {
    Vec s = Vec::Zero(u0.size());
    for (const auto& p : profiles) {
      if (p) s += *p;
    }
    return s;
  }
};

/// Full phase-three round: aggregator computes u₀, broadcasts it, each
/// participant applies its own map.
inline DisaggregationResult disaggregate(const AggregateModel& model, const std::vector<ParticipantState>& participants,
                                         const Vec& u_agg, Transcript* transcript = nullptr) {
  DisaggregationResult out;
  out.u0 = base_profile_for_target(model, u_agg);
  if (transcript) transcript->push(BaseProfile{out.u0});
  for (const ParticipantState& p : participants) out.profiles.push_back(participant_profile(p, out.u0));
  return out;
}

/// Largest violation of H uᵢ ≤ hᵢ over the participants that dispatched.
inline double max_feasibility_violation(const DisaggregationResult& r, const std::vector<ParticipantState>& participants,
                                        const Horizon& hz) {
  const Mat H = build_facet_matrix(hz);
  double worst = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < participants.size(); ++i) {
    if (!r.profiles[i]) continue;
    worst = std::max(worst, (H * *r.profiles[i] - participants[i].offsets.values).maxCoeff());
  }
  return worst;
}

}  // namespace flexagg
