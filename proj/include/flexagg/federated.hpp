#pragma once

// Federated base-set optimization. The aggregator owns the iterate h0 and
// sees only the projected base h̃, the secure sums of Γᵢ* and ∂Γᵢ*/∂h̃, and
// its own volume computation; each participant keeps hᵢ private.
//
//   log J(h0) = log|det Σᵢ Γᵢ*(h̃)| + log vol U₀(h̃),   h̃ = Π(h0)
//   ∂log J/∂h̃_f = Tr[(ΣΓ)⁻¹ Σ ∂Γ/∂h̃_f] + ∂log vol/∂h̃_f
//   ∂log J/∂h0 = (∂h̃/∂h0)ᵀ ∂log J/∂h̃

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "flexagg/containment.hpp"
#include "flexagg/diffgrad.hpp"
#include "flexagg/flexibility.hpp"
#include "flexagg/projection.hpp"
#include "flexagg/volume.hpp"

namespace flexagg {

// ---------------------------------------------------------------------------
// Fixed-point secure summation

using FixedVec = std::vector<std::int64_t>;

inline constexpr double kFixedQuantum = 0x1p-40;
inline constexpr double kFixedClamp = 0x1p23;

inline std::int64_t encode_fixed(double v) {
  if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidArgument, "cannot encode a non-finite value");
  const double c = std::clamp(v, -kFixedClamp + kFixedQuantum, kFixedClamp - kFixedQuantum);
  return static_cast<std::int64_t>(std::llround(c / kFixedQuantum));
}

inline double decode_fixed(std::int64_t q) { return static_cast<double>(q) * kFixedQuantum; }

inline FixedVec encode_fixed(const Vec& v) {
  FixedVec out(static_cast<size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<size_t>(i)] = encode_fixed(v[i]);
  return out;
}

inline Vec decode_fixed(const FixedVec& q) {
  Vec out(static_cast<Eigen::Index>(q.size()));
  for (size_t i = 0; i < q.size(); ++i) out[static_cast<Eigen::Index>(i)] = decode_fixed(q[i]);
  return out;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (b * 0xD1B54A32D192ED03ull);
  return splitmix64(s);
}

}  // namespace detail

/// Pairwise additive masks for one summation round. Participant i adds the
/// mask shared with every j > i and subtracts the one shared with every
/// j < i, in wrapping 64-bit arithmetic, so the masks cancel exactly in the
/// sum over all participants.
class SecureSumSession {
 public:
  SecureSumSession(int participants, std::uint64_t seed, std::uint64_t round, size_t length)
      : n_(participants), seed_(seed), round_(round), length_(length) {
    if (participants < 1) throw Error(ErrorCode::kInvalidArgument, "secure sum needs a participant");
  }

  int participants() const { return n_; }
  size_t length() const { return length_; }

  FixedVec mask(int participant, const Vec& values) const {
    if (participant < 0 || participant >= n_) throw Error(ErrorCode::kInvalidArgument, "unknown participant");
    if (static_cast<size_t>(values.size()) != length_) {
      throw Error(ErrorCode::kDimensionMismatch, "payload length differs from the session");
    }
    const FixedVec plain = encode_fixed(values);
    std::vector<std::uint64_t> acc(plain.begin(), plain.end());
    for (int other = 0; other < n_; ++other) {
      if (other == participant) continue;
      const int lo = std::min(participant, other), hi = std::max(participant, other);
      std::uint64_t state = detail::mix(detail::mix(seed_, round_), static_cast<std::uint64_t>(lo) * 0x10001ull + hi);
      for (size_t k = 0; k < length_; ++k) {
        const std::uint64_t m = detail::splitmix64(state);
        acc[k] = participant == lo ? acc[k] + m : acc[k] - m;
      }
    }
    return FixedVec(acc.begin(), acc.end());
  }

 private:
  int n_;
  std::uint64_t seed_;
  std::uint64_t round_;
  size_t length_;
};

/// Sum of masked contributions, decoded. `updates[i]` belongs to participant i.
inline Vec secure_sum(const std::vector<std::optional<FixedVec>>& updates, const SecureSumSession& session) {
  if (static_cast<int>(updates.size()) != session.participants()) {
    throw Error(ErrorCode::kMissingParticipant, "secure sum expects one update per participant");
  }
  std::vector<std::uint64_t> acc(session.length(), 0);
  for (size_t i = 0; i < updates.size(); ++i) {
    if (!updates[i]) throw Error(ErrorCode::kMissingParticipant, "participant " + std::to_string(i) + " did not report");
    if (updates[i]->size() != session.length()) throw Error(ErrorCode::kDimensionMismatch, "masked update has wrong length");
    for (size_t k = 0; k < acc.size(); ++k) acc[k] += static_cast<std::uint64_t>((*updates[i])[k]);
  }
  return decode_fixed(FixedVec(acc.begin(), acc.end()));
}

/// Reference for secure_sum: the plain sum of the fixed-point encodings.
inline Vec plain_fixed_sum(const std::vector<Vec>& values) {
  if (values.empty()) return Vec();
  std::vector<std::uint64_t> acc(static_cast<size_t>(values.front().size()), 0);
  for (const Vec& v : values) {
    const FixedVec q = encode_fixed(v);
    for (size_t k = 0; k < acc.size(); ++k) acc[k] += static_cast<std::uint64_t>(q[k]);
  }
  return decode_fixed(FixedVec(acc.begin(), acc.end()));
}

// ---------------------------------------------------------------------------
// Messages

struct BroadcastBase {
  int round = 0;
  FacetOffsets h_tilde;
};

/// Masked participant contribution. During optimization it carries Γ and ∂Γ;
/// during aggregation it carries γ and Γ.
struct DsrUpdate {
  int round = 0;
  std::string tag;
  FixedVec masked_Gamma;
  FixedVec masked_gradient;
  FixedVec masked_gamma;
  bool gradient_skipped = false;
};

/// Masked offsets used once to form the average initial base.
struct InitShare {
  std::string tag;
  FixedVec masked_offsets;
};

struct BaseProfile {
  Vec u0;
};

struct AggregateAnnounce {
  Vec s_agg;
  Mat S_agg;
  FacetOffsets h_tilde;
};

using Message = std::variant<BroadcastBase, DsrUpdate, InitShare, BaseProfile, AggregateAnnounce>;

namespace detail {

inline nlohmann::json to_json_vec(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vec vec_from_json(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
}

inline nlohmann::json to_json_rows(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_json_vec(m.row(r).transpose()));
  return rows;
}

inline Mat mat_from_json_rows(const nlohmann::json& j) {
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows == 0 ? 0 : static_cast<Eigen::Index>(j.front().size());
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) m.row(r) = vec_from_json(j[static_cast<size_t>(r)]).transpose();
  return m;
}

}  // namespace detail

inline nlohmann::json to_json(const Message& msg) {
  return std::visit(
      [](const auto& m) -> nlohmann::json {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, BroadcastBase>) {
          return {{"type", "BroadcastBase"}, {"round", m.round}, {"h_tilde", detail::to_json_vec(m.h_tilde.values)}};
        } else if constexpr (std::is_same_v<M, DsrUpdate>) {
          nlohmann::json j{{"type", "DsrUpdate"}, {"round", m.round}, {"tag", m.tag}};
          if (!m.masked_Gamma.empty()) j["masked_Gamma"] = m.masked_Gamma;
          if (!m.masked_gradient.empty()) j["masked_gradient"] = m.masked_gradient;
          if (!m.masked_gamma.empty()) j["masked_gamma"] = m.masked_gamma;
          j["gradient_skipped"] = m.gradient_skipped;
          return j;
        } else if constexpr (std::is_same_v<M, InitShare>) {
          return {{"type", "InitShare"}, {"tag", m.tag}, {"masked_offsets", m.masked_offsets}};
        } else if constexpr (std::is_same_v<M, BaseProfile>) {
          return {{"type", "BaseProfile"}, {"u0", detail::to_json_vec(m.u0)}};
        } else {
          return {{"type", "AggregateAnnounce"},
                  {"s_agg", detail::to_json_vec(m.s_agg)},
                  {"S_agg", detail::to_json_rows(m.S_agg)},
                  {"h_tilde", detail::to_json_vec(m.h_tilde.values)}};
        }
      },
      msg);
}

inline Message message_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "BroadcastBase") {
    return BroadcastBase{j.at("round").get<int>(), FacetOffsets(detail::vec_from_json(j.at("h_tilde")))};
  }
  if (type == "DsrUpdate") {
    DsrUpdate u;
    u.round = j.at("round").get<int>();
    u.tag = j.at("tag").get<std::string>();
    if (j.contains("masked_Gamma")) u.masked_Gamma = j.at("masked_Gamma").get<FixedVec>();
    if (j.contains("masked_gradient")) u.masked_gradient = j.at("masked_gradient").get<FixedVec>();
    if (j.contains("masked_gamma")) u.masked_gamma = j.at("masked_gamma").get<FixedVec>();
    u.gradient_skipped = j.value("gradient_skipped", false);
    return u;
  }
  if (type == "InitShare") return InitShare{j.at("tag").get<std::string>(), j.at("masked_offsets").get<FixedVec>()};
  if (type == "BaseProfile") return BaseProfile{detail::vec_from_json(j.at("u0"))};
  if (type == "AggregateAnnounce") {
    return AggregateAnnounce{detail::vec_from_json(j.at("s_agg")), detail::mat_from_json_rows(j.at("S_agg")),
                             FacetOffsets(detail::vec_from_json(j.at("h_tilde")))};
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown message type '" + type + "'");
}

struct Transcript {
  std::vector<Message> messages;

  void push(Message m) { messages.push_back(std::move(m)); }

  /// One JSON object per line.
  std::string to_json_lines() const {
    std::string out;
    for (const Message& m : messages) {
      out += to_json(m).dump();
      out += '\n';
    }
    return out;
  }

  static Transcript from_json_lines(const std::string& text) {
    Transcript t;
    size_t pos = 0;
    while (pos < text.size()) {
      size_t end = text.find('\n', pos);
      if (end == std::string::npos) end = text.size();
      if (end > pos) t.push(message_from_json(nlohmann::json::parse(text.substr(pos, end - pos))));
      pos = end + 1;
    }
    return t;
  }
};

/// Opaque participant label derived from the session seed.
inline std::string participant_tag(std::uint64_t seed, int index) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::uint64_t v = detail::mix(seed ^ 0x7461677321ull, static_cast<std::uint64_t>(index));
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<size_t>(i)] = kHex[v & 0xF];
  return s;
}

/// Fleet with sentinel offsets: each entry of a sampled fleet is nudged by a
/// distinctive amount so that a leaked value is recognizable in a transcript.
inline std::vector<FacetOffsets> make_canary_fleet(int N, const Horizon& hz, std::uint64_t seed) {
  std::vector<FacetOffsets> fleet = fleet_offsets(sample_covering_fleet(N, hz, seed), hz);
  // Hashed rather than affine in (i, j): averages of affine nudges land on
  // some participant's own value.
  for (size_t i = 0; i < fleet.size(); ++i) {
    for (Eigen::Index j = 0; j < fleet[i].values.size(); ++j) {
      std::uint64_t state = detail::mix(seed ^ 0xCA9A21ull, i * 0x100000001ull + static_cast<std::uint64_t>(j));
      const double u = static_cast<double>(detail::splitmix64(state) >> 11) * 0x1p-53;
      fleet[i].values[j] += 1e-3 * (0.5 + u);
    }
  }
  return fleet;
}

struct PrivacyFinding {
  int participant = 0;
  Eigen::Index entry = 0;
  std::string how;  // "text", "fixed-text", "field" or "vector"
};

namespace detail {

inline void collect_numbers(const nlohmann::json& j, std::vector<double>& doubles, std::vector<std::int64_t>& ints,
                            std::vector<std::vector<double>>& arrays) {
  if (j.is_array()) {
    std::vector<double> row;
    bool numeric = true;
    for (const auto& e : j) {
      if (e.is_number()) row.push_back(e.get<double>());
      else numeric = false;
      collect_numbers(e, doubles, ints, arrays);
    }
    if (numeric && !row.empty()) arrays.push_back(std::move(row));
  } else if (j.is_object()) {
    for (const auto& [k, v] : j.items()) collect_numbers(v, doubles, ints, arrays);
  } else if (j.is_number_integer()) {
    ints.push_back(j.get<std::int64_t>());
    doubles.push_back(j.get<double>());
  } else if (j.is_number()) {
    doubles.push_back(j.get<double>());
  }
}

}  // namespace detail

/// Looks for participant offsets in serialized transcript lines: each hᵢ entry
/// as JSON text and as fixed-point text, each numeric field against each entry,
/// and each numeric array against the whole hᵢ vector.
inline std::vector<PrivacyFinding> privacy_scan(const std::string& jsonl, const std::vector<FacetOffsets>& fleet) {
  std::vector<PrivacyFinding> found;
  std::vector<double> doubles;
  std::vector<std::int64_t> ints;
  std::vector<std::vector<double>> arrays;
  size_t pos = 0;
  while (pos < jsonl.size()) {
    size_t end = jsonl.find('\n', pos);
    if (end == std::string::npos) end = jsonl.size();
    if (end > pos) detail::collect_numbers(nlohmann::json::parse(jsonl.substr(pos, end - pos)), doubles, ints, arrays);
    pos = end + 1;
  }
  std::sort(doubles.begin(), doubles.end());
  std::sort(ints.begin(), ints.end());
  for (size_t i = 0; i < fleet.size(); ++i) {
    const Vec& h = fleet[i].values;
    for (Eigen::Index j = 0; j < h.size(); ++j) {
      const int p = static_cast<int>(i);
      if (jsonl.find(nlohmann::json(h[j]).dump()) != std::string::npos) found.push_back({p, j, "text"});
      if (jsonl.find(std::to_string(encode_fixed(h[j]))) != std::string::npos) found.push_back({p, j, "fixed-text"});
      if (std::binary_search(doubles.begin(), doubles.end(), h[j]) ||
          std::binary_search(ints.begin(), ints.end(), encode_fixed(h[j]))) {
        found.push_back({p, j, "field"});
      }
    }
    for (const auto& a : arrays) {
      if (static_cast<Eigen::Index>(a.size()) != h.size()) continue;
      bool same = true;
      for (Eigen::Index j = 0; j < h.size() && same; ++j) same = a[static_cast<size_t>(j)] == h[j];
      if (same) found.push_back({static_cast<int>(i), -1, "vector"});
    }
  }
  return found;
}

// ---------------------------------------------------------------------------
// Local and central computation

struct DsrLocalStep {
  Mat Gamma;                 // T×T
  std::vector<Mat> d_Gamma;  // 4T slices ∂Γ/∂h̃_f
  Vec gamma;
  SolveStatus status = SolveStatus::kNumericFailure;
  bool gradient_skipped = false;
};

struct LocalSolveOptions {
  double tol = 1e-11;
  double proximal = kDefaultGammaProximal;
};

/// One participant's contribution at the broadcast base. A failed containment
/// solve contributes Γ = 0; a singular KKT system keeps Γ and zeroes ∂Γ.
inline DsrLocalStep dsr_local_step(const FacetOffsets& h_tilde, const FacetOffsets& hi, const Horizon& hz,
                                   const LocalSolveOptions& opts = {}) {
  const int T = hz.T;
  DsrLocalStep out;
  out.d_Gamma.assign(static_cast<size_t>(4 * T), Mat::Zero(T, T));
  const ContainmentCertificate cert = solve_containment(h_tilde, hi, hz, opts.tol, opts.proximal);
  out.status = cert.status;
  if (!cert.optimal()) {
    out.Gamma = Mat::Zero(T, T);
    out.gamma = Vec::Zero(T);
    out.gradient_skipped = true;
    return out;
  }
  out.Gamma = cert.map.Gamma;
  out.gamma = cert.map.gamma;
  const ContainmentJacobian jac = containment_gradient(cert, h_tilde, hi, hz);
  if (!jac.usable()) {
    out.gradient_skipped = true;
    return out;
  }
  out.d_Gamma = jac.d_Gamma;
  return out;
}

/// [vec Γ; vec ∂Γ/∂h̃_1; …; vec ∂Γ/∂h̃_4T].
inline Vec pack_local_step(const DsrLocalStep& s) {
  const Eigen::Index T2 = s.Gamma.size();
  Vec out(T2 * static_cast<Eigen::Index>(1 + s.d_Gamma.size()));
  out.head(T2) = vec(s.Gamma);
  for (size_t f = 0; f < s.d_Gamma.size(); ++f) out.segment(T2 * static_cast<Eigen::Index>(f + 1), T2) = vec(s.d_Gamma[f]);
  return out;
}

struct AggregateSums {
  Mat Gamma;
  std::vector<Mat> d_Gamma;
};

inline AggregateSums unpack_sums(const Vec& packed, int T) {
  const Eigen::Index T2 = static_cast<Eigen::Index>(T) * T;
  AggregateSums s;
  s.Gamma = Eigen::Map<const Mat>(packed.data(), T, T);
  for (int f = 0; f < 4 * T; ++f) s.d_Gamma.push_back(Eigen::Map<const Mat>(packed.data() + T2 * (f + 1), T, T));
  return s;
}

struct AggregatorGradient {
  Vec grad;        // ∂log J/∂h0
  Vec grad_tilde;  // ∂log J/∂h̃
  double logJ = 0.0;
  double log_det = 0.0;
};

inline constexpr double kAggregateConditionLimit = 1e12;

inline AggregatorGradient aggregator_gradient(const Mat& sum_Gamma, const std::vector<Mat>& sum_dGamma, double log_vol,
                                              const Vec& d_log_vol, const ProjectionJacobian& proj) {
  const Eigen::Index T = sum_Gamma.rows();
  if (sum_Gamma.cols() != T || static_cast<Eigen::Index>(sum_dGamma.size()) != 4 * T || d_log_vol.size() != 4 * T ||
      proj.d_htilde_d_h0.rows() != 4 * T) {
    throw Error(ErrorCode::kDimensionMismatch, "aggregator inputs have inconsistent sizes");
  }
  if (!std::isfinite(log_vol)) throw Error(ErrorCode::kEmptyVolume, "base set has zero volume");
  const Eigen::JacobiSVD<Mat> svd(sum_Gamma);
  const Vec sv = svd.singularValues();
  if (!(sv[T - 1] > 0.0) || sv[0] / sv[T - 1] >= kAggregateConditionLimit) {
    throw Error(ErrorCode::kSingularAggregate, "aggregate transformation is numerically singular");
  }
  const Eigen::PartialPivLU<Mat> lu(sum_Gamma);
  AggregatorGradient out;
  out.log_det = 0.0;
  for (Eigen::Index i = 0; i < T; ++i) out.log_det += std::log(std::abs(lu.matrixLU()(i, i)));
  out.logJ = out.log_det + log_vol;
  out.grad_tilde = d_log_vol;
  for (Eigen::Index f = 0; f < 4 * T; ++f) out.grad_tilde[f] += lu.solve(sum_dGamma[static_cast<size_t>(f)]).trace();
  out.grad = proj.d_htilde_d_h0.transpose() * out.grad_tilde;
  return out;
}

// ---------------------------------------------------------------------------
// Ascent loop

struct AscentConfig {
  int max_iters = 200;
  double init_step = 1.0;
  double tol = 1e-5;     // on |Δ log J| between accepted iterates
  int patience = 5;      // consecutive small changes before stopping; a rejected step counts as no change
  double epsilon_rel = 1e-3;
  int grid_points = 200;
  LocalSolveOptions local;
  std::uint64_t mask_seed = 0x5EC0DEull;
  int threads = 1;       // participants evaluated concurrently per round
};

struct AscentState {
  FacetOffsets h0;
  FacetOffsets h_tilde;
  double logJ = -std::numeric_limits<double>::infinity();
  Vec grad;
  double step = 0.0;
  int iteration = 0;
  bool accepted = false;
  bool singular = false;
  std::vector<int> skipped_dsrs;
};

struct AscentResult {
  FacetOffsets h_opt;     // projected base of the best accepted iterate
  FacetOffsets h0_opt;    // raw iterate
  double epsilon = 0.0;   // projection margin used throughout
  std::vector<AscentState> trace;

  const AscentState& best() const {
    const AscentState* b = &trace.front();
    for (const AscentState& s : trace) {
      if (s.accepted && s.logJ > b->logJ) b = &s;
    }
    return *b;
  }
  double initial_logJ() const { return trace.front().logJ; }
};

namespace detail {

/// Evaluation of log J and its gradient at one iterate; `sums` produces the
/// aggregate (Σ Γ, Σ ∂Γ) and the skipped participants for a projected base.
template <class Sums>
AscentState evaluate_iterate(const FacetOffsets& h0, double epsilon, const Horizon& hz, const AscentConfig& cfg,
                             Sums&& sums) {
  AscentState st;
  st.h0 = h0;
  const ProjectedBase pb = project(h0, epsilon, hz);
  st.h_tilde = pb.h_tilde;
  if (!pb.optimal()) {
    st.singular = true;
    return st;
  }
  const ProjectionJacobian pj = projection_gradient(pb, hz);
  const auto [agg, skipped] = sums(pb.h_tilde);
  st.skipped_dsrs = skipped;
  const VolumeEstimate ve = volume_estimate(pb.h_tilde, hz, cfg.grid_points);
  if (ve.tables.empty()) {
    st.singular = true;
    return st;
  }
  const VolumeGradient vg = volume_gradient(pb.h_tilde, hz, ve);
  try {
    const AggregatorGradient g = aggregator_gradient(agg.Gamma, agg.d_Gamma, ve.log_vol, vg.d_log_vol, pj);
    st.logJ = g.logJ;
    st.grad = g.grad;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kSingularAggregate && e.code() != ErrorCode::kEmptyVolume) throw;
    st.singular = true;
  }
  return st;
}

/// Backtracking ascent shared by the federated and monolithic drivers.
template <class Evaluate>
AscentResult ascend(const FacetOffsets& h_init, double epsilon, const AscentConfig& cfg, Evaluate&& evaluate) {
  AscentResult res;
  res.epsilon = epsilon;
  AscentState cur = evaluate(h_init, 0);
  cur.accepted = !cur.singular;
  cur.step = cfg.init_step;
  res.trace.push_back(cur);
  if (cur.singular) {
    throw Error(ErrorCode::kSingularAggregate, "aggregate transformation is singular at the initial base");
  }
  double step = cfg.init_step;
  int calm = 0;
  for (int it = 1; it < cfg.max_iters; ++it) {
    const FacetOffsets cand(cur.h0.values + step * cur.grad);
    AscentState next = evaluate(cand, it);
    next.step = step;
    next.iteration = it;
    next.accepted = !next.singular && next.logJ >= cur.logJ;
    res.trace.push_back(next);
    if (!next.accepted) {
      step *= 0.5;
      if (++calm >= cfg.patience) break;
      continue;
    }
    calm = std::abs(next.logJ - cur.logJ) < cfg.tol ? calm + 1 : 0;
    cur = next;
    step *= 1.2;
    if (calm >= cfg.patience) break;
  }
  const AscentState& b = res.best();
  res.h_opt = b.h_tilde;
  res.h0_opt = b.h0;
  return res;
}

}  // namespace detail

/// Projection margin for a run, fixed from the initial base.
inline double ascent_epsilon(const FacetOffsets& h_init, double epsilon_rel) {
  return default_epsilon(h_init, epsilon_rel);
}

/// Federated run: participants mask their messages, the aggregator sees only
/// secure sums. Messages are appended to `transcript` when given.
inline AscentResult run_federated_optimization(const std::vector<FacetOffsets>& fleet, const Horizon& hz,
                                               const AscentConfig& cfg = {}, Transcript* transcript = nullptr) {
  const int N = static_cast<int>(fleet.size());
  if (N < 1) throw Error(ErrorCode::kInvalidArgument, "fleet is empty");
  const int m = hz.num_facets();
  for (const FacetOffsets& h : fleet) {
    if (h.values.size() != m) throw Error(ErrorCode::kDimensionMismatch, "fleet offsets must have length 4T");
  }
  std::vector<std::string> tags;
  for (int i = 0; i < N; ++i) tags.push_back(participant_tag(cfg.mask_seed, i));
  auto record = [&](Message msg) {
    if (transcript) transcript->push(std::move(msg));
  };

  // Initial base: secure average of the participants' offsets.
  FacetOffsets h_avg;
  {
    const SecureSumSession session(N, cfg.mask_seed, 0, static_cast<size_t>(m));
    std::vector<std::optional<FixedVec>> shares(static_cast<size_t>(N));
    for (int i = 0; i < N; ++i) {
      shares[static_cast<size_t>(i)] = session.mask(i, fleet[static_cast<size_t>(i)].values);
      record(InitShare{tags[static_cast<size_t>(i)], *shares[static_cast<size_t>(i)]});
    }
    h_avg = FacetOffsets(secure_sum(shares, session) / N);
  }
  const double epsilon = ascent_epsilon(h_avg, cfg.epsilon_rel);
  const int T = hz.T;
  const size_t payload = static_cast<size_t>(T) * T * (1 + 4 * static_cast<size_t>(T));

  auto evaluate = [&](const FacetOffsets& h0, int it) {
    return detail::evaluate_iterate(h0, epsilon, hz, cfg, [&](const FacetOffsets& h_tilde) {
      record(BroadcastBase{it, h_tilde});
      std::vector<DsrLocalStep> steps(static_cast<size_t>(N));
      if (cfg.threads > 1) {
        std::vector<std::future<DsrLocalStep>> jobs;
        for (int i = 0; i < N; ++i) {
          jobs.push_back(std::async(std::launch::async, [&, i] {
            return dsr_local_step(h_tilde, fleet[static_cast<size_t>(i)], hz, cfg.local);
          }));
        }
        for (int i = 0; i < N; ++i) steps[static_cast<size_t>(i)] = jobs[static_cast<size_t>(i)].get();
      } else {
        for (int i = 0; i < N; ++i) steps[static_cast<size_t>(i)] = dsr_local_step(h_tilde, fleet[static_cast<size_t>(i)], hz, cfg.local);
      }
      const SecureSumSession session(N, cfg.mask_seed, static_cast<std::uint64_t>(it) + 1, payload);
      std::vector<std::optional<FixedVec>> updates(static_cast<size_t>(N));
      std::vector<int> skipped;
      const size_t T2 = static_cast<size_t>(T) * T;
      for (int i = 0; i < N; ++i) {
        const DsrLocalStep& s = steps[static_cast<size_t>(i)];
        FixedVec masked = session.mask(i, pack_local_step(s));
        DsrUpdate u;
        u.round = it;
        u.tag = tags[static_cast<size_t>(i)];
        u.masked_Gamma.assign(masked.begin(), masked.begin() + static_cast<std::ptrdiff_t>(T2));
        u.masked_gradient.assign(masked.begin() + static_cast<std::ptrdiff_t>(T2), masked.end());
        u.gradient_skipped = s.gradient_skipped;
        if (s.gradient_skipped) skipped.push_back(i);
        updates[static_cast<size_t>(i)] = std::move(masked);
        record(std::move(u));
      }
      return std::make_pair(unpack_sums(secure_sum(updates, session), T), skipped);
    });
  };
  return detail::ascend(h_avg, epsilon, cfg, evaluate);
}

/// Single-process implementation of the same ascent with plain sums. With
/// `fixed_point_sums` the sums go through the same fixed-point encoding as
/// the secure path (so the two traces coincide bit for bit); without it they
/// are ordinary double sums.
inline AscentResult run_monolithic_reference(const std::vector<FacetOffsets>& fleet, const Horizon& hz,
                                             const AscentConfig& cfg = {}, bool fixed_point_sums = true) {
  const int N = static_cast<int>(fleet.size());
  if (N < 1) throw Error(ErrorCode::kInvalidArgument, "fleet is empty");
  const int T = hz.T;
  FacetOffsets h_avg = average_offsets(fleet);
  if (fixed_point_sums) {
    std::vector<Vec> values;
    for (const FacetOffsets& h : fleet) values.push_back(h.values);
    h_avg = FacetOffsets(plain_fixed_sum(values) / N);
  }
  const double epsilon = ascent_epsilon(h_avg, cfg.epsilon_rel);
  auto evaluate = [&](const FacetOffsets& h0, int) {
    return detail::evaluate_iterate(h0, epsilon, hz, cfg, [&](const FacetOffsets& h_tilde) {
      std::vector<int> skipped;
      std::vector<Vec> packed;
      AggregateSums agg{Mat::Zero(T, T), std::vector<Mat>(static_cast<size_t>(4 * T), Mat::Zero(T, T))};
      for (int i = 0; i < N; ++i) {
        const DsrLocalStep s = dsr_local_step(h_tilde, fleet[static_cast<size_t>(i)], hz, cfg.local);
        if (s.gradient_skipped) skipped.push_back(i);
        if (fixed_point_sums) {
          packed.push_back(pack_local_step(s));
          continue;
        }
        agg.Gamma += s.Gamma;
        for (size_t f = 0; f < agg.d_Gamma.size(); ++f) agg.d_Gamma[f] += s.d_Gamma[f];
      }
      if (fixed_point_sums) agg = unpack_sums(plain_fixed_sum(packed), T);
      return std::make_pair(agg, skipped);
    });
  };
  return detail::ascend(h_avg, epsilon, cfg, evaluate);
}

}  // namespace flexagg
