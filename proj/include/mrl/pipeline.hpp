#pragma once

// Experiment plans and the per-path stages behind each command: simulate X, lift it, solve the
// RDE, build Malliavin factors and reduce them to scalar summaries.

#include "mrl/estimators/density.hpp"
#include "mrl/estimators/jacobian_probe.hpp"
#include "mrl/estimators/roughness.hpp"
#include "mrl/estimators/tail.hpp"
#include "mrl/malliavin.hpp"
#include "mrl/mc_harness.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mrl {

struct Plan {
  // grid
  int N = 4096;
  int N_coarse = 1024;
  double t = 1.0;
  // diffusion
  std::string diffusion_id = "constant";
  int d = 2;
  std::vector<double> diffusion_params{1.0};
  std::optional<double> lambda, Lambda;
  DriftConvention drift = DriftConvention::half_divergence;
  Scheme scheme = Scheme::euler;
  std::vector<double> x0{0.0, 0.0};
  // fields
  std::string fields_id = "hormander_pair";
  std::vector<double> fields_params;
  std::vector<double> y0{0.0, 0.0};
  // run
  long n_paths = 1000;
  std::uint64_t seed = 1;
  long batch = 256;
  // estimators
  std::vector<double> eps_grid{1.0, 0.5, 0.25, 0.125, 0.0625};
  double alpha = 0.4;
  int lift_checks = 1000;
  double theta = 0.7;
  int n_max = 8;
  double k = 0.5;
  int sphere_mesh = 64;
  double smallball_s = 0.0, smallball_delta = 1.0;
  bool bridge = true;
  double bandwidth = 0.0;  // <= 0: Scott
  double density_radius = 3.0;  // in units of sqrt(t)
  double density_step = 0.1;
  std::vector<double> probe_v{1.0, 0.0};
  double probe_power = 0.25;
  // hormander
  std::vector<double> hormander_x{0.0, 0.0};
  int k0 = 2;
  double svd_tol = 1e-8;
  // assumption probes
  double probe_half_width = 2.0;
  int probe_per_axis = 5;
  int probe_directions = 64;
  Contraction contraction = Contraction::left_contract;

  int stride() const { return N / N_coarse; }
  int t_index() const { return static_cast<int>(std::llround(t * N_coarse)); }
};

inline void validate(const Plan& p) {
  require(is_power_of_two(p.N), "grid.N must be a power of two");
  require(p.N_coarse >= 1 && p.N_coarse <= p.N && p.N % p.N_coarse == 0, "grid.N_coarse must divide grid.N");
  require(p.t > 0 && p.t <= 1, "grid.t must lie in (0, 1]");
  require(std::abs(p.t * p.N_coarse - p.t_index()) < 1e-9, "grid.t must be a point of the coarse grid");
  require(p.d >= 1 && p.d <= kMaxDim, "diffusion.d must lie in [1, " + std::to_string(kMaxDim) + "]");
  require(static_cast<int>(p.x0.size()) == p.d, "diffusion.x0 must have d entries");
  require(p.n_paths >= 1, "run.n_paths must be at least 1");
  require(p.batch >= 1, "run.batch must be at least 1");
  require(!p.eps_grid.empty(), "estimators.eps_grid must not be empty");
  for (double e : p.eps_grid) require(e > 0 && std::isfinite(e), "estimators.eps_grid entries must be positive");
  require(p.alpha > 1.0 / 3 && p.alpha <= 0.5, "estimators.alpha must lie in (1/3, 1/2]");
  require(p.lift_checks >= 1, "estimators.lift_checks must be positive");
  require(p.theta > 0.5 && p.theta < 1, "estimators.theta must lie in (0.5, 1)");
  require(p.n_max >= 0 && (1L << p.n_max) <= p.N, "estimators.n_max too deep for grid.N");
  require(p.k > 0 && p.k < 1, "estimators.k must lie in (0, 1)");
  require(p.sphere_mesh >= 1, "estimators.sphere_mesh must be positive");
  require(p.smallball_s >= 0 && p.smallball_delta > 0 && p.smallball_s + p.smallball_delta <= 1 + 1e-12,
          "estimators.smallball window must lie in [0, 1]");
  require(p.density_radius > 0 && p.density_step > 0, "estimators.density radius and step must be positive");
  require(p.probe_power > 0, "estimators.probe.power must be positive");
  require(p.k0 >= 0, "hormander.k0 must be nonnegative");
  require(p.svd_tol > 0 && p.svd_tol < 1, "hormander.svd_tol must lie in (0, 1)");
  require(p.probe_half_width >= 0 && p.probe_per_axis >= 1 && p.probe_directions >= 1, "probes: invalid box");
}

struct Model {
  DiffusionSpec spec;
  VectorFieldSet fields;
  Vec x0, y0;
};

inline Model build_model(const Plan& p) {
  validate(p);
  Model m;
  m.spec = make_diffusion(p.diffusion_id, p.d, p.diffusion_params, p.lambda, p.Lambda);
  m.spec.drift = p.drift;
  m.fields = make_fields(p.fields_id, p.d, p.fields_params);
  require(m.fields.n_drivers == p.d, "fields: number of driving fields must equal diffusion.d");
  require(static_cast<int>(p.y0.size()) == m.fields.state_dim, "fields.y0 must match the state dimension");
  m.x0 = to_vec(p.x0);
  m.y0 = to_vec(p.y0);
  return m;
}

// Everything computed for one path up to the Malliavin factors.
struct PathState {
  BrownianDriver driver;
  FlowBundle flow;
  RoughPath rp;
  ControlledPath Y;
  JacobianPair JY;
};

inline PathState simulate_path(const Plan& p, const Model& m, long index, bool with_flow) {
  PathState s;
  s.driver = make_driver(p.seed, static_cast<std::uint64_t>(index), p.N, p.d);
  s.flow.X = simulate_X(m.spec, s.driver, m.x0, p.scheme);
  if (with_flow) s.flow = simulate_flow(m.spec, s.driver, s.flow.X, p.scheme);
  s.rp = midpoint_lift(s.flow.X, p.stride(), p.alpha);
  return s;
}

inline void solve_path(PathState& s, const Model& m) {
  s.Y = solve_rde(m.fields, s.rp, m.y0);
  s.JY = solve_jacobian_rde(m.fields, s.rp, s.Y);
}

namespace detail {
inline PathSummary excluded(const std::string& code, size_t ncol) {
  return PathSummary{0, PathStatus::excluded, std::vector<double>(ncol, std::numeric_limits<double>::quiet_NaN()), code};
}
}  // namespace detail

// A command's per-path stage: column names plus the function producing one row.
struct Stage {
  std::vector<std::string> columns;
  PathFunction fn;
};

inline std::vector<std::string> indexed(const std::string& base, int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back(base + std::to_string(i));
  return out;
}

inline Stage simulate_stage(const Plan& p, const Model& m) {
  Stage st;
  st.columns = indexed("x_T_", p.d);
  for (const char* c : {"sup_abs_x", "eig_min_seen", "eig_max_seen"}) st.columns.push_back(c);
  st.fn = [&p, &m](long i) {
    const auto X = simulate_X(m.spec, make_driver(p.seed, i, p.N, p.d), m.x0, p.scheme);
    PathSummary s;
    for (int j = 0; j < p.d; ++j) s.values.push_back(X(X.N(), j));
    double sup = 0;
    for (double v : X.values) sup = std::max(sup, std::abs(v));
    s.values.insert(s.values.end(), {sup, X.eig_min_seen, X.eig_max_seen});
    if (!X.ellipticity_ok) {
      s.status = PathStatus::excluded;
      s.codes = "ellipticity";
    }
    return s;
  };
  return st;
}

inline Stage lift_stage(const Plan& p, const Model& m) {
  Stage st;
  st.columns = {"chen_defect", "symmetry_defect", "scale", "rho_alpha"};
  st.fn = [&p, &m](long i) {
    const auto s = simulate_path(p, m, i, false);
    const int M = s.rp.M();
    const auto triples = random_triples(M, p.lift_checks, p.seed ^ static_cast<std::uint64_t>(i));
    std::vector<std::array<int, 2>> pairs;
    for (const auto& t : triples) pairs.push_back({t[0], t[2]});
    return PathSummary{0, PathStatus::ok,
                       {chen_defect(s.rp, triples), symmetry_defect(s.rp, pairs), lift_scale(s.rp),
                        holder_norms(s.rp, p.alpha).rho_alpha},
                       ""};
  };
  return st;
}

inline Stage solve_stage(const Plan& p, const Model& m) {
  Stage st;
  st.columns = indexed("y_t_", m.fields.state_dim);
  st.columns.push_back("sup_abs_y");
  st.columns.push_back("jacobian_defect");
  st.fn = [&p, &m, nc = st.columns.size()](long i) {
    auto s = simulate_path(p, m, i, false);
    solve_path(s, m);
    if (s.JY.alarm) return detail::excluded("jacobian_composition", nc);
    PathSummary r;
    const int t = p.t_index();
    for (int a = 0; a < s.Y.m; ++a) r.values.push_back(s.Y.y(t, a));
    double sup = 0;
    for (double v : s.Y.Y) sup = std::max(sup, std::abs(v));
    r.values.push_back(sup);
    r.values.push_back(s.JY.composition_defect);
    return r;
  };
  return st;
}

// Reduced Malliavin matrix at t plus the Jacobian probe along the configured direction.
inline Stage malliavin_stage(const Plan& p, const Model& m) {
  Stage st;
  st.columns = {"lambda_min_C", "lambda_min_Gamma", "trace_C", "probe_q1", "probe_q2", "probe_m"};
  const auto ys = indexed("y_t_", m.fields.state_dim);
  st.columns.insert(st.columns.end(), ys.begin(), ys.end());
  require(static_cast<int>(p.probe_v.size()) == m.fields.state_dim, "estimators.probe.v must match the state dimension");
  st.fn = [&p, &m, nc = st.columns.size()](long i) {
    auto s = simulate_path(p, m, i, true);
    if (s.flow.alarm) return detail::excluded("flow_composition", nc);
    solve_path(s, m);
    if (s.JY.alarm) return detail::excluded("jacobian_composition", nc);
    const int t = p.t_index();
    const auto F = malliavin_Y_factors(m.fields, s.rp, s.Y, s.JY, s.flow, m.spec);
    MalliavinMatrixPair pair;
    try {
      pair = reduced_matrix(F, t);
    } catch (const NumericalDegradation&) {
      return detail::excluded("not_psd", nc);
    }
    const auto probe = jacobian_probe(F, to_vec(p.probe_v).normalized(), t);
    PathSummary r;
    r.values = {pair.lambda_min_C, pair.lambda_min_Gamma, pair.trace_C, probe.q1, probe.q2, probe.m};
    for (int a = 0; a < s.Y.m; ++a) r.values.push_back(s.Y.y(t, a));
    return r;
  };
  return st;
}

inline Stage roughness_stage(const Plan& p, const Model& m) {
  Stage st;
  st.columns = {"D_hat", "L_lower"};
  require(p.N % (1 << p.n_max) == 0, "estimators.n_max: 2^n_max must divide grid.N");
  st.fn = [&p, &m](long i) {
    const auto X = simulate_X(m.spec, make_driver(p.seed, i, p.N, p.d), m.x0, p.scheme);
    const auto r = roughness_modulus(X, p.theta, p.n_max, p.sphere_mesh);
    return PathSummary{0, PathStatus::ok, {r.D_hat, r.L_lower}, ""};
  };
  return st;
}

// Window quantity plus, in d = 1, the bridge-corrected confinement probability for each eps.
inline Stage smallball_stage(const Plan& p, const Model& m) {
  Stage st;
  st.columns = {"q"};
  const auto eps = sorted_decreasing(p.eps_grid);
  for (size_t j = 0; j < eps.size(); ++j) st.columns.push_back("stay_" + std::to_string(j));
  const int s = static_cast<int>(std::llround(p.smallball_s * p.N));
  const int e = static_cast<int>(std::llround((p.smallball_s + p.smallball_delta) * p.N));
  require(std::abs(s - p.smallball_s * p.N) < 1e-9 && std::abs(e - (p.smallball_s + p.smallball_delta) * p.N) < 1e-9,
          "estimators.smallball window must fall on the grid");
  st.fn = [&p, &m, s, e, eps, mesh = sphere_mesh(p.d, p.sphere_mesh)](long i) {
    const auto X = simulate_X(m.spec, make_driver(p.seed, i, p.N, p.d), m.x0, p.scheme);
    std::vector<double> stay, scratch;
    PathSummary r;
    r.values.push_back(smallball_path(m.spec, X, s, e, mesh, eps, p.bridge, stay, scratch));
    r.values.insert(r.values.end(), stay.begin(), stay.end());
    return r;
  };
  return st;
}

// Post-processing of completed runs.

inline TailReport tail_from(const RunResult& r, const std::string& column, const std::vector<double>& eps) {
  const auto& st = r.aggregate[column];
  return make_tail_report(column, st.sorted, eps, r.aggregate.n_alarm + r.aggregate.n_excluded);
}

struct EigenTail {
  TailReport tail;
  int used_points = 0;
};

inline EigenTail eigen_tail_report(const RunResult& r, const Plan& p) {
  EigenTail e;
  e.tail = tail_from(r, "lambda_min_C", p.eps_grid);
  e.tail.fitted_exponent = loglog_tail_slope(e.tail, 30, 2.0, &e.used_points);
  return e;
}

inline SmallballReport smallball_report(const RunResult& r, const Plan& p, const Model& m) {
  SmallballReport out;
  out.raw = tail_from(r, "q", p.eps_grid);
  const bool bridge = p.bridge && m.spec.d == 1;
  const double n = static_cast<double>(r.aggregate.n_ok);
  std::vector<double> x, y;
  for (size_t j = 0; j < out.raw.epsilons.size(); ++j) {
    if (bridge) {
      const auto& st = r.aggregate["stay_" + std::to_string(j)];
      const double mean = st.mean();
      out.corrected.push_back(mean);
      out.corrected_se.push_back(std::sqrt(st.variance() * (n - 1) / n / n));
    } else {
      const double q = out.raw.probabilities[j];
      out.corrected.push_back(q);
      out.corrected_se.push_back(std::sqrt(q * (1 - q) / n));
    }
    if (out.corrected[j] > 0 && out.corrected[j] < 1) {
      x.push_back(p.smallball_delta / std::pow(out.raw.epsilons[j], 2 - 2 * p.k));
      y.push_back(std::log(out.corrected[j]));
    }
  }
  out.fitted_exponent = least_squares_slope(x, y);
  out.raw.fitted_exponent = out.fitted_exponent;
  return out;
}

struct DensityReport {
  GaussianBoundFit fit;
  std::vector<double> bandwidth;
  long n_samples = 0;
};

inline DensityReport density_report(const RunResult& r, const Plan& p, const Model& m) {
  const int dim = m.fields.state_dim;
  std::vector<double> samples;
  for (const auto& s : r.summaries)
    if (s.status == PathStatus::ok) samples.insert(samples.end(), s.values.begin(), s.values.begin() + dim);
  const KernelDensity kde(samples, dim, p.bandwidth);
  DensityReport out;
  out.fit = gaussian_bound_fit(kde, p.y0, p.t, ball_grid(p.y0, p.density_radius * std::sqrt(p.t), p.density_step));
  out.bandwidth = kde.bandwidth();
  out.n_samples = kde.size();
  return out;
}

inline std::vector<double> ok_column(const RunResult& r, const std::string& column) {
  const int c = r.aggregate.column(column);
  std::vector<double> out;
  for (const auto& s : r.summaries)
    if (s.status == PathStatus::ok) out.push_back(s.values[c]);
  return out;
}

inline ConditionalTail probe_report(const RunResult& r, const Plan& p, const Model& m) {
  return conditional_tail(ok_column(r, "probe_q1"), ok_column(r, "probe_m"), p.eps_grid, p.probe_power,
                          m.spec.is_constant());
}

// Probe box and direction mesh for the deterministic checks.
inline std::vector<Vec> assumption_probes(const Plan& p) { return probe_box(p.d, p.probe_half_width, p.probe_per_axis); }

}  // namespace mrl
