#pragma once

// Conditional-tail probe of the implication {integral of f against J^X small} => {f small}
// for f = f_v(s) = v^T J^Y_{0<-s} V(Y_s).

#include "mrl/estimators/tail.hpp"
#include "mrl/malliavin.hpp"

namespace mrl {

struct JacobianProbe {
  double q1 = 0.0;  // sup_r |int_0^r f dJ^X_{.<-0}|
  double q2 = 0.0;  // sup_{r <= t} |int_[r,t] f dD_rX|, jump at r included
  double m = 0.0;   // sup_{s <= t} |f(s)|
};

inline JacobianProbe jacobian_probe(const MalliavinFactors& F, const Vec& v, int t) {
  require(v.size() == F.m, "jacobian_probe: v has the wrong dimension");
  require(t >= 0 && t <= F.M(), "jacobian_probe: t outside grid");
  JacobianProbe p;
  for (int r = 0; r <= t; ++r) {
    p.q1 = std::max(p.q1, (v.transpose() * F.block(F.H, r, F.m, F.d)).norm());
    p.q2 = std::max(p.q2, (v.transpose() * F.reduced(r, t)).norm());
    p.m = std::max(p.m, (v.transpose() * F.block(F.G, r, F.m, F.d)).norm());
  }
  return p;
}

struct ConditionalTail {
  std::vector<double> eps;
  std::vector<long> n_cond, n_exceed;
  std::vector<double> p, lower, upper;
  bool degenerate = false;  // constant coefficient: the probe has no mechanism to test
};

// P(m > eps^power | q <= eps) for each eps.
inline ConditionalTail conditional_tail(const std::vector<double>& q, const std::vector<double>& m,
                                        const std::vector<double>& eps_grid, double power, bool degenerate = false) {
  require(q.size() == m.size(), "conditional_tail: sample sizes differ");
  ConditionalTail c;
  c.degenerate = degenerate;
  c.eps = sorted_decreasing(eps_grid);
  if (degenerate) return c;
  for (double e : c.eps) {
    long nc = 0, ne = 0;
    for (size_t k = 0; k < q.size(); ++k)
      if (q[k] <= e) {
        ++nc;
        if (m[k] > std::pow(e, power)) ++ne;
      }
    c.n_cond.push_back(nc);
    c.n_exceed.push_back(ne);
    c.p.push_back(nc > 0 ? static_cast<double>(ne) / nc : 0.0);
    const auto [lo, hi] = wilson_interval(ne, nc);
    c.lower.push_back(lo);
    c.upper.push_back(hi);
  }
  return c;
}

}  // namespace mrl
