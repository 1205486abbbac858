#pragma once

// Truncated multivariate Taylor arithmetic. A Taylor value holds the
// coefficients of a polynomial in n variables up to total degree K, the jet
// of some smooth function at a base point. `valid` is the highest degree
// whose coefficients are exact; differentiation lowers it by one.

#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace mrl {

class TaylorLayout {
 public:
  TaylorLayout(int nvars, int order) : nvars(nvars), order(order) {
    std::vector<int> e(nvars, 0);
    for (int deg = 0; deg <= order; ++deg) enumerate(e, 0, deg);
    size = static_cast<int>(exps.size());
    for (int a = 0; a < size; ++a) {
      for (int b = 0; b < size; ++b) {
        if (degree[a] + degree[b] > order) continue;
        std::vector<int> s(nvars);
        for (int k = 0; k < nvars; ++k) s[k] = exps[a][k] + exps[b][k];
        products.push_back({a, b, index.at(s)});
      }
    }
    deriv.resize(nvars);
    for (int k = 0; k < nvars; ++k) {
      for (int a = 0; a < size; ++a) {
        if (exps[a][k] == 0) continue;
        std::vector<int> s = exps[a];
        s[k] -= 1;
        deriv[k].push_back({a, index.at(s), exps[a][k]});
      }
    }
  }

  static std::shared_ptr<const TaylorLayout> get(int nvars, int order) {
    static std::mutex mu;
    static std::map<std::pair<int, int>, std::shared_ptr<const TaylorLayout>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[{nvars, order}];
    if (!slot) slot = std::make_shared<TaylorLayout>(nvars, order);
    return slot;
  }

  int nvars;
  int order;
  int size = 0;
  std::vector<std::vector<int>> exps;
  std::vector<int> degree;
  std::map<std::vector<int>, int> index;
  std::vector<std::array<int, 3>> products;
  struct DerivTerm {
    int from, to, factor;
  };
  std::vector<std::vector<DerivTerm>> deriv;

 private:
  void enumerate(std::vector<int>& e, int pos, int remaining) {
    if (pos == nvars - 1) {
      e[pos] = remaining;
      index[e] = static_cast<int>(exps.size());
      exps.push_back(e);
      int deg = 0;
      for (int v : e) deg += v;
      degree.push_back(deg);
      return;
    }
    for (int v = remaining; v >= 0; --v) {
      e[pos] = v;
      enumerate(e, pos + 1, remaining - v);
    }
    e[pos] = 0;
  }
};

class Taylor {
 public:
  Taylor() = default;
  explicit Taylor(std::shared_ptr<const TaylorLayout> layout, double c0 = 0.0)
      : L(std::move(layout)), c(L->size, 0.0), valid(L->order) {
    c[0] = c0;
  }

  static Taylor variable(std::shared_ptr<const TaylorLayout> layout, int k, double x0) {
    Taylor t(layout, x0);
    if (layout->order >= 1) {
      std::vector<int> e(layout->nvars, 0);
      e[k] = 1;
      t.c[layout->index.at(e)] = 1.0;
    }
    return t;
  }

  double value() const { return c[0]; }
  double coeff(const std::vector<int>& e) const { return c[L->index.at(e)]; }

  Taylor derivative(int k) const {
    Taylor r(L);
    for (const auto& t : L->deriv[k]) r.c[t.to] += t.factor * c[t.from];
    r.valid = valid - 1;
    r.truncate();
    return r;
  }

  Taylor& operator+=(const Taylor& o) {
    for (int i = 0; i < L->size; ++i) c[i] += o.c[i];
    valid = std::min(valid, o.valid);
    truncate();
    return *this;
  }
  Taylor& operator-=(const Taylor& o) {
    for (int i = 0; i < L->size; ++i) c[i] -= o.c[i];
    valid = std::min(valid, o.valid);
    truncate();
    return *this;
  }
  Taylor& operator*=(double s) {
    for (double& v : c) v *= s;
    return *this;
  }
  Taylor& operator+=(double s) {
    c[0] += s;
    return *this;
  }

  friend Taylor operator+(Taylor a, const Taylor& b) { return a += b; }
  friend Taylor operator-(Taylor a, const Taylor& b) { return a -= b; }
  friend Taylor operator+(Taylor a, double s) { return a += s; }
  friend Taylor operator+(double s, Taylor a) { return a += s; }
  friend Taylor operator-(Taylor a, double s) { return a += -s; }
  friend Taylor operator-(double s, Taylor a) {
    a *= -1.0;
    return a += s;
  }
  friend Taylor operator*(Taylor a, double s) { return a *= s; }
  friend Taylor operator*(double s, Taylor a) { return a *= s; }
  friend Taylor operator-(Taylor a) { return a *= -1.0; }

  friend Taylor operator*(const Taylor& a, const Taylor& b) {
    Taylor r(a.L);
    for (const auto& p : a.L->products) r.c[p[2]] += a.c[p[0]] * b.c[p[1]];
    r.valid = std::min(a.valid, b.valid);
    r.truncate();
    return r;
  }

  // f(u0 + h) = sum_n f^(n)(u0) h^n / n!, with derivs[n] = f^(n)(u0).
  Taylor compose(const std::vector<double>& derivs) const {
    Taylor h = *this;
    h.c[0] = 0.0;
    Taylor r(L, derivs[0]);
    r.valid = valid;
    Taylor power(L, 1.0);
    double fact = 1.0;
    for (int n = 1; n <= L->order; ++n) {
      power = power * h;
      fact *= n;
      Taylor term = power;
      term *= derivs[n] / fact;
      r += term;
    }
    r.valid = valid;
    r.truncate();
    return r;
  }

  friend Taylor sin(const Taylor& u) {
    std::vector<double> d(u.L->order + 1);
    const double s = std::sin(u.c[0]), co = std::cos(u.c[0]);
    for (int n = 0; n <= u.L->order; ++n) d[n] = (n % 4 == 0) ? s : (n % 4 == 1) ? co : (n % 4 == 2) ? -s : -co;
    return u.compose(d);
  }
  friend Taylor cos(const Taylor& u) {
    std::vector<double> d(u.L->order + 1);
    const double s = std::sin(u.c[0]), co = std::cos(u.c[0]);
    for (int n = 0; n <= u.L->order; ++n) d[n] = (n % 4 == 0) ? co : (n % 4 == 1) ? -s : (n % 4 == 2) ? -co : s;
    return u.compose(d);
  }
  friend Taylor exp(const Taylor& u) {
    return u.compose(std::vector<double>(u.L->order + 1, std::exp(u.c[0])));
  }

  std::shared_ptr<const TaylorLayout> L;
  std::vector<double> c;
  int valid = 0;

 private:
  void truncate() {
    for (int i = 0; i < L->size; ++i)
      if (L->degree[i] > valid) c[i] = 0.0;
  }
};

inline double constant_like(double, double v) { return v; }
inline Taylor constant_like(const Taylor& t, double v) { return Taylor(t.L, v); }

}  // namespace mrl
