#pragma once

// JSON experiment configs (schema version 1): strict parsing into a Plan, dot-path
// overrides, and the canonical form whose hash tags every artifact.

#include "mrl/pipeline.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <set>
#include <string>

namespace mrl {

using json = nlohmann::json;

struct Config {
  Plan plan;
  std::string out_dir = "out";
};

namespace detail {

// Walks one JSON object, remembering which keys were consumed so leftovers can be rejected.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError("config: '" + (path_.empty() ? "<root>" : path_) + "' must be an object");
  }

  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
  bool has(const std::string& k) const { return j_.contains(k) && !j_.at(k).is_null(); }

  const json& at(const std::string& k, bool required) {
    seen_.insert(k);
    if (!has(k)) {
      if (required) throw ValidationError("config: missing required field '" + key(k) + "'");
      static const json null_value;
      return null_value;
    }
    return j_.at(k);
  }

  template <class T>
  void get(const std::string& k, T& out, bool required = false) {
    const json& v = at(k, required);
    if (v.is_null()) return;
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw std::runtime_error("number expected");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer() && !v.is_number_unsigned()) throw std::runtime_error("integer expected");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::runtime_error("boolean expected");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::runtime_error("string expected");
      }
      out = v.get<T>();
    } catch (const std::exception& e) {
      throw ValidationError("config: field '" + key(k) + "': " + e.what());
    }
  }

  void get(const std::string& k, std::vector<double>& out, bool required = false) {
    const json& v = at(k, required);
    if (v.is_null()) return;
    if (!v.is_array()) throw ValidationError("config: field '" + key(k) + "' must be an array of numbers");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_number()) throw ValidationError("config: field '" + key(k) + "' must be an array of numbers");
      out.push_back(e.get<double>());
    }
  }

  void get(const std::string& k, std::optional<double>& out) {
    const json& v = at(k, false);
    if (v.is_null()) return;
    if (!v.is_number()) throw ValidationError("config: field '" + key(k) + "': number expected");
    out = v.get<double>();
  }

  Section sub(const std::string& k, bool required = false) {
    const json& v = at(k, required);
    static const json empty = json::object();
    return Section(v.is_null() ? empty : v, key(k));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ValidationError("config: unknown field '" + key(it.key()) + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class E>
E parse_enum(const std::string& field, const std::string& v, std::initializer_list<std::pair<const char*, E>> opts) {
  std::string names;
  for (const auto& [n, e] : opts) {
    if (v == n) return e;
    names += std::string(names.empty() ? "" : ", ") + n;
  }
  throw ValidationError("config: field '" + field + "' must be one of {" + names + "}, got '" + v + "'");
}

}  // namespace detail

inline Config config_from_json(const json& j) {
  Config c;
  Plan& p = c.plan;
  detail::Section root(j, "");
  int version = 0;
  root.get("version", version, true);
  if (version != 1) throw ValidationError("config: field 'version' must be 1");

  auto grid = root.sub("grid", true);
  grid.get("N", p.N, true);
  grid.get("N_coarse", p.N_coarse, true);
  grid.get("t", p.t);
  grid.finish();

  auto diff = root.sub("diffusion", true);
  diff.get("catalog", p.diffusion_id, true);
  diff.get("d", p.d, true);
  diff.get("params", p.diffusion_params);
  diff.get("lambda", p.lambda);
  diff.get("Lambda", p.Lambda);
  std::string drift = "half_divergence", scheme = "euler";
  diff.get("drift", drift);
  diff.get("scheme", scheme);
  p.drift = detail::parse_enum<DriftConvention>("diffusion.drift", drift,
                                                {{"half_divergence", DriftConvention::half_divergence},
                                                 {"full_divergence", DriftConvention::full_divergence}});
  p.scheme = detail::parse_enum<Scheme>("diffusion.scheme", scheme, {{"euler", Scheme::euler}, {"milstein", Scheme::milstein}});
  p.x0.assign(p.d, 0.0);
  diff.get("x0", p.x0);
  diff.finish();

  auto fields = root.sub("fields", true);
  fields.get("catalog", p.fields_id, true);
  fields.get("params", p.fields_params);
  p.y0.clear();
  fields.get("y0", p.y0);
  fields.finish();

  auto run = root.sub("run", true);
  run.get("n_paths", p.n_paths, true);
  run.get("seed", p.seed, true);
  run.get("batch", p.batch);
  run.finish();

  auto est = root.sub("estimators");
  est.get("eps_grid", p.eps_grid);
  est.get("alpha", p.alpha);
  est.get("lift_checks", p.lift_checks);
  est.get("theta", p.theta);
  est.get("n_max", p.n_max);
  est.get("k", p.k);
  est.get("sphere_mesh", p.sphere_mesh);
  auto sb = est.sub("smallball");
  sb.get("s", p.smallball_s);
  sb.get("delta", p.smallball_delta);
  sb.get("bridge", p.bridge);
  sb.finish();
  auto dens = est.sub("density");
  dens.get("bandwidth", p.bandwidth);
  dens.get("radius", p.density_radius);
  dens.get("step", p.density_step);
  dens.finish();
  auto probe = est.sub("probe");
  p.probe_v.clear();
  probe.get("v", p.probe_v);
  probe.get("power", p.probe_power);
  probe.finish();
  est.finish();

  auto horm = root.sub("hormander");
  p.hormander_x.clear();
  horm.get("x", p.hormander_x);
  horm.get("k0", p.k0);
  horm.get("svd_tol", p.svd_tol);
  horm.finish();

  auto probes = root.sub("probes");
  probes.get("half_width", p.probe_half_width);
  probes.get("per_axis", p.probe_per_axis);
  probes.get("directions", p.probe_directions);
  std::string contraction = "left_contract";
  probes.get("contraction", contraction);
  p.contraction = detail::parse_enum<Contraction>("probes.contraction", contraction,
                                                  {{"left_contract", Contraction::left_contract},
                                                   {"right_contract", Contraction::right_contract}});
  probes.finish();

  auto out = root.sub("output");
  out.get("dir", c.out_dir);
  out.finish();
  root.finish();

  // Defaults that depend on the state dimension of the chosen fields.
  if (p.y0.empty() || p.probe_v.empty() || p.hormander_x.empty()) {
    const int m = make_fields(p.fields_id, p.d, p.fields_params).state_dim;
    if (p.y0.empty()) p.y0.assign(m, 0.0);
    if (p.hormander_x.empty()) p.hormander_x.assign(m, 0.0);
    if (p.probe_v.empty()) {
      p.probe_v.assign(m, 0.0);
      p.probe_v[0] = 1.0;
    }
  }
  build_model(p);  // catalog ids, parameter counts and ellipticity bounds
  return c;
}

// Canonical form of a plan: every field explicit, keys sorted, output location excluded.
inline json plan_to_json(const Plan& p) {
  json j;
  j["version"] = 1;
  j["grid"] = {{"N", p.N}, {"N_coarse", p.N_coarse}, {"t", p.t}};
  j["diffusion"] = {{"catalog", p.diffusion_id},
                    {"d", p.d},
                    {"params", p.diffusion_params},
                    {"drift", to_string(p.drift)},
                    {"scheme", p.scheme == Scheme::euler ? "euler" : "milstein"},
                    {"x0", p.x0}};
  if (p.lambda) j["diffusion"]["lambda"] = *p.lambda;
  if (p.Lambda) j["diffusion"]["Lambda"] = *p.Lambda;
  j["fields"] = {{"catalog", p.fields_id}, {"params", p.fields_params}, {"y0", p.y0}};
  j["run"] = {{"n_paths", p.n_paths}, {"seed", p.seed}, {"batch", p.batch}};
  j["estimators"] = {{"eps_grid", p.eps_grid},
                     {"alpha", p.alpha},
                     {"lift_checks", p.lift_checks},
                     {"theta", p.theta},
                     {"n_max", p.n_max},
                     {"k", p.k},
                     {"sphere_mesh", p.sphere_mesh},
                     {"smallball", {{"s", p.smallball_s}, {"delta", p.smallball_delta}, {"bridge", p.bridge}}},
                     {"density", {{"bandwidth", p.bandwidth}, {"radius", p.density_radius}, {"step", p.density_step}}},
                     {"probe", {{"v", p.probe_v}, {"power", p.probe_power}}}};
  j["hormander"] = {{"x", p.hormander_x}, {"k0", p.k0}, {"svd_tol", p.svd_tol}};
  j["probes"] = {{"half_width", p.probe_half_width},
                 {"per_axis", p.probe_per_axis},
                 {"directions", p.probe_directions},
                 {"contraction", p.contraction == Contraction::left_contract ? "left_contract" : "right_contract"}};
  return j;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Hash over the canonical plan; worker count and output directory do not enter.
inline std::string config_hash(const Plan& p) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(plan_to_json(p).dump())));
  return buf;
}

// `a.b.c=value`; the value is parsed as JSON when possible, otherwise taken as a string.
inline void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("--set expects key=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &j;
  size_t start = 0;
  while (true) {
    const size_t dot = path.find('.', start);
    const std::string part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ValidationError("--set: malformed key '" + path + "'");
    if (!node->is_object()) throw ValidationError("--set: '" + path + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

inline json load_json(const std::string& file) {
  std::ifstream is(file);
  if (!is) throw ValidationError("config: cannot open '" + file + "'");
  json j = json::parse(is, nullptr, false);
  if (j.is_discarded()) throw ValidationError("config: '" + file + "' is not valid JSON");
  return j;
}

}  // namespace mrl
