#pragma once

// Path-parallel Monte Carlo driver. Every path is a pure function of its index, results are
// folded in index order, and progress is kept in an append-only CSV log that doubles as the
// checkpoint.

#include "mrl/core.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace mrl {

enum class PathStatus { ok, alarm, excluded };

inline const char* to_string(PathStatus s) {
  switch (s) {
    case PathStatus::ok: return "ok";
    case PathStatus::alarm: return "alarm";
    default: return "excluded";
  }
}

inline PathStatus parse_status(const std::string& s) {
  if (s == "ok") return PathStatus::ok;
  if (s == "alarm") return PathStatus::alarm;
  if (s == "excluded") return PathStatus::excluded;
  throw ValidationError("summary log: unknown status '" + s + "'");
}

struct PathSummary {
  long index = 0;
  PathStatus status = PathStatus::ok;
  std::vector<double> values;
  std::string codes;  // space-separated alarm codes
};

// Compensated (Neumaier) running sum.
struct NeumaierSum {
  double sum = 0.0, comp = 0.0;

  void add(double x) {
    const double t = sum + x;
    comp += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  void merge(const NeumaierSum& o) {
    add(o.sum);
    comp += o.comp;
  }
  double value() const { return sum + comp; }
};

struct ColumnStats {
  long n = 0;
  NeumaierSum sum, sum2;
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
  std::vector<double> sorted;  // ascending once the owning aggregate is finalized

  double mean() const { return n ? sum.value() / n : std::numeric_limits<double>::quiet_NaN(); }
  double variance() const {
    if (n < 2) return 0.0;
    const double m = mean();
    return std::max(0.0, (sum2.value() - n * m * m) / (n - 1));
  }
};

// Aggregate over ok paths; alarm and excluded paths are only counted.
struct Aggregate {
  std::string plan_id;
  std::vector<std::string> columns;
  long n_ok = 0, n_alarm = 0, n_excluded = 0;
  std::vector<ColumnStats> stats;

  long total() const { return n_ok + n_alarm + n_excluded; }
  bool degraded() const { return total() > 0 && 100 * (n_alarm + n_excluded) > total(); }
  int column(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    require(it != columns.end(), "aggregate: no column '" + name + "'");
    return static_cast<int>(it - columns.begin());
  }
  const ColumnStats& operator[](const std::string& name) const { return stats[column(name)]; }

  void add(const PathSummary& s) {
    if (s.status == PathStatus::alarm) {
      ++n_alarm;
      return;
    }
    if (s.status == PathStatus::excluded) {
      ++n_excluded;
      return;
    }
    require(s.values.size() == columns.size(), "aggregate: summary has the wrong number of values");
    ++n_ok;
    for (size_t c = 0; c < columns.size(); ++c) {
      const double v = s.values[c];
      ColumnStats& st = stats[c];
      ++st.n;
      st.sum.add(v);
      st.sum2.add(v * v);
      st.min = std::min(st.min, v);
      st.max = std::max(st.max, v);
      st.sorted.push_back(v);
    }
  }
  void finalize() {
    for (auto& st : stats) std::sort(st.sorted.begin(), st.sorted.end());
  }
};

inline Aggregate make_aggregate(std::string plan_id, std::vector<std::string> columns) {
  Aggregate a;
  a.plan_id = std::move(plan_id);
  a.columns = std::move(columns);
  a.stats.resize(a.columns.size());
  return a;
}

inline Aggregate merge_reports(const Aggregate& a, const Aggregate& b) {
  require(a.plan_id == b.plan_id, "merge_reports: plan ids differ ('" + a.plan_id + "' vs '" + b.plan_id + "')");
  require(a.columns == b.columns, "merge_reports: column sets differ");
  Aggregate r = a, bb = b;
  r.finalize();
  bb.finalize();
  r.n_ok += b.n_ok;
  r.n_alarm += b.n_alarm;
  r.n_excluded += b.n_excluded;
  for (size_t c = 0; c < r.stats.size(); ++c) {
    ColumnStats& x = r.stats[c];
    const ColumnStats& y = bb.stats[c];
    x.n += y.n;
    x.sum.merge(y.sum);
    x.sum2.merge(y.sum2);
    x.min = std::min(x.min, y.min);
    x.max = std::max(x.max, y.max);
    std::vector<double> s(x.sorted.size() + y.sorted.size());
    std::merge(x.sorted.begin(), x.sorted.end(), y.sorted.begin(), y.sorted.end(), s.begin());
    x.sorted = std::move(s);
  }
  return r;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct HarnessOptions {
  int workers = 1;
  long batch = 256;          // paths per checkpoint
  std::string log_path;      // empty disables the summary log
  std::string plan_id;
  std::vector<std::string> columns;
  long max_batches = -1;     // stop early after this many new batches (staged runs)
};

struct RunResult {
  Aggregate aggregate;
  std::vector<PathSummary> summaries;  // sorted by index
  long resumed = 0;                    // paths recovered from an existing log
  bool complete = false;
  bool degraded() const { return aggregate.degraded(); }
};

using PathFunction = std::function<PathSummary(long)>;

namespace detail {

inline std::string sanitize_code(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ' ';
  return s;
}

inline std::string log_header(const HarnessOptions& o) {
  std::string h = "# mrl " + std::string(kVersion) + " plan=" + o.plan_id + "\npath_index,status,codes";
  for (const auto& c : o.columns) h += "," + c;
  return h + "\n";
}

inline std::string log_row(const PathSummary& s) {
  std::string row = std::to_string(s.index) + "," + to_string(s.status) + "," + s.codes;
  for (double v : s.values) row += "," + format_double(v);
  return row + "\n";
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

// Parses a log written for the same plan. Only newline-terminated rows count, so a row cut by
// a crash is dropped and recomputed.
inline std::map<long, PathSummary> read_log(const std::string& path, const HarnessOptions& o, long n_paths) {
  std::ifstream is(path, std::ios::binary);
  std::string content((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  std::map<long, PathSummary> done;
  if (content.empty()) return done;
  const std::string header = log_header(o);
  if (content.compare(0, header.size(), header) != 0)
    throw ValidationError("summary log " + path + " was written for a different plan or code version");
  size_t pos = header.size();
  while (pos < content.size()) {
    const size_t nl = content.find('\n', pos);
    if (nl == std::string::npos) break;
    const auto f = split(content.substr(pos, nl - pos), ',');
    pos = nl + 1;
    if (f.size() != 3 + o.columns.size()) continue;
    PathSummary s;
    char* end = nullptr;
    s.index = std::strtol(f[0].c_str(), &end, 10);
    if (*end || s.index < 0 || s.index >= n_paths) continue;
    s.status = parse_status(f[1]);
    s.codes = f[2];
    for (size_t c = 0; c < o.columns.size(); ++c) s.values.push_back(std::strtod(f[3 + c].c_str(), nullptr));
    done.emplace(s.index, std::move(s));
  }
  return done;
}

inline PathSummary run_one(const PathFunction& fn, long index, size_t n_columns) {
  PathSummary s;
  try {
    s = fn(index);
  } catch (const std::exception& e) {
    s = PathSummary{};
    s.status = PathStatus::alarm;
    s.codes = sanitize_code(e.what());
  } catch (...) {
    s = PathSummary{};
    s.status = PathStatus::alarm;
    s.codes = "unknown failure";
  }
  s.index = index;
  s.values.resize(n_columns, std::numeric_limits<double>::quiet_NaN());
  s.codes = sanitize_code(s.codes);
  if (s.status == PathStatus::ok &&
      !std::all_of(s.values.begin(), s.values.end(), [](double v) { return std::isfinite(v); })) {
    s.status = PathStatus::excluded;
    s.codes = "nonfinite";
  }
  return s;
}

}  // namespace detail

inline int default_workers() {
  if (const char* env = std::getenv("MRL_WORKERS")) {
    const int w = std::atoi(env);
    if (w >= 1) return w;
  }
  return 1;
}

inline RunResult run_plan(long n_paths, const PathFunction& fn, const HarnessOptions& o) {
  require(n_paths >= 1, "run_plan: n_paths must be at least 1");
  require(o.workers >= 1, "run_plan: workers must be at least 1");
  require(o.batch >= 1, "run_plan: batch must be at least 1");
  const size_t ncol = o.columns.size();
  std::map<long, PathSummary> done;
  RunResult res;
  if (!o.log_path.empty()) {
    if (std::filesystem::exists(o.log_path)) done = detail::read_log(o.log_path, o, n_paths);
    res.resumed = static_cast<long>(done.size());
    // Rewrite the recovered prefix so that appends start on a clean line.
    const std::string tmp = o.log_path + ".tmp";
    {
      std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
      if (!os) throw Error(ErrorKind::io, "run_plan: cannot write " + tmp);
      os << detail::log_header(o);
      for (const auto& [i, s] : done) os << detail::log_row(s);
    }
    std::filesystem::rename(tmp, o.log_path);
  }
  std::vector<long> todo;
  for (long i = 0; i < n_paths; ++i)
    if (!done.count(i)) todo.push_back(i);

  std::ofstream log;
  if (!o.log_path.empty()) log.open(o.log_path, std::ios::binary | std::ios::app);
  long batches = 0;
  for (size_t start = 0; start < todo.size(); start += o.batch) {
    if (o.max_batches >= 0 && batches >= o.max_batches) break;
    const size_t stop = std::min(todo.size(), start + static_cast<size_t>(o.batch));
    std::vector<PathSummary> out(stop - start);
    std::atomic<size_t> next{start};
    auto work = [&] {
      for (size_t k; (k = next.fetch_add(1)) < stop;) out[k - start] = detail::run_one(fn, todo[k], ncol);
    };
    const int nthreads = static_cast<int>(std::min<size_t>(o.workers, stop - start));
    if (nthreads <= 1) {
      work();
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < nthreads; ++w) pool.emplace_back(work);
      for (auto& t : pool) t.join();
    }
    for (auto& s : out) {
      if (log.is_open()) log << detail::log_row(s);
      done.emplace(s.index, std::move(s));
    }
    if (log.is_open()) log.flush();
    ++batches;
  }
  res.aggregate = make_aggregate(o.plan_id, o.columns);
  for (auto& [i, s] : done) {
    res.aggregate.add(s);
    res.summaries.push_back(std::move(s));
  }
  res.aggregate.finalize();
  res.complete = static_cast<long>(res.summaries.size()) == n_paths;
  return res;
}

}  // namespace mrl
