#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <istream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "cra/analytic.hpp"
#include "cra/params.hpp"
#include "cra/sim.hpp"

namespace cra::cli {

enum class SweepVar { LambdaT, PoolSize, PayloadLen, PErr };
enum class Metric { Eta1, Eta2, EtaMa, DBarRatio };

inline std::string_view to_string(SweepVar v) {
  switch (v) {
    case SweepVar::LambdaT: return "lambda_T";
    case SweepVar::PoolSize: return "L";
    case SweepVar::PayloadLen: return "M";
    case SweepVar::PErr: return "p_err";
  }
  return "?";
}

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::Eta1: return "eta1";
    case Metric::Eta2: return "eta2";
    case Metric::EtaMa: return "eta_ma";
    case Metric::DBarRatio: return "d_bar_ratio";
  }
  return "?";
}

inline SweepVar parse_sweep_var(std::string_view s) {
  for (auto v : {SweepVar::LambdaT, SweepVar::PoolSize, SweepVar::PayloadLen, SweepVar::PErr})
    if (s == to_string(v)) return v;
  throw ConfigError("var", "unknown sweep variable '" + std::string(s) + "' (lambda_T|L|M|p_err)");
}

inline Metric parse_metric(std::string_view s) {
  for (auto m : {Metric::Eta1, Metric::Eta2, Metric::EtaMa, Metric::DBarRatio})
    if (s == to_string(m)) return m;
  throw ConfigError("metrics", "unknown metric '" + std::string(s) +
                                   "' (eta1|eta2|eta_ma|d_bar_ratio)");
}

inline const std::vector<Metric>& all_metrics() {
  static const std::vector<Metric> m{Metric::Eta1, Metric::Eta2, Metric::EtaMa, Metric::DBarRatio};
  return m;
}

/// Protocol parameters at one grid point. Sweeps over L, M and p_err keep
/// the arrival rate of the base configuration.
inline ProtocolParams apply_sweep(ProtocolParams p, SweepVar var, double value) {
  switch (var) {
    case SweepVar::LambdaT:
      p.set_normalized_load(value);
      break;
    case SweepVar::PoolSize:
      if (value != std::round(value)) throw ConfigError("grid", "L values must be integers");
      p.pool_size = static_cast<std::int64_t>(value);
      break;
    case SweepVar::PayloadLen:
      if (value != std::round(value)) throw ConfigError("grid", "M values must be integers");
      p.payload_len = static_cast<std::int64_t>(value);
      break;
    case SweepVar::PErr:
      p.p_md = value;
      p.p_fa = value;
      break;
  }
  p.validate();
  return p;
}

struct SweepSpec {
  std::string name = "custom";
  sim::SimConfig base;
  SweepVar variable = SweepVar::LambdaT;
  std::vector<double> grid;
  std::vector<Metric> outputs = all_metrics();
  std::vector<std::uint64_t> replicate_seeds{1};
  bool simulate = true;

  void validate() const {
    if (grid.empty()) throw ConfigError("grid", "must not be empty");
    for (std::size_t i = 1; i < grid.size(); ++i)
      if (!(grid[i] > grid[i - 1])) throw ConfigError("grid", "must be strictly increasing");
    if (outputs.empty()) throw ConfigError("metrics", "must not be empty");
    if (simulate && replicate_seeds.empty()) throw ConfigError("seeds", "must not be empty");
    for (double v : grid) {
      sim::SimConfig c = base;
      c.params = apply_sweep(base.params, variable, v);
      c.validate();
    }
  }
};

inline std::vector<double> linear_grid(double first, double step, std::size_t count) {
  std::vector<double> g;
  g.reserve(count);
  for (std::size_t i = 0; i < count; ++i) g.push_back(first + step * static_cast<double>(i));
  return g;
}

/// Sweep presets. All share N=31, tau=4, P_MD=P_FA=0.01 and,
/// unless swept, M=256 and L=10N:
///   fig3: lambda_T = 0.1..2.0
///   fig4: L = 50..1000 at lambda_T = 1
///   fig5: M = 32..640 at lambda = 1/200
///   fig6: P_MD = P_FA = 0.005..0.1 at lambda_T = 1
inline SweepSpec preset(std::string_view name) {
  SweepSpec s;
  s.name = std::string(name);
  s.base.params = reference_params(1.0);
  s.base.n_sessions = 100000;
  s.base.warmup_sessions = 1000;
  if (name == "fig3") {
    s.variable = SweepVar::LambdaT;
    for (int i = 1; i <= 20; ++i) s.grid.push_back(i / 10.0);
  } else if (name == "fig4") {
    s.variable = SweepVar::PoolSize;
    s.grid = linear_grid(50.0, 50.0, 20);
  } else if (name == "fig5") {
    s.variable = SweepVar::PayloadLen;
    s.base.params.arrival_rate = 1.0 / 200.0;
    s.grid = linear_grid(32.0, 32.0, 20);
  } else if (name == "fig6") {
    s.variable = SweepVar::PErr;
    for (int i = 1; i <= 20; ++i) s.grid.push_back(i / 200.0);
  } else {
    throw ConfigError("preset", "unknown preset '" + std::string(name) + "' (fig3|fig4|fig5|fig6)");
  }
  return s;
}

/// One line of the long-format result table.
struct ResultRow {
  std::string sweep_var;
  double value = 0.0;
  std::string metric;
  std::string source;  // "analytic" or "sim"
  double estimate = 0.0;
  double std_error = 0.0;
  std::int64_t sessions = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

using ResultTable = std::vector<ResultRow>;

/// Default worker count: CRA_WORKERS if set, else the hardware concurrency.
inline unsigned default_workers() {
  if (const char* env = std::getenv("CRA_WORKERS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(i) for i in [0, n) on up to `workers` threads. The first
/// exception thrown by any task is rethrown after all threads join.
template <class Body>
void parallel_for(std::size_t n, unsigned workers, Body&& body) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            body(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

namespace detail {

inline double analytic_metric(Metric m, const ProtocolParams& p) {
  const double T = p.transaction_time();
  switch (m) {
    case Metric::Eta1: return T * analytic::throughput_cra1(p);
    case Metric::Eta2: return T * analytic::throughput_cra2(p).eta2;
    case Metric::EtaMa: return T * analytic::throughput_maloha(p);
    case Metric::DBarRatio: return analytic::mean_detected(p) / p.preamble_time();
  }
  return 0.0;
}

inline sim::Scheme scheme_for(Metric m) {
  switch (m) {
    case Metric::Eta1: return sim::Scheme::Cra1;
    case Metric::EtaMa: return sim::Scheme::MultichannelAloha;
    default: return sim::Scheme::Cra2;
  }
}

}  // namespace detail

/**
 * Evaluates every grid point: one analytic row per metric followed by one
 * simulated row per replicate seed. Simulation runs (grid point, seed,
 * scheme) are dispatched to the worker pool; the table order depends only
 * on grid and seed indices.
 */
inline ResultTable run_sweep(const SweepSpec& spec, unsigned workers = default_workers()) {
  spec.validate();
  const std::vector<sim::Scheme> schemes{sim::Scheme::Cra1, sim::Scheme::Cra2,
                                         sim::Scheme::MultichannelAloha};
  const std::size_t n_grid = spec.grid.size();
  const std::size_t n_seed = spec.simulate ? spec.replicate_seeds.size() : 0;

  std::vector<bool> needed(schemes.size(), false);
  for (Metric m : spec.outputs) needed[static_cast<std::size_t>(detail::scheme_for(m))] = true;

  std::vector<sim::ThroughputEstimate> runs(n_grid * n_seed * schemes.size());
  parallel_for(runs.size(), workers, [&](std::size_t i) {
    const std::size_t scheme_ix = i % schemes.size();
    if (!needed[scheme_ix]) return;
    const std::size_t seed_ix = (i / schemes.size()) % n_seed;
    const std::size_t grid_ix = i / schemes.size() / n_seed;
    sim::SimConfig cfg = spec.base;
    cfg.params = apply_sweep(spec.base.params, spec.variable, spec.grid[grid_ix]);
    cfg.scheme = schemes[scheme_ix];
    cfg.seed = spec.replicate_seeds[seed_ix];
    runs[i] = sim::estimate_throughput(cfg);
  });

  ResultTable table;
  const std::string var(to_string(spec.variable));
  for (std::size_t g = 0; g < n_grid; ++g) {
    const ProtocolParams p = apply_sweep(spec.base.params, spec.variable, spec.grid[g]);
    const double T = p.transaction_time();
    for (Metric m : spec.outputs) {
      const std::string metric(to_string(m));
      table.push_back({var, spec.grid[g], metric, "analytic", detail::analytic_metric(m, p), 0.0, 0, 0});
      for (std::size_t s = 0; s < n_seed; ++s) {
        const auto scheme_ix = static_cast<std::size_t>(detail::scheme_for(m));
        const auto& e = runs[(g * n_seed + s) * schemes.size() + scheme_ix];
        double est, se;
        if (m == Metric::DBarRatio) {
          est = e.mean_D / p.preamble_time();
          se = e.mean_D_std_error / p.preamble_time();
        } else {
          est = T * e.mean_throughput;
          se = T * e.std_error;
        }
        table.push_back({var, spec.grid[g], metric, "sim", est, se, e.sessions_run,
                         spec.replicate_seeds[s]});
      }
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline constexpr std::string_view kCsvHeader =
    "sweep_var,value,metric,source,estimate,std_error,sessions,seed";

/// Shortest-safe round-trip formatting: 17 significant digits.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_results(std::ostream& os, const ResultTable& table) {
  os << kCsvHeader << '\n';
  for (const auto& r : table) {
    os << r.sweep_var << ',' << format_double(r.value) << ',' << r.metric << ',' << r.source << ','
       << format_double(r.estimate) << ',' << format_double(r.std_error) << ',' << r.sessions << ','
       << r.seed << '\n';
  }
}

/// Writes the table with LF line endings; I/O failures name the path.
inline void emit_results(const ResultTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_results(out, table);
  out.flush();
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline ResultTable parse_results(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kCsvHeader)
    throw std::runtime_error("results: missing or unexpected header");
  ResultTable table;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 8) throw std::runtime_error("results: expected 8 fields in '" + line + "'");
    table.push_back({f[0], std::strtod(f[1].c_str(), nullptr), f[2], f[3],
                     std::strtod(f[4].c_str(), nullptr), std::strtod(f[5].c_str(), nullptr),
                     std::stoll(f[6]), std::stoull(f[7])});
  }
  return table;
}

}  // namespace cra::cli
