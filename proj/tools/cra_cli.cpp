// cra: command-line front end for the compressive random access toolkit.
//
// Subcommands:
//   analytic   closed-form steady state and throughputs at one operating point
//   simulate   Monte Carlo estimate for one scheme/mode
//   sweep      presets (fig3|fig4|fig5|fig6) or a custom grid, CSV out
//   signal     ML pairwise-error trials and spark/identifiability checks
//   stability  fast-retrial backlog trajectories
//
// Parameters may come from a flat key=value file (--config); command-line
// flags override file values. With --out, the effective configuration is
// echoed next to the output as <out>.config.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cra/cra.hpp"

namespace {

struct Options {
  cra::ProtocolParams params;
  std::optional<double> normalized_load;
  std::string scheme = "cra2";
  std::string mode = "drop";
  std::int64_t n_sessions = 100000;
  std::int64_t warmup_sessions = 1000;
  std::int64_t initial_backlog = 0;
  std::int64_t batches = 32;
  std::optional<std::int64_t> user_cap;
  std::uint64_t seed = 1;
  unsigned workers = cra::cli::default_workers();
  std::string out;

  std::string preset;
  std::string var = "lambda_T";
  std::vector<double> grid;
  std::vector<std::string> metrics{"eta1", "eta2", "eta_ma", "d_bar_ratio"};
  std::vector<std::uint64_t> seeds;
  bool no_sim = false;

  std::string experiment = "ml";
  std::optional<std::int64_t> pool_rows;  // default 8 (ml), 4 (spark)
  std::optional<std::int64_t> pool_cols;  // default 32 (ml), 8 (spark)
  std::int64_t active = 4;
  std::vector<double> snr{0.0, 1.0, 4.0, 16.0};
  std::int64_t trials = 1000000;
  std::int64_t pools = 50;

  std::int64_t horizon = 10000;
  std::int64_t replicas = 1;
};

cra::ProtocolParams effective_params(const Options& o) {
  cra::ProtocolParams p = o.params;
  if (o.normalized_load) p.set_normalized_load(*o.normalized_load);
  p.validate();
  return p;
}

cra::sim::SimConfig effective_sim(const Options& o) {
  cra::sim::SimConfig c;
  c.params = effective_params(o);
  c.scheme = cra::sim::parse_scheme(o.scheme);
  c.mode = cra::sim::parse_mode(o.mode);
  c.n_sessions = o.n_sessions;
  c.warmup_sessions = o.warmup_sessions;
  c.initial_backlog = o.initial_backlog;
  c.batches = o.batches;
  c.user_cap = o.user_cap;
  c.seed = o.seed;
  c.validate();
  return c;
}

/// Buffers the result so nothing is written when a run fails.
class Output {
 public:
  Output(std::string path, const CLI::App& app) : path_(std::move(path)), app_(app) {}

  std::ostream& stream() { return buffer_; }

  void commit() {
    if (path_.empty()) {
      std::cout << buffer_.str() << std::flush;
      return;
    }
    write_file(path_, buffer_.str());
    write_file(path_ + ".config", app_.config_to_str(true, false));
  }

 private:
  static void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f << text;
    f.flush();
    if (!f) throw std::runtime_error("write failed for '" + path + "'");
  }

  std::string path_;
  const CLI::App& app_;
  std::ostringstream buffer_;
};

void put(std::ostream& os, const std::string& key, double v) {
  os << key << ',' << cra::cli::format_double(v) << '\n';
}

void run_analytic(const Options& o, Output& out) {
  const auto p = effective_params(o);
  const double T = p.transaction_time();
  const auto ss = cra::analytic::throughput_cra2(p);
  auto& os = out.stream();
  os << "quantity,value\n";
  put(os, "normalized_load", p.normalized_load());
  put(os, "arrival_rate", p.arrival_rate);
  put(os, "beta2", ss.beta2);
  put(os, "d_bar", ss.d_bar);
  put(os, "d_bar_lambert", cra::analytic::mean_detected_lambert(p));
  put(os, "d1_bar", ss.d1_bar);
  put(os, "mean_session_len", ss.mean_session_len);
  put(os, "d_bar_ratio", ss.d_bar / p.preamble_time());
  put(os, "beta1", p.arrival_rate * p.fixed_session_len());
  put(os, "eta2", ss.eta2);
  put(os, "eta2_normalized", T * ss.eta2);
  if (p.preamble_len >= 2) {
    const double e1 = cra::analytic::throughput_cra1(p);
    put(os, "eta1", e1);
    put(os, "eta1_normalized", T * e1);
  }
  const double ema = cra::analytic::throughput_maloha(p);
  put(os, "eta_ma", ema);
  put(os, "eta_ma_normalized", T * ema);
  put(os, "drift_limit", cra::analytic::drift_limit(p));
  if (cra::analytic::drift_limit(p) > 0.0)
    put(os, "drift_threshold", static_cast<double>(cra::analytic::drift_threshold(p)));
}

double analytic_normalized(const cra::sim::SimConfig& c) {
  const double T = c.params.transaction_time();
  switch (c.scheme) {
    case cra::sim::Scheme::Cra1: return T * cra::analytic::throughput_cra1(c.params);
    case cra::sim::Scheme::Cra2: return T * cra::analytic::throughput_cra2(c.params).eta2;
    case cra::sim::Scheme::MultichannelAloha: return T * cra::analytic::throughput_maloha(c.params);
  }
  return 0.0;
}

void run_simulate(const Options& o, Output& out) {
  const auto c = effective_sim(o);
  const auto e = cra::sim::estimate_throughput(c);
  const double T = c.params.transaction_time();
  auto& os = out.stream();
  os << "quantity,value\n";
  os << "scheme," << cra::sim::to_string(c.scheme) << '\n';
  os << "mode," << cra::sim::to_string(c.mode) << '\n';
  os << "seed," << c.seed << '\n';
  os << "sessions_run," << e.sessions_run << '\n';
  put(os, "mean_throughput", e.mean_throughput);
  put(os, "std_error", e.std_error);
  put(os, "normalized_throughput", T * e.mean_throughput);
  put(os, "normalized_std_error", T * e.std_error);
  put(os, "total_time", e.total_time);
  put(os, "mean_D", e.mean_D);
  put(os, "mean_D_std_error", e.mean_D_std_error);
  put(os, "mean_K", e.mean_K);
  put(os, "mean_K_std_error", e.mean_K_std_error);
  put(os, "mean_session_len", e.mean_session_len);
  if (c.mode == cra::sim::Mode::Drop && !(c.scheme == cra::sim::Scheme::Cra1 && c.params.preamble_len < 2))
    put(os, "analytic_normalized_throughput", analytic_normalized(c));
}

void run_sweep(const Options& o, Output& out) {
  cra::cli::SweepSpec spec = o.preset.empty() ? cra::cli::SweepSpec{} : cra::cli::preset(o.preset);
  if (o.preset.empty()) {
    spec.base = effective_sim(o);
    spec.variable = cra::cli::parse_sweep_var(o.var);
    spec.grid = o.grid;
  } else {
    spec.base.n_sessions = o.n_sessions;
    spec.base.warmup_sessions = o.warmup_sessions;
    spec.base.batches = o.batches;
  }
  spec.outputs.clear();
  for (const auto& m : o.metrics) spec.outputs.push_back(cra::cli::parse_metric(m));
  spec.replicate_seeds = o.seeds.empty() ? std::vector<std::uint64_t>{o.seed} : o.seeds;
  spec.simulate = !o.no_sim;
  cra::cli::write_results(out.stream(), cra::cli::run_sweep(spec, o.workers));
}

void run_signal(const Options& o, Output& out) {
  namespace sg = cra::signal;
  auto& os = out.stream();
  if (o.experiment == "ml") {
    const std::int64_t rows = o.pool_rows.value_or(8), cols = o.pool_cols.value_or(32);
    if (o.active < 1 || o.active >= cols)
      throw cra::ConfigError("active", "need 1 <= active < pool_cols");
    const auto pool = sg::gen_pool(rows, cols, o.seed);
    cra::Engine rng = cra::make_engine(o.seed, 1);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(cols));
    for (std::int64_t i = 0; i < cols; ++i) idx[static_cast<std::size_t>(i)] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::vector<std::int64_t> support(idx.begin(), idx.begin() + o.active);
    const std::int64_t unused = idx[static_cast<std::size_t>(o.active)];
    os << "test,snr,trials,events,empirical,std_error,predicted\n";
    for (double snr : o.snr) {
      const auto scene = sg::scene_from_snr(support, std::vector<double>(support.size(), snr), 1.0);
      const double predicted = cra::analytic::pairwise_error(snr);
      const auto md = sg::ml_md_trial(pool, scene, support.front(), rng, o.trials);
      const auto fa = sg::ml_fa_trial(pool, scene, unused, snr, rng, o.trials);
      for (auto [name, r] : {std::pair{"md", md}, std::pair{"fa", fa}}) {
        os << name << ',' << cra::cli::format_double(snr) << ',' << r.trials << ',' << r.events << ','
           << cra::cli::format_double(r.rate()) << ',' << cra::cli::format_double(r.std_error(predicted))
           << ',' << cra::cli::format_double(predicted) << '\n';
      }
    }
  } else if (o.experiment == "spark") {
    const std::int64_t rows = o.pool_rows.value_or(4), cols = o.pool_cols.value_or(8);
    os << "pool,seed,rows,cols,spark,rank,max_identifiable_smv,max_identifiable_mmv\n";
    for (std::int64_t i = 0; i < o.pools; ++i) {
      const std::uint64_t seed = o.seed + static_cast<std::uint64_t>(i);
      const auto pool = sg::gen_pool(rows, cols, seed);
      const auto spark = sg::spark_bruteforce(pool);
      const auto rank = sg::matrix_rank(pool.psi);
      auto max_k = [&](std::int64_t rank_s) {
        std::int64_t k = 0;
        while (sg::mmv_identifiable(k + 1, spark, rank_s)) ++k;
        return k;
      };
      os << i << ',' << seed << ',' << rows << ',' << cols << ',' << spark << ',' << rank << ','
         << max_k(1) << ',' << max_k(rows) << '\n';
    }
  } else {
    throw cra::ConfigError("experiment", "unknown experiment '" + o.experiment + "' (ml|spark)");
  }
}

void run_stability(const Options& o, Output& out) {
  auto c = effective_sim(o);
  if (c.mode != cra::sim::Mode::FastRetrial)
    throw cra::ConfigError("mode", "stability runs require --mode fast_retrial");
  if (o.replicas < 1) throw cra::ConfigError("replicas", "must be >= 1");
  auto& os = out.stream();
  os << "replica,seed,t,active,detected_singleton,successes,backlog\n";
  for (std::int64_t r = 0; r < o.replicas; ++r) {
    c.seed = o.seed + static_cast<std::uint64_t>(r);
    for (const auto& t : cra::sim::run_chain(c, o.horizon)) {
      os << r << ',' << c.seed << ',' << t.index + 1 << ',' << t.active << ',' << t.detected_singleton
         << ',' << t.successes << ',' << t.backlog << '\n';
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compressive random access: closed forms, Monte Carlo and signal-level checks"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Flat key=value configuration file");

  Options o;
  auto& p = o.params;
  app.add_option("-N,--preamble_len", p.preamble_len, "Preamble length N")->capture_default_str();
  app.add_option("-M,--payload_len", p.payload_len, "Payload length M (symbols)")->capture_default_str();
  app.add_option("-L,--pool_size", p.pool_size, "Number of preambles L")->capture_default_str();
  app.add_option("--feedback_total", p.feedback_total, "Total feedback duration tau")->capture_default_str();
  app.add_option("--arrival_rate", p.arrival_rate, "Arrival rate lambda (users/symbol)")->capture_default_str();
  app.add_option("--normalized_load", o.normalized_load, "lambda_T = lambda (N + M); overrides arrival_rate");
  app.add_option("--p_md", p.p_md, "Missed-detection probability")->capture_default_str();
  app.add_option("--p_fa", p.p_fa, "False-alarm probability")->capture_default_str();
  app.add_option("--scheme", o.scheme, "cra1|cra2|maloha")->capture_default_str();
  app.add_option("--mode", o.mode, "drop|fast_retrial")->capture_default_str();
  app.add_option("--n_sessions", o.n_sessions, "Measured sessions")->capture_default_str();
  app.add_option("--warmup_sessions", o.warmup_sessions, "Discarded sessions")->capture_default_str();
  app.add_option("--initial_backlog", o.initial_backlog, "Backlog before session 1")->capture_default_str();
  app.add_option("--batches", o.batches, "Batches for batch-means errors")->capture_default_str();
  app.add_option("--user_cap", o.user_cap, "Decodable-user cap for cra1/maloha (negative: none)");
  app.add_option("--seed", o.seed, "Random seed")->capture_default_str();
  app.add_option("--workers", o.workers, "Worker threads")->envname("CRA_WORKERS")->capture_default_str();
  app.add_option("-o,--out", o.out, "Output CSV path (default stdout)");

  auto* analytic = app.add_subcommand("analytic", "Closed-form values at one operating point");
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo throughput for one configuration");

  auto* sweep = app.add_subcommand("sweep", "Parameter sweep, analytic and simulated");
  sweep->add_option("--preset", o.preset, "fig3|fig4|fig5|fig6");
  sweep->add_option("--var", o.var, "lambda_T|L|M|p_err")->capture_default_str();
  sweep->add_option("--grid", o.grid, "Grid values (strictly increasing)");
  sweep->add_option("--metrics", o.metrics, "eta1 eta2 eta_ma d_bar_ratio")->capture_default_str();
  sweep->add_option("--seeds", o.seeds, "Replicate seeds (default: --seed)");
  sweep->add_flag("--no_sim", o.no_sim, "Analytic rows only");

  auto* signal = app.add_subcommand("signal", "Signal-level ML and spark experiments");
  signal->add_option("--experiment", o.experiment, "ml|spark")->capture_default_str();
  signal->add_option("--pool_rows", o.pool_rows, "Preamble length of the test pool (8 ml, 4 spark)");
  signal->add_option("--pool_cols", o.pool_cols, "Number of preambles in the test pool (32 ml, 8 spark)");
  signal->add_option("--active", o.active, "Active users K (ml)")->capture_default_str();
  signal->add_option("--snr", o.snr, "Linear SNR values (ml)")->capture_default_str();
  signal->add_option("--trials", o.trials, "Noise draws per SNR (ml)")->capture_default_str();
  signal->add_option("--pools", o.pools, "Random pools (spark)")->capture_default_str();

  auto* stability = app.add_subcommand("stability", "Fast-retrial backlog trajectories");
  stability->add_option("--horizon", o.horizon, "Sessions per replica")->capture_default_str();
  stability->add_option("--replicas", o.replicas, "Replicas with seeds seed, seed+1, ...")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    Output out(o.out, app);
    if (analytic->parsed()) run_analytic(o, out);
    if (simulate->parsed()) run_simulate(o, out);
    if (sweep->parsed()) run_sweep(o, out);
    if (signal->parsed()) run_signal(o, out);
    if (stability->parsed()) run_stability(o, out);
    out.commit();
  } catch (const cra::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const cra::DomainError& e) {
    std::cerr << "domain error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
