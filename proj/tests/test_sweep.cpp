#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cra/sweep.hpp"

using namespace cra;
using namespace cra::cli;

namespace {

SweepSpec small_fig3() {
  auto s = preset("fig3");
  s.base.n_sessions = 2000;
  s.base.warmup_sessions = 100;
  return s;
}

std::string to_csv(const ResultTable& t) {
  std::ostringstream os;
  write_results(os, t);
  return os.str();
}

}  // namespace

TEST(Presets, Grids) {
  const auto f3 = preset("fig3");
  ASSERT_EQ(f3.grid.size(), 20u);
  EXPECT_DOUBLE_EQ(f3.grid.front(), 0.1);
  EXPECT_DOUBLE_EQ(f3.grid.back(), 2.0);
  const auto f4 = preset("fig4");
  EXPECT_EQ(f4.grid.front(), 50.0);
  EXPECT_EQ(f4.grid.back(), 1000.0);
  const auto f5 = preset("fig5");
  EXPECT_DOUBLE_EQ(f5.base.params.arrival_rate, 1.0 / 200.0);
  EXPECT_EQ(f5.grid.back(), 640.0);
  EXPECT_DOUBLE_EQ(preset("fig6").grid.back(), 0.1);
  for (auto name : {"fig3", "fig4", "fig5", "fig6"}) EXPECT_NO_THROW(preset(name).validate());
  EXPECT_THROW(preset("fig7"), ConfigError);
}

TEST(Presets, Validation) {
  auto s = preset("fig3");
  s.grid.clear();
  try {
    s.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "grid");
  }
  s.grid = {0.5, 0.4};
  EXPECT_THROW(s.validate(), ConfigError);
  s = preset("fig4");
  s.grid = {50.5};
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_THROW(parse_metric("eta3"), ConfigError);
  EXPECT_EQ(parse_sweep_var("p_err"), SweepVar::PErr);
}

TEST(Sweep, RowCountAndLayout) {
  const auto t = run_sweep(small_fig3(), 2);
  ASSERT_EQ(t.size(), 160u);
  EXPECT_EQ(t[0].source, "analytic");
  EXPECT_EQ(t[0].sessions, 0);
  EXPECT_EQ(t[1].source, "sim");
  EXPECT_EQ(t[1].sessions, 2000);
  EXPECT_EQ(t[1].metric, t[0].metric);
  auto analytic_only = small_fig3();
  analytic_only.simulate = false;
  EXPECT_EQ(run_sweep(analytic_only, 1).size(), 80u);
}

TEST(Sweep, IndependentOfWorkerCount) {
  auto s = small_fig3();
  s.grid = {0.4, 1.2};
  s.replicate_seeds = {3, 4};
  EXPECT_EQ(to_csv(run_sweep(s, 1)), to_csv(run_sweep(s, 4)));
}

TEST(Csv, RoundTripIsExact) {
  auto s = small_fig3();
  s.grid = {0.3, 1.7};
  const auto t = run_sweep(s, 2);
  std::istringstream is(to_csv(t));
  EXPECT_EQ(parse_results(is), t);
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
}

TEST(Csv, EmitAndErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "cra_sweep_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "one.csv").string();
  emit_results({{"lambda_T", 1.0, "eta2", "analytic", 0.93, 0.0, 0, 0}}, path);
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  EXPECT_EQ(buf.str(), std::string(kCsvHeader) + "\nlambda_T,1,eta2,analytic,0.93000000000000005,0,0,0\n");
  try {
    emit_results({}, "/nonexistent_dir/x.csv");
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent_dir/x.csv"), std::string::npos);
  }
  std::istringstream bad("nope\n");
  EXPECT_THROW(parse_results(bad), std::runtime_error);
  std::filesystem::remove_all(dir);
}
