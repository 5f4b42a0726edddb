#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "comfed/grid.hpp"
#include "comfed/report.hpp"

using namespace comfed;

namespace {

std::filesystem::path tmp(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("comfed_report_" + name);
}

GridSpec smoke_grid(std::vector<ClientOpt> cs, std::vector<ServerOpt> ss) {
  GridSpec g;
  g.base.num_clients = 8;
  g.base.sample_ratio = 0.5;
  g.base.rounds = 5;
  g.base.data.num_classes = 4;
  g.base.data.dim = 5;
  g.base.data.samples_per_class = 30;
  g.base.client.batch_size = 8;
  g.opt_c_set = std::move(cs);
  g.opt_s_set = std::move(ss);
  g.seeds = {1};
  g.checkpoints = {3, 5};
  return g;
}

}  // namespace

TEST(Report, MetricsRoundTrip) {
  std::vector<MetricsRow> rows{
      {1, "FedAvg", "sgd", "sgd", 0.5, 0.25, 0.875, 0.875, 0.0, 1024, "ok"},
      {2, "FedAvg", "sgd", "sgd", 0.1 + 0.2, 1.0 / 3.0, 0.9, 0.9, 12.5, 1024, "ok"},
      {3, "FedAvg", "sgd", "sgd", NAN, NAN, NAN, 0.9, 0.0, 0, "diverged"},
  };
  auto p = tmp("metrics.csv");
  emit_report(rows, p);
  EXPECT_EQ(read_metrics_csv(p), rows);
  auto text = read_text_file(p);
  EXPECT_NE(text.find("3,FedAvg,sgd,sgd,nan,nan,nan,0.9,0,0,diverged\n"), std::string::npos) << text;

  emit_report(rows, p);  // overwrite is idempotent
  EXPECT_EQ(read_text_file(p), text);

  emit_report({}, p);
  EXPECT_EQ(read_text_file(p), std::string(kMetricsHeader) + "\n");
  EXPECT_TRUE(read_metrics_csv(p).empty());
}

TEST(Report, EmitToMissingDirectoryFails) {
  EXPECT_THROW(emit_report({}, "/proc/comfed_cannot_write/metrics.csv"), IoError);
}

TEST(Report, ModelPersistence) {
  ModelSpec spec{ModelKind::mlp1, 2, 2, 3};
  ParamVector p(spec.param_count(), 0.0);
  p[0] = 1.5;
  p[1] = -0.25;
  p[2] = 1e-300;
  p[16] = 0.1 + 0.2;
  auto path = tmp("model.bin");
  save_model(p, spec, path);
  EXPECT_EQ(load_params(path), p);
  EXPECT_EQ(std::filesystem::file_size(path), 8u + 17u * 8u);
  EXPECT_THROW(save_model(ParamVector(3, 0.0), spec, path), std::invalid_argument);
  auto side = read_text_file(tmp("model.txt"));
  EXPECT_NE(side.find("kind = mlp1"), std::string::npos);
  EXPECT_NE(side.find("layout = W1[hidden_dim x input_dim]"), std::string::npos);
}

TEST(Report, SmokeGridShapeAndArgmax) {
  auto g = smoke_grid({ClientOpt::sgd, ClientOpt::prox}, {ServerOpt::sgd, ServerOpt::adam});
  auto out = run_grid(g, RunOptions{2});
  const auto& rep = out.report;
  ASSERT_EQ(rep.rows.size(), 4u);
  EXPECT_EQ(rep.per_seed.size(), 4u);
  EXPECT_FALSE(rep.any_diverged());
  for (std::size_t j = 0; j < rep.checkpoints.size(); ++j) {
    double best = -1.0;
    for (const auto& r : rep.rows) {
      ASSERT_TRUE(r.values[j].has_value());
      EXPECT_TRUE(std::isfinite(*r.values[j]));
      best = std::max(best, *r.values[j]);
    }
    for (const auto& r : rep.rows) {
      const bool marked = std::count(r.best_at.begin(), r.best_at.end(), rep.checkpoints[j]) > 0;
      EXPECT_EQ(marked, *r.values[j] == best);
    }
  }
  EXPECT_EQ(rep.rows[0].algorithm, "FedAvg");
  EXPECT_EQ(rep.rows[3].algorithm, "ProxAdam");
  EXPECT_EQ(rep.rows[3].combination, "ProxAdam");

  auto p = tmp("grid.csv");
  write_text_file(p, grid_csv(rep));
  auto back = read_grid_csv(p);
  EXPECT_EQ(back.checkpoints, rep.checkpoints);
  EXPECT_EQ(back.rows, rep.rows);
}

TEST(Report, GridMeansOverSeedsAndMarksDivergence) {
  auto g = smoke_grid({ClientOpt::sgd}, {ServerOpt::sgd, ServerOpt::adam});
  g.seeds = {1, 2};
  g.base.client.lr = 1e300;
  g.base.client.momentum = 0.0;
  auto rep = run_grid(g).report;
  ASSERT_EQ(rep.rows.size(), 2u);
  EXPECT_TRUE(rep.any_diverged());
  for (const auto& r : rep.rows) {
    EXPECT_FALSE(r.values[0].has_value());
    EXPECT_TRUE(r.best_at.empty());
  }
  EXPECT_NE(grid_csv(rep).find("diverged"), std::string::npos);

  auto ok = smoke_grid({ClientOpt::nova}, {ServerOpt::yogi});
  ok.seeds = {1, 2};
  auto out = run_grid(ok);
  double mean = 0.0;
  for (const auto& cell : out.cells) mean += *best_at_checkpoint(cell.result, 5);
  EXPECT_DOUBLE_EQ(*out.report.rows[0].values[1], mean / 2.0);
}

TEST(Report, FullGridOnBenchmarkShape) {
  GridSpec g;
  g.base.num_clients = 20;
  g.base.sample_ratio = 0.5;
  g.base.rounds = 100;
  g.opt_c_set.assign(kAllClientOpts.begin(), kAllClientOpts.end());
  g.opt_s_set.assign(kAllServerOpts.begin(), kAllServerOpts.end());
  g.seeds = {1};
  g.checkpoints = {50, 100};
  auto rep = run_grid(g, RunOptions{4}).report;
  ASSERT_EQ(rep.rows.size(), 16u);
  for (const auto& r : rep.rows) EXPECT_EQ(r.values.size(), 2u);
  auto text = grid_csv(rep);
  EXPECT_EQ(text.substr(0, text.find('\n')), "algorithm,combination,opt_c,opt_s,acc@50,acc@100,best_at");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 17);
}
