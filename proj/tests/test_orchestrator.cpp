#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "comfed/orchestrator.hpp"
#include "comfed/report.hpp"

using namespace comfed;

namespace {

ExperimentConfig smoke(ClientOpt c, ServerOpt s) {
  ExperimentConfig cfg;
  cfg.opt_c = c;
  cfg.opt_s = s;
  cfg.num_clients = 8;
  cfg.sample_ratio = 0.5;
  cfg.rounds = 5;
  cfg.eval_every = 1;
  cfg.data.num_classes = 4;
  cfg.data.dim = 5;
  cfg.data.samples_per_class = 30;
  cfg.data.alpha = 0.5;
  cfg.client.batch_size = 8;
  return cfg;
}

// Every client holds its own copy of the same block of samples.
PreparedData identical_shards(std::size_t clients, const ExperimentConfig& cfg) {
  auto block = gen_synthetic(3, 4, 10, 1.0, 17);
  PreparedData d;
  d.test = block;
  std::vector<std::vector<std::size_t>> assignment(clients);
  for (std::size_t c = 0; c < clients; ++c) {
    d.train.features.insert(d.train.features.end(), block.features.begin(), block.features.end());
    d.train.labels.insert(d.train.labels.end(), block.labels.begin(), block.labels.end());
    for (std::size_t i = 0; i < block.size(); ++i) assignment[c].push_back(c * block.size() + i);
  }
  d.train.dim = block.dim;
  d.train.num_classes = block.num_classes;
  d.partition = make_partition(std::move(assignment));
  d.model = resolve_model(cfg.model, d.train);
  return d;
}

}  // namespace

TEST(Orchestrator, SampleClients) {
  auto all = sample_clients(7, 1.0, 3, 1);
  EXPECT_EQ(all, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6}));
  auto ten = sample_clients(100, 0.1, 5, 1);
  EXPECT_EQ(ten.size(), 10u);
  EXPECT_TRUE(std::is_sorted(ten.begin(), ten.end()));
  EXPECT_EQ(std::set<std::size_t>(ten.begin(), ten.end()).size(), 10u);
  EXPECT_EQ(ten, sample_clients(100, 0.1, 5, 1));
  EXPECT_NE(ten, sample_clients(100, 0.1, 6, 1));
  EXPECT_EQ(clients_per_round(100, 0.29), 29u);
  EXPECT_EQ(clients_per_round(10, 0.01), 1u);
}

TEST(Orchestrator, ZeroRoundsReturnsInitialization) {
  auto cfg = smoke(ClientOpt::sgd, ServerOpt::sgd);
  cfg.rounds = 0;
  auto data = prepare_data(cfg);
  auto res = run_experiment(cfg, data);
  EXPECT_TRUE(res.metrics.empty());
  EXPECT_EQ(res.final_w, init_params(data.model, cfg.seed));
}

TEST(Orchestrator, AllSixteenCombinationsRun) {
  for (auto c : kAllClientOpts)
    for (auto s : kAllServerOpts) {
      auto res = run_experiment(smoke(c, s));
      ASSERT_EQ(res.status, RunStatus::ok) << res.algorithm << ": " << res.error;
      ASSERT_EQ(res.metrics.size(), 5u);
      for (const auto& m : res.metrics) {
        EXPECT_TRUE(std::isfinite(m.test_acc) && std::isfinite(m.train_loss) && std::isfinite(m.test_loss));
        EXPECT_EQ(m.selected.size(), 4u);
      }
      EXPECT_TRUE(res.final_w.all_finite());
    }
}

TEST(Orchestrator, BestAccuracyIsMonotone) {
  auto cfg = smoke(ClientOpt::nova, ServerOpt::adam);
  cfg.rounds = 30;
  auto res = run_experiment(cfg);
  for (std::size_t i = 1; i < res.metrics.size(); ++i)
    EXPECT_GE(res.metrics[i].best_acc, res.metrics[i - 1].best_acc);
  EXPECT_EQ(res.best_acc, res.metrics.back().best_acc);
}

TEST(Orchestrator, CheckpointsFollowEvalEvery) {
  auto cfg = smoke(ClientOpt::sgd, ServerOpt::sgd);
  cfg.rounds = 12;
  cfg.eval_every = 5;
  auto res = run_experiment(cfg);
  ASSERT_EQ(res.metrics.size(), 3u);
  EXPECT_EQ(res.metrics[0].round, 5u);
  EXPECT_EQ(res.metrics[1].round, 10u);
  EXPECT_EQ(res.metrics[2].round, 12u);
}

TEST(Orchestrator, ProxZeroMuMatchesSgdStreams) {
  for (auto s : kAllServerOpts) {
    auto a = smoke(ClientOpt::sgd, s);
    auto b = smoke(ClientOpt::prox, s);
    b.client.prox_mu = 0.0;
    auto ra = run_experiment(a), rb = run_experiment(b);
    EXPECT_EQ(ra.final_w, rb.final_w);
    ASSERT_EQ(ra.metrics.size(), rb.metrics.size());
    for (std::size_t i = 0; i < ra.metrics.size(); ++i) {
      EXPECT_EQ(ra.metrics[i].test_acc, rb.metrics[i].test_acc);
      EXPECT_EQ(ra.metrics[i].train_loss, rb.metrics[i].train_loss);
    }
  }
}

TEST(Orchestrator, ScafWithIdenticalShardsTracksSgd) {
  for (auto s : {ServerOpt::sgd, ServerOpt::adam}) {
    auto base = smoke(ClientOpt::sgd, s);
    base.num_clients = 4;
    base.sample_ratio = 1.0;
    base.rounds = 10;
    base.client.batch_size = 1000;
    auto data = identical_shards(4, base);
    auto scaf = base;
    scaf.opt_c = ClientOpt::scaf;
    auto st_sgd = initial_state(base, data);
    auto st_scaf = initial_state(scaf, data);
    double best = NAN;
    for (std::uint64_t t = 1; t <= base.rounds; ++t) {
      run_round(st_sgd, data, base, t, best);
      run_round(st_scaf, data, scaf, t, best);
      EXPECT_LT(max_abs_diff(st_sgd.server.w, st_scaf.server.w), 1e-10) << "round " << t;
    }
  }
}

TEST(Orchestrator, ParallelClientsAreBitIdentical) {
  for (auto c : kAllClientOpts) {
    auto cfg = smoke(c, ServerOpt::yogi);
    cfg.rounds = 8;
    auto data = prepare_data(cfg);
    auto serial = run_experiment(cfg, data, RunOptions{1});
    auto parallel = run_experiment(cfg, data, RunOptions{4});
    EXPECT_EQ(serial.final_w, parallel.final_w);
    EXPECT_EQ(metrics_csv(metrics_rows(cfg, serial)), metrics_csv(metrics_rows(cfg, parallel)));
  }
}

TEST(Orchestrator, DivergenceEmitsSentinel) {
  auto cfg = smoke(ClientOpt::sgd, ServerOpt::sgd);
  cfg.client.lr = 1e300;
  cfg.client.momentum = 0.0;
  auto res = run_experiment(cfg);
  EXPECT_EQ(res.status, RunStatus::diverged);
  ASSERT_EQ(res.metrics.size(), 1u);
  EXPECT_EQ(res.metrics[0].status, RunStatus::diverged);
  EXPECT_EQ(res.metrics[0].round, 1u);
  EXPECT_FALSE(res.error.empty());
}

TEST(Orchestrator, ServerDivergenceKeepsLastGoodModel) {
  auto cfg = smoke(ClientOpt::sgd, ServerOpt::adam);
  cfg.server.literal_eq1 = true;  // negative second moment -> NaN step
  const auto data = prepare_data(cfg);
  auto res = run_experiment(cfg, data);
  EXPECT_EQ(res.status, RunStatus::diverged);
  EXPECT_NE(res.error.find("at the server"), std::string::npos) << res.error;
  EXPECT_EQ(res.final_w, initial_state(cfg, data).server.w);
  EXPECT_EQ(res.best_w.size(), data.model.param_count());
}

TEST(Orchestrator, PayloadCountsScaffoldTwice) {
  auto sgd = smoke(ClientOpt::sgd, ServerOpt::sgd);
  auto scaf = smoke(ClientOpt::scaf, ServerOpt::sgd);
  EXPECT_EQ(round_payload_bytes(scaf, 100, 3), 2 * round_payload_bytes(sgd, 100, 3));
}
