#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "unmtlab/common.hpp"
#include "unmtlab/harness.hpp"

using namespace unmtlab;

namespace {

// Small enough that a full experiment runs in seconds.
ExperimentConfig tiny_cfg() {
  ExperimentConfig cfg;
  cfg.world.content_vocab_size = 12;
  cfg.world.anchor_vocab_size = 6;
  cfg.world.seed = 1;
  cfg.data.n_x = 60;
  cfg.data.n_y = 40;
  cfg.data.n_test = 30;
  cfg.data.monitor_sentences = 20;
  cfg.model.embed_dim = 16;
  cfg.model.hidden_dim = 24;
  cfg.unmt.warmstart_steps = 3;
  cfg.unmt.bt_steps = 3;
  cfg.unmt.batch_size_tokens = 150;
  cfg.unmt.eval_every = 1000;
  cfg.unmt.optim.lr = 0.01;
  cfg.st.epsilon = 0.5;
  cfg.st.max_epochs = 1;
  cfg.st.steps_per_epoch = 2;
  cfg.seeds = {1, 2};
  cfg.out_dir = "harness_test_out";
  return cfg;
}

size_t count_lines(const std::string& text) {
  size_t n = 0;
  for (char c : text) {
    if (c == '\n') ++n;
  }
  return n;
}

}  // namespace

TEST_CASE("experiment config round-trips through JSON") {
  ExperimentConfig cfg = tiny_cfg();
  cfg.st.warm_start = WarmStart::Reinit;
  cfg.st.opt_reset = OptReset::ResetEachEpoch;
  cfg.strategies = {"baseline", "st_pt"};
  cfg.unmt.noise.p_blank = 0.27;

  nlohmann::json j = cfg.to_json();
  ExperimentConfig back = ExperimentConfig::from_json(j);
  CHECK(back.to_json().dump() == j.dump());
  CHECK(back.st.warm_start == WarmStart::Reinit);
  CHECK(back.st.opt_reset == OptReset::ResetEachEpoch);
  CHECK(back.unmt.noise.p_blank == doctest::Approx(0.27));
  CHECK(back.data.n_x == 60);
  CHECK(back.seeds == std::vector<uint64_t>{1, 2});

  // partial JSON keeps defaults for everything absent
  ExperimentConfig partial = ExperimentConfig::from_json(nlohmann::json{{"data", {{"n_y", 7}}}});
  CHECK(partial.data.n_y == 7);
  CHECK(partial.data.n_x == ExperimentConfig{}.data.n_x);

  nlohmann::json bad_warm = cfg.to_json();
  bad_warm["selftrain"]["warm_start"] = "sometimes";
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad_warm), ValidationError);
  nlohmann::json bad_reset = cfg.to_json();
  bad_reset["selftrain"]["opt_reset"] = "maybe";
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad_reset), ValidationError);
}

TEST_CASE("experiment config validation catches bad setups") {
  ExperimentConfig cfg = tiny_cfg();
  cfg.validate();

  ExperimentConfig bad = cfg;
  bad.strategies = {"baseline", "match_the_vibes"};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.strategies.clear();
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.seeds = {3, 3};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.seeds.clear();
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.data.n_test = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.st.epsilon = 1.5;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("output paths resolve against the environment root") {
  CHECK(resolve_out_path("/abs/path") == "/abs/path");
  unsetenv("UNMTLAB_OUT");
  CHECK(resolve_out_path("runs/exp") == "runs/exp");
  setenv("UNMTLAB_OUT", "/tmp/unmtlab_root", 1);
  CHECK(resolve_out_path("runs/exp") == "/tmp/unmtlab_root/runs/exp");
  CHECK(resolve_out_path("/abs/path") == "/abs/path");
  unsetenv("UNMTLAB_OUT");
  CHECK_THROWS_AS(resolve_out_path(""), ValidationError);
}

TEST_CASE("arm configs give every strategy its own seed stream") {
  ExperimentConfig cfg = tiny_cfg();
  SelfTrainConfig ut = arm_config(cfg, 5, "st_ut");
  SelfTrainConfig pt = arm_config(cfg, 5, "st_pt");
  SelfTrainConfig ut_again = arm_config(cfg, 5, "st_ut");
  SelfTrainConfig ut_other_seed = arm_config(cfg, 6, "st_ut");

  CHECK(ut.unmt.seed != pt.unmt.seed);
  CHECK(ut.unmt.seed == ut_again.unmt.seed);
  CHECK(ut.unmt.seed != ut_other_seed.unmt.seed);
  CHECK(ut.epsilon == doctest::Approx(cfg.st.epsilon));
  CHECK(ut.max_epochs == cfg.st.max_epochs);
  CHECK(ut.steps_per_epoch == cfg.st.steps_per_epoch);
  CHECK(ut.unmt.batch_size_tokens == cfg.unmt.batch_size_tokens);
}

TEST_CASE("a seed workspace is a deterministic function of config and seed") {
  ExperimentConfig cfg = tiny_cfg();
  SeedWorkspace ws = build_seed_workspace(cfg, 1);
  CHECK(ws.seed == 1);
  CHECK(ws.x.lang == LangId::L1);
  CHECK(ws.y.lang == LangId::L2);
  CHECK(ws.x.sentences.size() == cfg.data.n_x);
  CHECK(ws.y.sentences.size() == cfg.data.n_y);
  CHECK(ws.full_eval.src_l1.size() == cfg.data.n_test);
  CHECK(ws.monitor.src_l1.size() == cfg.data.monitor_sentences);
  CHECK(ws.m0_hash == ws.m0.content_hash());
  CHECK(ws.m0_history.rows.size() ==
        static_cast<size_t>(cfg.unmt.warmstart_steps + cfg.unmt.bt_steps));

  SeedWorkspace again = build_seed_workspace(cfg, 1);
  CHECK(again.m0_hash == ws.m0_hash);
  SeedWorkspace other = build_seed_workspace(cfg, 2);
  CHECK(other.m0_hash != ws.m0_hash);
}

TEST_CASE("an experiment runs every strategy for every seed from a shared start") {
  ExperimentConfig cfg = tiny_cfg();
  ExperimentResult res = run_experiment(cfg);

  REQUIRE(res.cells.size() == 8);  // 4 strategies x 2 seeds
  CHECK(res.all_ok);
  std::map<uint64_t, std::set<uint64_t>> hashes_by_seed;
  std::map<uint64_t, std::set<std::string>> strategies_by_seed;
  for (const auto& c : res.cells) {
    CHECK(c.status == "ok");
    CHECK(c.epochs.size() == static_cast<size_t>(cfg.st.max_epochs) + 1);
    CHECK(c.wall_seconds >= 0.0);
    hashes_by_seed[c.seed].insert(c.m0_hash);
    strategies_by_seed[c.seed].insert(c.strategy);
  }
  REQUIRE(hashes_by_seed.size() == 2);
  for (const auto& [seed, hashes] : hashes_by_seed) {
    // branch fairness: all four arms continue the same starting model
    CHECK(hashes.size() == 1);
  }
  for (const auto& [seed, names] : strategies_by_seed) {
    CHECK(names == std::set<std::string>{"baseline", "baseline_extra_steps", "st_ut", "st_pt"});
  }

  // the baseline cell never trains further: every epoch entry repeats the
  // starting model's score
  for (const auto& c : res.cells) {
    if (c.strategy != "baseline") continue;
    for (const auto& e : c.epochs) {
      CHECK(e.bleu_xy == doctest::Approx(c.epochs[0].bleu_xy));
      CHECK(e.bleu_yx == doctest::Approx(c.epochs[0].bleu_yx));
    }
  }

  // the built-in significance tests compare st_pt against the extended
  // baseline in both directions
  REQUIRE(res.significance.size() == 2);
  CHECK(res.significance[0].system_a.find("st_pt") != std::string::npos);
  CHECK(res.significance[0].system_b.find("baseline_extra_steps") != std::string::npos);
  CHECK(res.significance[0].system_a.find("l1_to_l2") != std::string::npos);
  CHECK(res.significance[1].system_a.find("l2_to_l1") != std::string::npos);

  // reruns reproduce scores byte for byte in the CSV report
  ExperimentResult rerun = run_experiment(cfg);
  CHECK(report_csv(rerun) == report_csv(res));
}

TEST_CASE("summary statistics follow the hand-computed values") {
  ExperimentResult res;
  res.cfg = tiny_cfg();
  res.cfg.strategies = {"baseline"};
  res.cfg.seeds = {1, 2};
  CellResult a;
  a.strategy = "baseline";
  a.seed = 1;
  a.bleu_xy = 10.0;
  a.bleu_yx = 20.0;
  CellResult b = a;
  b.seed = 2;
  b.bleu_xy = 14.0;
  b.bleu_yx = 26.0;
  res.cells = {a, b};

  EvalScores mean = mean_scores(res, "baseline");
  CHECK(mean.bleu_xy == doctest::Approx(12.0));
  CHECK(mean.bleu_yx == doctest::Approx(23.0));

  StrategyStats st = strategy_stats(res, "baseline");
  CHECK(st.n == 2);
  CHECK(st.mean_xy == doctest::Approx(12.0));
  // sample standard deviation over {10, 14}
  CHECK(st.std_xy == doctest::Approx(std::sqrt(8.0)));
  CHECK(st.std_yx == doctest::Approx(std::sqrt(18.0)));

  CHECK_THROWS_AS(mean_scores(res, "st_pt"), ValidationError);
  res.cells[1].status = "error: boom";
  CHECK_THROWS_AS(mean_scores(res, "baseline"), ValidationError);
  CHECK_THROWS_AS(strategy_stats(res, "baseline"), ValidationError);
}

TEST_CASE("reports carry errored cells without scores") {
  ExperimentResult res;
  res.cfg = tiny_cfg();
  res.cfg.strategies = {"baseline"};
  res.cfg.seeds = {1};
  res.cfg.st.max_epochs = 2;
  CellResult broken;
  broken.strategy = "baseline";
  broken.seed = 1;
  broken.status = "error: exploded";
  res.cells = {broken};
  res.all_ok = false;

  std::string csv = report_csv(res);
  std::istringstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header == "strategy,seed,direction,epoch,bleu,status");
  size_t rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++rows;
    CHECK(line.find(",error") != std::string::npos);
    CHECK(line.find(",,") != std::string::npos);  // empty score cell
  }
  CHECK(rows == 6);  // 2 directions x epochs 0..2

  nlohmann::json j = report_json(res);
  CHECK(j["all_ok"] == false);
  REQUIRE(j["cells"].size() == 1);
  CHECK(j["cells"][0]["status"].get<std::string>().find("error") == 0);
  CHECK(j["summary"].empty());  // no aggregate stats over broken runs
}

TEST_CASE("the full report lands on disk as CSV and JSON") {
  ExperimentConfig cfg = tiny_cfg();
  cfg.strategies = {"baseline", "st_pt"};
  cfg.seeds = {1};
  ExperimentResult res = run_experiment(cfg);
  std::string dir = "harness_report_test";
  write_report(res, dir);

  std::ifstream fc(dir + "/report.csv");
  REQUIRE(fc.good());
  std::string header;
  std::getline(fc, header);
  CHECK(header == "strategy,seed,direction,epoch,bleu,status");

  std::ifstream fj(dir + "/report.json");
  REQUIRE(fj.good());
  nlohmann::json j = nlohmann::json::parse(fj);
  CHECK(j["all_ok"] == true);
  CHECK(j["cells"].size() == 2);
  CHECK(j["summary"].size() == 2);
  ExperimentConfig round = ExperimentConfig::from_json(j["config"]);
  CHECK(round.to_json().dump() == cfg.to_json().dump());

  std::filesystem::remove_all(dir);
}

TEST_CASE("the data-size grid scores the unsupervised baseline per cell") {
  ExperimentConfig cfg = tiny_cfg();
  cfg.seeds = {1};
  std::vector<std::pair<size_t, size_t>> cells{{50, 50}, {50, 20}};
  GridResult grid = run_datasize_grid(cfg, cells);
  CHECK(grid.all_ok);
  REQUIRE(grid.rows.size() == 2);
  CHECK(grid.rows[0].n_x == 50);
  CHECK(grid.rows[0].n_y == 50);
  CHECK(grid.rows[1].n_y == 20);
  for (const auto& r : grid.rows) {
    CHECK(r.status == "ok");
    CHECK(std::isfinite(r.bleu_xy));
    CHECK(std::isfinite(r.bleu_yx));
  }

  std::string csv = grid_csv(grid);
  CHECK(csv.rfind("n_x,n_y,seed,direction,bleu,status\n", 0) == 0);
  CHECK(count_lines(csv) == 1 + grid.rows.size() * 2);

  CHECK_THROWS_AS(run_datasize_grid(cfg, {}), ValidationError);
}

TEST_CASE("the ratio sweep pairs every ratio with a budget-matched control") {
  ExperimentConfig cfg = tiny_cfg();
  cfg.seeds = {1};
  RatioResult res = sweep_ratio(cfg, {0.5, 1.0});
  CHECK(res.all_ok);
  // one baseline row plus (st_ut, st_pt) per ratio
  REQUIRE(res.rows.size() == 5);
  CHECK(res.rows[0].strategy == "baseline_extra_steps");
  CHECK(res.rows[0].ratio == 0.0);
  std::multiset<std::string> names;
  for (const auto& r : res.rows) names.insert(r.strategy);
  CHECK(names.count("st_ut") == 2);
  CHECK(names.count("st_pt") == 2);

  std::string csv = ratio_csv(res);
  CHECK(csv.rfind("ratio,strategy,seed,direction,bleu,status\n", 0) == 0);
  CHECK(count_lines(csv) == 1 + res.rows.size() * 2);

  CHECK_THROWS_AS(sweep_ratio(cfg, {}), ValidationError);
  CHECK_THROWS_AS(sweep_ratio(cfg, {0.5, 1.5}), ValidationError);
}

TEST_CASE("the epoch sweep tracks every strategy from the shared start") {
  ExperimentConfig cfg = tiny_cfg();
  cfg.seeds = {1};
  EpochResult res = sweep_epochs(cfg, 2);
  CHECK(res.all_ok);
  CHECK(res.max_epochs == 2);
  REQUIRE(res.rows.size() == 9);  // 3 strategies x epochs 0..2

  std::map<std::string, std::vector<EpochRow>> by_strategy;
  for (const auto& r : res.rows) by_strategy[r.strategy].push_back(r);
  REQUIRE(by_strategy.size() == 3);
  for (const auto& [name, rows] : by_strategy) {
    REQUIRE(rows.size() == 3);
    for (int e = 0; e < 3; ++e) CHECK(rows[e].epoch == e);
  }
  // epoch 0 scores the same shared starting model in every arm
  double x0 = by_strategy["st_ut"][0].bleu_xy;
  CHECK(by_strategy["st_pt"][0].bleu_xy == doctest::Approx(x0));
  CHECK(by_strategy["baseline_extra_steps"][0].bleu_xy == doctest::Approx(x0));

  std::string csv = epoch_csv(res);
  CHECK(csv.rfind("strategy,seed,epoch,direction,bleu,status\n", 0) == 0);
  CHECK(count_lines(csv) == 1 + res.rows.size() * 2);

  CHECK_THROWS_AS(sweep_epochs(cfg, 0), ValidationError);
}

TEST_CASE("default sweep menus match the published design") {
  auto cells = default_grid_cells();
  REQUIRE(cells.size() == 5);
  CHECK(cells[0] == std::pair<size_t, size_t>{20000, 20000});
  bool has_unbalanced = false, has_small = false;
  for (const auto& [nx, ny] : cells) {
    if (nx == 20000 && ny == 1000) has_unbalanced = true;
    if (nx == 1000 && ny == 1000) has_small = true;
  }
  CHECK(has_unbalanced);
  CHECK(has_small);

  auto ratios = default_ratios();
  REQUIRE(ratios.size() == 6);
  CHECK(ratios.front() == doctest::Approx(0.01));
  CHECK(ratios.back() == doctest::Approx(1.00));
  for (size_t i = 1; i < ratios.size(); ++i) CHECK(ratios[i] > ratios[i - 1]);
}
