#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "unmtlab/eval.hpp"
#include "unmtlab/selftrain.hpp"

namespace unmtlab {

struct DataSpec {
  size_t n_x = 20000;  // high-resource L1 side
  size_t n_y = 1000;   // low-resource L2 side
  size_t n_test = 1000;
  int clean_max_len = 50;
  size_t monitor_sentences = 200;  // test prefix used for mid-run monitoring
};

struct StParams {
  double epsilon = 0.10;
  int max_epochs = 2;
  int steps_per_epoch = 1500;
  OptReset opt_reset = OptReset::KeepAcrossEpochs;
  WarmStart warm_start = WarmStart::Continue;
};

// One experiment: a bilingual world per seed, shared preprocessing, one
// starting model per seed, and a set of strategy arms branching from it.
// The constructor sets the reference configuration: training budgets and
// noise measured to reach a strong unsupervised baseline on the default
// world within minutes per cell on one CPU core.
struct ExperimentConfig {
  ExperimentConfig() {
    unmt.warmstart_steps = 300;
    unmt.bt_steps = 500;
    unmt.batch_size_tokens = 1000;
    unmt.optim.lr = 0.02;
    unmt.noise.p_blank = 0.3;  // strong cloze pressure drives the bootstrap
  }

  LanguagePairSpec world;
  DataSpec data;
  ModelDims model;  // vocab_size is derived from the world
  UnmtConfig unmt;  // seed is derived per cell
  StParams st;
  std::vector<std::string> strategies{"baseline", "baseline_extra_steps", "st_ut", "st_pt"};
  std::vector<uint64_t> seeds{1, 2, 3};
  std::string out_dir = "runs/experiment";

  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
};

// Everything derived from one seed, shared by every strategy arm.
struct SeedWorkspace {
  uint64_t seed = 0;
  LanguagePair pair;
  Vocab vocab;
  MonoCorpus x, y;
  EvalSet full_eval;
  EvalSet monitor;
  ModelSnapshot m0;
  TrainHistory m0_history;
  uint64_t m0_hash = 0;
};

SeedWorkspace build_seed_workspace(const ExperimentConfig& cfg, uint64_t seed);

// Builds the per-arm self-training configuration (seed stream named after
// the strategy so arms are independent draws).
SelfTrainConfig arm_config(const ExperimentConfig& cfg, uint64_t seed,
                           const std::string& strategy);

struct CellResult {
  std::string strategy;
  uint64_t seed = 0;
  std::string status = "ok";
  double wall_seconds = 0.0;
  uint64_t m0_hash = 0;
  std::vector<EpochScores> epochs;  // epoch 0 = shared starting model
  double bleu_xy = 0.0;             // final full-test scores
  double bleu_yx = 0.0;
  // final full-test decodes, kept in memory for significance testing
  std::vector<RawSentence> hyp_l2, hyp_l1;
};

CellResult run_strategy_cell(const SeedWorkspace& ws, const ExperimentConfig& cfg,
                             const std::string& strategy);

struct ExperimentResult {
  ExperimentConfig cfg;
  std::vector<CellResult> cells;
  // per-seed surface references, pooled for significance
  std::map<uint64_t, std::vector<RawSentence>> ref_l2, ref_l1;
  std::vector<SignificanceResult> significance;
  bool all_ok = true;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

// 3-seed mean of final scores for one strategy; throws if absent or errored.
EvalScores mean_scores(const ExperimentResult& res, const std::string& strategy);

// Seed-mean and sample standard deviation of one strategy's final scores.
struct StrategyStats {
  std::string strategy;
  size_t n = 0;
  double mean_xy = 0.0, std_xy = 0.0;
  double mean_yx = 0.0, std_yx = 0.0;
};

StrategyStats strategy_stats(const ExperimentResult& res, const std::string& strategy);

// Pooled paired bootstrap between two strategies' final decodes.
SignificanceResult pooled_significance(const ExperimentResult& res, const std::string& a,
                                       const std::string& b, LangId direction,
                                       int n_samples = 1000);

std::string report_csv(const ExperimentResult& res);
nlohmann::json report_json(const ExperimentResult& res);
// Writes report.csv and report.json under dir (created if needed).
void write_report(const ExperimentResult& res, const std::string& dir);

struct GridRow {
  size_t n_x = 0, n_y = 0;
  uint64_t seed = 0;
  std::string status = "ok";
  double bleu_xy = 0.0, bleu_yx = 0.0;
  double wall_seconds = 0.0;
};

struct GridResult {
  std::vector<std::pair<size_t, size_t>> cells;
  std::vector<GridRow> rows;
  bool all_ok = true;
};

// One baseline run per (n_x, n_y) cell per seed.
GridResult run_datasize_grid(const ExperimentConfig& cfg,
                             const std::vector<std::pair<size_t, size_t>>& cells);
std::string grid_csv(const GridResult& res);

struct RatioRow {
  double ratio = 0.0;  // 0 marks the budget-matched baseline row
  std::string strategy;
  uint64_t seed = 0;
  std::string status = "ok";
  double bleu_xy = 0.0, bleu_yx = 0.0;
};

struct RatioResult {
  std::vector<double> ratios;
  std::vector<RatioRow> rows;
  bool all_ok = true;
};

// One-epoch runs of both self-training strategies per ratio, plus the
// budget-matched baseline, sharing each seed's starting model.
RatioResult sweep_ratio(const ExperimentConfig& cfg, const std::vector<double>& ratios);
std::string ratio_csv(const RatioResult& res);

struct EpochRow {
  std::string strategy;
  uint64_t seed = 0;
  int epoch = 0;
  std::string status = "ok";
  double bleu_xy = 0.0, bleu_yx = 0.0;
};

struct EpochResult {
  int max_epochs = 0;
  std::vector<EpochRow> rows;
  bool all_ok = true;
};

// BLEU after each epoch 0..max_epochs for the extended baseline and both
// self-training strategies.
EpochResult sweep_epochs(const ExperimentConfig& cfg, int max_epochs);
std::string epoch_csv(const EpochResult& res);

std::vector<std::pair<size_t, size_t>> default_grid_cells();
std::vector<double> default_ratios();

// Resolves a user path against the UNMTLAB_OUT environment variable when the
// path is relative and the variable is set.
std::string resolve_out_path(const std::string& path);

}  // namespace unmtlab
