// Command-line front end: corpus generation, single training runs, the full
// strategy experiment, and the data-size / ratio / epoch sweeps, plus BLEU
// scoring and significance testing of plain text files.
//
// Relative --out paths resolve against the UNMTLAB_OUT environment variable
// when it is set. Exit code 0 means every requested cell succeeded.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "unmtlab/harness.hpp"

using namespace unmtlab;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out;
  std::vector<uint64_t> seeds;
  std::vector<std::string> strategies;
  double epsilon = -1.0;
  int epochs = -1;
  int steps = -1;
  long n_x = -1, n_y = -1, n_test = -1;
  int warm = -1, bt = -1;
};

// Config file first, then individual flag overrides.
ExperimentConfig load_config(const CommonOpts& opts) {
  ExperimentConfig cfg;
  if (!opts.config_path.empty()) {
    std::ifstream f(opts.config_path);
    if (!f) throw IoError("cannot read config file: " + opts.config_path);
    cfg = ExperimentConfig::from_json(nlohmann::json::parse(f));
  }
  if (!opts.seeds.empty()) cfg.seeds = opts.seeds;
  if (!opts.strategies.empty()) cfg.strategies = opts.strategies;
  if (!opts.out.empty()) cfg.out_dir = opts.out;
  if (opts.epsilon > 0.0) cfg.st.epsilon = opts.epsilon;
  if (opts.epochs > 0) cfg.st.max_epochs = opts.epochs;
  if (opts.steps > 0) cfg.st.steps_per_epoch = opts.steps;
  if (opts.n_x > 0) cfg.data.n_x = static_cast<size_t>(opts.n_x);
  if (opts.n_y > 0) cfg.data.n_y = static_cast<size_t>(opts.n_y);
  if (opts.n_test > 0) cfg.data.n_test = static_cast<size_t>(opts.n_test);
  if (opts.warm >= 0) cfg.unmt.warmstart_steps = opts.warm;
  if (opts.bt >= 0) cfg.unmt.bt_steps = opts.bt;
  cfg.validate();
  return cfg;
}

void add_common_flags(CLI::App* cmd, CommonOpts& opts, bool with_training) {
  cmd->add_option("--config", opts.config_path, "JSON config file (flags override fields)");
  cmd->add_option("--out", opts.out, "output directory (relative paths join UNMTLAB_OUT)");
  cmd->add_option("--seed", opts.seeds, "seed list (repeat the flag for several)");
  if (with_training) {
    cmd->add_option("--strategy", opts.strategies,
                    "strategies: baseline, baseline_extra_steps, st_ut, st_pt");
    cmd->add_option("--epsilon", opts.epsilon, "fraction of X translated per epoch");
    cmd->add_option("--epochs", opts.epochs, "self-training epochs");
    cmd->add_option("--steps", opts.steps, "optimizer steps per epoch");
    cmd->add_option("--warmstart-steps", opts.warm, "denoising-only steps before joint training");
    cmd->add_option("--bt-steps", opts.bt, "joint denoising + back-translation steps");
  }
  cmd->add_option("--n-x", opts.n_x, "L1 monolingual sentences");
  cmd->add_option("--n-y", opts.n_y, "L2 monolingual sentences");
  cmd->add_option("--n-test", opts.n_test, "held-out reference pairs");
}

std::string out_dir_for(const ExperimentConfig& cfg) {
  std::string dir = resolve_out_path(cfg.out_dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << text;
}

void save_config(const ExperimentConfig& cfg, const std::string& dir) {
  write_text(dir + "/config.json", cfg.to_json().dump(2) + "\n");
}

int cmd_gen(const CommonOpts& opts) {
  ExperimentConfig cfg = load_config(opts);
  uint64_t seed = cfg.seeds.front();
  std::string dir = out_dir_for(cfg);

  LanguagePairSpec wspec = cfg.world;
  wspec.seed = Rng::derive(seed, "world");
  LanguagePair pair = generate_language_pair(wspec);
  GeneratedCorpora text = generate_corpora(pair, cfg.data.n_x, cfg.data.n_y, cfg.data.n_test,
                                           Rng::derive(seed, "corpora"));
  save_text_corpus(text.x, dir + "/x.l1.txt");
  save_text_corpus(text.y, dir + "/y.l2.txt");
  TextCorpus test_l1, test_l2;
  test_l1.lang = LangId::L1;
  test_l2.lang = LangId::L2;
  for (const auto& [l1, l2] : text.test.pairs) {
    test_l1.sentences.push_back(l1);
    test_l2.sentences.push_back(l2);
  }
  save_text_corpus(test_l1, dir + "/test.l1.txt");
  save_text_corpus(test_l2, dir + "/test.l2.txt");
  write_text(dir + "/world.json", pair.to_json() + "\n");
  save_config(cfg, dir);
  std::cout << "wrote corpora for seed " << seed << " under " << dir << "\n"
            << "  x: " << text.x.sentences.size() << "  y: " << text.y.sentences.size()
            << "  test: " << text.test.pairs.size() << "\n";
  return 0;
}

int cmd_train(const CommonOpts& opts) {
  ExperimentConfig cfg = load_config(opts);
  uint64_t seed = cfg.seeds.front();
  std::string dir = out_dir_for(cfg);

  SeedWorkspace ws = build_seed_workspace(cfg, seed);
  EvalScores s = evaluate_model(ws.m0, ws.vocab, ws.full_eval);
  ws.m0.save(dir + "/model.bin");
  ws.m0_history.save_csv(dir + "/history.csv");
  ws.vocab.save(dir + "/vocab.txt");
  save_config(cfg, dir);
  nlohmann::json j{{"seed", seed},
                   {"bleu_l1_to_l2", s.bleu_xy},
                   {"bleu_l2_to_l1", s.bleu_yx},
                   {"model_steps", ws.m0.step}};
  write_text(dir + "/scores.json", j.dump(2) + "\n");
  std::cout << "seed " << seed << ": test BLEU " << s.bleu_xy << " (L1->L2), " << s.bleu_yx
            << " (L2->L1); artifacts under " << dir << "\n";
  return 0;
}

int cmd_experiment(const CommonOpts& opts) {
  ExperimentConfig cfg = load_config(opts);
  std::string dir = out_dir_for(cfg);
  ExperimentResult res = run_experiment(cfg);
  write_report(res, dir);
  save_config(cfg, dir);
  for (const auto& c : res.cells) {
    std::cout << c.strategy << " seed=" << c.seed << " status=" << c.status;
    if (c.status == "ok") {
      std::cout << " bleu=(" << c.bleu_xy << ", " << c.bleu_yx << ")";
    }
    std::cout << "\n";
  }
  for (const auto& s : res.significance) {
    std::cout << "significance " << s.system_a << " vs " << s.system_b << ": p=" << s.p_value
              << "\n";
  }
  std::cout << "report under " << dir << (res.all_ok ? "" : "  (with errors)") << "\n";
  return res.all_ok ? 0 : 1;
}

int cmd_grid(const CommonOpts& opts, const std::vector<std::string>& cell_specs) {
  ExperimentConfig cfg = load_config(opts);
  std::vector<std::pair<size_t, size_t>> cells;
  for (const auto& spec : cell_specs) {
    auto colon = spec.find(':');
    if (colon == std::string::npos) {
      throw ValidationError("grid cells look like N_X:N_Y, got: " + spec);
    }
    cells.emplace_back(std::stoull(spec.substr(0, colon)), std::stoull(spec.substr(colon + 1)));
  }
  if (cells.empty()) cells = default_grid_cells();
  std::string dir = out_dir_for(cfg);
  GridResult res = run_datasize_grid(cfg, cells);
  write_text(dir + "/grid.csv", grid_csv(res));
  save_config(cfg, dir);
  std::cout << grid_csv(res) << "grid report under " << dir << "\n";
  return res.all_ok ? 0 : 1;
}

int cmd_sweep_ratio(const CommonOpts& opts, const std::vector<double>& ratios_in) {
  ExperimentConfig cfg = load_config(opts);
  std::vector<double> ratios = ratios_in.empty() ? default_ratios() : ratios_in;
  std::string dir = out_dir_for(cfg);
  RatioResult res = sweep_ratio(cfg, ratios);
  write_text(dir + "/ratio.csv", ratio_csv(res));
  save_config(cfg, dir);
  std::cout << ratio_csv(res) << "ratio report under " << dir << "\n";
  return res.all_ok ? 0 : 1;
}

int cmd_sweep_epochs(const CommonOpts& opts, int max_epochs) {
  ExperimentConfig cfg = load_config(opts);
  if (max_epochs < 1) max_epochs = cfg.st.max_epochs;
  std::string dir = out_dir_for(cfg);
  EpochResult res = sweep_epochs(cfg, max_epochs);
  write_text(dir + "/epochs.csv", epoch_csv(res));
  save_config(cfg, dir);
  std::cout << epoch_csv(res) << "epoch report under " << dir << "\n";
  return res.all_ok ? 0 : 1;
}

int cmd_bleu(const std::string& hyp_path, const std::string& ref_path) {
  std::vector<RawSentence> hyp = load_sentences(hyp_path);
  std::vector<RawSentence> ref = load_sentences(ref_path);
  BleuReport report = bleu(hyp, ref);
  std::cout << report.to_json() << "\n";
  return 0;
}

int cmd_signif(const std::string& a_path, const std::string& b_path, const std::string& ref_path,
               int samples, uint64_t seed) {
  std::vector<RawSentence> a = load_sentences(a_path);
  std::vector<RawSentence> b = load_sentences(b_path);
  std::vector<RawSentence> refs = load_sentences(ref_path);
  SignificanceResult res = paired_bootstrap(a, b, refs, samples, seed, a_path, b_path);
  std::cout << res.to_json() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unmtlab: unsupervised translation experiments on synthetic language pairs"};
  app.require_subcommand(1);

  CommonOpts gen_opts, train_opts, exp_opts, grid_opts, ratio_opts, epoch_opts;
  std::vector<std::string> grid_cells;
  std::vector<double> ratios;
  int max_epochs = -1;
  std::string bleu_hyp, bleu_ref, sig_a, sig_b, sig_ref;
  int sig_samples = 1000;
  uint64_t sig_seed = 1;

  CLI::App* gen = app.add_subcommand("gen", "generate a bilingual toy world and corpora");
  add_common_flags(gen, gen_opts, false);

  CLI::App* train = app.add_subcommand("train", "one unsupervised training run");
  add_common_flags(train, train_opts, true);

  CLI::App* exp = app.add_subcommand("experiment", "strategy comparison across seeds");
  add_common_flags(exp, exp_opts, true);

  CLI::App* grid = app.add_subcommand("grid", "baseline BLEU over a data-size grid");
  add_common_flags(grid, grid_opts, true);
  grid->add_option("--cell", grid_cells, "grid cell as N_X:N_Y (repeatable; default menu)");

  CLI::App* ratio = app.add_subcommand("sweep-ratio", "1-epoch self-training across ratios");
  add_common_flags(ratio, ratio_opts, true);
  ratio->add_option("--ratio", ratios, "subsample ratio in (0,1] (repeatable; default menu)");

  CLI::App* epochs = app.add_subcommand("sweep-epochs", "per-epoch scores per strategy");
  add_common_flags(epochs, epoch_opts, true);
  epochs->add_option("--epochs", max_epochs, "number of self-training epochs to sweep");

  CLI::App* bleu_cmd = app.add_subcommand("bleu", "score a hypothesis file against references");
  bleu_cmd->add_option("hypotheses", bleu_hyp, "hypothesis text file")->required();
  bleu_cmd->add_option("references", bleu_ref, "reference text file")->required();

  CLI::App* signif = app.add_subcommand("signif", "paired bootstrap between two systems");
  signif->add_option("system-a", sig_a, "first hypothesis file")->required();
  signif->add_option("system-b", sig_b, "second hypothesis file")->required();
  signif->add_option("references", sig_ref, "reference text file")->required();
  signif->add_option("--samples", sig_samples, "bootstrap resamples (>= 1000)");
  signif->add_option("--seed", sig_seed, "bootstrap seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(gen_opts);
    if (train->parsed()) return cmd_train(train_opts);
    if (exp->parsed()) return cmd_experiment(exp_opts);
    if (grid->parsed()) return cmd_grid(grid_opts, grid_cells);
    if (ratio->parsed()) return cmd_sweep_ratio(ratio_opts, ratios);
    if (epochs->parsed()) return cmd_sweep_epochs(epoch_opts, max_epochs);
    if (bleu_cmd->parsed()) return cmd_bleu(bleu_hyp, bleu_ref);
    if (signif->parsed()) return cmd_signif(sig_a, sig_b, sig_ref, sig_samples, sig_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
