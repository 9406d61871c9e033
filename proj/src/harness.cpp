#include "unmtlab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

namespace unmtlab {

namespace {

std::string fmt_bleu(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string fmt_ratio(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const std::set<std::string>& known_strategies() {
  static const std::set<std::string> s{"baseline", "baseline_extra_steps", "st_ut", "st_pt"};
  return s;
}

std::string hash_hex(uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

void ExperimentConfig::validate() const {
  world.validate();
  if (data.n_x < 1 || data.n_y < 1 || data.n_test < 1) {
    throw ValidationError("corpus sizes must be >= 1");
  }
  if (data.clean_max_len < 1) throw ValidationError("clean_max_len must be >= 1");
  ModelDims dims = model;
  dims.vocab_size = Vocab::kNumReserved + 1;  // filled from the world at run time
  dims.validate();
  unmt.validate();
  if (!(st.epsilon > 0.0) || st.epsilon > 1.0) throw ValidationError("epsilon must be in (0, 1]");
  if (st.max_epochs < 1) throw ValidationError("max_epochs must be >= 1");
  if (st.steps_per_epoch < 1) throw ValidationError("steps_per_epoch must be >= 1");
  if (strategies.empty()) throw ValidationError("no strategies selected");
  for (const auto& s : strategies) {
    if (!known_strategies().count(s)) throw ValidationError("unknown strategy: " + s);
  }
  if (seeds.empty()) throw ValidationError("no seeds given");
  std::set<uint64_t> uniq(seeds.begin(), seeds.end());
  if (uniq.size() != seeds.size()) throw ValidationError("duplicate seeds");
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["world"] = nlohmann::json::parse(world.to_json());
  j["data"] = {{"n_x", data.n_x},
               {"n_y", data.n_y},
               {"n_test", data.n_test},
               {"clean_max_len", data.clean_max_len},
               {"monitor_sentences", data.monitor_sentences}};
  j["model"] = {{"embed_dim", model.embed_dim},
                {"hidden_dim", model.hidden_dim},
                {"max_decode_len", model.max_decode_len},
                {"use_attention", model.use_attention},
                {"tie_output", model.tie_output}};
  j["unmt"] = {{"warmstart_steps", unmt.warmstart_steps},
               {"bt_steps", unmt.bt_steps},
               {"batch_size_tokens", unmt.batch_size_tokens},
               {"eval_every", unmt.eval_every},
               {"noise",
                {{"p_drop", unmt.noise.p_drop},
                 {"p_blank", unmt.noise.p_blank},
                 {"shuffle_k", unmt.noise.shuffle_k}}},
               {"optim",
                {{"lr", unmt.optim.lr},
                 {"beta1", unmt.optim.beta1},
                 {"beta2", unmt.optim.beta2},
                 {"eps", unmt.optim.eps}}}};
  j["selftrain"] = {{"epsilon", st.epsilon},
                    {"max_epochs", st.max_epochs},
                    {"steps_per_epoch", st.steps_per_epoch},
                    {"opt_reset",
                     st.opt_reset == OptReset::KeepAcrossEpochs ? "keep" : "reset"},
                    {"warm_start",
                     st.warm_start == WarmStart::Continue ? "continue" : "reinit"}};
  j["strategies"] = strategies;
  j["seeds"] = seeds;
  j["out_dir"] = out_dir;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  if (j.contains("world")) cfg.world = LanguagePairSpec::from_json(j.at("world").dump());
  if (j.contains("data")) {
    const auto& d = j.at("data");
    cfg.data.n_x = d.value("n_x", cfg.data.n_x);
    cfg.data.n_y = d.value("n_y", cfg.data.n_y);
    cfg.data.n_test = d.value("n_test", cfg.data.n_test);
    cfg.data.clean_max_len = d.value("clean_max_len", cfg.data.clean_max_len);
    cfg.data.monitor_sentences = d.value("monitor_sentences", cfg.data.monitor_sentences);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    cfg.model.embed_dim = m.value("embed_dim", cfg.model.embed_dim);
    cfg.model.hidden_dim = m.value("hidden_dim", cfg.model.hidden_dim);
    cfg.model.max_decode_len = m.value("max_decode_len", cfg.model.max_decode_len);
    cfg.model.use_attention = m.value("use_attention", cfg.model.use_attention);
    cfg.model.tie_output = m.value("tie_output", cfg.model.tie_output);
  }
  if (j.contains("unmt")) {
    const auto& u = j.at("unmt");
    cfg.unmt.warmstart_steps = u.value("warmstart_steps", cfg.unmt.warmstart_steps);
    cfg.unmt.bt_steps = u.value("bt_steps", cfg.unmt.bt_steps);
    cfg.unmt.batch_size_tokens = u.value("batch_size_tokens", cfg.unmt.batch_size_tokens);
    cfg.unmt.eval_every = u.value("eval_every", cfg.unmt.eval_every);
    if (u.contains("noise")) {
      const auto& n = u.at("noise");
      cfg.unmt.noise.p_drop = n.value("p_drop", cfg.unmt.noise.p_drop);
      cfg.unmt.noise.p_blank = n.value("p_blank", cfg.unmt.noise.p_blank);
      cfg.unmt.noise.shuffle_k = n.value("shuffle_k", cfg.unmt.noise.shuffle_k);
    }
    if (u.contains("optim")) {
      const auto& o = u.at("optim");
      cfg.unmt.optim.lr = o.value("lr", cfg.unmt.optim.lr);
      cfg.unmt.optim.beta1 = o.value("beta1", cfg.unmt.optim.beta1);
      cfg.unmt.optim.beta2 = o.value("beta2", cfg.unmt.optim.beta2);
      cfg.unmt.optim.eps = o.value("eps", cfg.unmt.optim.eps);
    }
  }
  if (j.contains("selftrain")) {
    const auto& s = j.at("selftrain");
    cfg.st.epsilon = s.value("epsilon", cfg.st.epsilon);
    cfg.st.max_epochs = s.value("max_epochs", cfg.st.max_epochs);
    cfg.st.steps_per_epoch = s.value("steps_per_epoch", cfg.st.steps_per_epoch);
    std::string warm = s.value("warm_start", std::string("continue"));
    if (warm == "continue") {
      cfg.st.warm_start = WarmStart::Continue;
    } else if (warm == "reinit") {
      cfg.st.warm_start = WarmStart::Reinit;
    } else {
      throw ValidationError("warm_start must be 'continue' or 'reinit'");
    }
    std::string reset = s.value("opt_reset", std::string("keep"));
    if (reset == "keep") {
      cfg.st.opt_reset = OptReset::KeepAcrossEpochs;
    } else if (reset == "reset") {
      cfg.st.opt_reset = OptReset::ResetEachEpoch;
    } else {
      throw ValidationError("opt_reset must be 'keep' or 'reset'");
    }
  }
  if (j.contains("strategies")) {
    cfg.strategies = j.at("strategies").get<std::vector<std::string>>();
  }
  if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<uint64_t>>();
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  return cfg;
}

SeedWorkspace build_seed_workspace(const ExperimentConfig& cfg, uint64_t seed) {
  SeedWorkspace ws;
  ws.seed = seed;
  LanguagePairSpec wspec = cfg.world;
  wspec.seed = Rng::derive(seed, "world");
  ws.pair = generate_language_pair(wspec);
  GeneratedCorpora text = generate_corpora(ws.pair, cfg.data.n_x, cfg.data.n_y,
                                           cfg.data.n_test, Rng::derive(seed, "corpora"));
  ws.vocab = vocab_from_pair(ws.pair);
  ws.x = clean(encode_corpus(ws.vocab, text.x), cfg.data.clean_max_len);
  ws.y = clean(encode_corpus(ws.vocab, text.y), cfg.data.clean_max_len);
  ws.full_eval = make_eval_set(ws.vocab, text.test);
  ws.monitor = make_eval_set(ws.vocab, text.test, cfg.data.monitor_sentences);
  ModelDims dims = cfg.model;
  dims.vocab_size = static_cast<int>(ws.vocab.size());
  UnmtConfig ucfg = cfg.unmt;
  ucfg.seed = Rng::derive(seed, "train");
  TrainResult tr = train_unmt(dims, ws.x, ws.y, ws.vocab, ucfg, &ws.monitor);
  ws.m0 = std::move(tr.model);
  ws.m0_history = std::move(tr.history);
  ws.m0_hash = ws.m0.content_hash();
  return ws;
}

SelfTrainConfig arm_config(const ExperimentConfig& cfg, uint64_t seed,
                           const std::string& strategy) {
  SelfTrainConfig st;
  st.epsilon = cfg.st.epsilon;
  st.max_epochs = cfg.st.max_epochs;
  st.steps_per_epoch = cfg.st.steps_per_epoch;
  st.opt_reset = cfg.st.opt_reset;
  st.warm_start = cfg.st.warm_start;
  st.unmt = cfg.unmt;
  st.unmt.seed = Rng::derive(Rng::derive(seed, "arm"), strategy);
  return st;
}

namespace {

void fill_final(CellResult& cell, const ModelSnapshot& model, const SeedWorkspace& ws) {
  ModelTranslator tr(model, ws.vocab);
  auto ids_l2 = translate_all(tr, ws.full_eval.src_l1, LangId::L2);
  auto ids_l1 = translate_all(tr, ws.full_eval.src_l2, LangId::L1);
  cell.hyp_l2.resize(ids_l2.size());
  cell.hyp_l1.resize(ids_l1.size());
  for (size_t i = 0; i < ids_l2.size(); ++i) cell.hyp_l2[i] = ws.vocab.decode(ids_l2[i]);
  for (size_t i = 0; i < ids_l1.size(); ++i) cell.hyp_l1[i] = ws.vocab.decode(ids_l1[i]);
  cell.bleu_xy = bleu(cell.hyp_l2, ws.full_eval.ref_l2).score;
  cell.bleu_yx = bleu(cell.hyp_l1, ws.full_eval.ref_l1).score;
}

}  // namespace

CellResult run_strategy_cell(const SeedWorkspace& ws, const ExperimentConfig& cfg,
                             const std::string& strategy) {
  CellResult cell;
  cell.strategy = strategy;
  cell.seed = ws.seed;
  cell.m0_hash = ws.m0_hash;
  auto t0 = std::chrono::steady_clock::now();
  try {
    SelfTrainConfig st = arm_config(cfg, ws.seed, strategy);
    if (strategy == "baseline") {
      fill_final(cell, ws.m0, ws);
      EvalScores track = evaluate_model(ws.m0, ws.vocab, ws.monitor);
      for (int e = 0; e <= st.max_epochs; ++e) {
        cell.epochs.push_back({e, track.bleu_xy, track.bleu_yx});
      }
    } else {
      // epoch tracking uses the small monitor set; the authoritative final
      // scores below come from the full test set
      StResult r;
      if (strategy == "baseline_extra_steps") {
        r = train_baseline_extra(ws.m0, ws.x, ws.y, ws.vocab, st, &ws.monitor);
      } else if (strategy == "st_ut") {
        r = train_st_ut(ws.m0, ws.x, ws.y, ws.vocab, st, &ws.monitor);
      } else if (strategy == "st_pt") {
        r = train_st_pt(ws.m0, ws.x, ws.y, ws.vocab, st, &ws.monitor);
      } else {
        throw ValidationError("unknown strategy: " + strategy);
      }
      cell.epochs = r.epoch_scores;
      fill_final(cell, r.model, ws);
    }
  } catch (const std::exception& e) {
    cell.status = std::string("error: ") + e.what();
  }
  cell.wall_seconds = elapsed_since(t0);
  return cell;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult res;
  res.cfg = cfg;
  for (uint64_t seed : cfg.seeds) {
    try {
      SeedWorkspace ws = build_seed_workspace(cfg, seed);
      res.ref_l2[seed] = ws.full_eval.ref_l2;
      res.ref_l1[seed] = ws.full_eval.ref_l1;
      for (const auto& strategy : cfg.strategies) {
        res.cells.push_back(run_strategy_cell(ws, cfg, strategy));
      }
    } catch (const std::exception& e) {
      for (const auto& strategy : cfg.strategies) {
        CellResult cell;
        cell.strategy = strategy;
        cell.seed = seed;
        cell.status = std::string("error: ") + e.what();
        res.cells.push_back(cell);
      }
    }
  }
  for (const auto& c : res.cells) {
    if (c.status != "ok") res.all_ok = false;
  }
  bool have_pt = false, have_base = false;
  for (const auto& c : res.cells) {
    if (c.strategy == "st_pt" && c.status == "ok") have_pt = true;
    if (c.strategy == "baseline_extra_steps" && c.status == "ok") have_base = true;
  }
  if (have_pt && have_base && res.all_ok) {
    res.significance.push_back(pooled_significance(res, "st_pt", "baseline_extra_steps", LangId::L2));
    res.significance.push_back(pooled_significance(res, "st_pt", "baseline_extra_steps", LangId::L1));
  }
  return res;
}

namespace {

const CellResult& find_cell(const ExperimentResult& res, const std::string& strategy,
                            uint64_t seed) {
  for (const auto& c : res.cells) {
    if (c.strategy == strategy && c.seed == seed) return c;
  }
  throw ValidationError("no cell for strategy " + strategy + ", seed " + std::to_string(seed));
}

}  // namespace

EvalScores mean_scores(const ExperimentResult& res, const std::string& strategy) {
  EvalScores mean;
  size_t n = 0;
  for (const auto& c : res.cells) {
    if (c.strategy != strategy) continue;
    if (c.status != "ok") throw ValidationError("cell errored: " + strategy);
    mean.bleu_xy += c.bleu_xy;
    mean.bleu_yx += c.bleu_yx;
    ++n;
  }
  if (n == 0) throw ValidationError("strategy not present: " + strategy);
  mean.bleu_xy /= static_cast<double>(n);
  mean.bleu_yx /= static_cast<double>(n);
  return mean;
}

StrategyStats strategy_stats(const ExperimentResult& res, const std::string& strategy) {
  StrategyStats st;
  st.strategy = strategy;
  std::vector<double> xs, ys;
  for (const auto& c : res.cells) {
    if (c.strategy != strategy) continue;
    if (c.status != "ok") throw ValidationError("cell errored: " + strategy);
    xs.push_back(c.bleu_xy);
    ys.push_back(c.bleu_yx);
  }
  if (xs.empty()) throw ValidationError("strategy not present: " + strategy);
  st.n = xs.size();
  auto mean_of = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto std_of = [](const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
  };
  st.mean_xy = mean_of(xs);
  st.mean_yx = mean_of(ys);
  st.std_xy = std_of(xs, st.mean_xy);
  st.std_yx = std_of(ys, st.mean_yx);
  return st;
}

SignificanceResult pooled_significance(const ExperimentResult& res, const std::string& a,
                                       const std::string& b, LangId direction,
                                       int n_samples) {
  std::vector<RawSentence> hyp_a, hyp_b, refs;
  for (uint64_t seed : res.cfg.seeds) {
    const CellResult& ca = find_cell(res, a, seed);
    const CellResult& cb = find_cell(res, b, seed);
    if (ca.status != "ok" || cb.status != "ok") {
      throw ValidationError("significance over errored cells");
    }
    const auto& ha = direction == LangId::L2 ? ca.hyp_l2 : ca.hyp_l1;
    const auto& hb = direction == LangId::L2 ? cb.hyp_l2 : cb.hyp_l1;
    const auto& rr = direction == LangId::L2 ? res.ref_l2.at(seed) : res.ref_l1.at(seed);
    hyp_a.insert(hyp_a.end(), ha.begin(), ha.end());
    hyp_b.insert(hyp_b.end(), hb.begin(), hb.end());
    refs.insert(refs.end(), rr.begin(), rr.end());
  }
  std::string suffix = direction == LangId::L2 ? " (l1_to_l2)" : " (l2_to_l1)";
  return paired_bootstrap(hyp_a, hyp_b, refs, n_samples, 1, a + suffix, b + suffix);
}

std::string report_csv(const ExperimentResult& res) {
  std::string out = "strategy,seed,direction,epoch,bleu,status\n";
  for (const auto& c : res.cells) {
    bool ok = c.status == "ok";
    const char* status = ok ? "ok" : "error";
    for (const char* dir : {"l1_to_l2", "l2_to_l1"}) {
      for (int e = 0; e <= res.cfg.st.max_epochs; ++e) {
        std::string score;
        if (ok) {
          for (const auto& ep : c.epochs) {
            if (ep.epoch == e) {
              score = fmt_bleu(std::string(dir) == "l1_to_l2" ? ep.bleu_xy : ep.bleu_yx);
              break;
            }
          }
        }
        out += c.strategy + "," + std::to_string(c.seed) + "," + dir + "," +
               std::to_string(e) + "," + score + "," + status + "\n";
      }
    }
  }
  return out;
}

nlohmann::json report_json(const ExperimentResult& res) {
  nlohmann::json j;
  j["config"] = res.cfg.to_json();
  j["all_ok"] = res.all_ok;
  j["cells"] = nlohmann::json::array();
  for (const auto& c : res.cells) {
    nlohmann::json jc;
    jc["strategy"] = c.strategy;
    jc["seed"] = c.seed;
    jc["status"] = c.status;
    jc["wall_seconds"] = c.wall_seconds;
    jc["m0_hash"] = hash_hex(c.m0_hash);
    jc["epochs"] = nlohmann::json::array();
    for (const auto& e : c.epochs) {
      jc["epochs"].push_back({{"epoch", e.epoch}, {"bleu_xy", e.bleu_xy}, {"bleu_yx", e.bleu_yx}});
    }
    jc["final"] = {{"bleu_xy", c.bleu_xy}, {"bleu_yx", c.bleu_yx}};
    j["cells"].push_back(jc);
  }
  j["summary"] = nlohmann::json::array();
  if (res.all_ok) {
    for (const auto& strategy : res.cfg.strategies) {
      StrategyStats st = strategy_stats(res, strategy);
      j["summary"].push_back({{"strategy", st.strategy},
                              {"seeds", st.n},
                              {"mean_bleu_xy", st.mean_xy},
                              {"std_bleu_xy", st.std_xy},
                              {"mean_bleu_yx", st.mean_yx},
                              {"std_bleu_yx", st.std_yx}});
    }
  }
  j["significance"] = nlohmann::json::array();
  for (const auto& s : res.significance) {
    j["significance"].push_back(nlohmann::json::parse(s.to_json()));
  }
  return j;
}

void write_report(const ExperimentResult& res, const std::string& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir + "/report.csv", std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + dir + "/report.csv");
    f << report_csv(res);
  }
  {
    std::ofstream f(dir + "/report.json", std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + dir + "/report.json");
    f << report_json(res).dump(2) << '\n';
  }
}

GridResult run_datasize_grid(const ExperimentConfig& cfg,
                             const std::vector<std::pair<size_t, size_t>>& cells) {
  cfg.validate();
  if (cells.empty()) throw ValidationError("empty grid");
  GridResult out;
  out.cells = cells;
  for (const auto& [nx, ny] : cells) {
    for (uint64_t seed : cfg.seeds) {
      GridRow row;
      row.n_x = nx;
      row.n_y = ny;
      row.seed = seed;
      auto t0 = std::chrono::steady_clock::now();
      try {
        ExperimentConfig cell_cfg = cfg;
        cell_cfg.data.n_x = nx;
        cell_cfg.data.n_y = ny;
        SeedWorkspace ws = build_seed_workspace(cell_cfg, seed);
        EvalScores s = evaluate_model(ws.m0, ws.vocab, ws.full_eval);
        row.bleu_xy = s.bleu_xy;
        row.bleu_yx = s.bleu_yx;
      } catch (const std::exception& e) {
        row.status = std::string("error: ") + e.what();
        out.all_ok = false;
      }
      row.wall_seconds = elapsed_since(t0);
      out.rows.push_back(row);
    }
  }
  return out;
}

std::string grid_csv(const GridResult& res) {
  std::string out = "n_x,n_y,seed,direction,bleu,status\n";
  for (const auto& r : res.rows) {
    bool ok = r.status == "ok";
    const char* status = ok ? "ok" : "error";
    out += std::to_string(r.n_x) + "," + std::to_string(r.n_y) + "," + std::to_string(r.seed) +
           ",l1_to_l2," + (ok ? fmt_bleu(r.bleu_xy) : "") + "," + status + "\n";
    out += std::to_string(r.n_x) + "," + std::to_string(r.n_y) + "," + std::to_string(r.seed) +
           ",l2_to_l1," + (ok ? fmt_bleu(r.bleu_yx) : "") + "," + status + "\n";
  }
  return out;
}

RatioResult sweep_ratio(const ExperimentConfig& cfg, const std::vector<double>& ratios) {
  cfg.validate();
  if (ratios.empty()) throw ValidationError("empty ratio list");
  for (double r : ratios) {
    if (!(r > 0.0) || r > 1.0) throw ValidationError("ratios must lie in (0, 1]");
  }
  RatioResult out;
  out.ratios = ratios;
  for (uint64_t seed : cfg.seeds) {
    SeedWorkspace ws;
    try {
      ws = build_seed_workspace(cfg, seed);
    } catch (const std::exception& e) {
      out.all_ok = false;
      RatioRow row;
      row.seed = seed;
      row.strategy = "baseline_extra_steps";
      row.status = std::string("error: ") + e.what();
      out.rows.push_back(row);
      continue;
    }
    auto run_arm = [&](double ratio, const std::string& strategy) {
      RatioRow row;
      row.ratio = ratio;
      row.strategy = strategy;
      row.seed = seed;
      try {
        SelfTrainConfig st = arm_config(cfg, seed, strategy);
        st.max_epochs = 1;
        if (ratio > 0.0) st.epsilon = ratio;
        StResult r;
        if (strategy == "baseline_extra_steps") {
          r = train_baseline_extra(ws.m0, ws.x, ws.y, ws.vocab, st, &ws.full_eval);
        } else if (strategy == "st_ut") {
          r = train_st_ut(ws.m0, ws.x, ws.y, ws.vocab, st, &ws.full_eval);
        } else {
          r = train_st_pt(ws.m0, ws.x, ws.y, ws.vocab, st, &ws.full_eval);
        }
        row.bleu_xy = r.epoch_scores.back().bleu_xy;
        row.bleu_yx = r.epoch_scores.back().bleu_yx;
      } catch (const std::exception& e) {
        row.status = std::string("error: ") + e.what();
        out.all_ok = false;
      }
      out.rows.push_back(row);
    };
    run_arm(0.0, "baseline_extra_steps");
    for (double ratio : ratios) {
      run_arm(ratio, "st_ut");
      run_arm(ratio, "st_pt");
    }
  }
  return out;
}

std::string ratio_csv(const RatioResult& res) {
  std::string out = "ratio,strategy,seed,direction,bleu,status\n";
  for (const auto& r : res.rows) {
    bool ok = r.status == "ok";
    const char* status = ok ? "ok" : "error";
    std::string ratio = r.ratio > 0.0 ? fmt_ratio(r.ratio) : "";
    out += ratio + "," + r.strategy + "," + std::to_string(r.seed) + ",l1_to_l2," +
           (ok ? fmt_bleu(r.bleu_xy) : "") + "," + status + "\n";
    out += ratio + "," + r.strategy + "," + std::to_string(r.seed) + ",l2_to_l1," +
           (ok ? fmt_bleu(r.bleu_yx) : "") + "," + status + "\n";
  }
  return out;
}

EpochResult sweep_epochs(const ExperimentConfig& cfg, int max_epochs) {
  cfg.validate();
  if (max_epochs < 1) throw ValidationError("max_epochs must be >= 1");
  EpochResult out;
  out.max_epochs = max_epochs;
  for (uint64_t seed : cfg.seeds) {
    SeedWorkspace ws;
    try {
      ws = build_seed_workspace(cfg, seed);
    } catch (const std::exception& e) {
      out.all_ok = false;
      EpochRow row;
      row.seed = seed;
      row.strategy = "baseline_extra_steps";
      row.status = std::string("error: ") + e.what();
      out.rows.push_back(row);
      continue;
    }
    for (const char* strategy : {"baseline_extra_steps", "st_ut", "st_pt"}) {
      try {
        SelfTrainConfig st = arm_config(cfg, seed, strategy);
        st.max_epochs = max_epochs;
        StResult r;
        if (std::string(strategy) == "baseline_extra_steps") {
          r = train_baseline_extra(ws.m0, ws.x, ws.y, ws.vocab, st, &ws.full_eval);
        } else if (std::string(strategy) == "st_ut") {
          r = train_st_ut(ws.m0, ws.x, ws.y, ws.vocab, st, &ws.full_eval);
        } else {
          r = train_st_pt(ws.m0, ws.x, ws.y, ws.vocab, st, &ws.full_eval);
        }
        for (const auto& e : r.epoch_scores) {
          out.rows.push_back({strategy, seed, e.epoch, "ok", e.bleu_xy, e.bleu_yx});
        }
      } catch (const std::exception& e) {
        out.all_ok = false;
        EpochRow row;
        row.strategy = strategy;
        row.seed = seed;
        row.status = std::string("error: ") + e.what();
        out.rows.push_back(row);
      }
    }
  }
  return out;
}

std::string epoch_csv(const EpochResult& res) {
  std::string out = "strategy,seed,epoch,direction,bleu,status\n";
  for (const auto& r : res.rows) {
    bool ok = r.status == "ok";
    const char* status = ok ? "ok" : "error";
    out += r.strategy + "," + std::to_string(r.seed) + "," + std::to_string(r.epoch) +
           ",l1_to_l2," + (ok ? fmt_bleu(r.bleu_xy) : "") + "," + status + "\n";
    out += r.strategy + "," + std::to_string(r.seed) + "," + std::to_string(r.epoch) +
           ",l2_to_l1," + (ok ? fmt_bleu(r.bleu_yx) : "") + "," + status + "\n";
  }
  return out;
}

std::vector<std::pair<size_t, size_t>> default_grid_cells() {
  return {{20000, 20000}, {10000, 10000}, {20000, 1000}, {1000, 20000}, {1000, 1000}};
}

std::vector<double> default_ratios() { return {0.01, 0.05, 0.10, 0.30, 0.50, 1.00}; }

std::string resolve_out_path(const std::string& path) {
  if (path.empty()) throw ValidationError("empty output path");
  std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  const char* root = std::getenv("UNMTLAB_OUT");
  if (root == nullptr || *root == '\0') return path;
  return (std::filesystem::path(root) / p).string();
}

}  // namespace unmtlab
