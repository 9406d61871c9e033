// Python bindings: a thin JSON-oriented surface over the core operations.
// Structured values cross the boundary as JSON strings; the python package
// wraps them into dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "unmtlab/harness.hpp"

namespace py = pybind11;
using namespace unmtlab;

namespace {

std::string world_json(int content, int anchors, uint64_t seed) {
  LanguagePairSpec spec;
  spec.content_vocab_size = content;
  spec.anchor_vocab_size = anchors;
  spec.seed = seed;
  return generate_language_pair(spec).to_json();
}

Direction parse_direction(const std::string& d) {
  if (d == "l1_to_l2") return Direction::L1ToL2;
  if (d == "l2_to_l1") return Direction::L2ToL1;
  throw ValidationError("direction must be l1_to_l2 or l2_to_l1, got: " + d);
}

std::vector<std::string> oracle_translate_py(const std::string& world,
                                             const std::vector<std::string>& sentence,
                                             const std::string& direction) {
  LanguagePair pair = LanguagePair::from_json(world);
  return oracle_translate(pair, sentence, parse_direction(direction));
}

std::string generate_corpora_py(const std::string& world, size_t n_x, size_t n_y,
                                size_t n_test, uint64_t seed) {
  LanguagePair pair = LanguagePair::from_json(world);
  GeneratedCorpora g = generate_corpora(pair, n_x, n_y, n_test, seed);
  nlohmann::json j;
  j["x"] = g.x.sentences;
  j["y"] = g.y.sentences;
  nlohmann::json test = nlohmann::json::array();
  for (const auto& [l1, l2] : g.test.pairs) test.push_back({l1, l2});
  j["test"] = std::move(test);
  return j.dump();
}

double bleu_score_py(const std::vector<RawSentence>& hyp, const std::vector<RawSentence>& ref) {
  return bleu(hyp, ref).score;
}

std::string bleu_report_py(const std::vector<RawSentence>& hyp,
                           const std::vector<RawSentence>& ref) {
  return bleu(hyp, ref).to_json();
}

std::string paired_bootstrap_py(const std::vector<RawSentence>& a,
                                const std::vector<RawSentence>& b,
                                const std::vector<RawSentence>& refs, int n_samples,
                                uint64_t seed, const std::string& name_a,
                                const std::string& name_b) {
  return paired_bootstrap(a, b, refs, n_samples, seed, name_a, name_b).to_json();
}

std::vector<TokenId> apply_noise_py(const std::vector<TokenId>& tokens, double p_drop,
                                    double p_blank, int shuffle_k, uint64_t seed) {
  NoiseSpec spec;
  spec.p_drop = p_drop;
  spec.p_blank = p_blank;
  spec.shuffle_k = shuffle_k;
  spec.validate();
  Rng rng(seed);
  return apply_noise(tokens, spec, rng);
}

std::string default_config_py() { return ExperimentConfig().to_json().dump(2); }

std::string run_experiment_py(const std::string& config_json) {
  ExperimentConfig cfg = ExperimentConfig::from_json(nlohmann::json::parse(config_json));
  return report_json(run_experiment(cfg)).dump(2);
}

std::string run_experiment_csv_py(const std::string& config_json) {
  ExperimentConfig cfg = ExperimentConfig::from_json(nlohmann::json::parse(config_json));
  return report_csv(run_experiment(cfg));
}

double gradient_max_rel_error_py(uint64_t seed) {
  Rng rng(seed);
  ModelDims dims;
  dims.vocab_size = 40;
  dims.embed_dim = 12;
  dims.hidden_dim = 20;
  ModelSnapshot model = init_model(dims, rng.next_u64());
  std::vector<Sentence> src, tgt;
  for (int s = 0; s < 3; ++s) {
    Sentence a, b;
    for (int i = 0; i < 5; ++i) {
      a.push_back(static_cast<TokenId>(Vocab::kNumReserved +
                                       rng.index(dims.vocab_size - Vocab::kNumReserved)));
      b.push_back(static_cast<TokenId>(Vocab::kNumReserved +
                                       rng.index(dims.vocab_size - Vocab::kNumReserved)));
    }
    src.push_back(a);
    tgt.push_back(wrap_target(b));
  }
  return grad_check(model, src, tgt, Vocab::kTagL2, 1e-4, 40, rng.next_u64());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Unsupervised translation laboratory on synthetic language pairs";

  m.def("world_json", &world_json, py::arg("content") = 24, py::arg("anchors") = 12,
        py::arg("seed") = 1,
        "Generate a bilingual toy world; returns its JSON description.");
  m.def("oracle_translate", &oracle_translate_py, py::arg("world_json"), py::arg("sentence"),
        py::arg("direction") = "l1_to_l2",
        "Exact reference translation of a token list under a world.");
  m.def("generate_corpora", &generate_corpora_py, py::arg("world_json"), py::arg("n_x"),
        py::arg("n_y"), py::arg("n_test"), py::arg("seed") = 1,
        "Disjoint monolingual corpora plus held-out pairs, as JSON.");
  m.def("bleu_score", &bleu_score_py, py::arg("hypotheses"), py::arg("references"),
        "Corpus BLEU on the 0..100 scale.");
  m.def("bleu_report", &bleu_report_py, py::arg("hypotheses"), py::arg("references"),
        "Full BLEU report (precisions, brevity penalty, score) as JSON.");
  m.def("paired_bootstrap", &paired_bootstrap_py, py::arg("hyp_a"), py::arg("hyp_b"),
        py::arg("references"), py::arg("n_samples") = 1000, py::arg("seed") = 1,
        py::arg("name_a") = "a", py::arg("name_b") = "b",
        "Paired bootstrap significance test between two systems, as JSON.");
  m.def("apply_noise", &apply_noise_py, py::arg("tokens"), py::arg("p_drop") = 0.1,
        py::arg("p_blank") = 0.1, py::arg("shuffle_k") = 3, py::arg("seed") = 1,
        "One corruption sample: drops, blanks and a bounded local shuffle.");
  m.def("default_config", &default_config_py,
        "Reference experiment configuration as JSON.");
  m.def("run_experiment", &run_experiment_py, py::arg("config_json"),
        "Run the full strategy experiment; returns the JSON report.");
  m.def("run_experiment_csv", &run_experiment_csv_py, py::arg("config_json"),
        "Run the full strategy experiment; returns the CSV report.");
  m.def("gradient_max_rel_error", &gradient_max_rel_error_py, py::arg("seed") = 1,
        "Analytic-vs-finite-difference gradient discrepancy on a random draw.");
}
