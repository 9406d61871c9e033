"""Unsupervised translation laboratory on synthetic language pairs.

Thin convenience layer over the compiled core: structured results cross the
boundary as JSON and are handed back as plain dicts.
"""

import json

from . import _core

__all__ = [
    "make_world",
    "oracle_translate",
    "generate_corpora",
    "bleu_score",
    "bleu_report",
    "paired_bootstrap",
    "apply_noise",
    "default_config",
    "run_experiment",
    "run_experiment_csv",
    "gradient_max_rel_error",
]


def _world_arg(world):
    return world if isinstance(world, str) else json.dumps(world)


def make_world(content=24, anchors=12, seed=1):
    """Generate a bilingual toy world (bijective lexicon plus shared anchors)."""
    return json.loads(_core.world_json(content, anchors, seed))


def oracle_translate(world, sentence, direction="l1_to_l2"):
    """Exact reference translation of a token list under a world."""
    return _core.oracle_translate(_world_arg(world), list(sentence), direction)


def generate_corpora(world, n_x, n_y, n_test, seed=1):
    """Disjoint monolingual corpora plus held-out reference pairs."""
    return json.loads(_core.generate_corpora(_world_arg(world), n_x, n_y, n_test, seed))


def bleu_score(hypotheses, references):
    """Corpus BLEU on the 0..100 scale."""
    return _core.bleu_score(hypotheses, references)


def bleu_report(hypotheses, references):
    """Full BLEU report: precisions, brevity penalty, lengths and score."""
    return json.loads(_core.bleu_report(hypotheses, references))


def paired_bootstrap(hyp_a, hyp_b, references, n_samples=1000, seed=1,
                     name_a="a", name_b="b"):
    """Paired bootstrap significance test between two hypothesis sets."""
    return json.loads(
        _core.paired_bootstrap(hyp_a, hyp_b, references, n_samples, seed, name_a, name_b)
    )


def apply_noise(tokens, p_drop=0.1, p_blank=0.1, shuffle_k=3, seed=1):
    """One corruption sample: token drops, blanks and a bounded local shuffle."""
    return _core.apply_noise(list(tokens), p_drop, p_blank, shuffle_k, seed)


def default_config():
    """Reference experiment configuration; edit fields and pass back in."""
    return json.loads(_core.default_config())


def run_experiment(config):
    """Run the strategy experiment described by a config dict; returns the report."""
    cfg = config if isinstance(config, str) else json.dumps(config)
    return json.loads(_core.run_experiment(cfg))


def run_experiment_csv(config):
    """Same as run_experiment, but returns the CSV report text."""
    cfg = config if isinstance(config, str) else json.dumps(config)
    return _core.run_experiment_csv(cfg)


def gradient_max_rel_error(seed=1):
    """Analytic-vs-finite-difference gradient discrepancy on a random draw."""
    return _core.gradient_max_rel_error(seed)
