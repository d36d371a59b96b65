import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from parity_distill.pcfg import (GenerationError, Grammar, MaskedSample, cfg3b, format_masked, length_percentiles,
                                 mask_sequence, parse_masked, read_corpus, sample_corpus, sample_lengths,
                                 sample_sentence, tree_log_prob, tree_yield, write_corpus, write_masked)


@pytest.fixture(scope="module")
def grammar():
    return cfg3b()


def test_cfg3b_rules(grammar):
    assert grammar.rule_count() == 32
    assert set(grammar.rules[22]) == {((21, 20), 0.5), ((20, 19), 0.5)}
    assert {b for b, _ in grammar.rules[9]} == {(3, 2, 1), (2, 1)}
    assert grammar.terminals == {1, 2, 3} and grammar.start == 22
    assert all(math.fsum(p for _, p in alts) == 1.0 for alts in grammar.rules.values())


def test_grammar_validation():
    with pytest.raises(ValueError):
        Grammar.from_rules({5: [(1,)]}, terminals=(1,), start=5, probabilities={5: [0.7]})
    with pytest.raises(ValueError):
        Grammar.from_rules({5: [(1, 9)]}, terminals=(1,), start=5)
    with pytest.raises(ValueError):
        Grammar.from_rules({5: [(1,)]}, terminals=(1,), start=1)
    with pytest.raises(ValueError):
        Grammar(frozenset({5, 6}), frozenset({1}), 5, {5: (((1,), 1.0),)})


def test_alphabet_and_depth(grammar):
    sents, logps, depths = sample_corpus(grammar, 10_000, np.random.default_rng(0))
    assert set(np.concatenate(sents).tolist()) <= {1, 2, 3}
    # six nonterminal tiers plus the terminal tier
    assert set(depths.tolist()) == {7}
    assert np.all(logps < 0)


def test_recursive_derivations_re_evaluate(grammar):
    rng = np.random.default_rng(1)
    for _ in range(200):
        der = sample_sentence(grammar, rng)
        assert tree_yield(der.tree) == der.tokens
        assert tree_log_prob(grammar, der.tree) == pytest.approx(der.log_prob, abs=1e-12)
        assert der.depth == 7


def test_tree_log_prob_rejects_foreign_tree(grammar):
    with pytest.raises(ValueError):
        tree_log_prob(grammar, (9, 1, (3, 2, 1)))


def test_batched_and_recursive_samplers_agree(grammar):
    a = np.array([len(s) for s in sample_corpus(grammar, 4000, np.random.default_rng(2))[0]])
    rng = np.random.default_rng(3)
    b = np.array([len(sample_sentence(grammar, rng).tokens) for _ in range(4000)])
    # standard error of each mean is about 0.6
    assert abs(a.mean() - b.mean()) < 3.0
    assert abs(a.std() - b.std()) < 3.0


def test_log_prob_counts_choices(grammar):
    sents, logps, _ = sample_corpus(grammar, 50, np.random.default_rng(4))
    choices = -logps / math.log(2)
    assert np.allclose(choices, np.round(choices))


def test_depth_guard():
    loop = Grammar.from_rules({5: [(5, 1), (1,)]}, terminals=(1,), start=5, probabilities={5: [1.0, 0.0]})
    with pytest.raises(GenerationError):
        sample_sentence(loop, np.random.default_rng(0), max_depth_guard=20)
    with pytest.raises(GenerationError):
        sample_corpus(loop, 3, np.random.default_rng(0), max_depth_guard=20)


def test_cyclic_grammar_lengths_fall_back_to_sampling():
    g = Grammar.from_rules({5: [(5, 1), (1,)]}, terminals=(1,), start=5)
    assert g.topological_order() is None
    lengths = sample_lengths(g, 4000, np.random.default_rng(0))
    assert lengths.min() >= 1 and lengths.mean() == pytest.approx(2.0, abs=0.15)


def test_single_rule_grammar():
    g = Grammar.from_rules({7: [(1, 2, 3)]}, terminals=(1, 2, 3), start=7)
    der = sample_sentence(g, np.random.default_rng(0))
    assert der.tokens == (1, 2, 3) and der.log_prob == 0.0
    assert length_percentiles(g, 100, np.random.default_rng(0)) == (3.0, 3.0, 3.0, 3.0)


def test_count_propagation_matches_sentence_lengths(grammar):
    a = sample_lengths(grammar, 20_000, np.random.default_rng(5))
    b = np.array([len(s) for s in sample_corpus(grammar, 20_000, np.random.default_rng(6))[0]])
    assert np.abs(np.percentile(a, [25, 50, 75, 95]) - np.percentile(b, [25, 50, 75, 95])).max() <= 4


def test_percentiles_deterministic(grammar):
    p = length_percentiles(grammar, 5000, np.random.default_rng(9))
    assert p == length_percentiles(grammar, 5000, np.random.default_rng(9))
    assert p[0] <= p[1] <= p[2] <= p[3]
    with pytest.raises(ValueError):
        length_percentiles(grammar, 50, np.random.default_rng(0))


# --- masking ---------------------------------------------------------------------------------

def test_masking_rates():
    rng = np.random.default_rng(0)
    s = mask_sequence(rng.integers(1, 4, size=1_000_000), 0.30, rng)
    assert abs(len(s.positions) / 1e6 - 0.30) < 0.002
    frac = np.bincount(s.kinds, minlength=3) / len(s.kinds)
    assert np.abs(frac - [0.8, 0.1, 0.1]).max() < 0.005


def test_masking_independence():
    rng = np.random.default_rng(1)
    n = 1_000_001
    sel = np.zeros(n)
    sel[mask_sequence(np.ones(n, dtype=int), 0.3, rng).positions] = 1
    assert abs(np.corrcoef(sel[:-1], sel[1:])[0, 1]) < 0.01


@given(st.lists(st.integers(1, 3), min_size=1, max_size=60), st.integers(0, 2**31 - 1))
def test_masking_invariants(seq, seed):
    s = mask_sequence(seq, 0.3, np.random.default_rng(seed))
    assert np.array_equal(s.original, seq)
    untouched = np.setdiff1d(np.arange(len(seq)), s.positions)
    assert np.array_equal(s.corrupted[untouched], s.original[untouched])
    assert np.array_equal(s.corrupted[s.positions[s.kinds == 2]], s.original[s.positions[s.kinds == 2]])
    assert np.all(s.corrupted[s.positions[s.kinds == 0]] == 0)
    assert set(s.corrupted[s.positions[s.kinds == 1]].tolist()) <= {1, 2, 3}
    assert np.all(np.diff(s.positions) > 0)


def test_tiny_fraction_selects_nothing():
    rng = np.random.default_rng(0)
    assert all(len(mask_sequence([1, 2, 3], 1e-9, rng).positions) == 0 for _ in range(1000))


def test_masking_errors():
    rng = np.random.default_rng(0)
    for frac in (0.0, 1.0):
        with pytest.raises(ValueError):
            mask_sequence([1, 2], frac, rng)
    with pytest.raises(ValueError):
        mask_sequence([], 0.3, rng)
    with pytest.raises(ValueError):
        mask_sequence([1, 2], 0.3, None)


# --- files -----------------------------------------------------------------------------------

def test_corpus_round_trip(grammar, tmp_path):
    sents = sample_corpus(grammar, 20, np.random.default_rng(0))[0]
    side = write_corpus(tmp_path / "c.txt", sents, {"seed": 0, "grammar": "cfg3b", "n": 20})
    back = read_corpus(tmp_path / "c.txt")
    assert all(np.array_equal(a, b) for a, b in zip(sents, back)) and len(back) == 20
    assert json.loads(side.read_text())["grammar"] == "cfg3b"
    assert b"\r" not in (tmp_path / "c.txt").read_bytes()


def test_masked_line_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    samples = [mask_sequence(rng.integers(1, 4, size=30), 0.3, rng) for _ in range(5)]
    write_masked(tmp_path / "m.tsv", samples)
    lines = (tmp_path / "m.tsv").read_text().splitlines()
    for s, line in zip(samples, lines):
        assert line.count("\t") == 2
        back = parse_masked(line)
        for a, b in zip(s, back):
            assert np.array_equal(a, b)


def test_empty_selection_formats():
    s = MaskedSample(np.array([1, 2]), np.array([], dtype=int), np.array([1, 2]), np.array([], dtype=int))
    line = format_masked(s)
    assert line == "1 2\t1 2\t"
    assert len(parse_masked(line).positions) == 0
