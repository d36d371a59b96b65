"""Probabilistic context-free grammars, the cfg3b instance, and masked-token corruption."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

MASK_TOKEN = 0
KINDS = ("mask", "random", "unchanged")


class GenerationError(RuntimeError):
    """A derivation exceeded the depth guard."""


@dataclass(frozen=True)
class Grammar:
    """rules maps each nonterminal to a tuple of (body, probability) pairs."""

    nonterminals: frozenset
    terminals: frozenset
    start: int
    rules: dict
    name: str = "custom"

    def __post_init__(self):
        if self.nonterminals & self.terminals:
            raise ValueError("terminals and nonterminals overlap")
        if self.start not in self.nonterminals:
            raise ValueError("start symbol must be a nonterminal")
        symbols = self.nonterminals | self.terminals
        for head in self.nonterminals:
            alts = self.rules.get(head)
            if not alts:
                raise ValueError(f"nonterminal {head} has no rules")
            if abs(math.fsum(p for _, p in alts) - 1.0) > 1e-12:
                raise ValueError(f"rule probabilities for {head} do not sum to 1")
            for body, p in alts:
                if not 0.0 <= p <= 1.0:
                    raise ValueError(f"probability {p} outside [0, 1]")
                if not body or any(s not in symbols for s in body):
                    raise ValueError(f"rule {head} -> {body} uses unknown symbols")
        if set(self.rules) - set(self.nonterminals):
            raise ValueError("rules given for undeclared heads")

    @classmethod
    def from_rules(cls, rules: dict, terminals: Sequence[int], start: int, name: str = "custom",
                   probabilities: dict | None = None) -> "Grammar":
        """``rules``: head -> list of bodies.  Probabilities default to uniform per head."""
        table = {}
        for head, bodies in rules.items():
            ps = probabilities[head] if probabilities else [1.0 / len(bodies)] * len(bodies)
            table[head] = tuple((tuple(b), float(p)) for b, p in zip(bodies, ps))
        return cls(frozenset(rules), frozenset(terminals), start, table, name)

    def rule_count(self) -> int:
        return sum(len(v) for v in self.rules.values())

    def topological_order(self) -> list[int] | None:
        """Nonterminals with every head before the nonterminals it produces; None if cyclic."""
        order, state = [], {}

        def visit(a):
            if state.get(a) == 1:
                raise ValueError
            if state.get(a) == 2:
                return
            state[a] = 1
            for body, _ in self.rules[a]:
                for s in body:
                    if s in self.nonterminals:
                        visit(s)
            state[a] = 2
            order.append(a)

        try:
            for a in sorted(self.nonterminals):
                visit(a)
        except ValueError:
            return None
        return order[::-1]


_CFG3B = {
    22: [(21, 20), (20, 19)],
    19: [(16, 17, 18), (17, 18, 16)],
    20: [(17, 16, 18), (16, 17)],
    21: [(18, 16), (16, 18, 17)],
    16: [(15, 13), (13, 15, 14)],
    17: [(14, 13, 15), (15, 13, 14)],
    18: [(15, 14, 13), (14, 13)],
    13: [(11, 12), (12, 11)],
    14: [(11, 10, 12), (10, 11, 12)],
    15: [(12, 11, 10), (11, 12, 10)],
    10: [(7, 9, 8), (9, 8, 7)],
    11: [(8, 7, 9), (7, 8, 9)],
    12: [(8, 9, 7), (9, 7, 8)],
    7: [(3, 1), (1, 2, 3)],
    8: [(3, 2), (3, 1, 2)],
    9: [(3, 2, 1), (2, 1)],
}


def cfg3b() -> Grammar:
    """The 32-rule cfg3b grammar over {1, 2, 3}, start symbol 22.

    Rule probabilities are not part of the published listing; each head's two
    alternatives are taken as equally likely.
    """
    return Grammar.from_rules(_CFG3B, terminals=(1, 2, 3), start=22, name="cfg3b")


# ----------------------------------------------------------------------------
# sampling


class Derivation(NamedTuple):
    tokens: tuple
    log_prob: float
    tree: tuple  # (symbol, rule index, children) for nonterminals; terminals are bare ints
    depth: int  # symbol tiers from the root to the deepest leaf, both included


def tree_yield(tree) -> tuple:
    """Terminal string produced by a derivation tree."""
    if not isinstance(tree, tuple):
        return (tree,)
    out = []
    for child in tree[2]:
        out.extend(tree_yield(child))
    return tuple(out)


def tree_log_prob(grammar: Grammar, tree) -> float:
    if not isinstance(tree, tuple):
        return 0.0
    sym, idx, children = tree
    body, p = grammar.rules[sym][idx]
    if tuple(c[0] if isinstance(c, tuple) else c for c in children) != body:
        raise ValueError("tree does not follow the grammar")
    return math.log(p) + sum(tree_log_prob(grammar, c) for c in children)


def sample_sentence(grammar: Grammar, rng: np.random.Generator, max_depth_guard: int = 64) -> Derivation:
    """Leftmost derivation from the start symbol, with its tree and log-probability."""
    logp = 0.0
    deepest = 0

    def expand(sym, depth):
        nonlocal logp, deepest
        if sym in grammar.terminals:
            deepest = max(deepest, depth)
            return sym
        if depth >= max_depth_guard:
            raise GenerationError(f"derivation deeper than {max_depth_guard}")
        alts = grammar.rules[sym]
        if len(alts) == 1:
            idx = 0
        else:
            idx = int(rng.choice(len(alts), p=[p for _, p in alts]))
        body, p = alts[idx]
        logp += math.log(p)
        return (sym, idx, tuple(expand(s, depth + 1) for s in body))

    tree = expand(grammar.start, 1)
    return Derivation(tree_yield(tree), logp, tree, deepest)


class _Tables:
    """Padded rule tables indexed by symbol id; terminals rewrite to themselves."""

    def __init__(self, grammar: Grammar):
        syms = sorted(grammar.nonterminals | grammar.terminals)
        size = max(syms) + 1
        nrule = max(len(v) for v in grammar.rules.values())
        width = max(len(b) for v in grammar.rules.values() for b, _ in v)
        self.body = np.zeros((size, nrule, width), dtype=np.int64)
        self.length = np.ones((size, nrule), dtype=np.int64)
        self.cum = np.ones((size, nrule))
        self.logp = np.zeros((size, nrule))
        self.is_term = np.zeros(size, dtype=bool)
        for t in grammar.terminals:
            self.body[t, :, 0] = t
            self.is_term[t] = True
        for head, alts in grammar.rules.items():
            c = np.cumsum([p for _, p in alts])
            c[-1] = 1.0
            self.cum[head, :] = 1.0
            self.cum[head, :len(alts)] = c
            for r, (b, p) in enumerate(alts):
                self.body[head, r, :len(b)] = b
                self.length[head, r] = len(b)
                self.logp[head, r] = math.log(p) if p > 0 else -math.inf


def sample_corpus(grammar: Grammar, n: int, rng: np.random.Generator, batch: int = 2048,
                  max_depth_guard: int = 64) -> tuple[list[np.ndarray], np.ndarray, np.ndarray]:
    """n sentences expanded breadth-first in batches.

    Returns (sentences, log_probs, depths).  Rule choices are independent, so
    the expansion order does not change the distribution.
    """
    tab = _Tables(grammar)
    sentences, logps, depths = [], [], []
    for s in range(0, n, batch):
        nb = min(batch, n - s)
        syms = np.full(nb, grammar.start, dtype=np.int64)
        owner = np.arange(nb)
        lp = np.zeros(nb)
        depth = np.ones(nb, dtype=np.int64)
        level = 1
        while not tab.is_term[syms].all():
            if level >= max_depth_guard:
                raise GenerationError(f"derivation deeper than {max_depth_guard}")
            live = ~tab.is_term[syms]
            u = rng.random(syms.shape[0])
            choice = (u[:, None] >= tab.cum[syms]).sum(axis=1)
            choice = np.minimum(choice, tab.cum.shape[1] - 1)
            choice[~live] = 0
            np.add.at(lp, owner[live], tab.logp[syms[live], choice[live]])
            level += 1
            depth[np.unique(owner[live])] = level
            lens = tab.length[syms, choice]
            bodies = tab.body[syms, choice]
            keep = np.arange(bodies.shape[1])[None, :] < lens[:, None]
            syms = bodies[keep]
            owner = np.repeat(owner, lens)
        bounds = np.searchsorted(owner, np.arange(nb + 1))
        sentences.extend(syms[bounds[i]:bounds[i + 1]].copy() for i in range(nb))
        logps.append(lp)
        depths.append(depth)
    return sentences, np.concatenate(logps), np.concatenate(depths)


def sample_lengths(grammar: Grammar, n: int, rng: np.random.Generator) -> np.ndarray:
    """Sentence lengths only, by propagating symbol counts down an acyclic grammar.

    Each head's count is split among its rules multinomially, so lengths have
    the same distribution as those of sampled sentences.
    """
    order = grammar.topological_order()
    if order is None:
        return np.array([len(t) for t in sample_corpus(grammar, n, rng)[0]])
    counts = {a: np.zeros(n, dtype=np.int64) for a in grammar.nonterminals}
    counts[grammar.start][:] = 1
    length = np.zeros(n, dtype=np.int64)
    for head in order:
        c = counts[head]
        alts = grammar.rules[head]
        split = rng.multinomial(c, [p for _, p in alts]) if len(alts) > 1 else c[:, None]
        for r, (body, _) in enumerate(alts):
            for sym in body:
                if sym in grammar.terminals:
                    length += split[:, r]
                else:
                    counts[sym] += split[:, r]
    return length


def length_percentiles(grammar: Grammar, n_samples: int, rng: np.random.Generator) -> tuple[float, ...]:
    """(p25, p50, p75, p95) of sentence length."""
    if n_samples < 100:
        raise ValueError("need at least 100 samples")
    lengths = sample_lengths(grammar, n_samples, rng)
    return tuple(float(v) for v in np.percentile(lengths, [25, 50, 75, 95]))


# ----------------------------------------------------------------------------
# masking


class MaskedSample(NamedTuple):
    original: np.ndarray
    positions: np.ndarray  # selected indices, ascending
    corrupted: np.ndarray
    kinds: np.ndarray  # per selected position: 0 mask, 1 random, 2 unchanged

    def kind_names(self) -> list[str]:
        return [KINDS[k] for k in self.kinds]


def mask_sequence(seq, mask_fraction: float = 0.30, rng: np.random.Generator | None = None,
                  vocab: Sequence[int] = (1, 2, 3), mask_token: int = MASK_TOKEN,
                  split: tuple[float, float, float] = (0.8, 0.1, 0.1)) -> MaskedSample:
    """Select each position independently with probability ``mask_fraction``;
    replace a selected token by the mask token, a uniform vocabulary draw, or
    leave it, with probabilities ``split``."""
    if not 0.0 < mask_fraction < 1.0:
        raise ValueError("mask_fraction must lie in (0, 1)")
    if rng is None:
        raise ValueError("an rng is required")
    seq = np.asarray(seq, dtype=np.int64)
    if seq.size == 0:
        raise ValueError("empty sequence")
    selected = np.flatnonzero(rng.random(seq.size) < mask_fraction)
    kinds = np.searchsorted(np.cumsum(split)[:-1], rng.random(selected.size), side="right")
    randoms = np.asarray(vocab, dtype=np.int64)[rng.integers(0, len(vocab), size=selected.size)]
    out = seq.copy()
    out[selected[kinds == 0]] = mask_token
    out[selected[kinds == 1]] = randoms[kinds == 1]
    return MaskedSample(seq, selected, out, kinds.astype(np.int64))


# ----------------------------------------------------------------------------
# files


def write_corpus(path, sentences, meta: dict) -> Path:
    """One sentence per line, whitespace-separated; metadata beside it as JSON."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in sentences:
            fh.write(" ".join(map(str, s)))
            fh.write("\n")
    side = path.with_name(path.name + ".meta.json")
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")
    return side


def read_corpus(path) -> list[np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        return [np.array(line.split(), dtype=np.int64) for line in fh if line.strip()]


def format_masked(sample: MaskedSample) -> str:
    pairs = ",".join(f"{p}:{KINDS[k]}" for p, k in zip(sample.positions, sample.kinds))
    return " ".join(map(str, sample.original)) + "\t" + " ".join(map(str, sample.corrupted)) + "\t" + pairs


def parse_masked(line: str) -> MaskedSample:
    orig, corr, pairs = line.rstrip("\n").split("\t")
    pos, kinds = [], []
    for item in filter(None, pairs.split(",")):
        p, k = item.split(":")
        pos.append(int(p))
        kinds.append(KINDS.index(k))
    return MaskedSample(np.array(orig.split(), dtype=np.int64), np.array(pos, dtype=np.int64),
                        np.array(corr.split(), dtype=np.int64), np.array(kinds, dtype=np.int64))


def write_masked(path, samples: Sequence[MaskedSample]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            fh.write(format_masked(s) + "\n")
