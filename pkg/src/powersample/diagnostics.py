"""Sample-quality metrics: pass@k, suffix diversity and the decile-resampling probe."""

import itertools
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import InputError
from .models import entropy_jumps, entropy_profile, sample_autoregressive, sample_tokens
from .rng import as_generator


def pass_at_k(n, c, k, exact=False):
    """Unbiased pass@k from ``n`` attempts with ``c`` correct: ``1 - C(n-c, k) / C(n, k)``.

    Evaluated in exact rational arithmetic; ``exact=True`` returns the
    :class:`~fractions.Fraction` itself.

    >>> pass_at_k(5, 1, 2)
    0.4
    """
    if not (0 <= c <= n and 1 <= k <= n):
        raise InputError(f"need 0 <= c <= n and 1 <= k <= n, got n={n}, c={c}, k={k}")
    value = 1 - Fraction(math.comb(n - c, k), math.comb(n, k))
    return value if exact else float(value)


def levenshtein(a, b):
    """Token-level edit distance (unit insert, delete and substitute costs)."""
    a, b = list(a), list(b)
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def normalized_edit_distance(suffixes):
    """Mean pairwise Levenshtein distance divided by the mean suffix length."""
    suffixes = [list(np.asarray(s).tolist()) for s in suffixes]
    if len(suffixes) < 2:
        raise InputError("need at least two suffixes")
    mean_len = sum(map(len, suffixes)) / len(suffixes)
    if mean_len == 0:
        warnings.warn("all suffixes are empty; edit distance reported as 0", stacklevel=2)
        return 0.0
    # identical suffixes contribute zero, so only distinct pairs are computed
    counts = {}
    for s in suffixes:
        counts[tuple(s)] = counts.get(tuple(s), 0) + 1
    total = 0
    for (s, cs), (t, ct) in itertools.combinations(counts.items(), 2):
        total += cs * ct * levenshtein(s, t)
    n_pairs = len(suffixes) * (len(suffixes) - 1) / 2
    return total / n_pairs / mean_len


def distinct_answer_fraction(answers):
    """Number of distinct answers over the number of answers."""
    answers = list(answers)
    if not answers:
        raise InputError("need at least one answer")
    return len(set(answers)) / len(answers)


def final_token(seq):
    """Default answer extractor for synthetic sequences: the last token id."""
    return int(seq[-1])


@dataclass
class DecileGroup:
    positions: list
    edit_distance: list
    distinct_fraction: list

    @property
    def mean_edit_distance(self):
        return float(np.mean(self.edit_distance))

    @property
    def mean_distinct_fraction(self):
        return float(np.mean(self.distinct_fraction))

    def to_dict(self):
        return {"positions": self.positions, "edit_distance": self.edit_distance,
                "distinct_fraction": self.distinct_fraction,
                "mean_edit_distance": self.mean_edit_distance,
                "mean_distinct_fraction": self.mean_distinct_fraction}


@dataclass
class DecileReport:
    sequence: list
    jumps: list
    top: DecileGroup
    bottom: DecileGroup
    approximate: bool = False
    notes: list = field(default_factory=list)

    @property
    def verdict(self):
        t, b = self.top, self.bottom
        if max(t.mean_edit_distance, b.mean_edit_distance) == 0 and \
                t.mean_distinct_fraction == b.mean_distinct_fraction:
            return "degenerate"
        if (t.mean_edit_distance > b.mean_edit_distance
                and t.mean_distinct_fraction > b.mean_distinct_fraction):
            return "top-greater"
        return "not-ordered"

    def to_dict(self):
        return {"sequence": self.sequence, "jumps": self.jumps, "top": self.top.to_dict(),
                "bottom": self.bottom.to_dict(), "verdict": self.verdict,
                "approximate": self.approximate, "notes": self.notes}


def decile_resample_experiment(model, T, cut_count=5, resamples=16, rng=None, answer_fn=None):
    """Resample suffixes at high-jump and low-jump positions and compare diversity.

    One completion of ``T + 1`` tokens is drawn from ``model``.  Positions
    ``1..T`` are ranked by entropy jump (ties broken at random); up to
    ``cut_count`` positions are drawn from the top decile and from the bottom
    decile, a decile being ``ceil(T / 10)`` positions.  At each chosen
    position the suffix is redrawn ``resamples`` times from ``model`` and the
    redrawn suffixes are scored by normalized edit distance and by the
    fraction of distinct answers (``answer_fn`` of the full sequence, the
    final token by default).
    """
    if resamples < 2:
        raise InputError("resamples must be >= 2")
    if cut_count < 1:
        raise InputError("cut_count must be >= 1")
    if T < 2:
        raise InputError("need at least two candidate positions (T >= 2) to form deciles")
    rng = as_generator(rng)
    answer_fn = answer_fn or final_token
    seq = sample_autoregressive(model, T, rng)
    jumps = entropy_jumps(entropy_profile(model, seq))
    candidates = np.arange(1, T + 1)
    order = candidates[np.lexsort((rng.random(T), -jumps[1:]))]
    size = math.ceil(T / 10)
    groups = []
    for pool in (order[:size], order[::-1][:size]):
        chosen = np.sort(rng.choice(pool, size=min(cut_count, len(pool)), replace=False))
        dists, fracs = [], []
        for m in chosen:
            prefix = np.broadcast_to(seq[:m], (resamples, m))
            redrawn, _ = sample_tokens(model, prefix, T + 1 - m, rng)
            dists.append(normalized_edit_distance(redrawn[:, m:]))
            fracs.append(distinct_answer_fraction(answer_fn(r) for r in redrawn))
        groups.append(DecileGroup([int(m) for m in chosen], dists, fracs))
    notes = []
    if size < cut_count:
        notes.append(f"decile holds {size} positions; fewer than cut_count={cut_count} used")
    return DecileReport(seq.tolist(), jumps.tolist(), groups[0], groups[1],
                        bool(getattr(model, "approximate", False)), notes)
