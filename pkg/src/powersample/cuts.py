"""Cut laws: state-dependent distributions over resampling positions.

A cut at position ``m`` keeps ``x[:m]`` and redraws ``x[m:]``.  Admissible
cuts are ``m = 0, ..., l`` for a sequence ``x_{0:l}``; ``m = 0`` redraws the
whole continuation and the empty redraw ``m = l + 1`` is excluded.

Entropy profiles used here are always those of the *base* model, never the
proposal.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .models import entropies, entropy_jumps


def uniform_cut_weights(seq_len):
    """Uniform weights over the ``seq_len`` admissible cut positions."""
    if seq_len < 1:
        raise InputError("seq_len must be >= 1")
    return np.full(seq_len, 1.0 / seq_len)


def entropy_cut_weights(profile, beta, eps=0.0):
    """Cut weights proportional to ``jump**beta + eps``.

    ``profile`` is one entropy profile or a stack of them (last axis is
    position).  Rows whose weights are all zero fall back to uniform.  With
    ``0**0 = 1``, ``beta = 0`` reproduces the uniform law bitwise.
    """
    if beta < 0 or eps < 0:
        raise InputError("beta and eps must be >= 0")
    w = entropy_jumps(profile) ** beta + eps
    total = w.sum(axis=-1, keepdims=True)
    flat = (total == 0.0)
    if flat.any():
        w = np.where(flat, 1.0, w)
        total = w.sum(axis=-1, keepdims=True)
    return w / total


class CutLaw:
    """Base class; subclasses implement :meth:`weights_from_entropy`."""

    name = "cut-law"

    def weights_from_entropy(self, entropy):
        """Weights for sequences whose base-model entropy profiles are ``entropy``."""
        raise NotImplementedError

    def weights(self, seq, model):
        """Cut weights for a single sequence under base ``model``."""
        seq = np.asarray(seq, dtype=np.int64)
        h = entropies(model.dists_along(seq[None, :]))
        return self.weights_from_entropy(h)[0]


class UniformCut(CutLaw):
    name = "uniform-cut"

    def weights_from_entropy(self, entropy):
        entropy = np.asarray(entropy)
        return np.broadcast_to(uniform_cut_weights(entropy.shape[-1]), entropy.shape).copy()

    def __repr__(self):
        return "UniformCut()"


@dataclass(frozen=True)
class EntropyCut(CutLaw):
    """Entropy-cut law with cut power ``beta`` and uniform floor ``eps``."""

    beta: float = 4.0
    eps: float = 0.0
    name = "entropy-cut"

    def __post_init__(self):
        if self.beta < 0 or self.eps < 0:
            raise InputError("beta and eps must be >= 0")

    def weights_from_entropy(self, entropy):
        return entropy_cut_weights(entropy, self.beta, self.eps)


def sample_cut(weights, rng):
    """Draw cut positions from ``weights`` (one row or a stack of rows)."""
    weights = np.asarray(weights, dtype=float)
    if weights.ndim == 1:
        return int(sample_cut(weights[None, :], rng)[0])
    u = rng.random(weights.shape[0])
    cdf = np.cumsum(weights, axis=-1)
    return (cdf <= (u * cdf[:, -1])[:, None]).sum(axis=-1)
