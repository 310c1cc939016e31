"""Sequential baselines for the power distribution: SMC and twisted MC.

Both run many independent replicates ("runs") in lockstep; the single-run
functions are thin wrappers.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import DegeneracyError, InputError
from .mh import _require_exact, default_proposal
from .models import categorical, sample_tokens
from .rng import as_generator


def effective_sample_size(log_weights):
    """``(sum w)**2 / sum w**2`` of the normalized weights; always in ``[1, N]``.

    >>> float(effective_sample_size([0.0, 0.0, -np.inf, -np.inf]))
    2.0
    """
    lw = np.asarray(log_weights, dtype=float)
    top = lw.max(axis=-1, keepdims=True)
    if np.any(top == -np.inf):
        raise DegeneracyError("all log-weights are -inf")
    with np.errstate(divide="ignore"):
        ess = np.exp(2 * logsumexp(lw, axis=-1) - logsumexp(2 * lw, axis=-1))
    return np.clip(ess, 1.0, lw.shape[-1])


def _systematic(weights, u):
    # weights: (R, N) normalized rows; u: (R,) uniforms
    r, n = weights.shape
    cdf = np.cumsum(weights, axis=1)
    cdf[:, -1] = 1.0
    pos = (u[:, None] + np.arange(n)[None, :]) / n
    offset = np.arange(r)[:, None]
    idx = np.searchsorted((cdf + offset).ravel(), (pos + offset).ravel(), side="right")
    return np.minimum(idx.reshape(r, n) - offset * n, n - 1)


def resample_systematic(log_weights, rng):
    """Systematic resampling: ``N`` ancestor indices from one uniform offset.

    Particle ``i`` receives ``floor(N w_i)`` or ``ceil(N w_i)`` offspring.
    """
    lw = np.asarray(log_weights, dtype=float)
    w = np.exp(lw - logsumexp(lw))
    return _systematic(w[None, :], np.atleast_1d(rng.random()))[0]


def _normalize(lw):
    top = lw.max(axis=-1, keepdims=True)
    w = np.exp(lw - top)
    return w / w.sum(axis=-1, keepdims=True)


def smc_batch(base, proposal, alpha, T, n_particles, ess_threshold, rng, n_runs):
    """``n_runs`` independent SMC runs; returns ``(n_runs, T + 1)`` outputs.

    Each particle grows one token at a time from ``proposal``; its log-weight
    gains ``alpha * log p(x_t | x_<t) - log q(x_t | x_<t)``.  Runs whose
    ``ESS / N`` falls below ``ess_threshold`` are resampled systematically
    and their weights reset.  One particle per run is returned, drawn by the
    final normalized weights.
    """
    if n_particles < 1:
        raise InputError("n_particles must be >= 1")
    if not 0 <= ess_threshold <= 1:
        raise InputError("ess_threshold must lie in [0, 1]")
    _require_exact(base, proposal)
    rng = as_generator(rng)
    length = T + 1
    rn = n_runs * n_particles
    tokens = np.zeros((rn, length), dtype=np.int64)
    lw = np.zeros((n_runs, n_particles))
    rows = np.arange(rn)
    for t in range(length):
        q = proposal.next_dist_batch(tokens[:, :t])
        p = base.next_dist_batch(tokens[:, :t])
        tok = categorical(q, rng.random(rn))
        tokens[:, t] = tok
        with np.errstate(divide="ignore", invalid="ignore"):
            inc = alpha * np.log(p[rows, tok]) - np.log(q[rows, tok])
        lw = lw + np.where(np.isnan(inc), -np.inf, inc).reshape(n_runs, n_particles)
        dead = np.all(lw == -np.inf, axis=1)
        if dead.any():
            raise DegeneracyError(f"all particle weights vanished in run {int(np.argmax(dead))} "
                                  f"at position {t}")
        u = rng.random(n_runs)
        ess = effective_sample_size(lw)
        redo = np.flatnonzero(ess < ess_threshold * n_particles)
        if redo.size:
            anc = _systematic(_normalize(lw[redo]), u[redo])
            flat = (redo[:, None] * n_particles + anc).ravel()
            dest = (redo[:, None] * n_particles + np.arange(n_particles)[None, :]).ravel()
            tokens[dest] = tokens[flat]
            lw[redo] = 0.0
    pick = categorical(_normalize(lw), rng.random(n_runs))
    return tokens.reshape(n_runs, n_particles, length)[np.arange(n_runs), pick]


def smc_sample(base_model, proposal_model, alpha, T, N=64, ess_threshold=0.5, rng=None):
    """One SMC draw targeting the power distribution; see :func:`smc_batch`."""
    proposal_model = proposal_model or default_proposal(base_model, alpha)
    return smc_batch(base_model, proposal_model, alpha, T, N, ess_threshold, rng, 1)[0]


@dataclass(frozen=True)
class TmcParams:
    """Block length ``B``, candidates per block ``K``, rollouts per candidate ``M``."""

    B: int = 192
    K: int = 8
    M: int = 8
    selection: str = "softmax"

    def __post_init__(self):
        if min(self.B, self.K, self.M) < 1:
            raise InputError("B, K and M must all be >= 1")
        if self.selection not in ("softmax", "argmax"):
            raise InputError("selection must be 'softmax' or 'argmax'")


def tmc_batch(base, alpha, T, params, rng, n_runs, proposal=None):
    """Twisted Monte Carlo, ``n_runs`` replicates in lockstep.

    Generation proceeds in blocks of ``B`` tokens.  At each block ``K``
    candidate extensions are drawn from the proposal.  Each candidate's twist
    is an importance estimate of the future power mass,
    ``log mean_j exp(alpha * log p(f_j) - log q(f_j))`` over ``M`` rollouts
    ``f_j ~ q`` of length ``min(B, remaining)`` (zero when nothing remains).
    A candidate is then chosen by softmax (or argmax) of
    ``alpha * log p(block) - log q(block) + twist``.
    """
    proposal = proposal or default_proposal(base, alpha)
    _require_exact(base, proposal)
    rng = as_generator(rng)
    length = T + 1
    B, K, M = params.B, params.K, params.M
    tokens = np.zeros((n_runs, 0), dtype=np.int64)
    while tokens.shape[1] < length:
        start = tokens.shape[1]
        n_new = min(B, length - start)
        cand = np.repeat(tokens, K, axis=0)
        cand, _ = sample_tokens(proposal, cand, n_new, rng)
        score = _block_log_weight(base, proposal, cand, start, alpha)
        rest = min(B, length - start - n_new)
        if rest > 0:
            roll = np.repeat(cand, M, axis=0)
            roll, _ = sample_tokens(proposal, roll, rest, rng)
            lw = _block_log_weight(base, proposal, roll, cand.shape[1], alpha)
            with np.errstate(divide="ignore"):
                twist = logsumexp(lw.reshape(-1, M), axis=1) - np.log(M)
            score = score + twist
        score = score.reshape(n_runs, K)
        dead = np.all(score == -np.inf, axis=1)
        if dead.any():
            raise DegeneracyError(f"every candidate has zero twisted weight in run "
                                  f"{int(np.argmax(dead))} at position {start}")
        if params.selection == "argmax":
            pick = np.argmax(score, axis=1)
        else:
            pick = categorical(softmax(score, axis=1), rng.random(n_runs))
        tokens = cand.reshape(n_runs, K, -1)[np.arange(n_runs), pick]
    return tokens


def _block_log_weight(base, proposal, seqs, start, alpha):
    p = base.dists_along(seqs)[:, start:]
    q = proposal.dists_along(seqs)[:, start:]
    tok = seqs[:, start:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        lw = (alpha * np.log(np.take_along_axis(p, tok, -1)[..., 0])
              - np.log(np.take_along_axis(q, tok, -1)[..., 0])).sum(axis=1)
    return np.where(np.isnan(lw), -np.inf, lw)


def tmc_sample(base_model, alpha, T, params=TmcParams(), rng=None, proposal_model=None):
    """One TMC draw; see :func:`tmc_batch`."""
    return tmc_batch(base_model, alpha, T, params, rng, 1, proposal_model)[0]
