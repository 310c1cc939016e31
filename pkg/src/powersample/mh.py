"""Stagewise Metropolis-Hastings over token sequences.

The chain targets the power distribution ``Pi_l(x) ∝ p(x)**alpha`` at each
stage length ``l``.  One step draws a cut ``m ~ lambda(.; x)``, keeps
``x[:m]``, redraws ``x[m:]`` from the proposal model and accepts with

    min(1, (p(x')/p(x))**alpha * lambda(m; x')/lambda(m; x)
           * q(x[m:] | x[:m]) / q(x'[m:] | x[:m]))

evaluated in log space.  The engine is batched: a :class:`ChainState` holds
``n`` independent chains as ``(n, l + 1)`` arrays, and a single chain is the
``n = 1`` case.  Per-position base/proposal log-probabilities, base entropies
and cut weights are cached on the state and replaced only on acceptance.
"""

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .cuts import EntropyCut, UniformCut, sample_cut
from .errors import CapabilityError, InputError, ValidationError
from .models import (LowTemperatureModel, categorical, entropies, low_temperature_model,
                     sample_tokens, token_logprobs)
from .rng import as_generator


@dataclass(frozen=True)
class StageConfig:
    """Hyperparameters of the stagewise sampler.

    ``T`` is the final position index (sequences have ``T + 1`` tokens),
    ``B`` the block size, ``n_mcmc`` the MH steps per stage and ``alpha``
    the sharpening power.  ``alpha = 1`` is allowed (the target is then the
    base model itself).
    """

    T: int = 3072
    B: int = 192
    n_mcmc: int = 10
    alpha: float = 4.0

    def __post_init__(self):
        if self.T < 0:
            raise InputError("T must be >= 0")
        if self.B < 1:
            raise InputError("block size B must be >= 1")
        if self.n_mcmc < 0:
            raise InputError("n_mcmc must be >= 0")
        if not self.alpha >= 1:
            raise InputError("alpha must be >= 1")

    @property
    def n_stages(self):
        return max(1, math.ceil(self.T / self.B))

    def stage_length(self, k):
        """Target position index ``T_k`` of stage ``k`` (1-based)."""
        return min(k * self.B, self.T)


def default_proposal(base, alpha):
    """Low-temperature proposal at temperature ``1/alpha``."""
    return low_temperature_model(base, alpha)


def _require_exact(*models):
    for model in models:
        if getattr(model, "approximate", False):
            raise CapabilityError(
                "acceptance ratios need exact log-probabilities; the model only serves "
                "approximate (top-k) distributions")


def _score(base, proposal, tokens):
    if (isinstance(proposal, LowTemperatureModel) and proposal.base is base
            and proposal._table is None):
        base_d = base.dists_along(tokens)
        return (token_logprobs(base_d, tokens),
                token_logprobs(proposal._sharpen(base_d), tokens), entropies(base_d))
    base_logp, h = base.token_stats(tokens)
    prop_logp, _ = proposal.token_stats(tokens)
    return base_logp, prop_logp, h


@dataclass
class ChainState:
    """``n`` chains at a common length with their cached per-position values."""

    tokens: np.ndarray
    base_logp: np.ndarray
    prop_logp: np.ndarray
    entropy: np.ndarray
    cut_weights: np.ndarray
    stage: int = 1

    @classmethod
    def from_tokens(cls, tokens, base, proposal, cut_law, stage=1):
        tokens = np.atleast_2d(np.asarray(tokens, dtype=np.int64))
        base_logp, prop_logp, h = _score(base, proposal, tokens)
        return cls(tokens, base_logp, prop_logp, h, cut_law.weights_from_entropy(h), stage)

    @property
    def n_chains(self):
        return self.tokens.shape[0]

    @property
    def length(self):
        return self.tokens.shape[1]

    @property
    def logp(self):
        return self.base_logp.sum(axis=1)

    @property
    def seq(self):
        if self.n_chains != 1:
            raise InputError("seq is only defined for a single chain")
        return self.tokens[0]


@dataclass
class Proposal:
    """Batched proposal; acceptance fields are filled by :func:`mh_step`."""

    cut: np.ndarray
    tokens: np.ndarray
    base_logp: np.ndarray
    prop_logp: np.ndarray
    entropy: np.ndarray
    cut_weights: np.ndarray
    accept_prob: np.ndarray = None
    accepted: np.ndarray = None
    log_target_ratio: np.ndarray = None
    log_cut_ratio: np.ndarray = None
    log_proposal_ratio: np.ndarray = None


@dataclass(frozen=True)
class ProposalRecord:
    """One MH step of one chain."""

    stage: int
    step: int
    m: int
    proposed: tuple
    accept_prob: float
    accepted: bool
    log_target_ratio: float
    log_cut_ratio: float
    log_proposal_ratio: float
    logp_base_old: float
    logp_base_new: float


def propose(state, cut_law, proposal_model, rng, base_model):
    """Draw a cut per chain and redraw every suffix from ``proposal_model``.

    Random draws per call are a fixed ``n * (length + 1)`` uniforms, so the
    stream position never depends on the realized cuts.
    """
    n, length = state.tokens.shape
    m = sample_cut(state.cut_weights, rng)
    u = rng.random((n, length))
    tokens = state.tokens.copy()
    for t in range(int(m.min(initial=length)), length):
        active = np.flatnonzero(m <= t)
        if active.size == 0:
            continue
        dist = proposal_model.next_dist_batch(tokens[active, :t])
        tokens[active, t] = categorical(dist, u[active, t])
    base_logp, prop_logp, h = _score(base_model, proposal_model, tokens)
    return Proposal(m, tokens, base_logp, prop_logp, h, cut_law.weights_from_entropy(h))


def _log_acceptance(state, prop, alpha):
    n, length = state.tokens.shape
    rows = np.arange(n)
    suffix = np.arange(length)[None, :] >= prop.cut[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        lp_new = np.where(suffix, prop.base_logp, 0.0).sum(axis=1)
        lp_old = np.where(suffix, state.base_logp, 0.0).sum(axis=1)
        log_target = alpha * (lp_new - lp_old)
        log_cut = (np.log(prop.cut_weights[rows, prop.cut])
                   - np.log(state.cut_weights[rows, prop.cut]))
        log_prop = (np.where(suffix, state.prop_logp, 0.0).sum(axis=1)
                    - np.where(suffix, prop.prop_logp, 0.0).sum(axis=1))
        log_ratio = log_target + log_cut + log_prop
    log_ratio = np.where(np.isnan(log_ratio), -np.inf, log_ratio)
    same = (prop.tokens == state.tokens).all(axis=1)
    log_ratio = np.where(same, 0.0, log_ratio)
    return log_ratio, log_target, log_cut, log_prop


def mh_step(state, cut_law, proposal_model, alpha, rng, base_model):
    """One MH transition for every chain in ``state``.

    Returns the new state and the :class:`Proposal` annotated with
    acceptance probabilities and decisions.
    """
    prop = propose(state, cut_law, proposal_model, rng, base_model)
    log_ratio, lt, lc, lq = _log_acceptance(state, prop, alpha)
    a = np.exp(np.minimum(log_ratio, 0.0))
    accepted = rng.random(state.n_chains) < a
    prop.accept_prob, prop.accepted = a, accepted
    prop.log_target_ratio, prop.log_cut_ratio, prop.log_proposal_ratio = lt, lc, lq
    if not accepted.any():
        return state, prop
    keep = accepted[:, None]
    new = ChainState(
        np.where(keep, prop.tokens, state.tokens),
        np.where(keep, prop.base_logp, state.base_logp),
        np.where(keep, prop.prop_logp, state.prop_logp),
        np.where(keep, prop.entropy, state.entropy),
        np.where(keep, prop.cut_weights, state.cut_weights),
        state.stage,
    )
    return new, prop


def acceptance_probability(current, proposed, m, cut_law, proposal_model, alpha, base_model):
    """Acceptance probability of moving ``current -> proposed`` through cut ``m``.

    Scalar reference path used by the exact kernel; it shares no code with
    the batched engine beyond the model and cut-law contracts.
    """
    x = np.asarray(current, dtype=np.int64)
    y = np.asarray(proposed, dtype=np.int64)
    if x.shape != y.shape or not 0 <= m < len(x):
        raise InputError("sequences must have equal length and 0 <= m < length")
    if not np.array_equal(x[:m], y[:m]):
        raise InputError("proposed sequence must share the prefix before the cut")
    if np.array_equal(x, y):
        return 1.0
    lam_x = cut_law.weights(x, base_model)[m]
    lam_y = cut_law.weights(y, base_model)[m]
    if lam_x == 0:
        raise ValidationError(f"cut {m} has zero mass under the current state")
    with np.errstate(divide="ignore"):
        px = np.log(_picked(base_model, x))
        py = np.log(_picked(base_model, y))
        qx = np.log(_picked(proposal_model, x)[m:]).sum()
        qy = np.log(_picked(proposal_model, y)[m:]).sum()
    if qy == -np.inf:
        raise ValidationError("proposed suffix has zero proposal mass")
    if lam_y == 0 or qx == -np.inf or py[m:].sum() == -np.inf:
        return 0.0
    log_ratio = (alpha * (py[m:].sum() - px[m:].sum())
                 + math.log(lam_y) - math.log(lam_x) + qx - qy)
    return float(min(1.0, math.exp(min(log_ratio, 0.0))))


def _picked(model, seq):
    return np.array([model.next_dist(tuple(seq[:t].tolist()))[seq[t]] for t in range(len(seq))])


def seq_hash(tokens):
    return hashlib.sha1(np.ascontiguousarray(tokens, dtype=np.int64).tobytes()).hexdigest()[:16]


@dataclass
class ChainRun:
    """Final sequences of ``n`` chains plus an optional per-step trace."""

    tokens: np.ndarray
    n_steps: int = 0
    n_accepted: np.ndarray = None
    trace: list = field(default_factory=list)

    @property
    def acceptance_rate(self):
        if self.n_steps == 0:
            return float("nan")
        return float(self.n_accepted.sum() / (self.n_steps * len(self.tokens)))


def run_chains(base, proposal, cut_law, config, rng, n_chains, init=None, record=False):
    """Run ``n_chains`` independent stagewise MH chains in lockstep.

    Parameters
    ----------
    init : array_like, optional
        Starting sequence(s) for the first stage, replacing the proposal draw.
        Must have ``T_1 + 1`` tokens.
    record : bool
        Keep a per-step trace (a list of dicts of per-chain arrays).
    """
    _require_exact(base, proposal)
    rng = as_generator(rng)
    tokens = np.zeros((n_chains, 0), dtype=np.int64)
    n_acc = np.zeros(n_chains, dtype=np.int64)
    steps = 0
    trace = []
    prev_len = 0
    for k in range(1, config.n_stages + 1):
        target_len = config.stage_length(k) + 1
        if k == 1 and init is not None:
            tokens = np.broadcast_to(np.atleast_2d(np.asarray(init, dtype=np.int64)),
                                     (n_chains, target_len)).copy()
        else:
            tokens, _ = sample_tokens(proposal, tokens, target_len - prev_len, rng)
        prev_len = target_len
        state = ChainState.from_tokens(tokens, base, proposal, cut_law, stage=k)
        for step in range(config.n_mcmc):
            old_logp = state.logp
            state, prop = mh_step(state, cut_law, proposal, config.alpha, rng, base)
            n_acc += prop.accepted
            steps += 1
            if record:
                trace.append({
                    "stage": k, "step": step, "m": prop.cut.copy(),
                    "A": prop.accept_prob, "accepted": prop.accepted,
                    "logp_base_old": old_logp, "logp_base_new": prop.base_logp.sum(axis=1),
                    "proposed": prop.tokens, "log_target_ratio": prop.log_target_ratio,
                    "log_cut_ratio": prop.log_cut_ratio,
                    "log_proposal_ratio": prop.log_proposal_ratio,
                    "state": state.tokens,
                })
        tokens = state.tokens
        _require_exact(base, proposal)
    return ChainRun(tokens, steps, n_acc, trace)


def run_stagewise(base_model, proposal_model, cut_law, config, rng=None, init=None):
    """Single-chain stagewise MH; returns ``(sequence, [ProposalRecord, ...])``."""
    run = run_chains(base_model, proposal_model, cut_law, config, rng, 1, init=init, record=True)
    records = [ProposalRecord(
        stage=s["stage"], step=s["step"], m=int(s["m"][0]),
        proposed=tuple(s["proposed"][0].tolist()),
        accept_prob=float(s["A"][0]), accepted=bool(s["accepted"][0]),
        log_target_ratio=float(s["log_target_ratio"][0]),
        log_cut_ratio=float(s["log_cut_ratio"][0]),
        log_proposal_ratio=float(s["log_proposal_ratio"][0]),
        logp_base_old=float(s["logp_base_old"][0]),
        logp_base_new=float(s["logp_base_new"][0]),
    ) for s in run.trace]
    return run.tokens[0], records


def entropy_cut_mh(base_model, config, beta=4.0, eps=0.0, proposal_model=None, rng=None):
    """Entropy-cut stagewise MH with the low-temperature proposal by default."""
    proposal_model = proposal_model or default_proposal(base_model, config.alpha)
    return run_stagewise(base_model, proposal_model, EntropyCut(beta, eps), config, rng)


def uniform_cut_mh(base_model, config, proposal_model=None, rng=None):
    """Uniform-cut stagewise MH with the low-temperature proposal by default."""
    proposal_model = proposal_model or default_proposal(base_model, config.alpha)
    return run_stagewise(base_model, proposal_model, UniformCut(), config, rng)
