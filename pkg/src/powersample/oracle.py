"""Brute-force ground truth for desk-scale models.

Exact power distributions by enumeration, exact one-step MH kernels over the
target's support, and the chain analytics built on them (mixing time,
conductance, minorization, the proposal-imbalance constant).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import BudgetExceeded, InputError, ValidationError
from .mh import acceptance_probability
from .models import TabularModel, TokenModel, low_temperature_model

DEFAULT_ENUMERATION_BUDGET = 10**7
DEFAULT_KERNEL_STATES = 4096
DEFAULT_STEP_BUDGET = 10**6


@dataclass
class ExactDistribution:
    """Probability table over complete sequences.

    ``sequences`` is ``(n, L)``; ``probs`` sums to one.  ``log_z`` is the log
    normalizer ``log sum p(x)**alpha`` when the table came from enumeration.
    """

    sequences: np.ndarray
    probs: np.ndarray
    log_z: float = 0.0
    alpha: float = 1.0

    @property
    def z(self):
        return math.exp(self.log_z)

    def as_dict(self):
        return {tuple(s.tolist()): float(p) for s, p in zip(self.sequences, self.probs)}

    def prob(self, seq):
        return self.as_dict().get(tuple(int(v) for v in seq), 0.0)

    def event(self, predicate):
        """Total mass of sequences satisfying ``predicate(seq)``."""
        return float(sum(p for s, p in zip(self.sequences, self.probs) if predicate(s)))

    def to_tabular(self, vocab_size):
        """The same law written as an autoregressive table of conditionals."""
        mass = {}
        for seq, p in zip(self.sequences, self.probs):
            seq = tuple(seq.tolist())
            for t in range(len(seq) + 1):
                mass[seq[:t]] = mass.get(seq[:t], 0.0) + p
        depth = self.sequences.shape[1] - 1
        rows = {}
        for prefix, total in mass.items():
            if len(prefix) > depth or total <= 0:
                continue
            row = np.array([mass.get(prefix + (v,), 0.0) for v in range(vocab_size)])
            rows[prefix] = row / row.sum()
        return TabularModel(vocab_size, depth, rows, metadata={"kind": "exact-distribution",
                                                               "alpha": self.alpha})


def empirical_distribution(samples):
    """Empirical law of the rows of ``samples``."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.int64))
    seqs, counts = np.unique(samples, axis=0, return_counts=True)
    return ExactDistribution(seqs, counts / counts.sum())


def _support(model, T, budget):
    if T < 0:
        raise InputError("T must be >= 0")
    seqs = np.zeros((1, 0), dtype=np.int64)
    logp = np.zeros(1)
    bound = model.vocab_size ** (T + 1)
    for _ in range(T + 1):
        dist = model.next_dist_batch(seqs)
        rows, toks = np.nonzero(dist > 0)
        if rows.size > budget:
            raise BudgetExceeded(
                f"support exceeds the enumeration budget of {budget} sequences "
                f"(at most {bound} needed)", required=bound, budget=budget)
        seqs = np.hstack([seqs[rows], toks[:, None]])
        logp = logp[rows] + np.log(dist[rows, toks])
    return seqs, logp


def enumerate_power_distribution(model, T, alpha, budget=DEFAULT_ENUMERATION_BUDGET):
    """Exact ``Pi_T ∝ p**alpha`` over all supported length-``T + 1`` sequences."""
    seqs, logp = _support(model, T, budget)
    log_z = float(logsumexp(alpha * logp))
    return ExactDistribution(seqs, np.exp(alpha * logp - log_z), log_z, float(alpha))


def exact_low_temperature_distribution(model, T, alpha, budget=DEFAULT_ENUMERATION_BUDGET):
    """Law of sequences drawn from the locally sharpened model."""
    dist = enumerate_power_distribution(low_temperature_model(model, alpha), T, 1.0, budget)
    dist.alpha = float(alpha)
    return dist


def tv_distance(d1, d2):
    """Total variation ``1/2 sum |d1 - d2|`` over the union of supports."""
    a = d1.as_dict() if isinstance(d1, ExactDistribution) else dict(d1)
    b = d2.as_dict() if isinstance(d2, ExactDistribution) else dict(d2)
    keys = a.keys() | b.keys()
    return 0.5 * math.fsum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys)


# -- the two-token low-temperature counterexample -----------------------------


def prop_a1_model(R, N):
    """Two-token model: first token ``a`` (id 0) w.p. ``1/(1+R)`` then ``⋆`` (id 0);
    first token ``b`` (id 1) w.p. ``R/(1+R)`` then uniform over ids ``1..N``."""
    if R < 1 or N < 1:
        raise InputError("R and N must be >= 1")
    vocab = N + 1
    first = np.zeros(vocab)
    first[0], first[1] = 1.0 / (1 + R), R / (1 + R)
    after_a = np.zeros(vocab)
    after_a[0] = 1.0
    after_b = np.full(vocab, 1.0 / N)
    after_b[0] = 0.0
    rows = {(): first, (0,): after_a, (1,): after_b}
    return TabularModel(vocab, 1, rows, metadata={"kind": "prop-a1", "R": int(R), "N": int(N)})


def prop_a1_construct(alpha, eps):
    """Model whose power and low-temperature laws are ``>= 1 - eps`` apart in TV.

    With ``delta = eps / 2``, ``R`` is the least integer with
    ``1/(1 + R**alpha) <= delta`` and ``N`` the least with
    ``R**alpha / N**(alpha - 1) <= delta``.
    """
    if not alpha > 1:
        raise InputError("alpha must be > 1")
    if not 0 < eps < 1:
        raise InputError("eps must lie in (0, 1)")
    delta = eps / 2
    R = 1
    while 1.0 / (1.0 + R**alpha) > delta:
        R += 1
    N = max(1, math.ceil((R**alpha / delta) ** (1.0 / (alpha - 1))) - 2)
    while R**alpha / N ** (alpha - 1) > delta:
        N += 1
    model = prop_a1_model(R, N)
    model.metadata.update(alpha=float(alpha), eps=float(eps), delta=delta)
    return model


def prop_a1_closed_forms(R, N, alpha):
    """``(Pi_1(A), Phi_1(A))`` for the event "first token is a"."""
    return 1.0 / (1.0 + R**alpha / N ** (alpha - 1)), 1.0 / (1.0 + R**alpha)


# -- exact kernels and chain analytics ----------------------------------------


class _Memo(TokenModel):
    def __init__(self, model):
        self.model = model
        self.vocab_size = model.vocab_size
        self._cache = {}

    def next_dist(self, prefix):
        key = tuple(int(v) for v in prefix)
        hit = self._cache.get(key)
        if hit is None:
            hit = self._cache[key] = np.asarray(self.model.next_dist(key), dtype=float)
        return hit


@dataclass
class ExactKernel:
    """Row-stochastic one-step kernel over the target's support."""

    matrix: np.ndarray
    target: np.ndarray
    states: np.ndarray
    index: dict = field(default_factory=dict)

    def state_index(self, seq):
        return self.index[tuple(int(v) for v in seq)]


def exact_mh_kernel(model, cut_law, proposal_model, alpha, T,
                    max_states=DEFAULT_KERNEL_STATES, budget=DEFAULT_ENUMERATION_BUDGET):
    """Assemble ``P(x, y) = sum_m lambda(m; x) Q_m(x, y) A_m(x, y)`` exactly.

    States are the sequences with positive target mass.  Every cut and every
    proposal-supported suffix is enumerated; proposals leaving the target's
    support are rejected, and all rejection mass sits on the diagonal.
    """
    target = enumerate_power_distribution(model, T, alpha, budget)
    n = len(target.probs)
    if n > max_states:
        raise BudgetExceeded(f"{n} states exceed the kernel budget of {max_states}",
                             required=n, budget=max_states)
    base = _Memo(model)
    prop = _Memo(proposal_model)
    index = {tuple(s.tolist()): i for i, s in enumerate(target.sequences)}
    weights = {}

    def cut_weights(seq):
        key = tuple(seq.tolist())
        if key not in weights:
            weights[key] = cut_law.weights(seq, base)
        return weights[key]

    P = np.zeros((n, n))
    work = 0
    for i, x in enumerate(target.sequences):
        lam = cut_weights(x)
        for m in np.flatnonzero(lam > 0):
            for y, q in _suffixes(prop, x[:m], len(x)):
                work += 1
                if work > budget:
                    raise BudgetExceeded("kernel enumeration exceeds the budget", budget=budget)
                j = index.get(tuple(y.tolist()))
                if j is None or j == i:
                    continue
                a = acceptance_probability(x, y, int(m), _CachedCut(cut_law, cut_weights),
                                           prop, alpha, base)
                P[i, j] += lam[m] * q * a
        P[i, i] = max(0.0, 1.0 - P[i].sum())
    return ExactKernel(P, target.probs, target.sequences, index)


class _CachedCut:
    def __init__(self, law, fn):
        self.law, self.fn = law, fn

    def weights(self, seq, model):
        return self.fn(np.asarray(seq, dtype=np.int64))


def _suffixes(model, prefix, length):
    """All completions of ``prefix`` to ``length`` tokens with their model mass."""
    stack = [(np.asarray(prefix, dtype=np.int64), 1.0)]
    while stack:
        seq, q = stack.pop()
        if len(seq) == length:
            yield seq, q
            continue
        dist = model.next_dist(tuple(seq.tolist()))
        for v in np.flatnonzero(dist > 0)[::-1]:
            stack.append((np.append(seq, v), q * dist[v]))


def check_kernel(kernel, tol=1e-10):
    """Max deviations ``(row sums, stationarity, detailed balance)``."""
    P, pi = kernel.matrix, kernel.target
    rows = float(np.abs(P.sum(axis=1) - 1).max())
    stationarity = float(np.abs(pi @ P - pi).max())
    flow = pi[:, None] * P
    balance = float(np.abs(flow - flow.T).max())
    return {"row_sum": rows, "stationarity": stationarity, "detailed_balance": balance,
            "ok": max(rows, stationarity, balance) <= tol}


def worst_tv(Pn, target):
    """``max_x TV(Pn[x], target)``."""
    return float(0.5 * np.abs(Pn - target[None, :]).sum(axis=1).max())


@dataclass(frozen=True)
class MixingTime:
    """Result of :func:`mixing_time`; ``steps`` is ``None`` when the budget ran out."""

    steps: int
    exceeded: bool
    budget: int

    def __int__(self):
        if self.exceeded:
            raise ValueError("mixing time exceeded the step budget")
        return self.steps


def _validate_stationary(kernel, tol=1e-8):
    P, pi = kernel.matrix, kernel.target
    if np.abs(P.sum(axis=1) - 1).max() > tol or (P < -tol).any():
        raise ValidationError("kernel is not row-stochastic")
    if np.abs(pi @ P - pi).max() > tol:
        raise ValidationError("target is not stationary for the kernel")


def mixing_time(kernel, eps, max_steps=DEFAULT_STEP_BUDGET):
    """Smallest ``n`` with ``max_x TV(P^n(x, .), pi) <= eps``.

    Worst-start TV is non-increasing in ``n``, so the answer is bracketed by
    repeated squaring and then located by binary descent over the cached
    powers.
    """
    _validate_stationary(kernel)
    P, pi = kernel.matrix, kernel.target
    if worst_tv(np.eye(len(pi)), pi) <= eps:
        return MixingTime(0, False, max_steps)
    powers = [P]
    while (1 << (len(powers) - 1)) <= max_steps and worst_tv(powers[-1], pi) > eps:
        powers.append(powers[-1] @ powers[-1])
    if worst_tv(powers[-1], pi) > eps:
        return MixingTime(None, True, max_steps)
    # invariant: P^n has TV > eps
    n, cur = 0, np.eye(len(pi))
    for j in range(len(powers) - 2, -1, -1):
        cand = cur @ powers[j]
        if worst_tv(cand, pi) > eps:
            cur, n = cand, n + (1 << j)
    steps = n + 1
    if steps > max_steps:
        return MixingTime(None, True, max_steps)
    return MixingTime(steps, False, max_steps)


def tv_curve(kernel, n_max):
    """Worst-start TV after ``0..n_max`` steps."""
    P, pi = kernel.matrix, kernel.target
    cur = np.eye(len(pi))
    out = [worst_tv(cur, pi)]
    for _ in range(n_max):
        cur = cur @ P
        out.append(worst_tv(cur, pi))
    return np.array(out)


def _mask(kernel, subset):
    subset = np.asarray(subset)
    if subset.dtype == bool:
        return subset
    mask = np.zeros(len(kernel.target), dtype=bool)
    mask[subset] = True
    return mask


def conductance(kernel, subset, tol=1e-12):
    """Stationary escape probability from ``subset`` in one step.

    ``subset`` is a boolean mask or an index array over kernel states and
    must have target mass in ``(0, 1/2]``.
    """
    a = _mask(kernel, subset)
    pi = kernel.target
    mass = pi[a].sum()
    if mass <= 0 or mass > 0.5 + tol:
        raise InputError(f"subset mass {mass} is outside (0, 1/2]")
    flow = pi[a] @ kernel.matrix[np.ix_(a, ~a)].sum(axis=1)
    return float(flow / mass)


def minorization_margin(kernel, k, M1):
    """``min_{x,y} P(x, y) / (pi(y) / (M1 k))``; ``>= 1`` certifies the minorization."""
    pi = kernel.target
    live = pi > 0
    ratio = kernel.matrix[:, live] / (pi[live] / (M1 * k))[None, :]
    return float(ratio.min())


def m1_constant(tree, proposal_model, alpha, budget=DEFAULT_ENUMERATION_BUDGET):
    """Proposal imbalance at the first branch: ``max_r Pi(r) / q(x(r)[b1:] | x[:b1])``."""
    if not tree.spec.branch_depths:
        raise InputError("tree has no branch nodes")
    b1 = tree.spec.branch_depths[0]
    target = enumerate_power_distribution(tree.model, tree.depth, alpha, budget)
    dists = proposal_model.dists_along(target.sequences)
    with np.errstate(divide="ignore"):
        q = np.log(np.take_along_axis(dists, target.sequences[..., None], -1)[..., 0])
    log_q = q[:, b1:].sum(axis=1)
    if np.any(np.isinf(log_q) & (target.probs > 0)):
        raise ValidationError("proposal gives zero mass to a supported leaf")
    return float(np.exp(np.log(target.probs) - log_q).max())


def first_branch_set(tree, kernel):
    """States sharing the lightest first-branch choice (mass ``<= 1/d_1``)."""
    b1 = tree.spec.branch_depths[0]
    choice = kernel.states[:, b1]
    masses = [kernel.target[choice == c].sum() for c in range(tree.spec.branching_factors[0])]
    return choice == int(np.argmin(masses))


def c_eps(eps):
    """Constant of the uniform-cut lower bound ``tau >= c_eps * T / b_1``."""
    if not 0 < eps < 0.5:
        raise InputError("eps must lie in (0, 1/2)")
    return 0.25 * math.log(1.0 / (eps + 0.5))
