"""Token models and per-sequence analytics.

A token model maps a prefix of token ids to a full next-token probability
vector.  Everything else in the package (samplers, cut laws, oracles) talks
to models only through that contract, plus two batched conveniences that
concrete models may override for speed:

``next_dist_batch(prefixes)``
    ``(n, t)`` int array of prefixes -> ``(n, V)`` probabilities.
``dists_along(seqs)``
    ``(n, L)`` sequences -> ``(n, L, V)`` next-token distributions at every
    position, i.e. one "forward pass" per sequence.

Sequence-level quantities are kept in log space; single next-token vectors
are linear.  Natural logarithms throughout.
"""

import json
from abc import ABC, abstractmethod
from pathlib import Path

import numpy as np
from scipy.special import entr

from .errors import InputError, ModelError
from .rng import as_generator

NORMALIZATION_TOL = 1e-9


def _as_prefix_array(prefixes):
    arr = np.asarray(prefixes, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise InputError("prefixes must be a 2-d array of token ids")
    return arr


class TokenModel(ABC):
    """Autoregressive next-token model over ``vocab_size`` opaque token ids.

    Implementations must be pure: the same prefix always yields the same
    vector, and concurrent read-only queries are safe.
    """

    vocab_size: int
    #: True when distributions are only approximations (e.g. top-k responses).
    approximate = False

    @abstractmethod
    def next_dist(self, prefix):
        """Return the next-token distribution after ``prefix`` as a 1-d array."""

    def next_dist_batch(self, prefixes):
        prefixes = _as_prefix_array(prefixes)
        n, t = prefixes.shape
        if n == 0:
            return np.zeros((0, self.vocab_size))
        if t == 0:
            return np.broadcast_to(self.next_dist(()), (n, self.vocab_size)).copy()
        rows = np.ascontiguousarray(prefixes)
        if t * np.log2(max(self.vocab_size, 2)) < 62:
            # pack each row into one integer; unique over int64 is far cheaper
            keys = rows @ (self.vocab_size ** np.arange(t, dtype=np.int64))
        else:
            keys = rows.view(np.dtype((np.void, rows.dtype.itemsize * t))).ravel()
        _, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
        table = np.stack([self.next_dist(tuple(rows[i].tolist())) for i in first])
        return table[inverse.ravel()]

    def dists_along(self, seqs):
        seqs = _as_prefix_array(seqs)
        n, length = seqs.shape
        out = np.empty((n, length, self.vocab_size))
        for t in range(length):
            out[:, t] = self.next_dist_batch(seqs[:, :t])
        return out

    def token_stats(self, seqs):
        """Per-position ``(log p(x_t | x_<t), entropy)`` arrays for ``(n, L)`` sequences."""
        dists = self.dists_along(seqs)
        return token_logprobs(dists, seqs), entropies(dists)


class TabularModel(TokenModel):
    """Explicit prefix -> distribution table stored as a trie.

    Parameters
    ----------
    vocab_size : int
    max_depth : int
        Largest prefix length with a row; complete sequences have
        ``max_depth + 1`` tokens.
    rows : mapping of tuple -> array_like
        Next-token distribution for each prefix.  Rows may be omitted for
        prefixes that are unreachable (their parent gives the token zero
        mass); queries for such prefixes return a point mass on token 0.
    metadata : dict, optional
        Free-form provenance carried along (and serialized).
    """

    def __init__(self, vocab_size, max_depth, rows, metadata=None):
        if vocab_size < 1:
            raise InputError("vocab_size must be >= 1")
        if max_depth < 0:
            raise InputError("max_depth must be >= 0")
        self.vocab_size = int(vocab_size)
        self.max_depth = int(max_depth)
        self.metadata = dict(metadata or {})

        ordered = sorted(((tuple(int(v) for v in k), v) for k, v in rows.items()),
                         key=lambda kv: (len(kv[0]), kv[0]))
        if not ordered or ordered[0][0] != ():
            raise InputError("a row for the empty prefix is required")
        index = {}
        probs = np.zeros((len(ordered) + 1, self.vocab_size))
        child = np.full((len(ordered) + 1, self.vocab_size), len(ordered), dtype=np.int64)
        for node, (prefix, p) in enumerate(ordered):
            if len(prefix) > self.max_depth:
                raise InputError(f"prefix {prefix} longer than max_depth={self.max_depth}")
            if any(v < 0 or v >= self.vocab_size for v in prefix):
                raise InputError(f"prefix {prefix} has a token id outside the vocabulary")
            probs[node] = _validated_probs(p, self.vocab_size, where=prefix)
            index[prefix] = node
            if prefix:
                parent = index.get(prefix[:-1])
                if parent is None:
                    raise InputError(f"row {prefix} has no parent row")
                child[parent, prefix[-1]] = node
        sink = len(ordered)
        probs[sink, 0] = 1.0
        for prefix, node in index.items():
            if len(prefix) < self.max_depth:
                missing = (probs[node] > 0) & (child[node] == sink)
                if missing.any():
                    tok = int(np.flatnonzero(missing)[0])
                    raise InputError(f"reachable prefix {prefix + (tok,)} has no row")
        self._index = index
        self._probs = probs
        self._child = child
        self._sink = sink
        self._node_stats = None

    @property
    def prefixes(self):
        return list(self._index)

    def _walk(self, prefixes):
        prefixes = _as_prefix_array(prefixes)
        if prefixes.size and (prefixes.min() < 0 or prefixes.max() >= self.vocab_size):
            raise InputError("token id out of range")
        node = np.zeros(prefixes.shape[0], dtype=np.int64)
        for j in range(prefixes.shape[1]):
            node = self._child[node, prefixes[:, j]]
        return node

    def next_dist(self, prefix):
        node = self._index.get(tuple(int(v) for v in prefix))
        if node is None:
            node = int(self._walk(np.asarray(prefix, dtype=np.int64)[None, :])[0])
        return self._probs[node].copy()

    def next_dist_batch(self, prefixes):
        return self._probs[self._walk(prefixes)]

    def _with_probs(self, probs):
        # same trie, different rows (used for locally transformed views)
        view = object.__new__(TabularModel)
        view.__dict__.update(self.__dict__)
        view._probs = probs
        view._node_stats = None
        view.metadata = {}
        return view

    def token_stats(self, seqs):
        seqs = _as_prefix_array(seqs)
        if seqs.size and (seqs.min() < 0 or seqs.max() >= self.vocab_size):
            raise InputError("token id out of range")
        if self._node_stats is None:
            with np.errstate(divide="ignore"):
                self._node_stats = (np.log(self._probs), entropies(self._probs))
        logp_table, h_table = self._node_stats
        n, length = seqs.shape
        logp = np.empty((n, length))
        h = np.empty((n, length))
        node = np.zeros(n, dtype=np.int64)
        for t in range(length):
            tok = seqs[:, t]
            logp[:, t] = logp_table[node, tok]
            h[:, t] = h_table[node]
            node = self._child[node, tok]
        return logp, h

    def dists_along(self, seqs):
        seqs = _as_prefix_array(seqs)
        if seqs.size and (seqs.min() < 0 or seqs.max() >= self.vocab_size):
            raise InputError("token id out of range")
        n, length = seqs.shape
        out = np.empty((n, length, self.vocab_size))
        node = np.zeros(n, dtype=np.int64)
        for t in range(length):
            out[:, t] = self._probs[node]
            node = self._child[node, seqs[:, t]]
        return out

    # -- serialization -------------------------------------------------------

    def to_json(self):
        doc = {
            "vocab_size": self.vocab_size,
            "max_depth": self.max_depth,
            "rows": [{"prefix": list(prefix), "probs": self._probs[node].tolist()}
                     for prefix, node in self._index.items()],
        }
        if self.metadata:
            doc["metadata"] = self.metadata
        return doc

    @classmethod
    def from_json(cls, doc):
        try:
            rows = {tuple(r["prefix"]): r["probs"] for r in doc["rows"]}
            return cls(doc["vocab_size"], doc["max_depth"], rows, doc.get("metadata"))
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed tabular model document: {exc}") from exc

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text()))


def _validated_probs(p, vocab_size, where=None, tol=NORMALIZATION_TOL):
    p = np.asarray(p, dtype=float)
    if p.shape != (vocab_size,):
        raise InputError(f"distribution at {where} has shape {p.shape}, expected ({vocab_size},)")
    if not np.all(np.isfinite(p)) or (p < 0).any():
        raise InputError(f"distribution at {where} has negative or non-finite entries")
    total = p.sum()
    if abs(total - 1.0) > tol:
        raise InputError(f"distribution at {where} sums to {total!r}")
    return p / total


class LowTemperatureModel(TokenModel):
    """Each conditional of ``base`` raised to ``alpha`` and renormalized locally."""

    def __init__(self, base, alpha):
        if not alpha > 0:
            raise InputError("alpha must be > 0")
        self.base = base
        self.alpha = float(alpha)
        self.vocab_size = base.vocab_size
        self._table = None
        if isinstance(base, TabularModel) and self.alpha != 1.0:
            self._table = base._with_probs(self._sharpen(base._probs))

    @property
    def approximate(self):
        return self.base.approximate

    def _sharpen(self, p):
        if self.alpha == 1.0:
            return p
        with np.errstate(divide="ignore"):
            logq = self.alpha * np.log(p)
        logq = logq - logq.max(axis=-1, keepdims=True)
        q = np.exp(logq)
        return q / q.sum(axis=-1, keepdims=True)

    def next_dist(self, prefix):
        if self._table is not None:
            return self._table.next_dist(prefix)
        return self._sharpen(self.base.next_dist(prefix))

    def next_dist_batch(self, prefixes):
        if self._table is not None:
            return self._table.next_dist_batch(prefixes)
        return self._sharpen(self.base.next_dist_batch(prefixes))

    def dists_along(self, seqs):
        if self._table is not None:
            return self._table.dists_along(seqs)
        return self._sharpen(self.base.dists_along(seqs))

    def token_stats(self, seqs):
        if self._table is not None:
            return self._table.token_stats(seqs)
        return super().token_stats(seqs)


class PromptedModel(TokenModel):
    """Prepends a fixed prompt to every prefix before querying ``base``."""

    def __init__(self, base, prompt):
        self.base = base
        self.prompt = tuple(int(v) for v in prompt)
        self.vocab_size = base.vocab_size

    @property
    def approximate(self):
        return self.base.approximate

    def next_dist(self, prefix):
        return self.base.next_dist(self.prompt + tuple(int(v) for v in prefix))

    def next_dist_batch(self, prefixes):
        prefixes = _as_prefix_array(prefixes)
        if not self.prompt:
            return self.base.next_dist_batch(prefixes)
        head = np.broadcast_to(np.asarray(self.prompt, dtype=np.int64),
                               (prefixes.shape[0], len(self.prompt)))
        return self.base.next_dist_batch(np.hstack([head, prefixes]))


def low_temperature_model(model, alpha):
    """Locally sharpened model: ``p(.|prefix)**alpha`` renormalized per prefix.

    ``alpha == 1`` returns vectors bitwise-equal to the base model's.
    """
    if not alpha > 0:
        raise InputError("alpha must be > 0")
    return LowTemperatureModel(model, alpha)


def random_tabular_model(vocab_size, max_depth, rng=None, concentration=1.0):
    """Full tabular model with Dirichlet(concentration) rows at every prefix."""
    rng = as_generator(rng)
    rows = {}
    frontier = [()]
    for depth in range(max_depth + 1):
        nxt = []
        for prefix in frontier:
            rows[prefix] = rng.dirichlet(np.full(vocab_size, float(concentration)))
            if depth < max_depth:
                nxt.extend(prefix + (v,) for v in range(vocab_size))
        frontier = nxt
    return TabularModel(vocab_size, max_depth, rows,
                        metadata={"kind": "random", "concentration": float(concentration)})


# -- per-sequence analytics ---------------------------------------------------


def _check_seq(model, seq):
    seq = np.asarray(seq, dtype=np.int64).reshape(-1)
    if seq.size and (seq.min() < 0 or seq.max() >= model.vocab_size):
        raise InputError("token id out of range")
    return seq


def token_logprobs(dists, seqs):
    """Log-probabilities of the realized tokens; ``dists`` is ``(n, L, V)``."""
    seqs = np.asarray(seqs, dtype=np.int64)
    picked = np.take_along_axis(dists, seqs[..., None], axis=-1)[..., 0]
    with np.errstate(divide="ignore"):
        return np.log(picked)


def entropies(dists):
    """Shannon entropy (nats) along the last axis, with 0 log 0 = 0."""
    return entr(dists).sum(axis=-1)


def seq_logprob(model, seq):
    """Sum of log conditionals of ``seq``; ``-inf`` if any conditional is 0."""
    seq = _check_seq(model, seq)
    if seq.size == 0:
        return 0.0
    return float(token_logprobs(model.dists_along(seq[None, :]), seq[None, :]).sum())


def entropy_profile(model, seq):
    """Next-token entropy ``h_t`` of the model before each position of ``seq``."""
    seq = _check_seq(model, seq)
    if seq.size == 0:
        return np.zeros(0)
    return entropies(model.dists_along(seq[None, :]))[0]


def entropy_jumps(profile):
    """Positive entropy increases, with position 0 carrying ``h_0`` itself.

    >>> entropy_jumps([0.0, 0.5, 0.2, 0.9])
    array([0. , 0.5, 0. , 0.7])
    """
    h = np.asarray(profile, dtype=float)
    if h.ndim == 0 or h.shape[-1] == 0:
        raise InputError("entropy profile must be non-empty")
    jumps = np.empty_like(h)
    jumps[..., 0] = h[..., 0]
    jumps[..., 1:] = np.maximum(0.0, np.diff(h, axis=-1))
    return jumps


def avg_confidence(model, seq):
    """Average confidence: the negated mean entropy over positions (always <= 0)."""
    return -float(np.mean(entropy_profile(model, seq)))


def categorical(probs, u):
    """Inverse-CDF draw per row of ``probs`` given uniforms ``u`` in [0, 1).

    Tokens with zero probability are never returned.
    """
    cdf = np.cumsum(probs, axis=-1)
    target = np.asarray(u)[..., None] * cdf[..., -1:]
    return (cdf <= target).sum(axis=-1)


def sample_tokens(model, prefixes, n_new, rng):
    """Extend each row of ``prefixes`` by ``n_new`` tokens drawn from ``model``.

    Returns the extended ``(n, t + n_new)`` array and the ``(n, n_new)``
    log-probabilities of the drawn tokens under ``model``.
    """
    prefixes = _as_prefix_array(prefixes)
    n, t = prefixes.shape
    out = np.empty((n, t + n_new), dtype=np.int64)
    out[:, :t] = prefixes
    logq = np.empty((n, n_new))
    for j in range(n_new):
        dist = model.next_dist_batch(out[:, :t + j])
        _check_batch(dist, model)
        tok = categorical(dist, rng.random(n))
        out[:, t + j] = tok
        with np.errstate(divide="ignore"):
            logq[:, j] = np.log(dist[np.arange(n), tok])
    return out, logq


def _check_batch(dist, model, tol=1e-9):
    if dist.ndim != 2 or dist.shape[1] != model.vocab_size:
        raise ModelError(f"model returned distribution of shape {dist.shape}")
    if (dist < 0).any() or np.abs(dist.sum(axis=1) - 1.0).max(initial=0.0) > tol:
        raise ModelError("model returned an unnormalized distribution")


def sample_autoregressive(model, length, rng=None):
    """Draw ``length + 1`` tokens sequentially from ``model``.

    Standard sampling when ``model`` is the base model; low-temperature
    sampling when it is ``low_temperature_model(base, alpha)``.
    """
    if length < 0:
        raise InputError("length must be >= 0")
    rng = as_generator(rng)
    seqs, _ = sample_tokens(model, np.zeros((1, 0), dtype=np.int64), length + 1, rng)
    return seqs[0]


def sample_autoregressive_batch(model, n, length, rng=None):
    """``n`` independent draws of ``length + 1`` tokens, as an ``(n, length + 1)`` array."""
    rng = as_generator(rng)
    seqs, _ = sample_tokens(model, np.zeros((n, 0), dtype=np.int64), length + 1, rng)
    return seqs
