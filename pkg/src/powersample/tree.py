"""Stylized reasoning trees.

A reasoning tree of depth ``T`` has root-to-leaf paths ``x_{0:T}``; the node
at depth ``t`` is a *branch* node when the prefix ``x[:t]`` has at least two
children and a *chain* node otherwise.  Symmetric trees are parameterized by
branch depths ``b_1 < ... < b_k`` and branching factors ``d_1..d_k``; a leaf
is then identified with its branch-choice vector ``r`` (0-based here).

Token labeling: the ``j``-th child (0-based) of a branch node is token ``j``;
chain nodes always emit token 0.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, UnsupportedError
from .models import TabularModel, entropy_jumps, entropy_profile, low_temperature_model
from .rng import as_generator


@dataclass(frozen=True)
class SymmetricTreeSpec:
    """Shape of a symmetric reasoning tree.

    ``alpha`` is the sharpening power the leaf target masses are calibrated
    for: the returned base model has ``p(leaf) ∝ target(leaf)**(1/alpha)``,
    so that the power distribution at that ``alpha`` equals the target.
    """

    depth: int
    branch_depths: tuple = ()
    branching_factors: tuple = ()
    eta: float = 0.0
    alpha: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "branch_depths", tuple(int(b) for b in self.branch_depths))
        object.__setattr__(self, "branching_factors", tuple(int(d) for d in self.branching_factors))
        b, d = self.branch_depths, self.branching_factors
        if self.depth < 0:
            raise InputError("depth must be >= 0")
        if len(b) != len(d):
            raise InputError("branch_depths and branching_factors differ in length")
        if any(x >= y for x, y in zip(b, b[1:])):
            raise InputError("branch depths must be strictly increasing")
        if b and (b[0] < 1 or b[-1] > self.depth):
            raise InputError("branch depths must lie in [1, depth]")
        if any(x < 2 for x in d):
            raise InputError("branching factors must be >= 2")
        if self.eta < 0:
            raise InputError("eta must be >= 0")
        if not self.alpha > 0:
            raise InputError("alpha must be > 0")

    @property
    def k(self):
        return len(self.branch_depths)

    @property
    def n_leaves(self):
        return int(np.prod(self.branching_factors, dtype=np.int64)) if self.branching_factors else 1

    def to_dict(self):
        return {"depth": self.depth, "branch_depths": list(self.branch_depths),
                "branching_factors": list(self.branching_factors),
                "eta": self.eta, "alpha": self.alpha}


@dataclass
class ReasoningTree:
    """A built symmetric tree: leaves in path-index order plus their masses.

    Attributes
    ----------
    spec : SymmetricTreeSpec
    leaves : ndarray, shape (n_leaves, depth + 1)
        Root-to-leaf token sequences, lexicographic in the branch choices.
    target : ndarray
        Leaf masses of the power distribution at ``spec.alpha``.
    base : ndarray
        Leaf masses of the base model (``∝ target**(1/alpha)``).
    model : TabularModel
        Base model whose complete-sequence law is ``base``.
    metadata : dict
        Realized slack values and condition checks.
    """

    spec: SymmetricTreeSpec
    leaves: np.ndarray
    target: np.ndarray
    base: np.ndarray
    model: TabularModel
    metadata: dict = field(default_factory=dict)

    @property
    def depth(self):
        return self.spec.depth

    @property
    def k(self):
        return self.spec.k

    def children(self, prefix):
        """Token ids that label children of ``prefix`` (empty if off-tree or a leaf)."""
        prefix = tuple(int(v) for v in prefix)
        if len(prefix) > self.depth or not self._on_tree(prefix):
            return []
        t = len(prefix)
        if t in self.spec.branch_depths:
            return list(range(self.spec.branching_factors[self.spec.branch_depths.index(t)]))
        return [0]

    def _on_tree(self, prefix):
        b = self.spec.branch_depths
        for t, tok in enumerate(prefix):
            if t in b:
                if tok >= self.spec.branching_factors[b.index(t)]:
                    return False
            elif tok != 0:
                return False
        return True

    def contains(self, seq):
        seq = tuple(int(v) for v in seq)
        return len(seq) == self.depth + 1 and self._on_tree(seq)

    def path_to_sequence(self, r):
        r = tuple(int(v) for v in r)
        if len(r) != self.k or any(not 0 <= v < d for v, d in zip(r, self.spec.branching_factors)):
            raise InputError(f"invalid path index {r}")
        seq = np.zeros(self.depth + 1, dtype=np.int64)
        seq[list(self.spec.branch_depths)] = r
        return seq

    def sequence_to_path(self, seq):
        if not self.contains(seq):
            raise InputError("sequence is not a root-to-leaf path of the tree")
        seq = np.asarray(seq)
        return tuple(int(seq[b]) for b in self.spec.branch_depths)

    def leaf_index(self, seq):
        r = self.sequence_to_path(seq)
        return int(np.ravel_multi_index(r, self.spec.branching_factors)) if r else 0


def _leaf_sequences(spec):
    paths = list(itertools.product(*(range(d) for d in spec.branching_factors)))
    leaves = np.zeros((len(paths), spec.depth + 1), dtype=np.int64)
    if spec.k:
        leaves[:, list(spec.branch_depths)] = np.asarray(paths, dtype=np.int64)
    return leaves


def _conditional_rows(leaves, masses, vocab_size):
    subtree = {}
    for seq, w in zip(leaves, masses):
        seq = tuple(seq.tolist())
        for t in range(len(seq) + 1):
            subtree[seq[:t]] = subtree.get(seq[:t], 0.0) + w
    rows = {}
    depth = leaves.shape[1] - 1
    for prefix, total in subtree.items():
        if len(prefix) > depth:
            continue
        row = np.zeros(vocab_size)
        for v in range(vocab_size):
            row[v] = subtree.get(prefix + (v,), 0.0)
        rows[prefix] = row / total
    return rows


def build_symmetric_tree(spec, rng=None):
    """Build a symmetric tree and its base token model.

    With ``eta = 0`` every leaf has target mass ``1 / prod(d)``.  With
    ``eta > 0`` each leaf's target log-mass is perturbed by an independent
    ``Uniform(-eta, eta)`` draw and the masses are renormalized; the realized
    slack ``max |log(target * n_leaves)|`` is stored in ``metadata`` because
    renormalization can push it past the nominal ``eta``.

    Returns
    -------
    (ReasoningTree, TabularModel)
    """
    rng = as_generator(rng)
    leaves = _leaf_sequences(spec)
    n = leaves.shape[0]
    if spec.eta > 0:
        logw = rng.uniform(-spec.eta, spec.eta, size=n)
        target = np.exp(logw - logw.max())
        target /= target.sum()
    else:
        target = np.full(n, 1.0 / n)
    base = target ** (1.0 / spec.alpha)
    base /= base.sum()
    vocab = max(spec.branching_factors, default=1)
    model = TabularModel(vocab, spec.depth, _conditional_rows(leaves, base, vocab),
                         metadata={"kind": "symmetric-tree", "spec": spec.to_dict()})
    tree = ReasoningTree(spec, leaves, target, base, model)
    tree.metadata = _realized_conditions(tree)
    model.metadata["conditions"] = tree.metadata
    return tree, model


def _realized_conditions(tree):
    """Realized values of the approximate-symmetry conditions."""
    spec = tree.spec
    n = len(tree.leaves)
    slack = float(np.max(np.abs(np.log(tree.target * n))))
    # proposal-side ratio U(suffix | prefix) / p_prop(suffix | prefix), with
    # p_prop the low-temperature model at the calibration alpha
    prop = low_temperature_model(tree.model, spec.alpha)
    dists = prop.dists_along(tree.leaves)
    with np.errstate(divide="ignore"):
        logq = np.log(np.take_along_axis(dists, tree.leaves[..., None], axis=-1)[..., 0])
    worst = 0.0
    for t in range(1, spec.depth):
        later = [d for b, d in zip(spec.branch_depths, spec.branching_factors) if b > t]
        log_u = -float(np.sum(np.log(later))) if later else 0.0
        worst = max(worst, float(np.max(log_u - logq[:, t + 1:].sum(axis=1))))
    jumps = entropy_jumps(entropy_profile(tree.model, tree.leaves[0])) if n else np.zeros(0)
    branch = set(spec.branch_depths)
    item3 = all((jumps[t] > 0) == (t in branch) for t in range(1, spec.depth + 1))
    return {
        "nominal_eta": spec.eta,
        "effective_eta": slack,
        "proposal_log_ratio_max": worst,
        "jumps_only_at_branches": bool(item3),
    }


def classify_positions(tree, path):
    """Label each position of ``path`` as ``"branch"`` or ``"chain"``.

    Position ``t`` is a branch when the prefix ``path[:t]`` has at least two
    children; position 0 is a branch only if the root itself branches.
    """
    if not tree.contains(path):
        raise InputError("path is not a root-to-leaf path of the tree")
    path = tuple(int(v) for v in path)
    return ["branch" if len(tree.children(path[:t])) >= 2 else "chain"
            for t in range(len(path))]


@dataclass(frozen=True)
class PathIndexMap:
    """Bijection between branch-choice vectors and leaf sequences."""

    tree: ReasoningTree

    def to_sequence(self, r):
        return self.tree.path_to_sequence(r)

    def to_path(self, seq):
        return self.tree.sequence_to_path(seq)

    def all_paths(self):
        return list(itertools.product(*(range(d) for d in self.tree.spec.branching_factors)))


def path_index_maps(tree):
    if not isinstance(tree, ReasoningTree):
        raise UnsupportedError("path indices are only defined for symmetric trees")
    return PathIndexMap(tree)
