"""Experiment execution behind the command-line interface.

Chains are split into fixed-size blocks; block ``i`` draws all of its
randomness from ``substream(seed, i)``.  Blocks may run on any number of
worker threads and are reassembled in block order, so results never depend
on the worker count.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .cuts import EntropyCut, UniformCut
from .diagnostics import decile_resample_experiment, final_token, pass_at_k
from .errors import BudgetExceeded, ConfigError, InputError
from .mh import StageConfig, run_chains, seq_hash
from .models import (PromptedModel, TabularModel, low_temperature_model, random_tabular_model,
                     sample_autoregressive_batch)
from .oracle import (c_eps, check_kernel, conductance, empirical_distribution,
                     enumerate_power_distribution, exact_low_temperature_distribution,
                     exact_mh_kernel, first_branch_set, m1_constant, minorization_margin,
                     mixing_time, prop_a1_closed_forms, prop_a1_construct, tv_curve, tv_distance)
from .remote import RemoteModel, RemoteModelConfig
from .rng import substream
from .smc import TmcParams, smc_batch, tmc_batch
from .tree import SymmetricTreeSpec, build_symmetric_tree

MH_SAMPLERS = ("uniform-cut", "entropy-cut")


@dataclass
class BuiltModel:
    model: object
    T: int
    tree: object = None
    info: dict = field(default_factory=dict)


def build_model(section, sampler):
    """Instantiate the configured base model; returns :class:`BuiltModel`."""
    src = section.source
    tree = None
    info = {"source": src}
    if src == "random":
        model = random_tabular_model(section.vocab_size, section.depth, section.seed,
                                     section.concentration)
        depth = section.depth
    elif src == "tabular":
        model = TabularModel.load(section.path)
        depth = model.max_depth
    elif src == "tree":
        t = section.tree or _default_tree()
        spec = SymmetricTreeSpec(t.depth, tuple(t.branch_depths), tuple(t.branching_factors),
                                 t.eta, t.alpha)
        tree, model = build_symmetric_tree(spec, t.seed)
        depth = spec.depth
        info["conditions"] = tree.metadata
    elif src == "prop_a1":
        a = section.prop_a1 or _default_prop_a1()
        model = prop_a1_construct(a.alpha, a.eps)
        depth = 1
        info.update(R=model.metadata["R"], N=model.metadata["N"])
    else:
        try:
            rc = RemoteModelConfig(**section.remote)
        except TypeError as exc:
            raise ConfigError(f"model.remote: {exc}") from None
        model = RemoteModel(rc)
        depth = None
    if section.prompt:
        model = PromptedModel(model, section.prompt)
    T = sampler.T if sampler.T is not None else depth
    if depth is not None and T > depth:
        raise ConfigError(f"sampler.T={T} exceeds the model depth {depth}")
    return BuiltModel(model, T, tree, info)


def _default_tree():
    from .config import TreeSection
    return TreeSection()


def _default_prop_a1():
    from .config import PropA1Section
    return PropA1Section()


def stage_config(s, T):
    B = s.B if s.B is not None else max(1, T // 16)
    return StageConfig(T=T, B=B, n_mcmc=s.n_mcmc, alpha=s.alpha)


@dataclass
class SamplerRun:
    name: str
    tokens: np.ndarray
    trace: list
    n_steps: int = 0
    n_accepted: int = 0

    @property
    def acceptance_rate(self):
        if self.n_steps == 0:
            return None
        return self.n_accepted / (self.n_steps * len(self.tokens))


def _run_block(name, built, s, n, rng, record, offset):
    base, T = built.model, built.T
    if name == "standard":
        return sample_autoregressive_batch(base, n, T, rng), [], 0, 0
    if name == "low-temperature":
        return sample_autoregressive_batch(low_temperature_model(base, s.alpha), n, T, rng), [], 0, 0
    prop = low_temperature_model(base, s.alpha)
    if name == "smc":
        return smc_batch(base, prop, s.alpha, T, s.particles, s.ess_threshold, rng, n), [], 0, 0
    if name == "tmc":
        params = TmcParams(s.tmc_B, s.tmc_K, s.tmc_M, s.tmc_selection)
        return tmc_batch(base, s.alpha, T, params, rng, n, prop), [], 0, 0
    cut = EntropyCut(s.beta, s.eps) if name == "entropy-cut" else UniformCut()
    run = run_chains(base, prop, cut, stage_config(s, T), rng, n, init=s.init, record=record)
    trace = _flatten_trace(run.trace, name, offset) if record else []
    return run.tokens, trace, run.n_steps, int(run.n_accepted.sum())


def _flatten_trace(trace, name, offset):
    out = []
    for entry in trace:
        hashes = [seq_hash(row) for row in entry["proposed"]]
        for j in range(len(hashes)):
            out.append({
                "sampler": name, "chain": offset + j, "stage": entry["stage"],
                "step": entry["step"], "m": int(entry["m"][j]), "A": float(entry["A"][j]),
                "accepted": bool(entry["accepted"][j]),
                "logp_base_old": float(entry["logp_base_old"][j]),
                "logp_base_new": float(entry["logp_base_new"][j]),
                "seq_hash": hashes[j],
            })
    out.sort(key=lambda r: (r["chain"], r["stage"], r["step"]))
    return out


def run_sampler(name, built, s, repetitions, seed, block_size, workers=1, record=False):
    """Run ``repetitions`` independent draws of sampler ``name`` in seeded blocks."""
    sizes = [min(block_size, repetitions - i) for i in range(0, repetitions, block_size)]
    offsets = np.cumsum([0] + sizes[:-1]).tolist()

    def job(i):
        return _run_block(name, built, s, sizes[i], substream(seed, i), record, offsets[i])

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    else:
        parts = [job(i) for i in range(len(sizes))]
    tokens = np.concatenate([p[0] for p in parts])
    trace = [r for p in parts for r in p[1]]
    steps = parts[0][2] if parts else 0
    return SamplerRun(name, tokens, trace, steps, sum(p[3] for p in parts))


# -- metrics ------------------------------------------------------------------


def sequence_rows(run, built):
    logp, h = built.model.token_stats(run.tokens)
    total = logp.sum(axis=1)
    conf = -h.mean(axis=1)
    return [{"sampler": run.name, "chain": i, "tokens": run.tokens[i].tolist(),
             "logp": float(total[i]), "confidence": float(conf[i])}
            for i in range(len(run.tokens))]


class OracleCache:
    """Exact distributions keyed by ``alpha``; ``None`` when enumeration is refused."""

    def __init__(self, built, budget, enabled=True):
        self.built, self.budget, self.enabled = built, budget, enabled
        self._cache = {}
        self.note = None

    def power(self, alpha):
        if not self.enabled or getattr(self.built.model, "approximate", False):
            return None
        if self.built.info["source"] == "remote":
            self.note = "oracle disabled for remote models"
            return None
        if alpha not in self._cache:
            try:
                self._cache[alpha] = enumerate_power_distribution(
                    self.built.model, self.built.T, alpha, self.budget)
            except BudgetExceeded as exc:
                self.note = str(exc)
                self._cache[alpha] = None
        return self._cache[alpha]


def sampler_metrics(run, rows, s, oracle, metrics_cfg):
    """Long-format ``(metric, value)`` pairs for one sampler run."""
    out = [("n", len(rows)),
           ("mean_logprob", float(np.mean([r["logp"] for r in rows]))),
           ("mean_confidence", float(np.mean([r["confidence"] for r in rows])))]
    if run.acceptance_rate is not None:
        out.append(("acceptance_rate", run.acceptance_rate))
    target = oracle.power(s.alpha)
    if target is not None:
        emp = empirical_distribution(run.tokens)
        out.append(("tv_to_oracle", tv_distance(emp, target)))
        base = oracle.power(1.0)
        out.append(("tv_to_base", tv_distance(emp, base)))
    if metrics_cfg.correct_answers is not None:
        ok = set(int(a) for a in metrics_cfg.correct_answers)
        c = sum(final_token(t) in ok for t in run.tokens)
        for k in metrics_cfg.k:
            if k <= len(rows):
                out.append((f"pass@{k}", pass_at_k(len(rows), c, k)))
    return out


# -- theory check ---------------------------------------------------------------


def theory_check(built, s, theory, budget):
    """Exact mixing analysis of entropy-cut vs uniform-cut on a symmetric tree."""
    tree = built.tree
    if tree is None:
        raise ConfigError("theory-check needs model.source = 'tree'")
    spec = tree.spec
    alpha = spec.alpha
    prop = low_temperature_model(built.model, alpha)
    kernels = {}
    for name, law in (("entropy-cut", EntropyCut(s.beta, s.eps)), ("uniform-cut", UniformCut())):
        kernels[name] = exact_mh_kernel(built.model, law, prop, alpha, spec.depth,
                                        theory.max_states, budget)
    k = spec.k
    report = {"tree": spec.to_dict(), "beta": s.beta, "cut_floor": s.eps,
              "conditions": tree.metadata, "kernels": {}, "checks": [], "notes": []}
    for name, K in kernels.items():
        report["kernels"][name] = {"validity": check_kernel(K)}
    if k == 0:
        report["notes"].append("tree has no branch nodes; bounds uninformative")
        return report
    b1 = spec.branch_depths[0]
    m1 = m1_constant(tree, prop, alpha, budget)
    margin = minorization_margin(kernels["entropy-cut"], k, m1)
    S = first_branch_set(tree, kernels["entropy-cut"])
    phi = {name: conductance(K, S) for name, K in kernels.items()}
    report.update(M1=m1, minorization_margin=margin, first_branch_set_mass=float(
        kernels["entropy-cut"].target[S].sum()), conductance=phi)
    tol = 1e-9
    taus = {}
    for eps in theory.eps_grid:
        row = {"eps": eps}
        for name, K in kernels.items():
            mt = mixing_time(K, eps, theory.max_steps)
            row[name] = None if mt.exceeded else mt.steps
        row["ec_upper_bound"] = math.ceil(2 * m1 * k * math.log(1 / eps) - tol)
        row["unif_lower_bound"] = c_eps(eps) * spec.depth / b1 if eps < 0.5 else None
        taus[eps] = row
    report["mixing"] = list(taus.values())
    n_curve = max([r["uniform-cut"] or 0 for r in taus.values()] + [1])
    report["tv_curves"] = {name: tv_curve(K, n_curve).tolist() for name, K in kernels.items()}

    def check(label, ok, value, bound):
        report["checks"].append({"check": label, "pass": bool(ok), "value": value,
                                 "bound": bound})

    check("conductance_uniform <= b1/T", phi["uniform-cut"] <= b1 / spec.depth + tol,
          phi["uniform-cut"], b1 / spec.depth)
    if tree.metadata["effective_eta"] == 0:
        check("conductance_entropy >= 1/(2k)", phi["entropy-cut"] >= 1 / (2 * k) - tol,
              phi["entropy-cut"], 1 / (2 * k))
    check("minorization margin >= 1", margin >= 1 - tol, margin, 1.0)
    for row in taus.values():
        ec, un = row["entropy-cut"], row["uniform-cut"]
        check(f"tau_ec({row['eps']}) <= upper bound", ec is not None and ec <= row["ec_upper_bound"],
              ec, row["ec_upper_bound"])
        if row["unif_lower_bound"] is not None:
            check(f"tau_unif({row['eps']}) >= lower bound",
                  un is None or un >= row["unif_lower_bound"], un, row["unif_lower_bound"])
        if ec and un:
            row["ratio"] = un / ec
    if k == 1 and b1 == spec.depth or b1 / spec.depth >= 0.5:
        report["notes"].append("first branch is at the end of the tree; bounds uninformative")
    report["all_pass"] = all(c["pass"] for c in report["checks"])
    return report


# -- proxy experiment ---------------------------------------------------------


def proxy_experiment(built, proxy, seed):
    answer_fn = None
    if proxy.answer == "leaf-index":
        if built.tree is None:
            raise ConfigError("proxy.answer = 'leaf-index' needs a tree model")
        answer_fn = built.tree.leaf_index
    trials = []
    for i in range(proxy.trials):
        rep = decile_resample_experiment(built.model, built.T, proxy.cut_count,
                                         proxy.resamples, substream(seed, i), answer_fn)
        trials.append(rep.to_dict())
    verdicts = [t["verdict"] for t in trials]
    summary = {
        "trials": len(trials),
        "top_greater_fraction": verdicts.count("top-greater") / len(trials),
        "degenerate_fraction": verdicts.count("degenerate") / len(trials),
        "approximate": bool(getattr(built.model, "approximate", False)),
    }
    if summary["degenerate_fraction"] == 1:
        summary["verdict"] = "degenerate"
    elif summary["top_greater_fraction"] > 0.5:
        summary["verdict"] = "top-greater"
    else:
        summary["verdict"] = "not-ordered"
    for key in ("mean_edit_distance", "mean_distinct_fraction"):
        summary[f"top_{key}"] = float(np.mean([t["top"][key] for t in trials]))
        summary[f"bottom_{key}"] = float(np.mean([t["bottom"][key] for t in trials]))
    return {"summary": summary, "trials": trials}


# -- direct oracle queries ----------------------------------------------------


def oracle_query(built, s, budget, top=10):
    alpha = s.alpha
    power = enumerate_power_distribution(built.model, built.T, alpha, budget)
    low = exact_low_temperature_distribution(built.model, built.T, alpha, budget)
    base = enumerate_power_distribution(built.model, built.T, 1.0, budget)
    order = np.argsort(-power.probs, kind="stable")[:top]
    report = {
        "alpha": alpha, "T": built.T, "log_z": power.log_z, "support": len(power.probs),
        "tv_power_low_temperature": tv_distance(power, low),
        "tv_power_base": tv_distance(power, base),
        "top": [{"tokens": power.sequences[i].tolist(), "power": float(power.probs[i]),
                 "low_temperature": low.prob(power.sequences[i]),
                 "base": base.prob(power.sequences[i])} for i in order],
    }
    meta = getattr(built.model, "metadata", {})
    if meta.get("kind") == "prop-a1":
        pi_a, phi_a = prop_a1_closed_forms(meta["R"], meta["N"], alpha)
        report["closed_forms"] = {
            "R": meta["R"], "N": meta["N"], "power_first_a": pi_a, "low_temperature_first_a": phi_a,
            "measured_power_first_a": power.event(lambda x: x[0] == 0),
            "measured_low_temperature_first_a": low.event(lambda x: x[0] == 0),
        }
    return report, power


def with_param(s, param, value):
    """Copy of sampler section ``s`` with one swept parameter replaced."""
    if param in ("n_mcmc", "particles"):
        if float(value) != int(value):
            raise InputError(f"{param} must be an integer")
        value = int(value)
    else:
        value = float(value)
    return replace(s, **{param: value})
