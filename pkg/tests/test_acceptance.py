"""Acceptance criteria 1-10.

Each test prints one ``criterion N: PASS|FAIL`` line (visible without ``-s``)
and then asserts.  Run just this file with::

    pytest tests/test_acceptance.py -v
"""

import itertools
import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from powersample import (EntropyCut, LoopbackServer, RemoteModel, RemoteModelConfig,
                         StageConfig, SymmetricTreeSpec, UniformCut, build_symmetric_tree,
                         conductance, decile_resample_experiment, empirical_distribution,
                         enumerate_power_distribution, exact_low_temperature_distribution,
                         exact_mh_kernel, low_temperature_model, m1_constant,
                         minorization_margin, mixing_time, pass_at_k, prop_a1_construct,
                         random_tabular_model, run_chains, tv_distance)
from powersample.cli import main
from powersample.config import SamplerSection
from powersample.experiments import BuiltModel, run_sampler
from powersample.oracle import c_eps, check_kernel, first_branch_set, prop_a1_closed_forms
from powersample.rng import substream


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return emit


def _kernels(model, T, alpha, beta=4.0):
    prop = low_temperature_model(model, alpha)
    return {name: exact_mh_kernel(model, law, prop, alpha, T)
            for name, law in (("ec", EntropyCut(beta, 0.0)), ("unif", UniformCut()))}


def test_criterion_1_kernel_correctness(report):
    t0 = time.perf_counter()
    worst = 0.0
    for eta in (0.0, 0.2):
        spec = SymmetricTreeSpec(8, (2, 5), (2, 2), eta)
        _, model = build_symmetric_tree(spec, 0)
        for K in _kernels(model, 8, spec.alpha).values():
            v = check_kernel(K)
            worst = max(worst, v["stationarity"], v["detailed_balance"])
    elapsed = time.perf_counter() - t0
    report(1, worst <= 1e-10 and elapsed < 5,
           f"max stationarity/detailed-balance error {worst:.1e}, {elapsed:.2f}s")


CRIT2_MODEL = dict(vocab_size=3, max_depth=4, rng=0)
CRIT2 = dict(alpha=2.0, B=4, n_mcmc=200, particles=256)
N_CHAINS = 100_000


@pytest.fixture(scope="module")
def crit2_setup():
    model = random_tabular_model(**CRIT2_MODEL)
    target = enumerate_power_distribution(model, 4, CRIT2["alpha"])
    return model, target


def test_criterion_2_sampler_tv(report, crit2_setup):
    model, target = crit2_setup
    built = BuiltModel(model, 4, info={"source": "random"})
    t0 = time.perf_counter()
    tvs = {}
    for name in ("entropy-cut", "uniform-cut", "smc"):
        s = SamplerSection(name=name, **CRIT2)
        run = run_sampler(name, built, s, N_CHAINS, seed=2024, block_size=4096)
        assert len(run.tokens) == N_CHAINS
        tvs[name] = tv_distance(empirical_distribution(run.tokens), target)
    elapsed = time.perf_counter() - t0
    detail = ", ".join(f"{k} TV={v:.4f}" for k, v in tvs.items()) + f", {elapsed:.0f}s"
    report(2, max(tvs.values()) <= 0.02 and elapsed < 180, detail)


@pytest.fixture(scope="module")
def theory_tree():
    spec = SymmetricTreeSpec(64, (2, 32, 48), (2, 2, 2), 0.0)
    tree, model = build_symmetric_tree(spec, 0)
    return tree, model, _kernels(model, 64, spec.alpha)


def test_criterion_3_mixing_separation(report, theory_tree):
    t0 = time.perf_counter()
    tree, model, K = theory_tree
    eps = 0.25
    tau_ec = mixing_time(K["ec"], eps).steps
    tau_unif = mixing_time(K["unif"], eps).steps
    upper = math.ceil(2 * tree.spec.k * math.log(1 / eps))
    lower = c_eps(eps) * 64 / 2
    elapsed = time.perf_counter() - t0
    ok = (upper == 9 and tau_ec <= upper and tau_unif >= lower
          and tau_unif / tau_ec >= 4 and elapsed < 30)
    report(3, ok, f"tau_ec={tau_ec} <= {upper}, tau_unif={tau_unif} >= {lower:.2f}, "
                  f"ratio {tau_unif / tau_ec:.1f}")


def test_criterion_4_conductance_and_minorization(report, theory_tree):
    tree, model, K = theory_tree
    tol = 1e-9
    S = first_branch_set(tree, K["ec"])
    phi_u, phi_e = conductance(K["unif"], S), conductance(K["ec"], S)
    m1 = m1_constant(tree, low_temperature_model(model, tree.spec.alpha), tree.spec.alpha)
    margin = minorization_margin(K["ec"], tree.spec.k, m1)
    ok = (phi_u <= 1 / 32 + tol and phi_e >= 1 / 6 - tol and abs(m1 - 1) <= tol
          and margin >= 1 - tol)
    report(4, ok, f"Phi_unif={phi_u:.5f} <= 1/32, Phi_ec={phi_e:.5f} >= 1/6, "
                  f"M1={m1:.12f}, margin={margin:.12f}")


def test_criterion_5_prop_a1(report):
    t0 = time.perf_counter()
    model = prop_a1_construct(2.0, 0.1)
    R, N = model.metadata["R"], model.metadata["N"]
    power = enumerate_power_distribution(model, 1, 2.0)
    low = exact_low_temperature_distribution(model, 1, 2.0)
    tv = tv_distance(power, low)
    pi_a, phi_a = prop_a1_closed_forms(R, N, 2.0)
    err = max(abs(power.event(lambda x: x[0] == 0) - pi_a),
              abs(low.event(lambda x: x[0] == 0) - phi_a),
              abs(pi_a - 1 / (1 + R**2 / N)), abs(phi_a - 1 / (1 + R**2)))
    elapsed = time.perf_counter() - t0
    report(5, tv >= 0.9 and err <= 1e-12 and elapsed < 1,
           f"R={R}, N={N}, TV={tv:.4f}, closed-form error {err:.1e}, {elapsed:.3f}s")


def test_criterion_6_equivalences(report):
    _, tree_model = build_symmetric_tree(SymmetricTreeSpec(8, (2, 5), (2, 2), 0.2), 1)
    prop = low_temperature_model(tree_model, 4.0)
    k0 = exact_mh_kernel(tree_model, EntropyCut(0.0, 0.0), prop, 4.0, 8)
    ku = exact_mh_kernel(tree_model, UniformCut(), prop, 4.0, 8)
    kernel_err = float(np.abs(k0.matrix - ku.matrix).max())

    model = random_tabular_model(3, 4, 5)
    p1 = enumerate_power_distribution(model, 4, 1.0)
    base = exact_low_temperature_distribution(model, 4, 1.0)
    dist_err = max(abs(p - base.prob(s)) for s, p in zip(p1.sequences, p1.probs))

    lt = low_temperature_model(model, 1.0)
    rng = np.random.default_rng(0)
    identical = all(
        lt.next_dist(pre).tobytes() == model.next_dist(pre).tobytes()
        for pre in [()] + [tuple(rng.integers(0, 3, size=d)) for d in (1, 2, 3, 4) for _ in range(5)])
    report(6, kernel_err <= 1e-12 and dist_err <= 1e-12 and identical,
           f"beta=0 kernel diff {kernel_err:.1e}, alpha=1 dist diff {dist_err:.1e}, "
           f"alpha=1 proposal bitwise identical: {identical}")


def test_criterion_7_proxy_direction(report):
    tree, model = build_symmetric_tree(SymmetricTreeSpec(15, (1, 4), (2, 2)), 0)
    wins = 0
    for seed in range(100):
        rep = decile_resample_experiment(model, 15, 5, 16, substream(7, seed), tree.leaf_index)
        wins += (rep.top.mean_edit_distance > rep.bottom.mean_edit_distance
                 and rep.top.mean_distinct_fraction > rep.bottom.mean_distinct_fraction)
    report(7, wins >= 95, f"top decile strictly greater in {wins}/100 trials")


def test_criterion_8_pass_at_k_exhaustive(report):
    checked = mismatches = 0
    for n in range(1, 13):
        for c in range(n + 1):
            correct = set(range(c))
            for k in range(1, n + 1):
                subsets = list(itertools.combinations(range(n), k))
                brute = Fraction(sum(bool(correct.intersection(s)) for s in subsets), len(subsets))
                closed = 1 - Fraction(math.comb(n - c, k), math.comb(n, k))
                mismatches += not (pass_at_k(n, c, k, exact=True) == brute == closed)
                checked += 1
    report(8, mismatches == 0, f"{checked} (n, c, k) triples, {mismatches} mismatches")


def test_criterion_9_remote_round_trip(report, crit2_setup):
    model, target = crit2_setup
    cfg = StageConfig(T=4, B=4, n_mcmc=200, alpha=2.0)
    block = 4096
    same_decisions = True
    remote_tokens = []
    with LoopbackServer(model) as srv:
        remote = RemoteModel(RemoteModelConfig(endpoint=srv.url))
        remote_prop = low_temperature_model(remote, 2.0)
        local_prop = low_temperature_model(model, 2.0)
        for i, start in enumerate(range(0, N_CHAINS, block)):
            n = min(block, N_CHAINS - start)
            r = run_chains(remote, remote_prop, EntropyCut(), cfg, substream(99, i), n, record=True)
            loc = run_chains(model, local_prop, EntropyCut(), cfg, substream(99, i), n, record=True)
            same_decisions &= all(np.array_equal(a["accepted"], b["accepted"])
                                  for a, b in zip(r.trace, loc.trace))
            same_decisions &= np.array_equal(r.tokens, loc.tokens)
            remote_tokens.append(r.tokens)
        n_requests = srv.n_requests
    tv = tv_distance(empirical_distribution(np.concatenate(remote_tokens)), target)
    report(9, tv <= 0.02 and same_decisions,
           f"remote TV={tv:.4f}, acceptance decisions identical: {same_decisions}, "
           f"{n_requests} HTTP requests")


def test_criterion_10_cli_determinism(report, tmp_path):
    configs = {
        "compare": {"seed": 3, "repetitions": 500, "block_size": 128,
                    "model": {"source": "random", "vocab_size": 3, "depth": 4},
                    "sampler": {"alpha": 2.0, "B": 2, "n_mcmc": 4, "particles": 8,
                                "tmc_B": 2, "tmc_K": 2, "tmc_M": 2},
                    "compare": {"samplers": ["standard", "low-temperature", "entropy-cut",
                                             "uniform-cut", "smc", "tmc"]}},
        "sweep": {"seed": 4, "repetitions": 300, "block_size": 64,
                  "model": {"source": "tree"},
                  "sweep": {"param": "beta", "values": [0, 4]}},
        "theory-check": {"model": {"source": "tree"}},
        "proxy-experiment": {"seed": 5, "model": {"source": "tree"}, "proxy": {"trials": 4}},
        "oracle": {"model": {"source": "prop_a1"}, "sampler": {"alpha": 2.0}},
    }
    files = ("config.snapshot", "sequences.jsonl", "trace.jsonl", "metrics.csv", "report.json")
    differing = []
    for command, cfg in configs.items():
        path = tmp_path / f"{command}.json"
        path.write_text(json.dumps(cfg))
        dirs = []
        for attempt, workers in enumerate((1, 1, 4)):
            out = tmp_path / f"{command}-{attempt}"
            assert main([command, "--config", str(path), "--out", str(out),
                         "--workers", str(workers)]) == 0
            (run,) = out.iterdir()
            dirs.append(run)
        for name in files:
            blobs = {(d / name).read_bytes() for d in dirs}
            if len(blobs) != 1:
                differing.append(f"{command}/{name}")
    report(10, not differing,
           f"{len(configs)} commands x 3 runs (workers 1, 1, 4); differing files: "
           f"{differing or 'none'}")
