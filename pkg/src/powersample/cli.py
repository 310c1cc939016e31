"""``powersample`` command-line interface.

Subcommands: ``sample``, ``compare``, ``theory-check``, ``proxy-experiment``,
``sweep`` and ``oracle``.  Every run writes ``<out>/<run-id>/`` containing
``config.snapshot``, ``sequences.jsonl``, ``trace.jsonl``, ``metrics.csv`` and
``report.json``; wall-clock timings go to ``timings.json`` so the other files
are byte-identical across reruns.

Exit codes: 0 success, 2 configuration error, 3 budget refusal, 4 backend error.
"""

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .config import ExperimentConfig, load_config
from .errors import BackendError, BudgetExceeded, ConfigError, InputError, PowerSampleError
from .experiments import (OracleCache, build_model, oracle_query, proxy_experiment,
                          run_sampler, sampler_metrics, sequence_rows, theory_check, with_param)
from .rng import GENERATOR_NAME

log = logging.getLogger("powersample")

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_BACKEND = 0, 2, 3, 4


def _dump(obj):
    return json.dumps(obj, sort_keys=True, allow_nan=True)


class Artifact:
    """Collects one run's outputs and writes them in a fixed layout."""

    def __init__(self, command, snapshot, seed, out):
        digest = hashlib.sha1(snapshot + f"|{command}|{seed}".encode()).hexdigest()[:12]
        self.run_id = f"{command}-{digest}"
        self.dir = Path(out) / self.run_id
        self.snapshot = snapshot
        self.sequences, self.trace, self.metrics = [], [], []
        self.metric_columns = ["sampler", "metric", "value"]
        self.report = {"command": command, "run_id": self.run_id, "seed": seed,
                       "rng": GENERATOR_NAME, "version": __version__}
        self.timings = {}

    def write(self):
        self.dir.mkdir(parents=True, exist_ok=True)
        (self.dir / "config.snapshot").write_bytes(self.snapshot)
        for name, rows in (("sequences.jsonl", self.sequences), ("trace.jsonl", self.trace)):
            with open(self.dir / name, "w") as fh:
                for row in rows:
                    fh.write(_dump(row) + "\n")
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.metric_columns)
        writer.writerows(self.metrics)
        (self.dir / "metrics.csv").write_text(buf.getvalue())
        (self.dir / "report.json").write_text(json.dumps(self.report, indent=2, sort_keys=True) + "\n")
        (self.dir / "timings.json").write_text(json.dumps(self.timings, indent=2) + "\n")
        return self.dir


def _run_samplers(cfg, built, names, art, workers, s=None, prefix=()):
    s = s or cfg.sampler
    oracle = OracleCache(built, cfg.budget, cfg.oracle)
    summary = {}
    for name in names:
        t0 = time.perf_counter()
        run = run_sampler(name, built, s, cfg.repetitions, cfg.seed, cfg.block_size,
                          workers, record=cfg.record_trace)
        art.timings[":".join(map(str, (*prefix, name)))] = time.perf_counter() - t0
        rows = sequence_rows(run, built)
        metrics = sampler_metrics(run, rows, s, oracle, cfg.metrics)
        for r in rows:
            r.update(zip(("param", "param_value"), prefix))
        art.sequences.extend(rows)
        art.trace.extend(dict(r, **dict(zip(("param", "param_value"), prefix))) for r in run.trace)
        art.metrics.extend([*prefix, name, metric, value] for metric, value in metrics)
        summary[name] = dict(metrics)
    if oracle.note:
        art.report.setdefault("notes", []).append(oracle.note)
    art.report["approximate"] = bool(getattr(built.model, "approximate", False))
    return summary


def cmd_sample(cfg, art, workers):
    built = build_model(cfg.model, cfg.sampler)
    art.report.update(model=built.info, T=built.T, sampler=cfg.sampler.name)
    art.report["metrics"] = _run_samplers(cfg, built, [cfg.sampler.name], art, workers)


def cmd_compare(cfg, art, workers):
    names = list(cfg.compare.samplers)
    if len(names) < 2:
        raise InputError("compare needs at least two samplers")
    built = build_model(cfg.model, cfg.sampler)
    art.report.update(model=built.info, T=built.T, samplers=names)
    art.report["metrics"] = _run_samplers(cfg, built, names, art, workers)


def cmd_sweep(cfg, art, workers):
    sw = cfg.sweep
    names = list(sw.samplers or [cfg.sampler.name])
    built = build_model(cfg.model, cfg.sampler)
    art.metric_columns = ["param", "param_value", "sampler", "metric", "value"]
    art.report.update(model=built.info, T=built.T, param=sw.param, values=sw.values,
                      samplers=names, metrics={})
    for value in sw.values:
        s = with_param(cfg.sampler, sw.param, value)
        res = _run_samplers(cfg, built, names, art, workers, s=s, prefix=(sw.param, value))
        art.report["metrics"][str(value)] = res


def cmd_theory_check(cfg, art, workers):
    built = build_model(cfg.model, cfg.sampler)
    rep = theory_check(built, cfg.sampler, cfg.theory, cfg.budget)
    art.report.update(rep)
    art.metric_columns = ["kernel", "metric", "value"]
    for row in rep.get("mixing", []):
        for name in ("entropy-cut", "uniform-cut"):
            art.metrics.append([name, f"tau_mix({row['eps']})", row[name]])
    for name, phi in rep.get("conductance", {}).items():
        art.metrics.append([name, "conductance_first_branch", phi])
    if "M1" in rep:
        art.metrics.append(["entropy-cut", "M1", rep["M1"]])
        art.metrics.append(["entropy-cut", "minorization_margin", rep["minorization_margin"]])


def cmd_proxy(cfg, art, workers):
    built = build_model(cfg.model, cfg.sampler)
    rep = proxy_experiment(built, cfg.proxy, cfg.seed)
    art.report.update(model=built.info, T=built.T, **rep)
    art.metric_columns = ["group", "metric", "value"]
    s = rep["summary"]
    for group in ("top", "bottom"):
        for key in ("mean_edit_distance", "mean_distinct_fraction"):
            art.metrics.append([group, key, s[f"{group}_{key}"]])


def cmd_oracle(cfg, art, workers):
    built = build_model(cfg.model, cfg.sampler)
    rep, power = oracle_query(built, cfg.sampler, cfg.budget)
    art.report.update(model=built.info, **rep)
    art.metric_columns = ["distribution", "metric", "value"]
    art.metrics += [["power", "log_z", rep["log_z"]],
                    ["low-temperature", "tv_to_power", rep["tv_power_low_temperature"]],
                    ["base", "tv_to_power", rep["tv_power_base"]]]
    art.extra = {"distribution.json": power.to_tabular(built.model.vocab_size).to_json()}


COMMANDS = {
    "sample": cmd_sample,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "theory-check": cmd_theory_check,
    "proxy-experiment": cmd_proxy,
    "oracle": cmd_oracle,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="powersample",
        description="Power-distribution samplers, exact oracles and mixing checks.")
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory (default: config 'output')")
    common.add_argument("--workers", type=int, default=1, help="worker threads for chain blocks")
    common.add_argument("--budget", type=int, help="enumeration budget for exact oracles")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=COMMANDS[name].__name__.replace("cmd_", ""))
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.config:
            cfg, snapshot = load_config(args.config)
        else:
            cfg = ExperimentConfig().validate()
            snapshot = (json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n").encode()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.budget is not None:
            cfg.budget = args.budget
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        art = Artifact(args.command, snapshot, cfg.seed, args.out or cfg.output)
        t0 = time.perf_counter()
        COMMANDS[args.command](cfg, art, args.workers)
        art.timings["total"] = time.perf_counter() - t0
        path = art.write()
        for name, doc in getattr(art, "extra", {}).items():
            (path / name).write_text(json.dumps(doc) + "\n")
    except (ConfigError, InputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as exc:
        print(f"budget refusal: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except PowerSampleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
