"""Experiment configuration files.

A config is a single JSON document.  Every section is optional and falls back
to the defaults below; unknown keys anywhere are rejected.  Example::

    {
      "schema_version": 1,
      "seed": 7,
      "repetitions": 2000,
      "model": {"source": "random", "vocab_size": 3, "depth": 4},
      "sampler": {"name": "entropy-cut", "alpha": 2.0, "B": 4, "n_mcmc": 50}
    }

Sections: ``model``, ``sampler``, ``compare``, ``sweep``, ``theory``,
``proxy`` and ``metrics``.  See ``docs/config.md`` for every field.
"""

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

SCHEMA_VERSION = 1
MODEL_SOURCES = ("random", "tabular", "tree", "prop_a1", "remote")
SAMPLERS = ("standard", "low-temperature", "uniform-cut", "entropy-cut", "smc", "tmc")
POWER_SAMPLERS = ("uniform-cut", "entropy-cut", "smc", "tmc")
SWEEP_PARAMS = ("alpha", "beta", "n_mcmc", "particles")


@dataclass
class TreeSection:
    depth: int = 8
    branch_depths: list = field(default_factory=lambda: [2, 5])
    branching_factors: list = field(default_factory=lambda: [2, 2])
    eta: float = 0.0
    alpha: float = 4.0
    seed: int = 0


@dataclass
class PropA1Section:
    alpha: float = 2.0
    eps: float = 0.1


@dataclass
class ModelSection:
    source: str = "random"
    vocab_size: int = 3
    depth: int = 4
    concentration: float = 1.0
    seed: int = 0
    path: str = None
    tree: TreeSection = None
    prop_a1: PropA1Section = None
    remote: dict = None
    prompt: list = field(default_factory=list)


@dataclass
class SamplerSection:
    name: str = "entropy-cut"
    alpha: float = 4.0
    beta: float = 4.0
    eps: float = 0.0
    T: int = None
    B: int = None
    n_mcmc: int = 10
    particles: int = 64
    ess_threshold: float = 0.5
    tmc_B: int = 192
    tmc_K: int = 8
    tmc_M: int = 8
    tmc_selection: str = "softmax"
    init: list = None


@dataclass
class CompareSection:
    samplers: list = field(default_factory=lambda: ["entropy-cut", "uniform-cut"])


@dataclass
class SweepSection:
    param: str = "alpha"
    values: list = field(default_factory=lambda: [1.0, 2.0, 4.0])
    samplers: list = None


@dataclass
class TheorySection:
    eps_grid: list = field(default_factory=lambda: [0.25, 0.1, 0.05])
    max_states: int = 4096
    max_steps: int = 10**6


@dataclass
class ProxySection:
    cut_count: int = 5
    resamples: int = 16
    trials: int = 1
    answer: str = "final-token"


@dataclass
class MetricsSection:
    correct_answers: list = None
    k: list = field(default_factory=lambda: [1])


@dataclass
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    repetitions: int = 1000
    block_size: int = 4096
    record_trace: bool = True
    oracle: bool = True
    budget: int = 10**7
    output: str = "runs"
    model: ModelSection = field(default_factory=ModelSection)
    sampler: SamplerSection = field(default_factory=SamplerSection)
    compare: CompareSection = field(default_factory=CompareSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    theory: TheorySection = field(default_factory=TheorySection)
    proxy: ProxySection = field(default_factory=ProxySection)
    metrics: MetricsSection = field(default_factory=MetricsSection)

    def validate(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        if self.repetitions < 1 or self.block_size < 1:
            raise ConfigError("repetitions and block_size must be >= 1")
        m, s = self.model, self.sampler
        if m.source not in MODEL_SOURCES:
            raise ConfigError(f"model.source must be one of {MODEL_SOURCES}")
        if m.source == "tabular" and not m.path:
            raise ConfigError("model.path is required for tabular models")
        if m.source == "tabular" and not Path(m.path).is_file():
            raise ConfigError(f"model file {m.path} does not exist")
        if m.source == "remote" and not m.remote:
            raise ConfigError("model.remote is required for remote models")
        if m.source == "remote" and s.T is None:
            raise ConfigError("sampler.T is required for remote models")
        for name in [s.name, *self.compare.samplers, *(self.sweep.samplers or [])]:
            if name not in SAMPLERS:
                raise ConfigError(f"unknown sampler {name!r}; choose from {SAMPLERS}")
        if s.name in POWER_SAMPLERS and not s.alpha >= 1:
            raise ConfigError("alpha must be >= 1 for power samplers")
        if self.sweep.param not in SWEEP_PARAMS:
            raise ConfigError(f"sweep.param must be one of {SWEEP_PARAMS}")
        if not self.sweep.values:
            raise ConfigError("sweep.values must be non-empty")
        if self.proxy.answer not in ("final-token", "leaf-index"):
            raise ConfigError("proxy.answer must be 'final-token' or 'leaf-index'")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        sub = _SECTIONS.get((cls, key))
        if sub is not None and value is not None:
            value = _build(sub, value, f"{where}.{key}" if where else key)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


_SECTIONS = {
    (ExperimentConfig, "model"): ModelSection,
    (ExperimentConfig, "sampler"): SamplerSection,
    (ExperimentConfig, "compare"): CompareSection,
    (ExperimentConfig, "sweep"): SweepSection,
    (ExperimentConfig, "theory"): TheorySection,
    (ExperimentConfig, "proxy"): ProxySection,
    (ExperimentConfig, "metrics"): MetricsSection,
    (ModelSection, "tree"): TreeSection,
    (ModelSection, "prop_a1"): PropA1Section,
}


def config_from_dict(data):
    return _build(ExperimentConfig, data, "").validate()


def parse_config(text):
    """Parse config text; returns ``ExperimentConfig``."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return config_from_dict(data)


def load_config(path):
    """Read a config file; returns ``(config, raw_bytes)``."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(raw.decode("utf-8")), raw
