"""Experiment configuration files (YAML) and their dataclass form."""
from dataclasses import asdict, dataclass, field, fields

import yaml

from .errors import ConfigError

PROBLEMS = ("quadratic", "diffusion")
METHODS = ("mc", "lsis", "lais-s", "lais-dm")


@dataclass
class ProblemConfig:
    name: str = "quadratic"
    n: int = 334
    kappa: float = 5.0
    elements: int = 512
    modes: int = 150
    corr_length: float = 0.01
    mean_a: float = 1.0
    var_a: float = 0.01


@dataclass
class MethodConfig:
    name: str = "lais-dm"
    n_ce: int = 1000
    j_max: int = 5
    epsilon: float = 0.1
    r_max: int = 20
    n_samples: int = 5000
    eig_tol: float = 1e-8


@dataclass
class EnsembleConfig:
    runs: int = 1
    base_seed: int = 0


@dataclass
class ExperimentConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    z: float = 4.0
    method: MethodConfig = field(default_factory=MethodConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    output: str = "results.csv"
    ldt_artifact: str = ""
    kl_cache: str = ""

    def validate(self):
        p, m, e = self.problem, self.method, self.ensemble
        if p.name not in PROBLEMS:
            raise ConfigError(f"problem.name must be one of {PROBLEMS}, got {p.name!r}")
        if m.name not in METHODS:
            raise ConfigError(f"method.name must be one of {METHODS}, got {m.name!r}")
        if p.name == "quadratic" and p.n < 2:
            raise ConfigError("quadratic problem needs n >= 2")
        if p.name == "diffusion" and p.modes > p.elements:
            raise ConfigError("diffusion problem needs modes <= elements")
        if min(m.n_ce, m.j_max, m.r_max, m.n_samples, e.runs) < 1:
            raise ConfigError("counts (n_ce, j_max, r_max, n_samples, runs) must be >= 1")
        if not m.epsilon > 0:
            raise ConfigError("method.epsilon must be positive")
        if e.base_seed < 0:
            raise ConfigError("ensemble.base_seed must be non-negative")
        return self

    @property
    def dimension(self):
        return self.problem.n if self.problem.name == "quadratic" else self.problem.modes


_SECTIONS = {"problem": ProblemConfig, "method": MethodConfig, "ensemble": EnsembleConfig}


def _coerce(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    out = {}
    for key, value in data.items():
        default = getattr(cls(), key) if key not in _SECTIONS else None
        if key in _SECTIONS and where == "config":
            out[key] = _coerce(_SECTIONS[key], value, key)
            continue
        try:
            if isinstance(default, bool) or default is None:
                out[key] = value
            elif isinstance(default, int):
                if isinstance(value, float) and not value.is_integer():
                    raise ValueError
                out[key] = int(value)
            elif isinstance(default, float):
                out[key] = float(value)
            else:
                out[key] = str(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}.{key}: cannot interpret {value!r}") from None
    return cls(**out)


def config_from_dict(data):
    return _coerce(ExperimentConfig, data or {}, "config").validate()


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)


def dump_config(cfg):
    return yaml.safe_dump(asdict(cfg), sort_keys=False)


def parse_config(text):
    try:
        return config_from_dict(yaml.safe_load(text))
    except yaml.YAMLError as exc:
        raise ConfigError(str(exc)) from exc
