"""Run configuration: JSON schema, defaults and dotted-key overrides."""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .empirical_bayes import EmpiricalBayesConfig
from .environment import ARRIVAL_MODES, ContextDistribution
from .policies import PolicyConfig

ENV_MODES = ("hierarchical", "sparse")
REGRET_MODES = ("realized", "weighted")
ESTIMATION_MODES = ("empirical_bayes", "fixed_prior")


@dataclass(frozen=True)
class EnvSpec:
    """Where the environment comes from.

    ``source="generate"`` draws a synthetic environment; with ``seed=None``
    every replication draws its own from the replication seed, otherwise
    all replications share the environment drawn from ``seed``.
    ``source="file"`` loads ``path``.
    """

    source: str = "generate"
    mode: str = "hierarchical"
    n_instances: int = 10
    n_arms: int = 5
    dim: int = 3
    arrival: str = "balanced"
    context: dict = field(default_factory=lambda: {"kind": "mixture_gaussian", "params": {}})
    sparsity: int = 1
    delta_scale: float = 1.0
    seed: Optional[int] = None
    path: Optional[str] = None

    def __post_init__(self):
        if self.source not in ("generate", "file"):
            raise ValueError(f"env.source must be 'generate' or 'file', got {self.source!r}")
        if self.source == "file":
            if not self.path:
                raise ValueError("env.path is required when env.source is 'file'")
            return
        if self.mode not in ENV_MODES:
            raise ValueError(f"env.mode must be one of {ENV_MODES}, got {self.mode!r}")
        if self.arrival not in ARRIVAL_MODES:
            raise ValueError(f"env.arrival must be one of {ARRIVAL_MODES}, got {self.arrival!r}")
        for name in ("n_instances", "n_arms", "dim"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ValueError(f"env.{name} must be a positive integer, got {v!r}")
        if not 0 <= self.sparsity <= self.dim:
            raise ValueError(f"env.sparsity must lie in [0, dim], got {self.sparsity}")
        self.context_distribution()

    def context_distribution(self) -> ContextDistribution:
        return ContextDistribution(self.context.get("kind", "mixture_gaussian"),
                                   dict(self.context.get("params", {})))


@dataclass(frozen=True)
class RunConfig:
    env: EnvSpec = field(default_factory=EnvSpec)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    horizon: int = 2000
    seeds: tuple = tuple(range(100))
    regret_mode: str = "realized"
    estimation: str = "empirical_bayes"
    eb: EmpiricalBayesConfig = field(default_factory=EmpiricalBayesConfig)
    output_dir: Optional[str] = None

    def __post_init__(self):
        if not isinstance(self.horizon, int) or self.horizon < 1:
            raise ValueError(f"horizon must be a positive integer, got {self.horizon!r}")
        if len(self.seeds) == 0:
            raise ValueError("seeds must be nonempty")
        if self.regret_mode not in REGRET_MODES:
            raise ValueError(f"regret_mode must be one of {REGRET_MODES}, got {self.regret_mode!r}")
        if self.estimation not in ESTIMATION_MODES:
            raise ValueError(f"estimation must be one of {ESTIMATION_MODES}, got {self.estimation!r}")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["seeds"] = list(self.seeds)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = copy.deepcopy(doc)
        _reject_unknown(doc, cls, "")
        kwargs = dict(doc)
        for name, sub in (("env", EnvSpec), ("policy", PolicyConfig), ("eb", EmpiricalBayesConfig)):
            if name in kwargs:
                _reject_unknown(kwargs[name], sub, name + ".")
                kwargs[name] = sub(**kwargs[name])
        if "seeds" in kwargs:
            kwargs["seeds"] = tuple(int(s) for s in kwargs["seeds"])
        return cls(**kwargs)


def _reject_unknown(doc, cls, prefix):
    if not isinstance(doc, dict):
        raise ValueError(f"{prefix.rstrip('.') or 'config'} must be a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(prefix + k for k in unknown)}")


def default_config_dict() -> dict:
    return RunConfig().to_dict()


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply ``key.sub=value`` strings to a config dict.

    Values are parsed as JSON when possible (``3``, ``0.1``, ``[1,2]``,
    ``null``) and kept as strings otherwise.  Only keys that exist in the
    default schema may be set.
    """
    doc = copy.deepcopy(doc)
    schema = default_config_dict()
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node, ref = doc, schema
        for p in parts[:-1]:
            if not isinstance(ref, dict) or p not in ref or not isinstance(ref[p], dict):
                raise ValueError(f"unknown config key {key!r}")
            ref = ref[p]
            node = node.setdefault(p, {})
        leaf = parts[-1]
        if not isinstance(ref, dict) or leaf not in ref:
            # context params are free-form per context kind
            if parts[:-1] != ["env", "context", "params"]:
                raise ValueError(f"unknown config key {key!r}")
        node[leaf] = _parse_value(raw)
    return doc


def load_config(path=None, overrides=()) -> RunConfig:
    doc = default_config_dict()
    if path is not None:
        user = json.loads(Path(path).read_text())
        _reject_unknown(user, RunConfig, "")
        for key, value in user.items():
            if isinstance(value, dict) and isinstance(doc.get(key), dict):
                doc[key] = {**doc[key], **value}
            else:
                doc[key] = value
    doc = apply_overrides(doc, overrides)
    return RunConfig.from_dict(doc)
