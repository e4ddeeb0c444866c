"""Experiment configuration read from an INI file.

Example::

    [mechanism]
    kind = krr
    epsilon = 1.0
    k = 3

    [codec]
    seed = 0
    quantized = false

    [attack]
    kind = output
    ratio = 0.05
    strength = 1.0

    [detector]
    alpha = 1e-8

    [query]
    kind = frequency

    [dataset]
    synthetic_frequencies = 0.5, 0.3, 0.2

    [run]
    n = 10000
    seed = 0
    output_dir = out

Every key is optional except ``mechanism.kind``; see ``ExperimentConfig`` fields
for the defaults.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from peel.attacks import AttackConfig, AttackKind, OutputSurface
from peel.errors import ConfigurationError
from peel.estimators import QueryKind, QuerySpec
from peel.mechanisms import MechanismKind
from peel.sparsifier import AllocationMode

SECTIONS = ("mechanism", "codec", "attack", "detector", "query", "dataset", "run")


@dataclass(frozen=True)
class DetectorConfig:
    alpha: float = 1e-8
    tau_pattern: Optional[float] = None
    tau_mag: Optional[float] = None
    calibration_records: int = 10_000


@dataclass(frozen=True)
class DatasetConfig:
    """Either a CSV ``path`` with selected columns or a synthetic population.

    ``roles`` holds one of ``categorical``/``numeric`` per column. Without a path the
    synthetic generator is used with ``synthetic_frequencies`` (categorical mechanisms)
    or ``synthetic_means`` (numeric mechanisms); both default to spread-out profiles.
    """

    path: Optional[str] = None
    columns: tuple[str, ...] = ()
    roles: tuple[str, ...] = ()
    synthetic_frequencies: Optional[tuple[float, ...]] = None
    synthetic_means: Optional[tuple[float, ...]] = None


@dataclass(frozen=True)
class RunConfig:
    n: int = 10_000
    trials: int = 1
    seed: int = 0
    output_dir: str = "peel_out"
    allocation: AllocationMode = AllocationMode.OPTIMAL
    save_transmitted: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    mechanism: MechanismKind
    epsilon: float = 1.0
    k: Optional[int] = None
    codec_seed: int = 0
    quantized: bool = False
    attack: AttackConfig = field(default_factory=AttackConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    query: QuerySpec = field(default_factory=QuerySpec)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def __post_init__(self):
        object.__setattr__(self, "mechanism", MechanismKind(self.mechanism))
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")
        if self.run.n < 10:
            raise ConfigurationError("run.n must be at least 10")
        if self.run.trials < 1:
            raise ConfigurationError("run.trials must be at least 1")
        if self.k is not None and self.k < 3:
            raise ConfigurationError("k must be at least 3")
        if self.dataset.path is None and self.k is None:
            raise ConfigurationError("mechanism.k is required when no dataset path is given")
        if self.dataset.path is not None:
            if not self.dataset.columns:
                raise ConfigurationError("dataset.columns selects no columns")
            if len(self.dataset.roles) != len(self.dataset.columns):
                raise ConfigurationError("dataset.roles needs one role per selected column")

    def to_dict(self) -> dict:
        return json.loads(json.dumps(dataclasses.asdict(self), default=_jsonable))

    def config_hash(self) -> str:
        """Stable digest of everything that affects results (the output directory is excluded)."""
        d = self.to_dict()
        d["run"].pop("output_dir", None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)


def _jsonable(o):
    if isinstance(o, (frozenset, set)):
        return sorted(o)
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _floats(text: Optional[str]) -> Optional[tuple[float, ...]]:
    if text is None or not text.strip():
        return None
    return tuple(float(v) for v in text.split(","))


def _strings(text: Optional[str]) -> tuple[str, ...]:
    if text is None or not text.strip():
        return ()
    return tuple(v.strip() for v in text.split(","))


def _opt_float(sec, key):
    v = sec.get(key)
    return None if v is None or not v.strip() else float(v)


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"unreadable config: {exc}") from exc
    unknown = set(cp.sections()) - set(SECTIONS)
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
    for name in SECTIONS:
        if not cp.has_section(name):
            cp.add_section(name)
    m, c, a, d, q, ds, r = (cp[s] for s in SECTIONS)
    try:
        if "kind" not in m:
            raise ConfigurationError("mechanism.kind is required")
        target = _strings(a.get("target_set"))
        attack = AttackConfig(
            kind=AttackKind(a.get("kind", "none")),
            ratio=a.getfloat("ratio", 0.0),
            strength=a.getfloat("strength", 1.0),
            seed=a.getint("seed", 0),
            target_set=frozenset(int(v) for v in target) if target else None,
            budget_bounds=(a.getfloat("budget_low", 0.25), a.getfloat("budget_high", 4.0)),
            surface=OutputSurface(a.get("surface", "projected")),
            tamper_sidecar=a.getboolean("tamper_sidecar", False),
        )
        detector = DetectorConfig(
            alpha=d.getfloat("alpha", 1e-8),
            tau_pattern=_opt_float(d, "tau_pattern"),
            tau_mag=_opt_float(d, "tau_mag"),
            calibration_records=d.getint("calibration_records", 10_000),
        )
        query = QuerySpec(kind=QueryKind(q.get("kind", "mean")), weights=_floats(q.get("weights")))
        dataset = DatasetConfig(
            path=ds.get("path") or None,
            columns=_strings(ds.get("columns")),
            roles=_strings(ds.get("roles")),
            synthetic_frequencies=_floats(ds.get("synthetic_frequencies")),
            synthetic_means=_floats(ds.get("synthetic_means")),
        )
        run = RunConfig(
            n=r.getint("n", 10_000),
            trials=r.getint("trials", 1),
            seed=r.getint("seed", 0),
            output_dir=r.get("output_dir", "peel_out"),
            allocation=AllocationMode(r.get("allocation", "optimal")),
            save_transmitted=r.getboolean("save_transmitted", True),
        )
        k = m.get("k")
        return ExperimentConfig(
            mechanism=MechanismKind(m["kind"]),
            epsilon=m.getfloat("epsilon", 1.0),
            k=int(k) if k is not None and k.strip() else None,
            codec_seed=c.getint("seed", 0),
            quantized=c.getboolean("quantized", False),
            attack=attack, detector=detector, query=query, dataset=dataset, run=run,
        )
    except ConfigurationError:
        raise
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file {p} does not exist")
    return parse_config(p.read_text())


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, frozenset):
        v = sorted(v)
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt(x) for x in v)
    if hasattr(v, "value"):
        return str(v.value)
    return repr(v) if isinstance(v, float) else str(v)


def dump_config(cfg: ExperimentConfig) -> str:
    """Render ``cfg`` back to INI text that :func:`parse_config` reads to an equal config."""
    a, d, q, ds, r = cfg.attack, cfg.detector, cfg.query, cfg.dataset, cfg.run
    sections = {
        "mechanism": {"kind": cfg.mechanism, "epsilon": cfg.epsilon, "k": cfg.k},
        "codec": {"seed": cfg.codec_seed, "quantized": cfg.quantized},
        "attack": {"kind": a.kind, "ratio": a.ratio, "strength": a.strength, "seed": a.seed,
                   "target_set": a.target_set, "budget_low": a.budget_bounds[0],
                   "budget_high": a.budget_bounds[1], "surface": a.surface,
                   "tamper_sidecar": a.tamper_sidecar},
        "detector": {"alpha": d.alpha, "tau_pattern": d.tau_pattern, "tau_mag": d.tau_mag,
                     "calibration_records": d.calibration_records},
        "query": {"kind": q.kind, "weights": q.weights},
        "dataset": {"path": ds.path, "columns": ds.columns or None, "roles": ds.roles or None,
                    "synthetic_frequencies": ds.synthetic_frequencies,
                    "synthetic_means": ds.synthetic_means},
        "run": {"n": r.n, "trials": r.trials, "seed": r.seed, "output_dir": r.output_dir,
                "allocation": r.allocation, "save_transmitted": r.save_transmitted},
    }
    lines = []
    for name, kv in sections.items():
        lines.append(f"[{name}]")
        lines.extend(f"{key} = {_fmt(val)}" for key, val in kv.items() if val is not None)
        lines.append("")
    return "\n".join(lines)
