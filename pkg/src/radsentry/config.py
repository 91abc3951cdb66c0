"""Declarative pipeline configuration (JSON) with per-stage seed derivation."""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .baselines import ForestParams, LogRegParams, SvmParams
from .cluster_synth import AnomalyRules
from .evaluation import SplitConfig
from .gbdt import GbdtParams
from .ingest import DEFAULT_COLUMNS, DEFAULT_UNITS
from .preprocess import NoiseConfig
from .tuning import SearchSpace

BUNDLED_EXPORT = "safecast_desk_export.csv"
BUNDLED_CONFIG = "desk_config.json"

# fixed offsets from the root seed; changing one stage's seed never shifts another's
SEED_OFFSETS = {
    "cluster": 101,
    "smote": 202,
    "noise": 303,
    "split": 404,
    "gbdt": 505,
    "tune": 606,
    "forest": 707,
    "logreg": 808,
    "svm": 909,
}


class ConfigError(ValueError):
    pass


@dataclass
class Paths:
    input: str | None = None  # None -> bundled desk export
    work_dir: str = "radsentry_out"


@dataclass
class ClusterConfig:
    k: int | None = None  # None -> search
    k_min: int = 5
    k_max: int = 100
    n_trials: int = 10
    max_iters: int = 300
    tol: float = 1e-4
    n_init: int = 1


@dataclass
class SynthConfig:
    n_synthetic: int | None = None  # None -> ratio x original rows
    synthesis_ratio: float = 40_000 / 130_000
    k_neighbors: int = 5


@dataclass
class TuneConfig:
    n_trials: int = 20
    validation_fraction: float = 0.25
    space: SearchSpace = field(default_factory=SearchSpace)


@dataclass
class BenchConfig:
    warmup_passes: int = 3
    measured_passes: int = 10


@dataclass
class PipelineConfig:
    seed: int = 2024
    paths: Paths = field(default_factory=Paths)
    schema: dict = field(default_factory=lambda: dict(DEFAULT_COLUMNS))
    units: tuple = DEFAULT_UNITS
    clustering: ClusterConfig = field(default_factory=ClusterConfig)
    anomaly: AnomalyRules = field(default_factory=AnomalyRules)
    synth: SynthConfig = field(default_factory=SynthConfig)
    noise_eta: float = 0.01
    noise_synthetic_only: bool = False
    test_fraction: float = 0.20
    stratified: bool = True
    gbdt: GbdtParams = field(default_factory=GbdtParams)
    forest: ForestParams = field(default_factory=ForestParams)
    logreg: LogRegParams = field(default_factory=LogRegParams)
    svm: SvmParams = field(default_factory=SvmParams)
    tune: TuneConfig = field(default_factory=TuneConfig)
    compact_threshold: float = 0.90
    bench: BenchConfig = field(default_factory=BenchConfig)

    def stage_seed(self, stage: str) -> int:
        return self.seed + SEED_OFFSETS[stage]

    # derived sub-configs; seeds always come from the root seed
    def noise(self) -> NoiseConfig:
        return NoiseConfig(self.noise_eta, self.stage_seed("noise"), self.noise_synthetic_only)

    def split(self) -> SplitConfig:
        return SplitConfig(self.test_fraction, self.stratified, self.stage_seed("split"))

    def validation_split(self) -> SplitConfig:
        return SplitConfig(self.tune.validation_fraction, True, self.stage_seed("split") + 1)

    def gbdt_params(self) -> GbdtParams:
        return self.gbdt.with_(seed=self.stage_seed("gbdt"))

    def forest_params(self) -> ForestParams:
        return dataclasses.replace(self.forest, seed=self.stage_seed("forest"))

    def logreg_params(self) -> LogRegParams:
        return dataclasses.replace(self.logreg, seed=self.stage_seed("logreg"))

    def svm_params(self) -> SvmParams:
        return dataclasses.replace(self.svm, seed=self.stage_seed("svm"))

    def input_path(self) -> Path:
        if self.paths.input is None:
            return Path(str(resources.files("radsentry") / "data" / BUNDLED_EXPORT))
        return Path(self.paths.input)

    def work_dir(self) -> Path:
        return Path(self.paths.work_dir)

    def validate(self) -> None:
        if self.paths.input is not None and Path(self.paths.input).resolve() == Path(self.paths.work_dir).resolve():
            raise ConfigError("input path and work_dir must differ")
        if not self.units:
            raise ConfigError("units filter set is empty")
        c = self.clustering
        if c.k is not None and c.k < 1:
            raise ConfigError("clustering.k must be >= 1")
        if c.k is None and not 1 <= c.k_min <= c.k_max:
            raise ConfigError("clustering requires 1 <= k_min <= k_max")
        if self.synth.synthesis_ratio < 0 or (self.synth.n_synthetic is not None and self.synth.n_synthetic < 0):
            raise ConfigError("synthetic row count must be non-negative")
        if not 0 < self.tune.validation_fraction < 1:
            raise ConfigError("tune.validation_fraction must lie in (0, 1)")
        if not 0 < self.compact_threshold <= 1:
            raise ConfigError("compact_threshold must lie in (0, 1]")
        if self.tune.n_trials < 1:
            raise ConfigError("tune.n_trials must be >= 1")
        # constructing these runs each module's own validation
        self.noise()
        self.split()

    def n_synthetic(self, n_original: int) -> int:
        if self.synth.n_synthetic is not None:
            return self.synth.n_synthetic
        return int(round(self.synth.synthesis_ratio * n_original))


_NESTED = {
    "paths": Paths,
    "clustering": ClusterConfig,
    "anomaly": AnomalyRules,
    "synth": SynthConfig,
    "gbdt": GbdtParams,
    "forest": ForestParams,
    "logreg": LogRegParams,
    "svm": SvmParams,
    "tune": TuneConfig,
    "bench": BenchConfig,
}


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    kw = dict(data)
    if cls is TuneConfig and "space" in kw:
        kw["space"] = SearchSpace.from_dict(kw["space"])
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(data: dict, base_dir: Path | None = None) -> PipelineConfig:
    data = dict(data)
    names = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown config key(s) {sorted(unknown)}")
    kw = {}
    for key, value in data.items():
        if key in _NESTED:
            kw[key] = _build(_NESTED[key], value, key)
        elif key == "units":
            kw[key] = tuple(value)
        else:
            kw[key] = value
    cfg = PipelineConfig(**kw)
    if base_dir is not None:
        # relative paths are resolved against the config file's directory
        p = cfg.paths
        if p.input is not None and not os.path.isabs(p.input):
            p.input = str(base_dir / p.input)
        if not os.path.isabs(p.work_dir):
            p.work_dir = str(base_dir / p.work_dir)
    cfg.validate()
    return cfg


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        if isinstance(obj, SearchSpace):
            return obj.to_dict()
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    return obj


def config_to_dict(cfg: PipelineConfig) -> dict:
    out = _plain(cfg)
    # stage seeds derive from the root seed and are not configurable per stage
    for key in ("gbdt", "forest", "logreg", "svm"):
        out[key].pop("seed", None)
    return out


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data, base_dir=path.parent)


def bundled_config_path() -> Path:
    return Path(str(resources.files("radsentry") / "data" / BUNDLED_CONFIG))


def save_config(cfg: PipelineConfig, path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
