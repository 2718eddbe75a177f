"""Run configuration: one JSON file, every default explicit.

Unknown keys are rejected at every level.  Relative paths are resolved
against the directory containing the config file.  A provenance file
written by any command is itself a valid config (its ``provenance`` block
is ignored on load), so replaying it reproduces the command's outputs.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .dsp import BandSpec, PreprocessSpec, TimeWindow
from .harness import TrainConfig
from .models import ARCHITECTURES, DEFAULTS, ModelConfig


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


Pair = tuple[float, float]


class ImportSection(_Strict):
    csv_dir: Optional[str] = None
    sampling_rate_hz: float = 250.0
    start_ms: float = -200.0
    n_samples: int = 801
    channels: Optional[list[str]] = None     # default: the 24 placeholder names


class PreprocessSection(_Strict):
    band: Optional[Pair] = (0.1, 45.0)
    filter_order: int = 4
    baseline: Optional[Pair] = (-200.0, 0.0)
    window: Optional[Pair] = (0.0, 1600.0)
    zscore: bool = True
    ica: bool = False

    def spec(self) -> PreprocessSpec:
        return PreprocessSpec(
            band=None if self.band is None else BandSpec(self.band[0], self.band[1], self.filter_order),
            baseline=None if self.baseline is None else TimeWindow(*self.baseline),
            window=None if self.window is None else TimeWindow(*self.window),
            zscore=self.zscore, ica=self.ica)


class SimilaritySection(_Strict):
    n_permutations: int = Field(10000, ge=1)
    main_band: Pair = (0.1, 45.0)
    main_window: Pair = (0.0, 1600.0)
    sweep_windows: list[Pair] = [(0.0, 1000.0), (100.0, 1200.0), (200.0, 1400.0), (300.0, 1600.0)]
    sweep_bands: list[Pair] = [(1.0, 10.0), (5.0, 20.0), (9.0, 30.0)]
    full: bool = False
    heatmap_range: Pair = (0.0, 1.0)
    heatmap_scale: int = Field(16, ge=1)


class PcaSection(_Strict):
    letters: list[str] = ["G", "I"]
    n_components: int = Field(3, ge=1)
    snapshot_times_ms: list[float] = [300.0, 500.0, 700.0, 900.0, 1100.0, 1300.0]

    @field_validator("letters")
    @classmethod
    def _letters(cls, v):
        for s in v:
            if len(s) != 1 or not ("A" <= s.upper() <= "Z"):
                raise ValueError(f"not a letter: {s!r}")
        return [s.upper() for s in v]


class SynthSection(_Strict):
    snr: float = Field(1.0, ge=0)
    n_per_class: int = Field(100, ge=1)
    trial_jitter_ms: float = Field(0.0, ge=0)
    session_drift: float = Field(0.0, ge=0)
    n_sessions: int = Field(1, ge=1)
    noise_scale: float = Field(1.0, ge=0)
    gain: Optional[float] = None
    template_seed: int = 0
    smoothness: float = Field(4.0, gt=0)
    rank: int = Field(3, ge=1)
    n_channels: int = Field(24, ge=1)
    n_samples: int = Field(400, ge=2)
    sampling_rate_hz: float = Field(250.0, gt=0)
    subject_id: str = "synth"


class TrainingSection(_Strict):
    lr: float = Field(1e-3, gt=0)
    betas: Pair = (0.9, 0.999)
    eps: float = Field(1e-8, gt=0)
    batch_size: int = Field(64, ge=2)
    patience: int = Field(20, ge=1)
    max_epochs: int = Field(300, ge=1)
    stop_at_perfect: bool = True
    k: int = Field(10, ge=2)
    folds: Optional[list[int]] = None        # subset of folds to run; default all
    t_test_mode: Literal["paired", "welch"] = "paired"
    save_checkpoints: bool = False

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.lr, tuple(self.betas), self.eps, self.batch_size, self.patience,
                           self.max_epochs, self.stop_at_perfect)


class ReportSection(_Strict):
    inputs: list[str] = []                   # RunReport JSON files; default: this run's report


def _default_models() -> dict:
    return {arch: {} for arch in ARCHITECTURES}


class RunConfig(_Strict):
    dataset: Optional[str] = None
    preprocessed: bool = False               # dataset already went through the pipeline
    subject_id: Optional[str] = None
    output: str = "out"
    seed: int = 0
    import_: ImportSection = Field(default_factory=ImportSection, alias="import")
    preprocessing: PreprocessSection = Field(default_factory=PreprocessSection)
    similarity: SimilaritySection = Field(default_factory=SimilaritySection)
    pca: PcaSection = Field(default_factory=PcaSection)
    synth: SynthSection = Field(default_factory=SynthSection)
    models: dict[str, dict] = Field(default_factory=_default_models)
    training: TrainingSection = Field(default_factory=TrainingSection)
    report: ReportSection = Field(default_factory=ReportSection)
    provenance: Optional[dict] = None

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    @field_validator("models")
    @classmethod
    def _models(cls, v):
        for name, over in v.items():
            arch = over.get("arch", name)
            if arch not in ARCHITECTURES:
                raise ValueError(f"model {name!r}: unknown architecture {arch!r}")
            fields = set(ModelConfig.__dataclass_fields__) - {"arch"}
            bad = sorted(set(over) - fields - {"arch"})
            if bad:
                raise ValueError(f"model {name!r}: unknown key(s) {bad}")
        return v

    def model_configs(self) -> dict:
        out = {}
        for name, over in self.models.items():
            over = dict(over)
            arch = over.pop("arch", name)
            try:
                out[name] = ModelConfig.for_arch(arch, **over)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"model {name!r}: {exc}") from None
        return out

    def resolved(self, base: Path) -> "RunConfig":
        """Copy with every path made absolute relative to ``base``."""
        def fix(p):
            return None if p is None else str((base / p).resolve()) if not Path(p).is_absolute() else p
        upd = {"dataset": fix(self.dataset), "output": fix(self.output)}
        imp = self.import_.model_copy(update={"csv_dir": fix(self.import_.csv_dir)})
        rep = self.report.model_copy(update={"inputs": [fix(p) for p in self.report.inputs]})
        return self.model_copy(update={**upd, "import_": imp, "report": rep})

    def to_json_dict(self) -> dict:
        """Fully expanded config, models included with their effective fields."""
        d = self.model_dump(mode="json", by_alias=True, exclude={"provenance"})
        d["models"] = {}
        for name, cfg in self.model_configs().items():
            full = cfg.to_dict()
            if full["arch"] == name:
                full.pop("arch")
            d["models"][name] = full
        return d


def load_config(path, overrides: dict | None = None) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"{path}: config file not found") from None
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: cannot read config ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = v
    try:
        cfg = RunConfig.model_validate(raw)
        cfg.model_configs()
    except ValidationError as exc:
        msgs = "; ".join(f"{'.'.join(map(str, e['loc']))}: {e['msg']}" for e in exc.errors())
        raise ConfigError(f"{path}: {msgs}") from None
    return cfg.resolved(path.parent.resolve())


def default_config_dict() -> dict:
    return RunConfig().to_json_dict()


__all__ = ["RunConfig", "ConfigError", "load_config", "default_config_dict", "DEFAULTS"]
