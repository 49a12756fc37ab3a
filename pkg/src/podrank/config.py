"""Pipeline configuration: defaults, config-file parsing, flag overrides.

Config files are line-oriented `key = value` with `#` comments. Every key
has a declared type; unknown keys and uncastable values are rejected with
the offending key named. Command-line flags override file values.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Callable

from .corpus import SegmentationConfig
from .errors import ConfigError
from .fusion import FusionParams
from .index import Bm25Params
from .prf import Rm3Params
from .rerank import (
    LOSS_CROSS_ENTROPY,
    LOSS_HINGE,
    TrainConfig,
)

VARIANTS = ("sim", "reg", "reg-concat")


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: '{text}'")


@dataclass
class PipelineConfig:
    corpus: str | None = None
    queries: str | None = None
    qrels: str | None = None
    out_dir: str = "out"
    tag: str = "podrank"

    first_stage_k: int = 1000
    segment_k: int = 1000
    variant: str = "sim"
    provider: str = "hash"
    head: str | None = None
    seed: int = 0

    k1: float = 1.2
    b: float = 0.75

    fb_docs: int = 10
    fb_terms: int = 10
    rm3_alpha: float = 0.5
    dirichlet_mu: float = 2500.0

    window_s: float = 120.0
    stride_s: float = 60.0
    words_per_minute: float = 150.0

    dim: int = 64
    layers: int = 2

    fusion_alpha: float = 1.0

    loss: str = LOSS_CROSS_ENTROPY
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    max_epochs: int = 5
    patience: int = 2
    batch_size: int = 32

    include_empty: bool = False

    def bm25_params(self) -> Bm25Params:
        return Bm25Params(k1=self.k1, b=self.b)

    def rm3_params(self) -> Rm3Params:
        return Rm3Params(
            fb_docs=self.fb_docs,
            fb_terms=self.fb_terms,
            rm3_alpha=self.rm3_alpha,
            dirichlet_mu=self.dirichlet_mu,
        )

    def segmentation(self) -> SegmentationConfig:
        return SegmentationConfig(
            window_s=self.window_s,
            stride_s=self.stride_s,
            words_per_minute=self.words_per_minute,
        )

    def fusion_params(self) -> FusionParams:
        return FusionParams(alpha=self.fusion_alpha)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            loss=self.loss,
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            max_epochs=self.max_epochs,
            patience=self.patience,
            seed=self.seed,
            batch_size=self.batch_size,
        )

    def validate(self) -> None:
        if self.first_stage_k < 1:
            raise ConfigError("key 'first_stage_k': must be >= 1")
        if self.segment_k < 1:
            raise ConfigError("key 'segment_k': must be >= 1")
        if self.variant not in VARIANTS:
            raise ConfigError(
                f"key 'variant': expected one of {', '.join(VARIANTS)}, got '{self.variant}'"
            )
        if self.provider != "hash" and not self.provider.startswith("file:"):
            raise ConfigError(
                f"key 'provider': expected 'hash' or 'file:<path>', got '{self.provider}'"
            )
        if self.loss not in (LOSS_CROSS_ENTROPY, LOSS_HINGE):
            raise ConfigError(f"key 'loss': unknown loss '{self.loss}'")
        if self.dim < 1 or self.layers < 1:
            raise ConfigError("key 'dim'/'layers': must be >= 1")
        for key, build in (
            ("k1/b", self.bm25_params),
            ("fb_docs/fb_terms/rm3_alpha/dirichlet_mu", self.rm3_params),
            ("window_s/stride_s/words_per_minute", self.segmentation),
            ("fusion_alpha", self.fusion_params),
            ("learning_rate/weight_decay/max_epochs/patience/batch_size", self.train_config),
        ):
            try:
                build()
            except ValueError as exc:
                raise ConfigError(f"key '{key}': {exc}") from None


def _casters() -> dict[str, Callable[[str], object]]:
    casts: dict[str, Callable[[str], object]] = {}
    for config_field in fields(PipelineConfig):
        base = config_field.type.replace(" | None", "")
        if base == "str":
            casts[config_field.name] = str
        elif base == "int":
            casts[config_field.name] = int
        elif base == "float":
            casts[config_field.name] = float
        elif base == "bool":
            casts[config_field.name] = _parse_bool
        else:
            raise AssertionError(f"no caster for config field {config_field.name}")
    return casts


_CASTS = _casters()

CONFIG_KEYS = frozenset(_CASTS)


def read_config_file(path) -> dict[str, object]:
    values: dict[str, object] = {}
    try:
        handle = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    with handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}: line {line_no}: expected 'key = value'")
            key, _, raw = line.partition("=")
            key = key.strip()
            raw = raw.strip()
            if key not in _CASTS:
                raise ConfigError(f"{path}: line {line_no}: unknown key '{key}'")
            try:
                values[key] = _CASTS[key](raw)
            except ValueError:
                raise ConfigError(
                    f"{path}: line {line_no}: key '{key}': cannot parse '{raw}'"
                ) from None
    return values


def parse_config(config_path=None, overrides: dict[str, object] | None = None) -> PipelineConfig:
    """Defaults, then config-file values, then explicit overrides."""
    cfg = PipelineConfig()
    merged: dict[str, object] = {}
    if config_path is not None:
        merged.update(read_config_file(config_path))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _CASTS:
            raise ConfigError(f"unknown key '{key}'")
        merged[key] = value
    for key, value in merged.items():
        setattr(cfg, key, value)
    cfg.validate()
    return cfg
