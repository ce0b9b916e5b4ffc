"""Pipeline configuration: a plain ``key = value`` file.

Blank lines and ``#`` comments are ignored; unknown keys are an error.
Relative paths resolve against the config file's directory, and the
``QMDS_DOCUMENTS``, ``QMDS_QA``, ``QMDS_VECTORS`` and ``QMDS_WORKDIR``
environment variables override the matching path keys.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping

from .embedding import DEFAULT_DIMENSION
from .miner import MinerConfig, ParameterError
from .vector_index import DEFAULT_LEAF_CAPACITY, DEFAULT_SEED, DEFAULT_SPILL_FRACTION

PATH_KEYS = ("documents", "qa", "vectors", "workdir")
EMBEDDERS = ("baseline", "precomputed")
ENV_PREFIX = "QMDS_"
# settings that cannot change any output byte
_NON_SEMANTIC = set(PATH_KEYS) | {"threads", "shards"}


class ConfigError(ParameterError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    documents: Path | None = None
    qa: Path | None = None
    vectors: Path | None = None
    workdir: Path = Path("work")
    embedder: str = "baseline"
    dimension: int = DEFAULT_DIMENSION
    leaf_capacity: int = DEFAULT_LEAF_CAPACITY
    spill_fraction: float = DEFAULT_SPILL_FRACTION
    seed: int = DEFAULT_SEED
    exact_mode: bool = True
    miner: MinerConfig = field(default_factory=MinerConfig)
    shards: int = 1
    threads: int = 1

    def __post_init__(self) -> None:
        if self.embedder not in EMBEDDERS:
            raise ConfigError("embedder", f"must be one of {', '.join(EMBEDDERS)}")
        if self.embedder == "baseline" and self.dimension < 8:
            raise ConfigError("dimension", "baseline embedder needs dimension >= 8")
        if self.dimension < 1:
            raise ConfigError("dimension", "must be positive")
        if self.leaf_capacity < 1:
            raise ConfigError("leaf_capacity", "must be >= 1")
        if not 0.0 <= self.spill_fraction < 0.5:
            raise ConfigError("spill_fraction", "must lie in [0, 0.5)")
        if self.shards < 1:
            raise ConfigError("shards", "must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads", "must be >= 1")

    def items(self) -> list[tuple[str, str]]:
        """Every setting as ``(key, text)`` in file order."""
        out = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "miner":
                out.extend(_miner_items(value))
            elif value is None:
                out.append((f.name, ""))
            elif isinstance(value, bool):
                out.append((f.name, "true" if value else "false"))
            else:
                out.append((f.name, str(value)))
        return out

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.items())

    def semantic_hash(self) -> str:
        """Digest of the settings that determine artifact contents."""
        text = "".join(f"{k}={v}\n" for k, v in self.items() if k not in _NON_SEMANTIC)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def with_overrides(self, **changes) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


def _miner_items(cfg: MinerConfig) -> list[tuple[str, str]]:
    out = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            out.append((f.name, "true" if value else "false"))
        elif isinstance(value, tuple):
            out.append((f.name, ", ".join(repr(v) for v in value)))
        else:
            out.append((f.name, repr(value) if isinstance(value, float) else str(value)))
    return out


_MINER_KEYS = {f.name for f in fields(MinerConfig)}
_PIPELINE_KEYS = {f.name for f in fields(PipelineConfig)} - {"miner"}


def _parse_bool(key: str, text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(key, f"expected a boolean, got {text!r}")


def _convert(key: str, text: str, kind):
    try:
        if kind is bool:
            return _parse_bool(key, text)
        if kind == "fractions":
            return tuple(float(x) for x in text.split(","))
        return kind(text)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(key, f"cannot parse {text!r}") from None


_KINDS = {
    "embedder": str,
    "dimension": int,
    "leaf_capacity": int,
    "spill_fraction": float,
    "seed": int,
    "exact_mode": bool,
    "shards": int,
    "threads": int,
    "theta_L": float,
    "theta_U": float,
    "top_k": int,
    "min_summary_recall": float,
    "split_fractions": "fractions",
    "dedup_url_host": bool,
}


def parse_config(text: str, base_dir: Path | None = None, env: Mapping[str, str] | None = None) -> PipelineConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        if key not in _MINER_KEYS and key not in _PIPELINE_KEYS:
            raise ConfigError(key, "unknown configuration key")
        if key in raw:
            raise ConfigError(key, "given more than once")
        raw[key] = value

    env = os.environ if env is None else env
    for key in PATH_KEYS:
        override = env.get(ENV_PREFIX + key.upper())
        if override:
            raw[key] = override

    pipeline: dict = {}
    miner: dict = {}
    for key, value in raw.items():
        if key in PATH_KEYS:
            if value:
                path = Path(value)
                if base_dir is not None and not path.is_absolute():
                    path = base_dir / path
                pipeline[key] = path
            continue
        converted = _convert(key, value, _KINDS[key])
        (miner if key in _MINER_KEYS else pipeline)[key] = converted
    try:
        miner_cfg = MinerConfig(**miner)
    except ParameterError as exc:
        raise ConfigError(exc.field, str(exc).split(": ", 1)[1]) from None
    return PipelineConfig(miner=miner_cfg, **pipeline)


def load_config(path: str | Path, env: Mapping[str, str] | None = None) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}") from None
    return parse_config(text, path.parent, env)
