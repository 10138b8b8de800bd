"""Run configuration: defaults, key=value config files, and settings hashing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ParseError
from .train import GridSettings


@dataclass
class RunConfig:
    """Everything a CLI run needs; defaults reproduce the reference grid."""

    dataset_root: str = "."
    output_dir: str = "superdiff_out"
    color_spaces: tuple = ("Lab", "RGB", "HSV")
    sigma2_values: tuple = tuple(float(v) for v in range(10, 21))
    gaussian_variances: tuple = (0.5, 1.0, 2.0)
    n_superpixels: int = 200
    compactness: float = 10.0
    var_threshold: float = 0.05
    variance_mode: str = "unit"
    l_max: int = 30
    squared_affinity: bool = False
    eigvec_norm: str = "euclidean"
    use_features: bool = False
    seed_of_rng: int = 0
    jobs: int = 1

    def to_grid(self) -> GridSettings:
        return GridSettings(
            color_spaces=tuple(self.color_spaces),
            sigma2_values=tuple(float(v) for v in self.sigma2_values),
            gaussian_variances=tuple(float(v) for v in self.gaussian_variances),
            var_threshold=self.var_threshold,
            variance_mode=self.variance_mode,
            l_max=self.l_max,
            squared_affinity=self.squared_affinity,
            eigvec_norm=self.eigvec_norm,
        )

    def settings_hash(self) -> str:
        """Stable hash of every setting that affects outputs (for provenance)."""
        payload = asdict(self)
        payload.pop("output_dir")  # where results go does not change them
        payload.pop("jobs")  # aggregation is order-independent
        canon = json.dumps(payload, sort_keys=True, default=list)
        return hashlib.sha256(canon.encode()).hexdigest()[:12]

    def as_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(name: str, raw: str):
    default = getattr(RunConfig(), name)
    raw = raw.strip()
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ParseError(f"config key {name}: expected a boolean, got {raw!r}")
    if isinstance(default, tuple):
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if name == "color_spaces":
            return tuple(parts)
        return tuple(float(p) for p in parts)
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def load_config_file(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    """Read a plain-text ``key=value`` config (``#`` comments, blank lines ok)."""
    config = base or RunConfig()
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ParseError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            setattr(config, key, _parse_value(key, raw))
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return config
