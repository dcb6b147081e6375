"""Experiment scenario and its flat ``key = value`` config format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .errors import ParameterError
from .scene import TargetModel


class ConfigError(ParameterError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class Scenario:
    N: int = 20
    R: float = 10.0
    d0: float = 5.0
    P0: float = 5.0
    alpha: float = 0.0
    gamma: float = 0.25
    p_fa_target: float = 0.1
    p_fa_identical: float = 0.005
    trials: int | None = None
    seed: int = 0

    def __post_init__(self):
        _validate(self)

    @property
    def target(self) -> TargetModel:
        return TargetModel(P0=self.P0, d0=self.d0, R=self.R)

    def trials_or(self, default: int) -> int:
        return self.trials if self.trials is not None else default

    def echo(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


_INT_KEYS = {"N", "trials", "seed"}
KEYS = tuple(f.name for f in dataclasses.fields(Scenario))


def _validate(s: Scenario) -> None:
    def need(key, ok, msg):
        if not ok:
            raise ConfigError(key, f"{msg}, got {getattr(s, key)!r}")

    need("N", s.N >= 1, "must be >= 1")
    need("R", s.R > 0, "must be > 0")
    need("P0", s.P0 >= 0, "must be >= 0")
    need("d0", 0 <= s.d0 <= s.R, "must lie in [0, R]")
    need("alpha", 0 <= s.alpha <= 1, "must lie in [0, 1]")
    need("gamma", 0 < s.gamma < 1, "must lie in (0, 1)")
    need("p_fa_target", 0 < s.p_fa_target < 1, "must lie in (0, 1)")
    need("p_fa_identical", 0 < s.p_fa_identical < 1, "must lie in (0, 1)")
    need("trials", s.trials is None or s.trials >= 1, "must be >= 1")
    need("seed", 0 <= s.seed < 2**64, "must be an unsigned 64-bit integer")


def _coerce(key: str, raw: Any) -> Any:
    if key not in KEYS:
        raise ConfigError(key, f"unknown key (expected one of {', '.join(KEYS)})")
    try:
        if key in _INT_KEYS:
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError
            return int(raw) if not isinstance(raw, str) else int(raw.strip(), 0)
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(key, f"cannot parse {raw!r}") from None


def read_config_file(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        values[key.strip()] = value.strip()
    return values


def parse_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> Scenario:
    """Scenario from an optional file plus flag overrides (flags win; ``None`` means unset)."""
    raw: dict[str, Any] = {}
    if path is not None:
        raw.update(read_config_file(path))
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return Scenario(**{k: _coerce(k, v) for k, v in raw.items()})
