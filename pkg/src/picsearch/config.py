"""System configuration: a flat ``key = value`` text file plus overrides."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from .errors import ConfigError
from .fixedpoint import FxpConfig


@dataclass(frozen=True)
class SystemConfig:
    lambda_: int = 128
    m_lvl: int = 2
    word_bits: int = 40
    int_bits: int = 24
    scheme: str = "basic"
    c_policy: str = "sqrt_n"
    C: int = 0
    L: int = 1
    alpha: int = 1
    beta: int = 1
    k_nn: int = 5
    v: int = 1000
    kernel: str = "distance"
    kmeans_iters: int = 50
    workers: int = 1
    dim: int = 0
    seed: int = 0
    state_dir: str = "pic_state"

    def __post_init__(self):
        if self.scheme not in ("basic", "advanced"):
            raise ConfigError(f"scheme must be basic or advanced, not {self.scheme!r}")
        if self.c_policy not in ("sqrt_n", "explicit"):
            raise ConfigError(f"c_policy must be sqrt_n or explicit, not {self.c_policy!r}")
        if self.c_policy == "explicit" and self.C < 1:
            raise ConfigError("explicit c_policy needs C >= 1")
        if self.kernel not in ("distance", "dot"):
            raise ConfigError(f"kernel must be distance or dot, not {self.kernel!r}")
        for name in ("L", "alpha", "beta", "k_nn", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.v < 2:
            raise ConfigError("v must be >= 2")
        try:
            self.fxp
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def fxp(self) -> FxpConfig:
        return FxpConfig(self.word_bits, self.int_bits)

    def with_overrides(self, **values) -> "SystemConfig":
        return replace(self, **_coerce(values))

    def to_text(self) -> str:
        return "".join(f"{_public(k)} = {v}\n" for k, v in asdict(self).items())


def _public(name: str) -> str:
    return "lambda" if name == "lambda_" else name


def _coerce(values: dict) -> dict:
    types = {f.name: f.type for f in fields(SystemConfig)}
    out = {}
    for key, raw in values.items():
        name = "lambda_" if key == "lambda" else key
        if name not in types:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(raw, str) and types[name] in ("int", int):
            try:
                raw = int(raw)
            except ValueError:
                raise ConfigError(f"{key} must be an integer, got {raw!r}") from None
        out[name] = raw
    return out


def parse_config(text: str) -> SystemConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        values[key] = val
    return SystemConfig().with_overrides(**values)


def load_config(path) -> SystemConfig:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())
