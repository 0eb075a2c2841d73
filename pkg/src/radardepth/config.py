"""Run configuration: ``key = value`` text files with validated keys."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    t_abs: float = 1.0
    t_rel: float = 0.01
    v: int = 60
    tau: float = 0.5
    lr: float = 5e-5
    epochs: int = 10
    seed: int = 0
    d_max: float = 80.0
    invert_class_weights: bool = False
    negatives_include_uncovered: bool = False
    deterministic: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("t_abs", "lr", "d_max"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 < self.t_rel < 1:
            raise ConfigError(f"t_rel must lie in (0, 1), got {self.t_rel}")
        if self.v < 1:
            raise ConfigError(f"v must be >= 1, got {self.v}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not 0 <= self.tau <= 1:
            raise ConfigError(f"tau must lie in [0, 1], got {self.tau}")

    def as_dict(self) -> dict:
        return asdict(self)


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(name: str, typ, raw: str):
    try:
        if typ is bool or typ == "bool":
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if typ is int or typ == "int":
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def parse_config(text: str) -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment; unknown keys are errors."""
    types = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, types[key], raw)
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for k, v in cfg.as_dict().items():
        lines.append(f"{k} = {str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(lines) + "\n"
