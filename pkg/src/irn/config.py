"""Plain-text ``key=value`` experiment configuration."""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .losses import LossWeights
from .models import ModelConfig


class ConfigError(ValueError):
    pass


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _int(v) -> int:
    if isinstance(v, bool):
        raise ConfigError(f"not an integer: {v!r}")
    f = float(v)
    if f != int(f):
        raise ConfigError(f"not an integer: {v!r}")
    return int(f)


def _opt_float(v) -> float | None:
    return None if v is None or str(v).strip().lower() in ("", "none", "auto") else float(v)


def _ints(v) -> tuple[int, ...]:
    if isinstance(v, (list, tuple)):
        return tuple(int(x) for x in v)
    s = str(v).strip().strip("[]")
    return tuple(int(float(x)) for x in s.replace(",", " ").split()) if s else ()


_CONVERTERS = {
    "int": _int, "float": float, "bool": _bool, "str": str,
    "tuple[int, ...]": _ints, "float | None": _opt_float,
}


@dataclass
class TrainConfig:
    # model
    variant: str = "IRN"
    scale: int = 2
    blocks: int = 4
    features: int = 16
    growth: int = 8
    clamp: float = 1.0
    # data
    batch: int = 4
    crop: int = 48
    flips: bool = True
    # schedule
    stage: int = 1
    iters: int = 2000
    lr: float = 2e-3
    milestones: tuple[int, ...] = (1400, 1800)
    seed: int = 0
    log_every: int = 10
    # objective
    lambda1: float = 1.0
    lambda2: float | None = None  # None means scale**2 (9 for IRN_color)
    lambda3: float = 1.0
    metric_x: str = "L1"
    metric_y: str = "L2"
    z_train: str = "sample"  # or "zero"
    z_samples: int = 1
    quantize: bool = True
    noise: float = 0.0  # uniform noise amplitude on the LR image before inversion
    # adversarial stage
    disc_iters: int = 200
    disc_width: int = 64
    lr_d: float = 1e-4

    def __post_init__(self):
        for f in fields(self):
            conv = _CONVERTERS[f.type]
            try:
                setattr(self, f.name, conv(getattr(self, f.name)))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {f.name}: {getattr(self, f.name)!r}") from exc
        self.validate()

    def validate(self) -> None:
        if self.variant not in ("IRN", "IRN_E", "IRN_LD", "IRN_color"):
            raise ConfigError(f"unknown variant {self.variant!r}")
        for key in ("batch", "crop", "blocks", "features", "growth", "z_samples"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be positive")
        if self.iters < 0:
            raise ConfigError("iters must be non-negative")
        if list(self.milestones) != sorted(self.milestones):
            raise ConfigError(f"milestones must be ascending, got {self.milestones}")
        if self.milestones and self.milestones[0] < 1:
            raise ConfigError(f"milestones must be positive, got {self.milestones}")
        if self.stage not in (1, 2):
            raise ConfigError("stage must be 1 or 2")
        if self.z_train not in ("sample", "zero"):
            raise ConfigError("z_train must be 'sample' or 'zero'")
        if self.crop % self.factor:
            raise ConfigError(f"crop {self.crop} is not divisible by scale {self.factor}")
        self.weights()

    @property
    def factor(self) -> int:
        return 1 if self.variant == "IRN_color" else self.scale

    def model_config(self) -> ModelConfig:
        scale = 1 if self.variant == "IRN_color" else self.scale
        return ModelConfig(self.variant, scale, self.blocks, self.features, self.growth, self.clamp, 3, self.seed)

    def weights(self) -> LossWeights:
        lam2 = self.lambda2
        if lam2 is None:
            lam2 = 9.0 if self.variant == "IRN_color" else float(self.scale ** 2)
        try:
            return LossWeights(self.lambda1, lam2, self.lambda3, 0.0, self.metric_x, self.metric_y)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict[str, str]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif v is None:
                v = "auto"
            out[f.name] = str(v)
        return out

    def replace(self, **overrides) -> "TrainConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        unknown = set(overrides) - set(d)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        d.update(overrides)
        return TrainConfig(**d)


FULL_SCALE = TrainConfig(blocks=8, features=32, growth=16, batch=16, crop=144, iters=500_000, lr=2e-4,
                          milestones=(100_000, 200_000, 300_000, 400_000), disc_iters=5000)


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        k, _, v = line.partition("=")
        out[k.strip()] = v.strip()
    return out


def load_config(path=None, overrides: list[str] | dict | None = None) -> TrainConfig:
    values: dict[str, str] = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text()))
    if isinstance(overrides, dict):
        values.update({k: str(v) for k, v in overrides.items()})
    elif overrides:
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override must be key=value, got {item!r}")
            k, _, v = item.partition("=")
            values[k.strip()] = v.strip()
    try:
        return TrainConfig().replace(**values)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def write_config(cfg: TrainConfig, path) -> None:
    Path(path).write_text("".join(f"{k}={v}\n" for k, v in cfg.to_dict().items()))
