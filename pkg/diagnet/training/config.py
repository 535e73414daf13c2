import dataclasses
import typing
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional

from diagnet.core.common import Diagonal, LossKind, PoolMode, TargetMode
from diagnet.core.geometry import PatchGrid
from diagnet.core.head import DetectionLossWeights
from diagnet.exceptions import ConfigException
from diagnet.training.optimizers import OptimizerKind

_TRUE = {'1', 'true', 'yes', 'on'}
_FALSE = {'0', 'false', 'no', 'off'}


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 8
    lr_diag: float = 1e-2
    lr_head: float = 1e-3
    lr_finetune: float = 1e-4
    loss_kind: LossKind = LossKind.COMP
    mode: TargetMode = TargetMode.SOFT
    alpha: float = 1.0
    diagonal: Diagonal = Diagonal.MAIN
    h_in: int = 64
    h: int = 8
    head_grid: Optional[int] = None
    seed: int = 0
    sentinel_loss: float = 1e6

    classes: int = 3
    channels: int = 32
    feature_seed: int = 1234
    l_reduced: Optional[int] = None
    head_hidden: int = 128
    pool_mode: PoolMode = PoolMode.AVG
    optimizer: OptimizerKind = OptimizerKind.ADAM
    momentum: float = 0.9
    finetune_neck: bool = True
    coord_weight: float = 5.0
    noobj_weight: float = 0.5

    @property
    def grid(self) -> PatchGrid:
        return PatchGrid(self.h_in, self.h)

    @property
    def s(self) -> int:
        return self.head_grid if self.head_grid is not None else max(1, self.h // 2)

    @property
    def reduced(self) -> int:
        return self.l_reduced if self.l_reduced is not None else max(1, self.channels // 4)

    @property
    def loss_weights(self) -> DetectionLossWeights:
        return DetectionLossWeights(self.coord_weight, self.noobj_weight)

    def validate(self) -> "TrainConfig":
        if self.epochs < 1:
            raise ConfigException(f'epochs must be at least 1, got {self.epochs}')
        if self.batch_size < 1:
            raise ConfigException(f'batch_size must be at least 1, got {self.batch_size}')
        for name in ('lr_diag', 'lr_head', 'lr_finetune'):
            if getattr(self, name) < 0:
                raise ConfigException(f'{name} must be non-negative, got {getattr(self, name)}')
        if self.mode == TargetMode.SOFT and self.alpha <= 0:
            raise ConfigException(f'alpha must be positive in soft mode, got {self.alpha}')
        if self.h < 2 or self.h_in % self.h != 0:
            raise ConfigException(f'h_in={self.h_in} must be divisible by h={self.h} (h >= 2)')
        if self.s < 1 or self.h % self.s != 0:
            raise ConfigException(f'head_grid={self.s} must divide h={self.h}')
        if self.channels < 8:
            raise ConfigException(f'channels must be at least 8, got {self.channels}')
        if self.reduced < 1 or self.head_hidden < 1:
            raise ConfigException('l_reduced and head_hidden must be positive')
        if self.classes < 1:
            raise ConfigException(f'classes must be positive, got {self.classes}')
        return self

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, bool):
                value = 'true' if value else 'false'
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f'{f.name}={value}')
        return '\n'.join(lines) + '\n'

    @staticmethod
    def from_pairs(pairs: Dict[str, str]) -> "TrainConfig":
        hints = typing.get_type_hints(TrainConfig)
        known = {f.name for f in dataclasses.fields(TrainConfig)}

        values = {}
        for key, raw in pairs.items():
            if key not in known:
                raise ConfigException(f'Unknown config key: {key}')
            values[key] = _coerce(key, raw, hints[key])

        return TrainConfig(**values).validate()

    @staticmethod
    def from_text(text: str) -> "TrainConfig":
        return TrainConfig.from_pairs(parse_key_values(text))

    @staticmethod
    def from_file(path: str) -> "TrainConfig":
        with open(path, 'r') as f:
            return TrainConfig.from_text(f.read())


def parse_key_values(text: str) -> Dict[str, str]:
    pairs = {}
    for line_number, line in enumerate(text.splitlines()):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigException(f'Line {line_number + 1} is not key=value: {line!r}')
        key, value = line.split('=', 1)
        pairs[key.strip()] = value.strip()
    return pairs

def _coerce(key: str, raw: str, hint):
    args = [a for a in typing.get_args(hint) if a is not type(None)]
    if args:
        if raw.lower() in ('', 'none'):
            return None
        hint = args[0]

    try:
        if isinstance(hint, type) and issubclass(hint, Enum):
            return hint(raw.lower())
        if hint is bool:
            if raw.lower() in _TRUE:
                return True
            if raw.lower() in _FALSE:
                return False
            raise ValueError(raw)
        return hint(raw)
    except ValueError:
        raise ConfigException(f'Invalid value for {key}: {raw!r}')
