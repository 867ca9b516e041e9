"""Configuration records and the INI-style run-config loader.

Run configs are flat ``key = value`` files with one section per module::

    [model]
    k = 36
    [train]
    steps = 5000

Overrides use ``section.key=value`` and win over file values. Unknown
sections or keys are rejected.
"""
from __future__ import annotations

import ast
import configparser
import dataclasses
import io
import math
from dataclasses import dataclass, field, fields

from lovmm.errors import ConfigError

ABLATIONS = ("none", "no_augmentation", "crop_input", "no_bottleneck", "dof3")


@dataclass
class ModelConfig:
    H: int = 80
    W: int = 160
    c: int = 16
    k: int = 36
    d: int = 3
    d_prime: int = 24
    # semantic stream: frozen toy encoder width, then decoder widths (C_v per layer)
    image_channels: int = 32
    semantic_channels: tuple = (32, 16)
    # spatial stream: encoder widths (C_d per layer, mirrored by the decoder)
    spatial_channels: tuple = (16, 32)
    n_bottleneck: int = 2
    text_dim: int = 1024
    mlp_hidden: int = 32
    roll_range: float = math.pi / 4
    pitch_range: float = math.pi / 4
    z_max: float = 0.25
    crop_input: bool = False
    use_dof: bool = True
    workspace_extent: tuple = (0.4, 0.8)
    seed: int = 0

    def __post_init__(self):
        self.semantic_channels = tuple(self.semantic_channels)
        self.spatial_channels = tuple(self.spatial_channels)
        self.workspace_extent = tuple(self.workspace_extent)
        if self.c % 2:
            raise ConfigError(f"crop size c must be even, got {self.c}")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.d_prime % 3:
            raise ConfigError(f"d_prime must be divisible by 3, got {self.d_prime}")
        if len(self.semantic_channels) != len(self.spatial_channels):
            raise ConfigError("semantic and spatial streams need the same number of decoder layers")
        down = 2 ** len(self.spatial_channels)
        if self.H % down or self.W % down or self.c % down:
            raise ConfigError(f"H, W and c must be divisible by {down}")

    @property
    def pixel_size(self) -> float:
        return self.workspace_extent[0] / self.H

    @property
    def dof_ranges(self) -> dict:
        return {
            "roll": (-self.roll_range, self.roll_range),
            "pitch": (-self.pitch_range, self.pitch_range),
            "z": (0.0, self.z_max),
        }

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v)
                for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)

    @classmethod
    def preset(cls, name: str) -> "ModelConfig":
        if name == "desk":
            return cls()
        if name == "paper":
            return cls(H=320, W=640, c=64, semantic_channels=(64, 32), spatial_channels=(32, 64))
        if name == "tiny":
            return cls(H=8, W=16, c=4, k=4, d=2, d_prime=6, image_channels=4,
                       semantic_channels=(4, 3), spatial_channels=(3, 4), n_bottleneck=1,
                       text_dim=16, mlp_hidden=4)
        raise ConfigError(f"unknown model preset {name!r} (desk, paper, tiny)")


@dataclass
class TrainConfig:
    steps: int = 5000
    batch_size: int = 1
    lr: float = 1e-4
    lr_decay_every: int = 2000
    lr_decay: float = 0.5
    augment: bool = True
    photometric: bool = True
    max_translation: int = 16        # pixels
    brightness: tuple = (0.7, 1.3)
    noise_sigma: float = 0.01
    blur_prob: float = 0.5
    noise_prob: float = 0.5
    brightness_prob: float = 0.5
    blur_kernel: int = 3
    val_interval: int = 500
    val_episodes: int = 20
    val_seed: int = 10_000
    checkpoint_every: int = 0        # 0: only at validation steps
    seed: int = 0
    weighted_sampling: bool = False
    task_weights: dict = field(default_factory=dict)
    ablation: str = "none"

    def __post_init__(self):
        self.brightness = tuple(self.brightness)
        if self.steps < 0 or self.batch_size < 1 or self.lr <= 0 or self.val_interval < 1:
            raise ConfigError("training steps/batch/lr/interval must be positive")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation {self.ablation!r}; choose from {ABLATIONS}")

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v)
                for f in fields(self)}

    @classmethod
    def preset(cls, name: str) -> "TrainConfig":
        if name == "desk":
            return cls()
        if name == "paper":
            return cls(steps=600_000, lr_decay_every=200_000, val_interval=10_000)
        raise ConfigError(f"unknown train preset {name!r} (desk, paper)")


def apply_ablation(model: ModelConfig, train: TrainConfig, ablation: str):
    """Return copies of the configs with one ablated component."""
    if ablation not in ABLATIONS:
        raise ConfigError(f"unknown ablation {ablation!r}; choose from {ABLATIONS}")
    model = dataclasses.replace(model)
    train = dataclasses.replace(train, ablation=ablation)
    if ablation == "no_augmentation":
        train.augment = False
        train.photometric = False
    elif ablation == "crop_input":
        model.crop_input = True
    elif ablation == "no_bottleneck":
        model.n_bottleneck = 0
    elif ablation == "dof3":
        model.use_dof = False
    return model, train


@dataclass
class EvalConfig:
    episodes: int = 100
    seed: int = 100_000
    demo_counts: tuple = (1, 10, 100)
    max_steps_slack: int = 2
    snap_threshold: float = 0.25


@dataclass
class MapSettings:
    grid_rows: int = 100
    grid_cols: int = 100
    resolution: float = 0.05
    embedding_dim: int = 512
    min_cluster_size: int = 4


SECTIONS = {
    "model": ModelConfig,
    "train": TrainConfig,
    "eval": EvalConfig,
    "map": MapSettings,
}


def _coerce(raw: str, default):
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {raw!r}")
    if isinstance(default, (int, float, tuple, list, dict)):
        try:
            val = ast.literal_eval(raw.strip())
        except (ValueError, SyntaxError) as exc:
            raise ConfigError(f"cannot parse {raw!r}") from exc
        if isinstance(default, float) and isinstance(val, int):
            val = float(val)
        if isinstance(default, tuple) and isinstance(val, list):
            val = tuple(val)
        return val
    return raw.strip()


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    map: MapSettings = field(default_factory=MapSettings)
    seed: int = 0
    output_dir: str = "runs/default"
    source: str | None = None

    @classmethod
    def load(cls, path: str | None = None, overrides: list[str] | tuple = ()) -> "RunConfig":
        values: dict[str, dict[str, str]] = {s: {} for s in SECTIONS}
        if path is not None:
            cp = configparser.ConfigParser()
            cp.optionxform = str
            try:
                with open(path) as f:
                    cp.read_file(f)
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            for section in cp.sections():
                if section not in SECTIONS:
                    raise ConfigError(f"unknown config section [{section}]")
                values[section].update(cp[section])
        for item in overrides:
            if "=" not in item or "." not in item.split("=", 1)[0]:
                raise ConfigError(f"override must look like section.key=value: {item!r}")
            key, raw = item.split("=", 1)
            section, name = key.split(".", 1)
            if section not in SECTIONS:
                raise ConfigError(f"unknown config section {section!r}")
            values[section][name] = raw
        built = {}
        for section, klass in SECTIONS.items():
            defaults = klass()
            known = {f.name for f in fields(klass)}
            kwargs = {}
            for name, raw in values[section].items():
                if name not in known:
                    raise ConfigError(f"unknown key {section}.{name}")
                kwargs[name] = _coerce(raw, getattr(defaults, name))
            built[section] = klass(**kwargs)
        return cls(**built, source=path)

    def to_ini(self) -> str:
        """Resolved config, embedded in run directories."""
        cp = configparser.ConfigParser()
        cp.optionxform = str
        for section in SECTIONS:
            obj = getattr(self, section)
            cp[section] = {f.name: repr(getattr(obj, f.name)) if not isinstance(getattr(obj, f.name), str)
                           else getattr(obj, f.name) for f in fields(obj)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()
