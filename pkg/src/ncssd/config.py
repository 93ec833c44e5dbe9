from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigError


@dataclass(frozen=True)
class BlockConfig:
    patch_size: int = 4  # feature downsample; also the convex-upsample factor
    embed_dim: int = 128  # D
    state_dim: int = 16  # N
    num_heads: int = 4
    num_blocks: int = 4
    conv_kernel: int = 3  # depthwise conv over the token grid

    def __post_init__(self):
        for name in ("embed_dim", "state_dim", "num_heads", "num_blocks", "conv_kernel"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.patch_size not in (4, 8):
            raise ConfigError(f"patch_size must be 4 or 8, got {self.patch_size}")
        if self.embed_dim % self.num_heads:
            raise ConfigError(f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}")
        if self.conv_kernel % 2 == 0:
            raise ConfigError("conv_kernel must be odd")


@dataclass(frozen=True)
class MatchConfig:
    context_dim: int = 128  # Dc; split into GRU hidden init and context input
    hidden_dim: int = 64
    motion_dim: int = 96
    corr_levels: int = 4
    radius: int = 4
    flow_iters: int = 12
    disparity_iters: int = 8
    disparity_scales: int = 3  # 1 = single-resolution refinement

    def __post_init__(self):
        if self.context_dim <= self.hidden_dim:
            raise ConfigError("context_dim must exceed hidden_dim")
        if self.corr_levels < 1 or self.radius < 0:
            raise ConfigError("corr_levels >= 1 and radius >= 0 required")
        if self.disparity_scales not in (1, 2, 3):
            raise ConfigError("disparity_scales must be 1, 2 or 3")
        if min(self.hidden_dim, self.motion_dim, self.flow_iters, self.disparity_iters) < 1:
            raise ConfigError("hidden_dim, motion_dim and iteration counts must be >= 1")

    @property
    def context_in_dim(self) -> int:
        return self.context_dim - self.hidden_dim


@dataclass(frozen=True)
class ModelConfig:
    block: BlockConfig = field(default_factory=BlockConfig)
    match: MatchConfig = field(default_factory=MatchConfig)

    @property
    def downsample(self) -> int:
        return self.block.patch_size

    def to_dict(self) -> dict:
        return {"block": asdict(self.block), "match": asdict(self.match)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        unknown = set(d) - {"block", "match"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        try:
            return cls(BlockConfig(**d.get("block", {})), MatchConfig(**d.get("match", {})))
        except TypeError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        try:
            d = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from None
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    @classmethod
    def load(cls, path) -> "ModelConfig":
        return cls.from_json(Path(path).read_text())
