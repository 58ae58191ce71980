"""Actor and critic parameter sets bundled with their configuration."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .critic import CriticConfig, critic_value, init_critic_head
from .decoder import DecodeResult, DecoderConfig, decode_batch, init_decoder_params
from .encoder import EncoderConfig, encode, init_encoder_params
from .instances import Instance, rng_stream
from .nn.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .nn.tensor import Tensor


@dataclass(frozen=True)
class ModelConfig:
    d_h: int = 128
    heads: int = 8
    layers: int = 3
    d_sparse: int = 16
    d_ff: int = 512
    hierarchical: bool = True
    dec_layers: int = 1
    c_init: float = 10.0
    critic_hidden: int = 128
    critic_depth: int = 2
    coord_scale: float = 100.0

    @property
    def encoder(self) -> EncoderConfig:
        return EncoderConfig(self.d_h, self.heads, self.layers, self.d_sparse, self.d_ff, self.hierarchical)

    @property
    def decoder(self) -> DecoderConfig:
        return DecoderConfig(self.d_h, self.dec_layers, self.c_init)

    @property
    def critic(self) -> CriticConfig:
        return CriticConfig(self.critic_hidden, self.critic_depth)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise CheckpointError(f"unknown model config keys {sorted(unknown)}")
        return cls(**d)


class Model:
    """Actor (encoder + decoder) and critic (own encoder + head).

    Parameters live in two flat dicts so the two optimizers never share a
    tensor.  Critic estimates are multiplied by ``coord_scale`` so the head
    works at unit scale.
    """

    def __init__(self, cfg: ModelConfig, actor: dict[str, Tensor], critic: dict[str, Tensor]):
        self.cfg = cfg
        self.actor = actor
        self.critic = critic

    @classmethod
    def init(cls, cfg: ModelConfig, seed: int = 0) -> "Model":
        rng = rng_stream(seed, 7)
        actor = init_encoder_params(cfg.encoder, rng, "encoder.")
        actor.update(init_decoder_params(cfg.decoder, rng, "decoder."))
        critic = init_encoder_params(cfg.encoder, rng, "critic.encoder.")
        critic.update(init_critic_head(cfg.critic, cfg.d_h, rng, "critic.head."))
        return cls(cfg, actor, critic)

    # -- forward ----------------------------------------------------------------

    def solve(self, insts: list[Instance], mode: str = "greedy", rngs=None, forced=None,
              track_grad: bool = False) -> DecodeResult:
        enc = encode(insts, self.actor, self.cfg.encoder, self.cfg.coord_scale, "encoder.")
        return decode_batch(insts, enc.static, self.actor, self.cfg.decoder, mode, rngs, forced,
                            "decoder.", track_grad)

    def value(self, insts: list[Instance]) -> Tensor:
        enc = encode(insts, self.critic, self.cfg.encoder, self.cfg.coord_scale, "critic.encoder.")
        v = critic_value(enc.static, self.critic, self.cfg.critic, "critic.head.")
        return v * self.cfg.coord_scale

    # -- state ----------------------------------------------------------------

    def arrays(self) -> dict[str, np.ndarray]:
        out = {"actor." + k: p.data for k, p in self.actor.items()}
        out.update({"critic." + k: p.data for k, p in self.critic.items()})
        return out

    def snapshot(self) -> "Model":
        """Independent copy whose tensors share no storage with ``self``."""
        copy = lambda ps: {k: Tensor(p.data.copy(), requires_grad=True, name=k) for k, p in ps.items()}  # noqa: E731
        return Model(self.cfg, copy(self.actor), copy(self.critic))

    def save(self, path, meta: dict | None = None) -> Path:
        return save_checkpoint(path, self.arrays(), self.cfg.to_dict(), meta)

    @classmethod
    def load(cls, path, expected: ModelConfig | None = None) -> tuple["Model", dict]:
        arrays, config, meta = load_checkpoint(path, expected.to_dict() if expected else None)
        cfg = ModelConfig.from_dict(config)
        model = cls.init(cfg)
        for group, params in (("actor.", model.actor), ("critic.", model.critic)):
            for k, p in params.items():
                key = group + k
                if key not in arrays:
                    raise CheckpointError(f"{path}: missing tensor {key}")
                if arrays[key].shape != p.shape:
                    raise CheckpointError(f"{path}: shape mismatch for {key}")
                p.data = np.array(arrays[key], dtype=np.float64)
        extra = set(arrays) - set(model.arrays())
        if extra:
            raise CheckpointError(f"{path}: unexpected tensors {sorted(extra)[:3]}")
        return model, meta
