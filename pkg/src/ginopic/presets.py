"""Per-dataset hyperparameter presets.

Each preset bundles the tuned graph threshold and network dimensions for one
of the five benchmark corpora, plus its ground-truth label count (the default
topic count when none is requested).  `custom` carries no values; every field
must then be given explicitly.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError
from .gin import GinConfig
from .topicmodel import TrainConfig


@dataclass(frozen=True)
class Preset:
    name: str
    delta: float
    tau: int                 # input node-feature dim
    gin_layers: int
    mlp_hidden_layers: int
    mlp_hidden_dim: int
    tau_out: int             # output node-feature dim
    k_gold: int              # number of ground-truth labels

    def gin_config(self) -> GinConfig:
        return GinConfig(
            tau=self.tau,
            hidden=self.mlp_hidden_dim,
            tau_out=self.tau_out,
            layers=self.gin_layers,
            mlp_hidden_layers=self.mlp_hidden_layers,
        )


PRESETS = {
    "20ng": Preset("20ng", delta=0.40, tau=2048, gin_layers=2, mlp_hidden_layers=1,
                   mlp_hidden_dim=200, tau_out=768, k_gold=20),
    "bbc": Preset("bbc", delta=0.30, tau=256, gin_layers=3, mlp_hidden_layers=1,
                  mlp_hidden_dim=50, tau_out=512, k_gold=5),
    "ss": Preset("ss", delta=0.20, tau=1024, gin_layers=2, mlp_hidden_layers=1,
                 mlp_hidden_dim=50, tau_out=256, k_gold=8),
    "bio": Preset("bio", delta=0.05, tau=1024, gin_layers=2, mlp_hidden_layers=1,
                  mlp_hidden_dim=200, tau_out=256, k_gold=20),
    "so": Preset("so", delta=0.10, tau=64, gin_layers=2, mlp_hidden_layers=1,
                 mlp_hidden_dim=300, tau_out=512, k_gold=20),
}


def get_preset(name: str) -> Preset | None:
    """Look up a preset; `custom` returns None (caller supplies everything)."""
    if name == "custom":
        return None
    if name not in PRESETS:
        known = ", ".join(sorted(set(PRESETS) | {"custom"}))
        raise ConfigError(f"unknown preset '{name}' (choose from {known})")
    return PRESETS[name]


def train_config_from_preset(preset: Preset, topics: int, seed: int = 0,
                             epochs: int = 50, batch_size: int = 64) -> TrainConfig:
    return TrainConfig(
        topics=topics,
        gin=preset.gin_config(),
        seed=seed,
        epochs=epochs,
        batch_size=batch_size,
        delta=preset.delta,
    )
