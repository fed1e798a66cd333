"""Run configuration: INI-style file, overridable by command-line flags.

Defaults follow the published hyperparameter table (learning rate 0.005,
weight decay 0.001, 200 epochs, patience 100, dropout 0.6, 8 heads of 8
hidden units). Relative paths in a config file resolve against the file's
directory.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .metapath import builtin_spec_names
from .model import ModelConfig
from .pipeline import InputPaths
from .train import TrainConfig

__all__ = ["RunConfig", "ConfigError"]


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    # [data]
    drug_protein: Path | None = None
    drug_side_effect: Path | None = None
    ppi: Path | None = None
    fingerprints: Path | None = None
    smiles: Path | None = None
    ddi: Path | None = None
    registry_mode: str = "discover"
    # [output]
    out_dir: Path = Path("out")
    # [features]
    feature_mode: str = "espf"
    espf_threshold: int = 5
    espf_max_size: int = 512
    # [metapaths]
    metapaths: tuple[str, ...] = field(
        default_factory=lambda: tuple(builtin_spec_names()))
    binarize_threshold: int = 1
    # [model]
    hidden: int = 8
    heads: int = 8
    attn_dim: int = 128
    leaky_slope: float = 0.2
    dropout: float = 0.6
    activation: str = "relu"
    pool: str = "mean"
    # [training]
    lr: float = 0.005
    weight_decay: float = 0.001
    epochs: int = 200
    patience: int = 100
    # [split]
    protocol: str = "edges"
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    drug_fraction: float = 0.2
    # [run]
    seed: int = 0
    precision: str = "32"

    _SCHEMA = {
        "data": ("drug_protein", "drug_side_effect", "ppi", "fingerprints",
                 "smiles", "ddi", "registry_mode"),
        "output": ("out_dir",),
        "features": ("feature_mode", "espf_threshold", "espf_max_size"),
        "metapaths": ("metapaths", "binarize_threshold"),
        "model": ("hidden", "heads", "attn_dim", "leaky_slope", "dropout",
                  "activation", "pool"),
        "training": ("lr", "weight_decay", "epochs", "patience"),
        "split": ("protocol", "ratios", "drug_fraction"),
        "run": ("seed", "precision"),
    }
    _FILE_KEYS = {"drug_protein", "drug_side_effect", "ppi", "fingerprints",
                  "smiles", "ddi", "out_dir"}

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser()
        parser.read(path, encoding="utf-8")
        cfg = cls()
        base = path.parent
        for section, keys in cls._SCHEMA.items():
            if not parser.has_section(section):
                continue
            for key in parser[section]:
                if key not in keys:
                    raise ConfigError(f"{path}: unknown key [{section}] {key}")
                cfg._assign(key, parser[section][key], base)
        cfg.validate()
        return cfg

    def _assign(self, key: str, raw: str, base: Path) -> None:
        current = getattr(self, key)
        if key in self._FILE_KEYS:
            p = Path(raw)
            setattr(self, key, p if p.is_absolute() else base / p)
        elif key == "metapaths":
            setattr(self, key, tuple(s.strip() for s in raw.split(",") if s.strip()))
        elif key == "ratios":
            parts = tuple(float(s) for s in raw.split(","))
            setattr(self, key, parts)
        elif isinstance(current, bool):
            setattr(self, key, raw.lower() in ("1", "true", "yes"))
        elif isinstance(current, int):
            setattr(self, key, int(raw))
        elif isinstance(current, float):
            setattr(self, key, float(raw))
        else:
            setattr(self, key, raw)

    def apply_overrides(self, **overrides) -> None:
        for key, value in overrides.items():
            if value is None:
                continue
            if key == "metapaths" and isinstance(value, str):
                value = tuple(s.strip() for s in value.split(",") if s.strip())
            if key in self._FILE_KEYS and value is not None:
                value = Path(value)
            setattr(self, key, value)
        self.validate()

    def validate(self) -> None:
        if self.feature_mode not in ("espf", "fingerprint"):
            raise ConfigError(f"feature_mode must be espf or fingerprint, "
                              f"got {self.feature_mode!r}")
        if self.protocol not in ("edges", "coldstart"):
            raise ConfigError(f"protocol must be edges or coldstart, "
                              f"got {self.protocol!r}")
        if self.precision not in ("32", "64"):
            raise ConfigError(f"precision must be 32 or 64, got {self.precision!r}")
        if self.registry_mode not in ("discover", "strict"):
            raise ConfigError(f"registry_mode must be discover or strict, "
                              f"got {self.registry_mode!r}")
        known = set(builtin_spec_names())
        for mp in self.metapaths:
            if mp not in known:
                raise ConfigError(f"unknown meta-path {mp!r}; known: {sorted(known)}")
        if not self.metapaths:
            raise ConfigError("at least one meta-path is required")

    # ---- derived views

    @property
    def dtype(self):
        return np.float32 if self.precision == "32" else np.float64

    @property
    def graph_dir(self) -> Path:
        return self.out_dir / "graph"

    @property
    def features_file(self) -> Path:
        return self.out_dir / "features.tsv"

    @property
    def vocab_file(self) -> Path:
        return self.out_dir / "vocab.tsv"

    def input_paths(self) -> InputPaths:
        missing = [k for k in ("drug_protein", "drug_side_effect", "ppi",
                               "fingerprints", "ddi")
                   if getattr(self, k) is None]
        if missing:
            raise ConfigError(f"config lacks [data] paths: {missing}")
        return InputPaths(drug_protein=self.drug_protein,
                          drug_side_effect=self.drug_side_effect,
                          ppi=self.ppi,
                          fingerprints=self.fingerprints,
                          ddi=self.ddi,
                          smiles=self.smiles)

    def model_config(self, input_dim: int) -> ModelConfig:
        return ModelConfig(input_dim=input_dim, hidden_dim=self.hidden,
                           heads=self.heads, attn_dim=self.attn_dim,
                           leaky_slope=self.leaky_slope, dropout=self.dropout,
                           activation=self.activation, pool=self.pool,
                           seed=self.seed)

    def train_config(self) -> TrainConfig:
        return TrainConfig(lr=self.lr, weight_decay=self.weight_decay,
                           epochs=self.epochs, patience=self.patience,
                           seed=self.seed)

    def echo(self) -> dict[str, str]:
        """Flat section.key -> value view for manifests and checkpoints."""
        out = {}
        for section, keys in self._SCHEMA.items():
            for key in keys:
                value = getattr(self, key)
                if value is None:
                    continue
                if key in ("metapaths", "ratios"):
                    value = ",".join(str(v) for v in value)
                out[f"{section}.{key}"] = str(value)
        return out
