"""Engine configuration: INI-style ``key = value`` sections, one per module.

Unknown sections or keys are rejected. Relative paths resolve against the
config file's directory. Every random stage draws its seed from the single
``[engine] seed`` via :func:`derive_seed`.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .bm25 import Bm25Params
from .oov import OovTrainConfig
from .skipgram import TrainConfig
from .walks import WalkConfig


class ConfigError(ValueError):
    pass


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_str(text):
    text = str(text).strip()
    return None if text.lower() in ("", "none") else text


SCHEMA: dict[str, dict[str, tuple[Any, Any]]] = {
    "engine": {
        "seed": (int, 0),
        "tag": (str, "kgfusion"),
    },
    "paths": {
        name: (_optional_str, None)
        for name in ("kg", "corpus", "queries", "qrels", "embeddings", "model",
                     "contextual_embeddings", "index_dir", "run")
    },
    "graph_embed": {
        "dim": (int, 128),
        "walks_per_node": (int, 10),
        "walk_length": (int, 40),
        "p": (float, 1.0),
        "q": (float, 1.0),
        "window": (int, 5),
        "negatives": (int, 5),
        "learning_rate": (float, 0.025),
        "min_learning_rate": (float, 1e-4),
        "epochs": (int, 5),
    },
    "oov": {
        "strategy": (_optional_str, "prefix"),
        "minimum_prefix_len": (int, 2),
        "learning_rate": (float, 0.5),
        "epochs": (int, 30),
        "batch_size": (int, 16),
        "gradient_clip_norm": (float, 5.0),
        "c_dim": (int, 16),
        "h_dim": (int, 64),
        "loss": (str, "mse"),
    },
    "keywords": {
        "k": (int, 20),
        "filter_stopwords": (_bool, True),
    },
    "bm25": {
        "k1": (float, 1.2),
        "b": (float, 0.75),
    },
    "retriever": {
        "run_depth": (int, 1000),
        "normalize_scores": (_bool, False),
        "l2_normalize": (_bool, False),
        "use_bm25": (_bool, True),
    },
    "evalx": {
        "p_k": (int, 10),
        "ndcg_k": (int, 10),
        "recall_k": (int, 1000),
        "gain": (str, "linear"),
    },
}


def derive_seed(seed: int, stage: str) -> int:
    """64-bit sub-seed from the top-level seed and a stage name."""
    digest = hashlib.sha256(f"{seed}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class EngineConfig:
    values: dict[str, dict[str, Any]] = field(
        default_factory=lambda: {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    )
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_file(cls, path) -> "EngineConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        cfg = cls(base_dir=path.resolve().parent)
        for section in parser.sections():
            for key, raw in parser.items(section):
                cfg.set(section, key, raw)
        return cfg

    def set(self, section: str, key: str, raw) -> None:
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown config key {section}.{key}")
        conv = SCHEMA[section][key][0]
        try:
            self.values[section][key] = raw if raw is None else conv(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {section}.{key}: {exc}") from None

    def override(self, assignment: str) -> None:
        """Apply ``section.key=value``."""
        name, sep, raw = assignment.partition("=")
        section, dot, key = name.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override must look like section.key=value, got {assignment!r}")
        self.set(section, key, raw.strip())

    def __getitem__(self, section):
        return self.values[section]

    def path(self, name: str, must_exist=False) -> Optional[Path]:
        raw = self.values["paths"][name]
        if raw is None:
            if must_exist:
                raise ConfigError(f"paths.{name} is not set")
            return None
        p = Path(raw)
        if not p.is_absolute():
            p = self.base_dir / p
        if must_exist and not p.exists():
            raise ConfigError(f"paths.{name} does not exist: {p}")
        return p

    @property
    def seed(self) -> int:
        return self.values["engine"]["seed"]

    def walk_config(self) -> WalkConfig:
        g = self.values["graph_embed"]
        return WalkConfig(g["walks_per_node"], g["walk_length"], g["p"], g["q"],
                          derive_seed(self.seed, "walks"))

    def train_config(self) -> TrainConfig:
        g = self.values["graph_embed"]
        return TrainConfig(
            dim=g["dim"], window=g["window"], negatives=g["negatives"],
            learning_rate=g["learning_rate"], min_learning_rate=g["min_learning_rate"],
            epochs=g["epochs"], seed=derive_seed(self.seed, "skipgram"),
        )

    def oov_train_config(self) -> OovTrainConfig:
        o = self.values["oov"]
        return OovTrainConfig(
            learning_rate=o["learning_rate"], epochs=o["epochs"], batch_size=o["batch_size"],
            gradient_clip_norm=o["gradient_clip_norm"], seed=derive_seed(self.seed, "charlstm"),
            c_dim=o["c_dim"], h_dim=o["h_dim"], loss=o["loss"],
        )

    def bm25_params(self) -> Bm25Params:
        return Bm25Params(self.values["bm25"]["k1"], self.values["bm25"]["b"])

    def ranker_params(self) -> dict:
        r = self.values["retriever"]
        return {
            "n_keywords": self.values["keywords"]["k"],
            "filter_stopwords": self.values["keywords"]["filter_stopwords"],
            "oov_strategy": self.values["oov"]["strategy"],
            "minimum_prefix_len": self.values["oov"]["minimum_prefix_len"],
            "run_depth": r["run_depth"],
            "normalize_scores": r["normalize_scores"],
            "l2_normalize": r["l2_normalize"],
            "use_bm25": r["use_bm25"],
            "k1": self.values["bm25"]["k1"],
            "b": self.values["bm25"]["b"],
        }
