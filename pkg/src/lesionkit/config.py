"""Experiment configuration: JSON file + command-line overrides, validated up front.

Schema (every key optional; defaults shown)::

    {
      "dataset_root": null,
      "manifest": null,                  # default <output>/manifest.csv
      "output": "out",
      "seed": 0,
      "threads": 1,
      "run_count": 5,
      "split": {"test_fraction": 0.2},
      "augmentation": {"enabled": false, "flip_horizontal_prob": 0.5, "flip_vertical_prob": 0.0,
                       "rotation_range": [0, 360], "shear_range": [0, 0.2],
                       "scale_range": [0.8, 1.2], "translate_fraction": 0.1,
                       "fill_value": 0.0, "copies": 1},
      "train": {"batch_size": 10, "epochs": 50, "learning_rate": 0.001, "freeze_conv": false,
                "image_size": 64, "channels": [16, 32, 64], "pretrained": null},
      "grid": {"batch_sizes": [5, 10, 20, 40], "epoch_counts": [20, 30, 40, 50],
               "learning_rates": [0.001, 0.01, 0.1], "runs_per_cell": 1},
      "metrics": {"averaging": "weighted", "alpha": 0.05, "positive_class": null},
      "lime": {"num_samples": 150, "kernel_width": 0.2, "top_k": 4, "ridge_lambda": 0.001,
               "target_segments": 40, "compactness": 0.1, "off_color": "mean", "rank_by": "signed"},
      "segmentation": {"lo": 0.5, "hi": 1.0, "channel": null},
      "cam": {"opacity": 0.4}
    }
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from .classifier import GridSpec, TrainConfig
from .dataset import SplitError, SplitSpec
from .explain import LimeConfig, SegmentationConfig
from .imageops import AugmentationPolicy, PolicyError

DEFAULTS: dict = {
    "dataset_root": None,
    "manifest": None,
    "output": "out",
    "seed": 0,
    "threads": 1,
    "run_count": 5,
    "split": {"test_fraction": 0.2},
    "augmentation": {"enabled": False, "flip_horizontal_prob": 0.5, "flip_vertical_prob": 0.0,
                     "rotation_range": [0.0, 360.0], "shear_range": [0.0, 0.2],
                     "scale_range": [0.8, 1.2], "translate_fraction": 0.1, "fill_value": 0.0,
                     "copies": 1},
    "train": {"batch_size": 10, "epochs": 50, "learning_rate": 0.001, "freeze_conv": False,
              "image_size": 64, "channels": [16, 32, 64], "pretrained": None},
    "grid": {"batch_sizes": [5, 10, 20, 40], "epoch_counts": [20, 30, 40, 50],
             "learning_rates": [0.001, 0.01, 0.1], "runs_per_cell": 1},
    "metrics": {"averaging": "weighted", "alpha": 0.05, "positive_class": None},
    "lime": {"num_samples": 150, "kernel_width": 0.2, "top_k": 4, "ridge_lambda": 0.001,
             "target_segments": 40, "compactness": 0.1, "off_color": "mean", "rank_by": "signed"},
    "segmentation": {"lo": 0.5, "hi": 1.0, "channel": None},
    "cam": {"opacity": 0.4},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, extra: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where}{key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where}{key!r} must be an object")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


@dataclass
class ExperimentConfig:
    raw: dict

    @classmethod
    def build(cls, path=None, overrides: dict | None = None) -> ExperimentConfig:
        data = copy.deepcopy(DEFAULTS)
        if path is not None:
            try:
                loaded = json.loads(Path(path).read_text(encoding="utf-8"))
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot read config file {path}: {exc}") from exc
            if not isinstance(loaded, dict):
                raise ConfigError("config file must hold a JSON object")
            data = _merge(data, loaded)
        for dotted, value in (overrides or {}).items():
            if value is None:
                continue
            node = data
            *parents, leaf = dotted.split(".")
            for p in parents:
                node = node[p]
            node[leaf] = value
        cfg = cls(data)
        cfg.validate()
        return cfg

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def output(self) -> Path:
        return Path(self.raw["output"])

    @property
    def manifest_path(self) -> Path:
        m = self.raw["manifest"]
        return Path(m) if m else self.output / "manifest.csv"

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    def split_spec(self) -> SplitSpec:
        return SplitSpec(float(self.raw["split"]["test_fraction"]), self.seed)

    def augmentation_policy(self) -> AugmentationPolicy | None:
        a = dict(self.raw["augmentation"])
        enabled = a.pop("enabled")
        a.pop("copies")
        policy = AugmentationPolicy.from_dict({**a, "seed": self.seed})
        return policy if enabled else None

    def train_config(self) -> TrainConfig:
        t = self.raw["train"]
        return TrainConfig(batch_size=int(t["batch_size"]), epochs=int(t["epochs"]),
                           learning_rate=float(t["learning_rate"]), seed=self.seed,
                           freeze_conv=bool(t["freeze_conv"]),
                           augmentation=self.augmentation_policy())

    def grid_spec(self) -> GridSpec:
        g = self.raw["grid"]
        return GridSpec(tuple(int(v) for v in g["batch_sizes"]),
                        tuple(int(v) for v in g["epoch_counts"]),
                        tuple(float(v) for v in g["learning_rates"]), int(g["runs_per_cell"]))

    def lime_config(self) -> LimeConfig:
        return LimeConfig(**self.raw["lime"], seed=self.seed)

    def segmentation_config(self) -> SegmentationConfig:
        s = self.raw["segmentation"]
        ch = s["channel"]
        return SegmentationConfig(float(s["lo"]), float(s["hi"]), None if ch is None else int(ch))

    def validate(self) -> None:
        """Build every typed section so out-of-range values fail before any data is read."""
        try:
            self.split_spec()
            self.train_config()
            self.grid_spec()
            self.lime_config()
            self.segmentation_config()
            if int(self.raw["run_count"]) < 1:
                raise ConfigError("run_count must be >= 1")
            if int(self.raw["threads"]) < 1:
                raise ConfigError("threads must be >= 1")
            if int(self.raw["augmentation"]["copies"]) < 1:
                raise ConfigError("augmentation.copies must be >= 1")
            t = self.raw["train"]
            if int(t["image_size"]) < 2 ** len(t["channels"]) or not t["channels"]:
                raise ConfigError("train.image_size is too small for the conv stack")
            if self.raw["metrics"]["averaging"] not in ("weighted", "positive"):
                raise ConfigError("metrics.averaging must be 'weighted' or 'positive'")
            if not 0 < float(self.raw["metrics"]["alpha"]) < 1:
                raise ConfigError("metrics.alpha must lie in (0, 1)")
            if not 0 <= float(self.raw["cam"]["opacity"]) <= 1:
                raise ConfigError("cam.opacity must lie in [0, 1]")
        except (PolicyError, SplitError, TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc
