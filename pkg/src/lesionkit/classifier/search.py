"""Exhaustive grid search over batch size, epochs and learning rate."""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .model import ReferenceCnn
from .training import LabeledImages, TrainConfig, TrainingHistory, train


class GridSearchError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridSpec:
    batch_sizes: tuple[int, ...]
    epoch_counts: tuple[int, ...]
    learning_rates: tuple[float, ...]
    runs_per_cell: int = 1

    def __post_init__(self):
        for name in ("batch_sizes", "epoch_counts", "learning_rates"):
            values = tuple(getattr(self, name))
            if not values:
                raise ValueError(f"{name} must not be empty")
            object.__setattr__(self, name, values)
        if self.runs_per_cell < 1:
            raise ValueError("runs_per_cell must be >= 1")

    def cells(self) -> list[tuple[int, float, float]]:
        """Grid points in listing order: batch size varies slowest, learning rate fastest."""
        return list(itertools.product(self.batch_sizes, self.epoch_counts, self.learning_rates))


def cell_seed(base_seed: int, cell_index: int, run: int = 0) -> int:
    ss = np.random.SeedSequence([int(base_seed) & 0xFFFFFFFFFFFFFFFF, cell_index, run])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


Trainer = Callable[[TrainConfig, int], TrainingHistory]


def grid_search(grid: GridSpec, train_data: LabeledImages | None, val_data: LabeledImages | None,
                base_config: TrainConfig, *,
                model_factory: Callable[[int], ReferenceCnn] | None = None,
                trainer: Trainer | None = None,
                threads: int = 1) -> tuple[TrainConfig, list[dict]]:
    """Train every grid cell and return the best config plus a per-cell results table.

    A cell's score is the final-epoch validation accuracy averaged over
    ``runs_per_cell`` runs. The highest score wins; ties go to the cell listed
    first. ``trainer(config, cell_index)`` replaces the default
    build-and-train step (used for stubs); otherwise ``model_factory(seed)``
    builds a fresh model per run.
    """
    if trainer is None:
        if model_factory is None:
            raise ValueError("either trainer or model_factory is required")

        def trainer(config: TrainConfig, cell_index: int) -> TrainingHistory:
            return train(model_factory(config.seed), train_data, val_data, config)[1]

    cells = grid.cells()

    def run_cell(i: int) -> dict:
        bs, ep, lr = cells[i]
        scores = []
        try:
            for r in range(grid.runs_per_cell):
                cfg = replace(base_config, batch_size=bs, epochs=ep, learning_rate=lr,
                              seed=cell_seed(base_config.seed, i, r))
                hist = trainer(cfg, i)
                scores.append(hist.records[-1].validation_accuracy)
        except Exception as exc:
            raise GridSearchError(
                f"grid cell {i} (batch_size={bs}, epochs={ep}, learning_rate={lr}) failed: {exc}"
            ) from exc
        return {"cell": i, "batch_size": bs, "epochs": ep, "learning_rate": lr,
                "mean_val_accuracy": float(np.mean(scores)), "run_scores": scores}

    if threads <= 1:
        results = [run_cell(i) for i in range(len(cells))]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_cell, range(len(cells))))

    best = results[0]
    for row in results[1:]:
        if row["mean_val_accuracy"] > best["mean_val_accuracy"]:
            best = row
    best_config = replace(base_config, batch_size=best["batch_size"], epochs=best["epochs"],
                          learning_rate=best["learning_rate"])
    return best_config, results


def results_to_csv(results: Sequence[dict]) -> str:
    lines = ["cell,batch_size,epochs,learning_rate,mean_val_accuracy"]
    for r in results:
        lines.append(f"{r['cell']},{r['batch_size']},{r['epochs']},{r['learning_rate']!r},"
                     f"{r['mean_val_accuracy']!r}")
    return "\n".join(lines) + "\n"
