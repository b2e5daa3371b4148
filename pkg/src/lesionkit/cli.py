"""Command-line front end.

Exit codes: 0 success, 1 internal failure, 2 invalid configuration or input,
3 missing prerequisite artifact.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import io
import json
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .classifier import (LabeledImages, ReferenceCnn, TrainingHistory, average_histories,
                         cell_seed, grid_search, load_model, predict_labels, results_to_csv,
                         retrain_head, save_model, train)
from .config import ConfigError, ExperimentConfig
from .dataset import IngestionError, Manifest, SplitError, ingest_directory, stats, stratified_split
from .explain import cam, colormap, lime_explain, overlay, roi_panel, threshold_segment
from .imageops import augment, child_rng, load_image, save_image
from .metrics import (average_reports, confusion, metrics_report, to_json, wald_interval,
                      wilson_interval)
from .plotting import line_plot


class MissingArtifactError(FileNotFoundError):
    pass


def _require(path: Path, what: str) -> Path:
    if not Path(path).exists():
        raise MissingArtifactError(f"missing {what}: {path}")
    return Path(path)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")


RUN_STREAM = 0x5EED  # keeps repeated-run seeds disjoint from grid-cell seeds


def _run_seed(seed: int, run: int) -> int:
    return cell_seed(seed, RUN_STREAM, run)


def _load_manifest(cfg: ExperimentConfig) -> Manifest:
    return Manifest.load(_require(cfg.manifest_path, "manifest (run `split` first)"))


def _model_paths(cfg: ExperimentConfig, explicit) -> list[Path]:
    if explicit:
        return [_require(Path(p), "model file") for p in explicit]
    found = sorted((cfg.output / "models").glob("run*.lkcnn"),
                   key=lambda p: int(p.stem[3:]) if p.stem[3:].isdigit() else 0)
    if not found:
        raise MissingArtifactError(f"missing model files in {cfg.output / 'models'} (run `train` first)")
    return found


def _pick_image(cfg: ExperimentConfig, image) -> Path:
    if image:
        return _require(Path(image), "image")
    manifest = _load_manifest(cfg)
    recs = manifest.select("test") or list(manifest.records)
    if not recs:
        raise MissingArtifactError("manifest holds no images to explain")
    return _require(Path(recs[0].path), "image")


# -- subcommands ------------------------------------------------------------

def cmd_split(cfg: ExperimentConfig, args) -> None:
    root = cfg["dataset_root"]
    if not root or not Path(root).is_dir():
        raise ConfigError(f"dataset root {root!r} is not a directory")
    manifest = stratified_split(ingest_directory(root), cfg.split_spec())
    out = cfg.manifest_path
    out.parent.mkdir(parents=True, exist_ok=True)
    manifest.save(out)
    _write(cfg.output / "split_stats.json", to_json(stats(manifest)))
    print(f"wrote {out} ({len(manifest)} records)")


def cmd_augment(cfg: ExperimentConfig, args) -> None:
    manifest = _load_manifest(cfg)
    policy = cfg.augmentation_policy() or replace(
        ExperimentConfig.build(overrides={"augmentation.enabled": True}).augmentation_policy(),
        seed=cfg.seed)
    copies = int(cfg["augmentation"]["copies"])
    out_dir = cfg.output / "augmented"
    rows = []
    for i, rec in enumerate(manifest.select("train")):
        img = load_image(rec.path)
        for j in range(copies):
            aug = augment(img, policy, child_rng(policy.seed, i, j))
            dest = out_dir / rec.label / f"{Path(rec.path).stem}_aug{j}.png"
            dest.parent.mkdir(parents=True, exist_ok=True)
            save_image(dest, aug)
            rows.append((dest.as_posix(), rec.label))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["path", "label", "split"])
    w.writerows((p, lab, "train") for p, lab in rows)
    _write(cfg.output / "augmented_manifest.csv", buf.getvalue())
    print(f"wrote {len(rows)} augmented images to {out_dir}")


def _datasets(cfg: ExperimentConfig, manifest: Manifest):
    size = int(cfg["train"]["image_size"])
    tr = LabeledImages.from_manifest(manifest, "train", (size, size))
    te = LabeledImages.from_manifest(manifest, "test", (size, size))
    if len(tr) == 0:
        raise ConfigError("manifest has no training records (run `split` first)")
    return tr, (te if len(te) else None)


def cmd_train(cfg: ExperimentConfig, args) -> None:
    manifest = _load_manifest(cfg)
    pretrained = cfg["train"]["pretrained"]
    base = load_model(_require(Path(pretrained), "pretrained model")) if pretrained else None
    tr, te = _datasets(cfg, manifest)
    size = int(cfg["train"]["image_size"])
    base_cfg = cfg.train_config()
    histories, summary = [], []
    for r in range(int(cfg["run_count"])):
        seed = _run_seed(cfg.seed, r)
        run_cfg = replace(base_cfg, seed=seed)
        if base is not None:
            if base.class_names != manifest.classes or base.input_shape != (size, size, 3):
                raise ConfigError("pretrained model does not match the manifest classes/image size")
            model, hist = retrain_head(base, tr, te, run_cfg)
        else:
            model = ReferenceCnn.create(manifest.classes, (size, size, 3),
                                        tuple(cfg["train"]["channels"]), seed=seed)
            model, hist = train(model, tr, te, run_cfg)
        (cfg.output / "models").mkdir(parents=True, exist_ok=True)
        save_model(model, cfg.output / "models" / f"run{r}.lkcnn")
        _write(cfg.output / "history" / f"run{r}.csv", hist.to_csv())
        histories.append(hist)
        last = hist.records[-1]
        summary.append({"run": r, "seed": seed, **asdict(last)})
        print(f"run {r}: train_acc={last.train_accuracy:.3f} val_acc={last.validation_accuracy:.3f}")
    _write(cfg.output / "history_mean.csv", average_histories(histories).to_csv())
    train_section = {k: v for k, v in cfg["train"].items()}
    _write(cfg.output / "train_summary.json",
           to_json({"config": train_section, "seed": cfg.seed, "runs": summary}))


def cmd_gridsearch(cfg: ExperimentConfig, args) -> None:
    manifest = _load_manifest(cfg)
    tr, te = _datasets(cfg, manifest)
    size = int(cfg["train"]["image_size"])
    channels = tuple(cfg["train"]["channels"])

    def factory(seed):
        return ReferenceCnn.create(manifest.classes, (size, size, 3), channels, seed=seed)

    best, results = grid_search(cfg.grid_spec(), tr, te, cfg.train_config(),
                                model_factory=factory, threads=int(cfg["threads"]))
    _write(cfg.output / "gridsearch.csv", results_to_csv(results))
    _write(cfg.output / "best_config.json",
           to_json({"batch_size": best.batch_size, "epochs": best.epochs,
                    "learning_rate": best.learning_rate}))
    print(f"best: batch_size={best.batch_size} epochs={best.epochs} lr={best.learning_rate}")


def _read_predictions(path: Path, manifest: Manifest) -> dict[str, int]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"path", "predicted"} <= set(reader.fieldnames):
            raise ConfigError(f"{path}: predictions CSV needs columns path,predicted")
        out = {}
        for row in reader:
            if row["predicted"] not in manifest.classes:
                raise ConfigError(f"{path}: unknown predicted label {row['predicted']!r}")
            out[row["path"]] = manifest.label_index(row["predicted"])
    return out


def _evaluate_split(sources, manifest, split, cfg) -> dict | None:
    recs = manifest.select(split)
    if not recs:
        return None
    m = cfg["metrics"]
    runs, reports, correct = [], [], []
    for name, predict in sources:
        pairs = predict(recs)
        if not pairs:
            continue
        preds, labels = zip(*pairs)
        cm = confusion(preds, labels, manifest.classes, m["positive_class"])
        rep = metrics_report(cm, m["averaging"])
        k = int(np.trace(cm.counts))
        n = cm.total
        runs.append({"source": name, "n": n, "correct": k, "confusion": cm.counts.tolist(),
                     "metrics": rep.to_dict(),
                     "wilson": wilson_interval(k, n, m["alpha"]).to_dict(),
                     "wald": wald_interval(k, n, m["alpha"]).to_dict()})
        reports.append(rep)
        correct.append(k)
        _write(cfg.output / "confusion" / f"{split}_{name}.csv", cm.to_csv())
    if not runs:
        return None
    n = runs[0]["n"]
    k_mean = int(round(float(np.mean(correct))))
    return {"n": n, "runs": runs, "mean": average_reports(reports).to_dict(),
            "mean_correct": float(np.mean(correct)),
            "wilson": wilson_interval(k_mean, n, m["alpha"]).to_dict(),
            "wald": wald_interval(k_mean, n, m["alpha"]).to_dict()}


def cmd_evaluate(cfg: ExperimentConfig, args) -> None:
    manifest = _load_manifest(cfg)
    sources = []
    if args.predictions:
        table = _read_predictions(_require(Path(args.predictions), "predictions file"), manifest)

        def from_table(recs):
            return [(table[r.path], manifest.label_index(r.label)) for r in recs if r.path in table]

        sources.append(("predictions", from_table))
    else:
        for path in _model_paths(cfg, args.model):
            model = load_model(path)
            if model.class_names != manifest.classes:
                raise ConfigError(f"{path}: model classes {model.class_names} differ from "
                                  f"manifest classes {manifest.classes}")

            def from_model(recs, model=model):
                h, w, _ = model.input_shape
                images = np.stack([load_image(r.path, (h, w)) for r in recs])
                return list(zip(predict_labels(model, images).tolist(),
                                [manifest.label_index(r.label) for r in recs]))

            sources.append((path.stem, from_model))
    result = {"classes": list(manifest.classes),
              "positive_class": cfg["metrics"]["positive_class"] or manifest.classes[0],
              "averaging": cfg["metrics"]["averaging"], "alpha": cfg["metrics"]["alpha"],
              "sources": [s for s, _ in sources], "splits": {}}
    metric_rows, ci_rows = [], []
    for split in ("train", "test"):
        res = _evaluate_split(sources, manifest, split, cfg)
        if res is None:
            continue
        result["splits"][split] = res
        for entry in [*res["runs"], {"source": "mean", "metrics": res["mean"],
                                     "wilson": res["wilson"], "wald": res["wald"]}]:
            mt = entry["metrics"]
            metric_rows.append([split, entry["source"], *(repr(mt[k]) for k in
                               ("accuracy", "precision", "recall", "f1", "sensitivity",
                                "specificity"))])
            for method in ("wilson", "wald"):
                ci = entry[method]
                ci_rows.append([split, entry["source"], method, ci["k"], ci["n"],
                                repr(ci["lower"]), repr(ci["upper"])])
    if not result["splits"]:
        raise ConfigError("nothing to evaluate: no predictions match the manifest")
    _write(cfg.output / "evaluation.json", to_json(result))
    _write(cfg.output / "metrics.csv", _csv(
        ["split", "source", "accuracy", "precision", "recall", "f1", "sensitivity", "specificity"],
        metric_rows))
    _write(cfg.output / "ci.csv", _csv(["split", "source", "method", "k", "n", "lower", "upper"],
                                       ci_rows))
    for split, res in result["splits"].items():
        mt = res["mean"]
        print(f"{split}: acc={mt['accuracy']:.2f} prec={mt['precision']:.2f} "
              f"rec={mt['recall']:.2f} f1={mt['f1']:.2f} sens={mt['sensitivity']:.2f} "
              f"spec={mt['specificity']:.2f}")


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _model_and_image(cfg, args):
    paths = _model_paths(cfg, [args.model] if args.model else None)
    model = load_model(paths[0])
    image_path = _pick_image(cfg, args.image)
    h, w, _ = model.input_shape
    return model, image_path, load_image(image_path, (h, w))


def cmd_explain(cfg: ExperimentConfig, args) -> None:
    model, image_path, img = _model_and_image(cfg, args)
    expl = lime_explain(model, img, cfg.lime_config())
    out = cfg.output / "explain"
    out.mkdir(parents=True, exist_ok=True)
    stem = image_path.stem
    _write(out / f"{stem}_lime.json", to_json({"image": image_path.as_posix(), **expl.to_dict()}))
    marked = img.copy()
    marked[expl.segments.boundaries()] = (1.0, 1.0, 0.0)
    save_image(out / f"{stem}_superpixels.png", marked)
    save_image(out / f"{stem}_topk.png", expl.mask_image)
    print(f"{stem}: class={expl.target_class} top segments={expl.top_k_segments}")


def cmd_cam(cfg: ExperimentConfig, args) -> None:
    model, image_path, img = _model_and_image(cfg, args)
    heat = cam(model, img, args.class_index)
    out = cfg.output / "cam"
    out.mkdir(parents=True, exist_ok=True)
    stem = image_path.stem
    save_image(out / f"{stem}_heatmap.png", colormap(heat.values))
    save_image(out / f"{stem}_overlay.png", overlay(img, heat, float(cfg["cam"]["opacity"])))
    _write(out / f"{stem}_cam.json", to_json({
        "image": image_path.as_posix(), "class": heat.class_name, "class_index": heat.class_index,
        "raw_min": float(heat.raw.min()), "raw_max": float(heat.raw.max()),
        "raw_shape": list(heat.raw.shape)}))
    print(f"{stem}: CAM for class {heat.class_name}")


def cmd_segment(cfg: ExperimentConfig, args) -> None:
    image_path = _pick_image(cfg, args.image)
    img = load_image(image_path)
    res = threshold_segment(img, cfg.segmentation_config())
    out = cfg.output / "segment"
    out.mkdir(parents=True, exist_ok=True)
    stem = image_path.stem
    save_image(out / f"{stem}_original.png", img)
    save_image(out / f"{stem}_roi.png", roi_panel(img, res.roi))
    save_image(out / f"{stem}_mask.png", res.mask.astype(np.float64))
    if res.roi is not None:
        save_image(out / f"{stem}_segmented.png", res.segmented)
    _write(out / f"{stem}_segment.json", to_json({"image": image_path.as_posix(), **res.to_dict()}))
    print(f"{stem}: roi={res.roi}")


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    now = (dt.datetime.fromtimestamp(int(epoch), dt.timezone.utc) if epoch
           else dt.datetime.now(dt.timezone.utc))
    return now.replace(microsecond=0).isoformat()


def cmd_report(cfg: ExperimentConfig, args) -> None:
    evaluation = json.loads(_require(cfg.output / "evaluation.json",
                                     "evaluation.json (run `evaluate` first)").read_text())
    hist_files = sorted((cfg.output / "history").glob("run*.csv"),
                        key=lambda p: int(p.stem[3:]) if p.stem[3:].isdigit() else 0)
    histories = [TrainingHistory.from_csv(p.read_text()) for p in hist_files]
    report = {"meta": {"generated_at": _timestamp()}, "tool": f"lesionkit {__version__}",
              "evaluation": evaluation, "training": None, "gridsearch": None}
    if histories:
        mean = average_histories(histories)
        report["training"] = {
            "runs": len(histories),
            "mean_history": [asdict(r) for r in mean.records],
        }
        line_plot(cfg.output / "curves_accuracy.png",
                  {"TA": mean.column("train_accuracy"), "VA": mean.column("validation_accuracy")},
                  title="accuracy per epoch", ylabel="acc")
        line_plot(cfg.output / "curves_loss.png",
                  {"TL": mean.column("train_loss"), "VL": mean.column("validation_loss")},
                  title="loss per epoch", ylabel="loss")
    grid_file = cfg.output / "best_config.json"
    if grid_file.exists():
        report["gridsearch"] = json.loads(grid_file.read_text())
    _write(cfg.output / "report.json", to_json(report))
    rows = []
    for split, res in evaluation["splits"].items():
        mt = res["mean"]
        rows.append([split, *(repr(mt[k]) for k in ("accuracy", "precision", "recall", "f1",
                                                    "sensitivity", "specificity")),
                     repr(res["wilson"]["lower"]), repr(res["wilson"]["upper"]),
                     repr(res["wald"]["lower"]), repr(res["wald"]["upper"])])
    _write(cfg.output / "report.csv", _csv(
        ["split", "accuracy", "precision", "recall", "f1", "sensitivity", "specificity",
         "wilson_lower", "wilson_upper", "wald_lower", "wald_upper"], rows))
    print(f"wrote {cfg.output / 'report.json'}")


# -- argument parsing ---------------------------------------------------------

def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--out", help="output directory (default out)")
    common.add_argument("--threads", type=int, help="worker threads; 1 = fully serial")
    common.add_argument("--manifest", help="manifest CSV (default <out>/manifest.csv)")

    parser = argparse.ArgumentParser(prog="lesionkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"lesionkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", parents=[common], help="catalog a class-per-folder corpus and split it")
    p.add_argument("--root", help="dataset root with one folder per class")
    p.add_argument("--test-fraction", type=float)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("augment", parents=[common], help="write augmented copies of the training split")
    p.add_argument("--copies", type=int)
    p.set_defaults(func=cmd_augment)

    def add_train_flags(p):
        p.add_argument("--image-size", type=int)
        p.add_argument("--channels", type=_ints, help="conv widths, e.g. 16,32,64")
        p.add_argument("--freeze-conv", action="store_true", default=None)
        p.add_argument("--augment", action="store_true", default=None,
                       help="augment training images every epoch")

    p = sub.add_parser("train", parents=[common], help="train the reference CNN (repeated runs)")
    add_train_flags(p)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--runs", type=int, help="number of repeated runs (default 5)")
    p.add_argument("--pretrained", help="model file whose conv stack is frozen; only the head is retrained")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gridsearch", parents=[common], help="grid search batch size/epochs/lr")
    add_train_flags(p)
    p.add_argument("--batch-sizes", type=_ints)
    p.add_argument("--epoch-counts", type=_ints)
    p.add_argument("--learning-rates", type=_floats)
    p.add_argument("--runs-per-cell", type=int)
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("evaluate", parents=[common], help="confusion matrices, metrics and CIs")
    p.add_argument("--model", action="append", help="model file (repeatable); default all runs")
    p.add_argument("--predictions", help="CSV with columns path,predicted instead of models")
    p.add_argument("--averaging", choices=["weighted", "positive"])
    p.add_argument("--positive-class")
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("explain", parents=[common], help="LIME explanation of one image")
    p.add_argument("--model")
    p.add_argument("--image")
    p.add_argument("--num-samples", type=int)
    p.add_argument("--kernel-width", type=float)
    p.add_argument("--top-k", type=int)
    p.add_argument("--segments", type=int)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("cam", parents=[common], help="class activation heatmap of one image")
    p.add_argument("--model")
    p.add_argument("--image")
    p.add_argument("--class-index", type=int)
    p.add_argument("--opacity", type=float)
    p.set_defaults(func=cmd_cam)

    p = sub.add_parser("segment", parents=[common], help="threshold ROI segmentation of one image")
    p.add_argument("--image")
    p.add_argument("--lo", type=float)
    p.add_argument("--hi", type=float)
    p.add_argument("--channel", type=int)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("report", parents=[common], help="collate metrics, CIs and training curves")
    p.set_defaults(func=cmd_report)
    return parser


OVERRIDES = {
    "seed": "seed", "out": "output", "threads": "threads", "manifest": "manifest",
    "root": "dataset_root", "test_fraction": "split.test_fraction",
    "copies": "augmentation.copies", "augment": "augmentation.enabled",
    "image_size": "train.image_size", "channels": "train.channels",
    "freeze_conv": "train.freeze_conv", "epochs": "train.epochs",
    "batch_size": "train.batch_size", "lr": "train.learning_rate", "runs": "run_count",
    "pretrained": "train.pretrained",
    "batch_sizes": "grid.batch_sizes", "epoch_counts": "grid.epoch_counts",
    "learning_rates": "grid.learning_rates", "runs_per_cell": "grid.runs_per_cell",
    "averaging": "metrics.averaging", "positive_class": "metrics.positive_class",
    "alpha": "metrics.alpha", "num_samples": "lime.num_samples",
    "kernel_width": "lime.kernel_width", "top_k": "lime.top_k", "segments": "lime.target_segments",
    "opacity": "cam.opacity", "lo": "segmentation.lo", "hi": "segmentation.hi",
    "channel": "segmentation.channel",
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {path: getattr(args, dest) for dest, path in OVERRIDES.items()
                 if hasattr(args, dest)}
    try:
        cfg = ExperimentConfig.build(args.config, overrides)
        args.func(cfg, args)
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, IngestionError, SplitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
