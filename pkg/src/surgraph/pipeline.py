"""Dataset splitting, training, evaluation, and the ablation runner.

A sample is one dilated window of static graphs collapsed into a dynamic
graph, labelled by its anchor frame's phase. Training accumulates gradients
over a batch of windows, applies one Adam step per batch, and keeps the model
with the best validation accuracy. Everything is seeded and bitwise
reproducible.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamic_graph import (
    LABEL_NEWEST,
    WindowConfig,
    build_dynamic_graph,
    context_seconds,
    select_window,
)
from .errors import (
    EmptyEvalSet,
    EmptyTrainSet,
    NonFiniteLoss,
    OverlappingSplits,
)
from .gcn import (
    DEFAULT_HIDDEN_DIMS,
    AdamHyper,
    GcnConfig,
    GcnModel,
    add_gradients,
    adam_step,
    forward_prepared,
    init_adam_state,
    init_model,
    load_checkpoint,
    loss_and_gradients_prepared,
    normalize_adjacency,
    save_checkpoint,
    scale_gradients,
    zeros_like_gradients,
)
from .ingest import (
    DatasetManifest,
    EmbeddingTable,
    VideoEntry,
    list_mask_files,
    load_embeddings,
    load_mask,
    load_phase_labels,
)
from .metrics import Metrics, compute_metrics
from .numerics import SparseAdjacency
from .scene_graph import FeatureConfig, build_static_graph

log = logging.getLogger(__name__)

__all__ = [
    "TrainConfig",
    "GraphSample",
    "split_dataset",
    "build_samples",
    "train",
    "evaluate",
    "run_ablation",
    "write_ablation_csv",
    "write_history",
    "save_checkpoint",
    "load_checkpoint",
    "ABLATION_CSV_HEADER",
]

ABLATION_CSV_HEADER = "graph,spatial,size,emb,temp,window,dilation,context_s,accuracy,macro_f1"


@dataclass(frozen=True)
class TrainConfig:
    """Everything that determines a training run (and hence its result)."""

    feature_config: FeatureConfig = field(default_factory=FeatureConfig)
    window: int = 30
    dilation: int = 3
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    seed: int = 0
    patience: int = 10
    num_classes: int = 19
    hidden_dims: tuple[int, ...] = DEFAULT_HIDDEN_DIMS
    label_policy: str = LABEL_NEWEST

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.window < 1 or self.dilation < 1:
            raise ValueError("window and dilation must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))

    def window_config(self) -> WindowConfig:
        return WindowConfig(
            window=self.window, dilation=self.dilation, label_policy=self.label_policy
        )

    def to_json(self) -> dict:
        fc = self.feature_config
        return {
            "feature_config": {
                "num_classes": fc.num_classes,
                "use_class": fc.use_class,
                "use_spatial": fc.use_spatial,
                "use_size": fc.use_size,
                "use_temporal": fc.use_temporal,
                "use_embedding": fc.use_embedding,
                "embedding_dim": fc.embedding_dim,
                "segment_mode": fc.segment_mode,
                "min_segment_pixels": fc.min_segment_pixels,
                "connectivity": fc.connectivity,
            },
            "window": self.window,
            "dilation": self.dilation,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "seed": self.seed,
            "patience": self.patience,
            "num_classes": self.num_classes,
            "hidden_dims": list(self.hidden_dims),
            "label_policy": self.label_policy,
        }

    @classmethod
    def from_json(cls, data: dict) -> "TrainConfig":
        fc = FeatureConfig(**data.get("feature_config", {}))
        rest = {k: v for k, v in data.items() if k != "feature_config"}
        if "hidden_dims" in rest:
            rest["hidden_dims"] = tuple(rest["hidden_dims"])
        return cls(feature_config=fc, **rest)


@dataclass(frozen=True)
class GraphSample:
    """One labelled window, with forward inputs precomputed."""

    video_id: str
    frame_index: int
    label: int
    x: np.ndarray
    adjacency: SparseAdjacency

    @property
    def feature_dim(self) -> int:
        return self.x.shape[1]


def split_dataset(
    manifest: DatasetManifest,
) -> tuple[list[VideoEntry], list[VideoEntry], list[VideoEntry]]:
    """Partition the manifest's videos by their declared split."""
    seen: dict[str, str] = {}
    for v in manifest.videos:
        if v.video_id in seen and seen[v.video_id] != v.split:
            raise OverlappingSplits(
                f"video {v.video_id!r} listed in both {seen[v.video_id]!r} and {v.split!r}"
            )
        seen[v.video_id] = v.split
    buckets = {"train": [], "val": [], "test": []}
    for v in manifest.videos:
        buckets[v.split].append(v)
    return buckets["train"], buckets["val"], buckets["test"]


def build_samples(
    videos: list[VideoEntry],
    cfg: TrainConfig,
    threads: int = 1,
) -> list[GraphSample]:
    """Window samples for every labelled frame of every video.

    Static graphs are built once per frame (optionally across a thread pool)
    and shared between overlapping windows. Windows at the start of a video
    are shorter; frames missing from the mask directory are simply absent
    from the windows that would have included them.
    """
    window_cfg = cfg.window_config()
    samples: list[GraphSample] = []
    for video in videos:
        mask_files = list_mask_files(video.mask_dir)
        if not mask_files:
            continue
        track = load_phase_labels(video.phase_csv)
        table = (
            load_embeddings(video.embeddings)
            if video.embeddings is not None
            else EmbeddingTable({}, cfg.feature_config.embedding_dim)
        )

        def build_one(item):
            frame, path = item
            mask = load_mask(path, frame_index=frame)
            return frame, build_static_graph(mask, table, cfg.feature_config)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                built = list(pool.map(build_one, mask_files))
        else:
            built = [build_one(item) for item in mask_files]
        static = dict(built)

        for frame, _ in mask_files:
            wanted = select_window(frame, cfg.window, cfg.dilation)
            graphs = [static[i] for i in wanted if i in static]
            dyn = build_dynamic_graph(graphs, window_cfg)
            samples.append(
                GraphSample(
                    video_id=video.video_id,
                    frame_index=frame,
                    label=track.label_at(dyn.label_frame_index),
                    x=dyn.feature_matrix(),
                    adjacency=normalize_adjacency(dyn),
                )
            )
    return samples


def train(
    cfg: TrainConfig, manifest: DatasetManifest, threads: int = 1
) -> tuple[GcnModel, list[dict]]:
    """Train on the manifest's train split, select on its val split.

    Returns the best-validation-accuracy model and a per-epoch history of
    {"epoch", "train_loss", "val_accuracy", "val_macro_f1"}. Stops early
    after ``patience`` epochs without a validation improvement. With an empty
    val split the final model is returned and no early stopping happens.
    """
    train_videos, val_videos, _ = split_dataset(manifest)
    if not train_videos:
        raise EmptyTrainSet("manifest has no train videos")
    train_samples = build_samples(train_videos, cfg, threads=threads)
    if not train_samples:
        raise EmptyTrainSet("train split produced no window samples")
    val_samples = build_samples(val_videos, cfg, threads=threads)

    input_dim = train_samples[0].feature_dim
    model = init_model(
        GcnConfig(
            input_dim=input_dim,
            hidden_dims=cfg.hidden_dims,
            num_classes=cfg.num_classes,
            seed=cfg.seed,
        )
    )
    hyper = AdamHyper(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
    state = init_adam_state(model)
    rng = np.random.default_rng(cfg.seed)

    best_model = model
    best_val = -1.0
    stale = 0
    history: list[dict] = []

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_samples))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            acc = zeros_like_gradients(model)
            for idx in batch:
                sample = train_samples[idx]
                loss, grads = loss_and_gradients_prepared(
                    model, sample.x, sample.adjacency, sample.label
                )
                if not np.isfinite(loss):
                    raise NonFiniteLoss(
                        f"epoch {epoch}, video {sample.video_id}, "
                        f"frame {sample.frame_index}: loss {loss}"
                    )
                losses.append(loss)
                acc = add_gradients(acc, grads)
            acc = scale_gradients(acc, 1.0 / len(batch))
            model, state = adam_step(model, acc, state, hyper)

        record = {"epoch": epoch, "train_loss": float(np.mean(losses))}
        if val_samples:
            val_metrics = evaluate(model, val_samples)
            record["val_accuracy"] = val_metrics.accuracy
            record["val_macro_f1"] = val_metrics.macro_f1
            if val_metrics.accuracy > best_val:
                best_val = val_metrics.accuracy
                best_model = model
                stale = 0
            else:
                stale += 1
        history.append(record)
        log.info(
            "epoch %d: train_loss=%.4f val_acc=%s",
            epoch,
            record["train_loss"],
            record.get("val_accuracy", "n/a"),
        )
        if val_samples and stale >= cfg.patience:
            break

    if not val_samples:
        best_model = model
    return best_model, history


def evaluate(model: GcnModel, samples: list[GraphSample]) -> Metrics:
    """Window-level accuracy and macro F1 over precomputed samples."""
    if not samples:
        raise EmptyEvalSet("no samples to evaluate")
    truth = []
    preds = []
    for sample in samples:
        _, _, pred = forward_prepared(model, sample.x, sample.adjacency)
        truth.append(sample.label)
        preds.append(pred)
    return compute_metrics(truth, preds, model.config.num_classes)


def predict(model: GcnModel, sample: GraphSample) -> int:
    return forward_prepared(model, sample.x, sample.adjacency)[2]


def write_history(history: list[dict], path: str | Path) -> None:
    Path(path).write_text(json.dumps(history, indent=2) + "\n")


# --- ablation ----------------------------------------------------------------------

@dataclass(frozen=True)
class AblationRow:
    config: TrainConfig
    metrics: Metrics | None
    error: str | None = None


def run_ablation(
    grid: list[TrainConfig], manifest: DatasetManifest, threads: int = 1
) -> list[AblationRow]:
    """Train/evaluate one row per distinct config; failures become rows too."""
    rows = []
    seen = set()
    for cfg in grid:
        key = json.dumps(cfg.to_json(), sort_keys=True)
        if key in seen:
            log.warning("duplicate ablation config skipped: window=%d dilation=%d",
                        cfg.window, cfg.dilation)
            continue
        seen.add(key)
        try:
            model, _ = train(cfg, manifest, threads=threads)
            _, _, test_videos = split_dataset(manifest)
            test_samples = build_samples(test_videos, cfg, threads=threads)
            rows.append(AblationRow(cfg, evaluate(model, test_samples)))
        except Exception as exc:  # recorded, not fatal: one bad cell shouldn't kill the grid
            log.warning("ablation cell failed: %s", exc)
            rows.append(AblationRow(cfg, None, error=str(exc)))
    return rows


def write_ablation_csv(rows: list[AblationRow], path: str | Path, fps: float) -> None:
    """CSV with one row per ablation cell, matching the fixed header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ABLATION_CSV_HEADER.split(","))
        for row in rows:
            cfg = row.config
            fc = cfg.feature_config
            graph_kind = "static" if cfg.window == 1 else "dynamic"
            context = context_seconds(cfg.window, cfg.dilation, fps)
            cells = [
                graph_kind,
                int(fc.use_spatial),
                int(fc.use_size),
                int(fc.use_embedding),
                int(fc.use_temporal),
                cfg.window,
                cfg.dilation,
                f"{context:g}",
            ]
            if row.metrics is None:
                cells.extend(["", ""])
            else:
                cells.extend([f"{row.metrics.accuracy:.6f}", f"{row.metrics.macro_f1:.6f}"])
            writer.writerow(cells)
