"""Dynamic scene graphs: a dilated window of static graphs stitched together.

Nodes from each included frame are kept (timestep-major), spatial edges stay
within their frame, and temporal edges join nodes of equal class in
consecutive timesteps. Each node's temporal feature block is overwritten with
a sinusoidal encoding of its relative position in the window.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import EmptyWindow, OutOfRange
from .scene_graph import TEMPORAL_DIM, FeatureConfig, NodeRecord, SceneGraph

EDGE_SPATIAL = "spatial"
EDGE_TEMPORAL = "temporal"

LABEL_NEWEST = "newest"
LABEL_CENTER = "center"


@dataclass(frozen=True)
class WindowConfig:
    """How frames are gathered into a window and labelled.

    ``window`` static graphs spaced ``dilation`` frames apart end at the
    query frame; together they cover window*dilation/fps seconds of video.
    ``bridge_single_gap`` optionally joins nodes across one missing timestep
    when their class vanished in between.
    """

    window: int = 30
    dilation: int = 3
    label_policy: str = LABEL_NEWEST
    bridge_single_gap: bool = False

    def __post_init__(self):
        if self.window < 1 or self.dilation < 1:
            raise ValueError("window and dilation must be >= 1")
        if self.label_policy not in (LABEL_NEWEST, LABEL_CENTER):
            raise ValueError(f"unknown label_policy {self.label_policy!r}")


@dataclass(frozen=True)
class DynamicGraph:
    """Union of windowed scene graphs with temporal stitching.

    ``window`` is the number of timesteps actually included (smaller than the
    configured window near the start of a video). Edges are ``(i, j, kind)``
    with i < j in the timestep-major node order, grouped as: spatial edges of
    step 0, temporal edges 0-1, spatial edges of step 1, temporal 1-2, ...
    """

    window: int
    dilation: int
    label_frame_index: int
    frame_indices: tuple[int, ...]
    nodes: tuple[NodeRecord, ...]
    edges: tuple[tuple[int, int, str], ...]
    config: FeatureConfig

    @property
    def feature_dim(self) -> int:
        return self.config.feature_dim

    def feature_matrix(self) -> np.ndarray:
        return np.stack([n.features for n in self.nodes])

    def spatial_edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i, j, kind in self.edges if kind == EDGE_SPATIAL]

    def temporal_edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i, j, kind in self.edges if kind == EDGE_TEMPORAL]


def select_window(frame_index: int, window: int, dilation: int) -> list[int]:
    """Frame indices [f-(W-1)D, ..., f-D, f]; negative indices are dropped."""
    if window < 1 or dilation < 1:
        raise ValueError("window and dilation must be >= 1")
    frames = [frame_index - k * dilation for k in range(window - 1, -1, -1)]
    return [f for f in frames if f >= 0]


def context_seconds(window: int, dilation: int, fps: float) -> float:
    """Seconds of video a window spans."""
    if fps <= 0:
        raise ValueError("fps must be positive")
    return window * dilation / fps


def temporal_encoding(t: int, window: int) -> np.ndarray:
    """Sinusoidal 16-vector for timestep t of a window.

    r = t/(W-1) in [0, 1] (r = 1 for a single-frame window, so the newest
    frame always encodes as r = 1); entries are sin(2^k pi r), cos(2^k pi r)
    for k in 0..7.
    """
    if not 0 <= t < window:
        raise OutOfRange(f"timestep {t} outside window of {window}")
    r = 1.0 if window == 1 else t / (window - 1)
    out = np.empty(TEMPORAL_DIM)
    for k in range(8):
        angle = (2.0**k) * np.pi * r
        out[2 * k] = np.sin(angle)
        out[2 * k + 1] = np.cos(angle)
    return out


def build_dynamic_graph(graphs: list[SceneGraph], cfg: WindowConfig | None = None) -> DynamicGraph:
    """Stitch ordered static graphs (oldest first) into a dynamic graph.

    Temporal edges connect every pair of equal-class nodes in consecutive
    timesteps; a class absent from a timestep breaks its chain there unless
    ``bridge_single_gap`` lets one missing step be skipped. Raises
    EmptyWindow for an empty list.
    """
    cfg = cfg or WindowConfig()
    if not graphs:
        raise EmptyWindow("no static graphs in window")
    feat_cfg = graphs[0].config
    if any(g.config != feat_cfg for g in graphs[1:]):
        raise ValueError("all graphs in a window must share one feature config")

    steps = len(graphs)
    offsets = np.cumsum([0] + [len(g.nodes) for g in graphs[:-1]]).tolist()
    temporal_slice = (
        feat_cfg.block_slices()["temporal"] if feat_cfg.use_temporal else None
    )

    nodes: list[NodeRecord] = []
    for t, graph in enumerate(graphs):
        encoding = temporal_encoding(t, steps) if temporal_slice else None
        for record in graph.nodes:
            features = record.features
            if encoding is not None:
                features = features.copy()
                features[temporal_slice] = encoding
            nodes.append(replace(record, features=features, t=t))

    edges: list[tuple[int, int, str]] = []
    for t, graph in enumerate(graphs):
        for i, j in graph.edges:
            edges.append((offsets[t] + i, offsets[t] + j, EDGE_SPATIAL))
        if t + 1 < steps:
            edges.extend(_class_match_edges(graphs[t], graphs[t + 1], offsets[t], offsets[t + 1]))
            if cfg.bridge_single_gap and t + 2 < steps:
                absent = {n.class_id for n in graphs[t].nodes} - {
                    n.class_id for n in graphs[t + 1].nodes
                }
                edges.extend(
                    _class_match_edges(
                        graphs[t], graphs[t + 2], offsets[t], offsets[t + 2], only=absent
                    )
                )

    if cfg.label_policy == LABEL_CENTER:
        label_frame = graphs[steps // 2].frame_index
    else:
        label_frame = graphs[-1].frame_index
    return DynamicGraph(
        window=steps,
        dilation=cfg.dilation,
        label_frame_index=label_frame,
        frame_indices=tuple(g.frame_index for g in graphs),
        nodes=tuple(nodes),
        edges=tuple(edges),
        config=feat_cfg,
    )


def _class_match_edges(older, newer, off_a, off_b, only=None):
    out = []
    for i, a in enumerate(older.nodes):
        if only is not None and a.class_id not in only:
            continue
        for j, b in enumerate(newer.nodes):
            if a.class_id == b.class_id:
                out.append((off_a + i, off_b + j, EDGE_TEMPORAL))
    return out


# --- JSON export ----------------------------------------------------------------

def dynamic_graph_to_json(graph: DynamicGraph) -> dict:
    return {
        "frame": graph.label_frame_index,
        "d": graph.feature_dim,
        "window": graph.window,
        "dilation": graph.dilation,
        "label_frame": graph.label_frame_index,
        "frames": list(graph.frame_indices),
        "nodes": [
            {
                "class": n.class_id,
                "t": n.t,
                "centroid": [n.centroid[0], n.centroid[1]],
                "size": n.size,
                "features": n.features.tolist(),
            }
            for n in graph.nodes
        ],
        "edges": [[i, j, kind] for i, j, kind in graph.edges],
    }


def dynamic_graph_from_json(data: dict, cfg: FeatureConfig | None = None) -> DynamicGraph:
    nodes = tuple(
        NodeRecord(
            class_id=n["class"],
            centroid=(n["centroid"][0], n["centroid"][1]),
            size=n["size"],
            component_index=0,
            features=np.asarray(n["features"], dtype=np.float64),
            t=n["t"],
        )
        for n in data["nodes"]
    )
    if cfg is None:
        cfg = FeatureConfig(num_classes=data["d"], use_class=True)
    return DynamicGraph(
        window=data["window"],
        dilation=data["dilation"],
        label_frame_index=data["label_frame"],
        frame_indices=tuple(data.get("frames", [])),
        nodes=nodes,
        edges=tuple((e[0], e[1], e[2]) for e in data["edges"]),
        config=cfg,
    )


def write_dynamic_graph_json(graph: DynamicGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(dynamic_graph_to_json(graph)) + "\n")
