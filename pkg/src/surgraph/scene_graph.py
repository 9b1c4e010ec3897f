"""Static scene graphs from segmentation masks.

A mask is decomposed into segments (one per class present, or one per
4-connected component), segments become nodes carrying feature vectors, and
two nodes are joined by an undirected edge when their pixel regions touch.
All operations are pure and deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import EmptyMask, MissingFrameKey, OutOfRange
from .ingest import EmbeddingTable, SegmentationMask

SPATIAL_DIM = 16
TEMPORAL_DIM = 16
SIZE_DIM = 1

SEGMENT_MODE_CLASS = "per-class-region"
SEGMENT_MODE_COMPONENT = "per-component"


@dataclass(frozen=True)
class FeatureConfig:
    """Which node-feature blocks are active and how segments are formed.

    Feature vectors are the concatenation, in this order, of the active
    blocks: class one-hot (``num_classes``), spatial position (16), relative
    size (1), temporal position (16, zeros until a dynamic graph overwrites
    them), and segment embedding (``embedding_dim``). Inactive blocks
    contribute zero width.
    """

    num_classes: int = 17
    use_class: bool = True
    use_spatial: bool = False
    use_size: bool = False
    use_temporal: bool = False
    use_embedding: bool = False
    embedding_dim: int = 100
    segment_mode: str = SEGMENT_MODE_CLASS
    min_segment_pixels: int = 10
    connectivity: int = 4

    def __post_init__(self):
        if self.segment_mode not in (SEGMENT_MODE_CLASS, SEGMENT_MODE_COMPONENT):
            raise ValueError(f"unknown segment_mode {self.segment_mode!r}")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")
        if self.feature_dim == 0:
            raise ValueError("at least one feature block must be active")

    @property
    def feature_dim(self) -> int:
        return sum(width for _, width in self._blocks())

    def block_slices(self) -> dict[str, slice]:
        """Name -> slice of each active block inside a feature vector."""
        slices = {}
        offset = 0
        for name, width in self._blocks():
            slices[name] = slice(offset, offset + width)
            offset += width
        return slices

    def _blocks(self) -> list[tuple[str, int]]:
        blocks = []
        if self.use_class:
            blocks.append(("class", self.num_classes))
        if self.use_spatial:
            blocks.append(("spatial", SPATIAL_DIM))
        if self.use_size:
            blocks.append(("size", SIZE_DIM))
        if self.use_temporal:
            blocks.append(("temporal", TEMPORAL_DIM))
        if self.use_embedding:
            blocks.append(("embedding", self.embedding_dim))
        return blocks


@dataclass(frozen=True)
class Segment:
    """A region of the mask assigned one class."""

    class_id: int
    pixel_count: int
    centroid: tuple[float, float]
    component_index: int = 0
    bounding_box: tuple[int, int, int, int] = (0, 0, 0, 0)

    def key(self, mode: str) -> str:
        """Embedding-table key for this segment."""
        if mode == SEGMENT_MODE_COMPONENT:
            return f"seg_{self.class_id}_{self.component_index}"
        return f"seg_{self.class_id}"


@dataclass(frozen=True)
class NodeRecord:
    """A graph node: segment summary plus its feature vector."""

    class_id: int
    centroid: tuple[float, float]
    size: float
    component_index: int
    features: np.ndarray
    t: int = 0


@dataclass(frozen=True)
class SceneGraph:
    """Nodes with features and undirected spatial edges for one frame."""

    frame_index: int
    nodes: tuple[NodeRecord, ...]
    edges: tuple[tuple[int, int], ...]
    config: FeatureConfig

    @property
    def feature_dim(self) -> int:
        return self.config.feature_dim

    def feature_matrix(self) -> np.ndarray:
        return np.stack([n.features for n in self.nodes])


def extract_segments(mask: SegmentationMask, cfg: FeatureConfig) -> list[Segment]:
    """Segment the mask per the config's mode and pixel threshold.

    Per-class-region mode yields at most one segment per class (the union of
    that class's pixels); per-component mode yields one segment per
    4-connected component. Segments smaller than ``min_segment_pixels`` are
    dropped. Raises EmptyMask when nothing survives.
    """
    segments, _ = _segments_with_index_image(mask, cfg)
    if not segments:
        raise EmptyMask(f"frame {mask.frame_index}: no segment >= {cfg.min_segment_pixels} px")
    return segments


def compute_adjacency(
    mask: SegmentationMask,
    segments: list[Segment],
    cfg: FeatureConfig | None = None,
) -> list[tuple[int, int]]:
    """Undirected edges between segments whose pixels touch.

    Edge (i, j) exists iff some pixel of segment i is a 4-neighbour (or
    8-neighbour, per config) of some pixel of segment j. Edges are returned
    sorted by (min, max) node index.
    """
    cfg = cfg or FeatureConfig()
    rebuilt, index_image = _segments_with_index_image(mask, cfg)
    if [s.class_id for s in rebuilt] != [s.class_id for s in segments] or [
        s.component_index for s in rebuilt
    ] != [s.component_index for s in segments]:
        raise ValueError("segments were not extracted from this mask/config")
    return _edges_from_index_image(index_image, cfg.connectivity)


def spatial_encoding(cx: float, cy: float) -> np.ndarray:
    """Sinusoidal 16-vector for a normalized centroid.

    For coord in (cx, cy) and k in 0..3 the output carries
    sin(2^k * pi * coord), cos(2^k * pi * coord).
    """
    if not (0.0 <= cx <= 1.0 and 0.0 <= cy <= 1.0):
        raise OutOfRange(f"centroid ({cx}, {cy}) outside [0,1]^2")
    out = np.empty(SPATIAL_DIM)
    i = 0
    for coord in (cx, cy):
        for k in range(4):
            angle = (2.0**k) * np.pi * coord
            out[i] = np.sin(angle)
            out[i + 1] = np.cos(angle)
            i += 2
    return out


def segment_size(segment: Segment, mask: SegmentationMask) -> float:
    """Relative segment area: pixel count over mask area, in (0, 1]."""
    return segment.pixel_count / (mask.width * mask.height)


def build_static_graph(
    mask: SegmentationMask,
    embeddings: EmbeddingTable | None = None,
    cfg: FeatureConfig | None = None,
) -> SceneGraph:
    """Build the frame's scene graph: segments -> featured nodes + edges.

    Node order is ascending (class_id, component_index). The temporal block,
    when active, is zero here; dynamic graph construction overwrites it.
    An empty or all-below-threshold mask raises EmptyMask.
    """
    cfg = cfg or FeatureConfig()
    if cfg.use_embedding and (embeddings is None or embeddings.empty):
        # An absent table disables the block rather than zero-filling 100 dims.
        cfg = replace(cfg, use_embedding=False)
    segments, index_image = _segments_with_index_image(mask, cfg)
    if not segments:
        raise EmptyMask(f"frame {mask.frame_index}: no segment >= {cfg.min_segment_pixels} px")
    edges = _edges_from_index_image(index_image, cfg.connectivity)

    slices = cfg.block_slices()
    nodes = []
    for seg in segments:
        feat = np.zeros(cfg.feature_dim)
        if cfg.use_class:
            if seg.class_id >= cfg.num_classes:
                raise OutOfRange(
                    f"class id {seg.class_id} outside one-hot of {cfg.num_classes}"
                )
            feat[slices["class"].start + seg.class_id] = 1.0
        if cfg.use_spatial:
            feat[slices["spatial"]] = spatial_encoding(*seg.centroid)
        size = segment_size(seg, mask)
        if cfg.use_size:
            feat[slices["size"]] = size
        if cfg.use_embedding:
            vec = embeddings.vector(mask.frame_index, seg.key(cfg.segment_mode))
            if vec.shape[0] != cfg.embedding_dim:
                raise MissingFrameKey(
                    f"embedding length {vec.shape[0]} != configured {cfg.embedding_dim}"
                )
            feat[slices["embedding"]] = vec
        nodes.append(
            NodeRecord(
                class_id=seg.class_id,
                centroid=seg.centroid,
                size=size,
                component_index=seg.component_index,
                features=feat,
            )
        )
    return SceneGraph(
        frame_index=mask.frame_index,
        nodes=tuple(nodes),
        edges=tuple(edges),
        config=cfg,
    )


# --- JSON export ----------------------------------------------------------------

def graph_to_json(graph: SceneGraph) -> dict:
    return {
        "frame": graph.frame_index,
        "d": graph.feature_dim,
        "nodes": [
            {
                "class": n.class_id,
                "centroid": [n.centroid[0], n.centroid[1]],
                "size": n.size,
                "features": n.features.tolist(),
            }
            for n in graph.nodes
        ],
        "edges": [[i, j] for i, j in graph.edges],
    }


def graph_from_json(data: dict, cfg: FeatureConfig | None = None) -> SceneGraph:
    nodes = tuple(
        NodeRecord(
            class_id=n["class"],
            centroid=(n["centroid"][0], n["centroid"][1]),
            size=n["size"],
            component_index=0,
            features=np.asarray(n["features"], dtype=np.float64),
        )
        for n in data["nodes"]
    )
    if cfg is None:
        cfg = FeatureConfig(num_classes=data["d"], use_class=True)
    return SceneGraph(
        frame_index=data["frame"],
        nodes=nodes,
        edges=tuple((e[0], e[1]) for e in data["edges"]),
        config=cfg,
    )


def write_graph_json(graph: SceneGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(graph_to_json(graph)) + "\n")


# --- internals --------------------------------------------------------------------

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


def _segments_with_index_image(
    mask: SegmentationMask, cfg: FeatureConfig
) -> tuple[list[Segment], np.ndarray]:
    """Surviving segments plus a (h, w) image of node indices (-1 = dropped)."""
    ids = mask.class_ids
    index_image = np.full(ids.shape, -1, dtype=np.int32)
    segments: list[Segment] = []
    structure = _FOUR_CONNECTED if cfg.connectivity == 4 else _EIGHT_CONNECTED

    for class_id in np.unique(ids):
        class_mask = ids == class_id
        if cfg.segment_mode == SEGMENT_MODE_CLASS:
            regions = [class_mask]
        else:
            labelled, count = ndimage.label(class_mask, structure=structure)
            regions = [labelled == lab for lab in range(1, count + 1)]
        component = 0
        for region in regions:
            count = int(region.sum())
            if count < cfg.min_segment_pixels:
                continue
            segments.append(_segment_from_region(region, int(class_id), component, mask, count))
            index_image[region] = len(segments) - 1
            component += 1
    return segments, index_image


def _segment_from_region(
    region: np.ndarray, class_id: int, component: int, mask: SegmentationMask, count: int
) -> Segment:
    ys, xs = np.nonzero(region)
    # Pixel centers: pixel (x, y) sits at ((x + 0.5) / W, (y + 0.5) / H).
    cx = float((xs + 0.5).mean() / mask.width)
    cy = float((ys + 0.5).mean() / mask.height)
    bbox = (int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))
    return Segment(
        class_id=class_id,
        pixel_count=count,
        centroid=(cx, cy),
        component_index=component,
        bounding_box=bbox,
    )


def _edges_from_index_image(index_image: np.ndarray, connectivity: int) -> list[tuple[int, int]]:
    pairs = set()
    shifts = [(0, 1), (1, 0)]
    if connectivity == 8:
        shifts += [(1, 1), (1, -1)]
    for dy, dx in shifts:
        a, b = _shifted_views(index_image, dy, dx)
        touching = (a != b) & (a >= 0) & (b >= 0)
        lo = np.minimum(a[touching], b[touching])
        hi = np.maximum(a[touching], b[touching])
        pairs.update(zip(lo.tolist(), hi.tolist()))
    return sorted(pairs)


def _shifted_views(image: np.ndarray, dy: int, dx: int) -> tuple[np.ndarray, np.ndarray]:
    h, w = image.shape
    ys = slice(max(0, -dy), min(h, h - dy))
    xs = slice(max(0, -dx), min(w, w - dx))
    ys2 = slice(max(0, dy), min(h, h + dy))
    xs2 = slice(max(0, dx), min(w, w + dx))
    return image[ys, xs], image[ys2, xs2]
