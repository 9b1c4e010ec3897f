import numpy as np
import pytest

from surgraph.ingest import SegmentationMask


@pytest.fixture
def report(capfd):
    """Print a line straight to the terminal, bypassing pytest capture."""

    def _report(line: str):
        with capfd.disabled():
            print(line)

    return _report


def random_mask(rng, max_side=32, max_classes=8, frame_index=0) -> SegmentationMask:
    w = int(rng.integers(2, max_side + 1))
    h = int(rng.integers(2, max_side + 1))
    n_classes = int(rng.integers(2, max_classes + 1))
    ids = rng.integers(0, n_classes, size=(h, w)).astype(np.uint8)
    return SegmentationMask(width=w, height=h, class_ids=ids, frame_index=frame_index)


def stripe_mask(classes, width=12, rows_per_class=2, frame_index=0) -> SegmentationMask:
    """Horizontal stripes, one per class in the given order."""
    rows = []
    for c in classes:
        rows.append(np.full((rows_per_class, width), c, dtype=np.uint8))
    ids = np.concatenate(rows, axis=0)
    return SegmentationMask(
        width=width, height=ids.shape[0], class_ids=ids, frame_index=frame_index
    )
