from __future__ import annotations

import numpy as np
import pytest

from streamctx import FrameRef, PolicyConfig, sample_timeline


@pytest.fixture
def ten_frame_timeline():
    return sample_timeline("vid", 9.0, 1.0)


@pytest.fixture
def recency_cfg():
    return PolicyConfig(kind="recency", n_recent=4)


def unit(values) -> np.ndarray:
    vec = np.asarray(values, dtype=np.float64)
    return vec / np.linalg.norm(vec)


def basis(dim: int, axis: int) -> np.ndarray:
    vec = np.zeros(dim)
    vec[axis] = 1.0
    return vec


def frames_with_embeddings(embeddings, fps: float = 1.0) -> tuple[FrameRef, ...]:
    return tuple(
        FrameRef(index=i, timestamp_s=i / fps, source=f"t:{i}", embedding=unit(e))
        for i, e in enumerate(embeddings)
    )
