from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamctx import (
    HashEmbedder,
    PolicyConfig,
    PrecomputedEmbedder,
    build_context,
    context_budget,
    cosine_similarity,
    fresh_index_builder,
    keep_all,
    recency_window,
    sample_timeline,
    visual_rag,
)
from streamctx.accounting import DEFAULT_ACCOUNTING, AccountingModel
from streamctx.context_policies import BudgetReport, ContextBundle, IncrementalIndexBuilder
from streamctx.errors import InvalidConfigError, InvalidInputError, NoObservationError
from streamctx.retrieval_index import chunk_frames, embed_chunks
from streamctx.stream_core import FrameRef

from conftest import frames_with_embeddings, unit


class TestRecencyWindow:
    def test_suffix_selection(self, ten_frame_timeline, recency_cfg):
        bundle = recency_window(ten_frame_timeline.frames, recency_cfg)
        assert [f.timestamp_s for f in bundle.recent_frames] == [6.0, 7.0, 8.0, 9.0]
        assert bundle.retrieved_chunks == ()
        assert bundle.policy_id == "recency"

    def test_short_stream_clamps(self, ten_frame_timeline, recency_cfg):
        bundle = recency_window(ten_frame_timeline.frames[:2], recency_cfg)
        assert len(bundle.recent_frames) == 2

    @pytest.mark.parametrize("n", [2, 4, 8])
    def test_main_table_window_sizes(self, n):
        # the published configurations cap the window at 2, 4, or 8 frames
        frames = sample_timeline("v", 63.0, 1.0).frames
        cfg = PolicyConfig(kind="recency", n_recent=n)
        bundle = recency_window(frames, cfg)
        assert len(bundle.recent_frames) == n
        assert bundle.recent_frames[-1] is frames[-1]

    def test_empty_prefix_guarded(self, recency_cfg):
        with pytest.raises(NoObservationError):
            recency_window((), recency_cfg)

    def test_window_nesting(self):
        frames = sample_timeline("v", 40.0, 1.0).frames
        small = recency_window(frames, PolicyConfig(kind="recency", n_recent=4))
        large = recency_window(frames, PolicyConfig(kind="recency", n_recent=8))
        assert large.recent_frames[-4:] == small.recent_frames


class TestVisualRag:
    def _cfg(self, **kw):
        base = dict(kind="visual_rag", n_recent=4, k_retrieved=5, chunk_len=8)
        base.update(kw)
        return PolicyConfig(**base)

    def test_budget_arithmetic(self):
        frames = sample_timeline("v", 99.0, 1.0).frames
        cfg = self._cfg()
        builder = fresh_index_builder(HashEmbedder(dim=8))
        bundle = visual_rag(frames, HashEmbedder(dim=8).embed_text("q"), cfg, builder)
        assert len(bundle.recent_frames) == 4
        assert 1 <= len(bundle.retrieved_chunks) <= 5
        # history excludes the recent window: frames 0..95 only
        for chunk in bundle.retrieved_chunks:
            assert chunk.end_index <= 95
        assert bundle.total_frames <= 4 + 5 * 8

    def test_no_history_degrades_to_recency(self):
        frames = sample_timeline("v", 3.0, 1.0).frames
        cfg = self._cfg()
        builder = fresh_index_builder(HashEmbedder(dim=8))
        bundle = visual_rag(frames, HashEmbedder(dim=8).embed_text("q"), cfg, builder)
        assert len(bundle.recent_frames) == 4
        assert bundle.retrieved_chunks == ()
        assert bundle.policy_id == "visual_rag"

    def test_planted_chunk_retrieved(self):
        # one history chunk matches the query exactly; everything else is
        # near-orthogonal. A brute-force scan over chunk similarities must
        # agree that the planted chunk is the unique maximizer.
        dim = 32
        planted = unit(np.arange(1, dim + 1))
        rng = np.random.default_rng(123)
        embeddings = []
        for i in range(48):
            if 16 <= i < 24:
                embeddings.append(planted)
            else:
                embeddings.append(unit(rng.standard_normal(dim)))
        frames = frames_with_embeddings(embeddings)
        cfg = self._cfg(k_retrieved=1)
        builder = fresh_index_builder(PrecomputedEmbedder(dim))
        bundle = visual_rag(frames, planted, cfg, builder)
        assert len(bundle.retrieved_chunks) == 1
        assert (bundle.retrieved_chunks[0].start_index, bundle.retrieved_chunks[0].end_index) == (16, 23)
        # independent check: planted chunk beats every other chunk's cosine
        index = embed_chunks(chunk_frames(frames[:-4], 8), PrecomputedEmbedder(dim))
        sims = [cosine_similarity(c.embedding, planted) for c in index.chunks]
        assert int(np.argmax(sims)) == 2  # chunk covering frames 16..23

    def test_retrieved_chunks_chronological(self):
        frames = sample_timeline("v", 99.0, 1.0).frames
        cfg = self._cfg()
        builder = fresh_index_builder(HashEmbedder(dim=8))
        bundle = visual_rag(frames, HashEmbedder(dim=8).embed_text("zz"), cfg, builder)
        starts = [c.start_index for c in bundle.retrieved_chunks]
        assert starts == sorted(starts)

    def test_bounded_budget_sweep(self):
        cfg = self._cfg()
        builder = fresh_index_builder(HashEmbedder(dim=8))
        query = HashEmbedder(dim=8).embed_text("q")
        for length in (1, 3, 4, 5, 12, 100, 1000):
            frames = sample_timeline("v", float(length - 1), 1.0).frames
            bundle = visual_rag(frames, query, cfg, builder)
            assert bundle.total_frames <= cfg.n_recent + cfg.k_retrieved * cfg.chunk_len

    def test_statelessness(self):
        frames = sample_timeline("v", 50.0, 1.0).frames
        cfg = self._cfg()
        builder = fresh_index_builder(HashEmbedder(dim=8))
        query = HashEmbedder(dim=8).embed_text("q")
        first = visual_rag(frames, query, cfg, builder)
        second = visual_rag(frames, query, cfg, builder)
        assert first.recent_frames == second.recent_frames
        assert [c.chunk_id for c in first.retrieved_chunks] == [
            c.chunk_id for c in second.retrieved_chunks
        ]

    def test_incremental_builder_equivalent_to_fresh(self):
        embedder = HashEmbedder(dim=16)
        cfg = self._cfg(k_retrieved=3)
        incremental = IncrementalIndexBuilder(embedder)
        fresh = fresh_index_builder(embedder)
        query = embedder.embed_text("probe")
        for t in (10.0, 20.0, 21.0, 37.0, 80.0):
            frames = sample_timeline("v", t, 1.0).frames
            a = visual_rag(frames, query, cfg, incremental)
            b = visual_rag(frames, query, cfg, fresh)
            assert [(c.chunk_id, c.start_index) for c in a.retrieved_chunks] == [
                (c.chunk_id, c.start_index) for c in b.retrieved_chunks
            ]


class TestKeepAll:
    def test_identity(self, ten_frame_timeline):
        bundle = keep_all(ten_frame_timeline.frames, PolicyConfig(kind="keep_all"))
        assert bundle.recent_frames == ten_frame_timeline.frames

    def test_empty_guarded(self):
        with pytest.raises(NoObservationError):
            keep_all((), PolicyConfig(kind="keep_all"))

    def test_linear_growth(self):
        cfg = PolicyConfig(kind="keep_all")
        counts = []
        for length in (10, 20, 40):
            frames = sample_timeline("v", float(length - 1), 1.0).frames
            counts.append(keep_all(frames, cfg).budget.frame_count)
        assert counts == [10, 20, 40]


class TestBudget:
    def test_recency_counts(self, ten_frame_timeline, recency_cfg):
        bundle = recency_window(ten_frame_timeline.frames, recency_cfg)
        report = context_budget(bundle)
        assert report.frame_count == 4
        assert report.retrieved_frame_count == 0
        assert report.retained_bytes == 4 * DEFAULT_ACCOUNTING.bytes_per_frame_proxy

    def test_visual_rag_full_counts(self):
        frames = sample_timeline("v", 99.0, 1.0).frames
        cfg = PolicyConfig(kind="visual_rag", n_recent=4, k_retrieved=5, chunk_len=8)
        builder = fresh_index_builder(HashEmbedder(dim=8))
        bundle = visual_rag(frames, HashEmbedder(dim=8).embed_text("q"), cfg, builder)
        report = context_budget(bundle)
        assert report.frame_count == 4
        assert report.retrieved_frame_count == 5 * 8
        expected = DEFAULT_ACCOUNTING.frames_bytes(44) + DEFAULT_ACCOUNTING.embeddings_bytes(5, 8)
        assert report.retained_bytes == expected

    def test_keep_all_256(self):
        frames = sample_timeline("v", 255.0, 1.0).frames
        bundle = keep_all(frames, PolicyConfig(kind="keep_all"))
        assert bundle.budget.frame_count == 256

    def test_custom_accounting(self, ten_frame_timeline, recency_cfg):
        tiny = AccountingModel(bytes_per_frame_proxy=10, fixed_overhead_bytes=3)
        bundle = recency_window(ten_frame_timeline.frames, recency_cfg, accounting=tiny)
        assert bundle.budget.retained_bytes == 4 * 10 + 3


class TestCausalityAndConfig:
    def test_bundle_rejects_late_frame(self):
        late = FrameRef(index=5, timestamp_s=5.0, source="v:5")
        with pytest.raises(InvalidInputError):
            ContextBundle(
                recent_frames=(late,),
                retrieved_chunks=(),
                query_time_s=4.0,
                policy_id="recency",
                budget=BudgetReport(frame_count=1, retrieved_frame_count=0, retained_bytes=0),
            )

    def test_config_validation(self):
        with pytest.raises(InvalidConfigError):
            PolicyConfig(kind="recency", n_recent=0)
        with pytest.raises(InvalidConfigError):
            PolicyConfig(kind="visual_rag", k_retrieved=-1)
        with pytest.raises(InvalidConfigError):
            PolicyConfig(kind="mystery")

    def test_build_context_dispatch(self, ten_frame_timeline):
        frames = ten_frame_timeline.frames
        assert build_context(frames, PolicyConfig(kind="keep_all")).policy_id == "keep_all"
        assert (
            build_context(frames, PolicyConfig(kind="recency", n_recent=2)).policy_id == "recency"
        )
        with pytest.raises(InvalidConfigError):
            build_context(frames, PolicyConfig(kind="visual_rag"))

    def test_query_time_recorded(self, ten_frame_timeline, recency_cfg):
        bundle = recency_window(ten_frame_timeline.frames[:4], recency_cfg, t_query=3.7)
        assert bundle.query_time_s == 3.7
        with pytest.raises(InvalidInputError):
            recency_window(ten_frame_timeline.frames, recency_cfg, t_query=2.0)

    @settings(max_examples=60, deadline=None)
    @given(
        length=st.integers(min_value=1, max_value=60),
        n_small=st.integers(min_value=1, max_value=10),
        extra=st.integers(min_value=1, max_value=10),
    )
    def test_window_nesting_property(self, length, n_small, extra):
        frames = sample_timeline("v", float(length - 1), 1.0).frames
        small = recency_window(frames, PolicyConfig(kind="recency", n_recent=n_small))
        large = recency_window(frames, PolicyConfig(kind="recency", n_recent=n_small + extra))
        k = len(small.recent_frames)
        assert large.recent_frames[-k:] == small.recent_frames
