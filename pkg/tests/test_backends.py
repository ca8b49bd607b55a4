from __future__ import annotations

import base64
import dataclasses

import pytest

from streamctx import (
    EchoBackend,
    GroundingEntry,
    HashEmbedder,
    MockBackend,
    PolicyConfig,
    ScriptedDelayBackend,
    build_request,
    fresh_index_builder,
    keep_all,
    recency_window,
    sample_timeline,
    visual_rag,
)
from streamctx.backends import (
    BackendRequest,
    FramePayload,
    RetrievedPayload,
    check_wire_causality,
    request_to_wire,
    response_from_wire,
    unit_draw,
)
from streamctx.errors import (
    BackendError,
    GroundingMissingError,
    InvalidInputError,
)


def _request_with_context(times, hist_times=(), query_id="q0", options=("a", "b", "c", "d")):
    frames = tuple(FramePayload(t=float(t), mode="ref", data=f"v:{t}") for t in times)
    retrieved = ()
    if hist_times:
        retrieved = (
            RetrievedPayload(
                span=(float(hist_times[0]), float(hist_times[-1])),
                frames=tuple(FramePayload(t=float(t), mode="ref", data=f"v:{t}") for t in hist_times),
            ),
        )
    t_query = max([*times, *hist_times]) if (times or hist_times) else 0.0
    return BackendRequest(
        query_id=query_id,
        question="what happened?",
        options=tuple(options),
        frames=frames,
        retrieved=retrieved,
        query_time_s=float(t_query),
    )


class TestMockBackend:
    def _mock(self, beta=0.0, gold=2, seed=0):
        grounding = {"q0": GroundingEntry(evidence=((50.0, 60.0),), beta=beta)}
        return MockBackend(grounding, {"q0": gold}, seed=seed)

    def test_evidence_visible_answers_gold(self):
        mock = self._mock()
        response = mock.answer(_request_with_context([55.0, 56.0]))
        assert response.chosen_option == 2
        assert response.query_id == "q0"

    def test_evidence_missed_answers_gold_plus_one(self):
        mock = self._mock()
        response = mock.answer(_request_with_context([90.0, 95.0, 99.0]))
        assert response.chosen_option == (2 + 1) % 4

    def test_wraparound_wrong_answer(self):
        mock = self._mock(gold=3)
        response = mock.answer(_request_with_context([90.0]))
        assert response.chosen_option == 0

    def test_zero_beta_history_is_harmless(self):
        mock = self._mock(beta=0.0)
        with_hist = mock.answer(_request_with_context([55.0], hist_times=list(range(40))))
        without = mock.answer(_request_with_context([55.0]))
        assert with_hist.chosen_option == without.chosen_option == 2

    def test_beta_one_always_wrong(self):
        grounding = {"q0": GroundingEntry(evidence=((50.0, 60.0),), beta=1.0)}
        mock = MockBackend(grounding, {"q0": 2}, seed=9)
        response = mock.answer(_request_with_context([55.0], hist_times=list(range(40))))
        assert response.chosen_option == 3  # p_err clamps to 1

    def test_monte_carlo_flip_rate(self):
        # Bernoulli oracle: p_err = min(1, 0.01 * 40) = 0.4; with 10k seeded
        # draws the empirical rate must sit within 0.40 +/- 0.02.
        beta, n_hist, trials = 0.01, 40, 10_000
        hist = list(range(40))
        flips = 0
        for i in range(trials):
            qid = f"mc-{i}"
            grounding = {qid: GroundingEntry(evidence=((50.0, 60.0),), beta=beta)}
            mock = MockBackend(grounding, {qid: 0}, seed=7)
            request = _request_with_context([55.0], hist_times=hist, query_id=qid)
            if mock.answer(request).chosen_option != 0:
                flips += 1
        assert abs(flips / trials - min(1.0, beta * n_hist)) < 0.02

    def test_determinism(self):
        mock = self._mock(beta=0.3)
        request = _request_with_context([55.0], hist_times=[1.0, 2.0])
        assert mock.answer(request) == mock.answer(request)
        twin = self._mock(beta=0.3)
        assert dataclasses.asdict(twin.answer(request)) == dataclasses.asdict(mock.answer(request))

    def test_evidence_monotonicity_at_zero_beta(self):
        mock = self._mock(beta=0.0)
        base = _request_with_context([55.0, 90.0])
        more = _request_with_context([54.0, 55.0, 90.0])
        assert mock.answer(base).chosen_option == 2
        assert mock.answer(more).chosen_option == 2

    def test_unknown_question_raises(self):
        mock = self._mock()
        with pytest.raises(GroundingMissingError):
            mock.answer(_request_with_context([1.0], query_id="mystery"))

    def test_unit_draw_stable(self):
        assert unit_draw(7, "q1") == unit_draw(7, "q1")
        assert 0.0 <= unit_draw(7, "q1") < 1.0
        assert unit_draw(7, "q1") != unit_draw(8, "q1")


class TestBuildRequest:
    def test_ref_mode_payloads(self, ten_frame_timeline, recency_cfg):
        bundle = recency_window(ten_frame_timeline.frames, recency_cfg, t_query=9.4)
        request = build_request(bundle, query_id="q1", question="?", options=("x", "y"))
        assert [p.t for p in request.frames] == [6.0, 7.0, 8.0, 9.0]
        assert all(p.mode == "ref" for p in request.frames)
        assert request.query_time_s == 9.4
        assert request.total_frames == 4

    def test_b64_mode_reads_payloads(self, tmp_path):
        blobs = []
        for k in range(3):
            target = tmp_path / f"f{k}.bin"
            target.write_bytes(bytes([k] * 4))
            blobs.append(str(target))
        frames = sample_timeline("v", 2.0, 1.0, source_pattern="{index}").frames
        frames = tuple(
            dataclasses.replace(f, source=blobs[f.index]) for f in frames
        )
        bundle = keep_all(frames, PolicyConfig(kind="keep_all"))
        request = build_request(bundle, query_id="q", question="?", frame_mode="b64")
        assert request.frames[1].data == base64.b64encode(b"\x01\x01\x01\x01").decode()

    def test_retrieved_chunks_carry_spans(self):
        frames = sample_timeline("v", 99.0, 1.0).frames
        cfg = PolicyConfig(kind="visual_rag", n_recent=4, k_retrieved=2, chunk_len=8)
        embedder = HashEmbedder(dim=8)
        bundle = visual_rag(frames, embedder.embed_text("q"), cfg, fresh_index_builder(embedder))
        request = build_request(bundle, query_id="q", question="?")
        assert len(request.retrieved) == 2
        for payload, chunk in zip(request.retrieved, bundle.retrieved_chunks):
            assert payload.span == (chunk.frames[0].timestamp_s, chunk.frames[-1].timestamp_s)
            assert len(payload.frames) == len(chunk.frames)

    def test_wire_shape(self):
        request = _request_with_context([1.0, 2.0], hist_times=[0.0])
        wire = request_to_wire(request)
        assert set(wire) == {"query_id", "question", "options", "frames", "retrieved", "gen"}
        assert wire["frames"][0] == {"t": 1.0, "mode": "ref", "data": "v:1.0"}
        assert wire["retrieved"][0]["span"] == [0.0, 0.0]
        assert wire["gen"] == {"max_new_tokens": 64}
        assert "query_time_s" not in wire


class TestWireSafety:
    def test_late_frame_refused(self):
        request = BackendRequest(
            query_id="q",
            question="?",
            options=(),
            frames=(FramePayload(t=5.0, mode="ref", data="v:5"),),
            retrieved=(),
            query_time_s=4.0,
        )
        with pytest.raises(InvalidInputError):
            check_wire_causality(request)

    def test_late_retrieved_frame_refused(self):
        request = BackendRequest(
            query_id="q",
            question="?",
            options=(),
            frames=(),
            retrieved=(
                RetrievedPayload(span=(0.0, 9.0), frames=(FramePayload(t=9.0, mode="ref", data="x"),)),
            ),
            query_time_s=8.0,
        )
        with pytest.raises(InvalidInputError):
            check_wire_causality(request)

    def test_causal_request_passes(self):
        check_wire_causality(_request_with_context([1.0, 2.0], hist_times=[0.0]))


class TestResponseValidation:
    def test_missing_answer_text_rejected(self):
        with pytest.raises(BackendError):
            response_from_wire({"query_id": "q"})

    def test_non_object_rejected(self):
        with pytest.raises(BackendError):
            response_from_wire([1, 2, 3])

    def test_chosen_option_range_checked(self):
        with pytest.raises(BackendError):
            response_from_wire(
                {"query_id": "q", "answer_text": "B", "chosen_option": 5}, n_options=2
            )

    def test_valid_reply_parses(self):
        response = response_from_wire(
            {"query_id": "q", "answer_text": "B", "chosen_option": 1, "ttft_ms": 12.5, "token_count": 1},
            n_options=2,
        )
        assert response.chosen_option == 1
        assert response.ttft_ms == 12.5


class TestDelayBackends:
    def test_scripted_delay_applies(self):
        import time

        backend = ScriptedDelayBackend(EchoBackend(), fixed_delay_ms=15.0)
        request = _request_with_context([1.0])
        started = time.perf_counter()
        response = backend.answer(request)
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        assert response.answer_text == "what happened?"
        assert elapsed_ms >= 15.0

    def test_per_frame_delay_counts_all_frames(self):
        backend = ScriptedDelayBackend(EchoBackend(), per_frame_delay_ms=1.0)
        request = _request_with_context([1.0, 2.0], hist_times=[0.0])
        assert backend.delay_ms(request) == pytest.approx(3.0)
