from __future__ import annotations

import json
import statistics

import pytest

from streamctx import gen_synthetic, load_benchmark, save_benchmark, validate
from streamctx.bench import (
    OVO_CATEGORY_MAP,
    SyntheticParams,
    parse_benchmark,
    planted_distances,
)
from streamctx.errors import BenchmarkFormatError, InvalidConfigError


def _native_payload():
    return {
        "name": "mini",
        "category_map": {"OCR": "real_time", "EPM": "backward"},
        "questions": [
            {
                "question_id": "q1",
                "video_id": "v1",
                "track": "OCR",
                "question": "What does the sign say?",
                "options": ["stop", "go", "yield"],
                "gold_option": 0,
                "query_time_s": 12.0,
            },
            {
                "question_id": "q2",
                "video_id": "v1",
                "track": "EPM",
                "question": "What happened earlier?",
                "options": ["a", "b"],
                "gold_option": "B",
                "query_time_s": 40.0,
            },
            {
                "question_id": "q3",
                "video_id": "v2",
                "track": "OCR",
                "question": "Read the plate.",
                "options": ["x", "y", "z", "w"],
                "gold_option": 3,
                "query_time_s": 5.5,
            },
        ],
        "grounding": {
            "q1": {"evidence": [[10.0, 12.0]], "beta": 0.0},
            "q2": {"evidence": [[3.0, 6.0]], "beta": 0.01},
        },
    }


def _write(tmp_path, payload, name="bench.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


class TestNativeLoader:
    def test_round_trip_ids(self, tmp_path):
        bench = load_benchmark(_write(tmp_path, _native_payload()))
        assert [q.question_id for q in bench.questions] == ["q1", "q2", "q3"]
        assert bench.name == "mini"

    def test_letter_gold_converted(self, tmp_path):
        bench = load_benchmark(_write(tmp_path, _native_payload()))
        assert bench.question_by_id()["q2"].gold_option == 1

    def test_grounding_parsed(self, tmp_path):
        bench = load_benchmark(_write(tmp_path, _native_payload()))
        assert bench.grounding["q2"].beta == 0.01
        assert bench.grounding["q1"].evidence == ((10.0, 12.0),)

    def test_negative_query_time_is_itemized(self, tmp_path):
        payload = _native_payload()
        payload["questions"][1]["query_time_s"] = -1.0
        path = _write(tmp_path, payload)
        with pytest.raises(BenchmarkFormatError) as err:
            load_benchmark(path)
        assert any(f.question_id == "q2" for f in err.value.findings)
        # loader totality: the two clean questions still parse
        bench, report = parse_benchmark(path)
        assert len(bench.questions) == 2
        assert len(report.errors) == 1

    def test_gold_out_of_range_is_itemized(self, tmp_path):
        payload = _native_payload()
        payload["questions"][0]["gold_option"] = 9
        with pytest.raises(BenchmarkFormatError):
            load_benchmark(_write(tmp_path, payload))

    def test_unknown_format_tag(self, tmp_path):
        with pytest.raises(InvalidConfigError):
            load_benchmark(_write(tmp_path, _native_payload()), "mystery")


class TestOvoAdapter:
    def _payload(self):
        items = []
        for i, task in enumerate(["OCR", "ACR", "ATR", "STU", "FPD", "OJR", "EPM", "ASI", "HLD"]):
            items.append(
                {
                    "id": f"ovo-{i}",
                    "video": f"vid-{i}",
                    "task": task,
                    "question": f"question {i}",
                    "options": ["A. one", "B. two", "C. three", "D. four"],
                    "answer": "C",
                    "realtime": 30.0 + i,
                }
            )
        items.append(
            {
                "id": "ovo-fwd",
                "video": "vid-f",
                "task": "REC",
                "question": "forward item",
                "options": ["A", "B"],
                "answer": "A",
                "realtime": 9.0,
            }
        )
        return items

    def test_category_map_and_tracks(self, tmp_path):
        bench = load_benchmark(_write(tmp_path, self._payload()), "ovo")
        assert bench.category_map == OVO_CATEGORY_MAP
        assert set(bench.tracks()) == set(OVO_CATEGORY_MAP)
        assert all(q.gold_option == 2 for q in bench.questions)

    def test_forward_items_skipped_with_finding(self, tmp_path):
        _, report = parse_benchmark(_write(tmp_path, self._payload()), "ovo")
        kinds = [f.kind for f in report.warnings]
        assert "out-of-scope-track" in kinds

    def test_official_count_checked_as_warning(self, tmp_path):
        _, report = parse_benchmark(_write(tmp_path, self._payload()), "ovo")
        assert any(f.kind == "unexpected-count" for f in report.warnings)
        assert not any(f.kind == "unexpected-count" for f in report.errors)


class TestStreamingBenchAdapter:
    def test_real_time_category(self, tmp_path):
        items = [
            {
                "id": "sb-1",
                "video": "v",
                "task_type": "object-perception",
                "question": "?",
                "options": ["A", "B", "C", "D"],
                "answer": "D",
                "time_stamp": 77.0,
            }
        ]
        bench = load_benchmark(_write(tmp_path, items), "streamingbench")
        assert bench.category_map == {"object-perception": "real_time"}
        assert bench.questions[0].gold_option == 3


class TestValidate:
    def test_clean_fixture(self, tmp_path):
        bench = load_benchmark(_write(tmp_path, _native_payload()))
        assert validate(bench).clean

    def test_duplicate_id_found(self, tmp_path):
        payload = _native_payload()
        payload["questions"].append(dict(payload["questions"][0]))
        bench, report = parse_benchmark(_write(tmp_path, payload))
        assert any(f.kind == "duplicate-id" for f in report.errors)

    def test_unmapped_track_found(self, tmp_path):
        payload = _native_payload()
        payload["questions"][2]["track"] = "XYZ"
        bench, report = parse_benchmark(_write(tmp_path, payload))
        assert any(f.kind == "unmapped-track" for f in report.errors)

    def test_query_beyond_duration_found(self, tmp_path):
        bench = load_benchmark(_write(tmp_path, _native_payload()))
        report = validate(bench, durations={"v1": 20.0})
        assert any(f.kind == "query-beyond-stream" and f.question_id == "q2" for f in report.findings)


class TestGenSynthetic:
    def test_fixed_distance_layout(self):
        params = SyntheticParams(n_questions=100, fixed_distance_s=30, rt_fraction=0.0)
        bench = gen_synthetic(7, params)
        assert len(bench.questions) == 100
        for q in bench.questions:
            assert q.track == "SYN-MEM"
            (a, b), = bench.grounding[q.question_id].evidence
            assert q.query_time_s - b == 30.0
            assert b - a == params.evidence_len_s
            assert a >= 0

    def test_rt_evidence_inside_window(self):
        params = SyntheticParams(n_questions=50, rt_fraction=1.0, recent_window_truth_s=4)
        bench = gen_synthetic(3, params)
        for q in bench.questions:
            (a, b), = bench.grounding[q.question_id].evidence
            assert b == q.query_time_s
            assert q.query_time_s - a == 3.0

    def test_same_seed_byte_identical(self, tmp_path):
        params = SyntheticParams(n_questions=40)
        one, two = tmp_path / "one.json", tmp_path / "two.json"
        save_benchmark(gen_synthetic(11, params), one)
        save_benchmark(gen_synthetic(11, params), two)
        assert one.read_bytes() == two.read_bytes()
        assert one.read_bytes() != b""

    def test_different_seed_differs(self):
        params = SyntheticParams(n_questions=40)
        assert gen_synthetic(1, params) != gen_synthetic(2, params)

    def test_monte_carlo_mean_distance(self):
        # uniform whole-second distances on [10, 100] have mean 55; with 10k
        # samples the empirical mean must land within +/- 2.
        params = SyntheticParams(
            n_questions=10_000, rt_fraction=0.0, distance_min_s=10, distance_max_s=100, stream_len_s=200
        )
        bench = gen_synthetic(5, params)
        distances = list(planted_distances(bench).values())
        assert len(distances) == 10_000
        assert abs(statistics.fmean(distances) - 55.0) < 2.0
        assert all(d == int(d) for d in distances[:100])

    def test_overflow_error_mode(self):
        params = SyntheticParams(
            n_questions=10,
            rt_fraction=0.0,
            distance_min_s=150,
            distance_max_s=300,
            stream_len_s=160,
            on_overflow="error",
        )
        with pytest.raises(InvalidConfigError):
            gen_synthetic(1, params)

    def test_overflow_regeneration_keeps_distances_feasible(self):
        params = SyntheticParams(
            n_questions=200,
            rt_fraction=0.0,
            distance_min_s=150,
            distance_max_s=300,
            stream_len_s=160,
        )
        bench = gen_synthetic(1, params)
        for d in planted_distances(bench).values():
            assert d + params.evidence_len_s <= params.stream_len_s

    def test_category_map(self):
        bench = gen_synthetic(1, SyntheticParams(n_questions=10))
        assert bench.category_map == {"SYN-RT": "real_time", "SYN-MEM": "backward"}
        assert validate(bench).clean

    def test_native_round_trip(self, tmp_path):
        bench = gen_synthetic(13, SyntheticParams(n_questions=25))
        path = tmp_path / "syn.json"
        save_benchmark(bench, path)
        loaded = load_benchmark(path)
        assert loaded.questions == bench.questions
        assert loaded.grounding == bench.grounding
