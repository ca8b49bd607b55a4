"""Answer backends: a deterministic mock oracle and a wire-protocol client.

Every backend satisfies the same contract: exactly one response per request,
with the query id echoed back. The mock is pure and seeded so whole runs are
byte-reproducible; the HTTP client speaks the JSON wire protocol
(POST /v1/answer, POST /v1/embed) and re-checks causality at the trust
boundary before anything leaves the process.
"""

from __future__ import annotations

import base64
import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import httpx
import numpy as np

from .context_policies import ContextBundle
from .errors import (
    BackendError,
    GroundingMissingError,
    InvalidConfigError,
    InvalidInputError,
)
from .stream_core import resolve_frame

#: Default distraction coefficient of the mock's attention-dilution model.
DEFAULT_BETA = 0.005

_CAUSALITY_TOL = 1e-9


@dataclass(frozen=True)
class GenerationParams:
    max_new_tokens: int = 64


@dataclass(frozen=True)
class FramePayload:
    """One serialized frame: timestamp plus either inline bytes or a locator."""

    t: float
    mode: str  # "b64" | "ref"
    data: str


@dataclass(frozen=True)
class RetrievedPayload:
    """A retrieved chunk on the wire: its timestamp span and member frames."""

    span: tuple[float, float]
    frames: tuple[FramePayload, ...]


@dataclass(frozen=True)
class BackendRequest:
    """Everything a backend needs to answer one query.

    ``query_time_s`` never goes on the wire; it exists so clients can
    re-check causality before transmitting.
    """

    query_id: str
    question: str
    options: tuple[str, ...]
    frames: tuple[FramePayload, ...]
    retrieved: tuple[RetrievedPayload, ...]
    gen: GenerationParams = GenerationParams()
    query_time_s: float = float("inf")

    @property
    def total_frames(self) -> int:
        return len(self.frames) + sum(len(r.frames) for r in self.retrieved)


@dataclass(frozen=True)
class BackendResponse:
    query_id: str
    answer_text: str
    chosen_option: int | None = None
    ttft_ms: float | None = None
    token_count: int | None = None
    #: "server_reported" or "client_first_byte"; None for in-process backends.
    ttft_definition: str | None = field(default=None, compare=False)


@dataclass(frozen=True)
class GroundingEntry:
    """Synthetic evidence for one question: where the answer is visible, and
    how strongly retrieved history distracts the mock."""

    evidence: tuple[tuple[float, float], ...]
    beta: float = DEFAULT_BETA

    def __post_init__(self) -> None:
        for a, b in self.evidence:
            if a > b:
                raise InvalidInputError(f"evidence interval [{a}, {b}] is not well-ordered")
        if not np.isfinite(self.beta) or self.beta < 0:
            raise InvalidInputError(f"beta must be finite and non-negative, got {self.beta}")


GroundingMap = dict[str, GroundingEntry]


class AnswerBackend(Protocol):
    backend_id: str

    def answer(self, request: BackendRequest) -> BackendResponse: ...


def build_request(
    bundle: ContextBundle,
    *,
    query_id: str,
    question: str,
    options: Sequence[str] = (),
    frame_mode: str = "ref",
    gen: GenerationParams = GenerationParams(),
) -> BackendRequest:
    """Serialize a context bundle for dispatch.

    Retrieved chunks are carried chronologically, each annotated with its
    timestamp span; servers render them before the recent window.
    """
    if frame_mode not in ("ref", "b64"):
        raise InvalidConfigError(f"unknown frame mode {frame_mode!r}")

    def payload(frame) -> FramePayload:
        if frame_mode == "ref":
            return FramePayload(t=frame.timestamp_s, mode="ref", data=frame.source)
        raw = resolve_frame(frame, mode="bytes")
        return FramePayload(
            t=frame.timestamp_s, mode="b64", data=base64.b64encode(raw).decode("ascii")
        )

    retrieved = tuple(
        RetrievedPayload(span=chunk.span_s, frames=tuple(payload(f) for f in chunk.frames))
        for chunk in bundle.retrieved_chunks
    )
    return BackendRequest(
        query_id=query_id,
        question=question,
        options=tuple(options),
        frames=tuple(payload(f) for f in bundle.recent_frames),
        retrieved=retrieved,
        gen=gen,
        query_time_s=bundle.query_time_s,
    )


def request_to_wire(request: BackendRequest) -> dict:
    """JSON body for POST /v1/answer."""
    return {
        "query_id": request.query_id,
        "question": request.question,
        "options": list(request.options),
        "frames": [{"t": p.t, "mode": p.mode, "data": p.data} for p in request.frames],
        "retrieved": [
            {
                "span": [r.span[0], r.span[1]],
                "frames": [{"t": p.t, "mode": p.mode, "data": p.data} for p in r.frames],
            }
            for r in request.retrieved
        ],
        "gen": {"max_new_tokens": request.gen.max_new_tokens},
    }


def response_from_wire(body: object, *, n_options: int | None = None) -> BackendResponse:
    """Validate a /v1/answer reply against the wire schema."""
    if not isinstance(body, dict):
        raise BackendError(f"answer reply must be a JSON object, got {type(body).__name__}")
    try:
        query_id = body["query_id"]
        answer_text = body["answer_text"]
    except KeyError as exc:
        raise BackendError(f"answer reply missing required field {exc}") from exc
    if not isinstance(query_id, str) or not isinstance(answer_text, str):
        raise BackendError("answer reply has non-string query_id or answer_text")
    chosen = body.get("chosen_option")
    if chosen is not None:
        if not isinstance(chosen, int) or isinstance(chosen, bool):
            raise BackendError(f"chosen_option must be an integer or null, got {chosen!r}")
        if n_options is not None and not (0 <= chosen < n_options):
            raise BackendError(f"chosen_option {chosen} outside option range 0..{n_options - 1}")
    ttft = body.get("ttft_ms")
    if ttft is not None and not isinstance(ttft, (int, float)):
        raise BackendError(f"ttft_ms must be a number or null, got {ttft!r}")
    tokens = body.get("token_count")
    if tokens is not None and (not isinstance(tokens, int) or isinstance(tokens, bool)):
        raise BackendError(f"token_count must be an integer or null, got {tokens!r}")
    return BackendResponse(
        query_id=query_id,
        answer_text=answer_text,
        chosen_option=chosen,
        ttft_ms=float(ttft) if ttft is not None else None,
        token_count=tokens,
    )


def unit_draw(seed: int, query_id: str) -> float:
    """Deterministic pseudo-random draw in [0, 1) keyed by (seed, query_id)."""
    digest = hashlib.sha256(f"{seed}|{query_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


class MockBackend:
    """Deterministic oracle driven by planted evidence intervals.

    Base correctness: some context frame falls inside an evidence interval.
    That verdict is then flipped to wrong with probability
    p_err = min(1, beta * n_hist), where n_hist counts context frames outside
    the recent window (the retrieved history), using a seeded draw keyed by
    (seed, query_id). Wrong answers are always gold+1 mod |options| so runs
    are byte-reproducible.
    """

    def __init__(
        self,
        grounding: Mapping[str, GroundingEntry],
        gold_options: Mapping[str, int],
        seed: int = 0,
        backend_id: str = "mock",
    ):
        self._grounding = grounding
        self._gold = gold_options
        self._seed = seed
        self.backend_id = backend_id

    def answer(self, request: BackendRequest) -> BackendResponse:
        entry = self._grounding.get(request.query_id)
        if entry is None or request.query_id not in self._gold:
            raise GroundingMissingError(f"no grounding for question {request.query_id!r}")
        times = [p.t for p in request.frames]
        times.extend(p.t for r in request.retrieved for p in r.frames)
        hit = any(a <= t <= b for t in times for a, b in entry.evidence)
        n_hist = sum(len(r.frames) for r in request.retrieved)
        p_err = min(1.0, entry.beta * n_hist)
        flipped = p_err > 0 and unit_draw(self._seed, request.query_id) < p_err
        correct = hit and not flipped
        gold = self._gold[request.query_id]
        if request.options:
            chosen = gold if correct else (gold + 1) % len(request.options)
            text = request.options[chosen]
        else:
            chosen = None
            text = "evidence observed" if correct else "evidence not observed"
        return BackendResponse(
            query_id=request.query_id,
            answer_text=text,
            chosen_option=chosen,
            ttft_ms=None,
            token_count=len(text.split()),
        )


class EchoBackend:
    """Returns the question verbatim; handy for wiring tests."""

    def __init__(self, backend_id: str = "echo"):
        self.backend_id = backend_id

    def answer(self, request: BackendRequest) -> BackendResponse:
        chosen = 0 if request.options else None
        return BackendResponse(
            query_id=request.query_id,
            answer_text=request.question,
            chosen_option=chosen,
            token_count=len(request.question.split()),
        )


class ScriptedDelayBackend:
    """Wraps a backend, sleeping a scripted amount before answering.

    Delay = fixed_delay_ms + per_frame_delay_ms * total frames in the
    request. Used as the latency oracle for TTFT measurements.
    """

    def __init__(self, inner: AnswerBackend, fixed_delay_ms: float = 0.0, per_frame_delay_ms: float = 0.0):
        if fixed_delay_ms < 0 or per_frame_delay_ms < 0:
            raise InvalidConfigError("delays must be non-negative")
        self._inner = inner
        self.fixed_delay_ms = fixed_delay_ms
        self.per_frame_delay_ms = per_frame_delay_ms
        self.backend_id = f"delayed-{inner.backend_id}"

    def delay_ms(self, request: BackendRequest) -> float:
        return self.fixed_delay_ms + self.per_frame_delay_ms * request.total_frames

    def answer(self, request: BackendRequest) -> BackendResponse:
        time.sleep(self.delay_ms(request) / 1000.0)
        return self._inner.answer(request)


def check_wire_causality(request: BackendRequest) -> None:
    """Trust-boundary guard: nothing later than the query time may be transmitted."""
    limit = request.query_time_s + _CAUSALITY_TOL
    for p in request.frames:
        if p.t > limit:
            raise InvalidInputError(
                f"refusing to transmit frame at t={p.t} for query at t={request.query_time_s}"
            )
    for r in request.retrieved:
        for p in r.frames:
            if p.t > limit:
                raise InvalidInputError(
                    f"refusing to transmit retrieved frame at t={p.t} for query at t={request.query_time_s}"
                )


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    timeout_s: float = 30.0
    retries: int = 2
    max_inflight: int = 4

    def __post_init__(self) -> None:
        if self.timeout_s <= 0:
            raise InvalidConfigError("timeout must be positive")
        if self.retries < 0:
            raise InvalidConfigError("retries must be non-negative")
        if self.max_inflight < 1:
            raise InvalidConfigError("max_inflight must be >= 1")


class HttpBackend:
    """Wire-protocol client for POST /v1/answer.

    Retries transport failures and 5xx replies up to the configured count;
    schema violations fail immediately. TTFT comes from the server's
    ttft_ms field when present, otherwise it is measured client-side as
    time to the first response byte. In-flight requests are bounded and no
    cross-request state is kept.
    """

    def __init__(self, config: EndpointConfig, client: httpx.Client | None = None):
        self.config = config
        self.backend_id = f"http:{config.base_url}"
        self._client = client or httpx.Client(base_url=config.base_url, timeout=config.timeout_s)
        self._gate = threading.BoundedSemaphore(config.max_inflight)

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "HttpBackend":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def answer(self, request: BackendRequest) -> BackendResponse:
        check_wire_causality(request)
        body = request_to_wire(request)
        attempts = 0
        last_status: int | None = None
        last_error = "unknown"
        while attempts <= self.config.retries:
            attempts += 1
            try:
                with self._gate:
                    started = time.perf_counter()
                    with self._client.stream("POST", "/v1/answer", json=body) as resp:
                        first_byte_at: float | None = None
                        parts: list[bytes] = []
                        for chunk in resp.iter_bytes():
                            if first_byte_at is None and chunk:
                                first_byte_at = time.perf_counter()
                            parts.append(chunk)
                        status = resp.status_code
            except httpx.HTTPError as exc:
                last_error = f"transport error: {exc}"
                continue
            last_status = status
            if status >= 500:
                last_error = f"server error {status}"
                continue
            if status != 200:
                raise BackendError(
                    f"answer endpoint returned status {status}",
                    attempts=attempts,
                    last_status=status,
                )
            try:
                payload = json.loads(b"".join(parts).decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise BackendError(
                    f"answer reply is not valid JSON: {exc}", attempts=attempts, last_status=status
                ) from exc
            response = response_from_wire(payload, n_options=len(request.options) or None)
            if response.query_id != request.query_id:
                raise BackendError(
                    f"server echoed query_id {response.query_id!r} for {request.query_id!r}",
                    attempts=attempts,
                    last_status=status,
                )
            if response.ttft_ms is not None:
                definition = "server_reported"
                ttft = response.ttft_ms
            else:
                definition = "client_first_byte"
                ttft = ((first_byte_at or time.perf_counter()) - started) * 1000.0
            return BackendResponse(
                query_id=response.query_id,
                answer_text=response.answer_text,
                chosen_option=response.chosen_option,
                ttft_ms=ttft,
                token_count=response.token_count,
                ttft_definition=definition,
            )
        raise BackendError(
            f"answer request failed after {attempts} attempts: {last_error}",
            attempts=attempts,
            last_status=last_status,
        )


class HttpEmbedder:
    """Wire-protocol client for POST /v1/embed; returns unit-norm rows."""

    def __init__(self, config: EndpointConfig, frame_mode: str = "ref", client: httpx.Client | None = None):
        if frame_mode not in ("ref", "b64"):
            raise InvalidConfigError(f"unknown frame mode {frame_mode!r}")
        self.config = config
        self.frame_mode = frame_mode
        self.embedder_id = f"http:{config.base_url}"
        self._client = client or httpx.Client(base_url=config.base_url, timeout=config.timeout_s)
        self.dim: int | None = None

    def close(self) -> None:
        self._client.close()

    def embed_items(self, items: Sequence[dict]) -> np.ndarray:
        try:
            resp = self._client.post("/v1/embed", json={"items": list(items)})
        except httpx.HTTPError as exc:
            raise BackendError(f"embed transport error: {exc}") from exc
        if resp.status_code != 200:
            raise BackendError(
                f"embed endpoint returned status {resp.status_code}", last_status=resp.status_code
            )
        body = resp.json()
        try:
            dim = int(body["dim"])
            rows = np.asarray(body["embeddings"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(f"malformed embed reply: {exc}") from exc
        if rows.ndim != 2 or rows.shape != (len(items), dim):
            raise BackendError(f"embed reply shape {rows.shape} does not match {len(items)} items")
        norms = np.linalg.norm(rows, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-4):
            raise BackendError("embed reply contains non-unit vectors")
        if self.dim is None:
            self.dim = dim
        elif dim != self.dim:
            raise BackendError(f"embed dim changed from {self.dim} to {dim}")
        return rows

    def embed_frames(self, frames) -> np.ndarray:
        items = []
        for frame in frames:
            if self.frame_mode == "ref":
                items.append({"mode": "ref", "data": frame.source})
            else:
                raw = resolve_frame(frame, mode="bytes")
                items.append({"mode": "b64", "data": base64.b64encode(raw).decode("ascii")})
        return self.embed_items(items)

    def embed_text(self, text: str) -> np.ndarray:
        return self.embed_items([{"mode": "text", "data": text}])[0]
