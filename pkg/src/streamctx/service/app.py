"""Deterministic wire-protocol service: answer, embed, and health endpoints.

This is the harness-side implementation of the protocol: echo and scripted
answer modes plus a hashed test embedder, so wire clients and end-to-end
runs need no model weights. Real inference lives behind the same protocol
in the reference model server.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException

from ..embedders import hash_unit_vector
from ..errors import InvalidConfigError
from .schemas import (
    AnswerRequest,
    AnswerResponse,
    EmbedRequest,
    EmbedResponse,
    HealthResponse,
)

PROMPT_VERSION = "v1"

_OPTION_LETTER = re.compile(r"^\s*\(?([A-H])\)?[.):\s]")


@dataclass
class ServiceConfig:
    """Answer/embed behavior of the deterministic service."""

    mode: str = "echo"  # "echo" or "scripted"
    scripted_answers: dict[str, str] = field(default_factory=dict)
    answer_delay_ms: float = 0.0
    per_frame_delay_ms: float = 0.0
    report_ttft: bool = True
    embed_dim: int = 64
    embed_seed: int = 0
    max_frames: int = 256

    def __post_init__(self) -> None:
        if self.mode not in ("echo", "scripted"):
            raise InvalidConfigError(f"unknown service mode {self.mode!r}")
        if self.answer_delay_ms < 0 or self.per_frame_delay_ms < 0:
            raise InvalidConfigError("delays must be non-negative")
        if self.embed_dim < 1:
            raise InvalidConfigError("embed_dim must be >= 1")
        if self.max_frames < 1:
            raise InvalidConfigError("max_frames must be >= 1")


def choose_option(answer_text: str, n_options: int) -> int | None:
    """Parse a leading option letter; fall back to option 0 when options exist."""
    if n_options <= 0:
        return None
    match = _OPTION_LETTER.match(answer_text)
    if match:
        idx = ord(match.group(1)) - ord("A")
        if idx < n_options:
            return idx
    return 0


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    cfg = config or ServiceConfig()
    app = FastAPI(title="streamctx wire service", version=PROMPT_VERSION)

    @app.post("/v1/answer", response_model=AnswerResponse)
    def answer(request: AnswerRequest) -> AnswerResponse:
        total_frames = len(request.frames) + sum(len(r.frames) for r in request.retrieved)
        if total_frames > cfg.max_frames:
            raise HTTPException(
                status_code=413,
                detail=f"request carries {total_frames} frames, limit is {cfg.max_frames}",
            )
        delay_ms = cfg.answer_delay_ms + cfg.per_frame_delay_ms * total_frames
        if delay_ms > 0:
            time.sleep(delay_ms / 1000.0)
        if cfg.mode == "scripted" and request.query_id in cfg.scripted_answers:
            text = cfg.scripted_answers[request.query_id]
        else:
            text = request.question
        return AnswerResponse(
            query_id=request.query_id,
            answer_text=text,
            chosen_option=choose_option(text, len(request.options)),
            ttft_ms=delay_ms if cfg.report_ttft else None,
            token_count=len(text.split()),
        )

    @app.post("/v1/embed", response_model=EmbedResponse)
    def embed(request: EmbedRequest) -> EmbedResponse:
        vectors = [
            hash_unit_vector(f"{item.mode}:{item.data}", cfg.embed_dim, cfg.embed_seed).tolist()
            for item in request.items
        ]
        return EmbedResponse(dim=cfg.embed_dim, normalized=True, embeddings=vectors)

    @app.get("/v1/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(
            status="ok",
            model=f"deterministic-{cfg.mode}",
            embedder=f"hash-d{cfg.embed_dim}-s{cfg.embed_seed}",
            prompt_version=PROMPT_VERSION,
        )

    return app
