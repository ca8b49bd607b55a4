"""Pydantic models for the wire protocol (JSON over HTTP, UTF-8).

These models are the schema of record for POST /v1/answer, POST /v1/embed,
and GET /v1/health; the reference model server implements the same shapes.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


class FrameItem(BaseModel):
    t: float
    mode: Literal["b64", "ref"]
    data: str


class RetrievedItem(BaseModel):
    span: tuple[float, float]
    frames: list[FrameItem]


class GenParams(BaseModel):
    max_new_tokens: int = 64


class AnswerRequest(BaseModel):
    query_id: str
    question: str
    options: list[str] = Field(default_factory=list)
    frames: list[FrameItem] = Field(default_factory=list)
    retrieved: list[RetrievedItem] = Field(default_factory=list)
    gen: GenParams = Field(default_factory=GenParams)


class AnswerResponse(BaseModel):
    query_id: str
    answer_text: str
    chosen_option: int | None = None
    ttft_ms: float | None = None
    token_count: int | None = None


class EmbedItem(BaseModel):
    mode: Literal["b64", "ref", "text"]
    data: str


class EmbedRequest(BaseModel):
    items: list[EmbedItem]


class EmbedResponse(BaseModel):
    dim: int
    normalized: bool = True
    embeddings: list[list[float]]


class HealthResponse(BaseModel):
    status: str
    model: str
    embedder: str
    prompt_version: str
