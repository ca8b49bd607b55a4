"""Streaming-context engine and causal evaluation harness for video QA."""

from .accounting import DEFAULT_ACCOUNTING, AccountingModel
from .backends import (
    BackendRequest,
    BackendResponse,
    EchoBackend,
    EndpointConfig,
    GroundingEntry,
    HttpBackend,
    HttpEmbedder,
    MockBackend,
    ScriptedDelayBackend,
    build_request,
)
from .bench import (
    BenchmarkSet,
    QuestionRecord,
    SyntheticParams,
    gen_synthetic,
    load_benchmark,
    save_benchmark,
    validate,
)
from .context_policies import (
    ContextBundle,
    PolicyConfig,
    build_context,
    context_budget,
    fresh_index_builder,
    keep_all,
    recency_window,
    visual_rag,
)
from .embedders import HashEmbedder, PrecomputedEmbedder, SyntheticEmbedder
from .profiler import EfficiencySample, efficiency_report, measure_ttft, memory_curve
from .retrieval_index import (
    Chunk,
    ChunkIndex,
    chunk_frames,
    cosine_similarity,
    embed_chunks,
    load_index,
    save_index,
    top_k,
)
from .runner import RunConfig, run_eval, run_sweep
from .scoring import (
    CategoryReport,
    TrackScores,
    ablation_delta_table,
    category_averages,
    delta_m,
    delta_p,
    episodic_recall,
    track_accuracy,
)
from .stream_core import (
    FrameRef,
    StreamTimeline,
    load_manifest,
    resolve_frame,
    sample_timeline,
    save_manifest,
    visible_prefix,
)

__version__ = "0.1.0"
