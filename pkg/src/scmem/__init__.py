"""scmem: a self-controlled memory engine for instruction-following LLMs.

Per turn the engine decides whether to activate long-term memory, retrieves
and re-ranks memories by recency + relevance, substitutes summaries under a
token budget, fuses them with the current observation, generates the
response, and writes the summarized interaction back into the stream. The
same memory mechanism drives hierarchical summarization of ultra-long
documents.
"""

from .agent import Ablation, EngineConfig, Session, TurnTrace, summarize_turn
from .backends import (
    BackendCall,
    CompletionResult,
    GenerationBackend,
    HttpBackend,
    RetryPolicy,
    ScriptedBackend,
    complete_with_timeout,
)
from .controller import (
    ControllerConfig,
    ControllerDecision,
    RenderedMemory,
    fuse_input,
    reorganize_memories,
    should_activate_memory,
    should_use_summary,
)
from .embedding import (
    EmbeddingProvider,
    HashEmbedder,
    RemoteEmbedder,
    cosine,
    embed_interaction,
    hash_embed,
)
from .errors import (
    BackendError,
    BackendRateLimitError,
    BackendTimeoutError,
    BackendTransportError,
    ContractError,
    InputError,
    PersistenceError,
    PersistFormatError,
    PersistVersionError,
    SchemaError,
    ScmError,
)
from .evalharness import (
    EvalReport,
    ProbeCase,
    answer_match,
    retrieval_recall,
    run_eval,
)
from .memory import (
    MemoryItem,
    MemoryStream,
    RankedMemory,
    RetrievalConfig,
    recency_score,
    relevance_score,
)
from .prompts import PromptPack
from .suite import build_synthetic_suite
from .summarize import (
    SummarizeConfig,
    SummaryNode,
    chunk_document,
    hierarchical_summarize,
)
from .tokens import HeuristicTokenizer, Tokenizer, truncate_to_tokens

__version__ = "0.1.0"

__all__ = [
    "Ablation",
    "BackendCall",
    "BackendError",
    "BackendRateLimitError",
    "BackendTimeoutError",
    "BackendTransportError",
    "CompletionResult",
    "ContractError",
    "ControllerConfig",
    "ControllerDecision",
    "EmbeddingProvider",
    "EngineConfig",
    "EvalReport",
    "GenerationBackend",
    "HashEmbedder",
    "HeuristicTokenizer",
    "HttpBackend",
    "InputError",
    "MemoryItem",
    "MemoryStream",
    "PersistenceError",
    "PersistFormatError",
    "PersistVersionError",
    "ProbeCase",
    "PromptPack",
    "RankedMemory",
    "RemoteEmbedder",
    "RenderedMemory",
    "RetrievalConfig",
    "RetryPolicy",
    "SchemaError",
    "ScmError",
    "ScriptedBackend",
    "Session",
    "SummarizeConfig",
    "SummaryNode",
    "Tokenizer",
    "TurnTrace",
    "answer_match",
    "build_synthetic_suite",
    "chunk_document",
    "complete_with_timeout",
    "cosine",
    "embed_interaction",
    "fuse_input",
    "hash_embed",
    "hierarchical_summarize",
    "recency_score",
    "relevance_score",
    "reorganize_memories",
    "retrieval_recall",
    "run_eval",
    "should_activate_memory",
    "should_use_summary",
    "summarize_turn",
    "truncate_to_tokens",
]
