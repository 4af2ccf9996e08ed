"""Desk-scale toolkit for a nursing-MCQ modeling pipeline.

Submodules:
    taxonomy    concept hierarchy loading and level counts
    datamodel   MCQ records, benchmarks/corpora, JSONL persistence
    llmclient   chat backends (HTTP + scripted mock), retries, timing
    generator   synthetic MCQs, benchmark building, mining, distillation
    decontam    ROUGE-L similarity and two-step decontamination
    evalharness answer extraction, accuracy reports, table rendering
    mas         routed multi-agent debate with runtime ledger
    merge       DARE merging of named parameter maps (.npk container)
    cli         the forge command-line driver
"""

from .datamodel import Benchmark, Corpus, McqItem, read_jsonl, subsample, write_jsonl
from .decontam import DecontamDecision, decontaminate, rouge_l
from .errors import ForgeError, IoError
from .evalharness import EvalConfig, EvalReport, evaluate, extract_answer, format_report
from .generator import (
    PromptTemplate,
    ReasoningSample,
    distill_reasoning,
    generate_benchmark,
    generate_mcqs,
    mine_nursing_subset,
)
from .llmclient import (
    ChatExchange,
    ChatRequest,
    HttpBackend,
    MockBackend,
    MockFailure,
    RateLimiter,
    complete,
    script_mock,
)
from .mas import DebateTranscript, ExpertSpec, MasConfig, RuntimeLedger, solve
from .merge import MergeSpec, ParameterMap, dare_merge, load_npk, save_npk
from .taxonomy import ConceptPath, LevelCounts, Taxonomy, load_taxonomy, summarize

__version__ = "0.1.0"

__all__ = [
    "Benchmark", "ChatExchange", "ChatRequest", "ConceptPath", "Corpus",
    "DebateTranscript", "DecontamDecision", "EvalConfig", "EvalReport",
    "ExpertSpec", "ForgeError", "HttpBackend", "IoError", "LevelCounts",
    "MasConfig", "McqItem", "MergeSpec", "MockBackend", "MockFailure",
    "ParameterMap", "PromptTemplate", "RateLimiter", "ReasoningSample",
    "RuntimeLedger", "Taxonomy", "complete", "dare_merge", "decontaminate",
    "distill_reasoning", "evaluate", "extract_answer", "format_report",
    "generate_benchmark", "generate_mcqs", "load_npk", "load_taxonomy",
    "mine_nursing_subset", "read_jsonl", "rouge_l", "save_npk", "script_mock",
    "solve", "subsample", "summarize", "write_jsonl",
]
