"""Configurable multi-agent knowledge-work dataset generator."""

from .config import (
    AgentProfile,
    GenerationSettings,
    Organization,
    SimulationConfig,
    SimulationSettings,
    TaskTemplate,
    parse_config,
    resolve_sampled_parameters,
)
from .corpus import DocumentArtifact, RunManifest, write_dataset
from .evalstats import (
    RatingRecord,
    ScoreDistribution,
    distribution,
    fraction_in_range,
    kl_divergence,
    load_ratings,
)
from .kg import TripleGraph, build_graph, serialize_ntriples
from .promptgen import Prompt, compose_prompt, summarize_document
from .scheduler import SimulationLog, derive_followups, instantiate_tasks, run_simulation
from .textgen import GenerationRequest, GenerationResult, HttpBackend, MockBackend, strip_html

__version__ = "0.1.0"

__all__ = [
    "AgentProfile",
    "DocumentArtifact",
    "GenerationRequest",
    "GenerationResult",
    "GenerationSettings",
    "HttpBackend",
    "MockBackend",
    "Organization",
    "Prompt",
    "RatingRecord",
    "RunManifest",
    "ScoreDistribution",
    "SimulationConfig",
    "SimulationLog",
    "SimulationSettings",
    "TaskTemplate",
    "TripleGraph",
    "build_graph",
    "compose_prompt",
    "derive_followups",
    "distribution",
    "fraction_in_range",
    "instantiate_tasks",
    "kl_divergence",
    "load_ratings",
    "parse_config",
    "resolve_sampled_parameters",
    "run_simulation",
    "serialize_ntriples",
    "strip_html",
    "summarize_document",
    "write_dataset",
]
