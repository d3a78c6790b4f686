"""Evaluate global reasoning quality of attributed long-form answers.

The package turns a generated answer into a set of logical propositions,
searches backward from answer-bearing propositions to the question's
entities through shared-entity bridges, and scores the result on
completeness, conciseness, and determinateness, alongside citation
precision and recall.
"""

from .agreement import (
    AgreementRow,
    cohen_kappa,
    compute_annotation_agreement,
    cross_run_kappa,
    jaccard_index,
    pearson_r,
    run_stddev,
)
from .chain import (
    DEFAULT_WORK_BUDGET,
    PropositionGraph,
    build_backward_chain,
    build_graph,
    minimal_sufficient_set,
)
from .gateway import (
    Gateway,
    GatewayError,
    LlmRequest,
    LlmResponse,
    MockProvider,
    OpenAIProvider,
    ParseError,
    ScriptedProvider,
    extract_citations,
    parse_generation,
)
from .ingest import DatasetConfig, load_dataset, render_document_block
from .metrics import (
    AggregateRow,
    aggregate,
    answers_equivalent,
    attribution_scores,
    completeness,
    conciseness,
    determinateness,
    f1_score,
)
from .model import (
    AttributionScores,
    ChainResult,
    ChainStatus,
    Citation,
    Dataset,
    Document,
    EntityKey,
    EvalInstance,
    LogicScores,
    LongFormAnswer,
    Proposition,
    PropositionSet,
    ShortAnswer,
    Statement,
    Triple,
    decode_fraction,
    encode_fraction,
    fraction_to_display,
    validate_instance,
)
from .pipeline import ModelRoles, RunConfig, Runner, StageFailure
from .prompts import TemplateId, render_prompt
from .transform import (
    extract_question_entities,
    extract_triples,
    keys_match,
    normalize_entity,
    transform,
)

__version__ = "0.1.0"

__all__ = [
    "AgreementRow",
    "AggregateRow",
    "AttributionScores",
    "ChainResult",
    "ChainStatus",
    "Citation",
    "Dataset",
    "DatasetConfig",
    "DEFAULT_WORK_BUDGET",
    "Document",
    "EntityKey",
    "EvalInstance",
    "Gateway",
    "GatewayError",
    "LlmRequest",
    "LlmResponse",
    "LogicScores",
    "LongFormAnswer",
    "MockProvider",
    "ModelRoles",
    "OpenAIProvider",
    "ParseError",
    "Proposition",
    "PropositionGraph",
    "PropositionSet",
    "RunConfig",
    "Runner",
    "ScriptedProvider",
    "ShortAnswer",
    "StageFailure",
    "Statement",
    "TemplateId",
    "Triple",
    "aggregate",
    "answers_equivalent",
    "attribution_scores",
    "build_backward_chain",
    "build_graph",
    "cohen_kappa",
    "completeness",
    "compute_annotation_agreement",
    "conciseness",
    "cross_run_kappa",
    "decode_fraction",
    "determinateness",
    "encode_fraction",
    "extract_citations",
    "extract_question_entities",
    "extract_triples",
    "f1_score",
    "fraction_to_display",
    "jaccard_index",
    "keys_match",
    "load_dataset",
    "minimal_sufficient_set",
    "normalize_entity",
    "parse_generation",
    "pearson_r",
    "render_document_block",
    "render_prompt",
    "run_stddev",
    "transform",
    "validate_instance",
]
