"""Retrieval-conditioned intent inference toolkit.

The package models a conversational agent that decides, per query,
whether to answer directly or to retrieve a user's intent history before
committing to a label. It ships the history library and embedding
backends, the multi-turn inference loop, supervision-trajectory
generation, group-relative reward shaping with a clipped surrogate loss,
a synthetic-world policy simulator, and the evaluation stack.
"""

from .agent import (
    DEFAULT_MAX_TURNS,
    InferenceOutcome,
    StrategyMode,
    build_system_prompt,
    parse_output,
    run_inference,
    validate_trajectory,
)
from .embedding import EmbedderSpec, cosine, embed, embed_many, tokenize
from .errors import (
    ConfigError,
    DataFormatError,
    IntentKitError,
    RemoteBackendError,
    ScriptExhaustedError,
    UnknownLabelError,
)
from .experiments import (
    AccumulationPlan,
    AccumulationResult,
    GridRow,
    StrategyGrid,
    order_round_robin,
    run_accumulation,
    run_strategy_grid,
    tool_call_percent,
    write_accumulation_csv,
    write_grid_csv,
)
from .library import (
    DEFAULT_K,
    DiscriminabilityReport,
    HistoryEntry,
    IntentHistoryLibrary,
    RetrievalResult,
    ScoredEntry,
    build_library,
    discriminability_report,
    templated_explanation,
)
from .llm import (
    ChatRequest,
    RemoteLLM,
    ScriptedLLM,
    complete,
    load_script,
    render_answer,
    render_tool_call,
)
from .metrics import (
    EvalRow,
    F1Report,
    MetricReport,
    accuracy,
    confusion_matrix,
    evaluate,
    f1_report,
    gen_gap,
    gen_gap_vis,
    head_tail_report,
    pass_at_n,
    write_report_csv,
    write_report_json,
)
from .policy import (
    SyntheticWorld,
    TabularPolicy,
    TrainConfig,
    TrainResult,
    default_world,
    tied_accuracy_world,
    train,
    write_curve_csv,
)
from .rewards import (
    DEFAULT_GROUP_SIZE,
    Branch,
    GroupRollout,
    RewardBreakdown,
    RewardConfig,
    RolloutRecord,
    ablated_config,
    accuracy_reward,
    group_advantages,
    group_alpha,
    grpo_surrogate,
    score_group,
    tool_reward,
    total_reward,
)
from .taxonomies import HIGHLIGHT, MINTREC2, WEIBO, builtin_taxonomies, get_taxonomy
from .trajectory import (
    GenConfig,
    GenOutcome,
    export_sft_dataset,
    generate_dataset,
    generate_trajectory,
    leakage_audit,
    load_sft_dataset,
)
from .types import (
    NO_MATCH,
    Context,
    IntentExplanation,
    IntentRecord,
    Message,
    Taxonomy,
    Trajectory,
    canonical_form,
    canonicalize_label,
    dump_records,
    has_personalized_segments,
    is_no_match,
    labels_match,
    load_records,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # types
    "NO_MATCH", "Context", "IntentExplanation", "IntentRecord", "Message",
    "Taxonomy", "Trajectory", "canonical_form", "canonicalize_label",
    "dump_records", "has_personalized_segments", "is_no_match",
    "labels_match", "load_records",
    # taxonomies
    "MINTREC2", "WEIBO", "HIGHLIGHT", "builtin_taxonomies", "get_taxonomy",
    # errors
    "IntentKitError", "ConfigError", "DataFormatError", "RemoteBackendError",
    "ScriptExhaustedError", "UnknownLabelError",
    # embedding
    "EmbedderSpec", "cosine", "embed", "embed_many", "tokenize",
    # library
    "DEFAULT_K", "HistoryEntry", "IntentHistoryLibrary", "RetrievalResult",
    "ScoredEntry", "DiscriminabilityReport", "build_library",
    "discriminability_report", "templated_explanation",
    # llm
    "ChatRequest", "RemoteLLM", "ScriptedLLM", "complete", "load_script",
    "render_answer", "render_tool_call",
    # agent
    "DEFAULT_MAX_TURNS", "InferenceOutcome", "StrategyMode",
    "build_system_prompt", "parse_output", "run_inference",
    "validate_trajectory",
    # trajectory
    "GenConfig", "GenOutcome", "export_sft_dataset", "generate_dataset",
    "generate_trajectory", "leakage_audit", "load_sft_dataset",
    # rewards
    "DEFAULT_GROUP_SIZE", "Branch", "GroupRollout", "RewardBreakdown",
    "RewardConfig", "RolloutRecord", "ablated_config", "accuracy_reward",
    "group_advantages", "group_alpha", "grpo_surrogate", "score_group",
    "tool_reward", "total_reward",
    # policy
    "SyntheticWorld", "TabularPolicy", "TrainConfig", "TrainResult",
    "default_world", "tied_accuracy_world", "train", "write_curve_csv",
    # metrics
    "EvalRow", "F1Report", "MetricReport", "accuracy", "confusion_matrix",
    "evaluate", "f1_report", "gen_gap", "gen_gap_vis", "head_tail_report",
    "pass_at_n", "write_report_csv", "write_report_json",
    # experiments
    "AccumulationPlan", "AccumulationResult", "GridRow", "StrategyGrid",
    "order_round_robin", "run_accumulation", "run_strategy_grid",
    "tool_call_percent", "write_accumulation_csv", "write_grid_csv",
]
