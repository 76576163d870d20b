"""Goal-driven user story generation with a role-decomposed agent fleet,
plus the matching evaluation toolkit (hit rates, judge verdicts,
human-alignment statistics) and dataset construction pipeline."""

from .baseline import SuperAgentOptions, SuperAgentResult, run_super_agent
from .core import (
    Actor,
    Deliverable,
    Goal,
    Impact,
    ImpactMapTree,
    IMResult,
    ProjectContext,
    Provenance,
    StorySeekRecord,
    UserStory,
    deserialize_im_result,
    normalize_text,
    serialize_im_result,
    tree_counts,
    validate_tree,
    validate_user_story,
)
from .evalkit import (
    CachedEmbedder,
    ConfusionTable,
    FhrReport,
    HitReport,
    QuaceVerdict,
    Thresholds,
    alignment_metrics,
    compute_fhr,
    cosine_similarity,
    element_hit,
    goal_hit,
    macro_mean,
    quace_evaluate,
    quace_rate,
)
from .fleet import (
    AgentRole,
    FleetOptions,
    PromptBundle,
    RefInfo,
    build_prompt,
    expand_goal,
    format_doctor,
    run_agent,
    tree_to_results,
)
from .gateway import (
    BackendConfig,
    ChatExchange,
    HttpGateway,
    ScriptedFixture,
    ScriptedGateway,
    scripted_config,
)
from .storyseek import (
    DatasetManifest,
    RawIssueRecord,
    dataset_quality_check,
    extract_im,
    filter_raw,
    load_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "Actor", "AgentRole", "BackendConfig", "CachedEmbedder", "ChatExchange",
    "ConfusionTable", "DatasetManifest", "Deliverable", "FhrReport",
    "FleetOptions", "Goal", "HitReport", "HttpGateway", "IMResult",
    "Impact", "ImpactMapTree", "ProjectContext", "PromptBundle", "Provenance",
    "QuaceVerdict", "RawIssueRecord", "RefInfo", "ScriptedFixture",
    "ScriptedGateway", "StorySeekRecord", "SuperAgentOptions",
    "SuperAgentResult", "Thresholds", "UserStory", "alignment_metrics",
    "build_prompt", "compute_fhr", "cosine_similarity", "dataset_quality_check",
    "deserialize_im_result", "element_hit", "expand_goal", "extract_im",
    "filter_raw", "format_doctor", "goal_hit", "load_dataset", "macro_mean",
    "normalize_text", "quace_evaluate", "quace_rate", "run_agent",
    "run_super_agent", "scripted_config", "serialize_im_result", "tree_counts",
    "tree_to_results", "validate_tree", "validate_user_story",
]
