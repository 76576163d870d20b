"""One-shot baseline: the whole impact map from a single completion.

The unified prompt reuses the fleet's template fragments so comparisons
are about decomposition, not wording; it always carries the step-by-step
reasoning scaffold (the scaffold-free variant is deliberately
unsupported). Structural shortfalls are kept as degraded output with
warnings rather than discarded, so downstream metrics see the baseline
as-is.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .core import (
    Actor,
    ActorNode,
    Deliverable,
    DeliverableNode,
    Goal,
    Impact,
    ImpactMapTree,
    ImpactNode,
    IMResult,
    ProjectContext,
    Provenance,
    StoryNode,
    user_story_from_obj,
    validate_user_story,
)
from .errors import InvariantError, SchemaError
from .fleet import FleetOptions, PromptBundle, RefInfo, format_doctor, render_ref_info, tree_to_results
from .gateway import BackendConfig, Gateway
from .prompts import load_asset, load_sections, render

METHOD_TAG = "super_agent"


@dataclass(frozen=True)
class SuperAgentOptions:
    n: int = 2
    cot_enabled: bool = True
    fd_max_attempts: int = 2
    template_dir: Path | None = None

    def __post_init__(self):
        if self.n < 1:
            raise InvariantError("SuperAgentOptions.n must be >= 1")
        if not self.cot_enabled:
            raise InvariantError(
                "the one-shot baseline always reasons step by step; cot_enabled cannot be False"
            )
        if self.fd_max_attempts < 1:
            raise InvariantError("SuperAgentOptions.fd_max_attempts must be >= 1")


@dataclass(frozen=True)
class SuperAgentResult:
    tree: ImpactMapTree
    results: tuple[IMResult, ...]
    warnings: tuple[str, ...]
    raw_text: str


def build_super_prompt(context: ProjectContext, goal: Goal, opts: SuperAgentOptions) -> PromptBundle:
    sections = load_sections(
        "super_agent", opts.template_dir, required=("role", "task", "guidelines", "output_format")
    )
    cot = render(load_asset("cot", opts.template_dir), {"n": str(opts.n)}, "cot")
    return PromptBundle(
        role_text=sections["role"],
        ref_info_text=render_ref_info(RefInfo(context=context, goal=goal)),
        task_text=render(sections["task"], {"n": str(opts.n)}, "super_agent[task]"),
        guidelines_text=sections["guidelines"],
        output_format_example=sections["output_format"],
        cot_steps_text=cot,
    )


def _parse_story(obj, warnings: list[str], where: str):
    if not isinstance(obj, dict):
        warnings.append(f"{where}: user story is not an object, skipped")
        return None
    try:
        story = user_story_from_obj(obj)
    except SchemaError as err:
        warnings.append(f"{where}: {err}, skipped")
        return None
    violations = validate_user_story(story)
    if violations:
        warnings.append(f"{where}: story violates {violations}, skipped")
        return None
    return story


def _parse_super_tree(goal: Goal, text: str, opts: SuperAgentOptions,
                      repaired: bool) -> tuple[ImpactMapTree, list[str]]:
    obj = json.loads(text)
    warnings: list[str] = []
    provenance = Provenance(role=METHOD_TAG, attempts=1, repaired=repaired)
    actor_nodes: list[ActorNode] = []
    rows = obj.get("actors") if isinstance(obj, dict) else None
    if not isinstance(rows, list):
        warnings.append('output has no "actors" array; nothing parsed')
        rows = []
    for a_idx, actor_obj in enumerate(rows):
        if not isinstance(actor_obj, dict) or not isinstance(actor_obj.get("actor"), str) \
                or not actor_obj["actor"].strip():
            warnings.append(f"actors[{a_idx}]: malformed actor, skipped")
            continue
        actor = Actor(actor_obj["actor"])
        impact_nodes: list[ImpactNode] = []
        for i_idx, impact_obj in enumerate(actor_obj.get("impacts") or []):
            where = f"actors[{a_idx}].impacts[{i_idx}]"
            if not isinstance(impact_obj, dict) or not isinstance(impact_obj.get("impact"), str) \
                    or not impact_obj["impact"].strip():
                warnings.append(f"{where}: malformed impact, skipped")
                continue
            impact = Impact(impact_obj["impact"], actor=actor)
            deliverable_nodes: list[DeliverableNode] = []
            for d_idx, deliverable_obj in enumerate(impact_obj.get("deliverables") or []):
                d_where = f"{where}.deliverables[{d_idx}]"
                if not isinstance(deliverable_obj, dict) \
                        or not isinstance(deliverable_obj.get("deliverable"), str) \
                        or not deliverable_obj["deliverable"].strip():
                    warnings.append(f"{d_where}: malformed deliverable, skipped")
                    continue
                deliverable = Deliverable(deliverable_obj["deliverable"], impact=impact)
                story = _parse_story(deliverable_obj.get("user_story"), warnings, d_where)
                stories = (StoryNode(story, provenance),) if story else ()
                deliverable_nodes.append(DeliverableNode(deliverable, provenance, stories))
            impact_nodes.append(ImpactNode(impact, provenance, tuple(deliverable_nodes)))
        actor_nodes.append(ActorNode(actor, provenance, tuple(impact_nodes)))
    return ImpactMapTree(goal, tuple(actor_nodes)), warnings


def run_super_agent(context: ProjectContext, goal: Goal, opts: SuperAgentOptions,
                    gateway: Gateway, cfg: BackendConfig,
                    fd_cfg: BackendConfig | None = None) -> SuperAgentResult:
    """Exactly one chat call per goal (plus any Format Doctor repairs)."""
    prompt = build_super_prompt(context, goal, opts).render()
    exchange = gateway.complete(cfg, None, prompt)
    fd_opts = FleetOptions(fd_max_attempts=opts.fd_max_attempts, template_dir=opts.template_dir)
    text = format_doctor(exchange.response_text, fd_opts, gateway, fd_cfg or cfg)
    tree, warnings = _parse_super_tree(goal, text, opts, repaired=text != exchange.response_text)
    results = tree_to_results(tree)
    expected = opts.n ** 3
    if len(results) < expected:
        warnings.append(f"degraded output: {len(results)} of {expected} user stories parsed")
    elif len(results) > expected:
        warnings.append(f"more user stories than expected: {len(results)} > {expected}")
    return SuperAgentResult(
        tree=tree, results=tuple(results), warnings=tuple(warnings), raw_text=text
    )
