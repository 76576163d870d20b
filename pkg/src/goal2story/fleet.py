"""The agent fleet: four generation agents plus the Format Doctor.

One expansion walks the impact map depth-first, selecting exactly one
element at a time: the Alpha Captain proposes actors, the Intelligence
Officer impacts for one actor, the Delivery Coordinator deliverables for
one impact, and the Tactical Officer one user story per deliverable. For a
fully successful run with branching factor n that costs 1 + n + n^2 + n^3
chat calls, Format Doctor repairs excluded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping

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
    normalize_text,
    user_story_from_obj,
    user_story_to_obj,
    validate_user_story,
)
from .errors import (
    AgentOutputError,
    ExpandError,
    FleetError,
    FormatDoctorError,
    GatewayError,
    InvariantError,
    SchemaError,
    StageMismatchError,
)
from .gateway import BackendConfig, Gateway
from .prompts import load_asset, load_sections, render


class AgentRole(str, Enum):
    ALPHA_CAPTAIN = "alpha_captain"
    INTELLIGENCE_OFFICER = "intelligence_officer"
    DELIVERY_COORDINATOR = "delivery_coordinator"
    TACTICAL_OFFICER = "tactical_officer"
    FORMAT_DOCTOR = "format_doctor"


GENERATION_ROLES = (
    AgentRole.ALPHA_CAPTAIN,
    AgentRole.INTELLIGENCE_OFFICER,
    AgentRole.DELIVERY_COORDINATOR,
    AgentRole.TACTICAL_OFFICER,
)

# Path elements each stage requires, exactly: extra elements are as much a
# stage mismatch as missing ones.
_STAGE_PATH: dict[AgentRole, tuple[str, ...]] = {
    AgentRole.ALPHA_CAPTAIN: (),
    AgentRole.INTELLIGENCE_OFFICER: ("actor",),
    AgentRole.DELIVERY_COORDINATOR: ("actor", "impact"),
    AgentRole.TACTICAL_OFFICER: ("actor", "impact", "deliverable"),
}

_STAGE_KEY = {
    AgentRole.ALPHA_CAPTAIN: "actors",
    AgentRole.INTELLIGENCE_OFFICER: "impacts",
    AgentRole.DELIVERY_COORDINATOR: "deliverables",
}


@dataclass(frozen=True)
class RefInfo:
    """Immutable context + the single selected element per ancestor stage."""

    context: ProjectContext
    goal: Goal
    actor: Actor | None = None
    impact: Impact | None = None
    deliverable: Deliverable | None = None

    def __post_init__(self):
        if self.impact is not None and self.actor is None:
            raise InvariantError("RefInfo with an impact requires an actor")
        if self.deliverable is not None and self.impact is None:
            raise InvariantError("RefInfo with a deliverable requires an impact")

    def present(self) -> tuple[str, ...]:
        return tuple(
            name for name in ("actor", "impact", "deliverable") if getattr(self, name) is not None
        )


@dataclass(frozen=True)
class FleetOptions:
    n: int = 2
    cot_enabled: bool = False
    profile_enabled: bool = False
    fd_max_attempts: int = 2
    template_dir: Path | None = None

    def __post_init__(self):
        if self.n < 1:
            raise InvariantError("FleetOptions.n must be >= 1")
        if self.fd_max_attempts < 1:
            raise InvariantError("FleetOptions.fd_max_attempts must be >= 1")


@dataclass(frozen=True)
class PromptBundle:
    """The assembled prompt parts, joined by :meth:`render`."""

    role_text: str
    ref_info_text: str
    task_text: str
    guidelines_text: str
    output_format_example: str
    cot_steps_text: str | None = None

    def render(self) -> str:
        parts = [
            f"Role: {self.role_text}",
            f"Ref Info:\n{self.ref_info_text}",
            f"Task: {self.task_text}",
            f"Guidelines:\n{self.guidelines_text}",
        ]
        if self.cot_steps_text is not None:
            parts.append(self.cot_steps_text)
        parts.append(f"Output Format: {self.output_format_example}")
        return "\n\n".join(parts)


def render_ref_info(ref: RefInfo) -> str:
    lines = [
        f"Background: {ref.context.background}",
        f"Problems: {ref.context.problems}",
        f"Goal: {ref.goal.text}",
    ]
    if ref.actor is not None:
        lines.append(f"Actor: {ref.actor.text}")
    if ref.impact is not None:
        lines.append(f"Impact: {ref.impact.text}")
    if ref.deliverable is not None:
        lines.append(f"Deliverable: {ref.deliverable.text}")
    return "\n".join(lines)


def build_prompt(role: AgentRole, ref: RefInfo, opts: FleetOptions) -> PromptBundle:
    """Deterministic assembly of one agent prompt from template assets."""
    if role not in GENERATION_ROLES:
        raise StageMismatchError(f"{role.value} is not a generation agent")
    required = _STAGE_PATH[role]
    if ref.present() != required:
        raise StageMismatchError(
            f"{role.value} requires path {list(required)}, got {list(ref.present())}"
        )
    sections = load_sections(
        role.value, opts.template_dir, required=("role", "task", "guidelines", "output_format")
    )
    n = 1 if role is AgentRole.TACTICAL_OFFICER else opts.n
    role_text = sections["role"]
    if opts.profile_enabled:
        role_text = load_asset(f"profile_{role.value}", opts.template_dir)
    cot = None
    if opts.cot_enabled:
        cot = render(load_asset("cot", opts.template_dir), {"n": str(n)}, "cot")
    return PromptBundle(
        role_text=role_text,
        ref_info_text=render_ref_info(ref),
        task_text=render(sections["task"], {"n": str(n)}, f"{role.value}[task]"),
        guidelines_text=sections["guidelines"],
        output_format_example=sections["output_format"],
        cot_steps_text=cot,
    )


def _parses_as_json(text: str) -> bool:
    try:
        json.loads(text)
    except (json.JSONDecodeError, TypeError):
        return False
    return True


def format_doctor(raw: str, opts: FleetOptions, gateway: Gateway, cfg: BackendConfig) -> str:
    """Return ``raw`` untouched if it already parses as JSON (zero gateway
    calls); otherwise ask the backend to repair it, up to
    ``opts.fd_max_attempts`` times, always from the original text."""
    if _parses_as_json(raw):
        return raw
    attempts = [raw]
    template = load_asset("format_doctor", opts.template_dir)
    for _ in range(opts.fd_max_attempts):
        prompt = render(template, {"content": raw}, "format_doctor")
        exchange = gateway.complete(cfg, None, prompt)
        attempts.append(exchange.response_text)
        if _parses_as_json(exchange.response_text):
            return exchange.response_text
    raise FormatDoctorError(
        f"output still unparseable after {opts.fd_max_attempts} repair attempts", attempts
    )


@dataclass(frozen=True)
class AgentOutput:
    elements: tuple
    provenance: Provenance
    raw_text: str


def _parse_elements(role: AgentRole, text: str, ref: RefInfo, opts: FleetOptions) -> tuple:
    obj = json.loads(text)
    if not isinstance(obj, dict):
        raise AgentOutputError(f"{role.value} output must be a JSON object")
    if role is AgentRole.TACTICAL_OFFICER:
        if "user_story" not in obj:
            raise AgentOutputError('tactical_officer output is missing "user_story"')
        if not isinstance(obj["user_story"], dict):
            raise AgentOutputError('"user_story" must be a single JSON object')
        try:
            story = user_story_from_obj(obj["user_story"], path="user_story.")
        except SchemaError as err:
            raise AgentOutputError(f"tactical_officer story malformed: {err}") from err
        violations = validate_user_story(story)
        if violations:
            raise AgentOutputError(f"user story violates invariants: {violations}")
        return (story,)

    key = _STAGE_KEY[role]
    if key not in obj or not isinstance(obj[key], list):
        raise AgentOutputError(f'{role.value} output is missing the "{key}" array')
    items = obj[key]
    if len(items) != opts.n:
        raise AgentOutputError(f"expected {opts.n} {key}, got {len(items)}")
    elements = []
    for item in items:
        if not isinstance(item, str) or not item.strip():
            raise AgentOutputError(f'every entry of "{key}" must be non-empty text')
        try:
            if role is AgentRole.ALPHA_CAPTAIN:
                elements.append(Actor(item))
            elif role is AgentRole.INTELLIGENCE_OFFICER:
                elements.append(Impact(item, actor=ref.actor))
            else:
                elements.append(Deliverable(item, impact=ref.impact))
        except InvariantError as err:
            raise AgentOutputError(str(err)) from err
    return tuple(elements)


def _first_duplicate(elements: tuple) -> str | None:
    seen = set()
    for element in elements:
        key = normalize_text(element.text)
        if key in seen:
            return element.text
        seen.add(key)
    return None


def run_agent(role: AgentRole, ref: RefInfo, opts: FleetOptions, gateway: Gateway,
              cfg: BackendConfig, fd_cfg: BackendConfig | None = None) -> AgentOutput:
    """One agent call: prompt, complete, doctor, parse, validate.

    Duplicate sibling elements (same normalized text) trigger exactly one
    regeneration before failing; all other contract violations fail
    immediately.
    """
    fd_cfg = fd_cfg or cfg
    prompt = build_prompt(role, ref, opts).render()
    attempts = 0
    while True:
        attempts += 1
        exchange = gateway.complete(cfg, None, prompt)
        doctored = format_doctor(exchange.response_text, opts, gateway, fd_cfg)
        elements = _parse_elements(role, doctored, ref, opts)
        duplicate = None if role is AgentRole.TACTICAL_OFFICER else _first_duplicate(elements)
        if duplicate is None:
            provenance = Provenance(
                role=role.value, attempts=attempts, repaired=doctored != exchange.response_text
            )
            return AgentOutput(elements=elements, provenance=provenance, raw_text=doctored)
        if attempts >= 2:
            raise AgentOutputError(
                f"{role.value} produced duplicate sibling {duplicate!r} even after regeneration"
            )


class _PartialFailure(Exception):
    """Internal carrier: partially expanded node + the original cause."""

    def __init__(self, node, cause: Exception):
        super().__init__(str(cause))
        self.node = node
        self.cause = cause


def expand_goal(context: ProjectContext, goal: Goal, opts: FleetOptions, gateway: Gateway,
                cfg: BackendConfig,
                role_cfgs: Mapping[AgentRole, BackendConfig] | None = None) -> ImpactMapTree:
    """Depth-first sequential expansion of one goal into a complete tree.

    On failure raises :class:`ExpandError` whose ``partial_tree`` holds
    every node generated so far (unexpanded siblings appear childless).
    """
    role_cfgs = dict(role_cfgs or {})

    def cfg_for(role: AgentRole) -> BackendConfig:
        return role_cfgs.get(role, cfg)

    fd_cfg = cfg_for(AgentRole.FORMAT_DOCTOR)
    base_ref = RefInfo(context=context, goal=goal)
    try:
        ac = run_agent(AgentRole.ALPHA_CAPTAIN, base_ref, opts, gateway,
                       cfg_for(AgentRole.ALPHA_CAPTAIN), fd_cfg)
    except (FleetError, GatewayError) as err:
        raise ExpandError(f"alpha_captain failed: {err}", ImpactMapTree(goal)) from err

    actor_nodes: list[ActorNode] = []
    for idx, actor in enumerate(ac.elements):
        try:
            actor_nodes.append(
                _expand_actor(actor, ac.provenance, base_ref, opts, gateway, cfg_for, fd_cfg)
            )
        except _PartialFailure as failure:
            actor_nodes.append(failure.node)
            actor_nodes.extend(ActorNode(a, ac.provenance) for a in ac.elements[idx + 1:])
            raise ExpandError(
                f"expansion failed: {failure.cause}", ImpactMapTree(goal, tuple(actor_nodes))
            ) from failure.cause
    return ImpactMapTree(goal, tuple(actor_nodes))


def _expand_actor(actor: Actor, provenance: Provenance, base_ref: RefInfo, opts: FleetOptions,
                  gateway: Gateway, cfg_for: Callable, fd_cfg: BackendConfig) -> ActorNode:
    ref = replace(base_ref, actor=actor)
    try:
        io = run_agent(AgentRole.INTELLIGENCE_OFFICER, ref, opts, gateway,
                       cfg_for(AgentRole.INTELLIGENCE_OFFICER), fd_cfg)
    except (FleetError, GatewayError) as err:
        raise _PartialFailure(ActorNode(actor, provenance), err)

    impact_nodes: list[ImpactNode] = []
    for idx, impact in enumerate(io.elements):
        try:
            impact_nodes.append(
                _expand_impact(impact, io.provenance, ref, opts, gateway, cfg_for, fd_cfg)
            )
        except _PartialFailure as failure:
            impact_nodes.append(failure.node)
            impact_nodes.extend(ImpactNode(i, io.provenance) for i in io.elements[idx + 1:])
            raise _PartialFailure(ActorNode(actor, provenance, tuple(impact_nodes)), failure.cause)
    return ActorNode(actor, provenance, tuple(impact_nodes))


def _expand_impact(impact: Impact, provenance: Provenance, actor_ref: RefInfo, opts: FleetOptions,
                   gateway: Gateway, cfg_for: Callable, fd_cfg: BackendConfig) -> ImpactNode:
    ref = replace(actor_ref, impact=impact)
    try:
        dc = run_agent(AgentRole.DELIVERY_COORDINATOR, ref, opts, gateway,
                       cfg_for(AgentRole.DELIVERY_COORDINATOR), fd_cfg)
    except (FleetError, GatewayError) as err:
        raise _PartialFailure(ImpactNode(impact, provenance), err)

    deliverable_nodes: list[DeliverableNode] = []
    for idx, deliverable in enumerate(dc.elements):
        ref_d = replace(ref, deliverable=deliverable)
        try:
            to = run_agent(AgentRole.TACTICAL_OFFICER, ref_d, opts, gateway,
                           cfg_for(AgentRole.TACTICAL_OFFICER), fd_cfg)
        except (FleetError, GatewayError) as err:
            deliverable_nodes.append(DeliverableNode(deliverable, dc.provenance))
            deliverable_nodes.extend(
                DeliverableNode(d, dc.provenance) for d in dc.elements[idx + 1:]
            )
            raise _PartialFailure(
                ImpactNode(impact, provenance, tuple(deliverable_nodes)), err
            )
        stories = tuple(StoryNode(story, to.provenance) for story in to.elements)
        deliverable_nodes.append(DeliverableNode(deliverable, dc.provenance, stories))
    return ImpactNode(impact, provenance, tuple(deliverable_nodes))


def tree_to_results(tree: ImpactMapTree) -> list[IMResult]:
    """One IMResult per story, in depth-first generation order."""
    results = []
    for actor_node in tree.actors:
        for impact_node in actor_node.impacts:
            for deliverable_node in impact_node.deliverables:
                for story_node in deliverable_node.stories:
                    results.append(IMResult(
                        goal=tree.goal,
                        actor=actor_node.actor,
                        impact=impact_node.impact,
                        deliverable=deliverable_node.deliverable,
                        user_story=story_node.story,
                    ))
    return results


def _provenance_to_obj(p: Provenance) -> dict:
    return {"role": p.role, "attempts": p.attempts, "repaired": p.repaired}


def tree_to_obj(tree: ImpactMapTree) -> dict:
    """Nested-array JSON mirror of the tree, provenance included."""
    return {
        "goal": tree.goal.text,
        "actors": [
            {
                "actor": a.actor.text,
                "provenance": _provenance_to_obj(a.provenance),
                "impacts": [
                    {
                        "impact": i.impact.text,
                        "provenance": _provenance_to_obj(i.provenance),
                        "deliverables": [
                            {
                                "deliverable": d.deliverable.text,
                                "provenance": _provenance_to_obj(d.provenance),
                                "user_stories": [
                                    {
                                        "user_story": user_story_to_obj(s.story),
                                        "provenance": _provenance_to_obj(s.provenance),
                                    }
                                    for s in d.stories
                                ],
                            }
                            for d in i.deliverables
                        ],
                    }
                    for i in a.impacts
                ],
            }
            for a in tree.actors
        ],
    }
