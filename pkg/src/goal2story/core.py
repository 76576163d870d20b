"""Domain types for impact mapping and user stories.

Everything here is immutable after construction and safe to share across
threads. Text equality is always decided on the normalized form (Unicode
NFC, whitespace collapsed) via :func:`normalize_text`.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass
from typing import Any

from .errors import InvariantError, SchemaError

# First tokens that cannot open an imperative action: articles, pronouns,
# prepositions and auxiliaries. A cheap, deterministic stand-in for POS
# tagging of "starts with a verb".
VERB_STOPLIST = frozenset(
    {
        # articles
        "a", "an", "the",
        # pronouns
        "i", "you", "he", "she", "it", "we", "they",
        "me", "him", "her", "us", "them",
        "my", "your", "his", "its", "our", "their",
        "this", "that", "these", "those", "who", "whom", "which", "what",
        # prepositions
        "of", "in", "on", "at", "by", "for", "with", "from", "to",
        "into", "onto", "about", "over", "under", "after", "before",
        "between", "through", "during", "without", "within", "upon", "as",
        # auxiliaries
        "is", "are", "was", "were", "be", "been", "being", "am",
        "do", "does", "did", "have", "has", "had",
        "will", "would", "shall", "should", "can", "could", "may", "might", "must",
    }
)


def normalize_text(text: str) -> str:
    """NFC-normalize and collapse all whitespace runs to single spaces."""
    return " ".join(unicodedata.normalize("NFC", text).split())


def _same_text(a: str, b: str) -> bool:
    return normalize_text(a) == normalize_text(b)


def _require_text(value: Any, what: str) -> None:
    if not isinstance(value, str):
        raise InvariantError(f"{what} must be a string, got {type(value).__name__}")
    if not value.strip():
        raise InvariantError(f"{what} must be non-empty text")


@dataclass(frozen=True)
class ProjectContext:
    """Background and pain points of a project; solutions appear only in
    dataset records, never in generation input."""

    background: str
    problems: str
    solutions: str | None = None

    def __post_init__(self):
        _require_text(self.background, "ProjectContext.background")
        _require_text(self.problems, "ProjectContext.problems")
        if self.solutions is not None and not isinstance(self.solutions, str):
            raise InvariantError("ProjectContext.solutions must be a string or None")


@dataclass(frozen=True)
class Goal:
    """A measurable business objective."""

    text: str

    def __post_init__(self):
        _require_text(self.text, "Goal.text")


@dataclass(frozen=True)
class Actor:
    text: str

    def __post_init__(self):
        _require_text(self.text, "Actor.text")


@dataclass(frozen=True)
class Impact:
    """A behavior change of its parent actor."""

    text: str
    actor: Actor

    def __post_init__(self):
        _require_text(self.text, "Impact.text")
        if not isinstance(self.actor, Actor):
            raise InvariantError("Impact.actor must be an Actor")


@dataclass(frozen=True)
class Deliverable:
    """A feature or work item enabling its parent impact."""

    text: str
    impact: Impact

    def __post_init__(self):
        _require_text(self.text, "Deliverable.text")
        if not isinstance(self.impact, Impact):
            raise InvariantError("Deliverable.impact must be an Impact")


@dataclass(frozen=True)
class UserStory:
    """Actor / action / expected-outcome triple.

    Construction is permissive about content so invalid stories can be
    inspected; :func:`validate_user_story` is the invariant check.
    """

    actor: str
    action: str
    expected_outcome: str

    def __post_init__(self):
        for name in ("actor", "action", "expected_outcome"):
            if not isinstance(getattr(self, name), str):
                raise InvariantError(f"UserStory.{name} must be a string")


def validate_user_story(us: UserStory) -> list[str]:
    """Return violation labels (``field:rule``), empty iff the story is valid.

    Deterministic and pure: the result depends only on the story's text.
    """
    violations = []
    for name in ("actor", "action", "expected_outcome"):
        if not getattr(us, name).strip():
            violations.append(f"{name}:empty")
    if us.action.strip():
        first = us.action.split()[0].strip(".,;:!?\"'()[]").lower()
        if first in VERB_STOPLIST:
            violations.append("action:not_verb_leading")
    return violations


@dataclass(frozen=True)
class IMResult:
    """One full impact-mapping path from goal to user story."""

    goal: Goal
    actor: Actor
    impact: Impact
    deliverable: Deliverable
    user_story: UserStory

    def __post_init__(self):
        if not _same_text(self.impact.actor.text, self.actor.text):
            raise InvariantError("IMResult.impact is not a child of IMResult.actor")
        if not _same_text(self.deliverable.impact.text, self.impact.text) or not _same_text(
            self.deliverable.impact.actor.text, self.actor.text
        ):
            raise InvariantError("IMResult.deliverable is not a child of IMResult.impact")


@dataclass(frozen=True)
class Provenance:
    """Which agent call produced a tree node, and how."""

    role: str
    attempts: int
    repaired: bool

    def __post_init__(self):
        if self.attempts < 1:
            raise InvariantError("Provenance.attempts must be >= 1")


@dataclass(frozen=True)
class StoryNode:
    story: UserStory
    provenance: Provenance


@dataclass(frozen=True)
class DeliverableNode:
    deliverable: Deliverable
    provenance: Provenance
    stories: tuple[StoryNode, ...] = ()


@dataclass(frozen=True)
class ImpactNode:
    impact: Impact
    provenance: Provenance
    deliverables: tuple[DeliverableNode, ...] = ()


@dataclass(frozen=True)
class ActorNode:
    actor: Actor
    provenance: Provenance
    impacts: tuple[ImpactNode, ...] = ()


@dataclass(frozen=True)
class ImpactMapTree:
    """Full expansion of one goal. May be partial while an expansion is
    failing; :func:`validate_tree` checks the complete shape."""

    goal: Goal
    actors: tuple[ActorNode, ...] = ()


def tree_counts(tree: ImpactMapTree) -> tuple[int, int, int, int]:
    """(actors, impacts, deliverables, stories) node counts."""
    n_actors = len(tree.actors)
    n_impacts = n_delivs = n_stories = 0
    for a in tree.actors:
        n_impacts += len(a.impacts)
        for i in a.impacts:
            n_delivs += len(i.deliverables)
            for d in i.deliverables:
                n_stories += len(d.stories)
    return n_actors, n_impacts, n_delivs, n_stories


def validate_tree(tree: ImpactMapTree, n: int) -> None:
    """Check the complete-tree shape for branching factor ``n``.

    Every actor must carry n impacts, every impact n deliverables, every
    deliverable exactly one story, and all parent references must resolve
    within the tree. Raises :class:`InvariantError` otherwise.
    """
    if len(tree.actors) != n:
        raise InvariantError(f"expected {n} actors, found {len(tree.actors)}")
    for a in tree.actors:
        if len(a.impacts) != n:
            raise InvariantError(f"actor {a.actor.text!r}: expected {n} impacts")
        for i in a.impacts:
            if not _same_text(i.impact.actor.text, a.actor.text):
                raise InvariantError(f"impact {i.impact.text!r} does not reference its actor")
            if len(i.deliverables) != n:
                raise InvariantError(f"impact {i.impact.text!r}: expected {n} deliverables")
            for d in i.deliverables:
                if not _same_text(d.deliverable.impact.text, i.impact.text):
                    raise InvariantError(
                        f"deliverable {d.deliverable.text!r} does not reference its impact"
                    )
                if len(d.stories) != 1:
                    raise InvariantError(
                        f"deliverable {d.deliverable.text!r}: expected exactly 1 story"
                    )


@dataclass(frozen=True)
class StorySeekRecord:
    """Dataset row: one impact-mapping path plus its project info."""

    project_id: str
    im_result: IMResult
    project_info: ProjectContext

    def __post_init__(self):
        _require_text(self.project_id, "StorySeekRecord.project_id")
        if not isinstance(self.im_result, IMResult):
            raise InvariantError("StorySeekRecord.im_result must be an IMResult")
        if not isinstance(self.project_info, ProjectContext):
            raise InvariantError("StorySeekRecord.project_info must be a ProjectContext")


# ---------------------------------------------------------------------------
# Canonical JSON
#
# Field names on the wire are fixed: "goal", "actor", "impact",
# "deliverable", "user_story", "action", "expected_outcome", "background",
# "problems", "solutions", "project_id". Unknown keys on input are ignored;
# missing required keys are hard errors naming the field.
# ---------------------------------------------------------------------------


def _obj_text(obj: dict, key: str, path: str = "") -> str:
    field = f"{path}{key}"
    if key not in obj:
        raise SchemaError(f"missing field {field!r}", field=field)
    value = obj[key]
    if not isinstance(value, str):
        raise SchemaError(
            f"field {field!r} must be a string, got {type(value).__name__}", field=field
        )
    if not value.strip():
        raise SchemaError(f"field {field!r} must be non-empty", field=field)
    return value


def _obj_dict(obj: dict, key: str, path: str = "") -> dict:
    field = f"{path}{key}"
    if key not in obj:
        raise SchemaError(f"missing field {field!r}", field=field)
    value = obj[key]
    if not isinstance(value, dict):
        raise SchemaError(
            f"field {field!r} must be an object, got {type(value).__name__}", field=field
        )
    return value


def user_story_to_obj(us: UserStory) -> dict:
    return {"actor": us.actor, "action": us.action, "expected_outcome": us.expected_outcome}


def user_story_from_obj(obj: dict, path: str = "") -> UserStory:
    return UserStory(
        actor=_obj_text(obj, "actor", path),
        action=_obj_text(obj, "action", path),
        expected_outcome=_obj_text(obj, "expected_outcome", path),
    )


def im_result_to_obj(r: IMResult) -> dict:
    return {
        "goal": r.goal.text,
        "actor": r.actor.text,
        "impact": r.impact.text,
        "deliverable": r.deliverable.text,
        "user_story": user_story_to_obj(r.user_story),
    }


def im_result_from_obj(obj: dict, path: str = "") -> IMResult:
    if not isinstance(obj, dict):
        raise SchemaError(f"expected an object at {path or 'top level'}", field=path or None)
    goal = Goal(_obj_text(obj, "goal", path))
    actor = Actor(_obj_text(obj, "actor", path))
    impact = Impact(_obj_text(obj, "impact", path), actor=actor)
    deliverable = Deliverable(_obj_text(obj, "deliverable", path), impact=impact)
    story = user_story_from_obj(_obj_dict(obj, "user_story", path), path=f"{path}user_story.")
    return IMResult(goal=goal, actor=actor, impact=impact, deliverable=deliverable, user_story=story)


def serialize_im_result(r: IMResult) -> str:
    """Canonical single-line JSON: fixed key order, no extra whitespace."""
    return json.dumps(im_result_to_obj(r), ensure_ascii=False, separators=(",", ":"))


def deserialize_im_result(text: str) -> IMResult:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as err:
        raise SchemaError(f"not valid JSON: {err}") from err
    return im_result_from_obj(obj)


def project_context_to_obj(ctx: ProjectContext) -> dict:
    obj = {"background": ctx.background, "problems": ctx.problems}
    if ctx.solutions is not None:
        obj["solutions"] = ctx.solutions
    return obj


def project_context_from_obj(obj: dict, path: str = "") -> ProjectContext:
    solutions = obj.get("solutions")
    if solutions is not None and not isinstance(solutions, str):
        field = f"{path}solutions"
        raise SchemaError(f"field {field!r} must be a string", field=field)
    return ProjectContext(
        background=_obj_text(obj, "background", path),
        problems=_obj_text(obj, "problems", path),
        solutions=solutions,
    )


def record_to_obj(record: StorySeekRecord) -> dict:
    return {
        "project_id": record.project_id,
        "im_result": im_result_to_obj(record.im_result),
        "project_info": project_context_to_obj(record.project_info),
    }


def record_from_obj(obj: dict) -> StorySeekRecord:
    if not isinstance(obj, dict):
        raise SchemaError("expected an object for a dataset record")
    return StorySeekRecord(
        project_id=_obj_text(obj, "project_id"),
        im_result=im_result_from_obj(_obj_dict(obj, "im_result"), path="im_result."),
        project_info=project_context_from_obj(
            _obj_dict(obj, "project_info"), path="project_info."
        ),
    )


def serialize_record(record: StorySeekRecord) -> str:
    return json.dumps(record_to_obj(record), ensure_ascii=False, separators=(",", ":"))
