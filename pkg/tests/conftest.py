from __future__ import annotations

import json
import math

import pytest

from goal2story.core import (
    Actor,
    Deliverable,
    Goal,
    Impact,
    IMResult,
    ProjectContext,
    StorySeekRecord,
    UserStory,
    record_to_obj,
)
from goal2story.evalkit import cosine_similarity
from goal2story.gateway import ScriptEntry


@pytest.fixture
def context():
    return ProjectContext(
        background="An online store sells refurbished gadgets.",
        problems="First-time buyers rarely come back for a second order.",
    )


@pytest.fixture
def goal():
    return Goal("increase repeat purchases by 10%")


def make_story(actor="developer", action="export the report", outcome="share results"):
    return UserStory(actor=actor, action=action, expected_outcome=outcome)


def make_result(goal_text="increase signups by 5%", actor_text="visitor",
                impact_text=None, deliverable_text=None, story=None):
    actor = Actor(actor_text)
    impact = Impact(impact_text or f"{actor_text} returns more often", actor=actor)
    deliverable = Deliverable(deliverable_text or "one-click signup", impact=impact)
    return IMResult(
        goal=Goal(goal_text),
        actor=actor,
        impact=impact,
        deliverable=deliverable,
        user_story=story or make_story(actor=actor_text, action="sign up with one click",
                                       outcome="more accounts get created"),
    )


def make_record(project_id="proj-a", goal_text="increase signups by 5%", **kwargs):
    return StorySeekRecord(
        project_id=project_id,
        im_result=make_result(goal_text=goal_text, **kwargs),
        project_info=ProjectContext(
            background="A signup funnel for a small web app.",
            problems="Too many visitors abandon the form.",
            solutions="Shorten the form and add social login.",
        ),
    )


def record_obj(project_id="proj-a", goal_text="increase signups by 5%", **kwargs):
    return record_to_obj(make_record(project_id, goal_text, **kwargs))


# ---------------------------------------------------------------------------
# Scripted fleet fixtures
# ---------------------------------------------------------------------------


def fleet_element_texts(n: int, tag: str):
    """The deterministic element texts a scripted fleet run produces."""
    actors = [f"{tag} actor {i}" for i in range(1, n + 1)]
    impacts = {a: [f"{a} impact {j}" for j in range(1, n + 1)] for a in actors}
    deliverables = {}
    for a in actors:
        for imp in impacts[a]:
            deliverables[imp] = [f"{imp} deliverable {k}" for k in range(1, n + 1)]
    return actors, impacts, deliverables


def story_for(deliverable_text: str, actor_text: str) -> dict:
    return {
        "actor": actor_text,
        "action": f"use {deliverable_text}",
        "expected_outcome": f"outcome of {deliverable_text}",
    }


def fleet_entries(n: int, tag: str = "t", match: str | None = None) -> list[ScriptEntry]:
    """Canned responses for one full expansion, in depth-first order."""
    actors, impacts, deliverables = fleet_element_texts(n, tag)
    entries = [ScriptEntry(response=json.dumps({"actors": actors}), match=match)]
    for a in actors:
        entries.append(ScriptEntry(response=json.dumps({"impacts": impacts[a]}), match=match))
        for imp in impacts[a]:
            entries.append(ScriptEntry(
                response=json.dumps({"deliverables": deliverables[imp]}), match=match))
            for d in deliverables[imp]:
                entries.append(ScriptEntry(
                    response=json.dumps({"user_story": story_for(d, a)}), match=match))
    return entries


def super_tree_obj(n: int, tag: str = "t") -> dict:
    actors, impacts, deliverables = fleet_element_texts(n, tag)
    return {
        "actors": [
            {
                "actor": a,
                "impacts": [
                    {
                        "impact": imp,
                        "deliverables": [
                            {"deliverable": d, "user_story": story_for(d, a)}
                            for d in deliverables[imp]
                        ],
                    }
                    for imp in impacts[a]
                ],
            }
            for a in actors
        ]
    }


def generated_story_texts(n: int, tag: str) -> list[str]:
    """Every element text the scripted stories carry, generation order."""
    texts = []
    actors, impacts, deliverables = fleet_element_texts(n, tag)
    for a in actors:
        for imp in impacts[a]:
            for d in deliverables[imp]:
                story = story_for(d, a)
                texts += [story["actor"], story["action"], story["expected_outcome"]]
    return texts


# ---------------------------------------------------------------------------
# Embedding helpers
# ---------------------------------------------------------------------------


def vec(c: float) -> list[float]:
    """A 2-d vector whose cosine against [1, 0] is c up to float rounding."""
    return [c, math.sqrt(max(0.0, 1.0 - c * c))]


def random_fhr_case(rng):
    """A small randomized hit-rate fixture: scripted embeddings, a few
    projects/goals, <=8 generated and <=4 reference stories per goal.

    Returns (run_rows, records, table, thresholds, per_goal) where
    per_goal maps (project, goal) to the raw text triples for the oracle.
    """
    per_goal = {}
    records, runs = [], {}
    table = {}
    thresholds = tuple(round(rng.uniform(0.2, 0.9), 2) for _ in range(3))
    dims = rng.randint(3, 6)
    counter = 0

    def new_text(kind):
        nonlocal counter
        counter += 1
        text = f"{kind} text {counter}"
        table[text] = [rng.uniform(-1, 1) for _ in range(dims)]
        return text

    for p in range(rng.randint(1, 3)):
        project = f"proj-{p}"
        for g in range(rng.randint(1, 3)):
            goal_text = f"goal {p}.{g}"
            refs = []
            for _ in range(rng.randint(1, 4)):
                triple = (new_text("ra"), new_text("rc"), new_text("ro"))
                refs.append(triple)
                records.append(make_record(
                    project, goal_text,
                    story=UserStory(actor=triple[0], action=triple[1],
                                    expected_outcome=triple[2]),
                ))
            gens = [(new_text("ga"), new_text("gc"), new_text("go"))
                    for _ in range(rng.randint(1, 8))]
            runs[(project, goal_text)] = [
                UserStory(actor=a, action=c, expected_outcome=o) for a, c, o in gens
            ]
            per_goal[(project, goal_text)] = (gens, refs)
    run_rows = [(p, g, stories) for (p, g), stories in runs.items()]
    return run_rows, records, table, thresholds, per_goal


def exact_cosine_partner(target: float) -> list[float]:
    """A vector whose cosine against [1, 0] is *exactly* the float target."""
    x = float(target)
    y0 = math.sqrt(max(0.0, 1.0 - x * x))
    for direction in (0.0, 2.0):
        y = y0
        for _ in range(600):
            if cosine_similarity([1.0, 0.0], [x, y]) == x:
                return [x, y]
            y = math.nextafter(y, direction)
    raise AssertionError(f"no exact cosine partner found for {target!r}")
