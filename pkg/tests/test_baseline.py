from __future__ import annotations

import json

import pytest

from goal2story.baseline import (
    SuperAgentOptions,
    build_super_prompt,
    run_super_agent,
)
from goal2story.core import validate_tree
from goal2story.errors import FormatDoctorError, InvariantError
from goal2story.gateway import ScriptEntry, ScriptedGateway, scripted_config

from conftest import super_tree_obj

CFG = scripted_config()


def test_options_reject_disabled_reasoning():
    with pytest.raises(InvariantError):
        SuperAgentOptions(cot_enabled=False)


def test_prompt_always_carries_reasoning_scaffold(context, goal):
    text = build_super_prompt(context, goal, SuperAgentOptions(n=2)).render()
    assert "Understanding the given Ref Info" in text
    assert "Choose 2 most" in text
    assert "Output Format:" in text
    assert f"Goal: {goal.text}" in text


def test_full_tree_single_call(context, goal):
    gw = ScriptedGateway(script=[ScriptEntry(response=json.dumps(super_tree_obj(2)))])
    result = run_super_agent(context, goal, SuperAgentOptions(n=2), gw, CFG)
    assert len(result.results) == 8
    assert gw.completion_calls == 1
    assert result.warnings == ()
    validate_tree(result.tree, 2)
    roles = {a.provenance.role for a in result.tree.actors}
    assert roles == {"super_agent"}


def test_structural_shortfall_is_degraded_not_fatal(context, goal):
    obj = super_tree_obj(2)
    # drop the last deliverable of the last impact: 7 stories, then one
    # story object replaced by junk: 6 parsed
    del obj["actors"][1]["impacts"][1]["deliverables"][1]
    obj["actors"][1]["impacts"][1]["deliverables"][0]["user_story"] = "junk"
    gw = ScriptedGateway(script=[ScriptEntry(response=json.dumps(obj))])
    result = run_super_agent(context, goal, SuperAgentOptions(n=2), gw, CFG)
    assert len(result.results) == 6
    assert any("degraded output: 6 of 8" in w for w in result.warnings)


def test_invalid_story_skipped_with_warning(context, goal):
    obj = super_tree_obj(1)
    obj["actors"][0]["impacts"][0]["deliverables"][0]["user_story"]["action"] = \
        "the outcome happens"
    gw = ScriptedGateway(script=[ScriptEntry(response=json.dumps(obj))])
    result = run_super_agent(context, goal, SuperAgentOptions(n=1), gw, CFG)
    assert result.results == ()
    assert any("not_verb_leading" in w for w in result.warnings)


def test_missing_actors_array_degrades_to_empty(context, goal):
    gw = ScriptedGateway(script=[ScriptEntry(response='{"something": []}')])
    result = run_super_agent(context, goal, SuperAgentOptions(n=2), gw, CFG)
    assert result.results == ()
    assert any('no "actors"' in w for w in result.warnings)


def test_unparseable_after_repairs_is_fatal(context, goal):
    gw = ScriptedGateway(script=[
        ScriptEntry(response="{broken"),
        ScriptEntry(response="{still broken"),
        ScriptEntry(response="{broken again"),
    ])
    with pytest.raises(FormatDoctorError):
        run_super_agent(context, goal, SuperAgentOptions(n=2, fd_max_attempts=2), gw, CFG)


def test_repair_path_counts_extra_call(context, goal):
    gw = ScriptedGateway(script=[
        ScriptEntry(response=json.dumps(super_tree_obj(1)) + ","),
        ScriptEntry(response=json.dumps(super_tree_obj(1)), match="Please repair"),
    ])
    result = run_super_agent(context, goal, SuperAgentOptions(n=1), gw, CFG)
    assert gw.completion_calls == 2
    assert len(result.results) == 1
    assert result.tree.actors[0].provenance.repaired is True


def test_surplus_stories_reported(context, goal):
    obj = super_tree_obj(1)
    extra = super_tree_obj(1, tag="extra")
    obj["actors"] += extra["actors"]
    gw = ScriptedGateway(script=[ScriptEntry(response=json.dumps(obj))])
    result = run_super_agent(context, goal, SuperAgentOptions(n=1), gw, CFG)
    assert len(result.results) == 2
    assert any("more user stories than expected" in w for w in result.warnings)
