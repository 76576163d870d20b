from __future__ import annotations

import json

import pytest

from goal2story.errors import (
    DatasetError,
    ExtractionError,
    FormatDoctorError,
    SchemaError,
)
from goal2story.gateway import ScriptEntry, ScriptedGateway, scripted_config
from goal2story.storyseek import (
    RawIssueRecord,
    build_manifest,
    count_context_words,
    cross_model_extract,
    dataset_quality_check,
    extract_im,
    filter_raw,
    load_dataset,
    load_raw_issues,
    save_dataset,
)

from conftest import make_record, record_obj

CFG = scripted_config()


def write_jsonl(path, objs):
    path.write_text("\n".join(json.dumps(o) for o in objs) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# load_dataset
# ---------------------------------------------------------------------------


def test_load_three_valid_records(tmp_path):
    path = tmp_path / "data.jsonl"
    write_jsonl(path, [record_obj("p1", "goal one"), record_obj("p1", "goal two"),
                       record_obj("p2", "goal three")])
    records, manifest = load_dataset(path)
    assert len(records) == 3
    assert manifest.record_count == 3
    assert manifest.per_project == {"p1": 2, "p2": 1}
    assert manifest.schema_version == 1


def test_load_accepts_json_array(tmp_path):
    path = tmp_path / "data.json"
    path.write_text(json.dumps([record_obj(), record_obj("p2")]), encoding="utf-8")
    records, manifest = load_dataset(path)
    assert manifest.record_count == 2


def test_load_missing_problems_names_record_and_field(tmp_path):
    obj = record_obj()
    del obj["project_info"]["problems"]
    path = tmp_path / "data.jsonl"
    write_jsonl(path, [obj])
    with pytest.raises(SchemaError) as exc:
        load_dataset(path)
    assert exc.value.record_index == 0
    assert "problems" in exc.value.field


def test_load_preserves_duplicates(tmp_path):
    path = tmp_path / "data.jsonl"
    write_jsonl(path, [record_obj(), record_obj()])
    records, manifest = load_dataset(path)
    assert len(records) == 2
    assert records[0] == records[1]


def test_load_empty_file(tmp_path):
    path = tmp_path / "data.jsonl"
    path.write_text("", encoding="utf-8")
    with pytest.raises(DatasetError, match="empty"):
        load_dataset(path)


def test_load_rejects_invariant_violating_story(tmp_path):
    obj = record_obj()
    obj["im_result"]["user_story"]["action"] = "the export happens by itself"
    path = tmp_path / "data.jsonl"
    write_jsonl(path, [obj])
    with pytest.raises(SchemaError) as exc:
        load_dataset(path)
    assert exc.value.record_index == 0


def test_load_save_roundtrip(tmp_path):
    records = [make_record("p1", "goal one"), make_record("p2", "goal two")]
    path = tmp_path / "out.jsonl"
    save_dataset(records, path)
    loaded, _ = load_dataset(path)
    assert loaded == records


# ---------------------------------------------------------------------------
# filter_raw
# ---------------------------------------------------------------------------


def words(count):
    return " ".join(f"w{i}" for i in range(count))


def test_filter_removes_ten_word_context():
    kept = filter_raw([RawIssueRecord("p", words(10))])
    assert kept == []


def test_filter_keeps_eleven_word_context():
    record = RawIssueRecord("p", words(11))
    assert filter_raw([record]) == [record]


def test_filter_strips_punctuation_before_counting():
    # punctuation alone must not count as words
    record = RawIssueRecord("p", words(10) + " !!! ... ---")
    assert filter_raw([record]) == []
    assert count_context_words(words(10) + " !!! ... ---") == 10


def test_filter_drops_missing_project_id():
    kept = filter_raw([RawIssueRecord("", words(20)), RawIssueRecord("  ", words(20))])
    assert kept == []


def test_filter_empty_list():
    assert filter_raw([]) == []


def test_filter_idempotent():
    records = [RawIssueRecord("p", words(n)) for n in (5, 10, 11, 30)]
    records.append(RawIssueRecord("", words(30)))
    once = filter_raw(records)
    assert filter_raw(once) == once


def test_load_raw_issues(tmp_path):
    path = tmp_path / "raw.jsonl"
    write_jsonl(path, [
        {"project_id": "p1", "text": words(12)},
        {"project_id": "p2", "text": words(15), "source_url": "https://x.test/1"},
    ])
    issues = load_raw_issues(path)
    assert len(issues) == 2
    assert issues[1].source_url == "https://x.test/1"
    bad = tmp_path / "bad.jsonl"
    write_jsonl(bad, [{"project_id": "p1"}])
    with pytest.raises(SchemaError):
        load_raw_issues(bad)


# ---------------------------------------------------------------------------
# extract_im
# ---------------------------------------------------------------------------


EXTRACTION = {
    "im_result": {
        "goal": "cut ticket backlog by 30%",
        "actor": "support engineer",
        "impact": "resolves tickets without escalation",
        "deliverable": "searchable playbook",
        "user_story": {
            "actor": "support engineer",
            "action": "search the playbook for a symptom",
            "expected_outcome": "tickets close on first contact",
        },
    },
    "project_info": {
        "background": "A helpdesk team with a growing queue.",
        "problems": "Fixes are undocumented.",
        "solutions": "Publish a playbook.",
    },
}


def issue(project_id="proj-9", text=None):
    return RawIssueRecord(project_id, text or words(20))


def test_extract_valid_record():
    gw = ScriptedGateway(script=[ScriptEntry(response=json.dumps(EXTRACTION))])
    outcome = extract_im(issue(), CFG, gw)
    assert outcome.record.project_id == "proj-9"
    assert outcome.record.im_result.goal.text == "cut ticket backlog by 30%"
    assert outcome.repaired is False
    assert "Issue:" in outcome.prompt


def test_extract_never_fabricates_project_id():
    payload = dict(EXTRACTION)
    payload["project_id"] = "model-invented"
    gw = ScriptedGateway(script=[ScriptEntry(response=json.dumps(payload))])
    outcome = extract_im(issue("the-real-one"), CFG, gw)
    assert outcome.record.project_id == "the-real-one"


def test_extract_repair_path():
    gw = ScriptedGateway(script=[
        ScriptEntry(response=json.dumps(EXTRACTION) + ","),
        ScriptEntry(response=json.dumps(EXTRACTION), match="Please repair"),
    ])
    outcome = extract_im(issue(), CFG, gw)
    assert outcome.repaired is True
    assert gw.completion_calls == 2


def test_extract_empty_goal_is_invariant_failure():
    payload = json.loads(json.dumps(EXTRACTION))
    payload["im_result"]["goal"] = ""
    gw = ScriptedGateway(script=[ScriptEntry(response=json.dumps(payload))])
    with pytest.raises(ExtractionError) as exc:
        extract_im(issue(), CFG, gw)
    assert exc.value.raw_text
    assert "goal" in str(exc.value)


def test_extract_fd_exhaustion():
    gw = ScriptedGateway(script=[
        ScriptEntry(response="{oops"),
        ScriptEntry(response="{worse"),
        ScriptEntry(response="{worst"),
    ])
    with pytest.raises(FormatDoctorError):
        extract_im(issue(), CFG, gw, fd_max_attempts=2)


def test_extract_requires_project_id():
    gw = ScriptedGateway()
    with pytest.raises(ExtractionError):
        extract_im(RawIssueRecord(" ", words(20)), CFG, gw)


# ---------------------------------------------------------------------------
# dataset_quality_check / cross-model
# ---------------------------------------------------------------------------


def test_quality_check_all_pass():
    records = [make_record("p1", f"goal {i}") for i in range(3)]
    gw = ScriptedGateway(script=[ScriptEntry(response='{"score": 1, "failed": []}')] * 3)
    summary = dataset_quality_check(records, CFG, gw)
    assert summary.rate == 1.0
    assert len(summary.verdicts) == 3
    assert summary.failures == ()


def test_quality_check_uses_factual_mode():
    records = [make_record()]
    gw = ScriptedGateway(script=[ScriptEntry(response='{"score": 0, "failed": ["consistency_factual"]}')])
    summary = dataset_quality_check(records, CFG, gw)
    assert summary.rate == 0.0


def test_quality_check_continues_past_judge_failure():
    records = [make_record("p1", f"goal {i}") for i in range(3)]
    gw = ScriptedGateway(script=[
        ScriptEntry(response='{"score": 1, "failed": []}'),
        ScriptEntry(fail="transport"),
        ScriptEntry(response='{"score": 1, "failed": []}'),
    ])
    summary = dataset_quality_check(records, scripted_config(max_retries=0), gw)
    assert summary.rate == 1.0
    assert len(summary.verdicts) == 2
    assert len(summary.failures) == 1
    assert summary.failures[0][0] == 1


def test_quality_check_all_failed_is_error():
    gw = ScriptedGateway(script=[ScriptEntry(fail="transport")])
    with pytest.raises(DatasetError):
        dataset_quality_check([make_record()], scripted_config(max_retries=0), gw)


def test_cross_model_pairs():
    gw = ScriptedGateway(script=[
        ScriptEntry(response=json.dumps(EXTRACTION)),
        ScriptEntry(response="{unfixable"),
        ScriptEntry(response="{still unfixable}x", match="Please repair"),
        ScriptEntry(response="{nope", match="Please repair"),
    ])
    primary = scripted_config(model_name="model-a")
    secondary = scripted_config(model_name="model-b")
    pairs = cross_model_extract([issue()], primary, secondary, gw, fd_max_attempts=2)
    assert len(pairs) == 1
    assert pairs[0]["primary"]["model"] == "model-a"
    assert "record" in pairs[0]["primary"]
    assert "error" in pairs[0]["secondary"]


def test_manifest_counts_must_add_up():
    manifest = build_manifest([make_record("a"), make_record("a"), make_record("b")])
    assert manifest.record_count == 3
    assert manifest.per_project == {"a": 2, "b": 1}
