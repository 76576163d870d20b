"""Dataset handling: schema-validated loading, the semi-automatic
construction pipeline from raw issue exports, and judge-based quality
checking.

Dataset files are JSON lines (one record per line); a JSON array is
accepted too. Raw inputs whose text carries ten or fewer words, or that
lack a project id, are filtered out before extraction. Extraction writes
enough material (prompt, raw response, repair flag) for the human review
step that a semi-automatic pipeline implies.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .core import (
    StorySeekRecord,
    im_result_from_obj,
    project_context_from_obj,
    record_from_obj,
    record_to_obj,
    validate_user_story,
)
from .errors import (
    DatasetError,
    ExtractionError,
    FleetError,
    GatewayError,
    InvariantError,
    JudgeFormatError,
    SchemaError,
)
from .evalkit import QuaceVerdict, quace_evaluate, quace_rate
from .fleet import FleetOptions, format_doctor
from .gateway import BackendConfig, Gateway
from .prompts import load_sections, render

MIN_CONTEXT_WORDS = 11  # records with 10 or fewer words of context are removed


@dataclass(frozen=True)
class RawIssueRecord:
    """One exported issue: title + description + context in a single blob."""

    project_id: str
    text: str
    source_url: str | None = None

    def __post_init__(self):
        if not isinstance(self.project_id, str):
            raise InvariantError("RawIssueRecord.project_id must be a string")
        if not isinstance(self.text, str) or not self.text.strip():
            raise InvariantError("RawIssueRecord.text must be non-empty")


@dataclass(frozen=True)
class DatasetManifest:
    record_count: int
    per_project: Mapping[str, int]
    schema_version: int = 1
    construction: Mapping[str, object] | None = None

    def __post_init__(self):
        if self.record_count != sum(self.per_project.values()):
            raise InvariantError("DatasetManifest counts do not add up")

    def to_obj(self) -> dict:
        return {
            "record_count": self.record_count,
            "per_project": dict(sorted(self.per_project.items())),
            "schema_version": self.schema_version,
            "construction": dict(self.construction) if self.construction else None,
        }


def _load_json_container(path: str | Path, what: str) -> list:
    """Parse a JSON-lines file or a single JSON array into a list of objects."""
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        raise DatasetError(f"{what} file is empty: {path}")
    if text.lstrip().startswith("["):
        try:
            objs = json.loads(text)
        except json.JSONDecodeError as err:
            raise DatasetError(f"{what} file is not valid JSON: {err}") from err
        if not isinstance(objs, list):
            raise DatasetError(f"{what} file must contain an array of records")
        return objs
    objs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            objs.append(json.loads(line))
        except json.JSONDecodeError as err:
            raise DatasetError(f"{what} file line {lineno} is not valid JSON: {err}") from err
    return objs


def build_manifest(records: Sequence[StorySeekRecord],
                   construction: Mapping[str, object] | None = None) -> DatasetManifest:
    counts = Counter(r.project_id for r in records)
    return DatasetManifest(
        record_count=len(records), per_project=dict(counts), construction=construction
    )


def load_dataset(path: str | Path) -> tuple[list[StorySeekRecord], DatasetManifest]:
    """Load and validate every record; duplicates are preserved as-is.

    Schema violations name the record index and the offending field.
    """
    objs = _load_json_container(path, "dataset")
    if not objs:
        raise DatasetError(f"dataset file has no records: {path}")
    records: list[StorySeekRecord] = []
    for index, obj in enumerate(objs):
        try:
            record = record_from_obj(obj)
        except SchemaError as err:
            raise SchemaError(f"record {index}: {err}", field=err.field,
                              record_index=index) from err
        violations = validate_user_story(record.im_result.user_story)
        if violations:
            raise SchemaError(
                f"record {index}: user story violates {violations}",
                field="im_result.user_story", record_index=index,
            )
        records.append(record)
    return records, build_manifest(records)


def save_dataset(records: Sequence[StorySeekRecord], path: str | Path) -> None:
    lines = [json.dumps(record_to_obj(r), ensure_ascii=False, separators=(",", ":"))
             for r in records]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_raw_issues(path: str | Path) -> list[RawIssueRecord]:
    objs = _load_json_container(path, "raw issue")
    issues = []
    for index, obj in enumerate(objs):
        if not isinstance(obj, dict) or not isinstance(obj.get("text"), str) \
                or not obj["text"].strip():
            raise SchemaError(f"raw record {index}: missing non-empty 'text'",
                              field="text", record_index=index)
        project_id = obj.get("project_id", "")
        if not isinstance(project_id, str):
            raise SchemaError(f"raw record {index}: 'project_id' must be a string",
                              field="project_id", record_index=index)
        source_url = obj.get("source_url")
        if source_url is not None and not isinstance(source_url, str):
            raise SchemaError(f"raw record {index}: 'source_url' must be a string",
                              field="source_url", record_index=index)
        issues.append(RawIssueRecord(project_id=project_id, text=obj["text"],
                                     source_url=source_url))
    return issues


def count_context_words(text: str) -> int:
    """Whitespace tokenization after punctuation stripping."""
    return len(re.sub(r"[^\w\s]", " ", text).split())


def filter_raw(records: Sequence[RawIssueRecord]) -> list[RawIssueRecord]:
    """Keep records with a project id and at least 11 words of context.

    Pure and idempotent: filtering a filtered list changes nothing.
    """
    return [
        r for r in records
        if r.project_id.strip() and count_context_words(r.text) >= MIN_CONTEXT_WORDS
    ]


@dataclass(frozen=True)
class ExtractionOutcome:
    """Extracted record plus the audit material a human reviewer needs."""

    record: StorySeekRecord
    repaired: bool
    prompt: str
    response_text: str

    def audit_obj(self) -> dict:
        return {
            "project_id": self.record.project_id,
            "repaired": self.repaired,
            "prompt": self.prompt,
            "response_text": self.response_text,
            "record": record_to_obj(self.record),
        }


def _extraction_prompt(record: RawIssueRecord, template_dir=None) -> str:
    sections = load_sections(
        "extract_im", template_dir, required=("role", "task", "guidelines", "output_format")
    )
    task = render(sections["task"], {"issue_text": record.text}, "extract_im[task]")
    return "\n\n".join([
        f"Role: {sections['role']}",
        f"Task: {task}",
        f"Guidelines:\n{sections['guidelines']}",
        f"Output Format: {sections['output_format']}",
    ])


def extract_im(record: RawIssueRecord, extractor: BackendConfig, gateway: Gateway,
               fd_cfg: BackendConfig | None = None, fd_max_attempts: int = 2,
               template_dir=None) -> ExtractionOutcome:
    """One completion yielding the path and the project info as one JSON
    document. The output project id is always the input's, never the
    model's."""
    if not record.project_id.strip():
        raise ExtractionError("cannot extract a record without a project_id")
    prompt = _extraction_prompt(record, template_dir)
    exchange = gateway.complete(extractor, None, prompt)
    fd_opts = FleetOptions(fd_max_attempts=fd_max_attempts, template_dir=template_dir)
    text = format_doctor(exchange.response_text, fd_opts, gateway, fd_cfg or extractor)
    obj = json.loads(text)
    try:
        if not isinstance(obj, dict):
            raise SchemaError("extractor output must be a JSON object")
        if "im_result" not in obj or not isinstance(obj["im_result"], dict):
            raise SchemaError("missing object field 'im_result'", field="im_result")
        if "project_info" not in obj or not isinstance(obj["project_info"], dict):
            raise SchemaError("missing object field 'project_info'", field="project_info")
        im_result = im_result_from_obj(obj["im_result"], path="im_result.")
        project_info = project_context_from_obj(obj["project_info"], path="project_info.")
        extracted = StorySeekRecord(
            project_id=record.project_id, im_result=im_result, project_info=project_info
        )
    except (SchemaError, InvariantError) as err:
        raise ExtractionError(f"extracted record invalid: {err}", raw_text=text) from err
    violations = validate_user_story(extracted.im_result.user_story)
    if violations:
        raise ExtractionError(
            f"extracted user story violates {violations}", raw_text=text
        )
    return ExtractionOutcome(
        record=extracted, repaired=text != exchange.response_text,
        prompt=prompt, response_text=exchange.response_text,
    )


@dataclass(frozen=True)
class QualityCheckSummary:
    rate: float
    verdicts: tuple[tuple[int, QuaceVerdict], ...]
    failures: tuple[tuple[int, str], ...]

    def to_obj(self) -> dict:
        return {
            "rate": self.rate,
            "scored": len(self.verdicts),
            "failures": [{"record": i, "error": msg} for i, msg in self.failures],
        }


def dataset_quality_check(records: Sequence[StorySeekRecord], judge: BackendConfig,
                          gateway: Gateway, template_dir=None) -> QualityCheckSummary:
    """Judge every record in dataset-check mode (factual criterion
    included). Judge failures do not stop the batch; they are reported
    separately and the rate covers the scored records only."""
    verdicts: list[tuple[int, QuaceVerdict]] = []
    failures: list[tuple[int, str]] = []
    for index, record in enumerate(records):
        try:
            verdict = quace_evaluate(
                record.im_result.user_story, record.project_info, record.im_result.goal,
                judge, "dataset_check", gateway, template_dir,
            )
        except (GatewayError, JudgeFormatError) as err:
            failures.append((index, str(err)))
            continue
        verdicts.append((index, verdict))
    if not verdicts:
        raise DatasetError("no record could be scored")
    rate = quace_rate([v for _, v in verdicts])
    return QualityCheckSummary(rate=rate, verdicts=tuple(verdicts), failures=tuple(failures))


def cross_model_extract(records: Sequence[RawIssueRecord], primary: BackendConfig,
                        secondary: BackendConfig, gateway: Gateway,
                        fd_cfg: BackendConfig | None = None, fd_max_attempts: int = 2,
                        template_dir=None) -> list[dict]:
    """Run extraction under two configs and emit paired outputs for human
    comparison; the comparison itself stays with the humans."""
    pairs = []
    for record in records:
        row: dict = {"project_id": record.project_id}
        for label, cfg in (("primary", primary), ("secondary", secondary)):
            try:
                outcome = extract_im(record, cfg, gateway, fd_cfg, fd_max_attempts, template_dir)
                row[label] = {"model": cfg.model_name, "record": record_to_obj(outcome.record),
                              "repaired": outcome.repaired}
            except (ExtractionError, FleetError, GatewayError) as err:
                row[label] = {"model": cfg.model_name, "error": str(err)}
        pairs.append(row)
    return pairs
