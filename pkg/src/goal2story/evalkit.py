"""Evaluation metrics: embedding-based hit rates, judge verdicts, and
human-alignment statistics.

A goal counts as hit when at least one generated story clears all three
per-element similarity thresholds against the same reference story. The
hit rate for a project is hit goals over total goals; the aggregate is
reported both as the unweighted mean over projects (primary) and as the
pooled rate over all goals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    Goal,
    ProjectContext,
    StorySeekRecord,
    UserStory,
    normalize_text,
    user_story_to_obj,
)
from .errors import EvalError, InvariantError, JudgeFormatError
from .gateway import BackendConfig, Gateway
from .prompts import load_asset, load_sections, render

# Judge criteria names on the wire.
CRITERIA_CORE = ("syntactic", "semantic", "pragmatic", "consistency_goal")
CRITERION_FACTUAL = "consistency_factual"
JUDGE_MODES = ("generated", "dataset_check")


@dataclass(frozen=True)
class Thresholds:
    """Per-element similarity cutoffs. Meaningful values live in [0, 1];
    out-of-range values are allowed so degenerate settings (accept-all,
    reject-all) stay expressible."""

    actor: float = 0.70
    action: float = 0.60
    expected_outcome: float = 0.60


def cosine_similarity(a: Sequence[float], b: Sequence[float]) -> float:
    """Standard cosine; symmetric and scale-invariant."""
    va = np.asarray(a, dtype=float)
    vb = np.asarray(b, dtype=float)
    if va.ndim != 1 or vb.ndim != 1 or va.shape != vb.shape:
        raise ValueError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    return float(np.dot(va, vb) / (na * nb))


class CachedEmbedder:
    """Embeds through a gateway, once per unique text."""

    def __init__(self, gateway: Gateway, cfg: BackendConfig):
        self._gateway = gateway
        self._cfg = cfg
        self._cache: dict[str, list[float]] = {}

    def vectors(self, texts: Sequence[str]) -> list[list[float]]:
        missing = []
        for text in texts:
            if text not in self._cache and text not in missing:
                missing.append(text)
        if missing:
            for text, vector in zip(missing, self._gateway.embed(self._cfg, missing)):
                self._cache[text] = vector
        return [self._cache[t] for t in texts]


def element_hit(gen: UserStory, ref: UserStory, th: Thresholds,
                embedder: CachedEmbedder) -> tuple[bool, tuple[float, float, float]]:
    """Compare one generated story against one reference story, all three
    elements against the same reference."""
    vecs = embedder.vectors([
        gen.actor, ref.actor, gen.action, ref.action,
        gen.expected_outcome, ref.expected_outcome,
    ])
    scores = (
        cosine_similarity(vecs[0], vecs[1]),
        cosine_similarity(vecs[2], vecs[3]),
        cosine_similarity(vecs[4], vecs[5]),
    )
    passed = (
        scores[0] >= th.actor
        and scores[1] >= th.action
        and scores[2] >= th.expected_outcome
    )
    return passed, scores


@dataclass(frozen=True)
class EvidenceRow:
    generated_index: int
    reference_index: int
    scores: tuple[float, float, float]
    passes: tuple[bool, bool, bool]
    passed: bool

    def to_obj(self) -> dict:
        return {
            "generated": self.generated_index,
            "reference": self.reference_index,
            "scores": {
                "actor": self.scores[0],
                "action": self.scores[1],
                "expected_outcome": self.scores[2],
            },
            "passes": {
                "actor": self.passes[0],
                "action": self.passes[1],
                "expected_outcome": self.passes[2],
            },
            "pass": self.passed,
        }


@dataclass(frozen=True)
class HitReport:
    goal_id: str
    hit: bool
    evidence: tuple[EvidenceRow, ...]

    def __post_init__(self):
        if self.hit != any(row.passed for row in self.evidence):
            raise InvariantError("HitReport.hit must equal 'any evidence row passed'")

    def to_obj(self) -> dict:
        return {
            "goal_id": self.goal_id,
            "hit": self.hit,
            "evidence": [row.to_obj() for row in self.evidence],
        }


def goal_hit(generated: Sequence[UserStory], references: Sequence[UserStory],
             th: Thresholds, embedder: CachedEmbedder, goal_id: str = "") -> HitReport:
    """Exhaustive pairwise check: evidence enumerates every
    (generated, reference) pair; hit iff any pair passes every element."""
    if not generated or not references:
        raise ValueError("goal_hit requires non-empty story lists")
    unique: list[str] = []
    for story in list(generated) + list(references):
        for text in (story.actor, story.action, story.expected_outcome):
            if text not in unique:
                unique.append(text)
    embedder.vectors(unique)  # warm the cache in one batch
    evidence = []
    for gi, gen in enumerate(generated):
        for ri, ref in enumerate(references):
            passed, scores = element_hit(gen, ref, th, embedder)
            passes = (
                scores[0] >= th.actor,
                scores[1] >= th.action,
                scores[2] >= th.expected_outcome,
            )
            evidence.append(EvidenceRow(gi, ri, scores, passes, passed))
    return HitReport(goal_id=goal_id, hit=any(r.passed for r in evidence),
                     evidence=tuple(evidence))


def macro_mean(rates: Iterable[float]) -> float:
    """Unweighted mean over per-project rates."""
    rates = list(rates)
    if not rates:
        raise ValueError("macro_mean requires at least one rate")
    return sum(rates) / len(rates)


@dataclass(frozen=True)
class ProjectFhr:
    hits: int
    total: int
    rate: float


@dataclass(frozen=True)
class FhrReport:
    per_project: Mapping[str, ProjectFhr]
    macro_mean: float
    micro_rate: float
    goal_reports: tuple[tuple[str, HitReport], ...] = ()


def compute_fhr(runs: Sequence[tuple[str, str, Sequence[UserStory]]],
                dataset: Sequence[StorySeekRecord], th: Thresholds,
                embedder: CachedEmbedder) -> FhrReport:
    """Hit-rate statistics over (project_id, goal text, generated stories)
    runs against the dataset's reference stories.

    Goals are grouped by normalized goal text within a project. The
    denominator for a project is the number of distinct dataset goals of
    that project; dataset goals without a run count as misses.
    """
    refs: dict[tuple[str, str], list[UserStory]] = {}
    display_goal: dict[tuple[str, str], str] = {}
    project_goals: dict[str, list[str]] = {}
    for record in dataset:
        key = (record.project_id, normalize_text(record.im_result.goal.text))
        if key not in refs:
            refs[key] = []
            display_goal[key] = record.im_result.goal.text
            project_goals.setdefault(record.project_id, []).append(key[1])
        refs[key].append(record.im_result.user_story)

    run_map: dict[tuple[str, str], list[UserStory]] = {}
    for project_id, goal_text, stories in runs:
        key = (project_id, normalize_text(goal_text))
        if key not in refs:
            raise EvalError(f"goal not in dataset: project {project_id!r}, goal {goal_text!r}")
        run_map.setdefault(key, []).extend(stories)

    projects = sorted({project_id for project_id, _, _ in runs})
    per_project: dict[str, ProjectFhr] = {}
    goal_reports: list[tuple[str, HitReport]] = []
    total_hits = total_goals = 0
    for project_id in projects:
        hits = 0
        goals = project_goals[project_id]
        for norm_goal in goals:
            key = (project_id, norm_goal)
            if key in run_map:
                report = goal_hit(run_map[key], refs[key], th, embedder,
                                  goal_id=display_goal[key])
            else:
                report = HitReport(goal_id=display_goal[key], hit=False, evidence=())
            goal_reports.append((project_id, report))
            hits += int(report.hit)
        per_project[project_id] = ProjectFhr(hits=hits, total=len(goals),
                                             rate=hits / len(goals))
        total_hits += hits
        total_goals += len(goals)
    return FhrReport(
        per_project=per_project,
        macro_mean=macro_mean([p.rate for p in per_project.values()]),
        micro_rate=total_hits / total_goals,
        goal_reports=tuple(goal_reports),
    )


# ---------------------------------------------------------------------------
# Judge-based quality verdicts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuaceVerdict:
    score: int
    failed_criteria: tuple[str, ...]
    raw: str = ""

    def __post_init__(self):
        if self.score not in (0, 1):
            raise InvariantError("QuaceVerdict.score must be 0 or 1")
        if (self.score == 1) != (len(self.failed_criteria) == 0):
            raise InvariantError("QuaceVerdict: score 1 iff no failed criteria")

    def to_obj(self) -> dict:
        return {"score": self.score, "failed": list(self.failed_criteria), "raw": self.raw}


def _context_lines(context: ProjectContext) -> str:
    lines = [f"Background: {context.background}", f"Problems: {context.problems}"]
    if context.solutions is not None:
        lines.append(f"Solutions: {context.solutions}")
    return "\n".join(lines)


def build_judge_prompt(us: UserStory, context: ProjectContext, goal: Goal, mode: str,
                       template_dir: Path | None = None) -> str:
    if mode not in JUDGE_MODES:
        raise ValueError(f"mode must be one of {JUDGE_MODES}, got {mode!r}")
    sections = load_sections(
        "quace_judge", template_dir,
        required=("role", "criteria_core", "criteria_factual", "task"),
    )
    criteria = sections["criteria_core"]
    if mode == "dataset_check":
        criteria += "\n" + sections["criteria_factual"]
    task = render(sections["task"], {
        "goal": goal.text,
        "context": _context_lines(context),
        "story_json": json.dumps(user_story_to_obj(us), ensure_ascii=False),
    }, "quace_judge[task]")
    return f"{sections['role']}\n\nEvaluation criteria:\n{criteria}\n\n{task}"


def _allowed_criteria(mode: str) -> tuple[str, ...]:
    return CRITERIA_CORE + (CRITERION_FACTUAL,) if mode == "dataset_check" else CRITERIA_CORE


def _parse_verdict_obj(obj, mode: str) -> tuple[int, tuple[str, ...]]:
    if not isinstance(obj, dict):
        raise JudgeFormatError("judge output must be a JSON object")
    score = obj.get("score")
    if isinstance(score, str) and score in ("0", "1"):
        score = int(score)
    if isinstance(score, bool):
        score = int(score)
    if score not in (0, 1):
        raise JudgeFormatError(f"judge 'score' must be 0 or 1, got {obj.get('score')!r}")
    failed_raw = obj.get("failed", [])
    if not isinstance(failed_raw, list):
        raise JudgeFormatError("judge 'failed' must be a list of criterion names")
    allowed = _allowed_criteria(mode)
    failed: list[str] = []
    for name in failed_raw:
        if not isinstance(name, str):
            raise JudgeFormatError(f"criterion name must be a string, got {name!r}")
        canonical = name.strip().lower().replace("-", "_").replace(" ", "_")
        if canonical not in allowed:
            raise JudgeFormatError(f"unknown criterion {name!r} for mode {mode!r}")
        if canonical not in failed:
            failed.append(canonical)
    if score == 1 and failed:
        score = 0  # the named failures win over the claimed score
    if score == 0 and not failed:
        raise JudgeFormatError("judge scored 0 but named no failed criterion")
    return score, tuple(failed)


def quace_evaluate(us: UserStory, context: ProjectContext, goal: Goal, judge: BackendConfig,
                   mode: str, gateway: Gateway,
                   template_dir: Path | None = None) -> QuaceVerdict:
    """One judge call; unparseable output gets exactly one repair attempt
    before a judge-format error. ``dataset_check`` adds the factual
    criterion; ``generated`` omits it."""
    prompt = build_judge_prompt(us, context, goal, mode, template_dir)
    exchange = gateway.complete(judge, None, prompt)
    raw = exchange.response_text
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError:
        repair = render(load_asset("format_doctor", template_dir), {"content": raw},
                        "format_doctor")
        retry = gateway.complete(judge, None, repair)
        raw = retry.response_text
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as err:
            raise JudgeFormatError("judge output unparseable even after repair") from err
    score, failed = _parse_verdict_obj(obj, mode)
    return QuaceVerdict(score=score, failed_criteria=failed, raw=raw)


def quace_rate(verdicts: Sequence[QuaceVerdict]) -> float:
    if not verdicts:
        raise ValueError("quace_rate requires at least one verdict")
    return sum(1 for v in verdicts if v.score == 1) / len(verdicts)


# ---------------------------------------------------------------------------
# Human-alignment statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConfusionTable:
    """Rows are ground truth: tp/fn form the GT-positive row, fp/tn the
    GT-negative row."""

    tp: int
    fn: int
    fp: int
    tn: int

    def __post_init__(self):
        for name in ("tp", "fn", "fp", "tn"):
            if getattr(self, name) < 0:
                raise InvariantError(f"ConfusionTable.{name} must be >= 0")
        if self.total == 0:
            raise InvariantError("ConfusionTable must have at least one count")

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn


@dataclass(frozen=True)
class AlignmentReport:
    """Five alignment metrics; ``None`` marks an undefined metric (zero
    denominator), never silently zero."""

    precision: float | None
    recall: float | None
    f1: float | None
    alignment_rate: float
    fpr: float | None

    def to_obj(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "alignment_rate": self.alignment_rate,
            "fpr": self.fpr,
        }


def alignment_metrics(ct: ConfusionTable) -> AlignmentReport:
    precision = ct.tp / (ct.tp + ct.fp) if ct.tp + ct.fp else None
    recall = ct.tp / (ct.tp + ct.fn) if ct.tp + ct.fn else None
    f1 = None
    if precision is not None and recall is not None and precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    fpr = ct.fp / (ct.fp + ct.tn) if ct.fp + ct.tn else None
    return AlignmentReport(
        precision=precision,
        recall=recall,
        f1=f1,
        alignment_rate=(ct.tp + ct.tn) / ct.total,
        fpr=fpr,
    )


# ---------------------------------------------------------------------------
# Report rendering
# ---------------------------------------------------------------------------


def format_percent(value: float | None) -> str:
    return "undefined" if value is None else f"{value * 100:.2f}%"


def fhr_to_csv(report: FhrReport) -> str:
    lines = ["project_id,hits,total,rate"]
    for project_id in sorted(report.per_project):
        p = report.per_project[project_id]
        lines.append(f"{project_id},{p.hits},{p.total},{p.rate:.6f}")
    return "\n".join(lines) + "\n"

def fhr_to_markdown(report: FhrReport, method: str = "", model: str = "",
                    quace: float | None = None) -> str:
    """One method-model row with per-project columns plus the mean."""
    projects = sorted(report.per_project)
    header = ["Method", "Model", *projects, "Mean", "QuACE"]
    row = [method or "-", model or "-"]
    row += [format_percent(report.per_project[p].rate) for p in projects]
    row.append(format_percent(report.macro_mean))
    row.append(format_percent(quace) if quace is not None else "-")
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "---|" * len(header),
        "| " + " | ".join(row) + " |",
    ]
    return "\n".join(lines) + "\n"


def alignment_report_lines(report: AlignmentReport) -> list[str]:
    return [
        f"precision: {format_percent(report.precision)}",
        f"recall: {format_percent(report.recall)}",
        f"f1: {format_percent(report.f1)}",
        f"alignment_rate: {format_percent(report.alignment_rate)}",
        f"fpr: {format_percent(report.fpr)}",
    ]
