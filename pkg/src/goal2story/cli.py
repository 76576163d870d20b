"""Command-line entry point.

Subcommands: run, baseline, eval-fhr, eval-quace, build-dataset,
check-dataset, alignment, report. One structured config file (YAML or
JSON) declares backend sections per agent role plus thresholds, branching
factor and feature flags; command-line flags override file values. Every
command writes a run manifest into its output directory, even on failure.

Backends are real HTTP endpoints unless the config names a
``scripted_fixture`` file, which swaps in the deterministic replay
backend for hermetic runs. API keys are only ever read from the
environment variable each backend section names (default G2S_API_KEY).
"""

from __future__ import annotations

import argparse
import json
import random
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import yaml

from . import baseline as baseline_mod
from . import fleet as fleet_mod
from .core import (
    Goal,
    ProjectContext,
    im_result_to_obj,
    normalize_text,
    project_context_from_obj,
    project_context_to_obj,
    user_story_from_obj,
)
from .errors import (
    ConfigError,
    DatasetError,
    Goal2StoryError,
    InvariantError,
    SchemaError,
    TemplateError,
)
from .evalkit import (
    CachedEmbedder,
    ConfusionTable,
    Thresholds,
    alignment_metrics,
    alignment_report_lines,
    compute_fhr,
    fhr_to_csv,
    fhr_to_markdown,
    quace_evaluate,
    quace_rate,
)
from .gateway import BackendConfig, Gateway, HttpGateway, ScriptedFixture, ScriptedGateway
from .storyseek import (
    build_manifest,
    cross_model_extract,
    dataset_quality_check,
    extract_im,
    filter_raw,
    load_dataset,
    load_raw_issues,
    save_dataset,
)

_BACKEND_KEYS = {
    "base_url", "model_name", "temperature", "max_tokens",
    "timeout", "max_retries", "api_key_source",
}
_ROLE_SECTIONS = [role.value for role in fleet_mod.AgentRole] + [
    "super_agent", "judge", "embedder", "extractor", "extractor_alt",
]

DEFAULT_CONFIG = {
    "backends": {},
    "fleet": {"n": 2, "cot": False, "profile": False, "fd_max_attempts": 2},
    "thresholds": {"actor": 0.70, "action": 0.60, "expected_outcome": 0.60},
    "workers": 1,
    "max_inflight": 4,
}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _slug(text: str, limit: int = 36) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-")
    return slug[:limit] or "x"


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


def _write_jsonl(path: Path, objs) -> None:
    lines = [json.dumps(o, ensure_ascii=False) for o in objs]
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_config(path: str | None) -> dict:
    config = {key: (dict(value) if isinstance(value, dict) else value)
              for key, value in DEFAULT_CONFIG.items()}
    if path is None:
        return config
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        loaded = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as err:
        raise ConfigError(f"config file is not valid YAML/JSON: {err}") from err
    if loaded is None:
        loaded = {}
    if not isinstance(loaded, dict):
        raise ConfigError("config file must contain a mapping")
    for key, value in loaded.items():
        if key in ("fleet", "thresholds", "backends") and isinstance(value, dict):
            config[key].update(value)
        else:
            config[key] = value
    config["_config_dir"] = str(p.parent)
    return config


def apply_overrides(config: dict, args: argparse.Namespace) -> None:
    """Flags beat file values; unset flags leave the file value alone."""
    if getattr(args, "n", None) is not None:
        config["fleet"]["n"] = args.n
    if getattr(args, "cot", None) is not None:
        config["fleet"]["cot"] = args.cot
    if getattr(args, "profile", None) is not None:
        config["fleet"]["profile"] = args.profile
    if getattr(args, "workers", None) is not None:
        config["workers"] = args.workers
    thresholds = getattr(args, "thresholds", None)
    if thresholds is not None:
        parts = thresholds.split(",")
        if len(parts) != 3:
            raise ConfigError("--thresholds expects three comma-separated numbers")
        try:
            actor, action, outcome = (float(x) for x in parts)
        except ValueError as err:
            raise ConfigError(f"--thresholds values must be numbers: {thresholds}") from err
        config["thresholds"] = {
            "actor": actor, "action": action, "expected_outcome": outcome,
        }


def _scripted(config: dict) -> bool:
    return bool(config.get("scripted_fixture"))


def backend_config(config: dict, section: str) -> BackendConfig:
    backends = config.get("backends") or {}
    merged = dict(backends.get("default") or {})
    merged.update(backends.get(section) or {})
    unknown = set(merged) - _BACKEND_KEYS
    if unknown:
        raise ConfigError(f"unknown backend keys in section {section!r}: {sorted(unknown)}")
    if _scripted(config):
        merged.setdefault("base_url", "scripted:")
        merged.setdefault("model_name", "scripted")
    for required in ("base_url", "model_name"):
        if not merged.get(required):
            raise ConfigError(f"backend section {section!r} is missing {required!r}")
    try:
        return BackendConfig(**merged)
    except InvariantError as err:
        raise ConfigError(f"backend section {section!r}: {err}") from err


def role_backend_configs(config: dict) -> dict[fleet_mod.AgentRole, BackendConfig]:
    backends = config.get("backends") or {}
    overrides = {}
    for role in fleet_mod.AgentRole:
        if role.value in backends:
            overrides[role] = backend_config(config, role.value)
    return overrides


def make_gateway(config: dict) -> Gateway:
    max_inflight = int(config.get("max_inflight", 4))
    fixture_path = config.get("scripted_fixture")
    if fixture_path:
        path = Path(fixture_path)
        if not path.is_absolute() and config.get("_config_dir"):
            path = Path(config["_config_dir"]) / path
        if not path.is_file():
            raise ConfigError(f"scripted fixture not found: {path}")
        return ScriptedGateway(ScriptedFixture.from_file(path), max_inflight=max_inflight)
    return HttpGateway(max_inflight=max_inflight)


def thresholds_from(config: dict) -> Thresholds:
    section = config.get("thresholds") or {}
    try:
        return Thresholds(
            actor=float(section.get("actor", 0.70)),
            action=float(section.get("action", 0.60)),
            expected_outcome=float(section.get("expected_outcome", 0.60)),
        )
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid thresholds section: {err}") from err


_SETUP_ERRORS = (ConfigError, DatasetError, SchemaError, InvariantError, TemplateError,
                 Goal2StoryError, OSError)


def _manifest_shell(command: str, args: argparse.Namespace) -> dict:
    return {
        "command": command,
        "started_at": _now(),
        "finished_at": None,
        "config_path": getattr(args, "config", None),
        "config": None,
        "inputs": {},
        "output_dir": getattr(args, "output", None),
        "seed": getattr(args, "seed", None),
        "goals": [],
        "counts": {},
        "artifacts": [],
        "error": None,
    }


def _finish_manifest(manifest: dict, out: Path) -> None:
    manifest["finished_at"] = _now()
    snapshot = manifest.get("config")
    if isinstance(snapshot, dict):
        snapshot.pop("_config_dir", None)
    _write_json(out / "run_manifest.json", manifest)


def _ordered_jobs(items, worker_fn, workers: int):
    """Run jobs with a worker cap; results come back in input order."""
    def capture(item):
        try:
            return "ok", worker_fn(item)
        except Goal2StoryError as err:
            return "error", err

    if workers <= 1:
        return [capture(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(capture, item) for item in items]
        return [future.result() for future in futures]


def _distinct_goals(records) -> list[tuple[str, str, ProjectContext]]:
    """(project_id, goal text, context) per distinct normalized goal, in
    dataset order. Generation input never carries solutions."""
    seen = set()
    goals = []
    for record in records:
        key = (record.project_id, normalize_text(record.im_result.goal.text))
        if key in seen:
            continue
        seen.add(key)
        context = ProjectContext(
            background=record.project_info.background,
            problems=record.project_info.problems,
        )
        goals.append((record.project_id, record.im_result.goal.text, context))
    return goals


def _run_generation(args: argparse.Namespace, method: str) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest_shell("run" if method == "fleet" else "baseline", args)
    manifest["inputs"]["dataset"] = args.dataset
    exit_code = 0
    try:
        config = load_config(args.config)
        apply_overrides(config, args)
        manifest["config"] = config
        records, _ = load_dataset(args.dataset)
        goals = _distinct_goals(records)
        gateway = make_gateway(config)
        n = int(config["fleet"]["n"])
        fd_attempts = int(config["fleet"]["fd_max_attempts"])
        role_cfgs = role_backend_configs(config)
        default_cfg = backend_config(config, "default")
        fd_cfg = role_cfgs.get(fleet_mod.AgentRole.FORMAT_DOCTOR, default_cfg)

        if method == "fleet":
            opts = fleet_mod.FleetOptions(
                n=n, cot_enabled=bool(config["fleet"]["cot"]),
                profile_enabled=bool(config["fleet"]["profile"]),
                fd_max_attempts=fd_attempts,
            )

            def job(goal_row):
                project_id, goal_text, context = goal_row
                tree = fleet_mod.expand_goal(context, Goal(goal_text), opts, gateway,
                                             default_cfg, role_cfgs)
                return tree, fleet_mod.tree_to_results(tree), []

            model = default_cfg.model_name
            features = {"n": n, "cot": opts.cot_enabled, "profile": opts.profile_enabled}
        else:
            sa_opts = baseline_mod.SuperAgentOptions(n=n, fd_max_attempts=fd_attempts)
            sa_cfg = (backend_config(config, "super_agent")
                      if "super_agent" in (config.get("backends") or {}) else default_cfg)

            def job(goal_row):
                project_id, goal_text, context = goal_row
                result = baseline_mod.run_super_agent(context, Goal(goal_text), sa_opts,
                                                      gateway, sa_cfg, fd_cfg)
                return result.tree, list(result.results), list(result.warnings)

            model = sa_cfg.model_name
            features = {"n": n, "cot": True, "profile": False}

        outcomes = _ordered_jobs(goals, job, int(config["workers"]))
        story_count = 0
        for index, ((project_id, goal_text, context), (status, payload)) in enumerate(
                zip(goals, outcomes)):
            entry = {"project_id": project_id, "goal": goal_text, "status": status}
            if status == "ok":
                tree, results, warnings = payload
                story_count += len(results)
                name = f"{index:03d}__{_slug(project_id, 24)}__{_slug(goal_text)}.json"
                _write_json(out / name, {
                    "method": method,
                    "model": model,
                    "features": features,
                    "project_id": project_id,
                    "goal": goal_text,
                    "context": project_context_to_obj(context),
                    "tree": fleet_mod.tree_to_obj(tree),
                    "results": [im_result_to_obj(r) for r in results],
                    "warnings": warnings,
                })
                entry["stories"] = len(results)
                entry["warnings"] = warnings
                entry["output"] = name
                manifest["artifacts"].append(name)
            else:
                entry["error"] = str(payload)
                exit_code = 1
            manifest["goals"].append(entry)
        manifest["counts"] = {
            "goals": len(goals),
            "ok": sum(1 for g in manifest["goals"] if g["status"] == "ok"),
            "failed": sum(1 for g in manifest["goals"] if g["status"] == "error"),
            "stories": story_count,
        }
        _write_jsonl(out / "exchanges.jsonl", gateway.export_log())
        manifest["artifacts"].append("exchanges.jsonl")
    except _SETUP_ERRORS as err:
        manifest["error"] = str(err)
        exit_code = 2
    finally:
        _finish_manifest(manifest, out)
    return exit_code


def cmd_run(args) -> int:
    return _run_generation(args, "fleet")


def cmd_baseline(args) -> int:
    return _run_generation(args, "super_agent")


def _load_result_files(results_dir: Path) -> list[dict]:
    if not results_dir.is_dir():
        raise ConfigError(f"results directory not found: {results_dir}")
    rows = []
    for path in sorted(results_dir.glob("*.json")):
        if path.name == "run_manifest.json":
            continue
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as err:
            raise DatasetError(f"result file {path.name} is not valid JSON: {err}") from err
        if not isinstance(obj, dict) or "results" not in obj or "goal" not in obj:
            continue
        stories = [user_story_from_obj(r["user_story"], path="user_story.")
                   for r in obj["results"]]
        rows.append({
            "source": path.name,
            "method": obj.get("method", ""),
            "model": obj.get("model", ""),
            "project_id": obj["project_id"],
            "goal": obj["goal"],
            "context": obj.get("context"),
            "stories": stories,
        })
    if not rows:
        raise DatasetError(f"no result files with stories under {results_dir}")
    return rows


def _unique_tag(rows: list[dict], key: str) -> str:
    values = {row[key] for row in rows if row.get(key)}
    return values.pop() if len(values) == 1 else "mixed"


def cmd_eval_fhr(args) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest_shell("eval-fhr", args)
    manifest["inputs"] = {"results": args.results, "dataset": args.dataset}
    exit_code = 0
    try:
        config = load_config(args.config)
        apply_overrides(config, args)
        manifest["config"] = config
        rows = _load_result_files(Path(args.results))
        dataset, _ = load_dataset(args.dataset)
        gateway = make_gateway(config)
        embedder = CachedEmbedder(gateway, backend_config(config, "embedder"))
        th = thresholds_from(config)
        runs = [(row["project_id"], row["goal"], row["stories"]) for row in rows]
        report = compute_fhr(runs, dataset, th, embedder)

        (out / "fhr_report.csv").write_text(fhr_to_csv(report), encoding="utf-8")
        method = _unique_tag(rows, "method")
        model = _unique_tag(rows, "model")
        (out / "fhr_report.md").write_text(
            fhr_to_markdown(report, method=method, model=model), encoding="utf-8")
        _write_jsonl(out / "fhr_evidence.jsonl",
                     [{"project_id": pid, **hit.to_obj()} for pid, hit in report.goal_reports])
        _write_json(out / "fhr_summary.json", {
            "method": method,
            "model": model,
            "thresholds": {"actor": th.actor, "action": th.action,
                           "expected_outcome": th.expected_outcome},
            "per_project": {
                pid: {"hits": p.hits, "total": p.total, "rate": p.rate}
                for pid, p in sorted(report.per_project.items())
            },
            "macro_mean": report.macro_mean,
            "micro_rate": report.micro_rate,
        })
        manifest["artifacts"] = ["fhr_report.csv", "fhr_report.md",
                                 "fhr_evidence.jsonl", "fhr_summary.json"]
        manifest["counts"] = {"goals": len(report.goal_reports),
                              "projects": len(report.per_project)}
    except _SETUP_ERRORS as err:
        manifest["error"] = str(err)
        exit_code = 2
    finally:
        _finish_manifest(manifest, out)
    return exit_code


def cmd_eval_quace(args) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest_shell("eval-quace", args)
    manifest["inputs"] = {"results": args.results}
    exit_code = 0
    try:
        config = load_config(args.config)
        apply_overrides(config, args)
        manifest["config"] = config
        rows = _load_result_files(Path(args.results))
        population = []
        for row in rows:
            if not isinstance(row.get("context"), dict):
                raise DatasetError(f"result file {row['source']} has no context block")
            context = project_context_from_obj(row["context"])
            for story_index, story in enumerate(row["stories"]):
                population.append({
                    "source": row["source"],
                    "story_index": story_index,
                    "project_id": row["project_id"],
                    "goal": row["goal"],
                    "context": context,
                    "story": story,
                })
        sample_size = args.sample_size
        seed = args.seed if args.seed is not None else 0
        warnings = []
        rng = random.Random(seed)
        if sample_size >= len(population):
            if sample_size > len(population):
                warnings.append(
                    f"sample size {sample_size} exceeds population {len(population)}; "
                    "evaluating all stories"
                )
            sampled = list(population)
        else:
            sampled = [population[i] for i in rng.sample(range(len(population)), sample_size)]

        gateway = make_gateway(config)
        judge_cfg = backend_config(config, "judge")
        verdict_rows = []
        failures = []
        scored = []
        for item in sampled:
            try:
                verdict = quace_evaluate(item["story"], item["context"], Goal(item["goal"]),
                                         judge_cfg, "generated", gateway)
            except Goal2StoryError as err:
                failures.append({"source": item["source"],
                                 "story_index": item["story_index"], "error": str(err)})
                continue
            scored.append(verdict)
            verdict_rows.append({
                "source": item["source"],
                "story_index": item["story_index"],
                "project_id": item["project_id"],
                "goal": item["goal"],
                **verdict.to_obj(),
            })
        _write_jsonl(out / "quace_verdicts.jsonl", verdict_rows)
        _write_json(out / "quace_summary.json", {
            "rate": quace_rate(scored) if scored else None,
            "scored": len(scored),
            "failures": failures,
            "sample_size": sample_size,
            "population": len(population),
            "seed": seed,
            "warnings": warnings,
        })
        _write_jsonl(out / "exchanges.jsonl", gateway.export_log())
        manifest["artifacts"] = ["quace_verdicts.jsonl", "quace_summary.json",
                                 "exchanges.jsonl"]
        manifest["counts"] = {"population": len(population), "scored": len(scored),
                              "failed": len(failures)}
        if failures:
            exit_code = 1
    except _SETUP_ERRORS as err:
        manifest["error"] = str(err)
        exit_code = 2
    finally:
        _finish_manifest(manifest, out)
    return exit_code


def cmd_build_dataset(args) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest_shell("build-dataset", args)
    manifest["inputs"] = {"raw": args.raw}
    exit_code = 0
    try:
        config = load_config(args.config)
        apply_overrides(config, args)
        manifest["config"] = config
        raw_records = load_raw_issues(args.raw)
        kept = filter_raw(raw_records)
        manifest["counts"] = {"raw": len(raw_records), "kept": len(kept),
                              "filtered_out": len(raw_records) - len(kept)}
        gateway = make_gateway(config)
        extractor_cfg = backend_config(config, "extractor")
        fd_cfg = (backend_config(config, "format_doctor")
                  if "format_doctor" in (config.get("backends") or {}) else extractor_cfg)
        fd_attempts = int(config["fleet"]["fd_max_attempts"])

        if args.cross_model:
            if "extractor_alt" not in (config.get("backends") or {}):
                raise ConfigError("--cross-model requires an 'extractor_alt' backend section")
            alt_cfg = backend_config(config, "extractor_alt")
            pairs = cross_model_extract(kept, extractor_cfg, alt_cfg, gateway,
                                        fd_cfg, fd_attempts)
            _write_jsonl(out / "pairs.jsonl", pairs)
            manifest["artifacts"] = ["pairs.jsonl"]
            manifest["counts"]["pairs"] = len(pairs)
        else:
            audit_dir = out / "audit"
            audit_dir.mkdir(exist_ok=True)
            outcomes = _ordered_jobs(
                kept,
                lambda rec: extract_im(rec, extractor_cfg, gateway, fd_cfg, fd_attempts),
                int(config["workers"]),
            )
            records = []
            failures = []
            for index, (status, payload) in enumerate(outcomes):
                if status == "ok":
                    records.append(payload.record)
                    _write_json(audit_dir / f"{index:04d}.json", payload.audit_obj())
                else:
                    failures.append({"record": index, "error": str(payload)})
            if records:
                save_dataset(records, out / "dataset.jsonl")
                _write_json(out / "manifest.json", build_manifest(records, {
                    "model_name": extractor_cfg.model_name,
                    "temperature": extractor_cfg.temperature,
                }).to_obj())
                manifest["artifacts"] = ["dataset.jsonl", "manifest.json", "audit/"]
            manifest["counts"]["extracted"] = len(records)
            manifest["counts"]["failed"] = len(failures)
            manifest["goals"] = failures
            if failures:
                exit_code = 1
        _write_jsonl(out / "exchanges.jsonl", gateway.export_log())
    except _SETUP_ERRORS as err:
        manifest["error"] = str(err)
        exit_code = 2
    finally:
        _finish_manifest(manifest, out)
    return exit_code


def cmd_check_dataset(args) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest_shell("check-dataset", args)
    manifest["inputs"] = {"dataset": args.dataset}
    exit_code = 0
    try:
        config = load_config(args.config)
        apply_overrides(config, args)
        manifest["config"] = config
        records, _ = load_dataset(args.dataset)
        gateway = make_gateway(config)
        judge_cfg = backend_config(config, "judge")
        summary = dataset_quality_check(records, judge_cfg, gateway)
        _write_jsonl(out / "quace_verdicts.jsonl",
                     [{"record": i, **v.to_obj()} for i, v in summary.verdicts])
        _write_json(out / "quace_summary.json", summary.to_obj())
        _write_jsonl(out / "exchanges.jsonl", gateway.export_log())
        manifest["artifacts"] = ["quace_verdicts.jsonl", "quace_summary.json",
                                 "exchanges.jsonl"]
        manifest["counts"] = {"records": len(records), "scored": len(summary.verdicts),
                              "failed": len(summary.failures)}
        if summary.failures:
            exit_code = 1
    except _SETUP_ERRORS as err:
        manifest["error"] = str(err)
        exit_code = 2
    finally:
        _finish_manifest(manifest, out)
    return exit_code


def _confusion_from_args(args) -> ConfusionTable:
    if args.counts_file:
        obj = json.loads(Path(args.counts_file).read_text(encoding="utf-8"))
        try:
            return ConfusionTable(tp=int(obj["tp"]), fn=int(obj["fn"]),
                                  fp=int(obj["fp"]), tn=int(obj["tn"]))
        except (KeyError, TypeError, ValueError) as err:
            raise ConfigError(f"counts file must carry integer tp/fn/fp/tn: {err}") from err
    counts = (args.tp, args.fn, args.fp, args.tn)
    if any(c is None for c in counts):
        raise ConfigError("provide --tp --fn --fp --tn or --counts-file")
    return ConfusionTable(tp=args.tp, fn=args.fn, fp=args.fp, tn=args.tn)


def cmd_alignment(args) -> int:
    out = Path(args.output) if args.output else None
    manifest = _manifest_shell("alignment", args)
    exit_code = 0
    try:
        ct = _confusion_from_args(args)
        report = alignment_metrics(ct)
        lines = alignment_report_lines(report)
        print("\n".join(lines))
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            _write_json(out / "alignment.json", {
                "counts": {"tp": ct.tp, "fn": ct.fn, "fp": ct.fp, "tn": ct.tn},
                "metrics": report.to_obj(),
            })
            (out / "alignment.md").write_text(
                "| Metric | Value |\n|---|---|\n"
                + "\n".join(f"| {line.split(': ')[0]} | {line.split(': ')[1]} |"
                            for line in lines)
                + "\n",
                encoding="utf-8",
            )
            manifest["artifacts"] = ["alignment.json", "alignment.md"]
    except (_SETUP_ERRORS + (json.JSONDecodeError,)) as err:
        manifest["error"] = str(err)
        print(f"error: {err}", file=sys.stderr)
        exit_code = 2
    finally:
        if out is not None:
            _finish_manifest(manifest, out)
    return exit_code


def cmd_report(args) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest_shell("report", args)
    manifest["inputs"] = {"inputs": args.inputs}
    exit_code = 0
    try:
        root = Path(args.inputs)
        if not root.is_dir():
            raise ConfigError(f"inputs directory not found: {root}")
        rows = []
        for summary_path in sorted(root.rglob("fhr_summary.json")):
            summary = json.loads(summary_path.read_text(encoding="utf-8"))
            quace = None
            quace_path = summary_path.parent / "quace_summary.json"
            if quace_path.is_file():
                quace = json.loads(quace_path.read_text(encoding="utf-8")).get("rate")
            rows.append({
                "method": summary.get("method", "-"),
                "model": summary.get("model", "-"),
                "per_project": summary.get("per_project", {}),
                "macro_mean": summary.get("macro_mean"),
                "quace": quace,
            })
        if not rows:
            raise DatasetError(f"no fhr_summary.json found under {root}")
        projects = sorted({pid for row in rows for pid in row["per_project"]})

        def pct(value):
            return "-" if value is None else f"{value * 100:.2f}%"

        header = ["Method", "Model", *projects, "Mean", "QuACE"]
        lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
        for row in sorted(rows, key=lambda r: (r["method"], r["model"])):
            cells = [row["method"], row["model"]]
            for pid in projects:
                entry = row["per_project"].get(pid)
                cells.append(pct(entry["rate"]) if entry else "-")
            cells.append(pct(row["macro_mean"]))
            cells.append(pct(row["quace"]))
            lines.append("| " + " | ".join(cells) + " |")
        table = "\n".join(lines) + "\n"
        (out / "report.md").write_text(table, encoding="utf-8")
        print(table, end="")
        manifest["artifacts"] = ["report.md"]
        manifest["counts"] = {"rows": len(rows), "projects": len(projects)}
    except (_SETUP_ERRORS + (json.JSONDecodeError,)) as err:
        manifest["error"] = str(err)
        exit_code = 2
    finally:
        _finish_manifest(manifest, out)
    return exit_code


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file (YAML or JSON)")
    common.add_argument("--output", help="output directory")
    common.add_argument("--seed", type=int, help="random seed where sampling applies")
    common.add_argument("--workers", type=int, help="per-goal worker cap")
    common.add_argument("--n", type=int, help="branching factor override")
    common.add_argument("--cot", action=argparse.BooleanOptionalAction, default=None,
                        help="toggle the reasoning scaffold")
    common.add_argument("--profile", action=argparse.BooleanOptionalAction, default=None,
                        help="toggle role personas")
    common.add_argument("--thresholds", help="actor,action,outcome similarity cutoffs")

    parser = argparse.ArgumentParser(
        prog="g2s",
        description="Goal-driven user story generation and evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="expand every dataset goal with the fleet")
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("baseline", parents=[common],
                       help="expand every dataset goal with the one-shot baseline")
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("eval-fhr", parents=[common], help="hit-rate evaluation of a results dir")
    p.add_argument("--results", required=True)
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_eval_fhr)

    p = sub.add_parser("eval-quace", parents=[common],
                       help="judge-based quality evaluation of sampled stories")
    p.add_argument("--results", required=True)
    p.add_argument("--sample-size", type=int, default=100)
    p.set_defaults(func=cmd_eval_quace)

    p = sub.add_parser("build-dataset", parents=[common],
                       help="construct dataset records from raw issue exports")
    p.add_argument("--raw", required=True)
    p.add_argument("--cross-model", action="store_true",
                   help="emit paired outputs from two extractor configs instead")
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("check-dataset", parents=[common],
                       help="judge every dataset record for quality")
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_check_dataset)

    p = sub.add_parser("alignment", parents=[common],
                       help="confusion-table alignment metrics")
    p.add_argument("--tp", type=int)
    p.add_argument("--fn", type=int)
    p.add_argument("--fp", type=int)
    p.add_argument("--tn", type=int)
    p.add_argument("--counts-file")
    p.set_defaults(func=cmd_alignment)

    p = sub.add_parser("report", parents=[common],
                       help="combine eval outputs into one method-by-model table")
    p.add_argument("--inputs", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command in ("run", "baseline", "eval-fhr", "eval-quace",
                        "build-dataset", "check-dataset", "report") and not args.output:
        print("error: --output is required", file=sys.stderr)
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
