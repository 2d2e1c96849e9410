"""Command-line entry point: ``studentsim {simulate,ablate,analyze,validate,derive,personas}``.

Exit codes: 0 success, 1 fatal error (bad config, unreadable input), 2 partial
success (some agents failed; the rest of the outputs are written).
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

from . import __version__
from .agent.engine import AgentRun, agent_seed, run_experiment1, run_experiment2
from .agent.prompts import ABLATIONS, SimulationConfig, template_hash
from .dataset import (
    FormatError,
    StudentRecord,
    dumps_line,
    export_cohort,
    load_cohort,
    load_lecture,
    load_raw_samples,
    record_from_raw,
)
from .llm.provider import ConfigError, ProviderConfig, RateLimiter, make_provider
from .metrics import (
    correlation_matrix,
    replay_scores,
    write_correlation_csv,
    write_scores_csv,
    write_summary_csv,
)
from .model import AnswerRecord, Lecture
from .persona import PersonaProfile, sample_persona

log = logging.getLogger("studentsim")

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL = 0, 1, 2

PRIOR_FLAGS = {"cognitive": "cognitive_priors", "standard": "standard"}

# (cell name, prior flag, ablation): prior style crossed with memory-layer removal
ABLATION_GRID = (
    ("all_priors", "cognitive", "none"),
    ("all_standard", "standard", "none"),
    ("xM", "cognitive", "M"),
    ("xP", "cognitive", "P"),
    ("xC", "cognitive", "C"),
    ("xD", "cognitive", "D"),
)


@dataclass
class RunConfig:
    lecture: Optional[str] = None
    mode: str = "experiment2"
    cohort_size: Optional[int] = None
    records: Optional[str] = None
    prior: str = "cognitive"
    ablate: str = "none"
    seed: int = 0
    workers: int = 4
    out: Optional[str] = None
    logs: bool = True
    provider: ProviderConfig = field(default_factory=ProviderConfig)

    def validate(self, command: str = "simulate") -> None:
        if not self.lecture:
            raise ConfigError("lecture", "a lecture file is required")
        if not self.out:
            raise ConfigError("out", "an output directory is required")
        if self.mode not in ("experiment1", "experiment2"):
            raise ConfigError("mode", f"must be experiment1 or experiment2, got {self.mode!r}")
        if self.prior not in PRIOR_FLAGS:
            raise ConfigError("prior", f"must be one of {sorted(PRIOR_FLAGS)}")
        if self.ablate not in ABLATIONS:
            raise ConfigError("ablate", f"must be one of {list(ABLATIONS)}")
        if self.workers < 1:
            raise ConfigError("workers", "must be >= 1")
        if command == "ablate" or self.mode == "experiment1":
            if not self.records:
                raise ConfigError("records", "experiment1 needs a real-student records file (--records)")
        elif self.cohort_size is None or self.cohort_size < 1:
            raise ConfigError("cohort_size", "experiment2 needs --cohort-size >= 1")

    def simulation_config(self, prior: Optional[str] = None, ablate: Optional[str] = None) -> SimulationConfig:
        return SimulationConfig.with_ablation(
            ablate or self.ablate,
            prior_mode=PRIOR_FLAGS[prior or self.prior],
            seed=self.seed,
            temperature=self.provider.temperature,
            max_tokens=self.provider.max_tokens,
            model_name=self.provider.model,
        )

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["provider"] = self.provider.to_dict()
        return d


_RUN_KEYS = {f for f in RunConfig.__dataclass_fields__ if f != "provider"}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge an optional JSON config file with command-line flags (flags win)."""
    raw: dict[str, Any] = {}
    if getattr(args, "config", None):
        try:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", f"cannot read {args.config}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config", "top level must be a JSON object")
    provider_raw = dict(raw.pop("provider", {}) or {})
    for k in raw:
        if k not in _RUN_KEYS:
            raise ConfigError(k, "unknown config key")
    flag_map = {
        "lecture": "lecture",
        "mode": "mode",
        "cohort_size": "cohort_size",
        "records": "records",
        "prior": "prior",
        "ablate": "ablate",
        "seed": "seed",
        "workers": "workers",
        "out": "out",
    }
    for attr, key in flag_map.items():
        v = getattr(args, attr, None)
        if v is not None:
            raw[key] = v
    if getattr(args, "no_logs", False):
        raw["logs"] = False
    if getattr(args, "provider", None):
        provider_raw["kind"] = args.provider
    if getattr(args, "model", None):
        provider_raw["model"] = args.model
    if getattr(args, "temperature", None) is not None:
        provider_raw["temperature"] = args.temperature
    try:
        provider = ProviderConfig.from_dict(provider_raw)
    except TypeError as exc:
        raise ConfigError("provider", str(exc)) from None
    return RunConfig(**raw, provider=provider)


def _sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_logs(runs: Sequence[AgentRun], out: Path) -> None:
    logdir = out / "logs"
    logdir.mkdir(parents=True, exist_ok=True)
    for run in runs:
        with open(logdir / f"agent_{run.agent_index:04d}.jsonl", "w", encoding="utf-8") as fh:
            for ex in run.exchanges:
                fh.write(dumps_line({"student_id": run.student_id, **ex}) + "\n")


def _write_manifest(
    out: Path,
    command: str,
    cfg: RunConfig,
    sim: SimulationConfig,
    provider_identity: str,
    runs: Sequence[AgentRun],
    exit_code: int,
    extra: Optional[dict[str, Any]] = None,
) -> None:
    config = cfg.to_dict()
    config.pop("out")
    manifest = {
        "tool": "studentsim",
        "version": __version__,
        "command": command,
        "created_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "config": config,
        "simulation": asdict(sim),
        "template_version": sim.template_version,
        "template_hash": template_hash(sim.template_version),
        "provider": provider_identity,
        "inputs": {
            "lecture_sha256": _sha256_file(cfg.lecture),
            "records_sha256": _sha256_file(cfg.records) if cfg.records else None,
        },
        "seeds": {"top_level": cfg.seed, "agents": [r.seed for r in runs], "derivation": "seed XOR agent_index"},
        "agents": [r.accounting() for r in runs],
        "exit_code": exit_code,
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _score_runs(runs: Sequence[AgentRun], truth: Sequence[StudentRecord], lecture: Lecture, path: Path) -> dict:
    by_id = {r.student_id: r for r in truth}
    scores = {run.student_id: replay_scores(run.record, by_id[run.student_id], lecture) for run in runs if run.ok}
    return write_scores_csv(scores, path)


def _execute(
    cfg: RunConfig,
    lecture: Lecture,
    truth: Optional[list[StudentRecord]],
    sim: SimulationConfig,
    out: Path,
    command: str,
) -> tuple[int, Optional[dict]]:
    out.mkdir(parents=True, exist_ok=True)
    limiter = RateLimiter(cfg.provider.requests_per_minute) if cfg.provider.kind == "remote" else None
    provider = make_provider(cfg.provider, limiter)
    if truth is not None:
        runs = run_experiment1(lecture, truth, sim, provider, workers=cfg.workers)
    else:
        assert cfg.cohort_size is not None
        runs = run_experiment2(lecture, cfg.cohort_size, sim, provider, workers=cfg.workers)
    ok = [r for r in runs if r.ok]
    export_cohort([r.record for r in ok], out / "cohort.jsonl")
    means = None
    if truth is not None:
        means = _score_runs(runs, truth, lecture, out / "scores.csv")
    if cfg.logs:
        _write_logs(runs, out)
    code = EXIT_OK if len(ok) == len(runs) else EXIT_PARTIAL
    for r in runs:
        if not r.ok:
            print(f"agent {r.student_id} failed: {r.error}", file=sys.stderr)
    _write_manifest(out, command, cfg, sim, provider.identity, runs, code)
    return code, means


def _load_inputs(cfg: RunConfig, need_truth: bool) -> tuple[Lecture, Optional[list[StudentRecord]]]:
    lecture = load_lecture(cfg.lecture)
    truth = load_cohort(cfg.records, lecture) if need_truth else None
    return lecture, truth


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    cfg.validate("simulate")
    lecture, truth = _load_inputs(cfg, cfg.mode == "experiment1")
    code, _ = _execute(cfg, lecture, truth, cfg.simulation_config(), Path(cfg.out), "simulate")
    return code


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    cfg.mode = "experiment1"
    cfg.validate("ablate")
    lecture, truth = _load_inputs(cfg, True)
    out = Path(cfg.out)
    worst = EXIT_OK
    table = []
    for cell, prior, ablate in ABLATION_GRID:
        sim = cfg.simulation_config(prior, ablate)
        code, means = _execute(cfg, lecture, truth, sim, out / cell, "ablate")
        worst = max(worst, code)
        table.append((cell, prior, sim.ablation_label, means or {}))
    metrics = sorted({m for *_, means in table for m in means}, key=lambda m: list(table[0][3]).index(m))
    with open(out / "comparison.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["cell", "prior", "components", *metrics])
        for cell, prior, label, means in table:
            w.writerow([cell, prior, label, *(_fmt(means.get(m, math.nan)) for m in metrics)])
    return worst


def _fmt(v: float) -> str:
    return "NA" if math.isnan(v) else f"{v:.6f}"


def cmd_analyze(args: argparse.Namespace) -> int:
    lecture = load_lecture(args.lecture)
    cohort = load_cohort(args.cohort, lecture)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.truth:
        truth = {r.student_id: r for r in load_cohort(args.truth, lecture)}
        missing = [r.student_id for r in cohort if r.student_id not in truth]
        if missing:
            raise ConfigError("truth", f"no ground truth for students {missing[:5]}")
        scores = {r.student_id: replay_scores(r, truth[r.student_id], lecture) for r in cohort}
        write_scores_csv(scores, out / "scores.csv")
    else:
        write_summary_csv(cohort, lecture, out / "summary.csv")
        matrix = correlation_matrix(cohort, lecture, include_gender=args.include_gender)
        write_correlation_csv(matrix, out / "correlation.csv")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    lecture = load_lecture(args.lecture)
    n = len(lecture.slides)
    msg = [f"lecture ok: {n} slides, {sum(len(s.transcripts) for s in lecture.slides)} transcripts"]
    if args.cohort:
        msg.append(f"cohort ok: {len(load_cohort(args.cohort, lecture))} records")
    if args.raw:
        raw = load_raw_samples(args.raw)
        for sid, samples in raw.items():
            record_from_raw(lecture, sid, samples)
        msg.append(f"raw samples ok: {len(raw)} students")
    print("\n".join(msg))
    return EXIT_OK


def _load_keyed_jsonl(path: str) -> list[dict[str, Any]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise FormatError(path, lineno, f"invalid JSON: {exc.msg}") from None
    return rows


def cmd_derive(args: argparse.Namespace) -> int:
    lecture = load_lecture(args.lecture)
    raw = load_raw_samples(args.raw)
    personas: dict[str, PersonaProfile] = {}
    if args.personas:
        for row in _load_keyed_jsonl(args.personas):
            personas[str(row["student_id"])] = PersonaProfile.from_dict(row)
    answers: dict[str, list[AnswerRecord]] = {}
    if args.answers:
        for row in _load_keyed_jsonl(args.answers):
            q = lecture.question(str(row["question_id"]))
            answers.setdefault(str(row["student_id"]), []).append(AnswerRecord.grade(q, str(row["chosen"])))
    records = [
        record_from_raw(lecture, sid, raw[sid], personas.get(sid), answers.get(sid, ())) for sid in sorted(raw)
    ]
    export_cohort(records, args.out)
    print(f"wrote {len(records)} records to {args.out}")
    return EXIT_OK


def cmd_personas(args: argparse.Namespace) -> int:
    with open(args.out, "w", encoding="utf-8") as fh:
        for i in range(args.count):
            p = sample_persona(agent_seed(args.seed, i))
            fh.write(dumps_line({"student_id": f"virtual-{i:04d}", **p.to_dict()}) + "\n")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # usage errors are fatal (1), not partial (2)
        self.print_usage(sys.stderr)
        self.exit(EXIT_FATAL, f"{self.prog}: error: {message}\n")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file mirroring the run configuration; flags override it")
    p.add_argument("--lecture")
    p.add_argument("--mode", choices=["experiment1", "experiment2"])
    p.add_argument("--cohort-size", dest="cohort_size", type=int)
    p.add_argument("--records", help="real-student records (students.jsonl) for experiment1")
    p.add_argument("--prior", choices=sorted(PRIOR_FLAGS))
    p.add_argument("--ablate", choices=list(ABLATIONS))
    p.add_argument("--provider", choices=["remote", "mock"])
    p.add_argument("--model")
    p.add_argument("--temperature", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.add_argument("--no-logs", dest="no_logs", action="store_true", help="skip prompt/response logs")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="studentsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run experiment1 (replay) or experiment2 (virtual cohort)")
    _add_run_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ablate", help="run the six-cell prior/memory ablation grid on experiment1")
    _add_run_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("analyze", help="replay scores (with --truth) or summary + correlation CSVs")
    p.add_argument("--lecture", required=True)
    p.add_argument("--cohort", required=True)
    p.add_argument("--truth")
    p.add_argument("--out", required=True)
    p.add_argument("--include-gender", dest="include_gender", action="store_true")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("validate", help="check lecture / cohort / raw sample files")
    p.add_argument("--lecture", required=True)
    p.add_argument("--cohort")
    p.add_argument("--raw")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("derive", help="turn raw per-second recordings into per-transcript student records")
    p.add_argument("--lecture", required=True)
    p.add_argument("--raw", required=True)
    p.add_argument("--personas")
    p.add_argument("--answers")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("personas", help="sample a persona file")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_personas)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: invalid config key {exc}", file=sys.stderr)
    except FormatError as exc:
        print(f"error: {exc.path} line {exc.line}: {exc.message}", file=sys.stderr)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
