"""Command-line experiment runner.

Each experiment is one UTF-8 JSON manifest. ``validate`` reports every
violated constraint, ``run`` writes a sweep CSV (plus a gap table when the
manifest carries a counterexample block) and a text summary, and
``summarize`` re-reads a CSV and prints the verdict.

Output is plain CSV with ``#`` comment lines; floats are written with
``repr`` so files are locale independent and bit-stable across reruns.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

from .agents import RateSchedule, schedule_check
from .counterexample import CounterexampleInstance, GapRow, inconsistency_report, transfer_family
from .distributions import SyntheticDistribution, from_dict
from .ensemble import ModelKind, RiskEstimate, convergence_sweep
from .errors import ConfigurationError, DistLearnError, ParseError

SWEEP_HEADER = ("n", "mean_risk", "std_error", "bayes_risk", "gap", "trials", "queries", "seed")
GAP_HEADER = ("rule", "n", "gap_P", "gap_Pprime", "max_gap")
EXPECTATIONS = ("convergent", "nonconvergent")
TREND_SIGMAS = 4.0
# a counterexample gap must keep this fraction of its smallest-n value
GAP_RETENTION = 0.8

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INVALID = 2
EXIT_IO = 3


@dataclass(frozen=True)
class ExperimentManifest:
    name: str
    model: ModelKind
    distribution: Optional[SyntheticDistribution]
    schedule: Optional[RateSchedule]
    n_list: tuple[int, ...]
    trials: int
    queries: int
    seed: int
    output: str
    expectation: str = "convergent"
    max_final_gap: Optional[float] = None
    allow_invalid_schedule: bool = False
    counterexample: Optional[CounterexampleInstance] = None
    transfer: Optional[str] = None
    aggregate: bool = True
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def sha256(self) -> str:
        return manifest_hash(self.raw)


def manifest_hash(raw: dict) -> str:
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_raw(path: str | os.PathLike) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read manifest {path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"manifest {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError("manifest must be a JSON object")
    return raw


def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def parse_manifest(raw: dict) -> tuple[Optional[ExperimentManifest], list[str]]:
    """Build a manifest, collecting every problem rather than stopping at the first."""
    errors: list[str] = []

    def need(key):
        if key not in raw:
            errors.append(f"missing required field '{key}'")
            return None
        return raw[key]

    name = raw.get("name", "experiment")
    output = raw.get("output", f"{name}.csv")

    model = None
    model_name = need("model")
    if model_name is not None:
        try:
            model = ModelKind(model_name)
        except ValueError:
            choices = ", ".join(m.value for m in ModelKind)
            errors.append(f"unknown model {model_name!r}; choose from {choices}")

    seed = need("seed")
    if seed is not None and not (_is_int(seed) and seed >= 0):
        errors.append(f"seed must be a non-negative integer, got {seed!r}")

    n_list = need("n_list")
    if n_list is not None:
        if not isinstance(n_list, list) or not n_list:
            errors.append("n_list must be a non-empty list")
        elif not all(_is_int(n) and n >= 1 for n in n_list):
            errors.append("n_list entries must be positive integers")
        elif any(b <= a for a, b in zip(n_list, n_list[1:])):
            errors.append("n_list must be strictly increasing")

    trials = raw.get("trials", 20)
    queries = raw.get("queries", 500)
    for key, v in (("trials", trials), ("queries", queries)):
        if not (_is_int(v) and v >= 1):
            errors.append(f"{key} must be a positive integer, got {v!r}")

    expectation = raw.get("expectation", "convergent")
    if expectation not in EXPECTATIONS:
        errors.append(f"expectation must be one of {EXPECTATIONS}, got {expectation!r}")

    tolerance = raw.get("tolerance", {})
    max_final_gap = tolerance.get("max_final_gap") if isinstance(tolerance, dict) else None
    if not isinstance(tolerance, dict):
        errors.append("tolerance must be an object")
    elif max_final_gap is not None and not isinstance(max_final_gap, (int, float)):
        errors.append(f"tolerance.max_final_gap must be a number, got {max_final_gap!r}")

    allow_invalid = raw.get("allow_invalid_schedule", False)
    if not isinstance(allow_invalid, bool):
        errors.append("allow_invalid_schedule must be true or false")
        allow_invalid = False

    instance = None
    if raw.get("counterexample") is not None:
        try:
            instance = CounterexampleInstance.from_dict(raw["counterexample"])
        except DistLearnError as exc:
            errors.append(f"counterexample: {exc}")

    dist = None
    if "distribution" in raw:
        try:
            dist = from_dict(raw["distribution"])
        except DistLearnError as exc:
            errors.append(f"distribution: {exc}")
        except (TypeError, AttributeError):
            errors.append("distribution must be an object")
    elif model is not ModelKind.REGRESS_NO_ABSTENTION:
        errors.append("missing required field 'distribution'")

    transfer = raw.get("transfer")
    if model is ModelKind.REGRESS_NO_ABSTENTION:
        if instance is None:
            errors.append(f"{model.value} sweeps need a counterexample block for the agent table")
        else:
            if dist is None:
                dist = instance.original
            names = [g.name for g in transfer_family(instance)]
            transfer = transfer or "linear"
            if transfer not in names:
                errors.append(f"unknown transfer {transfer!r}; choose from {', '.join(names)}")

    if model is not None and dist is not None and dist.label_space is not model.label_space:
        errors.append(
            f"label-space mismatch: {model.value} needs {model.label_space.value} labels, "
            f"distribution has {dist.label_space.value}"
        )

    schedule = None
    if model is not None and model.theorem is not None:
        sched_raw = need("schedule")
        if sched_raw is not None:
            try:
                schedule = RateSchedule(
                    r0=float(sched_raw["r0"]), beta=float(sched_raw["beta"]),
                    c0=float(sched_raw.get("c0", 1.0)), gamma=float(sched_raw.get("gamma", 0.0)),
                )
            except (KeyError, TypeError, ValueError) as exc:
                if isinstance(exc, ConfigurationError):
                    errors.append(f"schedule: {exc}")
                else:
                    errors.append(f"schedule needs numeric r0 and beta ({exc})")
        if schedule is not None and dist is not None and not allow_invalid:
            report = schedule_check(schedule, model.theorem, dist.dim)
            for statement in report.violations:
                errors.append(
                    f"schedule violates {model.theorem.value} condition {statement} "
                    f"(set allow_invalid_schedule=true to run anyway)"
                )

    if errors:
        return None, errors
    manifest = ExperimentManifest(
        name=str(name), model=model, distribution=dist, schedule=schedule,
        n_list=tuple(n_list), trials=trials, queries=queries, seed=seed, output=str(output),
        expectation=expectation, max_final_gap=None if max_final_gap is None else float(max_final_gap),
        allow_invalid_schedule=allow_invalid, counterexample=instance, transfer=transfer,
        aggregate=bool(raw.get("aggregate", True)), raw=raw,
    )
    return manifest, []


def validate(raw: dict) -> list[str]:
    """Every violated constraint of a parsed manifest; empty means valid."""
    return parse_manifest(raw)[1]


def load_manifest(path: str | os.PathLike) -> ExperimentManifest:
    manifest, errors = parse_manifest(load_raw(path))
    if errors:
        raise ConfigurationError("; ".join(errors))
    return manifest


# ---------------------------------------------------------------------------
# CSV writing and reading


def _fmt(v: Any) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def _comment_block(manifest: ExperimentManifest, kind: str) -> list[str]:
    lines = [
        f"# distlearn {kind}",
        f"# manifest_sha256={manifest.sha256}",
        f"# name={manifest.name}",
        f"# model={manifest.model.value}",
        f"# expectation={manifest.expectation}",
    ]
    if manifest.max_final_gap is not None:
        lines.append(f"# max_final_gap={manifest.max_final_gap!r}")
    if manifest.transfer is not None and kind == "sweep":
        lines.append(f"# transfer={manifest.transfer}")
    return lines


def _render(comments: list[str], header: Sequence[str], rows: list[Sequence[Any]]) -> str:
    buf = io.StringIO()
    for line in comments:
        buf.write(line + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def sweep_csv(manifest: ExperimentManifest, estimates: Sequence[RiskEstimate]) -> str:
    rows = [
        (e.n, e.mean_risk, e.std_error, e.bayes_risk, e.gap, e.trials, e.queries_per_trial, e.seed)
        for e in estimates
    ]
    return _render(_comment_block(manifest, "sweep"), SWEEP_HEADER, rows)


def gap_csv(manifest: ExperimentManifest, rows: Sequence[GapRow]) -> str:
    comments = _comment_block(manifest, "counterexample")
    comments.append(f"# irreducibility={manifest.counterexample.irreducibility!r}")
    body = [(r.rule, r.n, r.gap_P, r.gap_Pprime, r.max_gap) for r in rows]
    return _render(comments, GAP_HEADER, body)


@dataclass(frozen=True)
class ParsedCsv:
    kind: str
    meta: dict
    header: tuple[str, ...]
    rows: list[dict]


def read_csv(path: str | os.PathLike) -> ParsedCsv:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from exc
    meta: dict = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if sep:
                meta[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    if not body:
        raise ParseError(f"{path} contains no header row")
    reader = csv.reader(body)
    header = tuple(next(reader))
    if header == SWEEP_HEADER:
        kind = "sweep"
    elif header == GAP_HEADER:
        kind = "counterexample"
    else:
        raise ParseError(f"{path}: unrecognised header {','.join(header)}")
    rows = []
    for lineno, values in enumerate(reader, start=2):
        if len(values) != len(header):
            raise ParseError(f"{path}: row {lineno} has {len(values)} fields, expected {len(header)}")
        row = dict(zip(header, values))
        try:
            for key in header:
                if key in ("n", "trials", "queries", "seed"):
                    row[key] = int(row[key])
                elif key != "rule":
                    row[key] = float(row[key])
        except ValueError as exc:
            raise ParseError(f"{path}: row {lineno}: {exc}") from exc
        rows.append(row)
    if not rows:
        raise ParseError(f"{path} has a header but no data rows")
    return ParsedCsv(kind, meta, header, rows)


# ---------------------------------------------------------------------------
# verdicts


def trend(gaps: Sequence[float], ses: Sequence[float], k: float = TREND_SIGMAS) -> str:
    """Classify a gap sequence as decreasing, increasing or flat.

    Decreasing: the last gap is below the first by more than ``k`` combined
    standard errors and no step goes up by more than ``k`` of its own combined
    standard errors. Increasing is the mirror image on the end points.
    """
    if len(gaps) < 2:
        return "flat"
    tol = k * math.hypot(ses[0], ses[-1])
    drop = gaps[0] - gaps[-1]
    steps_ok = all(
        b - a <= k * math.hypot(sa, sb)
        for a, b, sa, sb in zip(gaps, gaps[1:], ses, ses[1:])
    )
    if drop > tol and steps_ok:
        return "decreasing"
    if -drop > tol:
        return "increasing"
    return "flat"


@dataclass(frozen=True)
class Summary:
    text: str
    passed: bool


def summarize_sweep(parsed: ParsedCsv) -> Summary:
    meta, rows = parsed.meta, parsed.rows
    gaps = [r["gap"] for r in rows]
    ses = [r["std_error"] for r in rows]
    verdict = trend(gaps, ses)
    expectation = meta.get("expectation", "convergent")
    max_gap = meta.get("max_final_gap")
    lines = [f"experiment: {meta.get('name', '?')} ({meta.get('model', '?')})"]
    lines.append(f"{'n':>10} {'mean_risk':>12} {'bayes_risk':>12} {'gap':>12} {'std_error':>12}")
    for r in rows:
        lines.append(
            f"{r['n']:>10d} {r['mean_risk']:>12.6f} {r['bayes_risk']:>12.6f} "
            f"{r['gap']:>12.6f} {r['std_error']:>12.6f}"
        )
    lines.append(f"first gap: {gaps[0]:.6f}  last gap: {gaps[-1]:.6f}")
    if expectation == "nonconvergent":
        passed = verdict != "decreasing"
        label = "expected-fail PASS" if passed else "FAIL (expected no convergence)"
    else:
        passed = verdict == "decreasing"
        if max_gap is not None:
            bound = float(max_gap)
            within = gaps[-1] <= bound
            lines.append(f"final gap {'<=' if within else '>'} tolerance {bound:g}")
            passed = passed and within
        label = "PASS" if passed else "FAIL"
    lines.append(f"trend: {verdict}, {label}")
    return Summary("\n".join(lines) + "\n", passed)


def summarize_gaps(parsed: ParsedCsv) -> Summary:
    floor = float(parsed.meta["irreducibility"]) if "irreducibility" in parsed.meta else 0.0
    by_rule: dict[str, list[dict]] = {}
    for r in parsed.rows:
        by_rule.setdefault(r["rule"], []).append(r)
    lines = [f"counterexample: {parsed.meta.get('name', '?')}  irreducibility {floor:.6f}"]
    lines.append(f"{'rule':>14} {'n':>8} {'gap_P':>10} {'gap_Pprime':>10} {'max_gap':>10}")
    passed = True
    for rule, rows in by_rule.items():
        base = rows[0]["max_gap"]
        for r in rows:
            ok = r["max_gap"] >= floor and r["max_gap"] >= GAP_RETENTION * base
            passed &= ok
            lines.append(
                f"{rule:>14} {r['n']:>8d} {r['gap_P']:>10.6f} {r['gap_Pprime']:>10.6f} "
                f"{r['max_gap']:>10.6f}{'' if ok else '  <-- below bound'}"
            )
    lines.append(f"gap non-vanishing: {'PASS' if passed else 'FAIL'}")
    return Summary("\n".join(lines) + "\n", passed)


def summarize(path: str | os.PathLike) -> Summary:
    parsed = read_csv(path)
    if parsed.kind == "sweep":
        return summarize_sweep(parsed)
    return summarize_gaps(parsed)


# ---------------------------------------------------------------------------
# orchestration


@dataclass(frozen=True)
class RunResult:
    sweep_path: Path
    summary_path: Path
    gap_path: Optional[Path]
    summary: Summary


def output_paths(manifest: ExperimentManifest, output_dir: Optional[str | os.PathLike]) -> tuple[Path, Path, Path]:
    out = Path(manifest.output)
    if output_dir is not None:
        out = Path(output_dir) / out.name
    stem = out.with_suffix("")
    return out, Path(f"{stem}_summary.txt"), Path(f"{stem}_counterexample.csv")


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def run(
    manifest: ExperimentManifest,
    output_dir: Optional[str | os.PathLike] = None,
    threads: int = 1,
) -> RunResult:
    sweep_path, summary_path, gap_path = output_paths(manifest, output_dir)
    kwargs: dict = {"aggregate": manifest.aggregate, "threads": threads}
    if manifest.model is ModelKind.REGRESS_NO_ABSTENTION:
        inst = manifest.counterexample
        kwargs["rule"] = inst.rule
        kwargs["transfer"] = next(g for g in transfer_family(inst) if g.name == manifest.transfer)
    estimates = convergence_sweep(
        manifest.model, manifest.distribution, manifest.schedule, manifest.n_list,
        manifest.trials, manifest.queries, manifest.seed, **kwargs,
    )
    sweep_text = sweep_csv(manifest, estimates)
    _write(sweep_path, sweep_text)
    summary = summarize_sweep(read_csv(sweep_path))
    text = summary.text

    written_gap = None
    if manifest.counterexample is not None:
        rows = inconsistency_report(
            manifest.counterexample, n_list=manifest.n_list, trials=manifest.trials, seed=manifest.seed
        )
        _write(gap_path, gap_csv(manifest, rows))
        gap_summary = summarize_gaps(read_csv(gap_path))
        text += "\n" + gap_summary.text
        summary = Summary(text, summary.passed and gap_summary.passed)
        written_gap = gap_path
    _write(summary_path, text)
    return RunResult(sweep_path, summary_path, written_gap, summary)


# ---------------------------------------------------------------------------
# entry point


def _positive_int(value: str) -> int:
    try:
        k = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {value!r}") from None
    if k < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return k


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="distlearn", description="Simulate one-bit distributed learning ensembles."
    )
    parser.add_argument(
        "--threads", type=_positive_int, default=os.cpu_count() or 1,
        help="worker threads for trials (default: hardware count; results do not depend on it)",
    )
    parser.add_argument("--output-dir", default=None, help="directory for CSV and summary files")
    sub = parser.add_subparsers(dest="verb", required=True)
    p = sub.add_parser("validate", help="check a manifest and list every violated constraint")
    p.add_argument("manifest")
    p = sub.add_parser("run", help="run the sweep described by a manifest")
    p.add_argument("manifest")
    p = sub.add_parser("summarize", help="print the gap table and verdict for a results CSV")
    p.add_argument("csv")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    out, err = sys.stdout, sys.stderr

    if args.verb == "summarize":
        try:
            summary = summarize(args.csv)
        except ParseError as exc:
            print(f"parse error: {exc}", file=err)
            return EXIT_INVALID
        out.write(summary.text)
        return EXIT_OK if summary.passed else EXIT_FAIL

    try:
        raw = load_raw(args.manifest)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_INVALID
    manifest, errors = parse_manifest(raw)
    if errors:
        for e in errors:
            print(f"error: {e}", file=err)
        return EXIT_INVALID
    if args.verb == "validate":
        return EXIT_OK

    try:
        result = run(manifest, args.output_dir, args.threads)
    except OSError as exc:
        print(f"I/O error: {exc}", file=err)
        return EXIT_IO
    except DistLearnError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_INVALID
    out.write(result.summary.text)
    print(f"wrote {result.sweep_path}", file=out)
    if result.gap_path is not None:
        print(f"wrote {result.gap_path}", file=out)
    print(f"wrote {result.summary_path}", file=out)
    return EXIT_OK
