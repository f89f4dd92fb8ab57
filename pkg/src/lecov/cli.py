"""Operator-facing commands: calibrate, measure, prioritize, fuzz, report.

Commands compose through files (trace files -> bounds -> reports); every
command is deterministic under fixed inputs and seeds, writes its output
atomically, and never mutates its inputs. Exit codes: 0 success, 1 usage,
2 data error, 3 runner/judge failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

from . import calibration, coverage, harness, prioritizer
from .mutator import SynonymProvider
from .trace import TraceDecodeError, read_traces

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNNER = 3

log = logging.getLogger("lecov")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _atomic_write(path: str, text: str) -> None:
    out = Path(path)
    fd, tmp = tempfile.mkstemp(dir=out.parent or Path("."), prefix=out.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fp:
            fp.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _load_corpus(paths: list[str]):
    traces = []
    for path in paths:
        if not Path(path).exists():
            raise DataError(f"trace file not found: {path}")
        with open(path, encoding="utf-8") as fp:
            try:
                traces.extend(read_traces(fp))
            except TraceDecodeError as e:
                raise DataError(f"{path}: {e}") from e
    if not traces:
        raise DataError(f"no traces found in {', '.join(paths)}")
    return traces


def _load_bounds(path: str):
    if not Path(path).exists():
        raise DataError(f"bounds file not found: {path}")
    try:
        return calibration.load_bounds(Path(path).read_text(encoding="utf-8"))
    except calibration.CalibrationError as e:
        raise DataError(f"{path}: {e}") from e


def _criteria_config(args) -> coverage.CriteriaConfig:
    try:
        return coverage.CriteriaConfig(
            k_sections=args.k,
            h_threshold=args.h,
            itnc_k=args.itnc_k,
            fhnc_r=args.fhnc_r,
        )
    except coverage.CoverageError as e:
        raise UsageError(str(e)) from e


def _criterion(name: str) -> coverage.CriterionId:
    try:
        return coverage.CriterionId(name.upper())
    except ValueError:
        raise UsageError(f"unknown criterion {name!r}") from None


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--k", type=int, default=50, help="section count for multisection criteria")
    p.add_argument("--h", type=float, default=0.0, help="hyperactivation threshold")
    p.add_argument("--itnc-k", type=int, default=4, help="top-k rank depth")
    p.add_argument("--fhnc-r", type=int, default=2, help="frequency threshold")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lecov", description="Coverage criteria for generative-model testing")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="derive bounds from a profiling trace corpus")
    p.add_argument("--traces", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--percentiles", default=None,
                   help="lo,hi fractions for percentile bounds (default: min/max)")

    p = sub.add_parser("measure", help="compute coverage of a trace corpus")
    p.add_argument("--traces", nargs="+", required=True)
    p.add_argument("--bounds", required=True)
    _add_config_flags(p)
    p.add_argument("--criterion", default="all", help="one of the nine ids, or 'all'")
    p.add_argument("--out", required=True)

    p = sub.add_parser("prioritize", help="rank test cases by singleton coverage")
    p.add_argument("--traces", nargs="+", required=True)
    p.add_argument("--bounds", required=True)
    _add_config_flags(p)
    p.add_argument("--criterion", required=True)
    p.add_argument("--budget-fraction", type=float, required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--greedy-marginal", action="store_true",
                   help="score by marginal gain against the scored prefix")
    p.add_argument("--out", required=True)

    p = sub.add_parser("fuzz", help="coverage-guided mutation testing campaign")
    p.add_argument("--seeds", required=True, help="file with one seed prompt per line")
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--runner", required=True, help="model-runner command line")
    p.add_argument("--judge", required=True, help="keyword:<kw,...> or exactmatch:<path>")
    p.add_argument("--criterion", required=True)
    p.add_argument("--bounds", required=True)
    _add_config_flags(p)
    p.add_argument("--rng-seed", type=int, required=True)
    p.add_argument("--random-mode", action="store_true",
                   help="replace the coverage admission test with a coin flip")
    p.add_argument("--requeue-defects", action="store_true")
    p.add_argument("--mutations-per-step", type=int, default=1)
    p.add_argument("--synonyms", default=None, help="synonym file (default: bundled list)")
    p.add_argument("--runner-timeout", type=float, default=120.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="render a report file human-readably")
    p.add_argument("--in", dest="input", required=True)

    return parser


def cmd_calibrate(args) -> int:
    traces = _load_corpus(args.traces)
    percentiles = None
    if args.percentiles:
        try:
            lo, hi = (float(v) for v in args.percentiles.split(","))
        except ValueError:
            raise UsageError("--percentiles expects 'lo,hi'") from None
        percentiles = (lo, hi)
    try:
        bounds = calibration.profile_bounds(traces, percentiles=percentiles)
    except calibration.CalibrationError as e:
        raise DataError(str(e)) from e
    _atomic_write(args.out, calibration.save_bounds(bounds) + "\n")
    unobserved = bounds.unobserved_keys()
    if unobserved:
        log.warning("%d keys had zero observations: %s", len(unobserved), unobserved[:8])
    log.info("wrote bounds for %s to %s", bounds.topology, args.out)
    return EXIT_OK


def cmd_measure(args) -> int:
    config = _criteria_config(args)
    if args.criterion.lower() != "all":
        _criterion(args.criterion)
    traces = _load_corpus(args.traces)
    bounds = _load_bounds(args.bounds)
    state = coverage.init_state(bounds, config)
    try:
        for trace in traces:
            coverage.ingest(state, trace)
    except coverage.CoverageError as e:
        raise DataError(str(e)) from e
    rep = coverage.report(state)
    if args.criterion.lower() != "all":
        cid = _criterion(args.criterion)
        rep["criteria"] = {cid.value: rep["criteria"][cid.value]}
    rep["kind"] = "coverage"
    _atomic_write(args.out, json.dumps(rep, indent=1, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_prioritize(args) -> int:
    config = _criteria_config(args)
    cid = _criterion(args.criterion)
    traces = _load_corpus(args.traces)
    bounds = _load_bounds(args.bounds)
    pool = [(t.prompt_id, t) for t in traces]
    try:
        if args.greedy_marginal:
            scores = prioritizer.greedy_marginal_scores(pool, bounds, config, cid)
        else:
            scores = [
                (pid, prioritizer.score_case(t, bounds, config, cid)) for pid, t in pool
            ]
        scored = prioritizer.rank(scores, args.budget_fraction)
    except (coverage.CoverageError, prioritizer.PrioritizationError) as e:
        raise DataError(str(e)) from e
    rep = {
        "kind": "prioritization",
        "criterion": cid.value,
        "budget_fraction": args.budget_fraction,
        "scores": {pid: s for pid, s in sorted(scores)},
        "selected": [
            {"prompt_id": c.prompt_id, "rank": c.rank, "raw_score": c.raw_score,
             "normalized_score": c.normalized_score}
            for c in scored
        ],
    }
    if args.labels:
        if not Path(args.labels).exists():
            raise DataError(f"labels file not found: {args.labels}")
        try:
            labels = prioritizer.parse_labels(Path(args.labels).read_text(encoding="utf-8"))
            result = prioritizer.evaluate(scored, labels, args.budget_fraction)
        except prioritizer.PrioritizationError as e:
            raise DataError(str(e)) from e
        rep["mae"] = result.mae
        rep["mse"] = result.mse
    _atomic_write(args.out, json.dumps(rep, indent=1, sort_keys=True) + "\n")
    return EXIT_OK


def _parse_judge(spec: str) -> harness.Judge:
    kind, _, rest = spec.partition(":")
    if kind == "keyword" and rest:
        return harness.KeywordJudge(tuple(rest.split(",")))
    if kind == "exactmatch" and rest:
        if not Path(rest).exists():
            raise DataError(f"expected-answers file not found: {rest}")
        expected = {}
        for line in Path(rest).read_text(encoding="utf-8").splitlines():
            if line.strip():
                prompt, _, answer = line.partition("\t")
                expected[prompt] = answer
        return harness.ExactMatchJudge(expected)
    raise UsageError(f"unknown judge spec {spec!r}; use keyword:<kw,..> or exactmatch:<path>")


def cmd_fuzz(args) -> int:
    config = _criteria_config(args)
    cid = _criterion(args.criterion)
    if not Path(args.seeds).exists():
        raise DataError(f"seeds file not found: {args.seeds}")
    seeds = [l for l in Path(args.seeds).read_text(encoding="utf-8").splitlines() if l.strip()]
    if not seeds:
        raise DataError(f"no seeds in {args.seeds}")
    bounds = _load_bounds(args.bounds)
    judge = _parse_judge(args.judge)
    provider = (
        SynonymProvider.from_file(args.synonyms) if args.synonyms else SynonymProvider.bundled()
    )
    try:
        with harness.SubprocessRunner(args.runner, timeout=args.runner_timeout) as runner:
            _, campaign = harness.run_cgt(
                seeds=seeds,
                budget=args.budget,
                model=runner,
                judge=judge,
                criterion=cid,
                config=config,
                bounds=bounds,
                rng_seed=args.rng_seed,
                guided=not args.random_mode,
                requeue_defects=args.requeue_defects,
                mutations_per_step=args.mutations_per_step,
                provider=provider,
            )
    except harness.RunnerError as e:
        log.error("runner failure: %s", e)
        return EXIT_RUNNER
    rep = campaign.to_dict()
    rep["kind"] = "campaign"
    _atomic_write(args.out, json.dumps(rep, indent=1, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_report(args) -> int:
    if not Path(args.input).exists():
        raise DataError(f"report file not found: {args.input}")
    try:
        rep = json.loads(Path(args.input).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"{args.input}: not valid JSON: {e}") from e
    kind = rep.get("kind")
    out = sys.stdout
    if kind == "coverage":
        out.write(f"Coverage report ({rep['ingested_traces']} traces)\n")
        for name, entry in sorted(rep["criteria"].items()):
            out.write(
                f"  {name}: {entry['value']:.4f} ({entry['covered']}/{entry['total']})\n"
            )
        out.write(f"  out-of-range observations: {rep['out_of_range_observations']}\n")
    elif kind == "prioritization":
        out.write(
            f"Prioritization ({rep['criterion']}, budget {rep['budget_fraction']:.0%}): "
            f"{len(rep['selected'])} selected\n"
        )
        for c in rep["selected"][:20]:
            out.write(f"  #{c['rank']:>3} {c['prompt_id']}  score={c['raw_score']:.4f}\n")
        if "mae" in rep:
            out.write(f"  MAE={rep['mae']:.4f} MSE={rep['mse']:.4f}\n")
    elif kind == "campaign":
        out.write(
            f"Campaign: budget={rep['budget']} criterion={rep['criterion']} "
            f"mode={rep['mode']} seed={rep['rng_seed']}\n"
        )
        out.write(f"  defects found: {len(rep['defects'])}  TSR={rep['tsr']:.4f}\n")
        for d in rep["defects"][:10]:
            out.write(f"  [{d['case_id']}] via {d['operator']}: {d['text'][:70]}\n")
    else:
        raise DataError(f"unrecognized report kind {kind!r}")
    return EXIT_OK


_COMMANDS = {
    "calibrate": cmd_calibrate,
    "measure": cmd_measure,
    "prioritize": cmd_prioritize,
    "fuzz": cmd_fuzz,
    "report": cmd_report,
}


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("LECOV_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
