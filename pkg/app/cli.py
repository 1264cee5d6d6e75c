"""Command line entry point ``atm`` (``python -m app.cli``).

Data goes to stdout, diagnostics and the resolved configuration to stderr.
"""
import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Sequence

from pydantic import BaseModel

from app.config import configure_logging, settings
from app.errors import USAGE_EXIT_CODE, AtmError, exit_code_table
from app.models.schemas import CliConfig, StatsResponse
from app.services.analysis import MonoidAnalysis, resolve_presentation
from app.services.storage import StorageService

logger = logging.getLogger("atm")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT_CODE, f"{self.prog}: error: {message}\n")


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "%.15g" % value
    if isinstance(value, (list, tuple)):
        return " ".join(_fmt(v) for v in value)
    return str(value)


def _key_values(model: BaseModel, exclude: set[str] = frozenset()) -> list[str]:
    return [f"{key}={_fmt(value)}" for key, value in model.model_dump(exclude=exclude).items()]


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("spec", nargs="?", help="monoid spec file")
    common.add_argument("--family", help="named family: braid:4, heap:a-b,c, dihedral:5, free:3, dual-a:4, free-product:X,Y")
    common.add_argument("--seed", type=int, default=None, help=f"random seed (default {settings.SEED})")
    common.add_argument("--threads", type=int, default=None, help="worker threads (0 = available parallelism)")
    common.add_argument("--tol", type=float, default=None, help=f"spectral tolerance (default {settings.TOL})")
    common.add_argument("--max-iter", type=int, default=None, help=f"iteration cap (default {settings.MAX_ITER})")
    common.add_argument("--cap", type=int, default=None, help=f"Garside closure size cap (default {settings.GARSIDE_CAP})")
    common.add_argument("--json", action="store_true", help="print the report as one JSON document")
    common.add_argument("--log-level", default=None, help="logging level for stderr diagnostics")

    parser = _Parser(
        prog="atm",
        description="Garside structure, Möbius inversion, boundary measures and limit laws of Artin-Tits monoids.",
        epilog=exit_code_table(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    sub.add_parser("analyze", parents=[common], help="simples, sphericity, FC, irreducibility, μ, p0, λ, κ, axioms")

    p = sub.add_parser("normal-form", parents=[common], help="normal sequence and height of a word")
    p.add_argument("--word", required=True, help="generator string; '.' separates multi-character symbols; e for the unit")

    p = sub.add_parser("garside", parents=[common], help="the Garside set S and the arrow relation")
    p.add_argument("--dump", action="store_true", help="list S and the arrow edges")
    p.add_argument("--dump-matrix", action="store_true", help="CWG matrix in coordinate format")
    p.add_argument("--valuation", help="valuation for --dump-matrix, e.g. a=1/3,b=2/3")

    p = sub.add_parser("mobius", parents=[common], help="Möbius polynomial, p0 and growth coefficients")
    p.add_argument("--valuation", help="weights per generator, e.g. a=1/3,b=2/3")
    p.add_argument("--k-max", type=int, default=10, help="last growth coefficient")

    p = sub.add_parser("measure", parents=[common], help="sample boundary prefixes")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--valuation", help="valuation normalised to its Möbius valuation")
    group.add_argument("--uniform", action="store_true", help="uniform measure (default)")
    p.add_argument("--prefix", type=int, default=3, help="number of normal-form blocks per sample")
    p.add_argument("--count", type=int, default=10)

    p = sub.add_parser("sample", parents=[common], help="exact samples of length k")
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--valuation")

    p = sub.add_parser("stats", parents=[common], help="concentration and CLT experiment")
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--stat", default="height", help="height | count:<generator> | alternating")
    p.add_argument("--valuation")
    p.add_argument("--out", help="CSV report path (a .jsonl sidecar is written next to it)")
    p.add_argument("--record", action="store_true", help="record the run in the experiment database")
    return parser


def resolve_config(args: argparse.Namespace) -> CliConfig:
    """Apply flag overrides to the settings and return the resolved configuration."""
    if args.tol is not None:
        settings.TOL = args.tol
    if args.max_iter is not None:
        settings.MAX_ITER = args.max_iter
    if args.cap is not None:
        settings.GARSIDE_CAP = args.cap
    if args.threads is not None:
        settings.THREADS = args.threads
    if args.family is not None:
        source = f"family:{args.family}"
    else:
        source = args.spec or "none"
    return CliConfig(
        subcommand=args.subcommand,
        spec_source=source,
        valuation=getattr(args, "valuation", None),
        k=getattr(args, "length", None) or getattr(args, "prefix", None),
        count=getattr(args, "count", None),
        seed=settings.SEED if args.seed is None else args.seed,
        threads=settings.worker_count(),
        tol=settings.TOL,
        max_iter=settings.MAX_ITER,
        cap=settings.GARSIDE_CAP,
        out=getattr(args, "out", None),
    )


def cmd_analyze(analysis: MonoidAnalysis, args, config: CliConfig) -> str:
    report = analysis.analyze()
    if args.json:
        return report.model_dump_json(indent=2)
    lines = [
        f"monoid={report.monoid}",
        f"generators={_fmt(report.generators)}",
        f"|S|={report.simples}",
        f"spherical={_fmt(report.spherical)}",
        f"delta={_fmt(report.delta)}",
        f"fc={_fmt(report.fc)}",
        f"irreducible={_fmt(report.irreducible)}",
        "components=" + " / ".join(" ".join(c) for c in report.components),
        f"charney_strongly_connected={_fmt(report.charney_strongly_connected)}",
        f"mu={report.mobius_polynomial}",
        f"p0={_fmt(report.p0)}",
        f"lambda={_fmt(report.lam)}",
        f"perron_case={_fmt(report.perron_case)} K={_fmt(report.K)}",
        f"kappa={_fmt(report.kappa)}",
        f"axioms={'pass' if report.axioms.passed else 'fail'}",
    ]
    lines += [f"  {c.name} {'pass' if c.passed else 'FAIL'} {c.detail}" for c in report.axioms.checks]
    lines += [f"note: {n}" for n in report.axioms.notes + report.notes]
    return "\n".join(lines)


def cmd_normal_form(analysis: MonoidAnalysis, args, config: CliConfig) -> str:
    result = analysis.normal_form(args.word)
    if args.json:
        return result.model_dump_json(indent=2)
    return f"{result.normal_form}\nheight={result.height}\nlength={result.length}"


def cmd_garside(analysis: MonoidAnalysis, args, config: CliConfig) -> str:
    if args.dump_matrix:
        return analysis.matrix_dump(args.valuation).rstrip("\n")
    dump = analysis.garside_dump()
    if args.json:
        return dump.model_dump_json(indent=2)
    lines = [
        f"|S|={len(dump.simples)}",
        f"delta={_fmt(dump.delta)}",
        f"fc={_fmt(dump.fc)}",
        f"charney_strongly_connected={_fmt(dump.charney_strongly_connected)}",
    ]
    if args.dump:
        lines += [f"{s.index} {s.word} {s.length}" for s in dump.simples]
        lines.append("arrows")
        lines += [
            f"{i} {j}"
            for i, row in enumerate(dump.arrows)
            for j, flag in enumerate(row)
            if flag
        ]
    return "\n".join(lines)


def cmd_mobius(analysis: MonoidAnalysis, args, config: CliConfig) -> str:
    report = analysis.mobius_report(args.valuation, args.k_max)
    if args.json:
        return report.model_dump_json(indent=2)
    lines = [
        f"mu={report.polynomial}",
        "coefficients=" + ",".join(report.coefficients),
        f"mu_over_simples={report.polynomial_over_simples}",
        f"p0={_fmt(report.p0)}",
        "k,lambda_k",
    ]
    lines += [f"{k},{z}" for k, z in enumerate(report.growth)]
    return "\n".join(lines)


def cmd_measure(analysis: MonoidAnalysis, args, config: CliConfig) -> str:
    sample = analysis.measure(args.valuation, args.prefix, args.count, config.seed, config.threads)
    if args.json:
        return sample.model_dump_json(indent=2)
    return "\n".join(sample.prefixes)


def cmd_sample(analysis: MonoidAnalysis, args, config: CliConfig) -> str:
    elements = analysis.sample(args.length, args.count, args.valuation, config.seed, config.threads)
    if args.json:
        return json.dumps(elements, indent=2, ensure_ascii=False)
    return "\n".join(elements)


def cmd_stats(analysis: MonoidAnalysis, args, config: CliConfig) -> str:
    started = time.perf_counter()
    try:
        experiment, report, delta = analysis.experiment(
            args.length, args.count, args.stat, args.valuation, config.seed, config.threads
        )
    except AtmError as exc:
        if args.record:
            _record(analysis, args, config, error=exc.message)
        raise
    logger.info("stats runtime_seconds=%.3f", time.perf_counter() - started)

    if args.out:
        StorageService().write_experiment(
            Path(args.out), experiment, config.model_dump(), report.model_dump(exclude={"runtime_seconds"})
        )
        logger.info("report written to %s", args.out)
    if args.record:
        run_id = _record(analysis, args, config, report_json=report.model_dump_json(), csv_path=args.out)
        logger.info("run recorded id=%s", run_id)

    if args.json:
        response = StatsResponse(report=report, delta_method=delta, csv_path=args.out)
        return response.model_dump_json(indent=2, exclude={"report": {"runtime_seconds"}})
    lines = _key_values(report, exclude={"runtime_seconds", "caveats"})
    lines += [f"caveat: {c}" for c in report.caveats]
    if delta is not None:
        lines += [f"delta_method.{line}" for line in _key_values(delta)]
    return "\n".join(lines)


def _record(analysis: MonoidAnalysis, args, config: CliConfig, **fields) -> str:
    from app.db.database import init_db, session_scope
    from app.models.db_models import ExperimentRun

    init_db()
    error = fields.pop("error", None)
    with session_scope() as db:
        run = ExperimentRun(
            monoid=analysis.label,
            statistic=args.stat,
            k=args.length,
            count=args.count,
            seed=config.seed,
            status="failed" if error else "completed",
            error_message=error,
            **fields,
        )
        db.add(run)
        db.flush()
        return run.id


COMMANDS = {
    "analyze": cmd_analyze,
    "normal-form": cmd_normal_form,
    "garside": cmd_garside,
    "mobius": cmd_mobius,
    "measure": cmd_measure,
    "sample": cmd_sample,
    "stats": cmd_stats,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        config = resolve_config(args)
        print(f"config {config.model_dump_json()}", file=sys.stderr)
        presentation = resolve_presentation(path=args.spec, family=args.family)
        analysis = MonoidAnalysis(presentation, garside_cap=settings.GARSIDE_CAP)
        output = COMMANDS[args.subcommand](analysis, args, config)
    except AtmError as exc:
        print(f"atm: {type(exc).__name__}: {exc.message}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"atm: {exc}", file=sys.stderr)
        return 1
    print(output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
