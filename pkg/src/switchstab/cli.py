"""Command-line front-end: problem files in, machine-readable reports out.

Every run prints one JSON report on stdout (schema_version, command echo,
input digest, results, warnings); CSV series go to sidecar files. Exit
codes: 0 ok/stable, 1 I/O or schema, 2 unstable or violated claim,
3 marginal, 4 assumptions not met, 5 resource cap, 6 solver failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import lyapunov as lyap
from . import mcsim, models, radius
from .errors import (
    EXIT_ASSUMPTIONS,
    EXIT_IO,
    EXIT_MARGINAL,
    EXIT_OK,
    EXIT_UNSTABLE,
    SwitchstabError,
)

SCHEMA_VERSION = 1

_VERDICT_EXIT = {
    radius.Verdict.STABLE: EXIT_OK,
    radius.Verdict.UNSTABLE: EXIT_UNSTABLE,
    radius.Verdict.MARGINAL: EXIT_MARGINAL,
    radius.Verdict.UNSUPPORTED: EXIT_ASSUMPTIONS,
}


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors, which this tool reserves for
    # "unstable"; remap to the I/O code
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit_(message)


class SystemExit_(Exception):
    def __init__(self, message):
        super().__init__(message)


def _digest(path: Path) -> str:
    return "sha256:" + hashlib.sha256(path.read_bytes()).hexdigest()


def _emit(report: dict) -> None:
    print(json.dumps(report, indent=2))


def _report(command: str, argv, digest: str | None, results, warnings) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "argv": list(argv),
        "input_digest": digest,
        "results": results,
        "warnings": warnings,
    }


def _load(path: Path):
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SwitchstabError(f"cannot read {path}: {exc}") from exc
    return models.load_problem(text)


def _need_distribution(problem, command: str) -> models.MatrixDistribution:
    if not isinstance(problem, models.MatrixDistribution):
        raise SwitchstabError(f"'{command}' expects an iid problem document")
    return problem


def _need_markov(problem) -> models.MarkovJumpSystem:
    if not isinstance(problem, models.MarkovJumpSystem):
        raise SwitchstabError("'markov' expects a markov problem document")
    return problem


def _parse_mode(text: str) -> tuple[str, int]:
    if text == "exact":
        return "exact", 0
    if text.startswith("mc:"):
        n = int(text[3:])
        if n < 2:
            raise SwitchstabError("mc sample count must be at least 2")
        return "mc", n
    raise SwitchstabError(f"unknown validation mode {text!r}; use exact or mc:N")


def _parse_x0(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise SwitchstabError(f"cannot parse --x0 {text!r}: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="switchstab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("-i", "--input", required=True, type=Path, help="problem JSON file")
        return cmd

    cmd = add("pradius", "p-radius of an iid law")
    cmd.add_argument("-p", type=int, required=True)

    cmd = add("stability", "p-th mean stability verdict")
    cmd.add_argument("-p", type=int, required=True)

    cmd = add("lyapunov", "synthesize a degree-p certificate")
    cmd.add_argument("-p", type=int, required=True)
    cmd.add_argument("--validate", metavar="MODE", help="also validate: exact or mc:N")
    cmd.add_argument("--seed", type=int, default=lyap.DEFAULT_VALIDATION_SEED)
    cmd.add_argument("-o", "--out", type=Path, help="also write the certificate JSON here")

    cmd = add("jsr", "joint-spectral-radius bracket of an atomic support")
    cmd.add_argument("--depth", type=int, default=8)

    cmd = add("limit", "p-radius sequence for p = 1..pmax")
    cmd.add_argument("--pmax", type=int, required=True)
    cmd.add_argument("--even-only", action="store_true")
    cmd.add_argument("--csv", type=Path, help="sidecar CSV path (default: <input>.limit.csv)")

    cmd = add("markov", "Markovian p-radius and verdict (p in {1, 2})")
    cmd.add_argument("-p", type=int, required=True)
    cmd.add_argument("--closed-loop", action="store_true", help="apply the stored feedback first")
    cmd.add_argument(
        "--general-p", action="store_true",
        help="allow p > 2: reports the lifted spectral radius with no verdict",
    )

    cmd = add("simulate", "Monte Carlo sample paths and moment series")
    cmd.add_argument("--paths", type=int, required=True)
    cmd.add_argument("--horizon", type=int, required=True)
    cmd.add_argument("--seed", type=int, required=True)
    cmd.add_argument("--x0", required=True, help="comma-separated initial state")
    cmd.add_argument("--p", type=int, default=1, help="moment exponent")
    cmd.add_argument("--cert", type=Path, help="certificate JSON for a second series")
    cmd.add_argument("--sigma0", type=int, help="initial mode (Markov runs)")
    cmd.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    cmd.add_argument("--out-dir", type=Path, default=Path("."))
    cmd.add_argument("--closed-loop", action="store_true")

    cmd = add("validate", "check a certificate against a law")
    cmd.add_argument("--cert", type=Path, required=True)
    cmd.add_argument("--mode", default="exact", help="exact or mc:N")
    cmd.add_argument("--seed", type=int, default=lyap.DEFAULT_VALIDATION_SEED)

    return parser


def _cmd_pradius(args, warnings):
    dist = _need_distribution(_load(args.input), "pradius")
    result = radius.p_radius(dist, args.p)
    if result.assumption_path is radius.AssumptionPath.UNSUPPORTED:
        warnings.append("assumptions not met: odd p without an orthant-invariant support")
        return result.to_dict(), EXIT_ASSUMPTIONS
    return result.to_dict(), EXIT_OK


def _cmd_stability(args, warnings):
    dist = _need_distribution(_load(args.input), "stability")
    report = radius.check_mean_stability(dist, args.p)
    if report.verdict is radius.Verdict.MARGINAL:
        warnings.append("p-radius lies inside the marginal decision band around 1")
    return report.to_dict(), _VERDICT_EXIT[report.verdict]


def _cmd_lyapunov(args, warnings):
    dist = _need_distribution(_load(args.input), "lyapunov")
    cert = lyap.synthesize_degree_p(dist, args.p)
    doc = lyap.certificate_to_dict(cert)
    results = {"certificate": doc}
    code = EXIT_OK
    if args.out is not None:
        args.out.write_text(json.dumps(doc, indent=2), encoding="utf-8")
        results["certificate_path"] = str(args.out)
    if args.validate:
        mode, n = _parse_mode(args.validate)
        report = lyap.validate_certificate(
            cert, dist, mode=mode, n_samples=n or 10_000, seed=args.seed
        )
        results["validation"] = report.to_dict()
        if not report.passed:
            warnings.append("synthesized certificate failed validation")
            code = EXIT_UNSTABLE
    return results, code


def _cmd_jsr(args, warnings):
    from .errors import AssumptionError

    dist = _need_distribution(_load(args.input), "jsr")
    if not isinstance(dist, models.AtomicDistribution):
        raise AssumptionError("'jsr' requires a finite atomic law")
    bounds = radius.jsr_bounds(dist.atoms, depth=args.depth)
    if bounds.truncated:
        warnings.append(f"product budget reached at depth {bounds.depth}; bracket is valid but coarser")
    return bounds.to_dict(), EXIT_OK


def _cmd_limit(args, warnings):
    dist = _need_distribution(_load(args.input), "limit")
    seq = radius.limit_sequence(dist, args.pmax, even_only=args.even_only)
    if seq.truncated:
        warnings.append("sequence truncated by the lift entry cap")
    csv_path = args.csv or args.input.with_suffix(".limit.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("p,p_radius\n")
        for p, v in seq.entries:
            fh.write(f"{p},{v!r}\n")
    results = seq.to_dict()
    results["csv"] = str(csv_path)
    return results, EXIT_OK


def _cmd_markov(args, warnings):
    system = _need_markov(_load(args.input))
    if args.closed_loop:
        system = models.apply_feedback(system)
    if args.p not in (1, 2):
        if not args.general_p:
            raise SwitchstabError("p must be 1 or 2 unless --general-p is given")
        value = radius.markov_tp_spectral_radius(system, args.p)
        warnings.append("general-p radius is experimental and carries no stability verdict")
        results = {
            "p": args.p,
            "value": value,
            "lifted_dim": system.n_modes * system.dim**args.p,
            "assumption_path": None,
            "verdict": None,
            "closed_loop": args.closed_loop,
        }
        return results, EXIT_OK
    report = radius.markov_stability(system, args.p)
    results = report.p_radius.to_dict()
    results["verdict"] = report.verdict.value
    results["closed_loop"] = args.closed_loop
    if report.verdict is radius.Verdict.UNSUPPORTED:
        warnings.append("p = 1 requires entrywise-nonnegative modes; found a negative entry")
    return results, _VERDICT_EXIT[report.verdict]


def _series_sidecar(out_dir: Path, stem: str, label: str, series) -> dict:
    path = out_dir / f"{stem}.{label}.csv"
    mcsim.write_moment_csv(path, series)
    entry = {
        "csv": str(path),
        "final_mean": float(series.means[-1]),
        "truncated_paths": series.truncated_paths,
    }
    return entry


def _cmd_simulate(args, warnings):
    problem = _load(args.input)
    if args.closed_loop:
        problem = models.apply_feedback(_need_markov(problem))
    x0 = _parse_x0(args.x0)
    plan = mcsim.SimulationPlan(
        paths=args.paths,
        horizon=args.horizon,
        seed=args.seed,
        initial_state=x0,
        initial_mode=args.sigma0,
        moment_exponent=args.p,
    )
    out_dir = args.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = args.input.stem
    results: dict = {
        "paths": args.paths,
        "horizon": args.horizon,
        "seed": args.seed,
        "moment_exponent": args.p,
        "series": {},
    }
    if isinstance(problem, models.MarkovJumpSystem):
        sim = mcsim.simulate_markov(problem, plan, threads=args.threads)
        results["series"]["euclidean"] = _series_sidecar(out_dir, stem, "euclidean", sim.euclidean)
        main_series = sim.euclidean
        if args.cert:
            warnings.append("certificate series are only produced for iid runs")
    else:
        cert = None
        if args.cert:
            cert = lyap.certificate_from_dict(json.loads(args.cert.read_text(encoding="utf-8")))
        sim = mcsim.simulate_iid(problem, plan, certificate=cert, threads=args.threads)
        results["series"]["euclidean"] = _series_sidecar(out_dir, stem, "euclidean", sim.euclidean)
        if sim.certificate is not None:
            results["series"]["certificate"] = _series_sidecar(
                out_dir, stem, "certificate", sim.certificate
            )
        main_series = sim.certificate if sim.certificate is not None else sim.euclidean
    if main_series.truncated_paths:
        warnings.append(f"{main_series.truncated_paths} paths overflowed and were truncated")
    try:
        results["decay"] = mcsim.estimate_decay_rate(main_series).to_dict()
    except ValueError:
        results["decay"] = None
    return results, EXIT_OK


def _cmd_validate(args, warnings):
    dist = _need_distribution(_load(args.input), "validate")
    cert = lyap.certificate_from_dict(json.loads(args.cert.read_text(encoding="utf-8")))
    mode, n = _parse_mode(args.mode)
    report = lyap.validate_certificate(
        cert, dist, mode=mode, n_samples=n or 10_000, seed=args.seed
    )
    if not report.passed:
        warnings.append("certificate claim violated on at least one test vector")
    return report.to_dict(), EXIT_OK if report.passed else EXIT_UNSTABLE


_HANDLERS = {
    "pradius": _cmd_pradius,
    "stability": _cmd_stability,
    "lyapunov": _cmd_lyapunov,
    "jsr": _cmd_jsr,
    "limit": _cmd_limit,
    "markov": _cmd_markov,
    "simulate": _cmd_simulate,
    "validate": _cmd_validate,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit_ as exc:
        print(f"error: {exc}", file=sys.stderr)
        _emit(_report("(usage)", argv, None, None, [str(exc)]))
        return EXIT_IO
    digest = None
    warnings: list[str] = []
    try:
        if args.input.exists():
            digest = _digest(args.input)
        results, code = _HANDLERS[args.command](args, warnings)
    except SwitchstabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        report = _report(args.command, argv, digest, None, warnings)
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
        pointer = getattr(exc, "pointer", None)
        if pointer:
            report["error"]["pointer"] = pointer
        _emit(report)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        _emit(_report(args.command, argv, digest, None, [str(exc)]))
        return EXIT_IO
    _emit(_report(args.command, argv, digest, results, warnings))
    return code


if __name__ == "__main__":
    sys.exit(main())
