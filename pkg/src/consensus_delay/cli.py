"""Command-line front end: ``consensus-delay {spectrum,margin,bound,simulate,verify}``."""

from __future__ import annotations

import argparse
import contextlib
import os
import sys

import numpy as np

from . import analysis, dynamics, graph, stability, verify
from .graph import ProtocolKind
from .stability import fmt

EXIT_FAIL = 1
EXIT_PARSE = 2
EXIT_DISCONNECTED = 3
EXIT_INVALID = 4
EXIT_DIMENSION = 5


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _load_topology(path: str) -> graph.Topology:
    try:
        return graph.read_topology(path)
    except graph.TopologyParseError as exc:
        raise CliError(f"{path}: {exc}", EXIT_PARSE) from None
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror}", EXIT_PARSE) from None


def _spectrum(t: graph.Topology, kind: ProtocolKind) -> graph.Spectrum:
    try:
        return graph.spectrum(t, kind)
    except graph.ConnectivityError as exc:
        raise CliError(str(exc), EXIT_DISCONNECTED) from None


def _params(kind, k1, k2) -> stability.ProtocolParams:
    try:
        return stability.ProtocolParams(kind, k1, k2)
    except stability.InvalidGainsError as exc:
        raise CliError(str(exc), EXIT_INVALID) from None


def _range(text: str, name: str):
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise CliError(f"--{name}-range must look like lo:hi, got {text!r}", EXIT_INVALID) from None
    return lo, hi


def _grid(text: str):
    try:
        a, b = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise CliError(f"--grid must look like KxM, got {text!r}", EXIT_INVALID) from None
    return a, b


@contextlib.contextmanager
def _output(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            yield fh


def cmd_spectrum(args) -> int:
    t = _load_topology(args.topology)
    kind = ProtocolKind.parse(args.protocol)
    print(f"agents: {t.n}")
    missing = graph.unreachable_agents(t)
    print(f"connected: {'yes' if not missing else 'no'}")
    spec = _spectrum(t, kind)
    label = "eigenvalues of C" if kind is ProtocolKind.A else "eigenvalues of L"
    print(f"{label}: " + " ".join(fmt(v) for v in spec.eigenvalues))
    rule = "smallest eigenvalue of C" if kind is ProtocolKind.A else "largest eigenvalue of L"
    print(f"most exigent ({rule}): {fmt(graph.predicted_exigent_eigenvalue(spec))}")
    if kind is ProtocolKind.B:
        print(f"anderson bound: {fmt(graph.anderson_bound(t))}")
    return 0


def cmd_margin(args) -> int:
    kind = ProtocolKind.parse(args.protocol)
    params = _params(kind, args.k1, args.k2)
    t = _load_topology(args.topology)
    dm = stability.topology_margin(_spectrum(t, kind), params)
    print(f"{'lambda':>14} {'omega':>14} {'tau':>14}")
    for fc in dm.per_factor:
        print(f"{fmt(fc.lam):>14} {fmt(fc.omega):>14} {fmt(fc.tau):>14}")
    print(f"margin: {fmt(dm.margin)}")
    print(f"most exigent eigenvalue: {fmt(dm.exigent_lambda) if dm.exigent_lambda is not None else 'none'}")
    if args.csv:
        with _output(args.csv) as fh:
            fh.write("lambda,omega,tau\n")
            for fc in dm.per_factor:
                fh.write(f"{fmt(fc.lam)},{fmt(fc.omega)},{fmt(fc.tau)}\n")
    return 0


def cmd_bound(args) -> int:
    kind = ProtocolKind.parse(args.protocol)
    if kind is ProtocolKind.B and args.n is None:
        raise CliError("protocol b needs --n", EXIT_INVALID)
    try:
        surface = stability.boundary_surface(
            kind, _range(args.k1_range, "k1"), _range(args.k2_range, "k2"), _grid(args.grid), args.n
        )
    except ValueError as exc:
        raise CliError(str(exc), EXIT_INVALID) from None
    with _output(args.csv) as fh:
        stability.write_surface_csv(surface, fh)
    return 0


def cmd_simulate(args) -> int:
    try:
        config = dynamics.read_config(args.config)
    except dynamics.DimensionMismatchError as exc:
        raise CliError(str(exc), EXIT_DIMENSION) from None
    except (dynamics.ConfigError, graph.TopologyError, ValueError) as exc:
        raise CliError(f"{args.config}: {exc}", EXIT_PARSE) from None
    except OSError as exc:
        raise CliError(f"{args.config}: {exc.strerror}", EXIT_PARSE) from None
    if args.tau is not None:
        config.tau = args.tau
    if args.seed is not None:
        config.seed = args.seed
        config.x0 = dynamics.random_initial_state(config.n, args.seed)
    try:
        trace = dynamics.simulate(config)
        spectra = [_spectrum(t, config.kind) for t in config.topologies]
    except graph.ConnectivityError as exc:
        raise CliError(str(exc), EXIT_DISCONNECTED) from None

    decision = analysis.centroid(trace, list(config.topologies), config.kind)
    dtrace = analysis.disagreement(trace, spectra)
    outcome = analysis.detect_outcome(dtrace)

    if args.csv:
        with _output(args.csv) as fh:
            dynamics.write_trace_csv(trace, fh, {"protocol": config.kind.value})
        analysis_path = args.analysis or _sibling(args.csv, "_analysis")
    else:
        analysis_path = args.analysis
    if analysis_path:
        with _output(analysis_path) as fh:
            analysis.write_analysis_csv(decision, dtrace, fh)

    print(f"step: {fmt(trace.h)}")
    print(f"samples: {len(trace.times)}")
    print(f"switches: {len(trace.switch_times)}")
    if dtrace.jumps:
        print(f"max jump: {fmt(max(m for _, m in dtrace.jumps))}")
    print(f"final disagreement ratio: {fmt(float(dtrace.norm[-1] / dtrace.norm[0]) if dtrace.norm[0] else 0.0)}")
    if trace.diverged:
        print("aborted: state exceeded the divergence limit")
    suffix = f" at t={fmt(outcome.t_star)}" if outcome.t_star is not None else ""
    print(f"verdict: {outcome.verdict.value}{suffix}")
    return 0


def _sibling(path: str, tag: str) -> str:
    root, ext = os.path.splitext(path)
    return f"{root}{tag}{ext or '.csv'}"


def cmd_verify(args) -> int:
    results = verify.run_checks()
    for r in results:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name} ({r.detail}; {r.seconds:.1f}s)")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="consensus-delay", description="Delay margins and simulations for second-order consensus."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def protocol(p, required=True):
        p.add_argument("--protocol", choices=["a", "b"], type=str.lower, required=required, default=None)

    p = sub.add_parser("spectrum", help="eigenvalues and most exigent eigenvalue of a topology")
    p.add_argument("topology")
    protocol(p)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("margin", help="per-eigenvalue crossings and the delay margin of a topology")
    p.add_argument("topology")
    protocol(p)
    p.add_argument("--k1", type=float, required=True)
    p.add_argument("--k2", type=float, required=True)
    p.add_argument("--csv", metavar="PATH")
    p.set_defaults(func=cmd_margin)

    p = sub.add_parser("bound", help="topology-independent delay bound over a gain grid (CSV)")
    protocol(p)
    p.add_argument("--k1-range", default="0.5:10")
    p.add_argument("--k2-range", default="0.1:5")
    p.add_argument("--grid", default="50x50")
    p.add_argument("--n", type=int)
    p.add_argument("--csv", metavar="PATH")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("simulate", help="simulate a configuration and report the verdict")
    p.add_argument("config")
    p.add_argument("--csv", metavar="PATH", help="trace CSV")
    p.add_argument("--analysis", metavar="PATH", help="analysis CSV (default: next to --csv)")
    p.add_argument("--tau", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run the built-in property checks")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    np.seterr(over="ignore", invalid="ignore")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
