"""Fast self-checks of the margin theory, run by ``consensus-delay verify``.

Each check returns a :class:`CheckResult`; none raises on a failed property.
Module attributes are looked up at call time so that a deliberately broken
function (monkeypatched in the test-suite) is what gets exercised.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import analysis, dynamics, graph, stability
from .graph import ProtocolKind, Topology


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0


def random_connected_topology(n: int, rng: np.random.Generator, p_range=(0.15, 0.9)) -> Topology:
    """Erdos-Renyi graph with a random edge probability, redrawn until connected."""
    while True:
        p = rng.uniform(*p_range)
        upper = np.triu(rng.random((n, n)) < p, k=1)
        edges = [(i + 1, j + 1) for i, j in zip(*np.nonzero(upper))]
        t = Topology.from_edges(n, edges)
        if graph.is_connected(t):
            return t


def random_gains(rng: np.random.Generator, kind, lo: float = 0.1, hi: float = 10.0):
    k1, k2 = rng.uniform(lo, hi, 2)
    return stability.ProtocolParams(kind, k1, k2)


def rel_err(a: float, b: float) -> float:
    if math.isinf(a) or math.isinf(b):
        return 0.0 if a == b else math.inf
    return abs(a - b) / max(abs(b), 1e-300)


def check_oracle(kind, draws: int = 100, seed: int = 11, tol: float = 1e-6) -> CheckResult:
    kind = ProtocolKind.parse(kind)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        params = random_gains(rng, kind)
        lam = rng.uniform(-1.0, 0.95) if kind is ProtocolKind.A else rng.uniform(0.05, 20.0)
        worst = max(worst, rel_err(stability.factor_margin(lam, params).tau, stability.oracle_margin(lam, params)))
    return CheckResult(f"oracle agreement, protocol {kind.name}", worst <= tol, f"max rel err {worst:.2e}")


def check_exigent(kind, graphs: int = 50, seed: int = 12) -> CheckResult:
    """The predicted most exigent eigenvalue attains the topology margin."""
    kind = ProtocolKind.parse(kind)
    rng = np.random.default_rng(seed)
    misses = []
    for _ in range(graphs):
        t = random_connected_topology(int(rng.integers(3, 11)), rng)
        params = random_gains(rng, kind)
        spec = graph.spectrum(t, kind)
        dm = stability.topology_margin(spec, params)
        predicted = graph.predicted_exigent_eigenvalue(spec)
        if not any(abs(predicted - lam) <= 1e-10 for lam in dm.argmin_set(1e-9)):
            misses.append((t.n, predicted, dm.exigent_lambda))
    label = "most exigent is min eig(C)" if kind is ProtocolKind.A else "most exigent is max eig(L)"
    return CheckResult(f"{label} is most exigent", not misses, f"{len(misses)} misses of {graphs}")


def check_monotonicity(pairs: int = 20, seed: int = 13) -> CheckResult:
    rng = np.random.default_rng(seed)
    lams = np.round(np.arange(1, 101) * 0.1, 10)
    bad = 0
    for _ in range(pairs):
        params = random_gains(rng, ProtocolKind.B)
        fc = [stability.factor_margin(lam, params) for lam in lams]
        w = np.array([f.omega for f in fc])
        tau = np.array([f.tau for f in fc])
        if not (np.all(np.diff(w) > 0) and np.all(np.diff(tau) < 0)):
            bad += 1
    return CheckResult("omega up, tau down in lambda", bad == 0, f"{bad} of {pairs} gain pairs violate")


def check_theta_inequality(points: int = 10_000) -> CheckResult:
    theta = np.linspace(0, math.pi / 2, points + 2)[1:-1]
    f = 0.5 * np.sin(2 * theta) - theta
    return CheckResult("sin(2t)/2 - t < 0 on (0, pi/2)", bool(np.all(f < 0)), f"max {f.max():.3e}")


def check_resultant(draws: int = 100, seed: int = 14, tol: float = 1e-10) -> CheckResult:
    """det R against its closed form k1^4 (l1^2 - l2^2)^2, and singularity at l1 = +-l2."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    singular = True
    for _ in range(draws):
        params = random_gains(rng, ProtocolKind.B)
        l1, l2 = rng.uniform(0.1, 10.0, 2)
        det = stability.sylvester_resultant_det(l1, l2, params)
        closed = params.k1**4 * (l1 * l1 - l2 * l2) ** 2
        worst = max(worst, abs(det - closed) / closed)
        scale = max(1.0, float(np.abs(stability.resultant_matrix(l1, l1, params)).max()) ** 4)
        for other in (l1, -l1):
            singular &= abs(stability.sylvester_resultant_det(l1, other, params)) <= 1e-9 * scale
    return CheckResult(
        "resultant det = k1^4 (l1^2 - l2^2)^2", worst <= tol and singular, f"max rel err {worst:.2e}"
    )


def check_absolute_dominance(graphs: int = 50, seed: int = 15) -> CheckResult:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(graphs):
        n = int(rng.integers(3, 11))
        t = random_connected_topology(n, rng)
        for kind in ProtocolKind:
            params = random_gains(rng, kind)
            dm = stability.topology_margin(graph.spectrum(t, kind), params)
            if dm.margin < stability.absolute_margin(params, n).tau - 1e-9:
                bad += 1
    return CheckResult("topology margin >= absolute margin", bad == 0, f"{bad} violations")


HUB6 = "6\n1 2\n1 4\n2 4\n3 4\n4 5\n3 6\n5 6\n"
RING6 = "6\n1 2\n2 3\n3 4\n4 5\n5 6\n1 6\n"


def check_switching_continuity(seed: int = 16) -> CheckResult:
    """Protocol B: orthogonal transforms keep the disagreement norm continuous at switches."""
    tops = [graph.parse_topology(HUB6), graph.parse_topology(RING6)]
    params = stability.ProtocolParams(ProtocolKind.B, 1.0, 1.0)
    cfg = dynamics.SimConfig(
        params, 0.06, tops, dynamics.random_initial_state(6, seed), 8.0, schedule=dynamics.SwitchingSchedule(1.4, 60)
    )
    trace = dynamics.simulate(cfg)
    dt = analysis.disagreement(trace, [graph.spectrum(t, ProtocolKind.B) for t in tops])
    jump_ok = all(mag < 1e-9 * (1 + dt.norm[np.searchsorted(dt.times, t)]) for t, mag in dt.jumps)
    norm_err = float(np.max(np.abs(dt.full_norm - np.linalg.norm(trace.states, axis=1))))
    ok = jump_ok and norm_err <= 1e-10 and len(dt.jumps) > 0
    return CheckResult("switching keeps disagreement norm continuous", ok, f"{len(dt.jumps)} switches, norm err {norm_err:.1e}")


ALL_CHECKS = (
    lambda: check_oracle(ProtocolKind.A),
    lambda: check_oracle(ProtocolKind.B),
    lambda: check_exigent(ProtocolKind.A),
    lambda: check_exigent(ProtocolKind.B),
    check_monotonicity,
    check_theta_inequality,
    check_resultant,
    check_absolute_dominance,
    check_switching_continuity,
)


def run_checks() -> list[CheckResult]:
    results = []
    for check in ALL_CHECKS:
        start = time.perf_counter()
        res = check()
        results.append(CheckResult(res.name, res.passed, res.detail, time.perf_counter() - start))
    return results
