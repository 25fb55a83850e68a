"""Fixed-step simulation of the delayed multi-agent system.

The stacked state is ``x = [x1, v1, x2, v2, ...]`` and evolves as

    x'(t) = (I_n kron F1) x(t) + (M kron F2) x(t - tau)

with ``M`` the protocol matrix of the topology active at ``t``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .graph import ProtocolKind, Topology, protocol_matrix, read_topology, require_connected
from .stability import ProtocolParams, fmt

DIVERGENCE_LIMIT = 1e12


class SimulationError(ValueError):
    pass


class DimensionMismatchError(SimulationError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SystemRealization:
    kind: ProtocolKind
    params: ProtocolParams
    topology: Topology
    F1: np.ndarray
    F2: np.ndarray
    M: np.ndarray

    @property
    def n(self) -> int:
        return self.topology.n

    def current_matrix(self) -> np.ndarray:
        return np.kron(np.eye(self.n), self.F1)

    def delayed_matrix(self) -> np.ndarray:
        return np.kron(self.M, self.F2)


def agent_matrices(params: ProtocolParams):
    k1, k2 = params.k1, params.k2
    F2 = np.array([[0.0, 0.0], [k1, k2]])
    if params.kind is ProtocolKind.A:
        F1 = np.array([[0.0, 1.0], [-k1, -k2]])
    else:
        F1 = np.array([[0.0, 1.0], [0.0, 0.0]])
    return F1, F2


def build_system(topology: Topology, params: ProtocolParams) -> SystemRealization:
    require_connected(topology)
    F1, F2 = agent_matrices(params)
    return SystemRealization(params.kind, params, topology, F1, F2, protocol_matrix(topology, params.kind))


@dataclass(frozen=True)
class SwitchingSchedule:
    """Periodic switching: topology ``first`` for the leading ``duty`` percent of every period."""

    period: float
    duty: float
    first: int = 0
    second: int = 1

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError(f"period must be positive, got {self.period}")
        if not 0 < self.duty < 100:
            raise ValueError(f"duty must lie in (0, 100), got {self.duty}")


def topology_at(schedule: SwitchingSchedule, t: float) -> int:
    phase = math.fmod(t, schedule.period) / schedule.period
    return schedule.first if phase < schedule.duty / 100.0 else schedule.second


def resolve_step(tau: float, step: float | None = None) -> float:
    """Shrink the step so that the delay is a whole number of steps."""
    if step is None:
        step = min(1e-3, tau / 20.0) if tau > 0 else 1e-3
    if not step > 0:
        raise SimulationError(f"step must be positive, got {step}")
    if tau == 0:
        return float(step)
    m = math.ceil(tau / step - 1e-9)
    h = tau / m
    if not (h > 0 and abs(m * h - tau) <= 1e-12 * max(1.0, tau)):
        raise SimulationError(f"cannot represent tau={tau} on a step near {step}")
    return h


def random_initial_state(n: int, seed=None, low: float = 0.0, high: float = 10.0) -> np.ndarray:
    """Positions uniform in [low, high], velocities zero."""
    rng = np.random.default_rng(seed)
    x0 = np.zeros(2 * n)
    x0[0::2] = rng.uniform(low, high, n)
    return x0


@dataclass(eq=False)
class SimConfig:
    params: ProtocolParams
    tau: float
    topologies: tuple
    x0: np.ndarray
    t_end: float
    schedule: SwitchingSchedule | None = None
    step: float | None = None
    seed: int | None = None

    def __post_init__(self):
        self.topologies = tuple(self.topologies)
        if not self.topologies:
            raise SimulationError("at least one topology is required")
        n = self.topologies[0].n
        for t in self.topologies[1:]:
            if t.n != n:
                raise DimensionMismatchError(f"switching topologies have {n} and {t.n} agents")
        if self.schedule is not None:
            needed = max(self.schedule.first, self.schedule.second) + 1
            if len(self.topologies) < needed:
                raise SimulationError(f"schedule refers to topology #{needed} but only {len(self.topologies)} given")
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x0.shape != (2 * n,):
            raise DimensionMismatchError(f"x0 has {self.x0.size} values, expected {2 * n}")
        if self.tau < 0:
            raise SimulationError(f"tau must be nonnegative, got {self.tau}")
        if not self.t_end > 0:
            raise SimulationError(f"t_end must be positive, got {self.t_end}")

    @property
    def n(self) -> int:
        return self.topologies[0].n

    @property
    def kind(self) -> ProtocolKind:
        return self.params.kind


@dataclass(eq=False)
class Trace:
    times: np.ndarray
    states: np.ndarray
    switch_times: list
    active: np.ndarray  # index of the topology in force at each sample
    h: float
    tau: float
    diverged: bool = False
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, 0::2]

    @property
    def velocities(self) -> np.ndarray:
        return self.states[:, 1::2]


def _rk4_propagator(F: np.ndarray, B: np.ndarray, h: float):
    """Classical RK4 for x' = F x + B u(t), folded into constant matrices.

    One step is ``x+ = P x + U0 u(t) + Uh u(t + h/2) + U1 u(t + h)``; this is
    the ordinary four-stage scheme with every stage expanded symbolically.
    """
    d = F.shape[0]
    zero = np.zeros((d, d))
    eye = np.eye(d)

    def stage(coef, u_slot):
        px, p0, ph, p1 = coef
        slot = [zero, zero, zero]
        slot[u_slot] = B
        return (F @ px, F @ p0 + slot[0], F @ ph + slot[1], F @ p1 + slot[2])

    def axpy(a, x, y):
        return tuple(xi + a * yi for xi, yi in zip(x, y))

    base = (eye, zero, zero, zero)
    k1 = stage(base, 0)
    k2 = stage(axpy(h / 2, base, k1), 1)
    k3 = stage(axpy(h / 2, base, k2), 1)
    k4 = stage(axpy(h, base, k3), 2)
    return tuple(b + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4) for b, a1, a2, a3, a4 in zip(base, k1, k2, k3, k4))


def integrate(
    current: np.ndarray,
    delayed_mats,
    tau: float,
    x0: np.ndarray,
    t_end: float,
    h: float,
    active_at=None,
):
    """Integrate x' = current x(t) + delayed_mats[a] x(t - tau) on a uniform grid.

    ``x0`` is a state vector or a ``(d, batch)`` array of independent initial
    states advanced together. ``active_at(t)`` picks the index ``a`` in force
    over the step starting at ``t``; the history before 0 is held at ``x0``.

    Delayed values at stage midpoints come from cubic Hermite interpolation
    between stored samples, using one-sided derivatives so that the kinks at
    switch instants and at multiples of ``tau`` stay on grid points.

    Returns ``(times, states, active, abort_step)`` where ``states`` has shape
    ``(steps + 1, d, batch)`` and ``abort_step[b]`` is the last valid sample of
    member ``b`` (``-1`` if it never diverged).
    """
    x0 = np.asarray(x0, dtype=float)
    batch_x0 = x0 if x0.ndim == 2 else x0[:, None]
    d, nb = batch_x0.shape
    steps = int(round(t_end / h))
    if active_at is None:
        active_at = lambda t: 0  # noqa: E731
    m = int(round(tau / h)) if tau > 0 else 0
    if m:
        props = [_rk4_propagator(current, B, h) for B in delayed_mats]
    else:
        # no delay: the delayed term is the current state
        props = [_rk4_propagator(current + B, np.zeros_like(B), h) for B in delayed_mats]
    # interval j holds h/8 * (f(t_j+) - f(t_{j+1}-)); zero on the constant preshape
    zero_gap = np.zeros((d, nb))

    X = np.empty((steps + 1, d, nb))
    X[0] = batch_x0
    gaps = np.empty((steps, d, nb)) if m else None
    active = np.empty(steps + 1, dtype=int)
    abort = np.full(nb, -1)
    alive = np.ones(nb, dtype=bool)
    last = steps
    check_every = 32
    for k in range(steps):
        a = active_at(k * h)
        active[k] = a
        P, U0, Uh, U1 = props[a]
        x = X[k]
        if m:
            j = k - m
            u0 = X[j] if j >= 0 else batch_x0
            u1 = X[j + 1] if j + 1 >= 0 else batch_x0
            uh = 0.5 * (u0 + u1) + (gaps[j] if j >= 0 else zero_gap)
            xn = P @ x + U0 @ u0 + Uh @ uh + U1 @ u1
            F, B = current, delayed_mats[a]
            gaps[k] = (h / 8.0) * (F @ (x - xn) + B @ (u0 - u1))
        else:
            xn = P @ x
        X[k + 1] = xn
        if (k + 1) % check_every == 0 or k + 1 == steps:
            lo = max(0, k + 1 - check_every)
            with np.errstate(invalid="ignore"):
                bad = ~(np.abs(X[lo + 1 : k + 2]) <= DIVERGENCE_LIMIT).all(axis=1)
            newly = bad.any(axis=0) & alive
            for b in np.flatnonzero(newly):
                abort[b] = lo + 1 + int(np.argmax(bad[:, b]))
                alive[b] = False
            if not alive.any():
                last = k + 1
                break
    active[last] = active_at(last * h)
    times = np.arange(last + 1) * h
    return times, X[: last + 1], active[: last + 1], abort


def _trace_from(times, X, active, abort, b, h, tau, seed):
    stop = len(times) if abort[b] < 0 else abort[b] + 1
    act = active[:stop]
    switches = [float(times[k]) for k in range(1, stop) if act[k] != act[k - 1]]
    return Trace(times[:stop], X[:stop, :, b], switches, act, h, tau, bool(abort[b] >= 0), seed)


def _prepare(config: SimConfig):
    h = resolve_step(config.tau, config.step)
    systems = [build_system(t, config.params) for t in config.topologies]
    current = systems[0].current_matrix()
    delayed = [s.delayed_matrix() for s in systems]
    if config.schedule is None or len(systems) == 1:
        chooser = None
    else:
        chooser = lambda t: topology_at(config.schedule, t)  # noqa: E731
    return h, current, delayed, chooser


def simulate(config: SimConfig) -> Trace:
    h, current, delayed, chooser = _prepare(config)
    times, X, active, abort = integrate(current, delayed, config.tau, config.x0, config.t_end, h, chooser)
    return _trace_from(times, X, active, abort, 0, h, config.tau, config.seed)


def simulate_ensemble(config: SimConfig, initial_states, seeds=None) -> list:
    """Run ``config`` once per initial state, advancing all runs in lockstep.

    Each returned trace is identical (to rounding) to what :func:`simulate`
    produces for that initial state alone.
    """
    x0s = np.array([np.asarray(x, float) for x in initial_states])
    if x0s.ndim != 2 or x0s.shape[1] != 2 * config.n:
        raise DimensionMismatchError(f"initial states must each have {2 * config.n} entries")
    seeds = list(seeds) if seeds is not None else [None] * len(x0s)
    h, current, delayed, chooser = _prepare(config)
    times, X, active, abort = integrate(current, delayed, config.tau, x0s.T, config.t_end, h, chooser)
    return [_trace_from(times, X, active, abort, b, h, config.tau, seeds[b]) for b in range(len(x0s))]


def simulate_subsystem(lam_m: float, params: ProtocolParams, tau: float, x0, t_end: float, step=None):
    """Simulate one decoupled subsystem ``xi' = F1 xi + lam_m F2 xi(t - tau)``.

    ``lam_m`` is an eigenvalue of M itself, so for protocol B pass ``-lam``
    for a Laplacian eigenvalue ``lam``. Returns times, states, diverged.
    """
    F1, F2 = agent_matrices(params)
    h = resolve_step(tau, step)
    times, X, active, abort = integrate(F1, [lam_m * F2], tau, np.asarray(x0, float), t_end, h)
    tr = _trace_from(times, X, active, abort, 0, h, tau, None)
    return tr.times, tr.states, tr.diverged


def _parse_x0(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.replace(",", " ").split()])
    except ValueError:
        raise ConfigError(f"x0 is not a list of numbers: {text!r}") from None


_KEYS = {"protocol", "k1", "k2", "tau", "t_end", "step", "topology", "topology2", "period", "duty", "seed", "x0"}


def parse_config_text(text: str, base_dir: str = ".") -> SimConfig:
    """Parse ``key = value`` lines (``key: value`` also accepted; ``#`` starts a comment)."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in ("=", ":"):
            if sep in line:
                key, value = (p.strip() for p in line.split(sep, 1))
                break
        else:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        raw[key] = value

    def need(key):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")
        return raw[key]

    def number(key, required=True):
        if key not in raw:
            if required:
                need(key)
            return None
        try:
            return float(raw[key])
        except ValueError:
            raise ConfigError(f"{key} is not a number: {raw[key]!r}") from None

    params = ProtocolParams(ProtocolKind.parse(need("protocol")), number("k1"), number("k2"))
    paths = [need("topology")] + ([raw["topology2"]] if "topology2" in raw else [])
    topologies = tuple(read_topology(os.path.join(base_dir, p)) for p in paths)
    schedule = None
    if len(topologies) == 2:
        schedule = SwitchingSchedule(number("period"), number("duty"))
    seed = int(raw["seed"]) if "seed" in raw else None
    n = topologies[0].n
    x0 = _parse_x0(raw["x0"]) if "x0" in raw else random_initial_state(n, seed)
    return SimConfig(
        params=params,
        tau=number("tau"),
        topologies=topologies,
        x0=x0,
        t_end=number("t_end"),
        schedule=schedule,
        step=number("step", required=False),
        seed=seed,
    )


def read_config(path) -> SimConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), os.path.dirname(os.path.abspath(path)))


def write_trace_csv(trace: Trace, fh, metadata: dict | None = None) -> None:
    """Trace CSV: ``#`` metadata block (step, seed, switch times) then ``t,x1,v1,...``."""
    n = trace.states.shape[1] // 2
    fh.write(f"# h {fmt(trace.h)}\n")
    fh.write(f"# tau {fmt(trace.tau)}\n")
    fh.write(f"# seed {trace.seed if trace.seed is not None else 'none'}\n")
    for key, value in (metadata or {}).items():
        fh.write(f"# {key} {value}\n")
    for t in trace.switch_times:
        fh.write(f"# switch {fmt(t)}\n")
    cols = ["t"] + [f"{c}{i}" for i in range(1, n + 1) for c in ("x", "v")]
    fh.write(",".join(cols) + "\n")
    for t, row in zip(trace.times, trace.states):
        fh.write(fmt(t) + "," + ",".join(fmt(v) for v in row) + "\n")
    if trace.diverged:
        fh.write("# aborted\n")
