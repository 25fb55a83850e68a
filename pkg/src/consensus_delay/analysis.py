"""Post-processing of simulation traces: group decision value, disagreement
norm, switch-time jumps and a consensus/divergence verdict."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import DimensionMismatchError, Trace
from .graph import ProtocolKind, Spectrum, Topology
from .stability import fmt


@dataclass(frozen=True, eq=False)
class DecisionTrace:
    times: np.ndarray
    position: np.ndarray
    velocity: np.ndarray


@dataclass(frozen=True, eq=False)
class DisagreementTrace:
    times: np.ndarray
    norm: np.ndarray
    full_norm: np.ndarray
    jumps: tuple  # (switch time, |d after - d before|)
    aborted: bool = False


class Verdict(enum.Enum):
    CONSENSUS = "consensus"
    DIVERGENT = "divergent"
    UNDECIDED = "undecided"


@dataclass(frozen=True)
class Outcome:
    verdict: Verdict
    t_star: float | None = None


def _as_list(x):
    return list(x) if isinstance(x, (list, tuple)) else [x]


def centroid(trace: Trace, topologies, kind: ProtocolKind) -> DecisionTrace:
    """Group decision value per sample.

    Protocol A uses the degree-weighted average of whichever topology is
    active at the sample; protocol B the plain average.
    """
    kind = ProtocolKind.parse(kind)
    topologies = _as_list(topologies)
    n = trace.states.shape[1] // 2
    if any(t.n != n for t in topologies):
        raise DimensionMismatchError("topology size does not match the trace")
    pos, vel = trace.positions, trace.velocities
    if kind is ProtocolKind.B:
        return DecisionTrace(trace.times, pos.mean(axis=1), vel.mean(axis=1))
    weights = np.array([np.asarray(t.degrees, float) / sum(t.degrees) for t in topologies])
    w = weights[trace.active]
    return DecisionTrace(trace.times, np.einsum("ij,ij->i", w, pos), np.einsum("ij,ij->i", w, vel))


def _modal_states(states: np.ndarray, spec: Spectrum) -> np.ndarray:
    """Apply (T^-1 kron I2) row-wise; result columns are [xi1, xi1', xi2, xi2', ...]."""
    n = spec.n
    if states.shape[1] != 2 * n:
        raise DimensionMismatchError(f"transform is {n}x{n} but the state has {states.shape[1]} entries")
    pos = states[:, 0::2] @ spec.inverse_transform.T
    vel = states[:, 1::2] @ spec.inverse_transform.T
    out = np.empty_like(states)
    out[:, 0::2] = pos
    out[:, 1::2] = vel
    return out


def disagreement(trace: Trace, spectra) -> DisagreementTrace:
    """Disagreement norm ``d`` (subsystems 2..n) and full modal norm ``f``.

    ``spectra[a]`` must diagonalise topology ``a`` of the run. Jumps compare
    ``d`` at the switch sample under the outgoing and the incoming transform.
    """
    spectra = _as_list(spectra)
    if len({s.kind for s in spectra}) != 1:
        raise ValueError("spectra of mixed protocol kinds")
    d = np.empty(len(trace.times))
    f = np.empty(len(trace.times))
    for a, spec in enumerate(spectra):
        rows = trace.active == a
        if not rows.any():
            continue
        xi = _modal_states(trace.states[rows], spec)
        d[rows] = np.linalg.norm(xi[:, 2:], axis=1)
        f[rows] = np.linalg.norm(xi, axis=1)
    jumps = []
    for k in range(1, len(trace.active)):
        before, after = trace.active[k - 1], trace.active[k]
        if before == after:
            continue
        x = trace.states[k : k + 1]
        d_out = np.linalg.norm(_modal_states(x, spectra[before])[0, 2:])
        d_in = np.linalg.norm(_modal_states(x, spectra[after])[0, 2:])
        jumps.append((float(trace.times[k]), float(abs(d_in - d_out))))
    return DisagreementTrace(trace.times, d, f, tuple(jumps), trace.diverged)


def detect_outcome(dtrace: DisagreementTrace, epsilon_rel: float = 1e-3, growth_factor: float = 10.0) -> Outcome:
    d = dtrace.norm
    if len(d) == 0:
        raise ValueError("empty disagreement trace")
    d0 = d[0]
    if d0 == 0:
        return Outcome(Verdict.CONSENSUS, float(dtrace.times[0]))
    if dtrace.aborted or not np.isfinite(d[-1]) or d[-1] > growth_factor * d0:
        return Outcome(Verdict.DIVERGENT)
    below = d < epsilon_rel * d0
    tail = max(1, math.ceil(0.05 * len(d)))
    if below[-tail:].all():
        above = np.flatnonzero(~below)
        first = 0 if len(above) == 0 else above[-1] + 1
        return Outcome(Verdict.CONSENSUS, float(dtrace.times[first]))
    return Outcome(Verdict.UNDECIDED)


def write_analysis_csv(decision: DecisionTrace, dtrace: DisagreementTrace, fh) -> None:
    fh.write("t,centroid,centroid_vel,disagreement_norm,full_norm\n")
    for row in zip(dtrace.times, decision.position, decision.velocity, dtrace.norm, dtrace.full_norm):
        fh.write(",".join(fmt(float(v)) for v in row) + "\n")
    for t, mag in dtrace.jumps:
        fh.write(f"# jump {fmt(t)} {fmt(mag)}\n")
    if dtrace.aborted:
        fh.write("# aborted\n")
