"""Jacobians of the flow and of the shift map across impacts.

Between impacts the matrix variational equation is integrated alongside the
state.  Across a regular impact the linearisation is the saltation matrix

    B = DR + (F+ - DR F-) e1^T / (e1 . F-),

where ``DR = diag(1, -r, 1, ...)`` is the derivative of the impact rule and
``F-``, ``F+`` are the vector fields just before and after the impact.  For the
wall ``x_1 = 0`` only the first column of ``B`` differs from ``DR``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import SystemDef, check_state
from .integrator import (DEFAULT_SETTINGS, ImpactEvent, IntegrationSettings, Segment,
                         Trajectory, run_flow, shift_map, simulate)


class GrazingError(ValueError):
    """A saltation matrix was requested for a zero-velocity contact."""


@dataclass(frozen=True)
class SaltationMatrix:
    matrix: np.ndarray
    incoming_velocity: float
    restitution: float

    @property
    def b21(self) -> float:
        return float(self.matrix[1, 0])

    @property
    def tangential_column(self) -> np.ndarray:
        """Entries ``b_{31}, ..., b_{2n,1}``."""
        return self.matrix[2:, 0].copy()

    @property
    def det(self) -> float:
        return self.restitution ** 2


@dataclass
class MonodromyReport:
    """Shift-map Jacobian at a point together with its factorisation."""

    jacobian: np.ndarray
    factors: List[np.ndarray]
    factor_kinds: List[str]
    eigenvalues: np.ndarray
    dominant_eigenvalue: complex
    incoming_velocity: Optional[float]
    impacts: List[ImpactEvent] = field(default_factory=list)
    ill_conditioned: bool = False
    restitution: float = 1.0

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.jacobian))

    @property
    def n_impacts(self) -> int:
        return len(self.impacts)

    @property
    def is_saddle(self) -> bool:
        mods = np.abs(self.eigenvalues)
        return bool(np.any(mods > 1) and np.any(mods < 1))

    def factor_product(self) -> np.ndarray:
        out = np.eye(self.jacobian.shape[0])
        for f in self.factors:
            out = f @ out
        return out

    def to_csv_block(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["quantity", "value"])
        for i, lam in enumerate(self.eigenvalues):
            w.writerow([f"eig{i}_re", f"{lam.real:.17g}"])
            w.writerow([f"eig{i}_im", f"{lam.imag:.17g}"])
        w.writerow(["det", f"{self.det:.17g}"])
        w.writerow(["factors", len(self.factors)])
        w.writerow(["impacts", self.n_impacts])
        y01 = "nan" if self.incoming_velocity is None else f"{self.incoming_velocity:.17g}"
        w.writerow(["Y01", y01])
        w.writerow(["ill_conditioned", int(self.ill_conditioned)])
        return buf.getvalue()


def _variational_rhs(sys: SystemDef, mu: float):
    n2 = 2 * sys.n

    def fun(t, w):
        z = w[:n2]
        phi = w[n2:].reshape(n2, n2)
        out = np.empty_like(w)
        out[:n2] = sys.vector_field(t, z, mu)
        out[n2:] = (sys.state_jacobian(t, z, mu) @ phi).ravel()
        return out

    return fun


def flight_jacobian(sys: SystemDef, mu: float, segment: Segment,
                    settings: IntegrationSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """Derivative of the flight map over an impact-free segment."""
    n2 = 2 * sys.n
    if segment.t_end == segment.t_start:
        return np.eye(n2)
    w0 = np.concatenate([segment.z_start, np.eye(n2).ravel()])
    seg, _ = run_flow(_variational_rhs(sys, mu), segment.t_start, w0, segment.t_end,
                      settings, crossing_sign=None)
    return seg.z_end[n2:].reshape(n2, n2)


def flow_with_jacobian(sys: SystemDef, mu: float, t0: float, z0, t1: float,
                       settings: IntegrationSettings = DEFAULT_SETTINGS) -> Tuple[np.ndarray, np.ndarray]:
    """Free flow (wall ignored) from ``t0`` to ``t1`` and its derivative."""
    z0 = check_state(z0, sys.n)
    n2 = z0.size
    w0 = np.concatenate([z0, np.eye(n2).ravel()])
    seg, _ = run_flow(_variational_rhs(sys, mu), t0, w0, t1, settings, crossing_sign=None)
    return seg.z_end[:n2], seg.z_end[n2:].reshape(n2, n2)


def saltation(sys: SystemDef, mu: float, event: ImpactEvent,
              r: Optional[float] = None) -> SaltationMatrix:
    """Saltation matrix of a regular impact with the wall ``x_1 = 0``."""
    if r is None:
        r = sys.r(mu)
    Y = float(event.incoming_velocity)
    if not Y > 0:
        raise GrazingError(f"incoming velocity must be positive, got {Y}")
    zbar = np.asarray(event.tangential_state, dtype=float)
    t = event.time
    f_minus = sys.f(t, np.concatenate([[0.0, -Y], zbar]), mu)
    f_plus = sys.f(t, np.concatenate([[0.0, r * Y], zbar]), mu)
    n2 = 2 * sys.n
    B = np.eye(n2)
    B[0, 0] = -r
    B[1, 1] = -r
    B[1, 0] = -(f_plus[0] + r * f_minus[0]) / Y
    # tangential velocities: (f_j- - f_j+)/Y
    B[3::2, 0] = (f_minus[1:] - f_plus[1:]) / Y
    return SaltationMatrix(B, Y, r)


def trajectory_jacobian(sys: SystemDef, mu: float, traj: Trajectory,
                        settings: IntegrationSettings = DEFAULT_SETTINGS):
    """Ordered flight/saltation factors of a trajectory and their product."""
    if traj.sticking_intervals:
        raise ValueError("trajectory contains sticking; the map is not differentiable there")
    n2 = 2 * sys.n
    r = sys.r(mu)
    factors, kinds = [], []
    jac = np.eye(n2)
    for kind, idx in traj.events:
        if kind == "segment":
            M = flight_jacobian(sys, mu, traj.segments[idx], settings)
            kinds.append("flight")
        else:
            M = saltation(sys, mu, traj.impacts[idx], r).matrix
            kinds.append("saltation")
        factors.append(M)
        jac = M @ jac
    return jac, factors, kinds


def shift_map_jacobian(sys: SystemDef, mu: float, theta: float, z0,
                       settings: IntegrationSettings = DEFAULT_SETTINGS,
                       wall: bool = True) -> MonodromyReport:
    """Jacobian of the stroboscopic map at ``z0`` as a product of factors."""
    _, traj = shift_map(sys, mu, theta, z0, settings, return_trajectory=True, wall=wall)
    jac, factors, kinds = trajectory_jacobian(sys, mu, traj, settings)
    eig = np.linalg.eigvals(jac)
    dom = eig[np.argmax(np.abs(eig))]
    y_min = None if not traj.impacts else traj.min_impact_velocity
    ill = y_min is not None and y_min < 10 * settings.chatter_velocity
    return MonodromyReport(jac, factors, kinds, eig, dom, y_min, list(traj.impacts), ill,
                           restitution=sys.r(mu))


def fd_shift_map_jacobian(sys: SystemDef, mu: float, theta: float, z0,
                          settings: IntegrationSettings = DEFAULT_SETTINGS,
                          step: float = 1e-6, wall: bool = True) -> np.ndarray:
    """Central finite-difference Jacobian of :func:`shift_map` (oracle)."""
    z0 = check_state(z0, sys.n)
    n2 = z0.size
    J = np.empty((n2, n2))
    for j in range(n2):
        e = np.zeros(n2)
        e[j] = step
        J[:, j] = (shift_map(sys, mu, theta, z0 + e, settings, wall=wall)
                   - shift_map(sys, mu, theta, z0 - e, settings, wall=wall)) / (2 * step)
    return J


@dataclass(frozen=True)
class AsymptoteFit:
    """``|lambda_+| ~ prefactor * Y01**exponent``."""

    prefactor: float
    exponent: float
    velocities: np.ndarray
    eigenvalues: np.ndarray

    def predict(self, y01):
        return self.prefactor * np.asarray(y01) ** self.exponent


def fit_power_law(y01: Sequence[float], lam: Sequence[float]) -> Tuple[float, float]:
    """Least-squares fit of ``log|lam| = log(c) + k log(y01)``; returns ``(c, k)``."""
    x = np.log(np.asarray(y01, dtype=float))
    y = np.log(np.abs(np.asarray(lam, dtype=float)))
    k, logc = np.polyfit(x, y, 1)
    return float(np.exp(logc)), float(k)


def dominant_eigenvalue_asymptote(sys: SystemDef, mu_sequence: Sequence[float], theta: float,
                                  settings: IntegrationSettings = DEFAULT_SETTINGS,
                                  points: Optional[Sequence[np.ndarray]] = None) -> AsymptoteFit:
    """Regress the dominant shift-map eigenvalue against the grazing impact speed.

    ``points[i]`` is the tracked point for ``mu_sequence[i]``; each must
    produce a trajectory with a single low-velocity impact per period.
    """
    mus = list(mu_sequence)
    if len(mus) < 4:
        raise ValueError("need at least 4 parameter values for the regression")
    if points is None or len(points) != len(mus):
        raise ValueError("one tracked point per parameter value is required")
    ys, lams = [], []
    for mu, z in zip(mus, points):
        rep = shift_map_jacobian(sys, mu, theta, z, settings)
        if rep.n_impacts != 1:
            raise ValueError(f"expected one impact per period at mu = {mu}, got {rep.n_impacts}")
        ys.append(rep.incoming_velocity)
        lams.append(abs(rep.dominant_eigenvalue))
    ys = np.array(ys)
    diffs = np.diff(ys)
    if not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise ValueError("impact velocities are not monotone along the parameter sequence")
    c, k = fit_power_law(ys, lams)
    return AsymptoteFit(c, k, ys, np.array(lams))
