"""Penalty ("soft") contact model.

The impulse rule is replaced by a stiff damped spring that acts only while
the constrained coordinate penetrates the wall:

    h(nu, z) = (-2 alpha nu y_1 - (1 + alpha^2) nu^2 x_1) chi_-(x_1) e_1,
    alpha = -log(r0) / pi.

Without external forces a penetration lasts exactly ``pi / nu`` and returns
with velocity ``-r0`` times the entry velocity, so the soft model converges
to the impulse model as ``nu`` grows.  The integrator switches between an
outside phase (ordinary steps) and an inside phase whose step is capped so
the fast oscillation is resolved explicitly.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .core import SystemDef, check_state
from .integrator import (DEFAULT_SETTINGS, IntegrationError, IntegrationSettings, Segment,
                         run_flow, shift_map)
from .variational import shift_map_jacobian

log = logging.getLogger(__name__)


class AnomalousBounceError(RuntimeError):
    """No exit from the wall within the expected time (stiffness too low)."""


@dataclass(frozen=True)
class PenaltySettings:
    """Stiffness ``nu`` and target restitution ``r0`` of the penalty spring."""

    nu: float
    restitution: float = 1.0
    step_cap: Optional[float] = None

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not 0.0 < self.restitution <= 1.0:
            raise ValueError(f"restitution must lie in (0, 1], got {self.restitution}")
        if self.step_cap is not None and not self.step_cap > 0:
            raise ValueError("step_cap must be positive")

    @property
    def alpha(self) -> float:
        return -np.log(self.restitution) / np.pi + 0.0  # no negative zero for r0 = 1

    @property
    def max_penetration_step(self) -> float:
        # 40 steps per half oscillation of the wall spring
        cap = np.pi / (40 * self.nu)
        return cap if self.step_cap is None else min(cap, self.step_cap)

    @property
    def bounce_duration(self) -> float:
        """In-wall time of a force-free bounce."""
        return np.pi / self.nu

    def with_nu(self, nu: float) -> "PenaltySettings":
        return PenaltySettings(nu, self.restitution, self.step_cap)


def _wall_acceleration(ps: PenaltySettings, x1: float, y1: float) -> float:
    a, nu = ps.alpha, ps.nu
    return -2 * a * nu * y1 - (1 + a * a) * nu * nu * x1


def penalty_force(ps: PenaltySettings, z, n: Optional[int] = None) -> np.ndarray:
    """Acceleration vector of the wall spring; zero unless ``x_1 < 0``."""
    z = check_state(z, n)
    out = np.zeros(z.size // 2)
    if z[0] < 0:
        out[0] = _wall_acceleration(ps, z[0], z[1])
    return out


@dataclass(frozen=True)
class BounceRecord:
    entry_time: float
    entry_velocity: float
    exit_time: float
    exit_velocity: float
    penetration_depth: float
    restitution_error: float
    nu: float

    @property
    def duration(self) -> float:
        return self.exit_time - self.entry_time

    @property
    def scaled_error(self) -> float:
        """``error * nu``, the quantity bounded uniformly in ``nu``."""
        return self.restitution_error * self.nu

    @property
    def regular(self) -> bool:
        return (np.pi / (2 * self.nu) < self.duration < 2 * np.pi / self.nu
                and self.exit_velocity > 0 and self.penetration_depth > 0)


@dataclass
class SoftTrajectory:
    segments: List[Segment] = field(default_factory=list)
    inside: List[bool] = field(default_factory=list)
    bounces: List[BounceRecord] = field(default_factory=list)
    z_end: Optional[np.ndarray] = None
    t_end: float = 0.0

    def state(self, t: float) -> np.ndarray:
        for seg in self.segments:
            lo, hi = sorted((seg.t_start, seg.t_end))
            if lo <= t <= hi:
                return seg(t)
        raise ValueError(f"time {t} not covered")


def _fields(sys: SystemDef, mu: float, ps: PenaltySettings,
            g: Optional[Callable] = None):
    def base(t, z):
        dz = sys.vector_field(t, z, mu)
        if g is not None:
            dz[1::2] += np.asarray(g(t, z, mu), dtype=float)
        return dz

    def inside(t, z):
        # smooth in-wall branch; it agrees with h wherever x1 < 0
        dz = base(t, z)
        dz[1] += _wall_acceleration(ps, z[0], z[1])
        return dz

    return base, inside


def integrate_soft(sys: SystemDef, mu: float, ps: PenaltySettings, t0: float, z0,
                   duration: float, settings: IntegrationSettings = DEFAULT_SETTINGS,
                   g: Optional[Callable] = None, max_bounces: int = 100_000) -> SoftTrajectory:
    """Integrate the penalty model over ``[t0, t0 + duration]``.

    ``g(t, z, mu)`` is an optional extra force; its smallness is the caller's
    responsibility and is only logged.
    """
    z = check_state(z0, sys.n)
    if g is not None:
        log.debug("soft integration with perturbation, |g(t0, z0)| = %g",
                  np.linalg.norm(g(t0, z, mu)))
    base, inside = _fields(sys, mu, ps, g)
    t, t_final = float(t0), float(t0) + duration
    out = SoftTrajectory()
    entry = None
    while t < t_final:
        in_wall = z[0] < 0 or (z[0] == 0 and z[1] < 0)
        if in_wall:
            if entry is None:
                entry = (t, z[1])
            try:
                seg, reason = run_flow(inside, t, z, t_final, settings, crossing_sign=-1.0,
                                       max_step=ps.max_penetration_step)
            except IntegrationError as exc:
                raise IntegrationError(f"in-wall integration failed at nu = {ps.nu:g}: {exc}")
            out.segments.append(seg)
            out.inside.append(True)
            t, z = seg.t_end, seg.z_end.copy()
            if reason == "hit_delimiter":
                out.bounces.append(_record(ps, entry, t, z[1], _max_depth(seg)))
                entry = None
                if z[1] <= 0:
                    z[1] = 0.0
                if len(out.bounces) > max_bounces:
                    raise IntegrationError("bounce cap exceeded")
        else:
            seg, reason = run_flow(base, t, z, t_final, settings, crossing_sign=1.0)
            out.segments.append(seg)
            out.inside.append(False)
            t, z = seg.t_end, seg.z_end.copy()
    out.z_end, out.t_end = z, t
    return out


def _max_depth(seg: Segment) -> float:
    # max of -x1 equals -(min of x1)
    return max(-seg.min_x1()[0], 0.0)


def _record(ps: PenaltySettings, entry, t_exit: float, y_exit: float, depth: float) -> BounceRecord:
    t_in, y_in = entry
    err = abs(y_exit + ps.restitution * y_in)
    return BounceRecord(t_in, y_in, t_exit, y_exit, depth, err, ps.nu)


def bounce_map_error(sys: SystemDef, mu: float, ps: PenaltySettings, t0: float, zbar0,
                     y0: float, settings: IntegrationSettings = DEFAULT_SETTINGS,
                     g: Optional[Callable] = None, slack: float = 0.1) -> BounceRecord:
    """One penetration episode entered at ``(t0, x1=0, y1=y0 < 0, zbar0)``."""
    if not y0 < 0:
        raise ValueError(f"entry velocity must be negative, got {y0}")
    z = np.concatenate([[0.0, y0], np.asarray(zbar0, dtype=float).ravel()])
    z = check_state(z, sys.n)
    _, inside = _fields(sys, mu, ps, g)
    t_lim = t0 + 2 * np.pi / ps.nu * (1 + slack)
    seg, reason = run_flow(inside, t0, z, t_lim, settings, crossing_sign=-1.0,
                           max_step=ps.max_penetration_step)
    if reason != "hit_delimiter":
        raise AnomalousBounceError(f"no exit within {t_lim - t0:g} at nu = {ps.nu:g}")
    return _record(ps, (t0, y0), seg.t_end, seg.z_end[1], _max_depth(seg))


def in_wall_closed_form(ps: PenaltySettings, y0: float, t):
    """Force-free in-wall solution ``x_1 = (y0/nu) e^{-alpha nu t} sin(nu t)`` and its velocity."""
    a, nu = ps.alpha, ps.nu
    s = nu * np.asarray(t, dtype=float)
    e = np.exp(-a * s)
    x = y0 / nu * e * np.sin(s)
    v = y0 * e * (np.cos(s) - a * np.sin(s))
    return x, v


def fit_error_slope(records: Sequence[BounceRecord]):
    """Least-squares slope of ``log error`` against ``log nu``."""
    nu = np.log([rec.nu for rec in records])
    err = np.log([rec.restitution_error for rec in records])
    return float(np.polyfit(nu, err, 1)[0])


def write_bounce_csv(records: Sequence[BounceRecord], path, header: Sequence[str] = ()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["nu", "error", "delta_hat", "duration", "penetration_depth",
                    "entry_velocity", "exit_velocity"])
        for rec in records:
            w.writerow([f"{v:.17g}" for v in (rec.nu, rec.restitution_error, rec.scaled_error,
                                              rec.duration, rec.penetration_depth,
                                              rec.entry_velocity, rec.exit_velocity)])


# --------------------------------------------------------------------------- conjugacy


def soft_shift_map(sys: SystemDef, mu: float, ps: PenaltySettings, theta: float, z0,
                   settings: IntegrationSettings = DEFAULT_SETTINGS,
                   g: Optional[Callable] = None) -> np.ndarray:
    """Stroboscopic map of the penalty model over ``[-theta, T - theta]``."""
    return integrate_soft(sys, mu, ps, -theta, z0, sys.period, settings, g).z_end


def _fd_jacobian(fun, z, step):
    n2 = z.size
    J = np.empty((n2, n2))
    for j in range(n2):
        e = np.zeros(n2)
        e[j] = step
        J[:, j] = (fun(z + e) - fun(z - e)) / (2 * step)
    return J


@dataclass
class ConjugacyRow:
    nu: float
    point: Optional[np.ndarray]
    displacement: float
    eigenvalues: Optional[np.ndarray]
    saddle: Optional[bool]
    converged: bool
    period: int = 1
    message: str = ""


@dataclass
class ConjugacyTable:
    impulse_point: np.ndarray
    impulse_eigenvalues: np.ndarray
    rows: List[ConjugacyRow]

    @property
    def impulse_saddle(self) -> bool:
        m = np.abs(self.impulse_eigenvalues)
        return bool(np.any(m > 1) and np.any(m < 1))

    def displacements(self) -> np.ndarray:
        return np.array([row.displacement for row in self.rows])

    def inversions(self) -> int:
        d = self.displacements()
        return int(np.count_nonzero(np.diff(d) >= 0))

    def stability_preserved(self) -> bool:
        return all(row.converged and row.saddle == self.impulse_saddle for row in self.rows)

    def to_csv(self, path, header: Sequence[str] = ()) -> None:
        with open(path, "w", newline="") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            n2 = self.impulse_point.size
            w.writerow(["nu", "displacement", "converged", "saddle", "eig_mod_max", "eig_mod_min"]
                       + [f"z{k}" for k in range(n2)])
            for row in self.rows:
                mods = np.abs(row.eigenvalues) if row.eigenvalues is not None else [np.nan]
                pt = row.point if row.point is not None else [np.nan] * n2
                w.writerow([f"{row.nu:.17g}", f"{row.displacement:.17g}", int(row.converged),
                            int(bool(row.saddle)), f"{max(mods):.17g}", f"{min(mods):.17g}"]
                           + [f"{v:.17g}" for v in pt])


def conjugacy_check(sys: SystemDef, mu: float, theta: float, impulse_point, nu_list: Sequence[float],
                    settings: IntegrationSettings = DEFAULT_SETTINGS, period: int = 1,
                    restitution: Optional[float] = None, g: Optional[Callable] = None,
                    fd_step: float = 1e-7, tol: float = 1e-10, max_iter: int = 20) -> ConjugacyTable:
    """Track a periodic point of the impulse shift map into the penalty model.

    For every ``nu`` the soft period map's fixed point of ``G^period`` is
    found by Newton's method seeded at the impulse point, using a
    finite-difference Jacobian that also supplies the stability type.
    """
    z_imp = check_state(impulse_point, sys.n)
    r0 = sys.r(mu) if restitution is None else restitution
    jac = np.eye(z_imp.size)
    zz = z_imp
    for _ in range(period):
        rep = shift_map_jacobian(sys, mu, theta, zz, settings)
        if rep.n_impacts and rep.incoming_velocity < 1e-3:
            raise ValueError("impulse orbit has a near-grazing impact; conjugacy premise violated")
        jac = rep.jacobian @ jac
        zz = shift_map(sys, mu, theta, zz, settings)
    imp_eig = np.linalg.eigvals(jac)
    rows = []
    z = z_imp.copy()
    for nu in nu_list:
        ps = PenaltySettings(nu, r0)

        def G(w):
            for _ in range(period):
                w = soft_shift_map(sys, mu, ps, theta, w, settings, g)
            return w

        row = ConjugacyRow(nu, None, np.nan, None, None, False, period)
        try:
            for _ in range(max_iter):
                res = G(z) - z
                J = _fd_jacobian(G, z, fd_step)
                dz = np.linalg.solve(J - np.eye(z.size), -res)
                z = z + dz
                if np.linalg.norm(dz) < tol * (1 + np.linalg.norm(z)):
                    break
            else:
                raise RuntimeError("Newton did not converge")
            J = _fd_jacobian(G, z, fd_step)
            eig = np.linalg.eigvals(J)
            mods = np.abs(eig)
            row = ConjugacyRow(nu, z.copy(), float(np.linalg.norm(z - z_imp)), eig,
                               bool(np.any(mods > 1) and np.any(mods < 1)), True, period)
        except (RuntimeError, np.linalg.LinAlgError) as exc:
            row.message = str(exc)
            z = z_imp.copy()
        rows.append(row)
    return ConjugacyTable(z_imp, imp_eig, rows)
