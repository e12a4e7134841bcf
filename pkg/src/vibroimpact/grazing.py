"""Grazing of a periodic family: location, separatrix and chaos conditions.

The grazing value is located by continuing the periodic orbit of the smooth
flow (the wall is ignored while tracking, so the orbit can be followed
through the delimiter) and finding where its minimal distance to the wall
changes sign.  The limiting matrix ``A`` is the shift-map Jacobian at the
non-impacting periodic point just before grazing.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq, fsolve

from .core import SystemDef, check_state
from .integrator import (DEFAULT_SETTINGS, IntegrationSettings, integrate_flight, shift_map)
from .variational import MonodromyReport, shift_map_jacobian

UNIT_CIRCLE_TOL = 1e-9
ANGLE_TOL = 1e-6


class ConvergenceError(RuntimeError):
    """Newton iteration failed to converge or hit a singular Jacobian."""


class BracketError(ValueError):
    """A root bracket does not straddle a sign change."""


class DegenerateGrazingError(ValueError):
    """The normal force at the grazing point is not strictly positive."""


def find_periodic_orbit(sys: SystemDef, mu: float, theta: float, guess,
                        settings: IntegrationSettings = DEFAULT_SETTINGS,
                        tol: float = 1e-9, max_iter: int = 50,
                        wall: bool = True) -> Tuple[np.ndarray, MonodromyReport]:
    """Fixed point of the shift map by Newton's method.

    Stops when ``|S(z) - z| < tol * (1 + |z|)``.
    """
    z = check_state(guess, sys.n)
    n2 = z.size
    for _ in range(max_iter):
        rep = shift_map_jacobian(sys, mu, theta, z, settings, wall=wall)
        # recompute S(z) from the same run would be cheaper; keep it explicit
        residual = shift_map(sys, mu, theta, z, settings, wall=wall) - z
        if np.linalg.norm(residual) < tol * (1 + np.linalg.norm(z)):
            return z, rep
        M = rep.jacobian - np.eye(n2)
        if abs(np.linalg.det(M)) < 1e-12 * max(1.0, np.linalg.norm(M) ** n2):
            if np.linalg.norm(residual) < 1e-6 * tol:
                return z, rep
            raise ConvergenceError("I - DS is singular; Newton step undefined")
        z = z - np.linalg.solve(M, residual)
        if not np.all(np.isfinite(z)):
            raise ConvergenceError("Newton iterate diverged")
        if wall and z[0] < 0:
            z[0] = 0.0
    raise ConvergenceError(f"Newton did not converge in {max_iter} iterations")


@dataclass(frozen=True)
class GrazingLocation:
    """Where and when the tracked periodic orbit touches the wall."""

    mu_star: float
    grazing_time: float
    phi0: float
    grazing_state: np.ndarray
    periodic_point: np.ndarray
    theta: float
    # sign s such that mu_star + s*eps is on the non-impacting side
    free_side: float


def orbit_min_distance(sys: SystemDef, mu: float, theta: float, z,
                       settings: IntegrationSettings = DEFAULT_SETTINGS) -> Tuple[float, float, np.ndarray]:
    """Minimum of ``x_1`` along one period of the free flow from ``z``."""
    seg, _ = integrate_flight(sys, mu, -theta, z, sys.period - theta, settings, wall=False)
    xmin, tmin = seg.min_x1()
    return xmin, tmin, seg(tmin)


def choose_theta(grazing_time: float, period: float) -> float:
    """Window offset placing the grazing instant in the middle of ``[-theta, T - theta)``."""
    return float(np.mod(period / 2 - grazing_time, period))


def find_grazing_parameter(sys: SystemDef, theta: float, mu_bracket: Tuple[float, float], guess,
                           settings: IntegrationSettings = DEFAULT_SETTINGS,
                           xtol: float = 1e-13) -> GrazingLocation:
    """Parameter at which the continued periodic orbit touches the wall."""
    mu_a, mu_b = map(float, mu_bracket)
    cache = {"z": check_state(guess, sys.n)}

    def g(mu):
        try:
            z, _ = find_periodic_orbit(sys, mu, theta, cache["z"], settings, wall=False)
        except ConvergenceError as exc:
            raise ConvergenceError(f"orbit continuation lost at mu = {mu}: {exc}") from exc
        cache["z"] = z
        return orbit_min_distance(sys, mu, theta, z, settings)[0]

    ga, gb = g(mu_a), g(mu_b)
    if ga * gb > 0:
        raise BracketError(f"min distance has the same sign at both ends ({ga:.3g}, {gb:.3g})")
    mu_star = brentq(g, mu_a, mu_b, xtol=xtol, rtol=4 * np.finfo(float).eps)
    z, _ = find_periodic_orbit(sys, mu_star, theta, cache["z"], settings, wall=False)
    xmin, tmin, zg = orbit_min_distance(sys, mu_star, theta, z, settings)
    zrest = zg.copy()
    zrest[0] = 0.0
    zrest[1] = 0.0
    phi0 = float(sys.f(tmin, zrest, mu_star)[0])
    if not phi0 > 0:
        raise DegenerateGrazingError(f"normal force at grazing is {phi0:.3g} <= 0")
    free_side = np.sign(ga if ga > 0 else gb) * np.sign(mu_a - mu_b if ga > 0 else mu_b - mu_a)
    return GrazingLocation(mu_star=float(mu_star), grazing_time=float(np.mod(tmin, sys.period)),
                           phi0=phi0, grazing_state=zg, periodic_point=z, theta=theta,
                           free_side=float(free_side))


def limiting_matrix(sys: SystemDef, loc: GrazingLocation,
                    settings: IntegrationSettings = DEFAULT_SETTINGS,
                    offset: Optional[float] = None, theta: Optional[float] = None):
    """Shift-map Jacobian at the non-impacting periodic point next to grazing.

    Returns ``(A, mu, z)``.  The default offset is ``1e-4 |mu*|``.
    """
    if offset is None:
        offset = 1e-4 * max(abs(loc.mu_star), 1e-12)
    theta = loc.theta if theta is None else theta
    mu = loc.mu_star + loc.free_side * offset
    guess = loc.periodic_point if theta == loc.theta else None
    if guess is None:
        seg, _ = integrate_flight(sys, loc.mu_star, -loc.theta, loc.periodic_point, -theta
                                  if -theta >= -loc.theta else -theta + sys.period, settings,
                                  wall=False)
        guess = seg.z_end
    z, rep = find_periodic_orbit(sys, mu, theta, guess, settings, wall=True)
    if rep.n_impacts:
        raise ValueError("periodic point on the chosen side impacts the wall")
    return rep.jacobian, mu, z


# --------------------------------------------------------------------------- separatrix


@dataclass
class SeparatrixModel:
    """Thresholds ``x_1(y_1)`` separating touching from non-touching states."""

    samples: List[Tuple[np.ndarray, float, float]]
    quadratic_coefficient: float
    reference_force: float
    fit_residual: float
    log_slope: float = np.nan

    @property
    def coefficient_ratio(self) -> float:
        """``c * phi0``: the fitted curvature in units of the inverse normal force."""
        return self.quadratic_coefficient * self.reference_force

    @property
    def probe_velocities(self) -> np.ndarray:
        return np.array([s[1] for s in self.samples])

    @property
    def thresholds(self) -> np.ndarray:
        return np.array([s[2] for s in self.samples])


def touches_wall(sys: SystemDef, mu: float, t_ref: float, z0, half_window: float,
                 settings: IntegrationSettings = DEFAULT_SETTINGS) -> bool:
    """Does the free solution through ``(t_ref, z0)`` reach ``x_1 <= 0`` within the window?"""
    z0 = check_state(z0, sys.n)
    if z0[0] <= 0:
        return True
    for t_end in (t_ref + half_window, t_ref - half_window):
        seg, reason = integrate_flight(sys, mu, t_ref, z0, t_end, settings, wall=False)
        xmin, _ = seg.min_x1()
        if xmin <= 0:
            return True
    return False


def separatrix_threshold(sys: SystemDef, mu: float, t_ref: float, probe, half_window: float,
                         scale: float, settings: IntegrationSettings = DEFAULT_SETTINGS,
                         xtol: float = 1e-14) -> float:
    """Bisection in ``x_1`` for the touching boundary at fixed ``(y_1, zbar)``."""
    probe = np.asarray(probe, dtype=float)

    def state(x1):
        return np.concatenate([[x1], probe])

    if not touches_wall(sys, mu, t_ref, state(0.0), half_window, settings):
        raise BracketError("probe does not touch the wall even at x1 = 0")
    hi = max(scale, 1e-12)
    for _ in range(60):
        if not touches_wall(sys, mu, t_ref, state(hi), half_window, settings):
            break
        hi *= 2
    else:
        raise BracketError("could not find a non-touching upper bracket")
    lo = 0.0
    while hi - lo > xtol * (1 + hi):
        mid = 0.5 * (lo + hi)
        if touches_wall(sys, mu, t_ref, state(mid), half_window, settings):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def sample_separatrix(sys: SystemDef, mu: float, loc: GrazingLocation, grid: Sequence,
                      settings: IntegrationSettings = DEFAULT_SETTINGS,
                      half_window: Optional[float] = None,
                      max_residual: float = 0.2) -> SeparatrixModel:
    """Sample the separatrix at the grazing phase and fit ``x_1 = c y_1^2``.

    ``grid`` holds probes ``(y_1, xbar, ybar)`` flattened as
    ``[y_1, x_2, y_2, ...]``; a bare float is a ``y_1`` probe with the
    tangential state fixed at the grazing values.
    """
    if half_window is None:
        half_window = sys.period / 2
    t_ref = loc.grazing_time
    zbar_g = loc.grazing_state[2:]
    samples = []
    for probe in grid:
        probe = np.atleast_1d(np.asarray(probe, dtype=float))
        if probe.size == 1:
            probe = np.concatenate([probe, zbar_g])
        y1 = probe[0]
        scale = 2 * y1 ** 2 / loc.phi0
        if y1 == 0:
            # the grazing point itself: the boundary passes through x1 = 0
            xs = 0.0
        else:
            xs = separatrix_threshold(sys, mu, t_ref, probe, half_window, scale, settings)
        samples.append((probe, float(y1), float(xs)))
    ys = np.array([s[1] for s in samples])
    xs = np.array([s[2] for s in samples])
    mask = ys != 0
    if not np.any(mask):
        raise ValueError("need at least one non-zero y1 probe for the fit")
    y2 = ys[mask] ** 2
    c = float(np.dot(y2, xs[mask]) / np.dot(y2, y2))
    resid = float(np.linalg.norm(xs[mask] - c * y2) / np.linalg.norm(xs[mask]))
    if resid > max_residual:
        raise ValueError(f"quadratic fit residual {resid:.2%} exceeds {max_residual:.0%}")
    slope = np.nan
    pos = mask & (xs > 0)
    if np.count_nonzero(pos) >= 2 and np.ptp(np.log(np.abs(ys[pos]))) > 0:
        slope = float(np.polyfit(np.log(np.abs(ys[pos])), np.log(xs[pos]), 1)[0])
    return SeparatrixModel(samples, c, loc.phi0, resid, slope)


# --------------------------------------------------------------------------- conditions


@dataclass
class GrazingReport:
    """Eigen-structure of ``A`` and the verdicts of the chaos conditions."""

    A: np.ndarray
    eigenvalues: np.ndarray
    stable_basis: np.ndarray
    unstable_basis: np.ndarray
    R_s: float
    R_u: float
    R_a: float
    R_alpha: float
    a12: float
    alpha12: float
    hyperbolic: bool
    off_wall: bool
    crossing: Optional[bool]
    branch: Optional[str]
    complex_split: bool = False
    angles: Tuple[float, float] = (np.nan, np.nan)
    crossing_ratio_a: float = np.nan
    crossing_ratio_alpha: float = np.nan
    notes: List[str] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.stable_basis.shape[1]

    @property
    def all_hold(self) -> bool:
        return bool(self.hyperbolic and self.off_wall and self.crossing)

    @property
    def verdict(self) -> str:
        if self.crossing is None and self.hyperbolic and self.off_wall:
            return "indeterminate"
        return "hold" if self.all_hold else "fail"

    CSV_FIELDS = ("eig_moduli", "R_s", "R_u", "R_a", "R_alpha", "a12", "alpha12",
                  "hyperbolic", "off_wall", "crossing", "branch", "verdict")

    def csv_row(self) -> List[str]:
        mods = ";".join(f"{abs(v):.17g}" for v in self.eigenvalues)
        return [mods] + [f"{v:.17g}" for v in (self.R_s, self.R_u, self.R_a, self.R_alpha,
                                               self.a12, self.alpha12)] + [
            str(self.hyperbolic), str(self.off_wall), str(self.crossing),
            self.branch or "none", self.verdict]

    def to_text(self) -> str:
        lines = ["grazing report", "eigenvalues: " + ", ".join(f"{v:.10g}" for v in self.eigenvalues)]
        lines.append(f"dim stable = {self.k}, dim unstable = {self.unstable_basis.shape[1]}")
        for name in ("R_s", "R_u", "R_a", "R_alpha", "a12", "alpha12"):
            lines.append(f"{name} = {getattr(self, name):.12g}")
        lines.append(f"hyperbolic saddle: {self.hyperbolic}")
        lines.append(f"invariant subspaces off the wall plane: {self.off_wall}")
        lines.append(f"kinked branch crosses the stable subspace: {self.crossing} "
                     f"(map {self.branch or 'none'})")
        lines.extend(f"note: {n}" for n in self.notes)
        lines.append(f"verdict: chaos conditions {self.verdict}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(self.CSV_FIELDS)
        w.writerow(self.csv_row())
        return buf.getvalue()


def _real_invariant_basis(vals: np.ndarray, vecs: np.ndarray, mask: np.ndarray) -> Tuple[np.ndarray, bool]:
    cols, has_complex = [], False
    for i in np.flatnonzero(mask):
        v = vecs[:, i]
        if abs(vals[i].imag) > 1e-14 * max(1.0, abs(vals[i])):
            has_complex = True
            if vals[i].imag > 0:
                cols.extend([v.real, v.imag])
        else:
            cols.append(v.real)
    if not cols:
        return np.zeros((vecs.shape[0], 0)), has_complex
    Q, _ = np.linalg.qr(np.column_stack(cols))
    return Q, has_complex


def _adapted_basis(Q: np.ndarray) -> Tuple[np.ndarray, float]:
    """Basis of span(Q) whose first vector is normal to its wall-plane part.

    Returns the basis (first column = unit vector of the subspace maximising
    ``|x_1|``, oriented so that ``x_1 > 0``) and the angle between the
    subspace and the plane ``x_1 = 0``.
    """
    w = Q[0, :].copy()
    norm_w = np.linalg.norm(w)
    angle = float(np.arcsin(min(1.0, norm_w)))
    if norm_w == 0:
        return Q.copy(), 0.0
    e1 = Q @ (w / norm_w)
    e1 /= np.linalg.norm(e1)
    if e1[0] < 0:
        e1 = -e1
    rest = []
    if Q.shape[1] > 1:
        # orthonormal complement of w in coefficient space spans the wall part
        _, _, vt = np.linalg.svd(w[None, :])
        rest = [Q @ c for c in vt[1:]]
    return np.column_stack([e1] + rest), angle


def _ratio(num: float, den: float) -> float:
    if den == 0:
        return np.inf if num > 0 else (-np.inf if num < 0 else np.nan)
    return num / den


def analyze_conditions(A) -> GrazingReport:
    """Check hyperbolicity, transversality to the wall and the crossing condition."""
    A = np.asarray(A, dtype=float)
    n2 = A.shape[0]
    if A.shape != (n2, n2) or n2 < 2 or n2 % 2:
        raise ValueError("A must be a 2n x 2n matrix")
    if abs(np.linalg.det(A)) < 1e-300:
        raise ValueError("A must be invertible")
    vals, vecs = np.linalg.eig(A)
    mods = np.abs(vals)
    on_circle = np.abs(mods - 1) <= UNIT_CIRCLE_TOL
    inside = (mods < 1) & ~on_circle
    outside = (mods > 1) & ~on_circle
    hyp = bool(not np.any(on_circle) and np.any(inside) and np.any(outside))
    Qs, cs = _real_invariant_basis(vals, vecs, inside)
    Qu, cu = _real_invariant_basis(vals, vecs, outside)
    notes = []
    if cs or cu:
        notes.append("complex eigenvalues: leading direction taken as the subspace vector maximising |x1|")
    Es, ang_s = _adapted_basis(Qs) if Qs.shape[1] else (Qs, 0.0)
    Eu, ang_u = _adapted_basis(Qu) if Qu.shape[1] else (Qu, 0.0)
    offw = bool(Qs.shape[1] and Qu.shape[1] and ang_s > ANGLE_TOL and ang_u > ANGLE_TOL)

    Ainv = np.linalg.inv(A)
    a12, a22 = A[0, 1], A[1, 1]
    al12, al22 = Ainv[0, 1], Ainv[1, 1]
    R_s = _ratio(Es[1, 0], Es[0, 0]) if Es.shape[1] and offw else np.nan
    R_u = _ratio(Eu[1, 0], Eu[0, 0]) if Eu.shape[1] and offw else np.nan
    R_a = _ratio(a22, a12)
    R_al = _ratio(al22, al12)

    # Abscissa of the crossing between the kinked unstable branch (direction A_2)
    # and the stable line, in units of the fixed point's distance to the wall.
    ratio_a = _ratio(R_u - R_s, R_a - R_s)
    ratio_al = _ratio(R_s - R_u, R_al - R_u)
    cross, branch = None, None
    if a12 == 0 and al12 == 0:
        notes.append("a12 = alpha12 = 0: crossing test indeterminate")
    elif not offw:
        cross = False
        notes.append("crossing test skipped: a subspace lies in the wall plane")
    elif a12 > 0 and ratio_a > 0:
        cross, branch = True, "forward"
    elif al12 > 0 and ratio_al > 0:
        cross, branch = True, "inverse"
    else:
        cross = False
    return GrazingReport(A=A, eigenvalues=vals, stable_basis=Es, unstable_basis=Eu,
                         R_s=float(R_s), R_u=float(R_u), R_a=float(R_a), R_alpha=float(R_al),
                         a12=float(a12), alpha12=float(al12), hyperbolic=hyp, off_wall=offw,
                         crossing=cross, branch=branch, complex_split=cs or cu,
                         angles=(ang_s, ang_u), crossing_ratio_a=float(ratio_a),
                         crossing_ratio_alpha=float(ratio_al), notes=notes)


def find_impact_orbit(sys: SystemDef, mu: float, theta: float, tau_guess: float, y_guess: float,
                      settings: IntegrationSettings = DEFAULT_SETTINGS, tol: float = 1e-9):
    """Period-1 orbit with one impact per period, by shooting in ``(tau, Y)``.

    Unknowns are the impact phase and incoming speed; the free flight from
    ``(0, rY)`` at ``tau`` must return to ``(0, -Y)`` after one period
    without touching the wall in between.  Only ``n = 1``.  Returns the
    stroboscopic point at ``-theta`` and its monodromy report.
    """
    if sys.n != 1:
        raise ValueError("impact-phase shooting is implemented for n = 1")
    T = sys.period
    r = sys.r(mu)

    def residual(u):
        tau, Y = u
        seg, _ = integrate_flight(sys, mu, tau, [0.0, r * Y], tau + T, settings, wall=False)
        return [seg.z_end[0], seg.z_end[1] + Y]

    sol, _, ier, msg = fsolve(residual, [tau_guess, y_guess], full_output=True, xtol=1e-13)
    tau, Y = sol
    if ier != 1 or not Y > 0:
        raise ConvergenceError(f"impact-phase shooting failed: {msg}")
    seg, _ = integrate_flight(sys, mu, tau, [0.0, r * Y], tau + T, settings, wall=False)
    z = seg(tau + np.mod(-theta - tau, T))
    return find_periodic_orbit(sys, mu, theta, z, settings, tol=tol)
