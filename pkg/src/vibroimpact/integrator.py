"""Event-driven integration of the impulse model.

Free flight is integrated with an adaptive Dormand-Prince 8(5,3) stepper and
its dense output.  After every accepted step the interpolant of ``x_1`` is
scanned for the first downward zero, which is refined by Brent's method; the
impact rule is applied there and integration restarts.  Low-velocity impacts
under an inward force collapse into a sticking phase on the wall.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.integrate import DOP853, OdeSolution
from scipy.optimize import brentq

from .core import SystemDef, apply_impact, check_state, on_delimiter

BLOWUP_NORM = 1e12


class IntegrationError(RuntimeError):
    """Step-size underflow, blow-up, or another failure of the flow solver."""


class ChatterError(IntegrationError):
    """Impact cap exceeded without reaching the sticking criterion."""


@dataclass(frozen=True)
class IntegrationSettings:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-10
    event_tol: float = 1e-12
    chatter_velocity: float = 1e-6
    max_impacts_per_period: int = 10_000
    max_step: float = np.inf

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "event_tol", "chatter_velocity", "max_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if int(self.max_impacts_per_period) < 1:
            raise ValueError("max_impacts_per_period must be a positive integer")

    def replace(self, **kwargs) -> "IntegrationSettings":
        from dataclasses import replace
        return replace(self, **kwargs)


DEFAULT_SETTINGS = IntegrationSettings()


@dataclass(frozen=True)
class ImpactEvent:
    """One regular impact: time, tangential state and normal speeds."""

    time: float
    tangential_state: np.ndarray
    incoming_velocity: float
    outgoing_velocity: float

    @property
    def restitution(self) -> float:
        return self.outgoing_velocity / self.incoming_velocity

    def state_before(self) -> np.ndarray:
        return np.concatenate([[0.0, -self.incoming_velocity], self.tangential_state])

    def state_after(self) -> np.ndarray:
        return np.concatenate([[0.0, self.outgoing_velocity], self.tangential_state])


@dataclass
class Segment:
    """Dense interpolant of one smooth flight piece on ``[t_start, t_end]``."""

    t_start: float
    t_end: float
    z_start: np.ndarray
    z_end: np.ndarray
    solution: Optional[OdeSolution] = None
    step_times: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __call__(self, t):
        if self.solution is None:
            return np.broadcast_to(self.z_start, (np.size(t), self.z_start.size)).T.squeeze()
        return self.solution(t)

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def min_x1(self) -> Tuple[float, float]:
        """Smallest value of ``x_1`` over the segment and where it occurs."""
        best_t, best_x = self.t_start, self.z_start[0]
        if self.z_end[0] < best_x:
            best_t, best_x = self.t_end, self.z_end[0]
        ts = self.step_times if self.step_times.size else np.array([self.t_start, self.t_end])
        lo_t, hi_t = sorted((self.t_start, self.t_end))
        for a, b in zip(ts[:-1], ts[1:]):
            a, b = max(min(a, b), lo_t), min(max(a, b), hi_t)
            if b <= a:
                continue
            for tc in _critical_times(self, a, b, kind="min"):
                xc = self(tc)[0]
                if xc < best_x:
                    best_t, best_x = tc, xc
        return best_x, best_t

    def local_minima(self) -> List[Tuple[float, float]]:
        """Interior local minima ``(t, x_1)`` of the first coordinate."""
        ts = self.step_times if self.step_times.size else np.array([self.t_start, self.t_end])
        lo_t, hi_t = sorted((self.t_start, self.t_end))
        out = []
        for a, b in zip(ts[:-1], ts[1:]):
            a, b = max(min(a, b), lo_t), min(max(a, b), hi_t)
            if b > a:
                out.extend((tc, float(self(tc)[0])) for tc in _critical_times(self, a, b, kind="min")
                           if lo_t < tc < hi_t)
        return out


@dataclass
class StickingInterval:
    t_start: float
    t_end: float
    released: bool


@dataclass
class Trajectory:
    """Flight segments, impacts and sticking intervals in time order."""

    segments: List[Segment] = field(default_factory=list)
    impacts: List[ImpactEvent] = field(default_factory=list)
    sticking_intervals: List[StickingInterval] = field(default_factory=list)
    t_start: float = 0.0
    t_end: float = 0.0
    z_end: Optional[np.ndarray] = None
    chatter_truncated: bool = False
    # time-ordered list of ("segment", i) / ("impact", i) / ("sticking", i)
    events: List[Tuple[str, int]] = field(default_factory=list)

    def state(self, t: float) -> np.ndarray:
        """State at time ``t`` (post-impact value at an impact instant)."""
        for seg in self.segments:
            if seg.t_start <= t <= seg.t_end:
                return seg(t)
        if self.z_end is not None and np.isclose(t, self.t_end):
            return self.z_end
        raise ValueError(f"time {t} not covered by a flight segment")

    @property
    def impact_times(self) -> np.ndarray:
        return np.array([ev.time for ev in self.impacts])

    @property
    def min_impact_velocity(self) -> float:
        if not self.impacts:
            return np.inf
        return min(ev.incoming_velocity for ev in self.impacts)

    def min_x1(self) -> Tuple[float, float]:
        best = (np.inf, np.nan)
        for seg in self.segments:
            cand = seg.min_x1()
            if cand[0] < best[0]:
                best = cand
        return best

    def to_csv(self, path, samples_per_segment: int = 0) -> None:
        write_trajectory_csv(self, path, samples_per_segment=samples_per_segment)


def _critical_times(seg_or_dense, a: float, b: float, kind: str = "min",
                    n_samples: int = 8) -> List[float]:
    """Times in ``(a, b)`` where ``y_1`` changes sign (local extrema of ``x_1``).

    ``kind='min'`` keeps minima (``y_1``: - to +), ``'max'`` maxima.
    """
    ts = np.linspace(a, b, n_samples + 1)
    ys = np.array([seg_or_dense(t)[1] for t in ts])
    out = []
    for i in range(n_samples):
        y0, y1 = ys[i], ys[i + 1]
        if kind == "min" and y0 < 0 <= y1 or kind == "max" and y0 > 0 >= y1:
            if y1 == 0:
                out.append(ts[i + 1])
            else:
                out.append(brentq(lambda t: seg_or_dense(t)[1], ts[i], ts[i + 1],
                                  xtol=1e-15, rtol=4 * np.finfo(float).eps))
    return out


def _first_crossing(dense, t_old: float, t_new: float, z_old: np.ndarray,
                    z_new: np.ndarray, sign: float = 1.0) -> Optional[float]:
    """First time in ``(t_old, t_new]`` where ``sign * x_1`` falls from >0 to <=0.

    The step is cut at the sign changes of ``sign * y_1`` so that ``x_1`` is
    monotone on each piece; a local minimum that stays positive (a near
    miss) produces no crossing.
    """
    g_old = sign * z_old[0]
    g_new = sign * z_new[0]
    v_old = sign * z_old[1]
    v_new = sign * z_new[1]
    # fast path: monotone-looking step that stays strictly inside
    if g_new > 0 and v_old * v_new > 0 and (g_old > 0 or v_old > 0):
        return None

    def g(t):
        return sign * dense(t)[0]

    def v(t):
        return sign * dense(t)[1]

    n_samples = 8
    ts = np.linspace(t_old, t_new, n_samples + 1)
    vs = np.array([v(t) for t in ts])
    vs[0], vs[-1] = v_old, v_new
    cuts = [t_old]
    for i in range(n_samples):
        if vs[i] * vs[i + 1] < 0:
            cuts.append(brentq(v, ts[i], ts[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps))
    cuts.append(t_new)
    for a, b in zip(cuts[:-1], cuts[1:]):
        ga = g_old if a == t_old else g(a)
        gb = g_new if b == t_new else g(b)
        if a == t_old and ga <= 0:
            # starting on the wall: only an interior return counts
            continue
        if ga > 0 and gb <= 0:
            if gb == 0:
                return b
            return brentq(g, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return None


def _make_stepper(fun, t0, z0, t_bound, settings: IntegrationSettings, max_step=None):
    return DOP853(fun, t0, z0, t_bound, rtol=settings.rel_tol, atol=settings.abs_tol,
                  max_step=settings.max_step if max_step is None else max_step)


def run_flow(fun, t0: float, z0: np.ndarray, t_end: float, settings: IntegrationSettings,
             crossing_sign: Optional[float] = 1.0, max_step=None,
             blowup: float = BLOWUP_NORM) -> Tuple[Segment, str]:
    """Integrate ``z' = fun(t, z)`` with optional delimiter detection.

    Returns the segment and ``"reached_end"`` or ``"hit_delimiter"``.  With
    ``crossing_sign=None`` no event is located; ``-1`` detects upward exits
    from the wall (used by the soft model).
    """
    z0 = np.array(z0, dtype=float)
    if t_end == t0:
        return Segment(t0, t0, z0, z0.copy()), "reached_end"
    stepper = _make_stepper(fun, t0, z0, t_end, settings, max_step)
    ts = [t0]
    interpolants = []
    z_prev = z0
    while stepper.status == "running":
        msg = stepper.step()
        if stepper.status == "failed":
            raise IntegrationError(f"flow solver failed at t = {stepper.t}: {msg}")
        dense = stepper.dense_output()
        t_old, t_new, z_new = stepper.t_old, stepper.t, stepper.y
        if not np.all(np.isfinite(z_new)) or np.linalg.norm(z_new) > blowup:
            raise IntegrationError(f"solution blow-up near t = {t_new}")
        if crossing_sign is not None:
            t_hit = _first_crossing(dense, t_old, t_new, z_prev, z_new, crossing_sign)
            if t_hit is not None:
                ts.append(t_hit)
                interpolants.append(dense)
                z_hit = dense(t_hit)
                z_hit[0] = 0.0
                sol = OdeSolution(np.array(ts[:-1] + [t_new]), interpolants)
                return Segment(t0, t_hit, z0, z_hit, sol, np.array(ts)), "hit_delimiter"
        ts.append(t_new)
        interpolants.append(dense)
        z_prev = z_new.copy()
    sol = OdeSolution(np.array(ts), interpolants)
    return Segment(t0, ts[-1], z0, z_prev.copy(), sol, np.array(ts)), "reached_end"


def integrate_flight(sys: SystemDef, mu: float, t0: float, z0, t_end: float,
                     settings: IntegrationSettings = DEFAULT_SETTINGS,
                     wall: bool = True) -> Tuple[Segment, str]:
    """Smooth flight from ``(t0, z0)`` until ``t_end`` or the first wall contact.

    With ``wall=False`` the delimiter is ignored (free continuation of the
    flow, used for tracking the smooth periodic family through grazing).
    """
    z0 = check_state(z0, sys.n)
    if wall:
        if z0[0] < -settings.event_tol * (1 + np.linalg.norm(z0)):
            raise ValueError(f"initial state is inadmissible: x1 = {z0[0]}")
        if on_delimiter(z0) and z0[1] < 0:
            raise ValueError("initial state on the delimiter must not be approaching it")

    def fun(t, z):
        return sys.vector_field(t, z, mu)

    return run_flow(fun, t0, z0, t_end, settings, crossing_sign=1.0 if wall else None)


def resolve_sticking(sys: SystemDef, mu: float, t_enter: float, zbar_enter,
                     settings: IntegrationSettings = DEFAULT_SETTINGS,
                     horizon: Optional[float] = None) -> Tuple[float, np.ndarray, bool]:
    """Constrained motion with ``x_1 = y_1 = 0`` until the normal force turns outward.

    Returns ``(t_exit, zbar_exit, released)``; ``released`` is False when
    the horizon ``t_enter + horizon`` is reached first.
    """
    zbar = np.array(zbar_enter, dtype=float).ravel()
    if zbar.size != 2 * (sys.n - 1):
        raise ValueError("tangential state has the wrong length")
    if horizon is None:
        horizon = sys.period
    t_stop = t_enter + horizon

    def full(zb):
        return np.concatenate([[0.0, 0.0], zb])

    def normal_force(t, zb):
        return sys.f(t, full(zb), mu)[0]

    if normal_force(t_enter, zbar) > 0:
        return t_enter, zbar, True

    # sample the normal force on a grid fine relative to the forcing period
    h = min(sys.period / 256, horizon / 16) if horizon > 0 else 0.0
    if sys.n == 1:
        t = t_enter
        while t < t_stop:
            t_next = min(t + h, t_stop)
            if normal_force(t_next, zbar) > 0:
                t_exit = brentq(lambda s: normal_force(s, zbar), t, t_next, xtol=1e-14)
                return t_exit, zbar, True
            t = t_next
        return t_stop, zbar, False

    def reduced(t, zb):
        return sys.vector_field(t, full(zb), mu)[2:]

    stepper = _make_stepper(reduced, t_enter, zbar, t_stop, settings, max_step=h)
    z_prev = zbar
    while stepper.status == "running":
        stepper.step()
        if stepper.status == "failed":
            raise IntegrationError("constrained flow failed during sticking")
        dense = stepper.dense_output()
        if normal_force(stepper.t, stepper.y) > 0:
            t_exit = brentq(lambda s: normal_force(s, dense(s)), stepper.t_old, stepper.t,
                            xtol=1e-14)
            return t_exit, dense(t_exit), True
        z_prev = stepper.y.copy()
    return t_stop, z_prev, False


def simulate(sys: SystemDef, mu: float, t0: float, z0, duration: float,
             settings: IntegrationSettings = DEFAULT_SETTINGS) -> Trajectory:
    """Alternate flight, impacts and sticking over ``[t0, t0 + duration]``."""
    z = check_state(z0, sys.n)
    tol = settings.event_tol * (1 + np.linalg.norm(z))
    if z[0] < -tol:
        raise ValueError(f"initial state is inadmissible: x1 = {z[0]}")
    if z[0] < 0:
        z[0] = 0.0
    r = sys.r(mu)
    t = float(t0)
    t_final = t0 + duration
    traj = Trajectory(t_start=t, t_end=t_final)
    cap = int(settings.max_impacts_per_period)
    window_start, window_count = t, 0

    def register_impact(t_imp, z_minus):
        nonlocal window_start, window_count
        Y = -z_minus[1]
        ev = ImpactEvent(t_imp, z_minus[2:].copy(), Y, r * Y)
        traj.impacts.append(ev)
        traj.events.append(("impact", len(traj.impacts) - 1))
        while t_imp - window_start >= sys.period:
            window_start += sys.period
            window_count = 0
        window_count += 1
        if window_count > cap:
            raise ChatterError(f"more than {cap} impacts within one period near t = {t_imp}")
        return apply_impact(z_minus, r, tol=np.inf)

    def stick(t_stick, zbar):
        t_exit, zbar_exit, released = resolve_sticking(sys, mu, t_stick, zbar, settings,
                                                       horizon=t_final - t_stick)
        traj.sticking_intervals.append(StickingInterval(t_stick, t_exit, released))
        traj.events.append(("sticking", len(traj.sticking_intervals) - 1))
        traj.chatter_truncated = True
        return t_exit, np.concatenate([[0.0, 0.0], zbar_exit])

    # states starting on the wall
    if on_delimiter(z):
        z[0] = 0.0
        if z[1] < 0:
            if -z[1] < settings.chatter_velocity and sys.f(t, z, mu)[0] <= 0:
                t, z = stick(t, z[2:])
            else:
                z = register_impact(t, z)
        elif z[1] < settings.chatter_velocity and sys.f(t, np.concatenate([[0.0, 0.0], z[2:]]), mu)[0] <= 0:
            t, z = stick(t, z[2:])

    while t < t_final:
        seg, reason = integrate_flight(sys, mu, t, z, t_final, settings)
        traj.segments.append(seg)
        traj.events.append(("segment", len(traj.segments) - 1))
        t, z = seg.t_end, seg.z_end.copy()
        if reason == "reached_end":
            break
        z[0] = 0.0
        Y = -z[1]
        if Y <= 0:
            # dense output put the contact at zero speed: a tangency
            Y = 0.0
        at_rest = np.concatenate([[0.0, 0.0], z[2:]])
        if Y < settings.chatter_velocity and sys.f(t, at_rest, mu)[0] <= 0:
            if Y > 0:
                register_impact(t, z)
            t, z = stick(t, z[2:])
            continue
        if Y == 0:
            z = at_rest
            continue
        z = register_impact(t, z)
    traj.z_end = z
    traj.t_end = t
    return traj


def shift_map(sys: SystemDef, mu: float, theta: float, z0,
              settings: IntegrationSettings = DEFAULT_SETTINGS,
              return_trajectory: bool = False, wall: bool = True):
    """Stroboscopic map: state at ``T - theta`` of the solution starting at ``-theta``."""
    T = sys.period
    if not 0 <= theta < T:
        raise ValueError(f"theta must lie in [0, T), got {theta}")
    if wall:
        traj = simulate(sys, mu, -theta, z0, T, settings)
        z1 = traj.z_end.copy()
    else:
        seg, _ = integrate_flight(sys, mu, -theta, z0, T - theta, settings, wall=False)
        traj = Trajectory(segments=[seg], t_start=-theta, t_end=T - theta, z_end=seg.z_end)
        traj.events.append(("segment", 0))
        z1 = seg.z_end.copy()
    if return_trajectory:
        return z1, traj
    return z1


def iterate_map(sys: SystemDef, mu: float, theta: float, z0, count: int,
                settings: IntegrationSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """Orbit ``z0, S(z0), ..., S^count(z0)`` as rows."""
    out = [check_state(z0, sys.n)]
    for _ in range(count):
        out.append(shift_map(sys, mu, theta, out[-1], settings))
    return np.array(out)


def write_trajectory_csv(traj: Trajectory, path, samples_per_segment: int = 0,
                         header: Optional[List[str]] = None) -> None:
    """Rows ``(t, x1, y1, ..., flag)`` with flag in {flight, impact, sticking}."""
    n2 = None
    rows = []
    for kind, idx in traj.events:
        if kind == "segment":
            seg = traj.segments[idx]
            n2 = seg.z_start.size
            ts = seg.step_times[(seg.step_times >= seg.t_start) & (seg.step_times <= seg.t_end)]
            ts = np.union1d(ts, [seg.t_start, seg.t_end])
            if samples_per_segment:
                ts = np.union1d(ts, np.linspace(seg.t_start, seg.t_end, samples_per_segment))
            for t in ts:
                zt = seg.z_end if t == seg.t_end else (seg.z_start if t == seg.t_start else seg(t))
                rows.append((t, *zt, "flight"))
        elif kind == "impact":
            ev = traj.impacts[idx]
            zt = ev.state_after()
            n2 = zt.size
            rows.append((ev.time, *zt, "impact"))
        else:
            st = traj.sticking_intervals[idx]
            rows.append((st.t_start, *([np.nan] * (n2 or 2)), "sticking"))
            rows.append((st.t_end, *([np.nan] * (n2 or 2)), "sticking"))
    n2 = n2 or 2
    names = ["t"] + [f"{c}{k}" for k in range(1, n2 // 2 + 1) for c in ("x", "y")] + ["flag"]
    with open(path, "w", newline="") as fh:
        for line in header or []:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(names)
        for row in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, (float, np.floating)) else v for v in row])


def write_impacts_csv(traj: Trajectory, path, header: Optional[List[str]] = None) -> None:
    """Impact triples ``(tau, Y_in, Y_out)``."""
    with open(path, "w", newline="") as fh:
        for line in header or []:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["tau", "Y_in", "Y_out"])
        for ev in traj.impacts:
            w.writerow([f"{ev.time:.17g}", f"{ev.incoming_velocity:.17g}",
                        f"{ev.outgoing_velocity:.17g}"])
