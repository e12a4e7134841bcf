"""Constructive symbolic dynamics for planar stroboscopic maps.

The pipeline for a saddle fixed point ``z*`` of a planar map ``S``:

1. :func:`grow_manifold` grows the unstable (or stable) manifold from a short
   seed segment along the eigendirection, refining adaptively.
2. :func:`find_homoclinic` intersects the two arcs and refines the crossing.
3. :func:`build_boxes` sets up an affine eigenframe ``(zeta_s, zeta_u)`` and
   the box ``Q0 = {|zeta_s| <= eps_s, |zeta_u| <= eps_u}``; with
   ``F = S^m`` it extracts the two horizontal strips ``V_0 = Q0 ∩ F^-1(Q0)``
   around ``z*`` and ``V_1`` through a preimage of the homoclinic point, and
   their images ``H_j = F(V_j)`` (vertical strips).
4. :func:`verify_covering` checks on random admissible arcs that ``F``
   stretches each strip ``V_j`` across the box.
5. :func:`realize_itinerary` finds points whose ``F``-iterates visit
   prescribed boxes, and periodic points for periodic words.

Only ``n = 1`` (a planar state) is supported.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from .core import SystemDef
from .integrator import (DEFAULT_SETTINGS, IntegrationError, IntegrationSettings, run_flow,
                         shift_map)
from .variational import shift_map_jacobian

EDGE_TOL = 1e-12


class ChaosError(RuntimeError):
    """Base class for failures of the constructive pipeline."""


class NotSaddleError(ChaosError):
    pass


class BudgetError(ChaosError):
    pass


class NoIntersectionError(ChaosError):
    pass


class TangencyError(ChaosError):
    pass


class BoxError(ChaosError):
    """Iterate cap reached, or the strip components merged (shrink eps)."""


class PrecisionError(ChaosError):
    """Nested bracketing collapsed below the working precision."""


# --------------------------------------------------------------------------- maps


class PlanarMap:
    """A planar map with optional inverse and Jacobian.

    Subclasses implement :meth:`step`; the defaults supply a central
    finite-difference Jacobian and Newton backward shooting for the inverse.
    """

    fd_step = 1e-7

    def step(self, z) -> Tuple[np.ndarray, int]:
        """Image of ``z`` and the number of impacts along the way."""
        raise NotImplementedError

    def forward(self, z) -> np.ndarray:
        return self.step(z)[0]

    def iterate(self, z, k: int) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        for _ in range(k):
            z = self.forward(z)
        return z

    def jacobian(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        J = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = self.fd_step * (1 + abs(z[j]))
            J[:, j] = (self.forward(z + e) - self.forward(z - e)) / (2 * e[j])
        return J

    def jacobian_power(self, z, k: int) -> np.ndarray:
        J = np.eye(2)
        z = np.asarray(z, dtype=float)
        for _ in range(k):
            J = self.jacobian(z) @ J
            z = self.forward(z)
        return J

    def inverse(self, w, guess=None, tol: float = 1e-13, res_tol: float = 1e-11,
                max_iter: int = 30) -> np.ndarray:
        """Solve ``S(z) = w`` by damped Newton iteration from ``guess``."""
        w = np.asarray(w, dtype=float)
        z = w.copy() if guess is None else np.array(guess, dtype=float)
        res = self.forward(z) - w
        for _ in range(max_iter):
            if np.linalg.norm(res) < res_tol * (1 + np.linalg.norm(w)):
                return z
            dz = np.linalg.solve(self.jacobian(z), res)
            step = 1.0
            while True:
                trial = z - step * dz
                try:
                    new_res = self.forward(trial) - w
                except ValueError:
                    # left the admissible half-plane
                    new_res = None
                if new_res is not None and (np.linalg.norm(new_res) < np.linalg.norm(res)
                                            or step < 1e-3):
                    break
                step /= 2
                if step < 1e-3:
                    raise ChaosError(f"backward shooting stalled for target {w}")
            z, res = trial, new_res
            if step * np.linalg.norm(dz) < tol * (1 + np.linalg.norm(z)):
                return z
        if np.linalg.norm(res) < 100 * res_tol * (1 + np.linalg.norm(w)):
            return z
        raise ChaosError(f"backward shooting did not converge for target {w}")


class ShiftMap(PlanarMap):
    """Stroboscopic map of a one-degree-of-freedom impact system."""

    def __init__(self, sys: SystemDef, mu: float, theta: float,
                 settings: IntegrationSettings = DEFAULT_SETTINGS, wall: bool = True):
        if sys.n != 1:
            raise ValueError("planar constructions need n = 1")
        self.sys, self.mu, self.theta, self.settings, self.wall = sys, mu, theta, settings, wall

    def step(self, z):
        z1, traj = shift_map(self.sys, self.mu, self.theta, z, self.settings,
                             return_trajectory=True, wall=self.wall)
        return z1, len(traj.impacts)

    def backward_flight(self, w, max_impacts: int = 50) -> np.ndarray:
        """Integrate back from ``w`` over one period, undoing impacts on the way.

        Used as a predictor for backward shooting; grazing and sticking
        make this non-unique, so the result is always polished by Newton.
        """
        T = self.sys.period
        t, z, target = T - self.theta, np.asarray(w, dtype=float).copy(), -self.theta
        r = self.sys.r(self.mu)

        def fun(tt, zz):
            return self.sys.vector_field(tt, zz, self.mu)

        for _ in range(max_impacts + 1):
            seg, status = run_flow(fun, t, z, target, self.settings,
                                   crossing_sign=1.0 if self.wall else None)
            if status == "reached_end":
                return seg.z_end.copy()
            t, z = seg.t_end, seg.z_end.copy()
            if not z[1] > 0:
                raise ChaosError("backward flight reached the wall without an outgoing velocity")
            z[1] = -z[1] / r
        raise ChaosError("too many impacts in backward flight")

    def inverse(self, w, guess=None, **kw):
        try:
            guess = self.backward_flight(w)
        except (ChaosError, IntegrationError):
            pass
        return super().inverse(w, guess, **kw)

    def trajectory(self, z):
        return shift_map(self.sys, self.mu, self.theta, z, self.settings,
                         return_trajectory=True, wall=self.wall)[1]

    def jacobian(self, z):
        try:
            return shift_map_jacobian(self.sys, self.mu, self.theta, z, self.settings,
                                      wall=self.wall).jacobian
        except ValueError:
            # sticking or grazing contact: fall back to differences
            return super().jacobian(z)


class LinearMap(PlanarMap):
    """``z -> c + A (z - c)``."""

    def __init__(self, A, center=(0.0, 0.0)):
        self.A = np.asarray(A, dtype=float)
        self.center = np.asarray(center, dtype=float)

    def step(self, z):
        return self.center + self.A @ (np.asarray(z, dtype=float) - self.center), 0

    def jacobian(self, z):
        return self.A.copy()

    def inverse(self, w, guess=None, **kw):
        return self.center + np.linalg.solve(self.A, np.asarray(w, dtype=float) - self.center)


class AffineHorseshoe(PlanarMap):
    """Piecewise-affine horseshoe with a saddle at the origin.

    For ``y <= 1/2`` the map is ``(x, y) -> (x/k, k y)``; above it folds back,
    ``(x, y) -> (1 - x/k, k (1 - y))``.  The unstable axis ``x = 0`` is
    folded onto ``x = 1``, which crosses the stable axis ``y = 0``
    transversally at ``(1, 0)``.  The fold line plays the role of the wall.
    """

    def __init__(self, k: float = 3.0):
        if not k > 2:
            raise ValueError("k must exceed 2 for a horseshoe")
        self.k = float(k)

    def step(self, z):
        x, y = np.asarray(z, dtype=float)
        k = self.k
        if y <= 0.5:
            return np.array([x / k, k * y]), 0
        return np.array([1 - x / k, k * (1 - y)]), 1

    def jacobian(self, z):
        k = self.k
        if np.asarray(z, dtype=float)[1] <= 0.5:
            return np.diag([1 / k, k])
        return np.diag([-1 / k, -k])

    def inverse(self, w, guess=None, **kw):
        u, v = np.asarray(w, dtype=float)
        k = self.k
        if u < 0.5:
            return np.array([k * u, v / k])
        return np.array([k * (1 - u), 1 - v / k])


class InverseOf(PlanarMap):
    """The inverse of a planar map, for configurations where the homoclinic
    crossing is generated by ``S^-1`` rather than ``S``."""

    def __init__(self, base: PlanarMap, guess_map: Optional[Callable] = None):
        self.base = base
        self.guess_map = guess_map

    def step(self, z):
        guess = None if self.guess_map is None else self.guess_map(z)
        return self.base.inverse(z, guess), 0

    def jacobian(self, z):
        return np.linalg.inv(self.base.jacobian(self.forward(z)))

    def inverse(self, w, guess=None, **kw):
        return self.base.forward(w)


def saddle_split(J) -> Tuple[float, np.ndarray, float, np.ndarray]:
    """``(lam_u, v_u, lam_s, v_s)`` of a real saddle matrix, unit eigenvectors."""
    vals, vecs = np.linalg.eig(np.asarray(J, dtype=float))
    if np.any(np.abs(vals.imag) > 1e-12):
        raise NotSaddleError(f"complex eigenvalues {vals}")
    vals, vecs = vals.real, vecs.real
    mods = np.abs(vals)
    if not (mods.max() > 1 > mods.min()):
        raise NotSaddleError(f"eigenvalues {vals} do not split around the unit circle")
    iu, is_ = int(np.argmax(mods)), int(np.argmin(mods))
    vu = vecs[:, iu] / np.linalg.norm(vecs[:, iu])
    vs = vecs[:, is_] / np.linalg.norm(vecs[:, is_])
    return float(vals[iu]), vu, float(vals[is_]), vs


# --------------------------------------------------------------------------- manifolds


@dataclass
class ManifoldArc:
    """Polyline approximation of one branch of an invariant manifold.

    Point ``i`` is ``G^{generations[i]}(fixed_point + seeds[i] * direction)``
    where ``G`` is ``step_power`` applications of the map (unstable branch)
    or of its inverse (stable branch).
    """

    branch: str
    points: np.ndarray
    seeds: np.ndarray
    generations: np.ndarray
    impacts: np.ndarray
    kinks: List[int]
    breaks: List[int]
    fixed_point: np.ndarray
    direction: np.ndarray
    eigenvalue: float
    step_power: int = 1

    def __len__(self):
        return len(self.points)

    @property
    def growth(self) -> float:
        return abs(self.eigenvalue) ** self.step_power

    def segment_seeds(self, i: int) -> Tuple[int, float, float]:
        """Generation and seeds of segment ``i`` expressed in one generation."""
        g0, g1 = int(self.generations[i]), int(self.generations[i + 1])
        s0, s1 = float(self.seeds[i]), float(self.seeds[i + 1])
        if g0 != g1:
            s0 /= self.growth ** (g1 - g0)
        return g1, s0, s1

    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.points, axis=0), axis=1)))

    def evaluate(self, smap: PlanarMap, seed: float, generation: int) -> np.ndarray:
        z = self.fixed_point + seed * self.direction
        steps = generation * self.step_power
        if self.branch == "unstable":
            return smap.iterate(z, steps)
        A_inv = None
        for _ in range(steps):
            if A_inv is None:
                A_inv = np.linalg.inv(smap.jacobian(self.fixed_point))
            z = smap.inverse(z, self.fixed_point + A_inv @ (z - self.fixed_point))
        return z

    def distance(self, q) -> float:
        return polyline_distance(self.points, q)

    def to_csv(self, path, header: Sequence[str] = ()) -> None:
        kinks = set(self.kinks)
        with open(path, "w", newline="") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["index", "branch", "x1", "y1", "seed", "generation", "impacts", "kink"])
            for i, (pt, s, g, c) in enumerate(zip(self.points, self.seeds, self.generations,
                                                  self.impacts)):
                w.writerow([i, self.branch, f"{pt[0]:.17g}", f"{pt[1]:.17g}", f"{s:.17g}",
                            int(g), int(c), int(i in kinks)])


def grow_manifold(smap: PlanarMap, z_fixed, branch: str = "unstable", side: float = 1.0,
                  arc_budget: int = 4000, generations: int = 12, chord_tol: float = 1e-4,
                  seed_length: float = 1e-5, samples: int = 16,
                  max_length: float = np.inf) -> ManifoldArc:
    """Grow one branch of ``W^u`` or ``W^s`` of the saddle ``z_fixed``.

    A fundamental domain ``[delta, Lambda delta]`` of seeds along the
    eigendirection is pushed forward (unstable) or pulled back by backward
    shooting (stable) generation by generation.  Between consecutive images
    the seed interval is bisected until the chord is below ``chord_tol``;
    where the map is discontinuous this stops at a minimal seed gap and the
    index is recorded in ``breaks``.  ``kinks`` mark neighbours whose
    trajectories have different impact counts, i.e. the pre-image segment
    straddles the grazing set.
    """
    if branch not in ("unstable", "stable"):
        raise ValueError("branch must be 'unstable' or 'stable'")
    z_fixed = np.asarray(z_fixed, dtype=float)
    lam_u, v_u, lam_s, v_s = saddle_split(smap.jacobian(z_fixed))
    A_inv = None
    if branch == "unstable":
        lam, v = lam_u, v_u

        def one(z):
            return smap.step(z)
    else:
        lam, v = 1.0 / lam_s, v_s
        A_inv = np.linalg.inv(smap.jacobian(z_fixed))

        def one(z):
            return smap.inverse(z, z_fixed + A_inv @ (z - z_fixed)), 0

    power = 1 if lam > 0 else 2
    Lam = abs(lam) ** power
    v = np.sign(side) * v

    def advance(z, count=0):
        for _ in range(power):
            z, c = one(z)
            count += c
        return z, count

    def from_seed(s, g):
        z, c = z_fixed + s * v, 0
        for _ in range(g):
            z, c = advance(z, c)
        return z, c

    seeds = np.geomspace(seed_length, Lam * seed_length, samples)
    pts = [z_fixed + s * v for s in seeds]
    cnts = [0] * len(seeds)
    all_pts, all_seeds, all_gen, all_cnt, breaks = list(pts), list(seeds), [0] * len(seeds), list(cnts), []
    total_len = float(np.sum(np.linalg.norm(np.diff(np.array(pts), axis=0), axis=1)))
    for g in range(1, generations + 1):
        mapped = [advance(p, c) for p, c in zip(pts, cnts)]
        new_pts = [m[0] for m in mapped]
        new_cnt = [m[1] for m in mapped]
        new_seeds = list(seeds)
        # adaptive refinement of this generation
        out_p, out_s, out_c = [new_pts[0]], [new_seeds[0]], [new_cnt[0]]
        stack = list(zip(new_seeds[1:], new_pts[1:], new_cnt[1:]))[::-1]
        gen_len, truncated = 0.0, False
        while stack:
            if total_len + gen_len > max_length:
                truncated = True
                break
            s1, p1, c1 = stack.pop()
            s0, p0 = out_s[-1], out_p[-1]
            chord = np.linalg.norm(p1 - p0)
            if chord > chord_tol and len(all_pts) + len(out_p) + len(stack) < arc_budget:
                if s1 - s0 > 1e-13 * s1:
                    sm = 0.5 * (s0 + s1)
                    pm, cm = from_seed(sm, g)
                    stack.append((s1, p1, c1))
                    stack.append((sm, pm, cm))
                    continue
                breaks.append(len(all_pts) + len(out_p) - 1)
            out_p.append(p1)
            out_s.append(s1)
            out_c.append(c1)
            gen_len += chord
        pts, seeds, cnts = out_p, np.array(out_s), out_c
        # generation g starts where generation g-1 ended; drop the duplicate
        all_pts.extend(pts[1:])
        all_seeds.extend(seeds[1:])
        all_gen.extend([g] * (len(pts) - 1))
        all_cnt.extend(cnts[1:])
        total_len += float(np.sum(np.linalg.norm(np.diff(np.array(pts), axis=0), axis=1)))
        if truncated or total_len > max_length:
            break
        if len(all_pts) >= arc_budget:
            raise BudgetError(f"refinement budget of {arc_budget} points exhausted "
                              f"after {g} generations")
    all_pts = np.array(all_pts)
    all_cnt = np.array(all_cnt)
    kinks = [int(i) for i in np.nonzero(np.diff(all_cnt))[0]]
    return ManifoldArc(branch, all_pts, np.array(all_seeds), np.array(all_gen), all_cnt, kinks,
                       breaks, z_fixed, v, lam, power)


def polyline_distance(poly, q) -> float:
    """Euclidean distance from ``q`` to a polyline."""
    P = np.asarray(poly, dtype=float)
    q = np.asarray(q, dtype=float)
    a, b = P[:-1], P[1:]
    ab = b - a
    den = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.einsum("ij,ij->i", q - a, ab) / np.where(den > 0, den, 1), 0, 1)
    proj = a + t[:, None] * ab
    return float(np.min(np.linalg.norm(proj - q, axis=1)))


def hausdorff_distance(P, Q) -> float:
    """Symmetric Hausdorff distance between two polylines (vertex sampled)."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    d1 = max(polyline_distance(Q, p) for p in P)
    d2 = max(polyline_distance(P, q) for q in Q)
    return max(d1, d2)


def segment_intersections(P, Q) -> List[Tuple[int, int, float, float]]:
    """All crossings ``(i, j, s, t)`` of segment ``P[i]P[i+1]`` with ``Q[j]Q[j+1]``."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    a, r = P[:-1], np.diff(P, axis=0)
    c, d = Q[:-1], np.diff(Q, axis=0)
    out = []
    chunk = max(1, 200_000 // max(len(c), 1))
    for i0 in range(0, len(a), chunk):
        A, R = a[i0:i0 + chunk, None, :], r[i0:i0 + chunk, None, :]
        den = R[..., 0] * d[None, :, 1] - R[..., 1] * d[None, :, 0]
        diff = c[None, :, :] - A
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (diff[..., 0] * d[None, :, 1] - diff[..., 1] * d[None, :, 0]) / den
            t = (diff[..., 0] * R[..., 1] - diff[..., 1] * R[..., 0]) / den
        ok = (den != 0) & (s >= 0) & (s <= 1) & (t >= 0) & (t <= 1)
        for i, j in zip(*np.nonzero(ok)):
            out.append((i0 + int(i), int(j), float(s[i, j]), float(t[i, j])))
    out.sort()
    return out


# --------------------------------------------------------------------------- homoclinic point


@dataclass
class HomoclinicPoint:
    location: np.ndarray
    unstable_tangent: np.ndarray
    stable_tangent: np.ndarray
    crossing_angle: float
    unstable_origin: Optional[np.ndarray] = None
    unstable_steps: int = 0
    refined: bool = False

    def backward_orbit(self, smap: PlanarMap, k: int) -> np.ndarray:
        """``S^{-k}(p)``, computed forward along the unstable branch when possible."""
        if self.unstable_origin is not None and k <= self.unstable_steps:
            return smap.iterate(self.unstable_origin, self.unstable_steps - k)
        z = self.location
        for _ in range(k):
            z = smap.inverse(z)
        return z

    def to_csv(self, path, header: Sequence[str] = ()) -> None:
        with open(path, "w", newline="") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["x1", "y1", "tu_x", "tu_y", "ts_x", "ts_y", "angle"])
            w.writerow([f"{v:.17g}" for v in (*self.location, *self.unstable_tangent,
                                              *self.stable_tangent, self.crossing_angle)])


def _line_angle(u, v) -> float:
    c = abs(float(np.dot(u, v))) / (np.linalg.norm(u) * np.linalg.norm(v))
    return float(np.arccos(min(1.0, c)))


def find_homoclinic(W_u: ManifoldArc, W_s: ManifoldArc, smap: Optional[PlanarMap] = None,
                    angle_floor: float = 1e-3, exclude_radius: Optional[float] = None,
                    plane_tol: float = 1e-9, refine_tol: float = 1e-7) -> HomoclinicPoint:
    """First crossing of the unstable arc with the stable arc away from ``z*``.

    With ``smap`` the crossing is refined on the underlying maps by solving
    ``U(sigma) = W(tau)`` in the seed parameters of the two arcs; otherwise
    the exact polyline intersection is returned.
    """
    z_fixed = W_u.fixed_point
    if exclude_radius is None:
        exclude_radius = 10 * max(np.linalg.norm(W_u.points[0] - z_fixed),
                                  np.linalg.norm(W_s.points[0] - z_fixed))
    hits = [h for h in segment_intersections(W_u.points, W_s.points)
            if np.linalg.norm(W_u.points[h[0]] + h[2] * (W_u.points[h[0] + 1] - W_u.points[h[0]])
                              - z_fixed) > exclude_radius]
    if not hits:
        raise NoIntersectionError("the arcs do not cross away from the fixed point")
    i, j, s, t = hits[0]
    pu0, pu1 = W_u.points[i], W_u.points[i + 1]
    ps0, ps1 = W_s.points[j], W_s.points[j + 1]
    p = pu0 + s * (pu1 - pu0)
    tu, ts = pu1 - pu0, ps1 - ps0
    origin, steps, refined = None, 0, False
    if smap is not None:
        gu, su0, su1 = W_u.segment_seeds(i)
        gs, ss0, ss1 = W_s.segment_seeds(j)
        su, ss = su0 + s * (su1 - su0), ss0 + t * (ss1 - ss0)
        scale_u, scale_s = su1 - su0, ss1 - ss0

        def U(sig):
            return W_u.evaluate(smap, sig, gu)

        def W(tau):
            return W_s.evaluate(smap, tau, gs)

        def F(x):
            return U(su + x[0] * scale_u) - W(ss + x[1] * scale_s)

        # long compositions amplify integration error, so F is noisy at the
        # 1e-8 level; keep the best iterate rather than insisting on descent
        x = np.zeros(2)
        res = F(x)
        best = (np.linalg.norm(res), x)
        for _ in range(8):
            h = 1e-4
            J = np.column_stack([(F(x + h * e) - F(x - h * e)) / (2 * h) for e in np.eye(2)])
            x = x - np.linalg.solve(J, res)
            res = F(x)
            best = min(best, (np.linalg.norm(res), x), key=lambda b: b[0])
            if best[0] < 1e-3 * refine_tol:
                break
        x = best[1]
        if best[0] < refine_tol and np.all(np.abs(x) < 2):
            su, ss = su + x[0] * scale_u, ss + x[1] * scale_s
            p = U(su)
            hu, hs = 1e-4 * scale_u, 1e-4 * scale_s
            tu = U(su + hu) - U(su - hu)
            ts = W(ss + hs) - W(ss - hs)
            refined = True
        origin = z_fixed + su * W_u.direction
        steps = gu * W_u.step_power
    angle = _line_angle(tu, ts)
    if angle < angle_floor:
        raise TangencyError(f"crossing angle {angle:.3g} rad is below {angle_floor:g}")
    if isinstance(smap, ShiftMap) and abs(p[0]) <= plane_tol * (1 + np.linalg.norm(p)):
        raise ChaosError("homoclinic point lies on the delimiter plane")
    return HomoclinicPoint(p, tu / np.linalg.norm(tu), ts / np.linalg.norm(ts), angle,
                           origin, steps, refined)


# --------------------------------------------------------------------------- boxes


def point_in_polygon(poly, q, tol: float = EDGE_TOL) -> bool:
    """Ray casting; points within ``tol`` of an edge count as inside."""
    return signed_distance(poly, q) <= tol


def signed_distance(poly, q) -> float:
    """Distance to the polygon boundary, negative inside."""
    P = np.asarray(poly, dtype=float)
    q = np.asarray(q, dtype=float)
    closed = np.vstack([P, P[:1]])
    d = polyline_distance(closed, q)
    x, y = q
    xi, yi = P[:, 0], P[:, 1]
    xj, yj = np.roll(xi, 1), np.roll(yi, 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cross = ((yi > y) != (yj > y)) & (x < (xj - xi) * (y - yi) / (yj - yi) + xi)
    inside = bool(np.count_nonzero(cross) % 2)
    return -d if inside else d


def polygons_overlap(P, Q) -> bool:
    if segment_intersections(np.vstack([P, P[:1]]), np.vstack([Q, Q[:1]])):
        return True
    return signed_distance(P, Q[0]) < 0 or signed_distance(Q, P[0]) < 0


@dataclass
class CoveringBoxes:
    """Eigenframe, box half-widths and the strips ``V_j`` and ``H_j = F(V_j)``.

    ``bounds[j]`` holds, per column ``zeta_s = columns[k]``, the ``zeta_u``
    interval of the horizontal strip ``V_j``.  Polygons are stored in the
    ``zeta`` coordinates.
    """

    center: np.ndarray
    frame: np.ndarray
    eps_s: float
    eps_u: float
    m_plus: int
    m_minus: int
    columns: np.ndarray
    bounds: np.ndarray
    V: List[np.ndarray]
    H: List[np.ndarray]
    homoclinic_zeta: Optional[np.ndarray] = None
    anchors: List[np.ndarray] = field(default_factory=list)

    @property
    def m(self) -> int:
        return self.m_plus + self.m_minus

    @property
    def frame_inv(self) -> np.ndarray:
        return np.linalg.inv(self.frame)

    def to_zeta(self, z) -> np.ndarray:
        return np.linalg.solve(self.frame, np.asarray(z, dtype=float) - self.center)

    def from_zeta(self, zeta) -> np.ndarray:
        return self.center + self.frame @ np.asarray(zeta, dtype=float)

    def in_box(self, z, tol: float = EDGE_TOL) -> bool:
        zs, zu = self.to_zeta(z)
        return abs(zs) <= self.eps_s + tol and abs(zu) <= self.eps_u + tol

    def strip_interval(self, j: int, zeta_s: float) -> Tuple[float, float]:
        lo = float(np.interp(zeta_s, self.columns, self.bounds[j, :, 0]))
        hi = float(np.interp(zeta_s, self.columns, self.bounds[j, :, 1]))
        return lo, hi

    def in_V(self, j: int, z) -> bool:
        return point_in_polygon(self.V[j], self.to_zeta(z))

    def in_H(self, j: int, z) -> bool:
        return point_in_polygon(self.H[j], self.to_zeta(z))

    def distance_to_H(self, j: int, z) -> float:
        return signed_distance(self.H[j], self.to_zeta(z))

    def shifted(self, j: int, delta_u: float) -> "CoveringBoxes":
        """Copy with strip ``V_j`` translated by ``delta_u`` along ``zeta_u`` (a negative control)."""
        bounds = self.bounds.copy()
        bounds[j] += delta_u
        V = list(self.V)
        V[j] = V[j] + np.array([0.0, delta_u])
        return replace(self, bounds=bounds, V=V)

    def to_csv(self, path, header: Sequence[str] = ()) -> None:
        with open(path, "w", newline="") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["region", "vertex", "zeta_s", "zeta_u", "x1", "y1"])
            for name, polys in (("V", self.V), ("H", self.H)):
                for j, poly in enumerate(polys):
                    for k, zeta in enumerate(poly):
                        z = self.from_zeta(zeta)
                        w.writerow([f"{name}{j}", k, *(f"{v:.17g}" for v in (*zeta, *z))])


def build_boxes(smap: PlanarMap, z_fixed, hp: HomoclinicPoint, eps_u: float,
                eps_s: Optional[float] = None, n_columns: int = 33, iterate_cap: int = 30,
                edge_samples: int = 40) -> CoveringBoxes:
    """Construct ``Q0``, the iterate counts ``m^+``, ``m^-`` and the strips.

    ``V_0`` is the component of ``Q0 ∩ F^-1(Q0)`` through ``z*`` and ``V_1``
    the one through ``S^{-m^+}(p)``; ``H_j = F(V_j)``, so ``H_0`` contains
    ``z*`` and ``H_1`` contains ``S^{m^-}(p)``.
    """
    z_fixed = np.asarray(z_fixed, dtype=float)
    if eps_s is None:
        eps_s = 2 * eps_u
    if not (eps_u > 0 and eps_s >= 2 * eps_u):
        raise ValueError(f"box half-widths must satisfy eps_s >= 2 eps_u > 0, got "
                         f"eps_s = {eps_s}, eps_u = {eps_u}")
    _, v_u, _, v_s = saddle_split(smap.jacobian(z_fixed))
    frame = np.column_stack([v_s, v_u])

    def zeta(z):
        return np.linalg.solve(frame, np.asarray(z, dtype=float) - z_fixed)

    def inQ(z):
        zs, zu = zeta(z)
        return abs(zs) <= eps_s and abs(zu) <= eps_u

    p = np.asarray(hp.location, dtype=float)
    fwd = p
    m_minus = None
    for k in range(1, iterate_cap + 1):
        fwd = smap.forward(fwd)
        if inQ(fwd):
            m_minus = k
            break
    if m_minus is None:
        raise BoxError(f"no forward iterate of p enters the box within {iterate_cap} steps")
    m_plus = None
    for k in range(1, iterate_cap + 1):
        back = hp.backward_orbit(smap, k)
        if inQ(back):
            m_plus = k
            break
    if m_plus is None:
        raise BoxError(f"no backward iterate of p enters the box within {iterate_cap} steps")
    m = m_plus + m_minus

    def F(z):
        return smap.iterate(z, m)

    def zu_image(c, u):
        return zeta(F(z_fixed + frame @ np.array([c, u])))[1]

    cols = np.linspace(-eps_s, eps_s, n_columns)
    anchors = [np.zeros(2), zeta(back)]
    bounds = np.empty((2, n_columns, 2))
    for j, anchor in enumerate(anchors):
        start = int(np.argmin(np.abs(cols - anchor[0])))
        order = list(range(start, n_columns)) + list(range(start - 1, -1, -1))
        guess = anchor[1]
        for idx, k in enumerate(order):
            if k == start - 1:
                guess = bounds[j, start].mean()
            c = cols[k]
            lo, hi = _strip_on_column(zu_image, c, guess, eps_u)
            bounds[j, k] = (lo, hi)
            guess = 0.5 * (lo + hi)
    for k in range(n_columns):
        (a0, b0), (a1, b1) = bounds[0, k], bounds[1, k]
        if max(a0, a1) <= min(b0, b1):
            raise BoxError("strips V0 and V1 merge; shrink the box")
    V, H = [], []
    for j in range(2):
        lo, hi = bounds[j, :, 0], bounds[j, :, 1]
        right = np.linspace(lo[-1], hi[-1], edge_samples)[1:-1]
        left = np.linspace(hi[0], lo[0], edge_samples)[1:-1]
        poly = np.vstack([np.column_stack([cols, lo]),
                          np.column_stack([np.full(right.size, eps_s), right]),
                          np.column_stack([cols[::-1], hi[::-1]]),
                          np.column_stack([np.full(left.size, -eps_s), left])])
        V.append(poly)
        H.append(np.array([zeta(F(z_fixed + frame @ q)) for q in poly]))
    if polygons_overlap(H[0], H[1]):
        raise BoxError("H0 and H1 overlap")
    return CoveringBoxes(z_fixed, frame, float(eps_s), float(eps_u), m_plus, m_minus, cols,
                         bounds, V, H, zeta(p), anchors)


def _strip_on_column(zu_image, c: float, guess: float, eps_u: float) -> Tuple[float, float]:
    """``zeta_u`` interval on the column ``zeta_s = c`` mapped into ``|zeta_u| <= eps_u``."""
    u = guess
    h = 1e-9 * max(eps_u, abs(u))
    for _ in range(30):
        g = zu_image(c, u)
        d = (zu_image(c, u + h) - zu_image(c, u - h)) / (2 * h)
        if d == 0 or not np.isfinite(d):
            raise BoxError(f"degenerate strip on column {c}")
        du = -g / d
        u += du
        if abs(du) < 1e-15 * (1 + abs(u)):
            break
    if abs(u) > eps_u:
        raise BoxError(f"strip centre leaves the box on column {c}")
    d = (zu_image(c, u + h) - zu_image(c, u - h)) / (2 * h)
    width = eps_u / abs(d)
    ends = []
    for target in (-eps_u, eps_u):
        direction = np.sign(target / d)
        step = width
        a = u
        b = u + direction * step
        for _ in range(60):
            if abs(b) > eps_u * (1 + 1e-9):
                b = direction * eps_u
                break
            if (zu_image(c, b) - target) * (zu_image(c, a) - target) <= 0:
                break
            a, step = b, 2 * step
            b = u + direction * step
        fa, fb = zu_image(c, a) - target, zu_image(c, b) - target
        if fa * fb > 0:
            raise BoxError(f"strip on column {c} is cut by the box edge")
        ends.append(brentq(lambda x: zu_image(c, x) - target, min(a, b), max(a, b),
                           xtol=1e-15, rtol=4 * np.finfo(float).eps))
    return min(ends), max(ends)


# --------------------------------------------------------------------------- covering


@dataclass
class CoveringVerdict:
    passed: bool
    n_arcs: int
    n_passed: int
    failures: List[str] = field(default_factory=list)


def admissible_arc(boxes: CoveringBoxes, rng: np.random.Generator) -> Callable[[float], float]:
    """Random graph ``zeta_s = h(zeta_u)`` over ``|zeta_u| <= eps_u`` with ``|h'| <= 1``."""
    es, eu = boxes.eps_s, boxes.eps_u
    c = rng.uniform(-es / 2, es / 2)
    a = rng.uniform(-0.5, 0.5)
    k = rng.integers(1, 3)
    b = rng.uniform(0, 0.9) * (1 - abs(a)) * eu / (k * np.pi)

    def h(t):
        return c + a * t + b * np.sin(k * np.pi * t / eu)

    return h


def _arc_strip_interval(boxes: CoveringBoxes, j: int, h) -> Optional[Tuple[float, float]]:
    eu = boxes.eps_u
    out = []
    for side in (0, 1):
        def g(t):
            return t - boxes.strip_interval(j, h(t))[side]
        if g(-eu) * g(eu) > 0:
            return None
        out.append(brentq(g, -eu, eu, xtol=1e-15))
    return out[0], out[1]


def check_arc(smap: PlanarMap, boxes: CoveringBoxes, h, samples: int = 9,
              tol: float = 0.02) -> Tuple[bool, str]:
    """Does ``F`` stretch the piece of the arc in each strip across the box?"""
    eu, es = boxes.eps_u, boxes.eps_s
    for j in range(2):
        iv = _arc_strip_interval(boxes, j, h)
        if iv is None or iv[1] <= iv[0]:
            return False, f"arc misses V{j}"
        ts = np.linspace(iv[0], iv[1], samples)
        img = np.array([boxes.to_zeta(smap.iterate(boxes.from_zeta([h(t), t]), boxes.m))
                        for t in ts])
        zs, zu = img[:, 0], img[:, 1]
        if not (abs(zu[0]) >= (1 - tol) * eu and abs(zu[-1]) >= (1 - tol) * eu
                and np.sign(zu[0]) != np.sign(zu[-1])):
            return False, f"image of the V{j} piece does not span the box"
        if np.any(np.abs(zu) > (1 + tol) * eu) or np.any(np.abs(zs) > es):
            return False, f"image of the V{j} piece leaves the box"
        dzu = np.diff(zu)
        if not (np.all(dzu > 0) or np.all(dzu < 0)):
            return False, f"image of the V{j} piece is not a graph over zeta_u"
        if np.any(np.abs(np.diff(zs)) > np.abs(dzu)):
            return False, f"image of the V{j} piece is too steep"
    return True, ""


def verify_covering(smap: PlanarMap, boxes: CoveringBoxes, n_arcs: int = 50, seed: int = 0,
                    samples: int = 9, tol: float = 0.02) -> CoveringVerdict:
    """Sample admissible arcs and check the stretching across both strips."""
    rng = np.random.default_rng(seed)
    n_ok, failures = 0, []
    for k in range(n_arcs):
        ok, why = check_arc(smap, boxes, admissible_arc(boxes, rng), samples, tol)
        if ok:
            n_ok += 1
        else:
            failures.append(f"arc {k}: {why}")
    return CoveringVerdict(n_ok == n_arcs, n_arcs, n_ok, failures)


# --------------------------------------------------------------------------- itineraries


@dataclass
class RealizedOrbit:
    """A point ``w`` with ``F^k(w)`` in ``H_{symbols[k]}``."""

    symbols: Tuple[int, ...]
    point: np.ndarray
    residuals: np.ndarray
    periodic: bool
    orbit: np.ndarray
    newton_residual: float = np.nan

    @property
    def visits_ok(self) -> bool:
        return bool(np.all(self.residuals <= EDGE_TOL))


def itinerary_residuals(smap: PlanarMap, boxes: CoveringBoxes, w, symbols) -> Tuple[np.ndarray, np.ndarray]:
    res, orbit = [], [np.asarray(w, dtype=float)]
    z = orbit[0]
    for k, sym in enumerate(symbols):
        res.append(boxes.distance_to_H(sym, z))
        if k < len(symbols) - 1:
            z = smap.iterate(z, boxes.m)
            orbit.append(z)
    return np.array(res), np.array(orbit)


def _bracket(smap: PlanarMap, boxes: CoveringBoxes, symbols, column: float,
             min_width: float = 1e-13) -> float:
    """Nested bracketing on the column ``zeta_s = column``; returns ``zeta_u``."""
    m = boxes.m

    def point(u):
        return boxes.from_zeta([column, u])

    lo, hi = boxes.strip_interval(symbols[0], column)
    for k in range(1, len(symbols)):
        sym = symbols[k]

        def g(u, side):
            y = boxes.to_zeta(smap.iterate(point(u), k * m))
            return y[1] - boxes.strip_interval(sym, y[0])[side]

        ends = []
        for side in (0, 1):
            ga, gb = g(lo, side), g(hi, side)
            if ga * gb > 0:
                raise PrecisionError(f"bracket lost at level {k} (word {tuple(symbols)})")
            ends.append(brentq(g, lo, hi, args=(side,), xtol=1e-16, rtol=4 * np.finfo(float).eps))
        lo, hi = min(ends), max(ends)
        if hi - lo < min_width * (1 + abs(lo)):
            raise PrecisionError(f"bracket width {hi - lo:.3g} below working precision "
                                 f"at level {k}")
    return 0.5 * (lo + hi)


def realize_itinerary(smap: PlanarMap, boxes: CoveringBoxes, symbols: Sequence[int],
                      periodic: bool = False, column: float = 0.0, repeats: Optional[int] = None,
                      tol: float = 1e-11, max_iter: int = 30) -> RealizedOrbit:
    """Point whose ``F``-orbit visits ``H_{i_0}, H_{i_1}, ...``.

    The word is realized in the strips first (``F^k(z)`` in ``V_{i_k}``) by
    nested bracketing along a column of the box; then ``w = F(z)`` visits
    the ``H`` boxes.  For periodic words the bracketed point of the repeated
    word and its first ``F``-iterates seed a multiple-shooting Newton solve
    for the cycle, one block per symbol.
    """
    symbols = tuple(int(s) for s in symbols)
    if not symbols or any(s not in (0, 1) for s in symbols):
        raise ValueError("symbols must be a non-empty word over {0, 1}")
    if len(symbols) > 12:
        raise ValueError("symbol window is limited to 12")
    m = boxes.m
    if not periodic:
        u = _bracket(smap, boxes, symbols, column)
        w = smap.iterate(boxes.from_zeta([column, u]), m)
        res, orbit = itinerary_residuals(smap, boxes, w, symbols)
        return RealizedOrbit(symbols, w, res, False, orbit)
    L = len(symbols)
    if repeats is None:
        repeats = max(1, 4 // L)
    word = symbols * repeats
    u = None
    while u is None:
        try:
            u = _bracket(smap, boxes, word, column)
        except PrecisionError:
            if len(word) <= L:
                raise
            word = word[:-L]
    # multiple shooting on F: one block per symbol keeps each Jacobian at the
    # expansion of a single F step instead of F^L
    Z = [boxes.from_zeta([column, u])]
    for _ in range(L - 1):
        Z.append(smap.iterate(Z[-1], m))
    Z = np.array(Z)

    def residual(Z):
        return np.array([smap.iterate(Z[k], m) - Z[(k + 1) % L] for k in range(L)])

    R = residual(Z)
    best = (np.abs(R).max(), Z.copy())
    for _ in range(max_iter):
        M = np.zeros((2 * L, 2 * L))
        for k in range(L):
            M[2 * k:2 * k + 2, 2 * k:2 * k + 2] += smap.jacobian_power(Z[k], m)
            j = (k + 1) % L
            M[2 * k:2 * k + 2, 2 * j:2 * j + 2] -= np.eye(2)
        dZ = np.linalg.solve(M, -R.ravel()).reshape(L, 2)
        Z = Z + dZ
        R = residual(Z)
        if np.abs(R).max() < best[0]:
            best = (np.abs(R).max(), Z.copy())
        if np.abs(dZ).max() < tol * (1 + np.abs(Z).max()):
            break
    else:
        if not best[0] < 1e-6:
            raise ChaosError(f"Newton failed for the periodic word {symbols}")
    nres, Z = best
    # each visit is one F step from its own node; chaining F along the cycle
    # would amplify the node error by the full expansion of F^L
    orbit = np.array([smap.iterate(zk, m) for zk in Z])
    res = np.array([boxes.distance_to_H(sym, wk) for sym, wk in zip(symbols, orbit)])
    return RealizedOrbit(symbols, orbit[0], res, True, orbit, float(nres))


def unit_shift_holds(smap: PlanarMap, boxes: CoveringBoxes, orbit: RealizedOrbit,
                     tol: float = EDGE_TOL, shift_tol: float = 1e-8) -> bool:
    """``F`` of the point realizing ``(i0, ..., ik)`` realizes ``(i1, ..., ik)``.

    For periodic words the shifted word is the rotation ``(i1, ..., ik, i0)``
    and ``F(w)`` must coincide with the next cycle node, up to ``shift_tol``
    plus the Newton residual of the cycle amplified by ``DF``.
    """
    w1 = smap.iterate(orbit.point, boxes.m)
    if orbit.periodic:
        # F(w) must land on the next node of the cycle, whose visits are the
        # rotated word; the node mismatch is amplified once by DF
        L = len(orbit.symbols)
        gap = np.linalg.norm(w1 - orbit.orbit[1 % L])
        amp = np.linalg.norm(smap.jacobian_power(orbit.point, boxes.m), 2)
        allowed = shift_tol * (1 + np.linalg.norm(w1)) + 10 * amp * orbit.newton_residual
        rolled = np.roll(orbit.residuals, -1)
        return bool(gap <= allowed and np.all(rolled <= tol))
    if len(orbit.symbols) < 2:
        return True
    res, _ = itinerary_residuals(smap, boxes, w1, orbit.symbols[1:])
    return bool(np.all(res <= tol))


def orbit_clearance(smap: ShiftMap, z, steps: int) -> float:
    """Smallest impact speed or interior near-miss height along ``steps`` map steps.

    Small values mean the orbit passes close to the grazing set.
    """
    best = np.inf
    z = np.asarray(z, dtype=float)
    for _ in range(steps):
        traj = smap.trajectory(z)
        for ev in traj.impacts:
            best = min(best, ev.incoming_velocity)
        for seg in traj.segments:
            for _, x in seg.local_minima():
                best = min(best, x)
        z = traj.z_end
    return best


def write_orbits_csv(orbits: Sequence[RealizedOrbit], path, header: Sequence[str] = ()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["word", "periodic", "step", "x1", "y1", "residual"])
        for orb in orbits:
            word = "".join(map(str, orb.symbols))
            for k, (pt, r) in enumerate(zip(orb.orbit, orb.residuals)):
                w.writerow([word, int(orb.periodic), k, f"{pt[0]:.17g}", f"{pt[1]:.17g}",
                            f"{r:.17g}"])


# --------------------------------------------------------------------------- pipeline


@dataclass
class ChaosBundle:
    unstable: ManifoldArc
    stable: ManifoldArc
    homoclinic: HomoclinicPoint
    boxes: CoveringBoxes
    covering: CoveringVerdict
    orbits: List[RealizedOrbit]
    failed_words: List[Tuple[Tuple[int, ...], str]] = field(default_factory=list)


def _stable_side(W_u: ManifoldArc, frame: np.ndarray, exclude: float) -> float:
    """Side of the stable eigenline that the unstable arc first comes back across."""
    zeta = np.linalg.solve(frame, (W_u.points - W_u.fixed_point).T).T
    far = np.linalg.norm(W_u.points - W_u.fixed_point, axis=1) > exclude
    s = np.sign(zeta[:, 1])
    for i in range(len(zeta) - 1):
        if far[i] and far[i + 1] and s[i] != s[i + 1] and s[i] != 0:
            return float(np.sign(zeta[i, 0]) or 1.0)
    raise NoIntersectionError("the unstable arc never returns across the stable direction")


def run_pipeline(smap: PlanarMap, z_fixed, eps_u: float, eps_s: Optional[float] = None,
                 unstable_side: Optional[float] = None, stable_side: Optional[float] = None,
                 unstable_options: Optional[dict] = None, stable_options: Optional[dict] = None,
                 exclude_radius: Optional[float] = None, n_arcs: int = 50, seed: int = 0,
                 words: Sequence[Sequence[int]] = ((0,), (1,), (0, 1)), periodic: bool = True,
                 n_columns: int = 17) -> ChaosBundle:
    """Manifolds, homoclinic point, boxes, covering check and realized words.

    ``unstable_side`` defaults to the branch heading toward the wall (smaller
    ``x_1``); ``stable_side`` to the side where the unstable arc returns.
    Failing words are collected in ``failed_words`` rather than raised.
    """
    z_fixed = np.asarray(z_fixed, dtype=float)
    _, v_u, _, v_s = saddle_split(smap.jacobian(z_fixed))
    frame = np.column_stack([v_s, v_u])
    if unstable_side is None:
        unstable_side = -1.0 if v_u[0] > 0 else 1.0
    W_u = grow_manifold(smap, z_fixed, "unstable", unstable_side, **(unstable_options or {}))
    if exclude_radius is None:
        exclude_radius = 10 * np.linalg.norm(W_u.points[0] - z_fixed)
    if stable_side is None:
        stable_side = _stable_side(W_u, frame, exclude_radius)
    W_s = grow_manifold(smap, z_fixed, "stable", stable_side, **(stable_options or {}))
    hp = find_homoclinic(W_u, W_s, smap, exclude_radius=exclude_radius)
    boxes = build_boxes(smap, z_fixed, hp, eps_u, eps_s, n_columns=n_columns)
    verdict = verify_covering(smap, boxes, n_arcs, seed)
    orbits, failed = [], []
    if verdict.passed:
        for w in words:
            try:
                orbits.append(realize_itinerary(smap, boxes, w, periodic=periodic))
            except ChaosError as exc:
                failed.append((tuple(w), str(exc)))
    return ChaosBundle(W_u, W_s, hp, boxes, verdict, orbits, failed)
