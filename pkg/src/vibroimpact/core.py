"""Domain types for vibro-impact systems and the forced linear oscillator.

A system is a second-order ODE ``x_k' = y_k, y_k' = f_k(t, z, mu)`` on the
half-space ``x_1 >= 0`` with an instantaneous velocity reversal
``y_1 -> -r y_1`` on the delimiter ``x_1 = 0``.  States are stored
interleaved as ``(x_1, y_1, ..., x_n, y_n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Tuple

import numpy as np

ForceFn = Callable[[float, np.ndarray, float], np.ndarray]
ForceJacobianFn = Callable[[float, np.ndarray, float], np.ndarray]

# |x_1| below this (scaled by 1 + |z|) counts as "on the delimiter"
DELIMITER_TOL = 1e-10


class ImpactError(ValueError):
    """Raised when an impact rule is applied to an inadmissible state."""


def on_delimiter(z, tol: float = DELIMITER_TOL) -> bool:
    z = np.asarray(z, dtype=float)
    return abs(z[0]) <= tol * (1.0 + np.linalg.norm(z))


def check_state(z, n: Optional[int] = None) -> np.ndarray:
    """Return ``z`` as a float array after validating its shape."""
    z = np.array(z, dtype=float).ravel()
    if z.size == 0 or z.size % 2:
        raise ValueError(f"state length must be even and positive, got {z.size}")
    if n is not None and z.size != 2 * n:
        raise ValueError(f"state length {z.size} does not match 2n = {2 * n}")
    return z


@dataclass(frozen=True)
class SystemDef:
    """A vibro-impact system, identified with the pair (force, restitution).

    Parameters
    ----------
    n : int
        Degrees of freedom.  Coordinate 1 is the one constrained by the wall.
    period : float
        Forcing period ``T``; ``force`` must be ``T``-periodic in ``t``.
    force : callable
        ``force(t, z, mu) -> array of shape (n,)`` of accelerations.
    restitution : callable or float
        ``r(mu)`` in ``(0, 1]``.
    parameter_range : tuple of float
        Closed interval of admissible ``mu``.
    force_jacobian : callable, optional
        ``force_jacobian(t, z, mu) -> (n, 2n)`` array ``df/dz``.  When absent,
        central differences are used.
    name : str
        Free-form label used in reports.
    """

    n: int
    period: float
    force: ForceFn
    restitution: Callable[[float], float] | float = 1.0
    parameter_range: Tuple[float, float] = (-np.inf, np.inf)
    force_jacobian: Optional[ForceJacobianFn] = None
    name: str = "custom"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be a positive integer")
        if not self.period > 0:
            raise ValueError("period must be positive")
        lo, hi = self.parameter_range
        if lo > hi:
            raise ValueError("parameter_range must satisfy lo <= hi")
        if not callable(self.restitution):
            r = float(self.restitution)
            if not 0.0 < r <= 1.0:
                raise ValueError(f"restitution must lie in (0, 1], got {r}")

    def r(self, mu: float = 0.0) -> float:
        if callable(self.restitution):
            value = float(self.restitution(mu))
        else:
            value = float(self.restitution)
        if not 0.0 < value <= 1.0:
            raise ValueError(f"restitution must lie in (0, 1], got {value}")
        return value

    def f(self, t: float, z: np.ndarray, mu: float = 0.0) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.force(t, z, mu), dtype=float))

    def check_parameter(self, mu: float) -> float:
        lo, hi = self.parameter_range
        if not lo <= mu <= hi:
            raise ValueError(f"parameter {mu} outside range [{lo}, {hi}]")
        return float(mu)

    def vector_field(self, t: float, z: np.ndarray, mu: float = 0.0) -> np.ndarray:
        """Right-hand side of the free-flight system."""
        dz = np.empty_like(z)
        dz[0::2] = z[1::2]
        dz[1::2] = self.f(t, z, mu)
        return dz

    def state_jacobian(self, t: float, z: np.ndarray, mu: float = 0.0) -> np.ndarray:
        """Jacobian of :meth:`vector_field` with respect to ``z``."""
        n2 = 2 * self.n
        if self.force_jacobian is not None:
            df = np.asarray(self.force_jacobian(t, z, mu), dtype=float)
        else:
            h = np.sqrt(np.finfo(float).eps) * (1.0 + np.linalg.norm(z))
            df = np.empty((self.n, n2))
            for j in range(n2):
                zp = z.copy()
                zm = z.copy()
                zp[j] += h
                zm[j] -= h
                df[:, j] = (self.f(t, zp, mu) - self.f(t, zm, mu)) / (2 * h)
        jac = np.zeros((n2, n2))
        jac[0::2, 1::2] = np.eye(self.n)
        jac[1::2, :] = df
        return jac

    def with_force(self, extra: ForceFn, name: Optional[str] = None) -> "SystemDef":
        """Return a copy whose force is ``force + extra``.

        The analytic Jacobian is dropped since ``extra`` has none.
        """
        base = self.force

        def force(t, z, mu):
            return np.asarray(base(t, z, mu), dtype=float) + np.asarray(extra(t, z, mu), dtype=float)

        return replace(self, force=force, force_jacobian=None, name=name or self.name + "+g")

    def with_restitution(self, r) -> "SystemDef":
        return replace(self, restitution=r)


@dataclass(frozen=True)
class ParameterValue:
    mu: float
    system: Optional[SystemDef] = field(default=None, compare=False)

    def __post_init__(self):
        if self.system is not None:
            self.system.check_parameter(self.mu)

    def __float__(self):
        return float(self.mu)


def apply_impact(z_minus, r: float, tol: float = DELIMITER_TOL) -> np.ndarray:
    """Newtonian impact rule: ``y_1 -> -r y_1``, everything else unchanged."""
    z = check_state(z_minus)
    if not r > 0.0:
        raise ImpactError(f"restitution must be positive, got {r}")
    if not on_delimiter(z, tol):
        raise ImpactError(f"impact requires x1 on the delimiter, got x1 = {z[0]!r}")
    if not z[1] < 0.0:
        raise ImpactError(f"impact requires approach velocity y1 < 0, got y1 = {z[1]!r}")
    out = z.copy()
    out[1] = -r * z[1]
    return out


@dataclass(frozen=True)
class ForcedLinearOscillator:
    """``x'' + p x' - q x = -a - b sin(omega t)`` against a wall at ``x = 0``.

    The free system is a saddle: its unique periodic solution ``phi(t)`` is
    unstable, and it grazes the wall when the positivity margin vanishes.
    ``restitution`` defaults to the elastic case.
    """

    p: float
    q: float
    a: float
    b: float
    omega: float
    restitution: float = 1.0

    def __post_init__(self):
        if not self.q > 0:
            raise ValueError(f"q must be positive, got {self.q}")
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if not self.a > 0:
            raise ValueError(f"a must be positive, got {self.a}")
        if not 0.0 < self.restitution <= 1.0:
            raise ValueError(f"restitution must lie in (0, 1], got {self.restitution}")

    @property
    def period(self) -> float:
        return 2 * np.pi / self.omega

    def modes(self) -> Tuple[float, float]:
        return oscillator_modes(self)

    def fundamental(self, t: float) -> np.ndarray:
        return oscillator_fundamental(self, t)

    def periodic(self, t):
        return oscillator_periodic(self, t)

    def positivity_margin(self) -> float:
        return periodic_positivity_margin(self)

    def fourier_coefficients(self) -> Tuple[float, float]:
        """Sine and cosine amplitudes of the periodic solution."""
        w2q = self.omega ** 2 + self.q
        den = w2q ** 2 + (self.p * self.omega) ** 2
        return self.b * w2q / den, self.b * self.p * self.omega / den

    def min_periodic(self) -> float:
        """Minimum over ``t`` of the periodic solution's position."""
        A, B = self.fourier_coefficients()
        return self.a / self.q - np.hypot(A, B)

    def min_time(self) -> float:
        """Phase in ``[0, T)`` at which the periodic solution is closest to the wall."""
        A, B = self.fourier_coefficients()
        if A == 0 and B == 0:
            return 0.0
        # A sin + B cos = R sin(wt + psi), minimal where wt + psi = -pi/2
        psi = np.arctan2(B, A)
        return float(np.mod((-np.pi / 2 - psi) / self.omega, self.period))

    def with_params(self, **kwargs) -> "ForcedLinearOscillator":
        return replace(self, **kwargs)

    def grazing_value(self, name: str) -> float:
        """Closed-form value of parameter ``name`` at which the margin vanishes.

        Supported for ``"b"`` and ``"a"``.
        """
        den = np.sqrt((self.omega ** 2 + self.q) ** 2 + (self.p * self.omega) ** 2)
        if name == "b":
            return self.a * den / self.q
        if name == "a":
            return self.q * abs(self.b) / den
        raise ValueError(f"no closed-form grazing value for parameter {name!r}")

    def system(self, parameter: Optional[str] = None,
               parameter_range: Tuple[float, float] = (-np.inf, np.inf)) -> SystemDef:
        """SystemDef view; ``parameter`` names the field that plays ``mu``."""
        fields = ("p", "q", "a", "b", "omega")
        if parameter is not None and parameter not in fields:
            raise ValueError(f"parameter must be one of {fields}, got {parameter!r}")
        if parameter == "omega":
            raise ValueError("omega changes the period and cannot be the parameter")
        base = {k: getattr(self, k) for k in fields}

        def coeffs(mu):
            if parameter is None:
                return base
            c = dict(base)
            c[parameter] = mu
            return c

        omega = self.omega

        def force(t, z, mu):
            c = coeffs(mu)
            return np.array([c["q"] * z[0] - c["p"] * z[1] - c["a"] - c["b"] * np.sin(omega * t)])

        def force_jacobian(t, z, mu):
            c = coeffs(mu)
            return np.array([[c["q"], -c["p"]]])

        return SystemDef(n=1, period=self.period, force=force, restitution=self.restitution,
                         parameter_range=parameter_range, force_jacobian=force_jacobian,
                         name=f"oscillator(p={self.p:g}, q={self.q:g}, a={self.a:g}, "
                              f"b={self.b:g}, omega={self.omega:g})")


def oscillator_modes(osc: ForcedLinearOscillator) -> Tuple[float, float]:
    """Exponents ``(lambda_plus, lambda_minus)`` of the homogeneous saddle."""
    if not osc.q > 0:
        raise ValueError("q must be positive")
    disc = np.sqrt(osc.p ** 2 + 4 * osc.q)
    return (-osc.p + disc) / 2, (-osc.p - disc) / 2


def oscillator_fundamental(osc: ForcedLinearOscillator, t: float) -> np.ndarray:
    """Fundamental matrix of the homogeneous system, identity at ``t = 0``."""
    lp, lm = oscillator_modes(osc)
    ep, em = np.exp(lp * t), np.exp(lm * t)
    s = np.sqrt(osc.p ** 2 + 4 * osc.q)
    return np.array([
        [lp * em - lm * ep, ep - em],
        [osc.q * (ep - em), lp * ep - lm * em],
    ]) / s


def oscillator_periodic(osc: ForcedLinearOscillator, t):
    """Position and velocity of the unique periodic solution at time(s) ``t``."""
    A, B = osc.fourier_coefficients()
    w = osc.omega
    wt = w * np.asarray(t, dtype=float)
    pos = osc.a / osc.q + A * np.sin(wt) + B * np.cos(wt)
    vel = w * (A * np.cos(wt) - B * np.sin(wt))
    return pos, vel


def periodic_positivity_margin(osc: ForcedLinearOscillator) -> float:
    """``a^2((w^2+q)^2 + p^2 w^2) - b^2 q^2``; positive iff the orbit stays off the wall."""
    w2 = osc.omega ** 2
    return osc.a ** 2 * ((w2 + osc.q) ** 2 + osc.p ** 2 * w2) - osc.b ** 2 * osc.q ** 2
