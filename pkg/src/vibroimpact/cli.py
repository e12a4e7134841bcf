"""Command-line front end.

Usage::

    vibroimpact {simulate,grazing,scan,chaos,soft} --config FILE [--out DIR] [--seed N] [--verbose]

The configuration is an INI file (``[section]`` headers, ``key = value``
lines, ``#`` or ``;`` comments, no nesting).  Sections and keys:

``[system]``
    ``kind`` = ``oscillator`` (default), ``gravity`` or ``horseshoe``.
    Oscillator: ``p, q, a, omega``, ``restitution`` and either ``b`` or
    ``b_ratio`` (multiple of the grazing amplitude).  Gravity (bouncing
    ball): ``gravity``, ``restitution``, ``period``.  Horseshoe: ``k``.
``[parameter]``
    ``name`` of the oscillator field that plays ``mu`` (default ``b``),
    ``lo``, ``hi`` and ``count`` for grazing brackets and scans.
``[initial]``
    ``t0, x1, y1``.
``[run]``
    ``duration``; ``transient`` and ``samples`` (periods) for scans.
``[integration]``
    ``rel_tol, abs_tol, event_tol, chatter_velocity``.
``[matrix]``
    ``A`` = comma-separated entries of a square matrix, row by row; when
    present the grazing command analyzes it directly.
``[penalty]``
    ``nu`` (comma list), ``restitution``, ``scenarios``, ``y_min``, ``y_max``;
    ``conjugacy = true`` with ``tau_guess, y_guess, theta`` tracks a
    one-impact orbit into the penalty model.
``[chaos]``
    ``eps_u, eps_s, arcs, words`` (e.g. ``0, 1, 01``), ``wall``,
    ``unstable_length, stable_length, generations, chord_tol, seed_length``,
    ``columns``, ``exclude_radius``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 negative analysis verdict.  CSV files start with ``#`` comment lines
recording the version, the sha256 digest of the configuration and the seed.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .chaos import (AffineHorseshoe, ChaosError, NoIntersectionError, NotSaddleError, ShiftMap,
                    TangencyError, run_pipeline, unit_shift_holds, write_orbits_csv)
from .core import ForcedLinearOscillator, SystemDef
from .grazing import (ConvergenceError, analyze_conditions, choose_theta, find_grazing_parameter,
                      find_impact_orbit, find_periodic_orbit, limiting_matrix)
from .integrator import (IntegrationError, IntegrationSettings, shift_map, simulate,
                         write_impacts_csv, write_trajectory_csv)
from .soft import (AnomalousBounceError, PenaltySettings, bounce_map_error, conjugacy_check,
                   fit_error_slope, write_bounce_csv)

log = logging.getLogger("vibroimpact")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_NEGATIVE = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class Verdict(Exception):
    """Negative analysis outcome (exit 4)."""


# --------------------------------------------------------------------------- config


class Scenario:
    """Parsed configuration with typed accessors that name the offending field."""

    def __init__(self, parser: configparser.ConfigParser, seed: int):
        self.cp = parser
        self.seed = seed
        self.digest = hashlib.sha256(self.canonical().encode()).hexdigest()

    @classmethod
    def load(cls, path: Optional[str], seed: Optional[int] = None) -> "Scenario":
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        if path is not None:
            try:
                with open(path) as fh:
                    cp.read_file(fh)
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from exc
            except configparser.Error as exc:
                raise ConfigError(f"malformed config: {exc}") from exc
        if seed is None:
            seed = cls._int(cp, "run", "seed", 0)
        return cls(cp, int(seed))

    def canonical(self) -> str:
        lines = []
        for sec in sorted(self.cp.sections()):
            lines.append(f"[{sec}]")
            lines.extend(f"{k} = {v}" for k, v in sorted(self.cp.items(sec)))
        return "\n".join(lines) + "\n"

    @staticmethod
    def _int(cp, sec, key, default):
        try:
            return cp.getint(sec, key, fallback=default)
        except ValueError as exc:
            raise ConfigError(f"[{sec}] {key}: expected an integer") from exc

    def get(self, sec: str, key: str, default=None) -> Optional[str]:
        return self.cp.get(sec, key, fallback=default)

    def float(self, sec: str, key: str, default: Optional[float] = None) -> float:
        raw = self.cp.get(sec, key, fallback=None)
        if raw is None:
            if default is None:
                raise ConfigError(f"[{sec}] {key}: missing")
            return float(default)
        try:
            value = float(raw)
        except ValueError as exc:
            raise ConfigError(f"[{sec}] {key}: not a number: {raw!r}") from exc
        if not np.isfinite(value):
            raise ConfigError(f"[{sec}] {key}: must be finite")
        return value

    def int(self, sec: str, key: str, default: int) -> int:
        return self._int(self.cp, sec, key, default)

    def bool(self, sec: str, key: str, default: bool) -> bool:
        try:
            return self.cp.getboolean(sec, key, fallback=default)
        except ValueError as exc:
            raise ConfigError(f"[{sec}] {key}: expected true/false") from exc

    def floats(self, sec: str, key: str, default: Sequence[float]) -> List[float]:
        raw = self.cp.get(sec, key, fallback=None)
        if raw is None:
            return list(default)
        try:
            return [float(v) for v in raw.replace(";", ",").split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"[{sec}] {key}: not a list of numbers: {raw!r}") from exc

    def positive(self, sec: str, key: str, default: Optional[float] = None) -> float:
        v = self.float(sec, key, default)
        if not v > 0:
            raise ConfigError(f"[{sec}] {key}: must be positive, got {v:g}")
        return v

    # ---- derived objects

    @property
    def kind(self) -> str:
        kind = (self.get("system", "kind", "oscillator") or "").strip().lower()
        if kind not in ("oscillator", "gravity", "horseshoe"):
            raise ConfigError(f"[system] kind: unknown built-in {kind!r}")
        return kind

    def settings(self) -> IntegrationSettings:
        kw = {}
        for key in ("rel_tol", "abs_tol", "event_tol", "chatter_velocity"):
            if self.cp.has_option("integration", key):
                kw[key] = self.positive("integration", key)
        return IntegrationSettings(**kw)

    def oscillator(self) -> ForcedLinearOscillator:
        if self.kind != "oscillator":
            raise ConfigError(f"[system] kind: this command needs an oscillator, got {self.kind!r}")
        vals = {k: self.float("system", k, d) for k, d in
                (("p", 0.1), ("q", 1.0), ("a", 1.0), ("omega", 1.0), ("restitution", 1.0))}
        if not vals["q"] > 0:
            raise ConfigError(f"[system] q: must be positive, got {vals['q']:g}")
        try:
            osc = ForcedLinearOscillator(b=0.0, **vals)
        except ValueError as exc:
            raise ConfigError(f"[system] {exc}") from exc
        if self.cp.has_option("system", "b"):
            b = self.float("system", "b")
        else:
            b = self.float("system", "b_ratio", 0.8) * osc.grazing_value("b")
        return osc.with_params(b=b)

    def parameter_name(self) -> str:
        name = (self.get("parameter", "name", "b") or "").strip()
        if name not in ("p", "q", "a", "b"):
            raise ConfigError(f"[parameter] name: must be one of p, q, a, b, got {name!r}")
        return name

    def parameter_range(self):
        lo, hi = self.float("parameter", "lo"), self.float("parameter", "hi")
        if not lo < hi:
            raise ConfigError(f"[parameter] lo/hi: empty range [{lo:g}, {hi:g}]")
        return lo, hi

    def system(self):
        """``(SystemDef, mu)`` for the configured built-in."""
        if self.kind == "gravity":
            g = self.positive("system", "gravity", 1.0)
            r = self.float("system", "restitution", 0.5)
            if not 0 < r <= 1:
                raise ConfigError(f"[system] restitution: must lie in (0, 1], got {r:g}")
            period = self.positive("system", "period", 1.0)
            sysdef = SystemDef(n=1, period=period, force=lambda t, z, mu: np.array([-g]),
                               restitution=r, force_jacobian=lambda t, z, mu: np.zeros((1, 2)),
                               name=f"gravity(g={g:g})")
            return sysdef, 0.0
        osc = self.oscillator()
        name = self.parameter_name()
        return osc.system(name), float(getattr(osc, name))

    def header(self, command: str) -> List[str]:
        return [f"vibroimpact {__version__} {command}", f"config sha256 {self.digest}",
                f"seed {self.seed}"]


# --------------------------------------------------------------------------- commands


def cmd_simulate(sc: Scenario, out: Path) -> int:
    """Integrate one trajectory; write trajectory and impact CSVs."""
    sysdef, mu = sc.system()
    t0 = sc.float("initial", "t0", 0.0)
    z0 = [sc.float("initial", "x1", 1.0), sc.float("initial", "y1", 0.0)]
    duration = sc.positive("run", "duration", sysdef.period * 10)
    traj = simulate(sysdef, mu, t0, z0, duration, sc.settings())
    write_trajectory_csv(traj, out / "trajectory.csv", header=sc.header("simulate"))
    write_impacts_csv(traj, out / "impacts.csv", header=sc.header("simulate"))
    sticking = sum(s.t_end - s.t_start for s in traj.sticking_intervals)
    print(f"system: {sysdef.name}")
    print(f"impacts: {len(traj.impacts)}")
    print(f"sticking time: {sticking:.17g}")
    if traj.sticking_intervals:
        print(f"first sticking at t = {traj.sticking_intervals[0].t_start:.17g}")
    return EXIT_OK


def cmd_grazing(sc: Scenario, out: Path) -> int:
    """Locate grazing and check the chaos conditions on the limiting matrix."""
    if sc.cp.has_option("matrix", "A"):
        entries = sc.floats("matrix", "A", [])
        k = int(round(np.sqrt(len(entries))))
        if k < 2 or k * k != len(entries) or k % 2:
            raise ConfigError("[matrix] A: need an even-dimensional square matrix")
        A = np.array(entries).reshape(k, k)
        row = []
    else:
        osc = sc.oscillator()
        name = sc.parameter_name()
        sysdef = osc.system(name)
        settings = sc.settings()
        lo, hi = sc.parameter_range()
        theta = choose_theta(osc.with_params(**{name: lo}).min_time(), osc.period)
        guess = osc.with_params(**{name: lo}).periodic(-theta)
        loc = find_grazing_parameter(sysdef, theta, (lo, hi), guess, settings)
        A, mu, _ = limiting_matrix(sysdef, loc, settings)
        print(f"grazing {name}* = {loc.mu_star:.15g} (phi0 = {loc.phi0:.12g}, "
              f"phase = {loc.grazing_time:.12g})")
        row = [loc.mu_star, loc.phi0, loc.grazing_time]
    rep = analyze_conditions(A)
    sys.stdout.write(rep.to_text())
    with open(out / "grazing.csv", "w", newline="") as fh:
        for line in sc.header("grazing"):
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow((["mu_star", "phi0", "grazing_phase"] if row else []) + list(rep.CSV_FIELDS))
        w.writerow([f"{v:.17g}" for v in row] + rep.csv_row())
    if rep.crossing is None:
        print("indeterminate: a12 and alpha12 vanish")
        return EXIT_NEGATIVE
    return EXIT_OK if rep.all_hold else EXIT_NEGATIVE


def cmd_scan(sc: Scenario, out: Path) -> int:
    """Stroboscopic samples and impact counts over a parameter range."""
    osc = sc.oscillator()
    name = sc.parameter_name()
    lo, hi = sc.parameter_range()
    count = sc.int("parameter", "count", 21)
    if count < 2:
        raise ConfigError(f"[parameter] count: need at least 2 points, got {count}")
    transient = sc.int("run", "transient", 0)
    samples = sc.int("run", "samples", 8)
    if transient < 0 or samples < 1:
        raise ConfigError("[run] transient/samples: must be non-negative/positive")
    settings = sc.settings()
    sysdef = osc.system(name)
    theta = choose_theta(osc.min_time(), osc.period)
    rows = []
    for mu in np.linspace(lo, hi, count):
        z = np.asarray(osc.with_params(**{name: mu}).periodic(-theta), dtype=float)
        try:
            z, _ = find_periodic_orbit(sysdef, mu, theta, z, settings, tol=1e-11)
        except (ConvergenceError, IntegrationError, ValueError) as exc:
            log.info("%s = %.6g: no period-1 fixed point (%s); iterating", name, mu, exc)
        try:
            for k in range(transient + samples):
                z1, traj = shift_map(sysdef, mu, theta, z, settings, return_trajectory=True)
                if k >= transient:
                    rows.append((mu, k - transient, z[0], z[1], len(traj.impacts)))
                z = z1
                if np.linalg.norm(z) > 1e6:
                    raise IntegrationError("orbit escaped")
        except (IntegrationError, ValueError) as exc:
            log.warning("%s = %.6g: stopped after %d periods (%s)", name, mu, k, exc)
    with open(out / "scan.csv", "w", newline="") as fh:
        for line in sc.header("scan"):
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow([name, "sample", "x1", "y1", "impacts"])
        for mu, k, x, y, n in rows:
            w.writerow([f"{mu:.17g}", k, f"{x:.17g}", f"{y:.17g}", n])
    print(f"scan: {count} values of {name} in [{lo:g}, {hi:g}], {len(rows)} rows")
    return EXIT_OK


def _words(raw: str) -> List[tuple]:
    words = []
    for tok in raw.split(","):
        tok = tok.strip()
        if not tok or set(tok) - {"0", "1"}:
            raise ConfigError(f"[chaos] words: bad word {tok!r}")
        words.append(tuple(int(c) for c in tok))
    return words


def cmd_chaos(sc: Scenario, out: Path) -> int:
    """Manifolds, homoclinic point, covering boxes and realized itineraries."""
    words = _words(sc.get("chaos", "words", "0, 1, 01"))
    n_arcs = sc.int("chaos", "arcs", 50)
    columns = sc.int("chaos", "columns", 17)
    if sc.kind == "horseshoe":
        k = sc.float("system", "k", 3.0)
        if not k > 2:
            raise ConfigError(f"[system] k: must exceed 2, got {k:g}")
        smap, z = AffineHorseshoe(k), np.zeros(2)
        eps_u = sc.positive("chaos", "eps_u", 1.2)
        grow = dict(generations=sc.int("chaos", "generations", 8),
                    chord_tol=sc.positive("chaos", "chord_tol", 0.05),
                    seed_length=sc.positive("chaos", "seed_length", 1e-3))
        u_opts, s_opts = dict(grow), dict(grow)
        exclude = sc.positive("chaos", "exclude_radius", 0.9)
        sides = (1.0, 1.0)
    else:
        osc = sc.oscillator()
        settings = sc.settings()
        theta = choose_theta(osc.min_time(), osc.period)
        smap = ShiftMap(osc.system("b"), osc.b, theta, settings,
                        wall=sc.bool("chaos", "wall", True))
        z, rep = find_periodic_orbit(smap.sys, osc.b, theta, osc.periodic(-theta), settings,
                                     wall=smap.wall)
        if rep.n_impacts:
            raise Verdict("the period-1 point impacts the wall; expected the free saddle")
        eps_u = sc.positive("chaos", "eps_u", 0.05)
        grow = dict(generations=sc.int("chaos", "generations", 20),
                    chord_tol=sc.positive("chaos", "chord_tol", 2e-3),
                    seed_length=sc.positive("chaos", "seed_length", 1e-5))
        u_opts = dict(grow, max_length=sc.positive("chaos", "unstable_length", 1.0))
        s_opts = dict(grow, max_length=sc.positive("chaos", "stable_length", 0.3))
        exclude = sc.float("chaos", "exclude_radius", 0.0) or None
        sides = (None, None)
    eps_s = sc.positive("chaos", "eps_s", 2 * eps_u)
    if eps_s < 2 * eps_u:
        raise ConfigError(f"[chaos] eps_s: must be at least 2 eps_u = {2 * eps_u:g}")
    bundle = run_pipeline(smap, z, eps_u, eps_s, sides[0], sides[1], u_opts, s_opts, exclude,
                          n_arcs, sc.seed, words, True, columns)
    hdr = sc.header("chaos")
    bundle.unstable.to_csv(out / "manifold_unstable.csv", hdr)
    bundle.stable.to_csv(out / "manifold_stable.csv", hdr)
    bundle.homoclinic.to_csv(out / "homoclinic.csv", hdr)
    bundle.boxes.to_csv(out / "boxes.csv", hdr)
    write_orbits_csv(bundle.orbits, out / "orbits.csv", hdr)
    hp, B = bundle.homoclinic, bundle.boxes
    print(f"homoclinic point {hp.location[0]:.12g}, {hp.location[1]:.12g}; "
          f"crossing angle {hp.crossing_angle:.6g} rad")
    print(f"boxes: eps_u = {B.eps_u:g}, eps_s = {B.eps_s:g}, m+ = {B.m_plus}, m- = {B.m_minus}, "
          f"m = {B.m}")
    print(f"covering: {bundle.covering.n_passed}/{bundle.covering.n_arcs} arcs pass")
    for orb in bundle.orbits:
        shift = unit_shift_holds(smap, B, orb)
        print(f"word {''.join(map(str, orb.symbols))}: point {orb.point[0]:.12g}, "
              f"{orb.point[1]:.12g}; max residual {orb.residuals.max():.3g}; unit shift {shift}")
    for w, why in bundle.failed_words:
        print(f"word {''.join(map(str, w))}: failed ({why})")
    if not bundle.covering.passed:
        for line in bundle.covering.failures[:5]:
            print(f"  {line}")
        raise Verdict("covering verdict false")
    if bundle.failed_words:
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_soft(sc: Scenario, out: Path) -> int:
    """Penalty-model bounce errors over a stiffness grid."""
    osc = sc.oscillator()
    nus = sc.floats("penalty", "nu", [1e2, 1e3, 1e4, 1e5])
    if not nus or any(not nu > 0 for nu in nus):
        raise ConfigError(f"[penalty] nu: every stiffness must be positive, got {nus}")
    r0 = sc.float("penalty", "restitution", osc.restitution)
    if not 0 < r0 <= 1:
        raise ConfigError(f"[penalty] restitution: must lie in (0, 1], got {r0:g}")
    n_sc = sc.int("penalty", "scenarios", 10)
    y_min, y_max = sc.positive("penalty", "y_min", 0.1), sc.positive("penalty", "y_max", 1.0)
    if n_sc < 1 or not y_min < y_max:
        raise ConfigError("[penalty] scenarios/y_min/y_max: need scenarios >= 1 and y_min < y_max")
    settings = sc.settings()
    if not sc.cp.has_option("integration", "rel_tol"):
        settings = settings.replace(rel_tol=1e-12, abs_tol=1e-12)
    sysdef, mu = osc.system("b"), osc.b
    ps = PenaltySettings(nus[0], r0)
    print(f"alpha = {ps.alpha:.17g}")
    rng = np.random.default_rng(sc.seed)
    t0s = rng.uniform(0, osc.period, n_sc)
    y0s = -rng.uniform(y_min, y_max, n_sc)
    records, slopes, bounds = [], [], []
    for t0, y0 in zip(t0s, y0s):
        recs = [bounce_map_error(sysdef, mu, ps.with_nu(nu), t0, [], y0, settings) for nu in nus]
        records.extend(recs)
        if len(nus) > 1 and all(r.restitution_error > 0 for r in recs):
            slopes.append(fit_error_slope(recs))
        bounds.append(max(r.scaled_error for r in recs))
    write_bounce_csv(records, out / "bounces.csv", sc.header("soft"))
    if slopes:
        print(f"error slope: mean {np.mean(slopes):.6g}, range [{min(slopes):.6g}, "
              f"{max(slopes):.6g}]")
    print(f"delta_hat: max {max(bounds):.6g}, spread {max(bounds) / min(bounds):.6g}")
    irregular = sum(not r.regular for r in records)
    print(f"irregular bounces: {irregular}")
    if sc.bool("penalty", "conjugacy", False):
        theta = sc.float("penalty", "theta", choose_theta(osc.min_time(), osc.period))
        z_imp, _ = find_impact_orbit(sysdef, mu, theta, sc.float("penalty", "tau_guess", osc.min_time()),
                                     sc.positive("penalty", "y_guess", 0.3), settings)
        table = conjugacy_check(sysdef, mu, theta, z_imp, nus, settings, restitution=r0)
        table.to_csv(out / "conjugacy.csv", sc.header("soft"))
        for row in table.rows:
            print(f"nu = {row.nu:g}: displacement {row.displacement:.3g}, saddle {row.saddle}")
    return EXIT_OK if irregular == 0 else EXIT_NEGATIVE


COMMANDS = {"simulate": cmd_simulate, "grazing": cmd_grazing, "scan": cmd_scan,
            "chaos": cmd_chaos, "soft": cmd_soft}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vibroimpact", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or name).strip().split("\n")[0])
        p.add_argument("--config", metavar="PATH", help="INI scenario file")
        p.add_argument("--out", metavar="DIR", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="seed for sampled arcs/scenarios")
        p.add_argument("--verbose", action="store_true")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        sc = Scenario.load(args.config, args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](sc, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NoIntersectionError, TangencyError, NotSaddleError, Verdict) as exc:
        print(f"verdict: {exc}", file=sys.stderr)
        return EXIT_NEGATIVE
    except (IntegrationError, ConvergenceError, ChaosError, AnomalousBounceError,
            np.linalg.LinAlgError, ValueError, RuntimeError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
