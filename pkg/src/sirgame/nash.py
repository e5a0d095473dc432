"""Unconstrained Nash equilibria of the two-point game.

By concavity of the individual cost, equilibria put all mass on ``u_m`` and
``u_M``; a profile is described by ``(tilde_u1, tilde_u2)``, the fractions of
each type playing ``u_M``.  The sign of

    H_j = J_j(u_M) - J_j(u_m)
        = G_j (1 - I0) (exp(-u_m F) - exp(-u_M F)) - (u_M - u_m)(s_j1 ubar_1 + s_j2 ubar_2)

decides each type's preference: positive favours ``u_m``, negative ``u_M``,
zero means indifference.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from .costs import individual_cost, infection_probability
from .dynamics import DEFAULT_STEPS, exposure_two_point, exposure_two_point_batch
from .model import ModelParams, TwoPointProfile

DEFAULT_RESOLUTION = 400
EQ_TOL = 1e-2
# acceptance threshold used by the searches; EQ_TOL is kept for verifying rounded inputs
H_TOL = 1e-6
BISECT_ITERS = 40
ROOT_MERGE = 1e-4
DEDUP_DIST = 1e-3
PARETO_TOL = 1e-6
LINE_DEGENERACY = 1e-12


class DegenerateLine(UserWarning):
    """Both coefficients of the internal-equilibrium line vanish; a 2-D scan is used."""


def indifference_gap(params: ModelParams, j: int, t1, t2, F):
    """``H_j``; vectorised over ``t1``, ``t2`` and ``F``."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    ub1 = params.u_m + params.span * t1
    ub2 = params.u_m + params.span * t2
    s1, s2 = params.s[j - 1]
    G = params.G[j - 1]
    infection = G * (1 - params.I0) * (np.exp(-params.u_m * F) - np.exp(-params.u_M * F))
    return infection - params.span * (s1 * ub1 + s2 * ub2)


def _gaps(params, t1, t2, steps):
    F = exposure_two_point_batch(params, t1, t2, steps)
    return indifference_gap(params, 1, t1, t2, F), indifference_gap(params, 2, t1, t2, F)


def _violation(t: float, h: float) -> float:
    if t == 0.0:
        return max(0.0, -h)
    if t == 1.0:
        return max(0.0, h)
    return abs(h)


def check_equilibrium(params: ModelParams, tp: TwoPointProfile, tol: float = EQ_TOL,
                      steps: int = DEFAULT_STEPS) -> tuple[bool, float]:
    """Test the equilibrium conditions; returns ``(ok, residual)``.

    The residual is the largest violation over both types: ``|H_j|`` for a
    mixing type, the wrong-signed part of ``H_j`` for a pure one.
    """
    F = exposure_two_point(params, tp.tilde_u1, tp.tilde_u2, steps)
    res = max(
        _violation(t, float(indifference_gap(params, j, tp.tilde_u1, tp.tilde_u2, F)))
        for j, t in ((1, tp.tilde_u1), (2, tp.tilde_u2))
    )
    return res <= tol, res


@dataclass
class EquilibriumRecord:
    kind: str
    profile: TwoPointProfile
    costs: tuple[float, float]
    pure_costs: tuple[tuple[float, float], tuple[float, float]]
    prevalence: float
    residual: float
    F: float
    pareto_dominated: bool = False

    @property
    def point(self) -> tuple[float, float]:
        return (self.profile.tilde_u1, self.profile.tilde_u2)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "tilde_u1": self.profile.tilde_u1,
            "tilde_u2": self.profile.tilde_u2,
            "J1": self.costs[0],
            "J2": self.costs[1],
            "J1_um": self.pure_costs[0][0],
            "J1_uM": self.pure_costs[0][1],
            "J2_um": self.pure_costs[1][0],
            "J2_uM": self.pure_costs[1][1],
            "prevalence": self.prevalence,
            "residual": self.residual,
            "F": self.F,
            "pareto_dominated": self.pareto_dominated,
        }


def _kind(t1: float, t2: float) -> str:
    edge = [t in (0.0, 1.0) for t in (t1, t2)]
    if all(edge):
        return "pure"
    if any(edge):
        return "boundary-mixed"
    return "internal-mixed"


def make_record(params: ModelParams, tp: TwoPointProfile, residual: float,
                steps: int = DEFAULT_STEPS) -> EquilibriumRecord:
    """Attach costs and prevalence to an equilibrium profile.

    A type's reported cost is its mass-weighted mean over ``{u_m, u_M}``; for
    a mixing type both pure costs coincide up to the residual.
    """
    t = (tp.tilde_u1, tp.tilde_u2)
    F = exposure_two_point(params, *t, steps)
    ubar = tp.mean_actions(params)
    pure = []
    means = []
    for j in (1, 2):
        lo, hi = individual_cost(params, j, np.array([params.u_m, params.u_M]), F, *ubar)
        pure.append((float(lo), float(hi)))
        means.append(float((1 - t[j - 1]) * lo + t[j - 1] * hi))
    P = infection_probability(params, np.array([params.u_m, params.u_M]), F)
    n = params.n
    prev = sum(n[i] * ((1 - t[i]) * P[0] + t[i] * P[1]) for i in range(2)) / sum(n)
    return EquilibriumRecord(_kind(*t), tp, (means[0], means[1]), (pure[0], pure[1]),
                             float(prev), float(residual), float(F))


def _bisect(fn, a: float, b: float, fa: float, iters: int = BISECT_ITERS) -> float:
    for _ in range(iters):
        c = 0.5 * (a + b)
        fc = fn(c)
        if fc == 0.0:
            return c
        if (fc > 0) == (fa > 0):
            a, fa = c, fc
        else:
            b = c
    return 0.5 * (a + b)


def _roots_on_grid(fn_batch, fn, grid) -> list[float]:
    vals = fn_batch(grid)
    roots = []
    for i in range(grid.size - 1):
        if vals[i] == 0.0:
            roots.append(float(grid[i]))
        elif vals[i] * vals[i + 1] < 0:
            roots.append(_bisect(fn, float(grid[i]), float(grid[i + 1]), float(vals[i])))
    if vals[-1] == 0.0:
        roots.append(float(grid[-1]))
    return roots


def _merge(points, dist):
    out = []
    for p in sorted(points):
        if not out or max(abs(a - b) for a, b in zip(p, out[-1])) >= dist:
            out.append(p)
    return out


def find_pure(params: ModelParams, tol: float = H_TOL, steps: int = DEFAULT_STEPS) -> list[EquilibriumRecord]:
    """Corner profiles passing the equilibrium test."""
    found = []
    for t1, t2 in itertools.product((0.0, 1.0), repeat=2):
        tp = TwoPointProfile(t1, t2)
        ok, res = check_equilibrium(params, tp, tol, steps)
        if ok:
            found.append(make_record(params, tp, res, steps))
    return found


def find_boundary_mixed(params: ModelParams, resolution: int = DEFAULT_RESOLUTION, tol: float = H_TOL,
                        steps: int = DEFAULT_STEPS) -> list[EquilibriumRecord]:
    """Equilibria where exactly one type mixes.

    Each of the four edges of the unit square is scanned on a uniform grid;
    sign changes of the mixing type's gap are bisected, and the fixed type's
    inequality is then checked.
    """
    if resolution < 50:
        raise ValueError("resolution must be >= 50")
    grid = np.linspace(0.0, 1.0, resolution)
    points = []
    for free, fixed in itertools.product((1, 2), (0.0, 1.0)):
        if free == 1:
            def batch(x, fixed=fixed):
                return _gaps(params, x, np.full_like(x, fixed), steps)[0]

            def one(x, fixed=fixed):
                return float(indifference_gap(params, 1, x, fixed, exposure_two_point(params, x, fixed, steps)))
        else:
            def batch(x, fixed=fixed):
                return _gaps(params, np.full_like(x, fixed), x, steps)[1]

            def one(x, fixed=fixed):
                return float(indifference_gap(params, 2, fixed, x, exposure_two_point(params, fixed, x, steps)))
        for x in _roots_on_grid(batch, one, grid):
            if 0.0 < x < 1.0:
                points.append((x, fixed) if free == 1 else (fixed, x))
    out = []
    for t1, t2 in _merge(points, ROOT_MERGE):
        tp = TwoPointProfile(t1, t2)
        ok, res = check_equilibrium(params, tp, tol, steps)
        if ok:
            out.append(make_record(params, tp, res, steps))
    return out


def internal_line(params: ModelParams) -> tuple[float, float, float]:
    """Coefficients ``(a, b, c)`` of the line ``a*t1 + b*t2 = c`` holding every internal equilibrium."""
    G1, G2 = params.G
    (s11, s12), (s21, s22) = params.s
    a = G2 * s11 - G1 * s21
    b = G2 * s12 - G1 * s22
    c = (G1 * (s21 + s22) - G2 * (s11 + s12)) * params.u_m / params.span
    return a, b, c


def _segment_in_square(a, b, c):
    pts = []
    if abs(b) > LINE_DEGENERACY:
        for x in (0.0, 1.0):
            y = (c - a * x) / b
            if 0.0 <= y <= 1.0:
                pts.append((x, y))
    if abs(a) > LINE_DEGENERACY:
        for y in (0.0, 1.0):
            x = (c - b * y) / a
            if 0.0 <= x <= 1.0:
                pts.append((x, y))
    if len(pts) < 2:
        return None
    pts.sort()
    p0, p1 = np.array(pts[0]), np.array(pts[-1])
    if np.max(np.abs(p1 - p0)) < 1e-12:
        return None
    return p0, p1


def find_internal(params: ModelParams, resolution: int = DEFAULT_RESOLUTION, tol: float = H_TOL,
                  steps: int = DEFAULT_STEPS) -> list[EquilibriumRecord]:
    """Equilibria where both types mix.

    Both indifference equations force the profile onto a fixed line; the
    segment inside the unit square is scanned for roots of type 1's gap.
    When the line degenerates (both coefficients ~0) every row of a 2-D grid
    is scanned instead and a :class:`DegenerateLine` warning is emitted.
    """
    if resolution < 50:
        raise ValueError("resolution must be >= 50")
    a, b, c = internal_line(params)
    points = []
    if abs(a) < LINE_DEGENERACY and abs(b) < LINE_DEGENERACY:
        warnings.warn("internal-equilibrium line is degenerate; falling back to 2-D scan", DegenerateLine)
        grid = np.linspace(0.0, 1.0, resolution)
        for t2 in grid[1:-1]:
            def batch(x, t2=t2):
                return _gaps(params, x, np.full_like(x, t2), steps)[0]

            def one(x, t2=t2):
                return float(indifference_gap(params, 1, x, t2, exposure_two_point(params, x, t2, steps)))
            points += [(x, float(t2)) for x in _roots_on_grid(batch, one, grid)]
    else:
        seg = _segment_in_square(a, b, c)
        if seg is not None:
            p0, p1 = seg
            grid = np.linspace(0.0, 1.0, resolution)

            def along(t):
                t = np.asarray(t, dtype=float)
                return p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1])

            def batch(t):
                return _gaps(params, *along(t), steps)[0]

            def one(t):
                x, y = (float(v) for v in along(t))
                return float(indifference_gap(params, 1, x, y, exposure_two_point(params, x, y, steps)))
            for t in _roots_on_grid(batch, one, grid):
                x, y = (float(np.clip(v, 0.0, 1.0)) for v in along(t))
                points.append((x, y))
    out = []
    for t1, t2 in _merge(points, ROOT_MERGE):
        if not (0.0 < t1 < 1.0 and 0.0 < t2 < 1.0):
            continue
        tp = TwoPointProfile(t1, t2)
        ok, res = check_equilibrium(params, tp, tol, steps)
        if ok:
            out.append(make_record(params, tp, res, steps))
    return out


def pareto_flags(records: list[EquilibriumRecord], tol: float = PARETO_TOL) -> list[bool]:
    """``True`` where a record is Pareto dominated on ``(J1, J2)`` (lower is better)."""
    flags = []
    for rec in records:
        dominated = False
        for other in records:
            if other is rec:
                continue
            no_worse = all(o <= c + tol for o, c in zip(other.costs, rec.costs))
            better = any(o < c - tol for o, c in zip(other.costs, rec.costs))
            if no_worse and better:
                dominated = True
                break
        flags.append(dominated)
    return flags


def enumerate_all(params: ModelParams, resolution: int = DEFAULT_RESOLUTION, tol: float = H_TOL,
                  steps: int = DEFAULT_STEPS) -> list[EquilibriumRecord]:
    """All equilibria found by the corner, edge and internal searches.

    Records closer than ``1e-3`` (max-norm in ``tilde_u``) are merged, the
    list is sorted by ``(tilde_u1, tilde_u2)`` and Pareto flags are filled in.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateLine)
        found = (find_pure(params, tol, steps) + find_boundary_mixed(params, resolution, tol, steps)
                 + find_internal(params, resolution, tol, steps))
    found.sort(key=lambda r: (r.residual, r.point))
    kept: list[EquilibriumRecord] = []
    for rec in found:
        if all(max(abs(a - b) for a, b in zip(rec.point, k.point)) >= DEDUP_DIST for k in kept):
            kept.append(rec)
    kept.sort(key=lambda r: r.point)
    for rec, flag in zip(kept, pareto_flags(kept)):
        rec.pareto_dominated = flag
    return kept


def deviation_gain(params: ModelParams, tp: TwoPointProfile, grid: int = 201,
                   steps: int = DEFAULT_STEPS) -> float:
    """Best unilateral improvement available to any agent, by brute force.

    Every action in use is compared against the minimum cost over a uniform
    action grid.  Uses only the cost function, not the indifference algebra.
    """
    actions = np.linspace(params.u_m, params.u_M, grid)
    F = exposure_two_point(params, tp.tilde_u1, tp.tilde_u2, steps)
    ubar = tp.mean_actions(params)
    gain = 0.0
    for j, t in ((1, tp.tilde_u1), (2, tp.tilde_u2)):
        best = float(np.min(individual_cost(params, j, actions, F, *ubar)))
        used = [a for a, w in ((params.u_m, 1 - t), (params.u_M, t)) if w > 0]
        for a in used:
            gain = max(gain, float(individual_cost(params, j, a, F, *ubar)) - best)
    return gain
