"""Variance-constrained generalized Nash equilibria over Dirac pairs.

A Dirac pair ``(u1, u2)`` puts all type-``j`` mass on action ``u_j``.  Pairs
with ``V < C`` qualify only if they are unconstrained equilibria; pairs on the
level set ``V = C`` qualify if every deviation that lowers the deviators' cost
raises the variance.  For pairs that are not variance stationary it suffices
to test deviations supported on two points.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .costs import individual_cost, infection_probability, variance as profile_variance
from .dynamics import DEFAULT_STEPS, exposure_dirac_batch
from .model import ModelParams, profile_from_two_point
from .nash import enumerate_all
from .sensitivity import (DEFAULT_PROBES, STATIONARY_TOL, DiracPair, SensitivityReport,
                          sensitivity_report, variance_stationary)

DEFAULT_GRID = 81
DEFAULT_RHO = 21
TOL_K = 1e-6
TOL_V = STATIONARY_TOL
EDGE_BISECT = 30
PREFILTER_PROBES = 21


class EmptyContour(LookupError):
    """``V - C`` never changes sign on the grid, so the constraint cannot bind there."""


class SingularPoint(ValueError):
    """The pair is variance stationary and the two-point test is inconclusive."""

    def __init__(self, pair, j):
        self.pair = pair
        self.j = j
        super().__init__(f"pair {tuple(pair)} is variance stationary for type {j}")


def dirac_costs(params: ModelParams, u1, u2, F):
    """Incumbent costs ``(J1, J2)`` at Dirac pairs; vectorised."""
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    return individual_cost(params, 1, u1, F, u1, u2), individual_cost(params, 2, u2, F, u1, u2)


def dirac_variance(params: ModelParams, u1, u2, F):
    J1, J2 = dirac_costs(params, u1, u2, F)
    n1, n2 = params.n
    Jbar = (n1 * J1 + n2 * J2) / (n1 + n2)
    return (n1 * (J1 - Jbar) ** 2 + n2 * (J2 - Jbar) ** 2) / (n1 + n2)


def dirac_prevalence(params: ModelParams, u1, u2, F):
    n1, n2 = params.n
    return (n1 * infection_probability(params, u1, F) + n2 * infection_probability(params, u2, F)) / (n1 + n2)


@dataclass(frozen=True)
class VarianceGrid:
    axis: np.ndarray
    F: np.ndarray  # [i, k] at (axis[i], axis[k])
    V: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["u1", "u2", "V"])
        for i, a in enumerate(self.axis):
            for k, b in enumerate(self.axis):
                w.writerow([repr(float(a)), repr(float(b)), repr(float(self.V[i, k]))])
        return buf.getvalue()


@lru_cache(maxsize=16)
def variance_grid(params: ModelParams, resolution: int = DEFAULT_GRID,
                  steps: int = DEFAULT_STEPS) -> VarianceGrid:
    """``V`` on a uniform ``resolution x resolution`` grid of Dirac pairs."""
    axis = np.linspace(params.u_m, params.u_M, resolution)
    U1, U2 = np.meshgrid(axis, axis, indexing="ij")
    F = exposure_dirac_batch(params, U1, U2, steps)
    V = dirac_variance(params, U1, U2, F)
    for arr in (axis, F, V):
        arr.setflags(write=False)
    return VarianceGrid(axis, F, V)


@dataclass(frozen=True)
class Contour:
    points: list[tuple[float, float]]
    tolerance: float


def _edge_crossings(axis, V, C):
    """Grid edges whose endpoint values of ``V - C`` differ in sign (or touch zero)."""
    D = V - C
    edges = []
    n = axis.size
    for i in range(n):
        for k in range(n):
            for di, dk in ((1, 0), (0, 1)):
                i2, k2 = i + di, k + dk
                if i2 >= n or k2 >= n:
                    continue
                a, b = D[i, k], D[i2, k2]
                if a == 0.0 or (a < 0) != (b < 0):
                    edges.append(((i, k), (i2, k2)))
    return edges


def contour_candidates(params: ModelParams, C: float, grid_resolution: int = DEFAULT_GRID,
                       refine: str = "edge", steps: int = DEFAULT_STEPS) -> Contour:
    """Points of the grid approximating the level set ``V = C``.

    ``refine="edge"`` bisects ``V`` along each crossing grid edge, so points
    lie on the level set to within the bisection width and may sit on the
    border of the action box.  ``refine="center"`` returns centres of cells
    whose corners straddle ``C``.  The tolerance is the largest ``|dV|``
    across a crossing edge.
    """
    if not C > 0:
        raise ValueError("C must be positive")
    if grid_resolution < 20:
        raise ValueError("grid_resolution must be >= 20")
    vg = variance_grid(params, grid_resolution, steps)
    axis, V = vg.axis, vg.V
    edges = _edge_crossings(axis, V, C)
    if not edges:
        raise EmptyContour(f"V never crosses C={C} on the {grid_resolution}x{grid_resolution} grid")
    tol = max(abs(V[a] - V[b]) for a, b in edges)
    if refine == "center":
        D = V - C
        corners = np.stack([D[:-1, :-1], D[1:, :-1], D[:-1, 1:], D[1:, 1:]])
        cells = np.argwhere((corners.min(axis=0) <= 0) & (corners.max(axis=0) > 0))
        pts = [(float(0.5 * (axis[i] + axis[i + 1])), float(0.5 * (axis[k] + axis[k + 1]))) for i, k in cells]
        return Contour(pts, float(tol))
    if refine != "edge":
        raise ValueError(f"unknown refine mode {refine!r}")
    lo = np.array([[axis[a[0]], axis[a[1]]] for a, _ in edges])
    hi = np.array([[axis[b[0]], axis[b[1]]] for _, b in edges])
    dlo = np.array([V[a] for a, _ in edges]) - C
    exact = dlo == 0.0
    for _ in range(EDGE_BISECT):
        mid = 0.5 * (lo + hi)
        F = exposure_dirac_batch(params, mid[:, 0], mid[:, 1], steps)
        dm = dirac_variance(params, mid[:, 0], mid[:, 1], F) - C
        same = ((dm < 0) == (dlo < 0)) & ~exact
        lo = np.where(same[:, None], mid, lo)
        dlo = np.where(same, dm, dlo)
        hi = np.where(same[:, None] | exact[:, None], hi, mid)
    pts = np.where(exact[:, None], lo, 0.5 * (lo + hi))
    pts = sorted({(float(a), float(b)) for a, b in pts})
    return Contour(pts, float(tol))


def _rho_values(rho_grid) -> np.ndarray:
    if np.isscalar(rho_grid):
        return np.linspace(0.0, 1.0, int(rho_grid))
    return np.asarray(rho_grid, dtype=float)


def two_point_margin(gK: np.ndarray, gL: np.ndarray, rho_grid=DEFAULT_RHO, tol_K: float = TOL_K,
                     tol_V: float = TOL_V, exact_rho: bool = True) -> tuple[float, tuple]:
    """Smallest ``max(K_rho + tol_K, L_rho + tol_V)`` over two-point deviations.

    ``K_rho = rho gK(u') + (1 - rho) gK(u'')`` and likewise for ``L``.  A
    negative value means a deviation lowers the deviators' cost and the
    variance at once.  With ``exact_rho`` the crossing of the two lines is
    added, which makes the minimum over ``rho in [0, 1]`` exact because the
    maximum of two affine functions is minimised at an end point or there.
    Returns the margin and the minimising ``(i', i'', rho)``.
    """
    K = np.asarray(gK, float) + tol_K
    L = np.asarray(gL, float) + tol_V
    Ka, Kb = K[:, None], K[None, :]
    La, Lb = L[:, None], L[None, :]
    best, arg = np.inf, None
    for rho in _rho_values(rho_grid):
        m = np.maximum(rho * Ka + (1 - rho) * Kb, rho * La + (1 - rho) * Lb)
        idx = np.unravel_index(np.argmin(m), m.shape)
        if m[idx] < best:
            best, arg = float(m[idx]), (int(idx[0]), int(idx[1]), float(rho))
    if exact_rho:
        den = (Ka - Kb) - (La - Lb)
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = (Lb - Kb) / den
        ok = np.isfinite(rho) & (rho > 0) & (rho < 1)
        rho = np.where(ok, rho, 0.0)
        m = np.where(ok, np.maximum(rho * Ka + (1 - rho) * Kb, rho * La + (1 - rho) * Lb), np.inf)
        idx = np.unravel_index(np.argmin(m), m.shape)
        if m[idx] < best:
            best, arg = float(m[idx]), (int(idx[0]), int(idx[1]), float(rho[idx]))
    return best, arg


def single_point_margin(gK, gL, tol_K: float = TOL_K, tol_V: float = TOL_V) -> float:
    """Smallest ``max(gK + tol_K, gL + tol_V)``; negative means a one-point violation."""
    return float(np.min(np.maximum(np.asarray(gK) + tol_K, np.asarray(gL) + tol_V)))


def _check_report(rep: SensitivityReport, rho_grid, tol_K, tol_V, exact_rho):
    single = min(single_point_margin(rep.gK[j], rep.gL[j], tol_K, tol_V) for j in range(2))
    if single < 0:
        return False, single
    cert = min(two_point_margin(rep.gK[j], rep.gL[j], rho_grid, tol_K, tol_V, exact_rho)[0]
               for j in range(2))
    return cert >= 0, cert


def check_gne_boundary(params: ModelParams, pair, C: float, probe_grid=DEFAULT_PROBES,
                       rho_grid=DEFAULT_RHO, tol: tuple[float, float] = (TOL_K, TOL_V),
                       contour_tol: float | None = None, exact_rho: bool = True,
                       steps: int = DEFAULT_STEPS, report: SensitivityReport | None = None
                       ) -> tuple[bool, float]:
    """Two-point deviation test at a pair on the level set ``V = C``.

    The certificate is the smallest margin found; the pair passes iff it is
    nonnegative.  The one-point filter runs first, and a failure there is
    reported with its own (negative) margin.

    Raises:
        SingularPoint: if the pair is variance stationary.
        ValueError: if ``contour_tol`` is given and ``|V - C|`` exceeds it.
    """
    pair = DiracPair(*pair)
    tol_K, tol_V = tol
    rep = report if report is not None else sensitivity_report(params, pair, probe_grid, steps)
    if contour_tol is not None:
        V = float(dirac_variance(params, pair.u1, pair.u2, rep.F))
        if abs(V - C) > contour_tol:
            raise ValueError(f"|V - C| = {abs(V - C):.3g} exceeds contour tolerance {contour_tol:.3g}")
    stationary, witness = variance_stationary(params, pair, tol=tol_V, report=rep)
    if stationary:
        raise SingularPoint(pair, witness)
    return _check_report(rep, rho_grid, tol_K, tol_V, exact_rho)


@dataclass(frozen=True)
class GNERecord:
    """One constrained equilibrium.

    ``kind`` is ``interior``, ``boundary`` or ``singular-unclassified``.
    ``pair`` holds the mean actions; ``tilde_u`` is set for interior records
    that come from the two-point equilibrium search.
    """

    pair: tuple[float, float]
    variance: float
    constraint_C: float
    kind: str
    nonsingular: bool | None
    costs: tuple[float, float]
    prevalence: float
    certificate: float | None = None
    tilde_u: tuple[float, float] | None = None

    def to_dict(self) -> dict:
        return {
            "u1": self.pair[0],
            "u2": self.pair[1],
            "variance": self.variance,
            "C": self.constraint_C,
            "kind": self.kind,
            "nonsingular": self.nonsingular,
            "J1": self.costs[0],
            "J2": self.costs[1],
            "prevalence": self.prevalence,
            "certificate": self.certificate,
            "tilde_u": None if self.tilde_u is None else list(self.tilde_u),
        }


def interior_gne(params: ModelParams, C: float, tol_V: float = TOL_V, steps: int = DEFAULT_STEPS,
                 equilibria=None) -> list[GNERecord]:
    """Unconstrained equilibria whose cost variance is below ``C - tol_V``."""
    eqs = enumerate_all(params, steps=steps) if equilibria is None else equilibria
    out = []
    for rec in eqs:
        V = profile_variance(params, profile_from_two_point(params, rec.profile), F=rec.F)
        if V < C - tol_V:
            out.append(GNERecord(rec.profile.mean_actions(params), float(V), float(C), "interior",
                                 None, rec.costs, rec.prevalence, None, rec.point))
    return out


def _classify(params, pair, C, probes, rho_grid, tol_K, tol_V, exact_rho, steps):
    # cheap pass on a coarse probe subset; any violation it finds is genuine
    coarse = sensitivity_report(params, pair, PREFILTER_PROBES, steps)
    if min(single_point_margin(coarse.gK[j], coarse.gL[j], tol_K, tol_V) for j in range(2)) < 0:
        return None
    rep = sensitivity_report(params, pair, probes, steps)
    stationary, _ = variance_stationary(params, pair, tol=tol_V, report=rep)
    J1, J2 = (float(x) for x in dirac_costs(params, pair[0], pair[1], rep.F))
    V = float(dirac_variance(params, pair[0], pair[1], rep.F))
    prev = float(dirac_prevalence(params, pair[0], pair[1], rep.F))
    if stationary:
        return GNERecord(tuple(pair), V, float(C), "singular-unclassified", False, (J1, J2), prev)
    ok, cert = _check_report(rep, rho_grid, tol_K, tol_V, exact_rho)
    if not ok:
        return None
    return GNERecord(tuple(pair), V, float(C), "boundary", True, (J1, J2), prev, float(cert))


def boundary_gne(params: ModelParams, C: float, grid: int = DEFAULT_GRID, probes=DEFAULT_PROBES,
                 rho_grid=DEFAULT_RHO, tol: tuple[float, float] = (TOL_K, TOL_V),
                 exact_rho: bool = True, refine: str = "edge", threads: int = 1,
                 steps: int = DEFAULT_STEPS) -> list[GNERecord]:
    try:
        contour = contour_candidates(params, C, grid, refine, steps)
    except EmptyContour:
        return []
    args = (C, probes, rho_grid, tol[0], tol[1], exact_rho, steps)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            found = list(pool.map(lambda p: _classify(params, p, *args), contour.points))
    else:
        found = [_classify(params, p, *args) for p in contour.points]
    return sorted((r for r in found if r is not None), key=lambda r: r.pair)


def find_gne(params: ModelParams, C: float, grid: int = DEFAULT_GRID, probes=DEFAULT_PROBES,
             rho_grid=DEFAULT_RHO, tol: tuple[float, float] = (TOL_K, TOL_V), exact_rho: bool = True,
             refine: str = "edge", threads: int = 1, steps: int = DEFAULT_STEPS,
             equilibria=None) -> list[GNERecord]:
    """Interior and boundary GNE for the bound ``V <= C``, sorted by ``u1``.

    ``equilibria`` may carry a precomputed unconstrained equilibrium list
    (useful when sweeping ``C``).
    """
    recs = interior_gne(params, C, tol[1], steps, equilibria)
    recs += boundary_gne(params, C, grid, probes, rho_grid, tol, exact_rho, refine, threads, steps)
    return sorted(recs, key=lambda r: (r.pair, r.kind))


@dataclass(frozen=True)
class SweepRow:
    c: float
    J1min: float
    J1max: float
    J2min: float
    J2max: float
    prevalence: float
    count: int


def summarize(C: float, records: list[GNERecord]) -> SweepRow:
    """Cost band and mean prevalence over the boundary GNE of one ``C``; NaN when there are none."""
    b = [r for r in records if r.kind == "boundary"]
    if not b:
        nan = float("nan")
        return SweepRow(float(C), nan, nan, nan, nan, nan, 0)
    J1 = [r.costs[0] for r in b]
    J2 = [r.costs[1] for r in b]
    return SweepRow(float(C), min(J1), max(J1), min(J2), max(J2),
                    float(np.mean([r.prevalence for r in b])), len(b))


def sweep_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["c", "J1min", "J1max", "J2min", "J2max", "prevalence", "count"])
    for r in rows:
        w.writerow([repr(r.c), repr(r.J1min), repr(r.J1max), repr(r.J2min), repr(r.J2max),
                    repr(r.prevalence), r.count])
    return buf.getvalue()


def gne_sweep(params: ModelParams, Cs, **kwargs) -> tuple[dict[float, list[GNERecord]], list[SweepRow]]:
    """``find_gne`` for each ``C`` with one shared unconstrained-equilibrium search."""
    steps = kwargs.get("steps", DEFAULT_STEPS)
    eqs = kwargs.pop("equilibria", None) or enumerate_all(params, steps=steps)
    results = {}
    rows = []
    for C in Cs:
        recs = find_gne(params, C, equilibria=eqs, **kwargs)
        results[float(C)] = recs
        rows.append(summarize(C, recs))
    return results, rows
