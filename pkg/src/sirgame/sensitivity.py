"""Directional derivatives at Dirac-pair profiles.

A small group of mass ``eps`` of type ``j`` moving from the incumbent action
``u_j`` to ``u`` perturbs the profile by ``eps * (d_u - d_{u_j})``.  The
first-order response of the dynamics solves the variational system, which is
co-integrated with the base system by the same RK4 stepper, so that the
derivative agrees with finite differences of the discrete solution itself.

The exposure derivative is ``dF = r * z'(T)``; the forcing of the variational
system is ``u * I_u(t) - u_j * I_{u_j}(t)`` (the deviating group's
contribution to the free-infected density).  Both conventions are pinned by
finite-difference tests.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np

from .costs import individual_cost
from .dynamics import DEFAULT_STEPS, NonFiniteError, _atom_rates
from .model import ModelParams

DEFAULT_PROBES = 201
STATIONARY_TOL = 1e-7


class DiracPair(NamedTuple):
    u1: float
    u2: float


@numba.njit(cache=True, nogil=True)
def _rk4_linearized(u, m, a, r, I0, T, steps, active, dev_idx, dev_w, path, store):
    """Base system plus one variational system per deviation.

    ``active`` lists the atoms with nonzero mass (only those feed back into
    the free-infected density); deviation ``p`` forces with
    ``sum_d dev_w[p, d] * u[i] * I[i]`` for ``i = dev_idx[p, d]``.
    Variational state layout per deviation: ``S'`` of active atoms,
    ``I'`` of active atoms, then ``z'``.
    """
    K = u.shape[0]
    A = active.shape[0]
    P, D = dev_idx.shape
    h = T / steps
    c = (0.0, 0.5 * h, 0.5 * h, h)
    S = np.full(K, 1.0 - I0)
    I = np.full(K, I0)
    z = 0.0
    kS = np.empty((4, K)); kI = np.empty((4, K)); kz = np.empty(4)
    St = np.empty(K); It = np.empty(K)
    Sp = np.zeros((P, A)); Ip = np.zeros((P, A)); zp = np.zeros(P)
    kSp = np.empty((4, P, A)); kIp = np.empty((4, P, A)); kzp = np.empty((4, P))
    Spt = np.empty(A); Ipt = np.empty(A)
    if store:
        path[0, :, :] = 0.0
    for n in range(steps):
        for st in range(4):
            for k in range(K):
                if st == 0:
                    St[k] = S[k]
                    It[k] = I[k]
                else:
                    St[k] = S[k] + c[st] * kS[st - 1, k]
                    It[k] = I[k] + c[st] * kI[st - 1, k]
            If = 0.0
            for k in range(K):
                If += m[k] * u[k] * It[k]
            for k in range(K):
                inf = r * u[k] * St[k] * If
                kS[st, k] = -inf
                kI[st, k] = inf - a[k] * It[k]
            kz[st] = If
            for p in range(P):
                Ifp = 0.0
                for q in range(A):
                    if st == 0:
                        Spt[q] = Sp[p, q]
                        Ipt[q] = Ip[p, q]
                    else:
                        Spt[q] = Sp[p, q] + c[st] * kSp[st - 1, p, q]
                        Ipt[q] = Ip[p, q] + c[st] * kIp[st - 1, p, q]
                    k = active[q]
                    Ifp += m[k] * u[k] * Ipt[q]
                for d in range(D):
                    i = dev_idx[p, d]
                    Ifp += dev_w[p, d] * u[i] * It[i]
                for q in range(A):
                    k = active[q]
                    dinf = r * u[k] * (Spt[q] * If + St[k] * Ifp)
                    kSp[st, p, q] = -dinf
                    kIp[st, p, q] = dinf - a[k] * Ipt[q]
                kzp[st, p] = Ifp
        for k in range(K):
            S[k] += h / 6.0 * (kS[0, k] + 2.0 * kS[1, k] + 2.0 * kS[2, k] + kS[3, k])
            I[k] += h / 6.0 * (kI[0, k] + 2.0 * kI[1, k] + 2.0 * kI[2, k] + kI[3, k])
        z += h / 6.0 * (kz[0] + 2.0 * kz[1] + 2.0 * kz[2] + kz[3])
        for p in range(P):
            for q in range(A):
                Sp[p, q] += h / 6.0 * (kSp[0, p, q] + 2.0 * kSp[1, p, q] + 2.0 * kSp[2, p, q] + kSp[3, p, q])
                Ip[p, q] += h / 6.0 * (kIp[0, p, q] + 2.0 * kIp[1, p, q] + 2.0 * kIp[2, p, q] + kIp[3, p, q])
            zp[p] += h / 6.0 * (kzp[0, p] + 2.0 * kzp[1, p] + 2.0 * kzp[2, p] + kzp[3, p])
            if store:
                for q in range(A):
                    path[n + 1, p, q] = Sp[p, q]
                    path[n + 1, p, A + q] = Ip[p, q]
                path[n + 1, p, 2 * A] = zp[p]
    return S, I, z, Sp, Ip, zp


def _pair_atoms(params: ModelParams, pair: DiracPair, probes1, probes2):
    """Incumbent atoms first, then zero-mass probe atoms of type 1 and type 2."""
    probes1 = np.asarray(probes1, dtype=float)
    probes2 = np.asarray(probes2, dtype=float)
    u = np.concatenate([[pair.u1, pair.u2], probes1, probes2])
    m = np.concatenate([[params.n1, params.n2], np.zeros(probes1.size + probes2.size)])
    types = np.concatenate([[1, 2], np.ones(probes1.size, int), np.full(probes2.size, 2)]).astype(np.int64)
    return u, m, types


def _deviations(probes1, probes2):
    n1, n2 = len(probes1), len(probes2)
    idx = np.empty((n1 + n2, 2), dtype=np.int64)
    w = np.empty((n1 + n2, 2))
    idx[:n1, 0] = 2 + np.arange(n1)
    idx[:n1, 1] = 0
    idx[n1:, 0] = 2 + n1 + np.arange(n2)
    idx[n1:, 1] = 1
    w[:, 0] = 1.0
    w[:, 1] = -1.0
    return idx, w


def _run(params, pair, probes1, probes2, steps, store=False):
    u, m, types = _pair_atoms(params, pair, probes1, probes2)
    a = _atom_rates(params, types)
    idx, w = _deviations(probes1, probes2)
    active = np.array([0, 1], dtype=np.int64)
    path = np.empty((steps + 1, idx.shape[0], 5)) if store else np.empty((1, 1, 1))
    S, I, z, Sp, Ip, zp = _rk4_linearized(u, m, a, params.r, params.I0, params.T, steps,
                                          active, idx, w, path, store)
    for name, arr in (("S", S), ("I", I)):
        if not np.all(np.isfinite(arr)) or arr.min() < -1e-9 or arr.max() > 1 + 1e-9:
            raise NonFiniteError(name, params.T)
    if not (np.all(np.isfinite(zp)) and np.all(np.isfinite(Sp)) and np.all(np.isfinite(Ip))):
        raise NonFiniteError("x'", params.T)
    return params.r * z, params.r * zp, path


@dataclass(frozen=True)
class LinearizedState:
    """Variational trajectory for one deviation.

    Columns of ``x`` are ``S'_1, S'_2, I'_1, I'_2, z'`` for the two incumbent
    atoms.
    """

    times: np.ndarray
    x: np.ndarray

    @property
    def x5_T(self) -> float:
        return float(self.x[-1, 4])


def linearized_state(params: ModelParams, pair: DiracPair, deviation: tuple[int, float],
                     steps: int = DEFAULT_STEPS) -> LinearizedState:
    pair = DiracPair(*pair)
    j, u = deviation
    probes1, probes2 = ([u], []) if j == 1 else ([], [u])
    _, _, path = _run(params, pair, probes1, probes2, steps, store=True)
    x = path[:, 0, :]
    # kernel layout is S'_1, S'_2, I'_1, I'_2, z' already
    return LinearizedState(np.linspace(0.0, params.T, steps + 1), x)


def _probe_dF(params, pair, probes1, probes2, steps):
    F, dF, _ = _run(params, pair, probes1, probes2, steps)
    return float(F), dF[: len(probes1)], dF[len(probes1):]


def directional_dF(params: ModelParams, pair: DiracPair, deviation: tuple[int, float],
                   steps: int = DEFAULT_STEPS) -> float:
    """Derivative of ``F`` along ``d_u - d_{u_j}`` for type ``j``."""
    j, u = deviation
    pair = DiracPair(*pair)
    _, d1, d2 = _probe_dF(params, pair, [u] if j == 1 else [], [u] if j == 2 else [], steps)
    return float((d1 if j == 1 else d2)[0])


@dataclass(frozen=True)
class Derivatives:
    """Directional derivatives for deviations of type ``j`` to each action in ``u``.

    Arrays are aligned with ``u``.  ``dJ_inc[k]`` is the derivative of the
    cost of an incumbent of type ``k + 1`` at its own action.
    """

    j: int
    u: np.ndarray
    F: float
    dF: np.ndarray
    gK: np.ndarray
    dJ_inc: tuple[np.ndarray, np.ndarray]
    dJbar1: np.ndarray
    dJbar2: np.ndarray
    dJbar: np.ndarray
    dV: np.ndarray

    @property
    def gL(self) -> np.ndarray:
        return self.dV


def derivatives(params: ModelParams, pair: DiracPair, j: int, u, F: float, dF) -> Derivatives:
    """Assemble cost and variance derivatives from ``F`` and ``dF``."""
    pair = DiracPair(*pair)
    u = np.asarray(u, dtype=float)
    dF = np.asarray(dF, dtype=float)
    inc = (pair.u1, pair.u2)
    n = params.n
    ntot = n[0] + n[1]
    J_inc = np.array([float(individual_cost(params, k, inc[k - 1], F, *inc)) for k in (1, 2)])
    Jbar = (n[0] * J_inc[0] + n[1] * J_inc[1]) / ntot
    J_dev = individual_cost(params, j, u, F, *inc)
    gK = J_dev - J_inc[j - 1]
    dubar = (u - inc[j - 1]) / n[j - 1]

    def dJ(k, v):
        G = params.G[k - 1]
        return G * (1 - params.I0) * v * np.exp(-v * F) * dF - params.s[k - 1][j - 1] * v * dubar

    dJ_inc = (dJ(1, inc[0]), dJ(2, inc[1]))
    dJbar_j = dJ_inc[j - 1] + gK / n[j - 1]
    dJbar_o = dJ_inc[2 - j]
    dJbar1, dJbar2 = (dJbar_j, dJbar_o) if j == 1 else (dJbar_o, dJbar_j)
    dJbar = (n[0] * dJbar1 + n[1] * dJbar2) / ntot
    o = 3 - j
    dV_own = ((J_dev - Jbar) ** 2 - (J_inc[j - 1] - Jbar) ** 2
              + 2 * n[j - 1] * (J_inc[j - 1] - Jbar) * (dJ_inc[j - 1] - dJbar))
    dV_other = 2 * n[o - 1] * (J_inc[o - 1] - Jbar) * (dJ_inc[o - 1] - dJbar)
    dV = (dV_own + dV_other) / ntot
    return Derivatives(j, u, float(F), dF, gK, dJ_inc, dJbar1, dJbar2, dJbar, dV)


def directional_costs(params: ModelParams, pair: DiracPair, deviation: tuple[int, float],
                      steps: int = DEFAULT_STEPS) -> Derivatives:
    j, u = deviation
    pair = DiracPair(*pair)
    F, d1, d2 = _probe_dF(params, pair, [u] if j == 1 else [], [u] if j == 2 else [], steps)
    return derivatives(params, pair, j, [u], F, d1 if j == 1 else d2)


def directional_variance(params: ModelParams, pair: DiracPair, deviation: tuple[int, float],
                         steps: int = DEFAULT_STEPS) -> float:
    """Derivative of the cost variance, i.e. ``g^L_j(u)``."""
    return float(directional_costs(params, pair, deviation, steps).dV[0])


@dataclass(frozen=True)
class SensitivityReport:
    base_pair: DiracPair
    probe_grid: np.ndarray
    F: float
    gK: np.ndarray  # shape (2, probes), row j-1
    gL: np.ndarray
    dF: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["u", "gK1", "gL1", "gK2", "gL2", "dF1", "dF2"])
        for k, u in enumerate(self.probe_grid):
            row = (u, self.gK[0, k], self.gL[0, k], self.gK[1, k], self.gL[1, k], self.dF[0, k], self.dF[1, k])
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()


def probe_grid_for(params: ModelParams, probes=DEFAULT_PROBES) -> np.ndarray:
    if np.isscalar(probes):
        return np.linspace(params.u_m, params.u_M, int(probes))
    return np.asarray(probes, dtype=float)


def sensitivity_report(params: ModelParams, pair: DiracPair, probes=DEFAULT_PROBES,
                       steps: int = DEFAULT_STEPS) -> SensitivityReport:
    """``g^K`` and ``g^L`` of both types over a probe grid, from one co-integration."""
    pair = DiracPair(*pair)
    grid = probe_grid_for(params, probes)
    F, d1, d2 = _probe_dF(params, pair, grid, grid, steps)
    der = [derivatives(params, pair, 1, grid, F, d1), derivatives(params, pair, 2, grid, F, d2)]
    return SensitivityReport(
        pair, grid, F,
        np.vstack([der[0].gK, der[1].gK]),
        np.vstack([der[0].gL, der[1].gL]),
        np.vstack([d1, d2]),
    )


def variance_stationary(params: ModelParams, pair: DiracPair, probes=DEFAULT_PROBES,
                        tol: float = STATIONARY_TOL, steps: int = DEFAULT_STEPS,
                        report: SensitivityReport | None = None):
    """Grid test of variance stationarity.

    Returns ``(True, j)`` for the first type whose ``g^L`` is nonnegative on
    the whole grid, otherwise ``(False, (u1, u2))`` with the per-type actions
    where ``g^L`` is most negative.
    """
    rep = report if report is not None else sensitivity_report(params, pair, probes, steps)
    if rep.probe_grid.size < 50:
        raise ValueError("probe grid must have at least 50 points")
    for j in (1, 2):
        if rep.gL[j - 1].min() >= -tol:
            return True, j
    witness = tuple(float(rep.probe_grid[np.argmin(rep.gL[j])]) for j in range(2))
    return False, witness
