"""Compartmental dynamics for finite-support action profiles.

Every support point ("atom") carries per-agent probabilities ``S`` and ``I``
with identical initial conditions ``(1 - I0, I0)``; atoms interact only
through the free-infected density ``If = sum(mass * u * I)``.  The cumulative
exposure ``z`` is integrated as a state, and ``F = r * z(T)``.

All integration uses classical fixed-step RK4, compiled with numba.
States are never clamped inside the stepper.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np

from .model import DiscreteProfile, ModelParams, TwoPointProfile, profile_from_two_point

DEFAULT_STEPS = 5000
BOUND_TOL = 1e-9


class NonFiniteError(ArithmeticError):
    """A state left ``[-tol, 1 + tol]`` or became non-finite (step too coarse)."""

    def __init__(self, state: str, t: float):
        self.state = state
        self.t = t
        super().__init__(f"state {state} out of bounds or non-finite at t={t:.6g}")


@numba.njit(cache=True, nogil=True)
def _rk4(u, m, a, r, I0, T, steps, S_path, I_path, z_path, store):
    K = u.shape[0]
    h = T / steps
    S = np.full(K, 1.0 - I0)
    I = np.full(K, I0)
    z = 0.0
    kS = np.empty((4, K))
    kI = np.empty((4, K))
    kz = np.empty(4)
    St = np.empty(K)
    It = np.empty(K)
    c = (0.0, 0.5 * h, 0.5 * h, h)
    if store:
        for k in range(K):
            S_path[0, k] = S[k]
            I_path[0, k] = I[k]
        z_path[0] = 0.0
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
        for k in range(K):
            S[k] += h / 6.0 * (kS[0, k] + 2.0 * kS[1, k] + 2.0 * kS[2, k] + kS[3, k])
            I[k] += h / 6.0 * (kI[0, k] + 2.0 * kI[1, k] + 2.0 * kI[2, k] + kI[3, k])
        z += h / 6.0 * (kz[0] + 2.0 * kz[1] + 2.0 * kz[2] + kz[3])
        if store:
            for k in range(K):
                S_path[n + 1, k] = S[k]
                I_path[n + 1, k] = I[k]
            z_path[n + 1] = z
    return S, I, z


@numba.njit(cache=True, nogil=True)
def _rk4_batch(u, m, a, r, I0, T, steps):
    B, K = u.shape
    S_out = np.empty((B, K))
    I_out = np.empty((B, K))
    z_out = np.empty(B)
    dummy2 = np.empty((1, 1))
    dummy1 = np.empty(1)
    for b in range(B):
        S, I, z = _rk4(u[b], m[b], a[b], r, I0, T, steps, dummy2, dummy2, dummy1, False)
        S_out[b, :] = S
        I_out[b, :] = I
        z_out[b] = z
    return S_out, I_out, z_out


@dataclass(frozen=True)
class Trajectory:
    """Time-gridded solution; column ``k`` of ``S``/``I`` belongs to atom ``k``."""

    times: np.ndarray
    actions: np.ndarray
    masses: np.ndarray
    types: np.ndarray
    S: np.ndarray
    I: np.ndarray
    If: np.ndarray
    z: np.ndarray
    r: float

    @property
    def F(self) -> float:
        return self.r * float(self.z[-1])

    def column(self, j: int, u: float) -> int:
        hit = np.flatnonzero((self.types == j) & np.isclose(self.actions, u, rtol=0, atol=1e-12))
        if hit.size == 0:
            raise KeyError(f"no atom of type {j} at u={u}")
        return int(hit[0])

    def S_of(self, j: int, u: float) -> np.ndarray:
        return self.S[:, self.column(j, u)]

    def I_of(self, j: int, u: float) -> np.ndarray:
        return self.I[:, self.column(j, u)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        labels = [f"{j}_u{u:g}" for j, u in zip(self.types, self.actions)]
        w.writerow(["time", "I_f", "z"] + [f"S_{l}" for l in labels] + [f"I_{l}" for l in labels])
        for k in range(self.times.size):
            row = [self.times[k], self.If[k], self.z[k], *self.S[k], *self.I[k]]
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()


def _atom_rates(params: ModelParams, types: np.ndarray) -> np.ndarray:
    return np.where(np.asarray(types) == 1, params.alpha1, params.alpha2).astype(float)


def _check_bounds(S, I, z, times=None):
    for name, arr in (("S", S), ("I", I)):
        bad = ~np.isfinite(arr) | (arr < -BOUND_TOL) | (arr > 1 + BOUND_TOL)
        if bad.any():
            idx = np.argwhere(bad)[0]
            t = float(times[idx[0]]) if times is not None and arr.ndim > 1 else float("nan")
            raise NonFiniteError(name, t)
    if not np.all(np.isfinite(z)):
        raise NonFiniteError("z", float("nan"))


def integrate_atoms(params: ModelParams, u, m, types, steps: int = DEFAULT_STEPS) -> Trajectory:
    """Integrate an arbitrary atom set.  Masses may be signed or zero.

    Zero-mass atoms are passive: they follow the epidemic without feeding it,
    which is how the state of a hypothetical deviating agent is obtained.
    """
    if steps < 10:
        raise ValueError("steps must be >= 10")
    u = np.ascontiguousarray(u, dtype=float)
    m = np.ascontiguousarray(m, dtype=float)
    types = np.asarray(types, dtype=np.int64)
    a = _atom_rates(params, types)
    K = u.size
    S_path = np.empty((steps + 1, K))
    I_path = np.empty((steps + 1, K))
    z_path = np.empty(steps + 1)
    _rk4(u, m, a, params.r, params.I0, params.T, steps, S_path, I_path, z_path, True)
    times = np.linspace(0.0, params.T, steps + 1)
    _check_bounds(S_path, I_path, z_path, times)
    If = I_path @ (m * u)
    return Trajectory(times, u, m, types, S_path, I_path, If, z_path, params.r)


def integrate(params: ModelParams, profile: DiscreteProfile, steps: int = DEFAULT_STEPS) -> Trajectory:
    u, m, t = profile.atoms()
    return integrate_atoms(params, u, m, t, steps)


def exposure_atoms(params: ModelParams, u, m, types, steps: int = DEFAULT_STEPS) -> np.ndarray:
    """Batch ``F`` for profiles stacked along axis 0 (shape ``(B, K)`` each).

    Profiles with fewer atoms can be padded with zero-mass atoms.
    """
    u = np.ascontiguousarray(np.atleast_2d(u), dtype=float)
    m = np.ascontiguousarray(np.atleast_2d(m), dtype=float)
    types = np.broadcast_to(np.atleast_2d(types), u.shape)
    a = np.ascontiguousarray(_atom_rates(params, types))
    S, I, z = _rk4_batch(u, m, a, params.r, params.I0, params.T, steps)
    _check_bounds(S, I, z)
    return params.r * z


def exposure_F(params: ModelParams, profile: DiscreteProfile, steps: int = DEFAULT_STEPS) -> float:
    """``F = r * z(T)`` for one profile."""
    u, m, t = profile.atoms()
    return float(exposure_atoms(params, u, m, t, steps)[0])


def two_point_atoms(params: ModelParams, t1, t2):
    """Atom arrays for a batch of two-point profiles (always four atoms)."""
    t1 = np.atleast_1d(np.asarray(t1, dtype=float))
    t2 = np.atleast_1d(np.asarray(t2, dtype=float))
    t1, t2 = np.broadcast_arrays(t1, t2)
    B = t1.size
    u = np.tile([params.u_m, params.u_M, params.u_m, params.u_M], (B, 1))
    m = np.column_stack([(1 - t1) * params.n1, t1 * params.n1, (1 - t2) * params.n2, t2 * params.n2])
    types = np.array([1, 1, 2, 2])
    return u, m, types


def exposure_two_point_batch(params: ModelParams, t1, t2, steps: int = DEFAULT_STEPS) -> np.ndarray:
    u, m, types = two_point_atoms(params, t1, t2)
    return exposure_atoms(params, u, m, types, steps)


@lru_cache(maxsize=65536)
def exposure_two_point(params: ModelParams, t1: float, t2: float, steps: int = DEFAULT_STEPS) -> float:
    """Memoised ``F(tilde_u1, tilde_u2)``; repeated cost queries reuse one integration."""
    return float(exposure_two_point_batch(params, t1, t2, steps)[0])


def exposure_dirac_batch(params: ModelParams, u1, u2, steps: int = DEFAULT_STEPS) -> np.ndarray:
    u1, u2 = np.broadcast_arrays(np.atleast_1d(np.asarray(u1, float)), np.atleast_1d(np.asarray(u2, float)))
    u = np.column_stack([u1.ravel(), u2.ravel()])
    m = np.tile([params.n1, params.n2], (u.shape[0], 1))
    return exposure_atoms(params, u, m, np.array([1, 2]), steps).reshape(u1.shape)


def integrate_two_point(params: ModelParams, tp: TwoPointProfile, steps: int = DEFAULT_STEPS) -> Trajectory:
    return integrate(params, profile_from_two_point(params, tp), steps)
