"""Domain types for the two-type SIR social-distancing game.

Types are indexed 1 (non-vulnerable) and 2 (vulnerable) throughout the public
API, matching the usual notation; arrays use 0-based positions internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

MASS_TOL = 1e-12


@dataclass(frozen=True)
class Violation:
    field: str
    reason: str

    def __str__(self) -> str:
        return f"{self.field}: {self.reason}"


class ValidationError(ValueError):
    """Raised when parameters break one or more invariants; carries all of them."""

    def __init__(self, violations: Sequence[Violation]):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


@dataclass(frozen=True)
class ModelParams:
    """Epidemic and game constants.

    ``s[j-1][k-1]`` is the utility per contact-product a type-j agent gets
    from type-k agents.
    """

    r: float
    T: float
    I0: float
    u_m: float
    u_M: float
    n1: float
    n2: float
    alpha1: float
    alpha2: float
    G1: float
    G2: float
    s: tuple[tuple[float, float], tuple[float, float]]

    def __post_init__(self):
        # normalise to a hashable nested tuple so params can key caches
        s = tuple(tuple(float(x) for x in row) for row in self.s)
        object.__setattr__(self, "s", s)

    @property
    def n(self) -> tuple[float, float]:
        return (self.n1, self.n2)

    @property
    def alpha(self) -> tuple[float, float]:
        return (self.alpha1, self.alpha2)

    @property
    def G(self) -> tuple[float, float]:
        return (self.G1, self.G2)

    @property
    def span(self) -> float:
        return self.u_M - self.u_m

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)


def validate(params: ModelParams) -> ModelParams:
    """Check every invariant of ``params`` and return it unchanged.

    Raises:
        ValidationError: listing every broken invariant, not just the first.
    """
    bad: list[Violation] = []

    def finite(name: str) -> bool:
        if not math.isfinite(getattr(params, name)):
            bad.append(Violation(name, "must be finite"))
            return False
        return True

    for name in ("r", "T", "n1", "n2", "alpha1", "alpha2"):
        if finite(name) and getattr(params, name) <= 0:
            bad.append(Violation(name, "must be positive"))
    if finite("I0") and not 0 < params.I0 < 1:
        bad.append(Violation("I0", "must lie in (0, 1)"))
    if finite("u_m") and params.u_m < 0:
        bad.append(Violation("u_m", "must be nonnegative"))
    if finite("u_M"):
        if params.u_M <= params.u_m:
            bad.append(Violation("u_M", "must exceed u_m"))
        if params.u_M > 1:
            bad.append(Violation("u_M", "must not exceed 1"))
    if finite("G1") and params.G1 < 0:
        bad.append(Violation("G1", "must be nonnegative"))
    # G above one occurs in the worked examples (G2 = 250), so only the
    # ordering is enforced, not G2 <= 1
    if finite("G2") and params.G2 <= params.G1:
        bad.append(Violation("G2", "must exceed G1"))
    s = params.s
    if len(s) != 2 or any(len(row) != 2 for row in s):
        bad.append(Violation("s", "must be a 2x2 matrix"))
    else:
        for j in range(2):
            for k in range(2):
                v = s[j][k]
                if not math.isfinite(v) or v < 0:
                    bad.append(Violation(f"s[{j + 1}][{k + 1}]", "must be finite and nonnegative"))
    if bad:
        raise ValidationError(bad)
    return params


@dataclass(frozen=True)
class TwoPointProfile:
    """Fractions of each type playing ``u_M``; the rest play ``u_m``."""

    tilde_u1: float
    tilde_u2: float

    def __post_init__(self):
        for name in ("tilde_u1", "tilde_u2"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name}={v} outside [0, 1]")

    def __iter__(self):
        return iter((self.tilde_u1, self.tilde_u2))

    def mean_actions(self, params: ModelParams) -> tuple[float, float]:
        return (
            params.u_m + params.span * self.tilde_u1,
            params.u_m + params.span * self.tilde_u2,
        )


def _normalise_support(support: Iterable[float], mass: Iterable[float]):
    pts = np.asarray(list(support), dtype=float)
    ms = np.asarray(list(mass), dtype=float)
    if pts.shape != ms.shape or pts.ndim != 1 or pts.size == 0:
        raise ValueError("support and mass must be equal-length nonempty sequences")
    order = np.argsort(pts, kind="stable")
    pts, ms = pts[order], ms[order]
    # merge duplicated action points
    uniq, inv = np.unique(pts, return_inverse=True)
    merged = np.zeros(uniq.size)
    np.add.at(merged, inv, ms)
    return tuple(uniq.tolist()), tuple(merged.tolist())


@dataclass(frozen=True)
class DiscreteProfile:
    """Finite-support action distribution of both types.

    Supports are sorted and deduplicated at construction; masses of each type
    must sum to that type's population mass.
    """

    support1: tuple[float, ...]
    mass1: tuple[float, ...]
    support2: tuple[float, ...]
    mass2: tuple[float, ...]

    @classmethod
    def build(cls, params: ModelParams, support1, mass1, support2, mass2) -> "DiscreteProfile":
        s1, m1 = _normalise_support(support1, mass1)
        s2, m2 = _normalise_support(support2, mass2)
        prof = cls(s1, m1, s2, m2)
        prof.check(params)
        return prof

    @classmethod
    def dirac(cls, params: ModelParams, u1: float, u2: float) -> "DiscreteProfile":
        return cls.build(params, [u1], [params.n1], [u2], [params.n2])

    def check(self, params: ModelParams) -> None:
        for j, (sup, ms, n) in enumerate(
            ((self.support1, self.mass1, params.n1), (self.support2, self.mass2, params.n2)), start=1
        ):
            if any(m < 0 for m in ms):
                raise ValueError(f"type {j}: negative mass")
            if abs(sum(ms) - n) > MASS_TOL * max(1.0, n):
                raise ValueError(f"type {j}: masses sum to {sum(ms)}, expected {n}")
            if any(not (params.u_m <= u <= params.u_M) for u in sup):
                raise ValueError(f"type {j}: support point outside [{params.u_m}, {params.u_M}]")
            if any(b <= a for a, b in zip(sup, sup[1:])):
                raise ValueError(f"type {j}: support not strictly increasing")

    def support(self, j: int) -> tuple[float, ...]:
        return self.support1 if j == 1 else self.support2

    def mass(self, j: int) -> tuple[float, ...]:
        return self.mass1 if j == 1 else self.mass2

    def mean_action(self, j: int) -> float:
        sup, ms = self.support(j), self.mass(j)
        return float(np.dot(sup, ms) / np.sum(ms))

    def atoms(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Flatten into (actions, masses, type index 1/2) arrays, type 1 first."""
        u = np.array(self.support1 + self.support2, dtype=float)
        m = np.array(self.mass1 + self.mass2, dtype=float)
        t = np.array([1] * len(self.support1) + [2] * len(self.support2), dtype=np.int64)
        return u, m, t


def profile_from_two_point(params: ModelParams, tp: TwoPointProfile) -> DiscreteProfile:
    """Map fractions ``(tilde_u1, tilde_u2)`` to a support on ``{u_m, u_M}``.

    A type whose fraction is exactly 0 or 1 collapses to a single support point.
    """
    sup, mass = [], []
    for t, n in ((tp.tilde_u1, params.n1), (tp.tilde_u2, params.n2)):
        if t == 0.0:
            sup.append([params.u_m]); mass.append([n])
        elif t == 1.0:
            sup.append([params.u_M]); mass.append([n])
        else:
            sup.append([params.u_m, params.u_M]); mass.append([(1.0 - t) * n, t * n])
    return DiscreteProfile.build(params, sup[0], mass[0], sup[1], mass[1])


def example_params(which: int = 1, G1: float | None = None, G2: float | None = None) -> ModelParams:
    """Parameter sets of the three worked examples.

    ``which=1`` uses equal sociability rows and defaults to ``G=(0.2, 1)``;
    ``which=2`` is the homophily case ``G=(2, 2.8)``; ``which=3`` is ``G=(1.6, 16)``.
    """
    base = dict(r=2.0, T=50.0, I0=0.01, u_m=0.1, u_M=0.9, n1=2.0, n2=0.5, alpha1=1.0, alpha2=1.0)
    if which == 1:
        g1 = 0.2 if G1 is None else G1
        g = dict(G1=g1, G2=5.0 * g1 if G2 is None else G2, s=((2.0, 0.5), (2.0, 0.5)))
    elif which == 2:
        g = dict(G1=2.0 if G1 is None else G1, G2=2.8 if G2 is None else G2, s=((2.0, 0.5), (0.5, 2.0)))
    elif which == 3:
        g = dict(G1=1.6 if G1 is None else G1, G2=16.0 if G2 is None else G2, s=((2.0, 0.5), (2.0, 0.5)))
    else:
        raise ValueError(f"no example {which}")
    return ModelParams(**base, **g)
