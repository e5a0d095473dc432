"""Individual costs, mean costs, cost variance and prevalence."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dynamics import DEFAULT_STEPS, exposure_atoms
from .model import DiscreteProfile, ModelParams


def infection_probability(params: ModelParams, u, F):
    """Probability of having been infected by ``T`` for an agent playing ``u``."""
    return params.I0 + (1.0 - params.I0) * (1.0 - np.exp(-np.asarray(u) * F))


def individual_cost(params: ModelParams, j: int, u, F: float, ubar1: float, ubar2: float):
    """Cost of a type-``j`` agent playing ``u`` when exposure is ``F``.

    Vectorised over ``u``.
    """
    G = params.G[j - 1]
    s1, s2 = params.s[j - 1]
    u = np.asarray(u, dtype=float)
    return G * infection_probability(params, u, F) - s1 * u * ubar1 - s2 * u * ubar2


def weighted_variance(values, weights) -> float:
    """Population variance with (possibly signed) weights, two-pass form."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    mean = np.dot(weights, values) / total
    return float(np.dot(weights, (values - mean) ** 2) / total)


@dataclass(frozen=True)
class AtomCosts:
    """Costs of every atom of a raw atom set plus the derived aggregates."""

    J: np.ndarray
    Jbar1: float
    Jbar2: float
    Jbar: float
    variance: float
    prevalence: float
    F: float
    ubar: tuple[float, float]


def atom_costs(params: ModelParams, u, m, types, F: float) -> AtomCosts:
    """Evaluate costs on raw atom arrays; masses may be signed (used by derivative oracles)."""
    u = np.asarray(u, dtype=float)
    m = np.asarray(m, dtype=float)
    types = np.asarray(types)
    sel = [types == 1, types == 2]
    n = [m[s].sum() for s in sel]
    ubar = tuple(float(np.dot(u[s], m[s]) / n[i]) for i, s in enumerate(sel))
    J = np.empty_like(u)
    for j in (1, 2):
        s = sel[j - 1]
        J[s] = individual_cost(params, j, u[s], F, *ubar)
    Jbar1 = float(np.dot(J[sel[0]], m[sel[0]]) / n[0])
    Jbar2 = float(np.dot(J[sel[1]], m[sel[1]]) / n[1])
    Jbar = (n[0] * Jbar1 + n[1] * Jbar2) / (n[0] + n[1])
    var = float(np.dot(m, (J - Jbar) ** 2) / m.sum())
    prev = float(np.dot(m, infection_probability(params, u, F)) / m.sum())
    return AtomCosts(J, Jbar1, Jbar2, float(Jbar), var, prev, float(F), ubar)


@dataclass(frozen=True)
class CostReport:
    J: dict = field(repr=False)
    Jbar1: float
    Jbar2: float
    Jbar: float
    variance: float
    prevalence: float
    F: float

    def to_dict(self) -> dict:
        return {
            "J": {str(j): [{"u": u, "J": c} for u, c in pts] for j, pts in self.J.items()},
            "Jbar1": self.Jbar1,
            "Jbar2": self.Jbar2,
            "Jbar": self.Jbar,
            "variance": self.variance,
            "prevalence": self.prevalence,
            "F": self.F,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _F(params, profile, F, steps):
    if F is not None:
        return F
    u, m, t = profile.atoms()
    return float(exposure_atoms(params, u, m, t, steps)[0])


def cost_report(params: ModelParams, profile: DiscreteProfile, F: float | None = None,
                steps: int = DEFAULT_STEPS) -> CostReport:
    u, m, t = profile.atoms()
    ac = atom_costs(params, u, m, t, _F(params, profile, F, steps))
    table = {j: [(float(x), float(c)) for x, c, tt in zip(u, ac.J, t) if tt == j] for j in (1, 2)}
    return CostReport(table, ac.Jbar1, ac.Jbar2, ac.Jbar, ac.variance, ac.prevalence, ac.F)


def variance(params: ModelParams, profile: DiscreteProfile, F: float | None = None,
             steps: int = DEFAULT_STEPS) -> float:
    u, m, t = profile.atoms()
    return atom_costs(params, u, m, t, _F(params, profile, F, steps)).variance


def prevalence(params: ModelParams, profile: DiscreteProfile, F: float | None = None,
               steps: int = DEFAULT_STEPS) -> float:
    """Population share infected by ``T``, including the initially infected."""
    u, m, t = profile.atoms()
    return atom_costs(params, u, m, t, _F(params, profile, F, steps)).prevalence


def concavity_witness(params: ModelParams, profile: DiscreteProfile, probe=101,
                      F: float | None = None, steps: int = DEFAULT_STEPS) -> tuple[float, float]:
    """Grid minimiser of each type's cost against a fixed profile.

    ``probe`` is either a point count or an explicit action grid.
    """
    grid = np.linspace(params.u_m, params.u_M, probe) if np.isscalar(probe) else np.asarray(probe, float)
    F = _F(params, profile, F, steps)
    ubar = (profile.mean_action(1), profile.mean_action(2))
    out = []
    for j in (1, 2):
        out.append(float(grid[np.argmin(individual_cost(params, j, grid, F, *ubar))]))
    return out[0], out[1]
