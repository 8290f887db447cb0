"""Epidemic-with-carriers instance: model builder and analytic solution.

The population holds s susceptibles, c carriers, and i infectives.  Carriers
follow an uncontrolled birth-death process, each susceptible gets infected
at rate kappa_i(c), infectives recover at rate kappa_r, and the running cost
is the number of infectives.  The single impulse immunizes one susceptible
at price ``immunization_cost``; "immunize everyone" is realized as a chain
of single immunizations.

The value separates as V(s, c, i) = s * v(c) + i / (eta + kappa_r), where v
solves a one-dimensional contraction fixed point over the carrier count.
The optimal strategy is a threshold in c: immunize all susceptibles once the
carrier count reaches c_star, never if the price is at least the critical
price lambda_star.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bellman import StationaryPolicy
from .model import (
    ActionCatalog,
    CostModel,
    CtmdpModel,
    ImpulseKernel,
    RateKernel,
    StateSpace,
)

WAIT = "wait"
IMMUNIZE = "immunize"


class CarrierContractionError(ValueError):
    """The carrier fixed point is not a contraction (sup(alpha1+alpha2) >= 1)."""


@dataclass(frozen=True, eq=False)
class EpidemicParams:
    S: int
    I: int
    c0: int
    C_max: int
    eta: float
    kappa_r: float
    immunization_cost: float
    rho_b: tuple[float, ...]    # carrier birth rate, tabulated on 0..C_max
    rho_d: tuple[float, ...]    # carrier death rate
    kappa_i: tuple[float, ...]  # per-susceptible infection rate

    def __post_init__(self) -> None:
        n = self.C_max + 1
        for name in ("rho_b", "rho_d", "kappa_i"):
            tab = tuple(float(v) for v in getattr(self, name))
            if len(tab) < n:
                # Rate functions are constant past their tabulated saturation point.
                tab = tab + (tab[-1],) * (n - len(tab))
            if len(tab) != n:
                raise ValueError(f"{name} table longer than C_max+1={n}")
            if any(v < 0 for v in tab):
                raise ValueError(f"{name} must be nonnegative")
            object.__setattr__(self, name, tab)
        if self.rho_b[0] != 0 or self.rho_d[0] != 0:
            raise ValueError("carrier birth/death rates must vanish at c=0")
        if self.kappa_i[0] != 0:
            raise ValueError("infection rate must vanish at c=0")
        if self.S < 0 or self.I < 0 or not 0 <= self.c0 <= self.C_max:
            raise ValueError("population counts out of range")
        if self.C_max < 1:
            raise ValueError("C_max must be >= 1")
        if self.eta <= 0 or self.kappa_r < 0:
            raise ValueError("eta must be > 0 and kappa_r >= 0")
        if self.immunization_cost <= 0:
            raise ValueError("immunization cost must be > 0")


@dataclass(frozen=True, eq=False)
class CarrierValue:
    """Solution of the carrier fixed point with its threshold.

    ``c_star`` is None when no carrier count up to C_max makes intervening
    strictly cheaper than waiting (in particular whenever the price is at or
    above ``lambda_star``).
    """

    v: np.ndarray
    c_star: int | None
    lambda_star: float

    def __post_init__(self) -> None:
        v = np.asarray(self.v, dtype=np.float64)
        v.flags.writeable = False
        object.__setattr__(self, "v", v)


def _alphas(params: EpidemicParams, truncated: bool) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rb = np.asarray(params.rho_b, dtype=np.float64).copy()
    if truncated:
        rb[params.C_max] = 0.0  # reflecting carrier boundary
    rd = np.asarray(params.rho_d)
    ki = np.asarray(params.kappa_i)
    denom = params.eta + rb + rd + ki
    a1 = rb / denom
    a2 = rd / denom
    a3 = (ki / (params.eta + params.kappa_r)) / denom
    return a1, a2, a3


def coefficient_monotonicity_violations(params: EpidemicParams) -> list[int]:
    """Carrier counts where a normalized coefficient fails to be nondecreasing.

    The threshold analysis assumes all three coefficients increase with c;
    the fixed point itself only needs the contraction bound, so violations
    are reported rather than fatal.
    """
    a1, a2, a3 = _alphas(params, truncated=False)
    bad: list[int] = []
    for c in range(1, params.C_max + 1):
        if a1[c] < a1[c - 1] - 1e-15 or a2[c] < a2[c - 1] - 1e-15 or a3[c] < a3[c - 1] - 1e-15:
            bad.append(c)
    return bad


def lambda_star(params: EpidemicParams) -> float:
    """Critical immunization price; depends only on the infection saturation.

    Evaluated at C_max, where the tabulated rates are constant by
    declaration.  Independent of the carrier birth/death rates.
    """
    ki = params.kappa_i[params.C_max]
    return (ki / (params.eta + params.kappa_r)) / (params.eta + ki)


def solve_carrier_equation(params: EpidemicParams, tol: float = 1e-12) -> CarrierValue:
    """Contraction iteration for the per-susceptible carrier value v(c).

    Iterates from zero until the a-posteriori error bound meets ``tol``;
    then scans for the smallest carrier count at which waiting is strictly
    worse than paying the immunization price.
    """
    a1, a2, a3 = _alphas(params, truncated=True)
    d = float(np.max(a1 + a2))
    if d >= 1.0:
        raise CarrierContractionError(
            f"sup(alpha1 + alpha2) = {d} >= 1; the carrier equation is not a contraction")
    lam = params.immunization_cost
    n = params.C_max + 1
    w = np.zeros(n)
    up = np.zeros(n, dtype=np.int64)
    up[:-1] = np.arange(1, n)
    up[-1] = n - 1  # a1 is zero at the boundary, the index is never weighted
    down = np.maximum(np.arange(n) - 1, 0)  # a2 is zero at c=0
    stop = tol * (1.0 - d) if d > 0 else tol
    for _ in range(10 ** 7):
        wn = np.minimum(a1 * w[up] + a2 * w[down] + a3, lam)
        step = float(np.max(np.abs(wn - w)))
        w = wn
        if step < stop:
            break
    first = a1 * w[up] + a2 * w[down] + a3
    above = np.flatnonzero(first > lam + 1e-12)
    c_star = int(above[0]) if above.size else None
    return CarrierValue(v=w, c_star=c_star, lambda_star=lambda_star(params))


def carrier_residual(params: EpidemicParams, cv: CarrierValue) -> float:
    """Sup-norm defect of the carrier fixed point at the solved v."""
    a1, a2, a3 = _alphas(params, truncated=True)
    n = params.C_max + 1
    up = np.zeros(n, dtype=np.int64)
    up[:-1] = np.arange(1, n)
    up[-1] = n - 1
    down = np.maximum(np.arange(n) - 1, 0)
    g = np.minimum(a1 * cv.v[up] + a2 * cv.v[down] + a3, params.immunization_cost)
    return float(np.max(np.abs(g - cv.v)))


def state_label(s: int, c: int, i: int) -> str:
    return f"{s},{c},{i}"


def enumerate_states(params: EpidemicParams):
    """Deterministic state order shared by the model builder and the policies.

    Restricted to s + i <= S + I: that set is closed under every transition
    (infection conserves s + i, recovery and immunization decrease it), while
    the remaining corners of the product box are unreachable and their
    infection jumps would leave the box.
    """
    cap = params.S + params.I
    for s in range(params.S + 1):
        for c in range(params.C_max + 1):
            for i in range(cap - s + 1):
                yield s, c, i


def build_epidemic_model(params: EpidemicParams) -> CtmdpModel:
    """Generic finite CTMDP over (susceptibles, carriers, infectives).

    Carrier births are suppressed at C_max (reflecting truncation).  The
    single gradual action waits; the single impulse moves one susceptible
    out at the immunization price.
    """
    lam = params.immunization_cost
    labels: list[str] = []
    gradual: dict[str, tuple[str, ...]] = {}
    impulsive: dict[str, tuple[str, ...]] = {}
    rates: dict[tuple[str, str], tuple[tuple[str, float], ...]] = {}
    impulse_rows: dict[tuple[str, str], tuple[tuple[str, float], ...]] = {}
    gcost: dict[tuple[str, str], float] = {}
    icost: dict[tuple[str, str], float] = {}
    max_rate = 0.0
    for s, c, i in enumerate_states(params):
        lbl = state_label(s, c, i)
        labels.append(lbl)
        gradual[lbl] = (WAIT,)
        row: list[tuple[str, float]] = []
        if c < params.C_max and params.rho_b[c] > 0:
            row.append((state_label(s, c + 1, i), params.rho_b[c]))
        if c > 0 and params.rho_d[c] > 0:
            row.append((state_label(s, c - 1, i), params.rho_d[c]))
        if s > 0 and params.kappa_i[c] > 0:
            row.append((state_label(s - 1, c, i + 1), s * params.kappa_i[c]))
        if i > 0 and params.kappa_r > 0:
            row.append((state_label(s, c, i - 1), i * params.kappa_r))
        rates[(lbl, WAIT)] = tuple(row)
        max_rate = max(max_rate, sum(r for _, r in row))
        gcost[(lbl, WAIT)] = float(i)
        if s > 0:
            impulsive[lbl] = (IMMUNIZE,)
            impulse_rows[(lbl, IMMUNIZE)] = ((state_label(s - 1, c, i), 1.0),)
            icost[(lbl, IMMUNIZE)] = lam
        else:
            impulsive[lbl] = ()
    K_cost = float(params.S + params.I)
    return CtmdpModel(
        states=StateSpace(tuple(labels)),
        actions=ActionCatalog(gradual=gradual, impulsive=impulsive),
        rates=RateKernel(rows=rates, K_rate=max_rate),
        impulses=ImpulseKernel(rows=impulse_rows),
        costs=CostModel(gradual_cost=gcost, impulse_cost=icost,
                        eta=params.eta, K_cost=K_cost, c_lower=lam),
    )


def analytic_value(params: EpidemicParams, cv: CarrierValue, s: int, c: int, i: int) -> float:
    """Separable value s*v(c) + i/(eta + kappa_r)."""
    if not (0 <= s <= params.S and 0 <= c <= params.C_max and 0 <= i <= params.S + params.I):
        raise ValueError(f"state ({s},{c},{i}) outside the state box")
    return s * float(cv.v[c]) + i / (params.eta + params.kappa_r)


def threshold_policy(params: EpidemicParams, cv: CarrierValue) -> StationaryPolicy:
    """Immunize all susceptibles exactly when the carrier count reaches c_star.

    Aligned with the state order of :func:`build_epidemic_model`.  Chains
    under this policy fire one immunization per susceptible and land at
    (0, c, i).
    """
    box = list(enumerate_states(params))
    n = len(box)
    impulsive = np.zeros(n, dtype=bool)
    phi_g = np.zeros(n, dtype=np.int64)
    phi_i: dict[int, int] = {}
    if cv.c_star is not None:
        for k, (s, c, i) in enumerate(box):
            if s >= 1 and c >= cv.c_star:
                impulsive[k] = True
                phi_i[k] = 0
    return StationaryPolicy(impulsive=impulsive, phi_g=phi_g, phi_i=phi_i)
