"""Seeded random model instances for property tests and benchmarks."""

from __future__ import annotations

import numpy as np

from .model import (
    ActionCatalog,
    CostModel,
    CtmdpModel,
    ImpulseKernel,
    RateKernel,
    StateSpace,
)


def random_model(
    seed: int,
    max_states: int = 50,
    max_actions: int = 4,
    with_impulses: bool = True,
    K_rate: float = 2.0,
    eta: float = 1.0,
) -> CtmdpModel:
    """Random sparse model with declared bounds honored by construction.

    Running costs are uniform in [-1, 1] (K_cost = 1), each rate row's total
    is uniform in [0, K_rate], and impulse costs sit in [0.3, 1.5] with
    c_lower = 0.3.  Deterministic in ``seed``.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, max_states + 1))
    labels = tuple(f"x{k}" for k in range(n))
    gradual: dict[str, tuple[str, ...]] = {}
    impulsive: dict[str, tuple[str, ...]] = {}
    rate_rows: dict[tuple[str, str], tuple[tuple[str, float], ...]] = {}
    imp_rows: dict[tuple[str, str], tuple[tuple[str, float], ...]] = {}
    gcost: dict[tuple[str, str], float] = {}
    icost: dict[tuple[str, str], float] = {}
    c_lower = 0.3
    for k, s in enumerate(labels):
        n_act = int(rng.integers(1, max_actions + 1))
        acts = tuple(f"g{j}" for j in range(n_act))
        gradual[s] = acts
        for a in acts:
            others = [j for j in range(n) if j != k]
            n_tgt = int(rng.integers(0, min(3, len(others)) + 1))
            row: tuple[tuple[str, float], ...] = ()
            if n_tgt:
                tgt = rng.choice(others, size=n_tgt, replace=False)
                weights = rng.random(n_tgt)
                weights *= float(rng.uniform(0, K_rate)) / weights.sum()
                row = tuple((labels[int(j)], float(wt)) for j, wt in zip(tgt, weights))
            rate_rows[(s, a)] = row
            gcost[(s, a)] = float(rng.uniform(-1.0, 1.0))
        if with_impulses and rng.random() < 0.5:
            impulsive[s] = ("i0",)
            probs = rng.random(n)
            probs /= probs.sum()
            imp_rows[(s, "i0")] = tuple((labels[j], float(p)) for j, p in enumerate(probs))
            icost[(s, "i0")] = float(rng.uniform(c_lower, 1.5))
        else:
            impulsive[s] = ()
    return CtmdpModel(
        states=StateSpace(labels),
        actions=ActionCatalog(gradual=gradual, impulsive=impulsive),
        rates=RateKernel(rows=rate_rows, K_rate=K_rate),
        impulses=ImpulseKernel(rows=imp_rows),
        costs=CostModel(gradual_cost=gcost, impulse_cost=icost,
                        eta=eta, K_cost=1.0, c_lower=c_lower),
    )


def random_value_vector(seed: int, model: CtmdpModel) -> np.ndarray:
    """Random vector inside the [-K/eta, K/eta] box for operator property tests."""
    rng = np.random.default_rng(seed)
    bound = model.K / model.costs.eta
    return rng.uniform(-bound, bound, size=model.states.N)
