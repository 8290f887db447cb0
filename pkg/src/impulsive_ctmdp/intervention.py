"""Finite impulse chains: sampling, expected cost, and landing distribution.

At an intervention instant, the policy applies impulses repeatedly until the
process lands in a state where it waits under gradual control.  A chain is
the recorded sequence of (state, action) steps; a policy is proper when
every chain terminates with probability one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ._ops import CompiledModel, compile_model
from .bellman import StationaryPolicy, check_policy
from .model import CtmdpModel

LANDING_ROW_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class InterventionChain:
    steps: tuple[tuple[str, str], ...]  # (state, impulsive action) per impulse
    landing: str
    total_cost: float


@dataclass(frozen=True, eq=False)
class ChainAnalysis:
    """Expected chain cost and landing distribution per flagged state.

    ``states`` lists the flagged state labels in model order;
    ``landing_kernel`` rows are probability vectors over all states with
    support in the gradual region.
    """

    states: tuple[str, ...]
    expected_cost: np.ndarray
    landing_kernel: sp.csr_matrix

    def landing_row(self, k: int) -> np.ndarray:
        return np.asarray(self.landing_kernel[k].todense()).ravel()


class ImproperChainError(RuntimeError):
    """A chain failed to reach the gradual region within the guard."""

    def __init__(self, message: str, state: str):
        super().__init__(message)
        self.state = state


def chain_guard(model: CtmdpModel) -> int:
    """Step guard: expected chain length is at most 2K/(eta*c_lower), so a
    chain exceeding ten times that (plus slack) flags an improper policy."""
    bound = 2.0 * model.K / (model.eta * model.costs.c_lower)
    return math.ceil(bound) * 10 + 100


def _step(comp: CompiledModel, policy: StationaryPolicy, x: int, rng: np.random.Generator) -> tuple[int, int, float]:
    """One impulse at flagged state ``x``: (action index, new state, cost)."""
    a = policy.phi_i[x]
    p = comp.i_pair(x, a)
    tgt = comp.i_targets[p]
    if len(tgt) == 1:
        z = int(tgt[0])
    else:
        z = int(tgt[np.searchsorted(comp.i_cum[p], rng.random(), side="right")])
    return a, z, float(comp.i_cost[p])


def run_chain(comp: CompiledModel, policy: StationaryPolicy, x: int,
              rng: np.random.Generator, guard: int) -> tuple[int, float, int]:
    """Fast chain sampler: returns (landing index, total cost, n steps)."""
    cost = 0.0
    steps = 0
    while policy.impulsive[x]:
        if steps >= guard:
            raise ImproperChainError(
                f"chain exceeded the {guard}-step guard without reaching a gradual state",
                comp.model.states.labels[x],
            )
        _, x, c = _step(comp, policy, x, rng)
        cost += c
        steps += 1
    return x, cost, steps


def sample_chain(model: CtmdpModel, policy: StationaryPolicy, x: str, rng: np.random.Generator) -> InterventionChain:
    """Sample one intervention chain started at a flagged state."""
    comp = compile_model(model)
    k = model.states.index[x]
    if not policy.impulsive[k]:
        raise ValueError(f"state {x!r} is not flagged for intervention under this policy")
    guard = chain_guard(model)
    steps: list[tuple[str, str]] = []
    cost = 0.0
    while policy.impulsive[k]:
        if len(steps) >= guard:
            raise ImproperChainError(
                f"chain exceeded the {guard}-step guard without reaching a gradual state",
                model.states.labels[k],
            )
        a, nxt, c = _step(comp, policy, k, rng)
        steps.append((model.states.labels[k], model.actions.impulsive[model.states.labels[k]][a]))
        cost += c
        k = nxt
    return InterventionChain(steps=tuple(steps), landing=model.states.labels[k], total_cost=cost)


def _policy_impulse_rows(comp: CompiledModel, policy: StationaryPolicy) -> tuple[np.ndarray, sp.csr_matrix, np.ndarray]:
    imp_idx = np.flatnonzero(policy.impulsive)
    rows = np.array([comp.i_pair(int(x), policy.phi_i[int(x)]) for x in imp_idx], dtype=np.int64)
    Q_pi = comp.Q_imp[rows] if imp_idx.size else sp.csr_matrix((0, comp.N))
    c_pi = comp.i_cost[rows] if imp_idx.size else np.empty(0)
    return imp_idx, Q_pi, c_pi


def analyze_chains(model: CtmdpModel, policy: StationaryPolicy, tol: float = 1e-10) -> ChainAnalysis:
    """Expected chain cost and landing distribution, by fixed-point sweeps.

    The restriction of the relocation kernel to the flagged region is
    substochastic for proper policies, so the sweeps converge geometrically;
    running past the guard budget signals an improper policy.
    """
    check_policy(model, policy)
    comp = compile_model(model)
    imp_idx, Q_pi, c_pi = _policy_impulse_rows(comp, policy)
    m = imp_idx.size
    if m == 0:
        return ChainAnalysis(states=(), expected_cost=np.empty(0), landing_kernel=sp.csr_matrix((0, comp.N)))
    in_imp = policy.impulsive
    # Split each relocation row into its flagged and gradual parts.
    mask_i = in_imp[Q_pi.indices]
    M = sp.csr_matrix((Q_pi.data * mask_i, Q_pi.indices, Q_pi.indptr), shape=Q_pi.shape)[:, imp_idx]
    R = sp.csr_matrix((Q_pi.data * ~mask_i, Q_pi.indices, Q_pi.indptr), shape=Q_pi.shape)
    R.eliminate_zeros()
    M.eliminate_zeros()

    max_sweeps = chain_guard(model) * 10
    W = np.zeros(m)
    for _ in range(max_sweeps):
        Wn = c_pi + M @ W
        step = float(np.max(np.abs(Wn - W)))
        W = Wn
        if step < tol:
            break
    else:
        worst = model.states.labels[int(imp_idx[int(np.argmax(np.abs(M @ W + c_pi - W)))])]
        raise ImproperChainError(
            f"expected chain cost did not converge in {max_sweeps} sweeps", worst)

    L = R.copy()
    for _ in range(max_sweeps):
        Ln = R + M @ L
        diff = (Ln - L)
        step = float(np.max(np.abs(diff.data))) if diff.nnz else 0.0
        L = Ln
        if step < tol:
            break
    else:
        raise ImproperChainError(
            f"landing distribution did not converge in {max_sweeps} sweeps",
            model.states.labels[int(imp_idx[0])])
    L = sp.csr_matrix(L)

    sums = np.asarray(L.sum(axis=1)).ravel()
    bad = np.flatnonzero(np.abs(sums - 1.0) > LANDING_ROW_TOL)
    if bad.size:
        raise ImproperChainError(
            f"landing distribution row sums to {sums[bad[0]]}; chains leak mass",
            model.states.labels[int(imp_idx[bad[0]])])
    return ChainAnalysis(
        states=tuple(model.states.labels[int(x)] for x in imp_idx),
        expected_cost=W,
        landing_kernel=L,
    )


def expected_landing_value(model: CtmdpModel, policy: StationaryPolicy, W: np.ndarray,
                           tol: float = 1e-12) -> np.ndarray:
    """Expected value of ``W`` at the post-intervention state, per state.

    Identity on gradual states; on flagged states the chain is followed
    through the relocation kernel to its landing distribution.
    """
    comp = compile_model(model)
    imp_idx, Q_pi, _ = _policy_impulse_rows(comp, policy)
    out = np.array(W, dtype=np.float64)
    if imp_idx.size == 0:
        return out
    in_imp = policy.impulsive
    mask_i = in_imp[Q_pi.indices]
    M = sp.csr_matrix((Q_pi.data * mask_i, Q_pi.indices, Q_pi.indptr), shape=Q_pi.shape)[:, imp_idx]
    R = sp.csr_matrix((Q_pi.data * ~mask_i, Q_pi.indices, Q_pi.indptr), shape=Q_pi.shape)
    r = R @ W
    h = np.zeros(imp_idx.size)
    max_sweeps = chain_guard(model) * 10
    for _ in range(max_sweeps):
        hn = r + M @ h
        step = float(np.max(np.abs(hn - h)))
        h = hn
        if step < tol:
            break
    else:
        raise ImproperChainError("landing value iteration did not converge",
                                 model.states.labels[int(imp_idx[0])])
    out[imp_idx] = h
    return out
