"""Exact small-instance benchmark: discretized backward induction for the
single-product single-store single-depot season.

The stochastic demand expectation uses Gauss-Hermite quadrature on the
zero-truncated normal (nodes clamped at 0, weights renormalized). Off-grid
successors are handled by bilinear interpolation clamped to the grid hull.
"""

from dataclasses import dataclass, field

import numpy as np

from .demand import ConfigurationError, DemandScenario
from .env import EnvState, InventoryEnv, run_episode


class SizeError(ValueError):
    """Instance too large for the exact solver."""


@dataclass
class DiscreteGrid:
    stock_step: float
    max_stock: float
    action_step: float
    quad_nodes: int = 9
    max_store_stock: float = None
    budget: float = 2e9  # horizon * states * actions * nodes cap

    def __post_init__(self):
        if self.stock_step <= 0 or self.action_step <= 0:
            raise ConfigurationError("grid steps must be > 0")
        if self.max_stock <= 0:
            raise ConfigurationError("max_stock must be > 0")
        if self.quad_nodes < 1:
            raise ConfigurationError("quad_nodes must be >= 1")
        if self.max_store_stock is None:
            self.max_store_stock = self.max_stock


def _axis(step, high):
    n = int(round(high / step))
    return np.linspace(0.0, n * step, n + 1)


def _interp_weights(grid, x):
    """Indices and fractional weights for linear interpolation, hull-clamped."""
    x = np.clip(x, grid[0], grid[-1])
    j = np.clip(np.searchsorted(grid, x, side="right") - 1, 0, len(grid) - 2)
    w = (x - grid[j]) / (grid[j + 1] - grid[j])
    return j, np.clip(w, 0.0, 1.0)


def demand_quadrature(mu, sigma, n_nodes):
    """Nodes/weights for E[g(max(0, Normal(mu, sigma)))]; weights sum to 1."""
    if sigma == 0 or n_nodes == 1:
        return np.array([max(mu, 0.0)]), np.array([1.0])
    x, w = np.polynomial.hermite.hermgauss(n_nodes)
    nodes = np.maximum(mu + np.sqrt(2.0) * sigma * x, 0.0)
    weights = w / w.sum()
    return nodes, weights


@dataclass
class OracleSolution:
    """Value and greedy-action tables over (period, depot stock, store stock)."""

    q_grid: np.ndarray
    i_grid: np.ndarray
    values: np.ndarray  # (N+1, nq, nI)
    actions: np.ndarray  # (N, nq, nI)

    def value_at(self, t, q, i) -> float:
        return self._bilinear(self.values[t], q, i)

    def action_at(self, t, q, i) -> float:
        return self._bilinear(self.actions[t], q, i)

    def _bilinear(self, table, q, i) -> float:
        j, wq = _interp_weights(self.q_grid, np.asarray([float(q)]))
        k, wi = _interp_weights(self.i_grid, np.asarray([float(i)]))
        row = table[j, :] * (1 - wq)[:, None] + table[j + 1, :] * wq[:, None]
        return float((row[:, k] * (1 - wi) + row[:, k + 1] * wi).item())

    def write_csv(self, path) -> None:
        """Delimited table: q, I, t, V, a* (a* empty on the terminal layer)."""
        with open(path, "w") as fh:
            fh.write("q,I,t,V,a_star\n")
            for t in range(self.values.shape[0]):
                for jq, q in enumerate(self.q_grid):
                    for ji, i in enumerate(self.i_grid):
                        a = (
                            f"{self.actions[t, jq, ji]:.10g}"
                            if t < self.actions.shape[0]
                            else ""
                        )
                        fh.write(f"{q:.10g},{i:.10g},{t},{self.values[t, jq, ji]:.10g},{a}\n")


def solve(env: InventoryEnv, scenario: DemandScenario, grid: DiscreteGrid) -> OracleSolution:
    """Backward-induction value iteration for a 1x1x1 instance."""
    p = env.params
    if (p.products, p.stores, p.depots) != (1, 1, 1):
        raise SizeError(
            "exact solver supports only single-product single-store single-depot "
            f"instances, got ({p.products}, {p.stores}, {p.depots})"
        )
    if scenario.horizon != p.horizon:
        raise ConfigurationError("scenario horizon does not match cost parameters")
    qg = _axis(grid.stock_step, grid.max_stock)
    ig = _axis(grid.stock_step, grid.max_store_stock)
    actions = _axis(grid.action_step, grid.max_stock)
    work = p.horizon * len(qg) * len(ig) * len(actions) * grid.quad_nodes
    if work > grid.budget:
        raise SizeError(f"grid work {work:.3g} exceeds budget {grid.budget:.3g}")

    K = float(p.fixed_order[0, 0, 0])
    W, f, h = p.unit_ship, float(p.lost_sales[0, 0]), float(p.holding[0, 0])
    s = float(p.salvage[0, 0])
    gamma = p.discount
    nq, ni = len(qg), len(ig)

    values = np.empty((p.horizon + 1, nq, ni))
    policy = np.empty((p.horizon, nq, ni))
    values[p.horizon] = qg[:, None] * s + ig[None, :] * (h + s)

    feas_tol = 1e-9
    for t in range(p.horizon - 1, -1, -1):
        nodes, wts = demand_quadrature(
            scenario.mean[0, 0, t], scenario.std[0, 0, t], grid.quad_nodes
        )
        v_next = values[t + 1]
        best = np.full((nq, ni), np.inf)
        best_a = np.zeros((nq, ni))
        for a in actions:
            feas = qg >= a - feas_tol
            if not feas.any():
                break
            j, wq = _interp_weights(qg, qg - a)
            vq = v_next[j, :] * (1 - wq)[:, None] + v_next[j + 1, :] * wq[:, None]
            total = np.zeros((nq, ni))
            for u, w in zip(nodes, wts):
                cost = (
                    K * (a > 0)
                    + W * a
                    + f * np.maximum(u - ig - a, 0.0)
                    + h * np.maximum(ig + a - u, 0.0)
                )
                k, wi = _interp_weights(ig, np.maximum(ig + a - u, 0.0))
                v_succ = vq[:, k] * (1 - wi)[None, :] + vq[:, k + 1] * wi[None, :]
                total += w * (cost[None, :] + gamma * v_succ)
            total[~feas, :] = np.inf
            better = total < best
            best = np.where(better, total, best)
            best_a = np.where(better, a, best_a)
        values[t] = best
        policy[t] = best_a
    return OracleSolution(q_grid=qg, i_grid=ig, values=values, actions=policy)


class GreedyOraclePolicy:
    """Plays the solver's greedy action table (bilinear-interpolated)."""

    def __init__(self, solution: OracleSolution):
        self.solution = solution

    def __call__(self, state: EnvState):
        a = self.solution.action_at(
            state.period, state.depot_stock[0, 0], state.store_stock[0, 0]
        )
        return np.array([[[a]]])


@dataclass
class PolicyStats:
    """Monte-Carlo cost summary of one policy over a set of seeds."""

    costs: np.ndarray
    mean: float = field(init=False)
    std: float = field(init=False)
    min: float = field(init=False)
    max: float = field(init=False)
    stderr: float = field(init=False)

    def __post_init__(self):
        self.costs = np.asarray(self.costs, dtype=float)
        self.mean = float(self.costs.mean())
        self.std = float(self.costs.std(ddof=1)) if self.costs.size > 1 else 0.0
        self.min = float(self.costs.min())
        self.max = float(self.costs.max())
        self.stderr = self.std / np.sqrt(self.costs.size) if self.costs.size > 1 else 0.0


def evaluate_policy(env: InventoryEnv, scenario: DemandScenario, policy_factory,
                    seeds) -> PolicyStats:
    """Total-cost statistics across episodes; one fresh policy per episode.

    Seeds index the demand sample paths, so two policies evaluated on the
    same seed list face identical demand (paired comparison).
    """
    seeds = list(seeds)
    if len(seeds) < 1:
        raise ConfigurationError("need at least one seed")
    costs = [
        run_episode(env, policy_factory(), scenario, seed=sd).total_cost for sd in seeds
    ]
    return PolicyStats(np.asarray(costs))


def improvement_stats(base: PolicyStats, candidate: PolicyStats) -> PolicyStats:
    """Per-seed paired improvement over the baseline, in percent
    ((base - candidate) / base * 100, the usual cost-reduction metric)."""
    if base.costs.size != candidate.costs.size:
        raise ConfigurationError("paired comparison needs equal seed counts")
    imp = (base.costs - candidate.costs) / base.costs * 100.0
    return PolicyStats(imp)
