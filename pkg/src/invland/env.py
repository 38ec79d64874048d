"""Seasonal multi-product multi-store inventory MDP.

One depot procurement at the start of the season, periodic shipments to
stores, lost sales (no backordering), holding cost at stores, and a
terminal salvage charge on everything left after the last period.
"""

from dataclasses import dataclass, field

import numpy as np

from . import demand as demand_mod
from .demand import ConfigurationError, DemandScenario


class FeasibilityError(ValueError):
    """Action ships more than a depot holds."""


class SequencingError(RuntimeError):
    """Terminal cost requested before the final period."""


class EpisodeFinishedError(RuntimeError):
    """step() called after the horizon was exhausted."""


@dataclass
class CostParams:
    """Cost coefficients and horizon of the MDP.

    fixed_order: (P, R, D) charge per nonzero shipment.
    unit_ship: per-unit shipping cost, shared across all flows.
    lost_sales / holding / salvage: (P, R) per-unit costs.
    """

    fixed_order: np.ndarray
    unit_ship: float
    lost_sales: np.ndarray
    holding: np.ndarray
    salvage: np.ndarray
    discount: float = 1.0
    horizon: int = 20

    def __post_init__(self):
        self.fixed_order = np.asarray(self.fixed_order, dtype=float)
        self.lost_sales = np.asarray(self.lost_sales, dtype=float)
        self.holding = np.asarray(self.holding, dtype=float)
        self.salvage = np.asarray(self.salvage, dtype=float)
        if self.fixed_order.ndim != 3:
            raise ConfigurationError("fixed_order must have shape (products, stores, depots)")
        p, r, _ = self.fixed_order.shape
        for name in ("lost_sales", "holding", "salvage"):
            arr = getattr(self, name)
            if arr.shape != (p, r):
                raise ConfigurationError(f"{name} must have shape ({p}, {r}), got {arr.shape}")
        for name in ("fixed_order", "lost_sales", "holding", "salvage"):
            if np.any(getattr(self, name) < 0):
                raise ConfigurationError(f"{name} entries must be >= 0")
        if self.unit_ship < 0:
            raise ConfigurationError("unit_ship must be >= 0")
        if not 0 < self.discount <= 1:
            raise ConfigurationError("discount must be in (0, 1]")
        if self.horizon < 1:
            raise ConfigurationError("horizon must be >= 1")

    @property
    def products(self) -> int:
        return self.fixed_order.shape[0]

    @property
    def stores(self) -> int:
        return self.fixed_order.shape[1]

    @property
    def depots(self) -> int:
        return self.fixed_order.shape[2]

    @classmethod
    def uniform(cls, products, stores, depots=1, fixed_order=0.0, unit_ship=0.1,
                lost_sales=50.0, holding=1.0, salvage=10.0, discount=1.0, horizon=20):
        """Scalar costs broadcast to every (product, store, depot)."""
        return cls(
            fixed_order=np.full((products, stores, depots), float(fixed_order)),
            unit_ship=float(unit_ship),
            lost_sales=np.full((products, stores), float(lost_sales)),
            holding=np.full((products, stores), float(holding)),
            salvage=np.full((products, stores), float(salvage)),
            discount=float(discount),
            horizon=int(horizon),
        )


@dataclass
class EnvState:
    """Depot stock q (P, D), store stock I (P, R), and the period index."""

    depot_stock: np.ndarray
    store_stock: np.ndarray
    period: int

    def __post_init__(self):
        self.depot_stock = np.asarray(self.depot_stock, dtype=float)
        self.store_stock = np.asarray(self.store_stock, dtype=float)

    def copy(self) -> "EnvState":
        return EnvState(self.depot_stock.copy(), self.store_stock.copy(), self.period)


_FEAS_TOL = 1e-9


def check_feasible(action: np.ndarray, state: EnvState) -> None:
    """Raise FeasibilityError naming the first violated (product, depot)."""
    action = np.asarray(action, dtype=float)
    if np.any(action < -_FEAS_TOL):
        idx = np.unravel_index(np.argmin(action), action.shape)
        raise FeasibilityError(f"negative shipment {action[idx]:.6g} at (product, store, depot)={idx}")
    shipped = action.sum(axis=1)  # (P, D)
    over = shipped - state.depot_stock
    if np.any(over > _FEAS_TOL * np.maximum(1.0, state.depot_stock)):
        i, d = np.unravel_index(np.argmax(over), over.shape)
        raise FeasibilityError(
            f"shipments {shipped[i, d]:.6g} exceed depot stock "
            f"{state.depot_stock[i, d]:.6g} for product {i}, depot {d}"
        )


def project_action(raw: np.ndarray, state: EnvState) -> np.ndarray:
    """Map an unconstrained real tensor to a feasible shipment tensor.

    Negatives are clamped to zero; any (product, depot) slice shipping more
    than the depot holds is rescaled multiplicatively so the constraint
    binds with equality.
    """
    a = np.maximum(np.asarray(raw, dtype=float), 0.0)
    shipped = a.sum(axis=1)  # (P, D)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(shipped > state.depot_stock, state.depot_stock / shipped, 1.0)
    scale = np.nan_to_num(scale, nan=1.0, posinf=1.0)
    return a * scale[:, None, :]


def immediate_cost(action, state: EnvState, demand, params: CostParams) -> float:
    """Per-period cost: fixed charges, shipping, lost sales, holding."""
    action = np.asarray(action, dtype=float)
    demand = np.asarray(demand, dtype=float)
    check_feasible(action, state)
    if np.any(demand < 0):
        raise ConfigurationError("demand entries must be >= 0")
    inflow = action.sum(axis=2)  # (P, R)
    fixed = float(np.sum(params.fixed_order * (action > 0)))
    ship = params.unit_ship * float(action.sum())
    short = np.maximum(demand - state.store_stock - inflow, 0.0)
    held = np.maximum(state.store_stock + inflow - demand, 0.0)
    return fixed + ship + float(np.sum(params.lost_sales * short)) + float(
        np.sum(params.holding * held)
    )


def terminal_cost(state: EnvState, params: CostParams) -> float:
    """End-of-season salvage: depot leftovers at s, store leftovers at h + s.

    Depot salvage uses the across-store mean of s per product (the depot has
    no store index).
    """
    if state.period != params.horizon:
        raise SequencingError(
            f"terminal cost requested at period {state.period}, horizon is {params.horizon}"
        )
    depot_s = params.salvage.mean(axis=1)  # (P,)
    depot_part = float(np.sum(state.depot_stock * depot_s[:, None]))
    store_part = float(np.sum(state.store_stock * (params.holding + params.salvage)))
    return depot_part + store_part


def step(state: EnvState, action, demand, params: CostParams):
    """Advance one period; returns (next_state, immediate cost)."""
    if state.period >= params.horizon:
        raise EpisodeFinishedError(f"episode already finished at period {state.period}")
    cost = immediate_cost(action, state, demand, params)
    action = np.asarray(action, dtype=float)
    demand = np.asarray(demand, dtype=float)
    inflow = action.sum(axis=2)
    next_store = np.maximum(state.store_stock + inflow - demand, 0.0)
    next_depot = np.maximum(state.depot_stock - action.sum(axis=1), 0.0)
    return EnvState(next_depot, next_store, state.period + 1), cost


@dataclass
class InventoryEnv:
    """CostParams plus the initial stocking rule."""

    params: CostParams
    initial_depot: np.ndarray
    initial_store: np.ndarray = None

    def __post_init__(self):
        self.initial_depot = np.asarray(self.initial_depot, dtype=float)
        p, d = self.params.products, self.params.depots
        if self.initial_depot.shape != (p, d):
            raise ConfigurationError(
                f"initial_depot must have shape ({p}, {d}), got {self.initial_depot.shape}"
            )
        if self.initial_store is None:
            self.initial_store = np.zeros((p, self.params.stores))
        else:
            self.initial_store = np.asarray(self.initial_store, dtype=float)

    @classmethod
    def from_scenario(cls, params: CostParams, scenario: DemandScenario, initial_depot=None):
        """Default stocking: each product's total mean season demand, split
        evenly across depots."""
        if initial_depot is None:
            total = scenario.mean.sum(axis=(1, 2))  # (P,)
            initial_depot = np.tile((total / params.depots)[:, None], (1, params.depots))
        return cls(params=params, initial_depot=initial_depot)

    def reset(self) -> EnvState:
        return EnvState(self.initial_depot.copy(), self.initial_store.copy(), 0)


@dataclass
class PeriodRecord:
    state: EnvState
    action: np.ndarray
    demand: np.ndarray
    cost: float


@dataclass
class EpisodeRecord:
    """Full trace of one season plus its cost accounting."""

    periods: list
    terminal: float
    total_cost: float
    shaped_reward: float
    final_state: EnvState = None

    def write_csv(self, path) -> None:
        """One row per period: t, q..., I..., a..., u..., cost."""
        with open(path, "w") as fh:
            first = self.periods[0]
            nq = first.state.depot_stock.size
            ni = first.state.store_stock.size
            na = first.action.size
            cols = (
                ["t"]
                + [f"q{j}" for j in range(nq)]
                + [f"I{j}" for j in range(ni)]
                + [f"a{j}" for j in range(na)]
                + [f"u{j}" for j in range(ni)]
                + ["cost"]
            )
            fh.write(",".join(cols) + "\n")
            for rec in self.periods:
                vals = np.concatenate(
                    [
                        rec.state.depot_stock.ravel(),
                        rec.state.store_stock.ravel(),
                        rec.action.ravel(),
                        rec.demand.ravel(),
                        [rec.cost],
                    ]
                )
                fh.write(f"{rec.state.period}," + ",".join(f"{v:.10g}" for v in vals) + "\n")
            fh.write(f"# terminal,{self.terminal:.10g}\n")
            fh.write(f"# total,{self.total_cost:.10g}\n")


def run_episode(env: InventoryEnv, policy, scenario: DemandScenario, seed,
                reward_scale: float = 1.0) -> EpisodeRecord:
    """Simulate one season; deterministic given (policy, scenario, seed).

    The policy is called with the current state and may return any real
    (P, R, D) tensor; it is projected onto the feasible set before being
    applied. Stateful policies may expose reset(state) and
    observe(state, action, demand) hooks.
    """
    params = env.params
    if scenario.horizon != params.horizon:
        raise ConfigurationError(
            f"scenario horizon {scenario.horizon} != params horizon {params.horizon}"
        )
    if (scenario.products, scenario.stores) != (params.products, params.stores):
        raise ConfigurationError("scenario dimensions do not match cost parameters")
    rng = np.random.default_rng(seed)
    state = env.reset()
    if hasattr(policy, "reset"):
        policy.reset(state)
    periods = []
    total = 0.0
    for t in range(params.horizon):
        raw = np.asarray(policy(state), dtype=float).reshape(
            params.products, params.stores, params.depots
        )
        action = project_action(raw, state)
        u = demand_mod.sample_period(scenario, t, rng)
        next_state, cost = step(state, action, u, params)
        if hasattr(policy, "observe"):
            policy.observe(state, action, u)
        periods.append(PeriodRecord(state=state, action=action, demand=u, cost=cost))
        total += params.discount**t * cost
        state = next_state
    term = terminal_cost(state, params)
    total += params.discount**params.horizon * term
    shaped = reward_scale / total if total > 0 else float("inf")
    return EpisodeRecord(
        periods=periods, terminal=term, total_cost=total, shaped_reward=shaped,
        final_state=state,
    )


def estimate_reward_scale(env: InventoryEnv, scenario: DemandScenario, episodes=100,
                          seed=0) -> float:
    """Default reward scale k: mean-ordering policy cost over Monte-Carlo episodes."""
    from .heuristics import MeanOrderPolicy

    costs = []
    for ep in range(episodes):
        policy = MeanOrderPolicy(scenario, depots=env.params.depots)
        rec = run_episode(env, policy, scenario, seed=(seed, ep))
        costs.append(rec.total_cost)
    return float(np.mean(costs))
