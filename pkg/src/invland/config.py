"""Experiment configuration: dataclasses loaded from a YAML file, validated
before any compute runs."""

from dataclasses import dataclass, field, asdict

import numpy as np
import yaml

from .agents import ALGORITHMS, AgentConfig
from .demand import SCENARIO_KINDS, ConfigurationError, make_scenario
from .env import CostParams, InventoryEnv, estimate_reward_scale


@dataclass
class EnvConfig:
    products: int = 2
    stores: int = 2
    depots: int = 1
    horizon: int = 20
    fixed_order_cost: float = 0.0
    unit_ship_cost: float = 0.1
    lost_sales_cost: float = 50.0
    holding_cost: float = 1.0
    salvage_cost: float = 10.0
    discount: float = 1.0
    initial_stock: float = None  # per product per depot; None -> mean-season rule
    reward_scale: float = None  # None -> mean-ordering Monte-Carlo estimate
    reward_mode: str = "terminal"

    def cost_params(self) -> CostParams:
        return CostParams.uniform(
            self.products, self.stores, self.depots,
            fixed_order=self.fixed_order_cost, unit_ship=self.unit_ship_cost,
            lost_sales=self.lost_sales_cost, holding=self.holding_cost,
            salvage=self.salvage_cost, discount=self.discount, horizon=self.horizon,
        )


@dataclass
class ScenarioConfig:
    kind: str = "stationary"
    base_mean: float = 10.0
    amplitude: float = 5.0
    cv: float = 0.25
    correlation: object = None  # scalar rho, full matrix rows, or None

    def build(self, env: EnvConfig):
        corr = self.correlation
        if isinstance(corr, list):
            corr = np.asarray(corr, dtype=float)
        return make_scenario(
            self.kind, self.base_mean, self.amplitude, self.cv, env.horizon,
            products=env.products, stores=env.stores, corr=corr,
        )


@dataclass
class TrainConfig:
    algorithm: str = "sac"
    steps: int = 50_000
    agent: AgentConfig = field(default_factory=AgentConfig)


@dataclass
class LandscapeConfig:
    resolution: int = 51
    batch_states: int = 1000
    episodes: int = 20
    direction_seed: int = 0
    noise_seed: int = 0


@dataclass
class OracleConfig:
    stock_step: float = 1.0
    action_step: float = 0.5
    max_store_stock: float = 50.0
    quad_nodes: int = 9


@dataclass
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    landscape: LandscapeConfig = field(default_factory=LandscapeConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    compare_policies: list = field(default_factory=lambda: ["order-up-to"])
    service_level: float = 0.95
    seeds: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    out_dir: str = "runs/out"

    def validate(self):
        if not self.seeds:
            raise ConfigurationError("seeds list must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError("seeds list must be duplicate-free")
        if self.train.algorithm not in ALGORITHMS:
            raise ConfigurationError(
                f"unknown algorithm {self.train.algorithm!r}; expected one of {ALGORITHMS}"
            )
        if self.scenario.kind not in SCENARIO_KINDS:
            raise ConfigurationError(
                f"unknown scenario kind {self.scenario.kind!r}; "
                f"expected one of {SCENARIO_KINDS}"
            )
        corr = self.scenario.correlation
        if isinstance(corr, list):
            n = self.env.products * self.env.stores
            arr = np.asarray(corr, dtype=float)
            if arr.shape != (n, n):
                raise ConfigurationError(
                    f"correlation must be {n}x{n} for a "
                    f"{self.env.products}x{self.env.stores} instance, got {arr.shape}"
                )
        if not 0 < self.service_level < 1:
            raise ConfigurationError("service_level must be in (0, 1)")
        # building the scenario/env exercises the remaining invariants
        scenario = self.scenario.build(self.env)
        self.env.cost_params()
        return scenario


def _from_dict(cls, data):
    if data is None:
        return cls()
    fields = {f for f in cls.__dataclass_fields__}
    unknown = set(data) - fields
    if unknown:
        raise ConfigurationError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    known = {
        "env", "scenario", "train", "landscape", "oracle", "compare_policies",
        "service_level", "seeds", "out_dir",
    }
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
    train_raw = dict(raw.get("train") or {})
    agent = _from_dict(AgentConfig, train_raw.pop("agent", None))
    agent.hidden = tuple(agent.hidden)
    cfg = ExperimentConfig(
        env=_from_dict(EnvConfig, raw.get("env")),
        scenario=_from_dict(ScenarioConfig, raw.get("scenario")),
        train=TrainConfig(
            algorithm=train_raw.pop("algorithm", "sac"),
            steps=int(train_raw.pop("steps", 50_000)),
            agent=agent,
        ),
        landscape=_from_dict(LandscapeConfig, raw.get("landscape")),
        oracle=_from_dict(OracleConfig, raw.get("oracle")),
        compare_policies=raw.get("compare_policies", ["order-up-to"]),
        service_level=float(raw.get("service_level", 0.95)),
        seeds=list(raw.get("seeds", [1, 2, 3, 4, 5])),
        out_dir=str(raw.get("out_dir", "runs/out")),
    )
    if train_raw:
        raise ConfigurationError(f"unknown train keys: {sorted(train_raw)}")
    cfg.validate()
    return cfg


def dump_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(asdict(cfg), fh, sort_keys=True)


def build_environment(cfg: ExperimentConfig):
    """Materialize (env, scenario, reward_scale) from a validated config."""
    scenario = cfg.scenario.build(cfg.env)
    params = cfg.env.cost_params()
    initial = None
    if cfg.env.initial_stock is not None:
        initial = np.full(
            (cfg.env.products, cfg.env.depots), float(cfg.env.initial_stock)
        )
    env = InventoryEnv.from_scenario(params, scenario, initial_depot=initial)
    k = cfg.env.reward_scale
    if k is None:
        k = estimate_reward_scale(env, scenario, episodes=100, seed=0)
    return env, scenario, float(k)
