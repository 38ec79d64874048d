"""Off-policy actor-critic training: an entropy-regularized stochastic
actor with temperature alpha (alpha=0 gives the deterministic variant) and
a twin-critic delayed deterministic actor with optional target-action
smoothing.

All gradients go through the manual backprop in nets.py; the critic's
gradient with respect to its action input drives the actor update.
"""

from dataclasses import dataclass, field

import numpy as np

from .demand import ConfigurationError
from .env import project_action, terminal_cost, step as env_step
from .nets import MLP, Adam, ParamVector, ShapeError, apply_gradient
from .seeding import stream, stream_seed
from . import demand as demand_mod

ALGORITHMS = ("sac", "sac-det", "td3", "td3-nosmooth")

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
PRE_TANH_CLIP = 10.0


class TrainingDiverged(RuntimeError):
    """Raised on a non-finite loss, carrying a summary of the bad batch."""


@dataclass
class AgentConfig:
    alpha: float = 0.2
    gamma: float = 0.99
    tau: float = 0.005
    policy_delay: int = 2
    noise_std: float = 0.2
    noise_clip: float = 0.5
    expl_noise: float = 0.1
    batch_size: int = 256
    hidden: tuple = (64, 64)
    lr: float = 3e-4
    buffer_capacity: int = 200_000
    start_steps: int = 1000
    update_every: int = 1
    updates_per_step: int = 1
    eval_interval: int = 5000
    eval_episodes: int = 5

    def __post_init__(self):
        if self.alpha < 0:
            raise ConfigurationError("alpha must be >= 0")
        if not 0 < self.gamma <= 1:
            raise ConfigurationError("gamma must be in (0, 1]")
        if not 0 < self.tau <= 1:
            raise ConfigurationError("tau must be in (0, 1]")
        if self.policy_delay < 1:
            raise ConfigurationError("policy_delay must be >= 1")
        if self.noise_clip < 0:
            raise ConfigurationError("noise_clip must be >= 0")


class ReplayBuffer:
    """Fixed-capacity ring buffer with uniform sampling."""

    def __init__(self, capacity, obs_dim, act_dim):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.act = np.zeros((capacity, act_dim))
        self.rew = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.ptr = 0
        self.size = 0

    def add(self, obs, act, rew, next_obs, done):
        i = self.ptr
        self.obs[i] = obs
        self.act[i] = act
        self.rew[i] = rew
        self.next_obs[i] = next_obs
        self.done[i] = float(done)
        self.ptr = (self.ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng, batch_size):
        idx = rng.integers(0, self.size, size=batch_size)
        return dict(
            obs=self.obs[idx],
            act=self.act[idx],
            rew=self.rew[idx],
            next_obs=self.next_obs[idx],
            done=self.done[idx],
        )


def _softplus(x):
    return np.logaddexp(0.0, x)


class GaussianActor:
    """tanh-squashed Gaussian policy with an affine map to [low, high]."""

    def __init__(self, obs_dim, act_dim, hidden, low, high, rng=None):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.low = np.asarray(low, dtype=float)
        self.high = np.asarray(high, dtype=float)
        self.center = (self.low + self.high) / 2.0
        self.half = (self.high - self.low) / 2.0
        self.net = MLP([obs_dim, *hidden, 2 * act_dim], rng)

    def _heads(self, out):
        mu = out[:, : self.act_dim]
        log_std = out[:, self.act_dim :]
        clamp_mask = (log_std > LOG_STD_MIN) & (log_std < LOG_STD_MAX)
        return mu, np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX), clamp_mask

    def sample(self, obs, eps):
        """Reparameterized sample; returns (action, log-prob) for fixed eps."""
        out = self.net.forward(np.atleast_2d(obs))
        mu, log_std, _ = self._heads(out)
        sigma = np.exp(log_std)
        x = mu + sigma * eps
        y = np.tanh(x)
        a = self.center + self.half * y
        return a, self._log_prob(eps, log_std, x)

    def _log_prob(self, eps, log_std, x):
        xc = np.clip(x, -PRE_TANH_CLIP, PRE_TANH_CLIP)
        # log(1 - tanh(x)^2) = 2 (log 2 - x - softplus(-2x))
        log_det = 2.0 * (np.log(2.0) - xc - _softplus(-2.0 * xc)) + np.log(self.half)
        logp = -0.5 * eps**2 - 0.5 * np.log(2 * np.pi) - log_std - log_det
        return logp.sum(axis=1)

    def mean_action(self, obs):
        obs = np.asarray(obs, dtype=float)
        squeeze = obs.ndim == 1
        out = self.net.forward(np.atleast_2d(obs))
        a = self.center + self.half * np.tanh(out[:, : self.act_dim])
        return a[0] if squeeze else a


class DeterministicActor:
    """tanh policy with an affine map to [low, high]."""

    def __init__(self, obs_dim, act_dim, hidden, low, high, rng=None):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.low = np.asarray(low, dtype=float)
        self.high = np.asarray(high, dtype=float)
        self.center = (self.low + self.high) / 2.0
        self.half = (self.high - self.low) / 2.0
        self.net = MLP([obs_dim, *hidden, act_dim], rng)

    def mean_action(self, obs):
        obs = np.asarray(obs, dtype=float)
        squeeze = obs.ndim == 1
        out = self.net.forward(np.atleast_2d(obs))
        a = self.center + self.half * np.tanh(out)
        return a[0] if squeeze else a


def make_critic(obs_dim, act_dim, hidden, rng=None) -> MLP:
    return MLP([obs_dim + act_dim, *hidden, 1], rng)


def q_values(critic: MLP, obs, act):
    return critic.forward(np.concatenate([obs, act], axis=1))[:, 0]


def _min_q_and_action_grad(critics, obs, act, upstream_per_row):
    """Per-sample min over critics and d(upstream . minQ)/d action.

    upstream_per_row (B,) scales each sample's contribution; the gradient
    flows only through the critic attaining the minimum.
    """
    x = np.concatenate([obs, act], axis=1)
    qs, caches = [], []
    for c in critics:
        q, cache = c.forward_cached(x)
        qs.append(q[:, 0])
        caches.append(cache)
    qs = np.stack(qs, axis=0)  # (n_critics, B)
    which = np.argmin(qs, axis=0)
    qmin = qs[which, np.arange(qs.shape[1])]
    g_act = np.zeros_like(act)
    for k, (c, cache) in enumerate(zip(critics, caches)):
        mask = (which == k).astype(float) * upstream_per_row
        if not mask.any():
            continue
        _, gx = c.backward(cache, mask[:, None], need_input_grad=True)
        g_act += gx[:, obs.shape[1] :]
    return qmin, g_act


def sac_actor_objective(actor: GaussianActor, critics, obs, eps, alpha):
    """Loss mean(alpha * log pi - min Q) on a reparameterized sample with
    fixed noise eps; returns (loss, parameter gradient).

    At alpha = 0 the entropy term contributes exactly zero.
    """
    B = obs.shape[0]
    out, cache = actor.net.forward_cached(obs)
    mu, log_std, ls_mask = actor._heads(out)
    sigma = np.exp(log_std)
    x = mu + sigma * eps
    y = np.tanh(x)
    a = actor.center + actor.half * y
    logp = actor._log_prob(eps, log_std, x)

    qmin, g_act = _min_q_and_action_grad(critics, obs, a, np.full(B, -1.0 / B))
    loss = float(np.mean(alpha * logp - qmin))

    xc_mask = (np.abs(x) < PRE_TANH_CLIP).astype(float)
    dlogp_dx = 2.0 * np.tanh(np.clip(x, -PRE_TANH_CLIP, PRE_TANH_CLIP)) * xc_mask
    dloss_dx = (alpha / B) * dlogp_dx + g_act * actor.half * (1.0 - y**2)
    dloss_dmu = dloss_dx
    dloss_dls = (dloss_dx * sigma * eps - alpha / B) * ls_mask
    grad_out = np.concatenate([dloss_dmu, dloss_dls], axis=1)
    grad, _ = actor.net.backward(cache, grad_out)
    return loss, grad


def td3_actor_objective(actor: DeterministicActor, critic: MLP, obs):
    """Loss -mean Q1(s, pi(s)); returns (loss, parameter gradient)."""
    B = obs.shape[0]
    out, cache = actor.net.forward_cached(obs)
    y = np.tanh(out)
    a = actor.center + actor.half * y
    x = np.concatenate([obs, a], axis=1)
    q, ccache = critic.forward_cached(x)
    loss = -float(np.mean(q[:, 0]))
    _, gx = critic.backward(ccache, np.full((B, 1), -1.0 / B), need_input_grad=True)
    g_act = gx[:, obs.shape[1] :]
    grad, _ = actor.net.backward(cache, g_act * actor.half * (1.0 - y**2))
    return loss, grad


def sac_target(target_critics, actor: GaussianActor, batch, gamma, alpha, rng):
    """Entropy-regularized bootstrap target with a fresh next-state sample."""
    eps = rng.standard_normal((batch["next_obs"].shape[0], actor.act_dim))
    a2, logp2 = actor.sample(batch["next_obs"], eps)
    q2 = np.minimum(
        q_values(target_critics[0], batch["next_obs"], a2),
        q_values(target_critics[1], batch["next_obs"], a2),
    )
    return batch["rew"] + gamma * (1.0 - batch["done"]) * (q2 - alpha * logp2)


def td3_target(target_critics, target_actor: DeterministicActor, batch, gamma,
               smoothing, noise_std, noise_clip, rng):
    """Twin-critic bootstrap target, optionally with clipped-Gaussian
    smoothing noise on the target action (re-clamped to the action range).

    With smoothing off, or noise_std = 0, the target is exactly the
    unsmoothed y = r + gamma * min Q'(s', pi'(s'))."""
    a2 = target_actor.mean_action(batch["next_obs"])
    if smoothing and noise_std > 0:
        eps = np.clip(
            rng.normal(0.0, noise_std, size=a2.shape), -noise_clip, noise_clip
        )
        a2 = np.clip(a2 + eps, target_actor.low, target_actor.high)
    q2 = np.minimum(
        q_values(target_critics[0], batch["next_obs"], a2),
        q_values(target_critics[1], batch["next_obs"], a2),
    )
    return batch["rew"] + gamma * (1.0 - batch["done"]) * q2


def critic_update(critic: MLP, opt: Adam, obs, act, y):
    """One squared-error regression step toward targets y; returns the loss."""
    x = np.concatenate([obs, act], axis=1)
    q, cache = critic.forward_cached(x)
    err = q[:, 0] - y
    loss = float(np.mean(err**2))
    grad, _ = critic.backward(cache, (2.0 * err / err.size)[:, None])
    apply_gradient(critic, opt, grad)
    return loss


def soft_update(target: MLP, online: MLP, tau):
    """target <- tau * online + (1 - tau) * target, elementwise."""
    if target.sizes != online.sizes:
        raise ShapeError(f"layout mismatch: {target.sizes} vs {online.sizes}")
    for l in range(len(target.weights)):
        target.weights[l] = tau * online.weights[l] + (1 - tau) * target.weights[l]
        target.biases[l] = tau * online.biases[l] + (1 - tau) * target.biases[l]


# ---------------------------------------------------------------------------
# Tasks


class QuadraticBandit:
    """Single-state one-step task with reward -a^2; optimum at a = 0."""

    obs_dim = 1
    act_dim = 1

    def __init__(self, low=-2.0, high=2.0):
        self.low = np.array([float(low)])
        self.high = np.array([float(high)])

    def reset(self, rng):
        return np.zeros(1)

    def step(self, a):
        return np.zeros(1), float(-(a[0] ** 2)), True

    def clone(self):
        return QuadraticBandit(self.low[0], self.high[0])

    def eval_episode(self, act_fn, seed):
        a = act_fn(np.zeros(1))
        r = float(-(a[0] ** 2))
        return r, -r


class InventoryTask:
    """The inventory MDP as an RL task: flat observations, bounded actions,
    shaped reward delivered at episode end (or per period, for ablation)."""

    def __init__(self, env, scenario, reward_scale, reward_mode="terminal"):
        if reward_mode not in ("terminal", "per_period"):
            raise ConfigurationError(f"unknown reward_mode {reward_mode!r}")
        self.env = env
        self.scenario = scenario
        self.k = float(reward_scale)
        self.reward_mode = reward_mode
        p = env.params
        self.dims = (p.products, p.stores, p.depots)
        self.obs_dim = p.products * p.depots + p.products * p.stores + 1
        self.act_dim = p.products * p.stores * p.depots
        # per-flow cap: twice the series' peak mean demand
        peak = 2.0 * scenario.mean.max(axis=2)  # (P, R)
        self.low = np.zeros(self.act_dim)
        self.high = np.repeat(peak[:, :, None], p.depots, axis=2).ravel()
        self.qscale = max(float(env.initial_depot.max()), 1.0)
        self._state = None
        self._rng = None
        self._cost = 0.0
        self.last_episode_cost = None

    def _obs(self, state):
        p = self.env.params
        return np.concatenate(
            [
                state.depot_stock.ravel() / self.qscale,
                state.store_stock.ravel() / self.qscale,
                [state.period / p.horizon],
            ]
        )

    def reset(self, rng):
        self._rng = rng
        self._state = self.env.reset()
        self._cost = 0.0
        return self._obs(self._state)

    def step(self, a_env):
        p = self.env.params
        state = self._state
        action = project_action(np.asarray(a_env).reshape(self.dims), state)
        u = demand_mod.sample_period(self.scenario, state.period, self._rng)
        next_state, cost = env_step(state, action, u, p)
        self._cost += p.discount**state.period * cost
        done = next_state.period >= p.horizon
        reward = 0.0
        if self.reward_mode == "per_period":
            reward = -cost / self.k
        if done:
            term = terminal_cost(next_state, p)
            self._cost += p.discount**p.horizon * term
            self.last_episode_cost = self._cost
            if self.reward_mode == "per_period":
                reward += -term / self.k
            else:
                reward = self.k / self._cost if self._cost > 0 else 0.0
        self._state = next_state
        return self._obs(next_state), reward, done

    def clone(self):
        return InventoryTask(self.env, self.scenario, self.k, self.reward_mode)

    def eval_episode(self, act_fn, seed):
        rng = np.random.default_rng(seed)
        obs = self.reset(rng)
        total_r = 0.0
        done = False
        while not done:
            obs, r, done = self.step(act_fn(obs))
            total_r += r
        return total_r, self.last_episode_cost

    def policy_from(self, act_fn):
        """Adapt a flat-action network policy to the run_episode interface."""
        dims, obs = self.dims, self._obs

        class _Wrapped:
            def __call__(self, state):
                return np.asarray(act_fn(obs(state))).reshape(dims)

        return _Wrapped()


# ---------------------------------------------------------------------------
# Training loop


@dataclass
class TrainResult:
    algorithm: str
    actor: object
    critics: tuple
    log: list = field(default_factory=list)

    def write_log(self, path):
        with open(path, "w") as fh:
            fh.write("step,eval_cost,eval_return,actor_loss,critic_loss,entropy\n")
            for row in self.log:
                fh.write(
                    f"{row['step']},{row['eval_cost']:.10g},{row['eval_return']:.10g},"
                    f"{row['actor_loss']:.10g},{row['critic_loss']:.10g},"
                    f"{row['entropy']:.10g}\n"
                )


def _batch_summary(batch):
    return {
        k: (float(np.min(v)), float(np.max(v)), float(np.mean(v)))
        for k, v in batch.items()
    }


def _evaluate(task, actor, n_episodes, master_seed, tag):
    rets, costs = [], []
    for i in range(n_episodes):
        r, c = task.eval_episode(actor.mean_action, stream_seed(master_seed, f"{tag}-{i}"))
        rets.append(r)
        costs.append(c if c is not None else np.nan)
    return float(np.mean(rets)), float(np.mean(costs))


def train(task, algorithm, steps, config: AgentConfig, seed) -> TrainResult:
    """Run the off-policy training loop; deterministic given the seed."""
    if algorithm not in ALGORITHMS:
        raise ConfigurationError(f"unknown algorithm {algorithm!r}; expected {ALGORITHMS}")
    stochastic = algorithm.startswith("sac")
    alpha = 0.0 if algorithm == "sac-det" else config.alpha
    smoothing = algorithm != "td3-nosmooth"

    init_rng = stream(seed, "init")
    explore_rng = stream(seed, "explore")
    replay_rng = stream(seed, "replay")
    target_rng = stream(seed, "target")
    episode_rng = stream(seed, "episode")

    if stochastic:
        actor = GaussianActor(task.obs_dim, task.act_dim, config.hidden, task.low,
                              task.high, init_rng)
    else:
        actor = DeterministicActor(task.obs_dim, task.act_dim, config.hidden, task.low,
                                   task.high, init_rng)
    c1 = make_critic(task.obs_dim, task.act_dim, config.hidden, init_rng)
    c2 = make_critic(task.obs_dim, task.act_dim, config.hidden, init_rng)
    t1, t2 = c1.copy(), c2.copy()
    target_actor = None
    if not stochastic:
        target_actor = DeterministicActor(task.obs_dim, task.act_dim, config.hidden,
                                          task.low, task.high)
        target_actor.net.set_params(actor.net.get_params())

    a_opt = Adam(actor.net.num_params, lr=config.lr)
    c1_opt = Adam(c1.num_params, lr=config.lr)
    c2_opt = Adam(c2.num_params, lr=config.lr)

    buffer = ReplayBuffer(config.buffer_capacity, task.obs_dim, task.act_dim)
    result = TrainResult(algorithm=algorithm, actor=actor, critics=(c1, c2))
    eval_task = task.clone()  # evaluation must not disturb the live episode

    obs = task.reset(episode_rng)
    n_updates = 0
    last_actor_loss = np.nan
    last_critic_loss = np.nan
    last_entropy = np.nan

    for step_i in range(steps):
        if step_i < config.start_steps:
            a_env = explore_rng.uniform(task.low, task.high)
        elif stochastic:
            eps = explore_rng.standard_normal(task.act_dim)
            a_env = actor.sample(obs, eps)[0][0]
        else:
            noise = explore_rng.normal(0.0, config.expl_noise * actor.half)
            a_env = np.clip(actor.mean_action(obs) + noise, task.low, task.high)

        next_obs, reward, done = task.step(a_env)
        buffer.add(obs, a_env, reward, next_obs, done)
        obs = task.reset(episode_rng) if done else next_obs

        if buffer.size >= config.batch_size and (step_i + 1) % config.update_every == 0:
            for _ in range(config.updates_per_step):
                batch = buffer.sample(replay_rng, config.batch_size)
                if stochastic:
                    y = sac_target((t1, t2), actor, batch, config.gamma, alpha,
                                   target_rng)
                else:
                    y = td3_target((t1, t2), target_actor, batch, config.gamma,
                                   smoothing, config.noise_std, config.noise_clip,
                                   target_rng)
                l1 = critic_update(c1, c1_opt, batch["obs"], batch["act"], y)
                l2 = critic_update(c2, c2_opt, batch["obs"], batch["act"], y)
                last_critic_loss = 0.5 * (l1 + l2)
                n_updates += 1
                do_actor = stochastic or (n_updates % config.policy_delay == 0)
                if do_actor:
                    if stochastic:
                        eps = target_rng.standard_normal(
                            (config.batch_size, task.act_dim)
                        )
                        aloss, agrad = sac_actor_objective(actor, (c1, c2),
                                                           batch["obs"], eps, alpha)
                        _, logp = actor.sample(batch["obs"], eps)
                        last_entropy = float(-np.mean(logp))
                    else:
                        aloss, agrad = td3_actor_objective(actor, c1, batch["obs"])
                    apply_gradient(actor.net, a_opt, agrad)
                    last_actor_loss = aloss
                    soft_update(t1, c1, config.tau)
                    soft_update(t2, c2, config.tau)
                    if target_actor is not None:
                        soft_update(target_actor.net, actor.net, config.tau)
                if not (np.isfinite(last_critic_loss) and
                        (np.isnan(last_actor_loss) or np.isfinite(last_actor_loss))):
                    raise TrainingDiverged(
                        f"non-finite loss at step {step_i}: actor={last_actor_loss}, "
                        f"critic={last_critic_loss}; batch={_batch_summary(batch)}"
                    )

        if (step_i + 1) % config.eval_interval == 0 or step_i == steps - 1:
            ret, cost = _evaluate(eval_task, actor, config.eval_episodes, seed,
                                  f"eval-{step_i + 1}")
            result.log.append(
                dict(step=step_i + 1, eval_cost=cost, eval_return=ret,
                     actor_loss=last_actor_loss, critic_loss=last_critic_loss,
                     entropy=last_entropy)
            )
    return result
