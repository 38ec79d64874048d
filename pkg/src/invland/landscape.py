"""2D slices of an actor's loss surface around a trained parameter point:
f(alpha, beta) = J(theta* + alpha w1 + beta w2) with the random directions
rescaled block-by-block to the norms of the center parameters.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .demand import ConfigurationError
from .nets import MLP, ParamVector
from .agents import GaussianActor, q_values
from .seeding import stream


@dataclass
class Direction:
    """A perturbation direction matching a parameter vector's layout.

    scales records the per-block rescaling factor applied; zero_blocks lists
    blocks that could not be normalized (zero-norm center block) and were
    zeroed instead.
    """

    values: np.ndarray
    layout: tuple
    scales: dict = field(default_factory=dict)
    zero_blocks: tuple = ()


def sample_direction(center: ParamVector, rng) -> Direction:
    """i.i.d. standard normal entries rescaled so each weight/bias block has
    the same norm as the corresponding block of the center parameters."""
    values = rng.standard_normal(center.values.size)
    scales = {}
    zeros = []
    for blk in center.layout:
        sl = slice(blk.offset, blk.offset + blk.length)
        theta_norm = np.linalg.norm(center.values[sl])
        d_norm = np.linalg.norm(values[sl])
        key = (blk.layer, blk.kind)
        if theta_norm == 0.0:
            values[sl] = 0.0
            scales[key] = 0.0
            zeros.append(key)
            continue
        scales[key] = theta_norm / d_norm
        values[sl] *= scales[key]
    if zeros:
        warnings.warn(f"zero-norm center blocks zeroed in direction: {zeros}", stacklevel=2)
    return Direction(values=values, layout=center.layout, scales=scales,
                     zero_blocks=tuple(zeros))


def collect_eval_batch(act_fn, task, episodes, target_length, seed) -> np.ndarray:
    """Roll out the policy, pool visited observations, subsample uniformly
    without replacement to exactly target_length (with replacement, flagged,
    if the pool is smaller)."""
    if target_length < 1:
        raise ConfigurationError("target_length must be >= 1")
    rollout_rng = stream(seed, "rollout")
    pool = []
    for _ in range(episodes):
        obs = task.reset(rollout_rng)
        pool.append(obs)
        done = False
        while not done:
            obs, _, done = task.step(act_fn(obs))
            if not done:
                pool.append(obs)
    if not pool:
        raise ConfigurationError("rollouts produced no states")
    pool = np.asarray(pool)
    pick_rng = stream(seed, "subsample")
    replace = len(pool) < target_length
    if replace:
        warnings.warn(
            f"state pool ({len(pool)}) smaller than target ({target_length}); "
            "sampling with replacement",
            stacklevel=2,
        )
    idx = pick_rng.choice(len(pool), size=target_length, replace=replace)
    return pool[np.sort(idx)]


@dataclass
class LandscapeGrid:
    """Loss values over an odd R x R lattice spanning [-1, 1]^2."""

    alphas: np.ndarray
    betas: np.ndarray
    loss: np.ndarray
    center_loss: float
    metadata: dict = field(default_factory=dict)

    def min_cell(self):
        flat = np.nan_to_num(self.loss, nan=np.inf)
        i, j = np.unravel_index(np.argmin(flat), self.loss.shape)
        return self.alphas[i], self.betas[j], self.loss[i, j]


def evaluate_grid(actor_net: MLP, loss_fn, directions, resolution) -> LandscapeGrid:
    """Evaluate loss_fn at theta* + alpha w1 + beta w2 over the lattice.

    Each cell uses a private network copy, so cells are independent pure
    evaluations; a non-finite loss is recorded as nan rather than aborting.
    """
    if resolution < 3 or resolution % 2 == 0:
        raise ConfigurationError("resolution must be odd and >= 3")
    w1, w2 = directions
    center = actor_net.get_params()
    if w1.values.size != center.values.size or w2.values.size != center.values.size:
        raise ConfigurationError("direction length does not match parameter count")
    alphas = np.linspace(-1.0, 1.0, resolution)
    betas = np.linspace(-1.0, 1.0, resolution)
    loss = np.empty((resolution, resolution))
    probe = actor_net.copy()
    for i, a in enumerate(alphas):
        for j, b in enumerate(betas):
            probe.set_params(
                ParamVector(center.values + a * w1.values + b * w2.values, center.layout)
            )
            try:
                val = float(loss_fn(probe))
            except FloatingPointError:
                val = np.nan
            loss[i, j] = val if np.isfinite(val) else np.nan
    mid = resolution // 2
    return LandscapeGrid(alphas=alphas, betas=betas, loss=loss,
                         center_loss=loss[mid, mid])


def sac_loss_fn(actor: GaussianActor, critics, batch, alpha, noise):
    """Entropy-regularized sample objective with frozen per-state noise, so
    the grid varies with parameters only."""

    def fn(net: MLP):
        shadow = GaussianActor.__new__(GaussianActor)
        shadow.__dict__.update(actor.__dict__)
        shadow.net = net
        a, logp = shadow.sample(batch, noise)
        qmin = np.minimum(q_values(critics[0], batch, a), q_values(critics[1], batch, a))
        return float(np.mean(alpha * logp - qmin))

    return fn


def td3_loss_fn(actor, critic, batch):
    """-mean Q1(s, pi(s)) with the critic frozen."""

    def fn(net: MLP):
        out = net.forward(batch)
        a = actor.center + actor.half * np.tanh(out[:, : actor.act_dim])
        return -float(np.mean(q_values(critic, batch, a)))

    return fn


def write_grid(grid: LandscapeGrid, path) -> None:
    """Delimited grid file: '#'-prefixed metadata, then alpha,beta,loss rows.

    Non-finite cells serialize as 'nan'. This is the contract consumed by
    external plotting tools."""
    with open(path, "w") as fh:
        for key in sorted(grid.metadata):
            fh.write(f"# {key}: {grid.metadata[key]}\n")
        fh.write(f"# center_loss: {grid.center_loss:.17g}\n")
        fh.write("alpha,beta,loss\n")
        for i, a in enumerate(grid.alphas):
            for j, b in enumerate(grid.betas):
                v = grid.loss[i, j]
                cell = "nan" if not np.isfinite(v) else f"{v:.17g}"
                fh.write(f"{a:.17g},{b:.17g},{cell}\n")


def read_grid(path) -> LandscapeGrid:
    meta = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                meta[key.strip()] = val.strip()
            elif line and not line.startswith("alpha"):
                a, b, v = line.split(",")
                rows.append((float(a), float(b), float(v)))
    alphas = np.unique([r[0] for r in rows])
    betas = np.unique([r[1] for r in rows])
    loss = np.full((len(alphas), len(betas)), np.nan)
    for a, b, v in rows:
        loss[np.searchsorted(alphas, a), np.searchsorted(betas, b)] = v
    center = float(meta.pop("center_loss", "nan"))
    return LandscapeGrid(alphas=alphas, betas=betas, loss=loss, center_loss=center,
                         metadata=meta)
