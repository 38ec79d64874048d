"""Correlated stochastic demand scenarios for a seasonal horizon.

Each (product, store) series has its own mean/std trajectory over the
horizon; cross-series correlation is applied within a period, periods are
independent. Negative draws are truncated to zero.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

SCENARIO_KINDS = ("decreasing", "increasing", "fashion", "stationary")


class ConfigurationError(ValueError):
    pass


def _repair_correlation(corr, clip=1e-10):
    """Return a Cholesky factor of corr, clipping eigenvalues if needed.

    Raises ConfigurationError if the matrix is not symmetric/unit-diagonal
    or cannot be made PSD.
    """
    corr = np.asarray(corr, dtype=float)
    n = corr.shape[0]
    if corr.shape != (n, n):
        raise ConfigurationError(f"correlation matrix must be square, got {corr.shape}")
    if not np.allclose(corr, corr.T, atol=1e-8):
        raise ConfigurationError("correlation matrix must be symmetric")
    if not np.allclose(np.diag(corr), 1.0, atol=1e-8):
        raise ConfigurationError("correlation matrix must have unit diagonal")
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        pass
    vals, vecs = np.linalg.eigh(corr)
    if vals.min() < -1e-4:
        raise ConfigurationError(
            f"correlation matrix is far from PSD (min eigenvalue {vals.min():.3g})"
        )
    warnings.warn(
        "correlation matrix not PSD; clipping eigenvalues at 1e-10 and renormalizing",
        stacklevel=3,
    )
    vals = np.clip(vals, clip, None)
    repaired = (vecs * vals) @ vecs.T
    d = np.sqrt(np.diag(repaired))
    repaired = repaired / np.outer(d, d)
    return np.linalg.cholesky(repaired + clip * np.eye(n))


@dataclass
class DemandScenario:
    """Per-series mean/std trajectories plus a cross-series correlation.

    mean, std have shape (products, stores, horizon); corr has shape
    (products*stores, products*stores) with series flattened product-major.
    """

    mean: np.ndarray
    std: np.ndarray
    corr: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.std = np.asarray(self.std, dtype=float)
        if self.mean.ndim != 3 or self.mean.shape != self.std.shape:
            raise ConfigurationError(
                f"mean/std must both be (products, stores, horizon); "
                f"got {self.mean.shape} and {self.std.shape}"
            )
        if np.any(self.std < 0):
            raise ConfigurationError("std entries must be >= 0")
        n = self.mean.shape[0] * self.mean.shape[1]
        self.corr = np.asarray(self.corr, dtype=float)
        if self.corr.shape != (n, n):
            raise ConfigurationError(
                f"correlation must be {n}x{n} for {n} series, got {self.corr.shape}"
            )
        self._chol = _repair_correlation(self.corr)

    @property
    def products(self) -> int:
        return self.mean.shape[0]

    @property
    def stores(self) -> int:
        return self.mean.shape[1]

    @property
    def horizon(self) -> int:
        return self.mean.shape[2]


def _profile(kind, base_mean, amplitude, horizon):
    lo, hi = base_mean - amplitude, base_mean + amplitude
    if kind == "stationary":
        return np.full(horizon, base_mean)
    if kind == "decreasing":
        return np.linspace(hi, lo, horizon)
    if kind == "increasing":
        return np.linspace(lo, hi, horizon)
    if kind == "fashion":
        # growth / maturity plateau / decline, ends at lo, peaks at hi
        n1 = horizon // 3
        n3 = horizon // 3
        n2 = horizon - n1 - n3
        rise = np.linspace(lo, hi, n1, endpoint=False)
        plateau = np.full(n2, hi)
        fall = np.linspace(hi, lo, n3 + 1)[1:] if n3 else np.empty(0)
        return np.concatenate([rise, plateau, fall])
    raise ConfigurationError(f"unknown scenario kind {kind!r}; expected one of {SCENARIO_KINDS}")


def make_scenario(kind, base_mean, amplitude, cv, horizon, products=1, stores=1,
                  corr=None) -> DemandScenario:
    """Build a scenario with identical profiles across all (product, store) series.

    std_t = cv * mean_t.  corr defaults to the identity; a scalar is expanded
    to a uniform off-diagonal correlation.
    """
    if base_mean <= 0:
        raise ConfigurationError("base_mean must be positive")
    if not 0 <= amplitude <= base_mean:
        raise ConfigurationError(
            f"amplitude must be in [0, base_mean] to keep means nonnegative "
            f"(got amplitude={amplitude}, base_mean={base_mean})"
        )
    if cv < 0:
        raise ConfigurationError("cv must be >= 0")
    if horizon < 1:
        raise ConfigurationError("horizon must be >= 1")
    mu_t = _profile(kind, float(base_mean), float(amplitude), int(horizon))
    mean = np.broadcast_to(mu_t, (products, stores, horizon)).copy()
    std = cv * mean
    n = products * stores
    if corr is None:
        corr = np.eye(n)
    elif np.isscalar(corr):
        corr = np.full((n, n), float(corr))
        np.fill_diagonal(corr, 1.0)
    return DemandScenario(mean=mean, std=std, corr=np.asarray(corr, dtype=float))


def sample_period(scenario: DemandScenario, t: int, rng: np.random.Generator) -> np.ndarray:
    """Draw one period's demand matrix u[product][store], truncated at zero."""
    if not 0 <= t < scenario.horizon:
        raise ConfigurationError(f"period {t} outside horizon {scenario.horizon}")
    n = scenario.products * scenario.stores
    z = scenario._chol @ rng.standard_normal(n)
    u = scenario.mean[:, :, t] + scenario.std[:, :, t] * z.reshape(
        scenario.products, scenario.stores
    )
    return np.maximum(u, 0.0)


def export_trajectories(scenario: DemandScenario, path) -> None:
    """Write mean/std trajectories as delimited text (one row per series-period)."""
    with open(path, "w") as fh:
        fh.write("product,store,period,mean,std\n")
        for i in range(scenario.products):
            for r in range(scenario.stores):
                for t in range(scenario.horizon):
                    fh.write(
                        f"{i},{r},{t},{scenario.mean[i, r, t]:.10g},"
                        f"{scenario.std[i, r, t]:.10g}\n"
                    )
