"""Classical ordering baselines: mean ordering and order-up-to-S.

Both act independently per (product, store); depot feasibility is enforced
afterwards by the shared action projection.
"""

import numpy as np
from scipy import stats

from .demand import ConfigurationError, DemandScenario


def _spread_over_depots(per_series, depots):
    """Split a (P, R) order evenly across depots into a (P, R, D) tensor."""
    return np.repeat(per_series[:, :, None], depots, axis=2) / depots


class MeanOrderPolicy:
    """Ships the season-average mean demand every period."""

    def __init__(self, scenario: DemandScenario, depots: int = 1):
        self.rate = scenario.mean.mean(axis=2)  # (P, R)
        self.depots = depots

    def __call__(self, state):
        return _spread_over_depots(self.rate, self.depots)


class BaseStockPolicy:
    """Order-up-to-S per series with S at the given service level.

    S = mu_hat + z(service) * sigma_hat, where mu_hat is the across-period
    mean demand and sigma_hat^2 the across-period average variance. Each
    period orders the gap between S and the prior inventory position
    I_{t-1} + a_{t-1} - u_{t-1}, floored at zero.
    """

    def __init__(self, scenario: DemandScenario, service: float = 0.95, depots: int = 1):
        if not 0 < service < 1:
            raise ConfigurationError(f"service level must be in (0, 1), got {service}")
        mu_hat = scenario.mean.mean(axis=2)
        sigma_hat = np.sqrt((scenario.std**2).mean(axis=2))
        self.level = mu_hat + stats.norm.ppf(service) * sigma_hat  # (P, R)
        self.depots = depots
        self._pos = None

    def reset(self, state):
        # first period: position is just the opening store stock
        self._pos = state.store_stock.copy()

    def __call__(self, state):
        if self._pos is None:
            self.reset(state)
        order = np.maximum(self.level - self._pos, 0.0)
        return _spread_over_depots(order, self.depots)

    def observe(self, state, action, demand):
        self._pos = state.store_stock + action.sum(axis=2) - demand


class ZeroPolicy:
    """Never ships; useful as a degenerate reference."""

    def __init__(self, products, stores, depots):
        self.shape = (products, stores, depots)

    def __call__(self, state):
        return np.zeros(self.shape)
