"""Cooperative spectrum sensing with randomly interrupted reporting.

Library layout:

- ``model``        configuration types, index mapping, schedule probability algebra
- ``moments``      first/second-order statistics of the stacked local summaries
- ``compensator``  MMSE report compensation and estimate statistics
- ``detection``    fusion statistics, CFAR thresholds, detection probabilities
- ``optimize``     interruption-schedule optimizers (KKT route, scenario tree,
  deflection-criterion SDP sweep, embedded SDP solver, brute-force oracles)
- ``sim``          seeded Monte Carlo engine and empirical curves
- ``cli``          experiment presets and CSV/JSON emission
"""

from .model import (
    BernoulliSchedule,
    NetworkConfig,
    NodeChannel,
    PuSignalModel,
    Realization,
    enumerate_realizations,
    flat_index,
    realization_mass,
    theta_cov,
    unflatten,
)

__version__ = "0.1.0"

__all__ = [
    "BernoulliSchedule",
    "NetworkConfig",
    "NodeChannel",
    "PuSignalModel",
    "Realization",
    "enumerate_realizations",
    "flat_index",
    "realization_mass",
    "theta_cov",
    "unflatten",
    "__version__",
]
