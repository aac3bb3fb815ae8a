"""Core configuration types and index/probability algebra.

A fusion center collects energy-detector summaries from K sensing nodes.
Each node's report may be interrupted (node silent) according to an
independent Bernoulli switch, and the fusion center works on a window
covering the current decision interval plus L past intervals.  Stacked
quantities over that window live in R^n with n = K*(L+1), indexed by
(node k, lag l) through the flat map implemented here.

Public indices are 1-based (k in 1..K, l in 0..L, flat i in 1..n) to match
the conventions used throughout the analytic modules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

__all__ = [
    "NetworkConfig",
    "NodeChannel",
    "PuSignalModel",
    "BernoulliSchedule",
    "Realization",
    "flat_index",
    "unflatten",
    "realization_mass",
    "theta_autocorr",
    "theta_cov",
    "enumerate_realizations",
]

# Switch to log-space mass products beyond this window size to avoid underflow.
_LOG_MASS_THRESHOLD = 30


@dataclass(frozen=True)
class NetworkConfig:
    """Top-level network and detector parameters.

    Attributes:
        K: number of sensing nodes (>= 1).
        N: energy-detector samples per decision interval (>= 1).
        L: compensator memory depth in past decision intervals (>= 0).
        sigma_z2: reporting-channel noise power (> 0).
        prior_h1: prior probability of the occupied-channel hypothesis.
        alpha: target false-alarm probability for CFAR thresholding.
        eta: power-efficiency level in [0, 1]; the schedule budget is
            sum(p) <= (1 - eta) * n.
    """

    K: int
    N: int
    L: int = 0
    sigma_z2: float = 1.0
    prior_h1: float = 0.5
    alpha: float = 0.01
    eta: float = 0.0

    def __post_init__(self) -> None:
        if self.K < 1 or self.N < 1 or self.L < 0:
            raise ValueError("need K >= 1, N >= 1, L >= 0")
        if not self.sigma_z2 > 0:
            raise ValueError("sigma_z2 must be > 0")
        if not 0.0 < self.prior_h1 < 1.0:
            raise ValueError("prior_h1 must lie in (0, 1)")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")

    @property
    def n(self) -> int:
        """Stacked window dimension K * (L + 1)."""
        return self.K * (self.L + 1)

    @property
    def prior_h0(self) -> float:
        return 1.0 - self.prior_h1


@dataclass(frozen=True)
class NodeChannel:
    """Listening-channel statistics for one sensing node.

    Attributes:
        gain_mean: E[g_k], mean channel power gain.
        gain_var: Var[g_k]; 0 selects the fixed-gain (AWGN) mode.
        noise_var: receiver noise power sigma_nu^2.
    """

    gain_mean: float
    gain_var: float = 0.0
    noise_var: float = 1.0

    def __post_init__(self) -> None:
        if self.gain_mean < 0 or self.gain_var < 0:
            raise ValueError("gain statistics must be nonnegative")
        if not self.noise_var > 0:
            raise ValueError("noise_var must be > 0")

    @classmethod
    def from_snr_db(
        cls, snr_db: float, noise_var: float = 1.0, sig_power: float = 1.0,
        gain_var: float = 0.0,
    ) -> "NodeChannel":
        """Build a channel whose mean gain realizes the given sensing SNR."""
        gain_mean = 10.0 ** (snr_db / 10.0) * noise_var / sig_power
        return cls(gain_mean=gain_mean, gain_var=gain_var, noise_var=noise_var)

    @property
    def snr(self) -> float:
        """Mean-gain SNR for unit signal power (linear scale)."""
        return self.gain_mean / self.noise_var


@dataclass(frozen=True)
class PuSignalModel:
    """Primary-user signal statistics.

    The default waveform is a zero-mean circularly-symmetric Gaussian process
    with E[|s|^2] = ``power``, temporally shaped by a moving-average filter
    with ``ma_window`` taps [1, w, w, ..., w] (w = ``ma_weight``).  For that
    family the squared-magnitude autocorrelation has the closed form
    R_{|s|^2}(tau) = power^2 * (1 + |rho_s(tau)|^2), where rho_s is the
    normalized amplitude autocorrelation of the filtered process.

    A custom ``sq_autocorr`` callable may override the closed form for the
    analytic modules; simulation requires a tap-backed model.
    """

    power: float
    ma_window: int = 1
    ma_weight: float = 0.0
    sq_autocorr: Optional[Callable[[int], float]] = None

    def __post_init__(self) -> None:
        if self.power < 0:
            raise ValueError("power must be >= 0")
        if self.ma_window < 1:
            raise ValueError("ma_window must be >= 1")
        if not 0.0 <= self.ma_weight <= 1.0:
            raise ValueError("ma_weight must lie in [0, 1]")

    @classmethod
    def white(cls, power: float) -> "PuSignalModel":
        return cls(power=power)

    def taps(self) -> np.ndarray:
        """Moving-average taps scaled so the output power is ``power``."""
        t = np.ones(self.ma_window)
        if self.ma_window > 1:
            t[1:] = self.ma_weight
        return t * math.sqrt(self.power / float(t @ t)) if self.power > 0 else t * 0.0

    def amp_autocorr(self, tau: int) -> float:
        """Normalized amplitude autocorrelation rho_s(tau) of the MA process."""
        t = np.ones(self.ma_window)
        if self.ma_window > 1:
            t[1:] = self.ma_weight
        a = abs(int(tau))
        if a >= self.ma_window:
            return 0.0
        return float(t[a:] @ t[: self.ma_window - a]) / float(t @ t)

    def sq_corr(self, tau: int) -> float:
        """R_{|s|^2}(tau); custom callable wins over the Gaussian closed form."""
        if self.sq_autocorr is not None:
            return float(self.sq_autocorr(int(tau)))
        rho = self.amp_autocorr(tau)
        return self.power ** 2 * (1.0 + rho * rho)


@dataclass(frozen=True)
class BernoulliSchedule:
    """Per-flat-index report probabilities p, Pr{theta_i = 1} = p_i."""

    p: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.p, dtype=float)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("p must be a nonempty vector")
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise ValueError("schedule entries must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "p", arr)

    @classmethod
    def uniform(cls, p0: float, n: int) -> "BernoulliSchedule":
        return cls(np.full(n, float(p0)))

    @property
    def n(self) -> int:
        return self.p.size

    def budget_ok(self, eta: float, atol: float = 1e-9) -> bool:
        """Check the power-efficiency budget 1'p <= (1 - eta) * n."""
        return float(self.p.sum()) <= (1.0 - eta) * self.n + atol


@dataclass(frozen=True)
class Realization:
    """One draw b of the interruption vector theta over the window."""

    b: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.b)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("b must be a nonempty vector")
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError("realization entries must be 0 or 1")
        arr = arr.astype(np.int8)
        arr.setflags(write=False)
        object.__setattr__(self, "b", arr)

    @classmethod
    def ones(cls, n: int) -> "Realization":
        return cls(np.ones(n, dtype=np.int8))

    @classmethod
    def zeros(cls, n: int) -> "Realization":
        return cls(np.zeros(n, dtype=np.int8))

    @property
    def n(self) -> int:
        return self.b.size


def flat_index(k: int, l: int, cfg: NetworkConfig) -> int:
    """Map (node k in 1..K, lag l in 0..L) to the flat index i in 1..n.

    The stacked window orders entries node-major, lag-minor:
    [u_1(m), u_1(m-1), ..., u_1(m-L), u_2(m), ...].
    """
    if not 1 <= k <= cfg.K:
        raise IndexError(f"node index k={k} outside 1..{cfg.K}")
    if not 0 <= l <= cfg.L:
        raise IndexError(f"lag l={l} outside 0..{cfg.L}")
    return (k - 1) * (cfg.L + 1) + l + 1


def unflatten(i: int, cfg: NetworkConfig) -> tuple[int, int]:
    """Inverse of flat_index: k = ceil(i/(L+1)), l = (i + L) mod (L + 1)."""
    if not 1 <= i <= cfg.n:
        raise IndexError(f"flat index i={i} outside 1..{cfg.n}")
    width = cfg.L + 1
    k = -(-i // width)            # ceil(i / (L+1))
    l = (i + cfg.L) % width
    return k, l


def realization_mass(sched: BernoulliSchedule, b: Realization) -> float:
    """Probability of the realization b under the schedule.

    Pr{theta = b} = prod_i p_i^{b_i} (1 - p_i)^{1 - b_i}.  For windows larger
    than 30 entries the product is accumulated in log space.
    """
    if sched.n != b.n:
        raise ValueError(f"length mismatch: schedule {sched.n}, realization {b.n}")
    p = sched.p
    on = b.b.astype(bool)
    factors = np.where(on, p, 1.0 - p)
    if np.any(factors == 0.0):
        return 0.0
    if sched.n <= _LOG_MASS_THRESHOLD:
        return float(np.prod(factors))
    return float(np.exp(np.sum(np.log(factors))))


def realization_masses(sched: BernoulliSchedule, B: np.ndarray) -> np.ndarray:
    """Vectorized realization_mass over a (m, n) stack of 0/1 rows."""
    B = np.asarray(B)
    if B.ndim != 2 or B.shape[1] != sched.n:
        raise ValueError("B must be (m, n) with n matching the schedule")
    p = sched.p
    factors = np.where(B.astype(bool), p, 1.0 - p)
    if sched.n <= _LOG_MASS_THRESHOLD:
        return np.prod(factors, axis=1)
    with np.errstate(divide="ignore"):
        logs = np.where(factors > 0.0, np.log(np.maximum(factors, 1e-300)), -np.inf)
    return np.exp(np.sum(logs, axis=1))


def theta_autocorr(sched: BernoulliSchedule, cfg: NetworkConfig,
                   k: int, n_: int, l: int, r: int) -> float:
    """E[theta_k(m-l) theta_n'(m-r)]: p_i on the diagonal, p_i p_j off it."""
    i = flat_index(k, l, cfg) - 1
    j = flat_index(n_, r, cfg) - 1
    if i == j:
        return float(sched.p[i])
    return float(sched.p[i] * sched.p[j])


def theta_cov(sched: BernoulliSchedule, cfg: NetworkConfig,
              k: int, n_: int, l: int, r: int) -> float:
    """Covariance of the interruption switches: delta_{k,n'} delta_{l,r} p(1-p)."""
    i = flat_index(k, l, cfg) - 1
    j = flat_index(n_, r, cfg) - 1
    if i != j:
        return 0.0
    p = float(sched.p[i])
    return p * (1.0 - p)


def enumerate_realizations(n: int, limit: int = 20) -> Iterator[Realization]:
    """Yield all 2^n realizations (lowest flat index = least-significant bit)."""
    if n > limit:
        raise ValueError(f"refusing to enumerate 2^{n} realizations (limit n <= {limit})")
    for code in range(1 << n):
        bits = (code >> np.arange(n)) & 1
        yield Realization(bits.astype(np.int8))


def realization_table(n: int, limit: int = 20) -> np.ndarray:
    """All 2^n realizations as one (2^n, n) 0/1 array (same order as the iterator)."""
    if n > limit:
        raise ValueError(f"refusing to enumerate 2^{n} realizations (limit n <= {limit})")
    codes = np.arange(1 << n, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n)) & 1).astype(np.int8)
