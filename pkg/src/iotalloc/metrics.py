"""Association/power data model and the SINR, rate and satisfaction metrics.

Rates are spectral efficiency (bits/s/Hz); the bandwidth enters only through
the noise power. A device's SINR under association ``serving`` and power
vector ``p`` is

    sinr[n] = rho^2 * g[serving[n], n] * p[n] /
              (sum_{m != n} g[serving[m], n] * p[m]
               + (1 - rho^2) * theta[serving[n], n] + sigma2)

which reduces to the perfect-CSI expression at rho = 1. Interference from
device m arrives through the channel of m's serving AP only.
"""

from dataclasses import dataclass, field

import numpy as np

from .network import ChannelMatrix


@dataclass
class Association:
    """One serving AP per device, stored as a length-N vector of AP indices."""

    serving: np.ndarray
    num_aps: int

    def __post_init__(self):
        self.serving = np.asarray(self.serving, dtype=np.int64)
        if self.serving.ndim != 1:
            raise ValueError("serving must be a 1-D vector of AP indices")
        if self.serving.size and not (
            (self.serving >= 0).all() and (self.serving < self.num_aps).all()
        ):
            raise ValueError("AP indices out of range")

    @property
    def num_devices(self):
        return self.serving.size

    @property
    def matrix(self):
        """Binary K x N association matrix (each column sums to one)."""
        m = np.zeros((self.num_aps, self.num_devices), dtype=np.int8)
        m[self.serving, np.arange(self.num_devices)] = 1
        return m

    def coalitions(self):
        """Device index sets per AP."""
        return [np.flatnonzero(self.serving == k) for k in range(self.num_aps)]

    def copy(self):
        return Association(self.serving.copy(), self.num_aps)


@dataclass
class Demand:
    """Per-device required rates plus the relative pinning slack tau.

    Satisfaction is tested against the raw threshold; satisfied devices are
    later pinned at xi = r_thr * (1 + tau) so round-off cannot drop them back
    below the requirement.
    """

    r_thr: np.ndarray
    tau: float = 0.01

    def __post_init__(self):
        self.r_thr = np.atleast_1d(np.asarray(self.r_thr, dtype=float))
        if np.any(self.r_thr <= 0):
            raise ValueError("rate thresholds must be > 0")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")

    @classmethod
    def uniform(cls, value, num_devices, tau=0.01):
        return cls(np.full(num_devices, float(value)), tau)

    @property
    def xi(self):
        """Pinned rate targets r_thr * (1 + tau)."""
        return self.r_thr * (1.0 + self.tau)

    @property
    def gamma_thr(self):
        """SINR targets equivalent to the raw rate thresholds."""
        return np.exp2(self.r_thr) - 1.0


def coupling_matrix(serving, chan: ChannelMatrix):
    """C[m, n] = gain from device m's serving AP to device n, shape (N, N)."""
    return chan.gains[serving, :]


def effective_noise(serving, chan: ChannelMatrix, sigma2):
    """Per-device noise floor including the CSI-error term."""
    n = np.arange(len(serving))
    err = 1.0 - chan.rho**2
    return sigma2 + err * chan.large_scale[serving, n]


def direct_gains(serving, chan: ChannelMatrix):
    """Signal-path power gains rho^2 * g[serving[n], n]."""
    n = np.arange(len(serving))
    return chan.rho**2 * chan.gains[serving, n]


def sinr_all(serving, p, chan: ChannelMatrix, sigma2):
    """SINR of every device; the general (possibly imperfect-CSI) expression."""
    serving = np.asarray(serving, dtype=np.int64)
    p = np.asarray(p, dtype=float)
    n = np.arange(serving.size)
    coupling = coupling_matrix(serving, chan)
    received = p @ coupling
    own = coupling[n, n] * p
    interference = received - own
    return direct_gains(serving, chan) * p / (interference + effective_noise(serving, chan, sigma2))


def sinr(assoc: Association, p, chan: ChannelMatrix, sigma2, n):
    """SINR of device n. Uses the imperfect-CSI expression when chan.rho < 1."""
    return float(sinr_all(assoc.serving, p, chan, sigma2)[n])


def imperfect_sinr(assoc: Association, p, chan: ChannelMatrix, sigma2, n):
    """SINR of device n under the degraded-CSI model (equals sinr() at rho=1)."""
    return sinr(assoc, p, chan, sigma2, n)


def rate(gamma):
    """Shannon spectral efficiency log2(1 + gamma)."""
    return np.log2(1.0 + np.asarray(gamma, dtype=float))


def rates_all(serving, p, chan: ChannelMatrix, sigma2):
    return rate(sinr_all(serving, p, chan, sigma2))


def total_throughput(rates):
    """Network sum throughput (bits/s/Hz)."""
    return float(np.sum(rates))


def satisfied_set(rates, demand: Demand):
    """Indices of devices whose rate meets the raw threshold (inclusive)."""
    rates = np.asarray(rates, dtype=float)
    return np.flatnonzero(rates >= demand.r_thr)


def ap_loads(serving, p, num_aps):
    """Power consumed per AP: sums of served devices' transmit powers."""
    return np.bincount(np.asarray(serving), weights=np.asarray(p, dtype=float), minlength=num_aps)


def budgets_ok(serving, p, p_max, num_aps, rel_tol=1e-9):
    """True iff every AP's consumed power is within its budget (inclusive)."""
    loads = ap_loads(serving, p, num_aps)
    return bool(np.all(loads <= np.asarray(p_max) * (1.0 + rel_tol)))


@dataclass
class AllocationState:
    """Bundle passed between solver stages: who serves whom, at what power,
    the resulting rates and which devices are satisfied."""

    association: Association
    power: np.ndarray
    rates: np.ndarray
    total_throughput: float
    satisfied: np.ndarray

    @classmethod
    def evaluate(cls, association: Association, p, chan: ChannelMatrix, sigma2, demand: Demand):
        """Compute rates/throughput/satisfied set from (association, power)."""
        p = np.asarray(p, dtype=float)
        r = rates_all(association.serving, p, chan, sigma2)
        return cls(
            association=association,
            power=p,
            rates=r,
            total_throughput=total_throughput(r),
            satisfied=satisfied_set(r, demand),
        )

    def device_csv_rows(self):
        """Rows (device_id, serving_ap, power_mw, rate, satisfied_flag)."""
        sat = np.zeros(self.association.num_devices, dtype=int)
        sat[self.satisfied] = 1
        return [
            (n, int(self.association.serving[n]), float(self.power[n]), float(self.rates[n]), int(sat[n]))
            for n in range(self.association.num_devices)
        ]
