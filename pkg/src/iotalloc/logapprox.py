"""Logarithmic lower bound on the Shannon rate.

For any z' > 0, log2(1+z) >= alpha(z')*log2(z) + beta(z') with equality at
z = z', where alpha = z'/(1+z') and beta = log2(1+z') - alpha*log2(z').
Freezing (alpha, beta) at the current operating point turns the throughput
objective into a concave function of log-powers; refreshing the factors and
re-solving yields a monotonically improving sequence.
"""

from dataclasses import dataclass

import numpy as np

GAMMA_GUARD = 1e-12


@dataclass
class LogFactors:
    """Per-device bound coefficients frozen at some operating point."""

    alpha: np.ndarray
    beta: np.ndarray


def log_factors(gamma):
    """Bound coefficients at the expansion point gamma (> 0 required)."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0):
        raise ValueError("log factors require gamma > 0")
    alpha = gamma / (1.0 + gamma)
    beta = np.log2(1.0 + gamma) - alpha * np.log2(gamma)
    return alpha, beta


def safe_log_factors(gamma, guard=GAMMA_GUARD):
    """Vectorized factors with a floor for vanishing SINR: devices below the
    guard get alpha = guard and beta = log2(1+gamma), keeping both finite."""
    gamma = np.asarray(gamma, dtype=float)
    tiny = gamma < guard
    g = np.where(tiny, 1.0, gamma)  # placeholder value, masked below
    alpha = np.where(tiny, guard, g / (1.0 + g))
    beta = np.where(
        tiny,
        np.log2(1.0 + np.maximum(gamma, 0.0)),
        np.log2(1.0 + g) - alpha * np.log2(g),
    )
    return LogFactors(alpha=alpha, beta=beta)


def lower_bound_rate(gamma, factors: LogFactors):
    """Evaluate the frozen bound alpha*log2(gamma) + beta at the SINR gamma."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0):
        raise ValueError("bound evaluation requires gamma > 0")
    return factors.alpha * np.log2(gamma) + factors.beta


def maximize_unconstrained_throughput(assoc, chan, sigma2, p_init, p_max, eps1=1e-4):
    """Total-throughput maximization under per-AP budgets only.

    This is the pinned-set solver with an empty pinned set: fixed-point
    updates of every device plus dual ascent on the budget multipliers,
    wrapped in the factor-refresh loop.
    """
    from .difpa import solve_dif_pa

    result = solve_dif_pa(
        assoc,
        chan,
        sigma2,
        demand=None,
        q_set=np.array([], dtype=np.int64),
        p_init=p_init,
        p_max=p_max,
        eps1=eps1,
    )
    return result.power
