"""Minimum-power solve for a set of devices with hard SINR targets.

At the optimum of the power-minimization problem every target binds, so the
problem reduces to the linear system (I - F) p = u with the nonnegative
coupling matrix F and noise vector u of classical power control. The targets
are jointly attainable (at unbounded power) iff the spectral radius of F is
below one; the solution is then the component-wise minimal power vector.
Per-AP budgets are checked separately.
"""

from dataclasses import dataclass

import numpy as np

from .errors import SingularInstanceError
from .metrics import Association, Demand, ap_loads, coupling_matrix, direct_gains, effective_noise
from .network import ChannelMatrix

SPECTRAL_ITERS = 200
SPECTRAL_TOL = 1e-10


@dataclass
class TargetSystem:
    """Equality-SINR linear system restricted to the active devices."""

    active: np.ndarray
    gamma_thr: np.ndarray
    F: np.ndarray
    u: np.ndarray


def build_target_system(active, assoc: Association, chan: ChannelMatrix, sigma2, demand: Demand) -> TargetSystem:
    """Assemble F and u such that (I - F) p = u meets every raw-threshold
    SINR target with equality for the active devices."""
    active = np.asarray(active, dtype=np.int64)
    if active.size == 0:
        raise ValueError("active set must be nonempty")
    serving = assoc.serving
    gamma = demand.gamma_thr[active]

    direct = direct_gains(serving, chan)[active]
    if np.any(direct <= 0):
        raise SingularInstanceError("zero direct gain for an active device")

    cross = coupling_matrix(serving, chan)[np.ix_(active, active)]  # [j, i] = AP(j) -> device i
    noise = effective_noise(serving, chan, sigma2)[active]

    F = gamma[:, None] * cross.T / direct[:, None]
    np.fill_diagonal(F, 0.0)
    u = gamma * noise / direct
    return TargetSystem(active=active, gamma_thr=gamma, F=F, u=u)


def spectral_radius(F, iters=SPECTRAL_ITERS, tol=SPECTRAL_TOL):
    """Perron root of the nonnegative matrix F via power iteration."""
    F = np.asarray(F, dtype=float)
    n = F.shape[0]
    x = np.ones(n)
    lam = 0.0
    for _ in range(iters):
        y = F @ x
        top = y.max()
        if top <= 0.0:
            return 0.0
        lam_new = top
        x = y / top
        if abs(lam_new - lam) <= tol * max(1.0, lam_new):
            return float(lam_new)
        lam = lam_new
    return float(lam)


def solve_min_power(sys: TargetSystem):
    """Component-wise minimal power meeting every target, or None when the
    targets are jointly unattainable (spectral radius >= 1)."""
    if spectral_radius(sys.F) >= 1.0:
        return None
    p = np.linalg.solve(np.eye(sys.F.shape[0]) - sys.F, sys.u)
    return p


def check_budgets(p, assoc: Association, p_max, active=None):
    """True iff the per-AP sums of the active devices' powers fit the budgets."""
    serving = assoc.serving
    p = np.asarray(p, dtype=float)
    if active is not None:
        active = np.asarray(active, dtype=np.int64)
        serving = serving[active]
        if p.size != active.size:
            p = p[active]
    loads = ap_loads(serving, p, assoc.num_aps)
    return bool(np.all(loads <= np.asarray(p_max, dtype=float)))
