"""Reference strategies and the exhaustive small-instance oracle.

Nearest-APA associates each device with the geometrically closest AP;
Equal-PA splits each AP's budget evenly over its own devices. The brute
force oracle enumerates every association and, per association, the largest
device subset whose equality-target power solve fits all budgets, giving
the exact optimum of the admission problem at small sizes.
"""

from dataclasses import dataclass
from enum import Enum
from itertools import combinations

import numpy as np

from .errors import ConfigurationError
from .metrics import Association, Demand, coupling_matrix, direct_gains, effective_noise
from .network import ChannelMatrix, Topology

BRUTE_FORCE_DEFAULT_CAP = 1_000_000


class StrategyId(str, Enum):
    """Compared methods; values double as config/CSV tokens."""

    DifPaCgApa = "dif_cg"
    DifPaNearest = "dif_nearest"
    EqualPaCgApa = "equal_cg"
    EqualPaNearest = "equal_nearest"
    ModifiedBb = "bb"
    BruteForce = "brute_force"


def nearest_apa(topology: Topology) -> Association:
    """Associate every device with its closest AP (ties to the lower index)."""
    dist = topology.distances_m()
    return Association(np.argmin(dist, axis=0), topology.num_aps)


def equal_pa(assoc: Association, p_max):
    """Even split of each AP's budget across its served devices; an AP's
    budget is exactly met whenever it serves anyone."""
    p_max = np.broadcast_to(np.asarray(p_max, dtype=float), (assoc.num_aps,))
    counts = np.bincount(assoc.serving, minlength=assoc.num_aps)
    return p_max[assoc.serving] / counts[assoc.serving]


@dataclass
class OracleResult:
    n_star: int
    admitted: np.ndarray
    serving: np.ndarray
    power: np.ndarray
    feasible_all: bool


def _batch_subset_solve(F, u, idx_mat):
    """Equality powers for every row of subset indices; NaN rows are
    singular systems."""
    n_c, s = idx_mat.shape
    Fs = F[idx_mat[:, :, None], idx_mat[:, None, :]]
    us = u[idx_mat]
    eye = np.eye(s)
    A = eye[None, :, :] - Fs
    try:
        p = np.linalg.solve(A, us)
    except np.linalg.LinAlgError:
        p = np.full((n_c, s), np.nan)
        for i in range(n_c):
            try:
                p[i] = np.linalg.solve(A[i], us[i])
            except np.linalg.LinAlgError:
                pass
    return p


def brute_force_max_satisfied(chan: ChannelMatrix, sigma2, demand: Demand, cfg, cap=BRUTE_FORCE_DEFAULT_CAP):
    """Search all K^N associations for the largest admissible device subset.

    Per association, subsets are tested in decreasing cardinality with the
    equality-power solve (a strictly positive solution certifies attainable
    targets) plus the per-AP budget test; sizes below the best count found so
    far are skipped, ties improve the minimum-total-power witness. Refuses
    when K^N exceeds the cap.
    """
    num_aps, n_dev = chan.num_aps, chan.num_devices
    if num_aps**n_dev > cap:
        raise ConfigurationError(
            f"brute force refused: {num_aps}**{n_dev} associations exceed cap {cap}"
        )
    p_max = np.broadcast_to(np.asarray(getattr(cfg, "max_power_mw", cfg), dtype=float), (num_aps,))
    gamma = demand.gamma_thr

    subsets_by_size = {
        s: np.array(list(combinations(range(n_dev), s)), dtype=np.int64)
        for s in range(1, n_dev + 1)
    }

    best_n = 0
    best = None  # (total_power, admitted, serving, full_power)
    for flat in range(num_aps**n_dev):
        serving = np.empty(n_dev, dtype=np.int64)
        rem = flat
        for d in range(n_dev):
            serving[d] = rem % num_aps
            rem //= num_aps

        direct = direct_gains(serving, chan)
        if np.any(direct <= 0):
            continue
        cross = coupling_matrix(serving, chan)
        noise = effective_noise(serving, chan, sigma2)
        F = gamma[:, None] * cross.T / direct[:, None]
        np.fill_diagonal(F, 0.0)
        u = gamma * noise / direct

        for size in range(n_dev, max(best_n, 1) - 1, -1):
            idx_mat = subsets_by_size[size]
            p = _batch_subset_solve(F, u, idx_mat)
            ok = np.all(np.isfinite(p), axis=1) & np.all(p > 0, axis=1)
            if ok.any():
                serving_sub = serving[idx_mat]
                fits = ok.copy()
                for k in range(num_aps):
                    loads = np.where(serving_sub == k, p, 0.0).sum(axis=1)
                    fits &= loads <= p_max[k]
                if fits.any():
                    totals = np.where(fits, p.sum(axis=1), np.inf)
                    i = int(np.argmin(totals))
                    total = totals[i]
                    if size > best_n or (best is not None and total < best[0]):
                        idx = idx_mat[i]
                        full_power = np.zeros(n_dev)
                        full_power[idx] = p[i]
                        best = (total, idx.copy(), serving.copy(), full_power)
                        best_n = size
                    break

    if best is None:
        return OracleResult(
            n_star=0,
            admitted=np.array([], dtype=np.int64),
            serving=np.argmax(chan.large_scale, axis=0),
            power=np.zeros(n_dev),
            feasible_all=False,
        )
    _, admitted, serving, power = best
    return OracleResult(
        n_star=int(best_n),
        admitted=admitted,
        serving=serving,
        power=power,
        feasible_all=best_n == n_dev,
    )
