"""Coalition-game AP association (CG-APA).

Local search over single-device AP switches at fixed transmit powers. A
switch is accepted when it strictly raises the total throughput, keeps every
protected device at or above its pinned rate target, and fits the target
AP's power budget. Devices are scanned in index order, target APs in index
order, first improvement applied immediately; passes repeat until one full
pass accepts nothing. Strict improvement over a finite structure space
guarantees termination.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

from .metrics import Association, Demand, ap_loads, rates_all, total_throughput

MAX_PASSES = 1_000
MAX_SWITCH_LOG = 200_000

# pinned rates sit exactly at xi after the power solve; protection is tested
# with a relative slack absorbing fixed-point round-off
PROTECT_RTOL = 1e-9


@dataclass
class CoalitionStructure:
    """Partition view of an association: one device set per AP."""

    partition: list

    @classmethod
    def from_association(cls, assoc: Association):
        return cls([set(ids.tolist()) for ids in assoc.coalitions()])

    def to_association(self):
        num_aps = len(self.partition)
        size = sum(len(s) for s in self.partition)
        serving = np.empty(size, dtype=np.int64)
        for k, devices in enumerate(self.partition):
            for n in devices:
                serving[n] = k
        return Association(serving, num_aps)

    def copy(self):
        return CoalitionStructure([set(s) for s in self.partition])


def propose_switch(structure: CoalitionStructure, n, j):
    """Structure with device n moved to AP j; the input is left untouched.

    Returns None when j is already n's AP (no-op signal)."""
    current = next(k for k, s in enumerate(structure.partition) if n in s)
    if current == j:
        return None
    out = structure.copy()
    out.partition[current].discard(n)
    out.partition[j].add(n)
    return out


def accept_switch(curr: Association, temp: Association, p, chan, sigma2, demand: Demand, q_set, p_max=None):
    """Reference acceptance test: protected rates hold under the new
    structure, total throughput strictly improves, and (when budgets are
    supplied) the gaining AP stays within its budget."""
    p = np.asarray(p, dtype=float)
    q_set = np.asarray(q_set, dtype=np.int64)
    rates_temp = rates_all(temp.serving, p, chan, sigma2)
    if q_set.size and np.any(rates_temp[q_set] < demand.xi[q_set] * (1.0 - PROTECT_RTOL)):
        return False
    rates_curr = rates_all(curr.serving, p, chan, sigma2)
    if not total_throughput(rates_temp) > total_throughput(rates_curr):
        return False
    if p_max is not None:
        loads = ap_loads(temp.serving, p, temp.num_aps)
        if np.any(loads > np.asarray(p_max, dtype=float)):
            return False
    return True


@njit(cache=True)
def _cg_passes(serving, p, gains, large_scale, rho2, sigma2, xi, protected, p_max, max_passes, r_log):
    """In-place first-improvement switch passes.

    r_log receives the total throughput after every accepted switch; returns
    (passes_used, switches, reached_fixed_point)."""
    n_dev = serving.size
    n_ap = p_max.size
    err = 1.0 - rho2

    recv = np.zeros(n_dev)
    for m in range(n_dev):
        acc = 0.0
        for j in range(n_dev):
            acc += gains[serving[j], m] * p[j]
        recv[m] = acc
    loads = np.zeros(n_ap)
    for m in range(n_dev):
        loads[serving[m]] += p[m]

    r_curr = 0.0
    for m in range(n_dev):
        own = gains[serving[m], m] * p[m]
        den = recv[m] - own + sigma2 + err * large_scale[serving[m], m]
        r_curr += np.log2(1.0 + rho2 * own / den)

    switches = 0
    for pass_idx in range(max_passes):
        moved = False
        for n in range(n_dev):
            a = serving[n]
            for j in range(n_ap):
                if j == a:
                    continue
                if loads[j] + p[n] > p_max[j]:
                    continue
                ok = True
                r_tmp = 0.0
                for m in range(n_dev):
                    ap_m = j if m == n else serving[m]
                    recv_m = recv[m] + (gains[j, m] - gains[a, m]) * p[n]
                    own = gains[ap_m, m] * p[m]
                    den = recv_m - own + sigma2 + err * large_scale[ap_m, m]
                    rate_m = np.log2(1.0 + rho2 * own / den)
                    if protected[m] and rate_m < xi[m] * (1.0 - 1e-9):
                        ok = False
                        break
                    r_tmp += rate_m
                if not ok or not (r_tmp > r_curr):
                    continue
                for m in range(n_dev):
                    recv[m] += (gains[j, m] - gains[a, m]) * p[n]
                loads[a] -= p[n]
                loads[j] += p[n]
                serving[n] = j
                r_curr = r_tmp
                if switches < r_log.size:
                    r_log[switches] = r_tmp
                switches += 1
                moved = True
                break
        if not moved:
            return pass_idx + 1, switches, True
    return max_passes, switches, False


@dataclass
class CgApaResult:
    association: Association
    passes: int
    switches: int
    converged: bool
    throughput_log: np.ndarray


def cg_apa_detailed(assoc_init: Association, p, chan, sigma2, demand: Demand, q_set, p_max, max_passes=MAX_PASSES):
    serving = assoc_init.serving.copy()
    p = np.asarray(p, dtype=float)
    q_set = np.asarray(q_set, dtype=np.int64)
    protected = np.zeros(serving.size, dtype=np.bool_)
    protected[q_set] = True
    p_max = np.broadcast_to(np.asarray(p_max, dtype=float), (assoc_init.num_aps,)).copy()
    r_log = np.empty(min(MAX_SWITCH_LOG, max_passes * serving.size), dtype=np.float64)

    passes, switches, converged = _cg_passes(
        serving,
        p,
        np.ascontiguousarray(chan.gains),
        np.ascontiguousarray(chan.large_scale),
        chan.rho**2,
        float(sigma2),
        demand.xi if demand is not None else np.zeros(serving.size),
        protected,
        p_max,
        max_passes,
        r_log,
    )
    return CgApaResult(
        association=Association(serving, assoc_init.num_aps),
        passes=passes,
        switches=switches,
        converged=converged,
        throughput_log=r_log[: min(switches, r_log.size)].copy(),
    )


def cg_apa(assoc_init, p, chan, sigma2, demand, q_set, p_max, max_passes=MAX_PASSES):
    """Association after the switch search terminates (no device wants to move)."""
    return cg_apa_detailed(assoc_init, p, chan, sigma2, demand, q_set, p_max, max_passes).association
