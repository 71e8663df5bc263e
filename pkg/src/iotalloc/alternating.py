"""Alternating driver for the dual-objective problem: grow the satisfied set
while improving total throughput.

Each iteration runs a power step (dual fixed-point solve with the current
satisfied set pinned, or an equal split) followed by an association step
(coalition-game switch search, or a fixed nearest-AP map), then re-derives
the satisfied set. Termination requires both an unchanged satisfied count
and a relative throughput improvement at or below eps2.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .baselines import equal_pa, nearest_apa
from .cgapa import cg_apa_detailed
from .difpa import solve_dif_pa
from .errors import DivergenceError
from .metrics import AllocationState, Association, Demand, rates_all, satisfied_set
from .network import ChannelMatrix, NetworkConfig

log = logging.getLogger(__name__)

DEFAULT_EPS2 = 1e-4
MAX_ITERS = 100


@dataclass
class AaTraceRow:
    iteration: int
    n_satisfied: int
    total_rate: float
    nabla: float


@dataclass
class AaTrace:
    rows: list = field(default_factory=list)
    events: list = field(default_factory=list)
    converged: bool = False

    def append(self, iteration, n_satisfied, total_rate, nabla):
        self.rows.append(AaTraceRow(iteration, n_satisfied, total_rate, nabla))

    @property
    def iterations(self):
        return len(self.rows)

    def csv_rows(self):
        return [(r.iteration, r.n_satisfied, r.total_rate, r.nabla) for r in self.rows]


def best_gain_association(chan: ChannelMatrix) -> Association:
    """Serve each device from the AP with the strongest large-scale gain
    (ties broken toward the lower AP index)."""
    return Association(np.argmax(chan.large_scale, axis=0), chan.num_aps)


def _unconstrained_power_state(assoc, chan, sigma2, demand, p_max, trace=None):
    """Throughput-maximizing power with no rate constraints under the given
    association, plus the empty-set rescue: when nobody is satisfied, grant
    the full budget to the single best-channel device and re-test."""
    result = solve_dif_pa(
        assoc, chan, sigma2, None, np.array([], dtype=np.int64), equal_pa(assoc, p_max), p_max
    )
    state = AllocationState.evaluate(assoc, result.power, chan, sigma2, demand)
    if state.satisfied.size == 0:
        best_device = int(np.argmax(chan.large_scale.max(axis=0)))
        rescue_p = np.zeros(chan.num_devices)
        rescue_p[best_device] = p_max[assoc.serving[best_device]]
        rescue = AllocationState.evaluate(assoc, rescue_p, chan, sigma2, demand)
        if rescue.satisfied.size:
            if trace is not None:
                trace.events.append(f"rescue: full budget to device {best_device}")
            return rescue
        if trace is not None:
            trace.events.append("rescue failed: no device satisfiable alone")
    return state


def initialize(chan: ChannelMatrix, sigma2, demand: Demand, cfg: NetworkConfig, trace: AaTrace = None):
    """Initial state for the alternating loop: best-gain association and the
    unconstrained power maximizer (with rescue)."""
    p_max = np.full(cfg.num_aps, cfg.max_power_mw)
    return _unconstrained_power_state(best_gain_association(chan), chan, sigma2, demand, p_max, trace)


@dataclass
class AaOutcome:
    state: AllocationState
    trace: AaTrace
    iterations: int


def alternating_solve(
    chan: ChannelMatrix,
    sigma2,
    demand: Demand,
    cfg: NetworkConfig,
    power_method="dif",
    assoc_method="cg",
    topology=None,
    eps2=DEFAULT_EPS2,
    max_iters=MAX_ITERS,
) -> AaOutcome:
    """Run the alternating loop with the selected power and association steps.

    power_method: 'dif' (pinned dual fixed point) or 'equal' (budget split).
    assoc_method: 'cg' (coalition switches) or 'nearest' (fixed geometric
    map, requires topology).
    """
    if power_method not in ("dif", "equal"):
        raise ValueError(f"unknown power method {power_method!r}")
    if assoc_method not in ("cg", "nearest"):
        raise ValueError(f"unknown association method {assoc_method!r}")
    if assoc_method == "nearest" and topology is None:
        raise ValueError("nearest association requires the topology")

    p_max = np.full(cfg.num_aps, cfg.max_power_mw)
    trace = AaTrace()

    if assoc_method == "nearest":
        assoc = nearest_apa(topology)
    else:
        assoc = best_gain_association(chan)

    if power_method == "dif":
        state = _unconstrained_power_state(assoc, chan, sigma2, demand, p_max, trace)
    else:
        state = AllocationState.evaluate(assoc, equal_pa(assoc, p_max), chan, sigma2, demand)

    q = set(state.satisfied.tolist())
    r_prev = state.total_throughput
    trace.append(0, len(q), r_prev, float("nan"))

    p = state.power
    for t in range(1, max_iters + 1):
        # power step with the current satisfied set pinned
        if power_method == "dif":
            p = _dif_power_step(assoc, chan, sigma2, demand, q, p_max, trace)
        else:
            p = equal_pa(assoc, p_max)
            q = set(satisfied_set(rates_all(assoc.serving, p, chan, sigma2), demand).tolist())

        # association step at fixed power
        if assoc_method == "cg":
            cg = cg_apa_detailed(assoc, p, chan, sigma2, demand, np.array(sorted(q), dtype=np.int64), p_max)
            assoc = cg.association

        rates = rates_all(assoc.serving, p, chan, sigma2)
        r_tot = float(rates.sum())
        now_satisfied = set(satisfied_set(rates, demand).tolist())
        q_new = (q | now_satisfied) if power_method == "dif" else now_satisfied

        nabla = (r_tot - r_prev) / r_prev if r_prev > 0 else (np.inf if r_tot > 0 else 0.0)
        trace.append(t, len(q_new), r_tot, nabla)

        done = len(q_new) == len(q) and nabla <= eps2
        q = q_new
        r_prev = r_tot
        if done:
            trace.converged = True
            break

    state = AllocationState.evaluate(assoc, p, chan, sigma2, demand)
    return AaOutcome(state=state, trace=trace, iterations=trace.rows[-1].iteration)


def _dif_power_step(assoc, chan, sigma2, demand, q, p_max, trace):
    """Pinned power solve with the documented shrink policy: on divergence,
    drop the pinned device holding the largest power and retry."""
    q_work = set(q)
    while True:
        q_arr = np.array(sorted(q_work), dtype=np.int64)
        p_init = equal_pa(assoc, p_max)
        try:
            result = solve_dif_pa(assoc, chan, sigma2, demand, q_arr, p_init, p_max)
            q.clear()
            q.update(q_work)
            return result.power
        except DivergenceError as err:
            if not q_work:
                raise
            power = err.power if err.power is not None else p_init
            costliest = max(q_work, key=lambda n: power[n])
            q_work.discard(costliest)
            msg = f"q-shrink: dropped device {costliest} ({len(q_work)} pinned remain)"
            trace.events.append(msg)
            log.info(msg)
