"""Dual fixed-point power allocation with equality-of-service pinning (DIF-PA).

Maximizes the log-bounded throughput of unsatisfied devices while holding
every pinned (satisfied) device exactly at its slacked rate target. Budgets
enter through per-AP Lagrange multipliers; the per-device updates are

  unsatisfied n:  P_n = a_n / ( sum_{m != n} a_m * C[n,m] / (I_m + noise_m)
                                + ln2 * theta[ap(n)] )
  pinned n:       P_n = G_n * (I_n + noise_n) / sig_n,
                  G_n = 2^((xi_n - b_n)/a_n)

with (a, b) the frozen log-bound factors, C[n,m] the gain from n's serving
AP to device m, I_m device m's current interference and sig_n the (possibly
CSI-degraded) direct gain. The stacked map is a standard interference
function, so sweeps converge to a unique fixed point at fixed multipliers
and factors.

Multipliers follow projected ascent on the budget violations. A fixed step
is either unstable or impractically slow across the power scales this
problem spans, so the solver normalizes each step by the local sensitivity
of the AP's load to its multiplier (a damped Newton step on the dual);
fixed points and complementary-slackness semantics are unchanged. APs whose
load is carried entirely by pinned devices cannot be controlled by their
multiplier at all: a persistent overload there makes the multiplier ratchet
geometrically, which the divergence detector turns into the
pinned-set-infeasible signal.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DivergenceError, IterationStallError
from .logapprox import LogFactors, safe_log_factors
from .metrics import (
    Association,
    Demand,
    ap_loads,
    coupling_matrix,
    direct_gains,
    effective_noise,
    sinr_all,
)

LN2 = float(np.log(2.0))

INNER_TOL = 1e-6
INNER_SLACK_TOL = 1e-6
INNER_MAX_SWEEPS = 10_000
INNER_EXTRA_ROUNDS = 4
INNER_ACCEPT_RESID = 1e-3
BUDGET_RTOL = 1e-6
VIOLATION_INFEASIBLE = 1e-3
BLOWUP_FACTOR = 1e6
THETA_CAP = 1e12
DUAL_DAMPING = 0.5
DEFAULT_EPS_THETA = 1e-4
DEFAULT_EPS1 = 1e-4
OUTER_MAX_ITERS = 500
PLATEAU_RTOL = 1e-10
PLATEAU_OUTERS = 3
PIN_EXP_CLIP = 400.0

STATUS_CONVERGED = 0
STATUS_CAP = 1
STATUS_BLOWUP = 2


@dataclass
class DualState:
    """Mutable solver state: powers, per-AP multipliers, frozen factors and
    the pinned device set."""

    p: np.ndarray
    theta: np.ndarray
    factors: LogFactors
    q_set: np.ndarray


@dataclass
class DifPaResult:
    power: np.ndarray
    theta: np.ndarray
    outer_iterations: int
    total_sweeps: int
    cap_hits: int
    factors: LogFactors


@njit(cache=True)
def _inner_sweeps(
    p,
    theta,
    alpha,
    gamma_pin,
    pinned,
    C,
    sig,
    noise_eff,
    serving,
    p_max,
    damping,
    eps_theta,
    tol,
    slack_tol,
    budget_rtol,
    max_sweeps,
    blowup,
    use_jacobi,
):
    """Fixed-point sweeps interleaved with multiplier updates, in place.

    Convergence requires a settled power vector, vanishing complementary
    slackness and loads within budget_rtol of the budgets. Returns
    (sweeps_used, last_residual, status)."""
    n_dev = p.size
    n_ap = p_max.size
    ln2 = 0.6931471805599453

    recv = np.zeros(n_dev)
    for m in range(n_dev):
        acc = 0.0
        for j in range(n_dev):
            acc += C[j, m] * p[j]
        recv[m] = acc

    p_new = np.empty(n_dev)
    loads = np.empty(n_ap)
    sens = np.empty(n_ap)
    resid = 1.0e300
    for s in range(max_sweeps):
        if (s & 511) == 511:
            # refresh the incrementally maintained totals against drift
            for m in range(n_dev):
                acc = 0.0
                for j in range(n_dev):
                    acc += C[j, m] * p[j]
                recv[m] = acc
        max_delta = 0.0
        max_p = 0.0
        if use_jacobi:
            for n in range(n_dev):
                if pinned[n]:
                    i_n = recv[n] - C[n, n] * p[n]
                    val = gamma_pin[n] * (i_n + noise_eff[n]) / sig[n]
                else:
                    denom = ln2 * theta[serving[n]]
                    for m in range(n_dev):
                        if m != n:
                            i_m = recv[m] - C[m, m] * p[m]
                            denom += alpha[m] * C[n, m] / (i_m + noise_eff[m])
                    val = alpha[n] / denom if denom > 0.0 else p_max[serving[n]]
                p_new[n] = val
            for n in range(n_dev):
                d = abs(p_new[n] - p[n])
                if d > max_delta:
                    max_delta = d
                p[n] = p_new[n]
                if p[n] > max_p:
                    max_p = p[n]
            for m in range(n_dev):
                acc = 0.0
                for j in range(n_dev):
                    acc += C[j, m] * p[j]
                recv[m] = acc
        else:
            for n in range(n_dev):
                if pinned[n]:
                    i_n = recv[n] - C[n, n] * p[n]
                    val = gamma_pin[n] * (i_n + noise_eff[n]) / sig[n]
                else:
                    denom = ln2 * theta[serving[n]]
                    for m in range(n_dev):
                        if m != n:
                            i_m = recv[m] - C[m, m] * p[m]
                            denom += alpha[m] * C[n, m] / (i_m + noise_eff[m])
                    val = alpha[n] / denom if denom > 0.0 else p_max[serving[n]]
                delta = val - p[n]
                if delta != 0.0:
                    for m in range(n_dev):
                        recv[m] += C[n, m] * delta
                    p[n] = val
                d = abs(delta)
                if d > max_delta:
                    max_delta = d
                if p[n] > max_p:
                    max_p = p[n]

        for k in range(n_ap):
            loads[k] = 0.0
            sens[k] = 0.0
        for n in range(n_dev):
            loads[serving[n]] += p[n]
            if not pinned[n]:
                sens[serving[n]] += ln2 * p[n] * p[n] / alpha[n]

        slack_max = 0.0
        viol_max = 0.0
        theta_max = 0.0
        for k in range(n_ap):
            gap = loads[k] - p_max[k]
            if sens[k] > 0.0:
                step = damping * gap / sens[k]
            elif gap > 0.0:
                # nothing on this AP responds to the multiplier; ratchet it
                # so persistent overload is flagged as infeasible
                step = theta[k] + eps_theta * gap + 1e-12
            else:
                step = -0.5 * theta[k]
            t = theta[k] + step
            theta[k] = t if t > 0.0 else 0.0
            if theta[k] > theta_max:
                theta_max = theta[k]
            slack = theta[k] * abs(gap)
            if slack > slack_max:
                slack_max = slack
            viol = gap / p_max[k]
            if viol > viol_max:
                viol_max = viol

        if max_p > blowup or theta_max > THETA_CAP:
            return s + 1, resid, STATUS_BLOWUP
        resid = max_delta / max_p if max_p > 0.0 else 0.0
        if resid < tol and slack_max <= slack_tol and viol_max <= budget_rtol:
            return s + 1, resid, STATUS_CONVERGED
    return max_sweeps, resid, STATUS_CAP


def _pin_targets(factors: LogFactors, xi, pinned):
    """Surrogate SINR targets 2^((xi - beta)/alpha) for the pinned devices."""
    gamma_pin = np.zeros_like(factors.alpha)
    if np.any(pinned):
        expo = (xi[pinned] - factors.beta[pinned]) / factors.alpha[pinned]
        gamma_pin[pinned] = np.exp2(np.minimum(expo, PIN_EXP_CLIP))
    return gamma_pin


def solve_dif_pa(
    assoc: Association,
    chan,
    sigma2,
    demand,
    q_set,
    p_init,
    p_max,
    eps1=DEFAULT_EPS1,
    eps_theta=DEFAULT_EPS_THETA,
    inner_tol=INNER_TOL,
    slack_tol=INNER_SLACK_TOL,
    max_sweeps=INNER_MAX_SWEEPS,
    use_jacobi=False,
) -> DifPaResult:
    """Run the factor-refresh outer loop around the dual fixed-point inner loop.

    Raises DivergenceError when powers or multipliers blow up, or a budget
    overload persists at the sweep cap (pinned targets jointly unattainable
    under this association), or the inner loop makes no progress within the
    sweep budget.
    """
    serving = assoc.serving
    n_dev = serving.size
    q_set = np.asarray(q_set, dtype=np.int64)
    pinned = np.zeros(n_dev, dtype=np.bool_)
    pinned[q_set] = True
    if demand is None:
        if q_set.size:
            raise ValueError("demand required when q_set is nonempty")
        xi = np.zeros(n_dev)
    else:
        xi = demand.xi

    p = np.asarray(p_init, dtype=float).copy()
    if np.any(p <= 0):
        raise ValueError("p_init must be strictly positive")
    p_max = np.broadcast_to(np.asarray(p_max, dtype=float), (assoc.num_aps,)).copy()

    C = np.ascontiguousarray(coupling_matrix(serving, chan))
    sig = direct_gains(serving, chan)
    noise_eff = effective_noise(serving, chan, sigma2)
    blowup = BLOWUP_FACTOR * float(p_max.max())

    theta = None
    total_sweeps = 0
    cap_hits = 0
    factors = None
    r_tot_prev = None
    plateau = 0
    for i in range(1, OUTER_MAX_ITERS + 1):
        gamma = sinr_all(serving, p, chan, sigma2)
        factors = safe_log_factors(gamma)
        if theta is None:
            # warm start at the scale balancing the no-interference fixed
            # point against the budgets; keeps the solve in the
            # budget-active basin rather than the noise-floor one
            theta = np.full(assoc.num_aps, factors.alpha.mean() / (LN2 * float(p_max.mean())))
        gamma_pin = _pin_targets(factors, xi, pinned)

        p_prev = p.copy()
        status = STATUS_CAP
        violation = np.inf
        violation_prev = np.inf
        for _round in range(1 + INNER_EXTRA_ROUNDS):
            sweeps, resid, status = _inner_sweeps(
                p,
                theta,
                factors.alpha,
                gamma_pin,
                pinned,
                C,
                sig,
                noise_eff,
                serving,
                p_max,
                DUAL_DAMPING,
                eps_theta,
                inner_tol,
                slack_tol,
                BUDGET_RTOL,
                max_sweeps,
                blowup,
                use_jacobi,
            )
            total_sweeps += sweeps
            if status != STATUS_CAP:
                break
            loads = ap_loads(serving, p, assoc.num_aps)
            violation = float(np.max(loads / p_max)) - 1.0
            if q_set.size and violation > VIOLATION_INFEASIBLE and violation > 0.9 * violation_prev:
                break  # overload not shrinking: pinned targets cannot fit
            violation_prev = violation

        if status == STATUS_BLOWUP:
            raise DivergenceError(
                "power iteration diverged; pinned targets unattainable",
                power=p,
                sweeps=total_sweeps,
            )
        if status == STATUS_CAP:
            if q_set.size and violation > VIOLATION_INFEASIBLE:
                raise DivergenceError(
                    "budget violation persists at sweep cap; pinned set infeasible",
                    power=p,
                    sweeps=total_sweeps,
                )
            if resid > INNER_ACCEPT_RESID:
                raise DivergenceError(
                    f"inner loop stalled at residual {resid:.2e}",
                    power=p,
                    sweeps=total_sweeps,
                )
            cap_hits += 1  # bounded, near budget, nearly settled: dual chatter

        # per-AP downscale so every returned iterate respects budgets exactly
        loads = ap_loads(serving, p, assoc.num_aps)
        over = loads > p_max
        if np.any(over):
            scale = np.ones(assoc.num_aps)
            scale[over] = p_max[over] / loads[over]
            p *= scale[serving]

        # objective plateau: the flat tail can keep creeping in p at scales
        # the power-norm test never clears while the objective is fixed to
        # double precision; such iterates are numerically indistinguishable
        r_tot = float(np.sum(np.log2(1.0 + sinr_all(serving, p, chan, sigma2))))
        if r_tot_prev is not None and abs(r_tot - r_tot_prev) <= PLATEAU_RTOL * max(1.0, abs(r_tot)):
            plateau += 1
        else:
            plateau = 0
        r_tot_prev = r_tot

        if np.linalg.norm(p - p_prev) <= eps1 or plateau >= PLATEAU_OUTERS:
            return DifPaResult(
                power=p,
                theta=theta,
                outer_iterations=i,
                total_sweeps=total_sweeps,
                cap_hits=cap_hits,
                factors=factors,
            )
    raise IterationStallError(f"no outer convergence within {OUTER_MAX_ITERS} iterations")


def dif_pa(
    assoc, chan, sigma2, demand, q_set, p_init, p_max,
    eps1=DEFAULT_EPS1, eps_theta=DEFAULT_EPS_THETA,
):
    """Converged power vector (see solve_dif_pa for diagnostics)."""
    return solve_dif_pa(assoc, chan, sigma2, demand, q_set, p_init, p_max, eps1, eps_theta).power


def interference_map(p, state: DualState, assoc: Association, chan, sigma2, demand=None):
    """One synchronous application of the stacked fixed-point map I(p).

    Used by the interference-function axiom tests; mirrors the kernel's
    per-device updates with everything evaluated at the supplied p.
    """
    serving = assoc.serving
    n_dev = serving.size
    C = coupling_matrix(serving, chan)
    sig = direct_gains(serving, chan)
    noise_eff = effective_noise(serving, chan, sigma2)
    pinned = np.zeros(n_dev, dtype=bool)
    pinned[state.q_set] = True
    xi = demand.xi if demand is not None else np.zeros(n_dev)
    gamma_pin = _pin_targets(state.factors, xi, pinned)

    p = np.asarray(p, dtype=float)
    recv = p @ C
    interference = recv - np.diag(C) * p
    out = np.empty(n_dev)
    for n in range(n_dev):
        if pinned[n]:
            out[n] = gamma_pin[n] * (interference[n] + noise_eff[n]) / sig[n]
        else:
            mask = np.arange(n_dev) != n
            denom = LN2 * state.theta[serving[n]] + np.sum(
                state.factors.alpha[mask] * C[n, mask] / (interference[mask] + noise_eff[mask])
            )
            out[n] = state.factors.alpha[n] / denom if denom > 0 else np.inf
    return out


def fixed_point_unsatisfied(state: DualState, chan, assoc: Association, sigma2, n):
    """Reference single-device update for an unpinned device."""
    return float(interference_map(state.p, state, assoc, chan, sigma2)[n])


def fixed_point_satisfied(state: DualState, chan, assoc: Association, sigma2, demand: Demand, n):
    """Reference single-device update for a pinned device."""
    return float(interference_map(state.p, state, assoc, chan, sigma2, demand)[n])


def multiplier_update(theta, p, assoc: Association, p_max, eps_theta=DEFAULT_EPS_THETA):
    """Plain projected subgradient step on the per-AP budget violations."""
    loads = ap_loads(assoc.serving, p, assoc.num_aps)
    return np.maximum(0.0, np.asarray(theta, dtype=float) + eps_theta * (loads - np.asarray(p_max, dtype=float)))


def kkt_diagnostics(p, theta, factors: LogFactors, assoc: Association, chan, sigma2, q_set, p_max):
    """Stationarity residuals of the unpinned devices and per-AP
    complementary-slackness products at (p, theta)."""
    serving = assoc.serving
    n_dev = serving.size
    C = coupling_matrix(serving, chan)
    noise_eff = effective_noise(serving, chan, sigma2)
    p = np.asarray(p, dtype=float)
    recv = p @ C
    interference = recv - np.diag(C) * p

    pinned = np.zeros(n_dev, dtype=bool)
    pinned[np.asarray(q_set, dtype=np.int64)] = True
    stationarity = np.zeros(n_dev)
    for n in range(n_dev):
        if pinned[n]:
            continue
        mask = np.arange(n_dev) != n
        coupling_term = np.sum(
            factors.alpha[mask] * C[n, mask] / (interference[mask] + noise_eff[mask])
        )
        stationarity[n] = (
            factors.alpha[n] / LN2
            - p[n] * coupling_term / LN2
            - theta[serving[n]] * p[n]
        )
    loads = ap_loads(serving, p, assoc.num_aps)
    slack = np.asarray(theta) * np.abs(np.asarray(p_max, dtype=float) - loads)
    return stationarity, slack
