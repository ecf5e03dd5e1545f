"""Ergodic entropic cost: the multiplicative Poisson equation on finite chains.

Minimized criterion: limsup (1/(gamma n)) ln E exp(gamma * cumulative cost).
On a finite model whose stationary policies all induce communicating chains,
the optimal constant cost xi and relative value h solve

    xi + h(x) = min_a { c(x,a) + (1/gamma) ln sum_y q(y|x,a) e^{gamma h(y)} },

equivalently, with W = e^{gamma h} and rho = e^{gamma xi},

    rho W(x) = min_a e^{gamma c(x,a)} sum_y q(y|x,a) W(y),

a nonlinear eigenproblem for the positive-matrix family; rho is the Perron
value of the optimal policy's matrix diag(e^{gamma c_f}) P_f.  Relative value
iteration with normalization at a reference state converges once the operator
is damped with a self-loop mix (periodic chains otherwise cycle); the damping
shifts the eigenvalue affinely, rho_damped = (1 - lam) + lam * rho, and keeps
the eigenvector and the argmin, so the reported xi is undamped.

Every sweep runs in log space (log W), so no gamma causes overflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import (
    ChainStructureError,
    IterationLimitError,
    ParameterError,
)
from .mdp import StationaryPolicy, analyze_chain, check_unichain_aperiodic, induced_chain, value_dict
from .report import SolveReport

MAX_ITERS = 10**6


@dataclass
class ErgodicSolution:
    xi: float
    h: dict                 # relative value, h(reference) = 0
    W: dict                 # e^{gamma h}; may overflow to inf for extreme gamma*span
    policy: StationaryPolicy
    rho: float
    iterations: int
    residual: float
    ratio_spread: float     # span of the per-state growth logs at the last sweep

    def report(self, gamma):
        return SolveReport(
            criterion="ergodic_entropic",
            value={s: self.xi for s in self.h},
            policy=dict(self.policy.choice),
            iterations=self.iterations,
            residual=self.residual,
            error_bound=self.residual,
            extras={"gain": self.xi, "bias": self.h, "rho": self.rho, "gamma": gamma},
        )


def _precheck(m, mode, cap, sample, seed):
    if mode == "off":
        return
    if mode == "full":
        try:
            chk = check_unichain_aperiodic(m, cap=cap)
        except Exception:
            chk = check_unichain_aperiodic(m, sample=sample, seed=seed)
    else:
        chk = check_unichain_aperiodic(m, sample=sample, seed=seed)
    for rep in chk.reports:
        if not rep.irreducible:
            raise ChainStructureError(
                f"policy {rep.policy.choice} does not induce a communicating chain; "
                "the ergodic criterion needs one communicating class per policy"
            )


def _log_min_sweep(m, gamma, lw):
    """log of min_a e^{gamma c(x,a)} sum_y q W, batched; +inf at inadmissible."""
    inner = logsumexp(np.where(m.kernel > 0.0, np.log(np.where(m.kernel > 0.0, m.kernel, 1.0)), -np.inf)
                      + lw[None, None, :], axis=2)
    vals = np.where(m.admissible_mask, gamma * m.cost + inner, np.inf)
    return vals


def ergodic_rvi(m, gamma, tol=1e-11, reference_state=None, damping=0.5,
                max_iters=MAX_ITERS, check="full", check_cap=4096, check_sample=64,
                check_seed=0):
    """Optimal ergodic entropic cost (xi, h, W, policy, rho) by damped RVI.

    Stopping uses the relative residual of the undamped multiplicative
    equation, max_x |M W(x) / (rho W(x)) - 1| <= tol, which is scale-free in
    gamma (the additive xi/h residual divides float noise by gamma and cannot
    reach tight tolerances for small gamma).  The loop also stops if an
    iteration leaves the table bitwise unchanged, i.e. the machine-precision
    fixed point was reached.
    """
    if not (gamma > 0.0 and np.isfinite(gamma)):
        raise ParameterError(f"risk aversion must be > 0, got {gamma}")
    if m.cost is None:
        raise ParameterError("ergodic solver needs a cost table")
    if not (0.0 < damping <= 1.0):
        raise ParameterError(f"damping must lie in (0, 1], got {damping}")
    m.require_valid(for_discounted=False)
    _precheck(m, check, check_cap, check_sample, check_seed)

    z = m.state_index[reference_state if reference_state is not None else m.states[0]]
    lam = damping
    lw = np.zeros(m.n_states)
    spread = np.inf
    for it in range(1, max_iters + 1):
        vals = _log_min_sweep(m, gamma, lw)
        lM = vals.min(axis=1)
        if lam < 1.0:
            ly = np.logaddexp(np.log1p(-lam) + lw, np.log(lam) + lM)
        else:
            ly = lM
        growth = ly - lw
        spread = float(growth.max() - growth.min())
        lrho_t = ly[z] - lw[z]
        lw_new = ly - ly[z]
        stalled = np.array_equal(lw_new, lw)
        lw = lw_new
        # undamped eigenvalue: rho = (rho_tilde - (1 - lam)) / lam, in logs
        if lam < 1.0:
            lrho = lrho_t + np.log1p(-(1.0 - lam) * np.exp(-lrho_t)) - np.log(lam)
        else:
            lrho = lrho_t
        lM2 = _log_min_sweep(m, gamma, lw).min(axis=1)
        residual = float(np.max(np.abs(np.expm1(lM2 - lrho - lw))))
        if residual <= tol or stalled:
            if residual > tol:
                raise IterationLimitError(
                    "ergodic RVI stalled at the machine-precision fixed point "
                    f"above tol={tol:g}", residual, it)
            idx = np.argmin(_log_min_sweep(m, gamma, lw), axis=1)
            policy = StationaryPolicy({s: m.actions[idx[i]] for i, s in enumerate(m.states)})
            h = lw / gamma
            with np.errstate(over="ignore"):
                W = np.exp(lw)
            return ErgodicSolution(
                xi=float(lrho / gamma), h=value_dict(m, h), W=value_dict(m, W),
                policy=policy, rho=float(np.exp(lrho)),
                iterations=it, residual=residual, ratio_spread=spread,
            )
    raise IterationLimitError(
        f"ergodic RVI did not converge (last ratio spread {spread:.3e})",
        residual, max_iters)


def ergodic_policy_value(m, policy, gamma, tol=1e-12, damping=0.5, max_iters=MAX_ITERS):
    """Growth rate (xi_f, W_f) of one stationary policy by damped power iteration.

    xi_f = (1/gamma) ln rho_f with rho_f the Perron value of
    diag(e^{gamma c_f}) P_f; the eigenvector is strictly positive.
    """
    if not (gamma > 0.0 and np.isfinite(gamma)):
        raise ParameterError(f"risk aversion must be > 0, got {gamma}")
    if m.cost is None:
        raise ParameterError("ergodic solver needs a cost table")
    rep = analyze_chain(m, policy)
    if not rep.irreducible:
        raise ChainStructureError(
            f"policy {policy.choice} induces a reducible chain; Perron iteration needs "
            "a communicating class covering all states")
    P, _, c = induced_chain(m, policy)
    logP = np.where(P > 0.0, np.log(np.where(P > 0.0, P, 1.0)), -np.inf)
    lam = damping
    lw = np.zeros(m.n_states)
    for it in range(1, max_iters + 1):
        lM = gamma * c + logsumexp(logP + lw[None, :], axis=1)
        ly = np.logaddexp(np.log1p(-lam) + lw, np.log(lam) + lM) if lam < 1.0 else lM
        growth = ly - lw
        spread = float(growth.max() - growth.min())
        lw = ly - ly[0]
        if spread <= tol:
            lrho_t = float(growth.mean())
            lrho = (lrho_t + np.log1p(-(1.0 - lam) * np.exp(-lrho_t)) - np.log(lam)
                    if lam < 1.0 else lrho_t)
            h = lw / gamma
            with np.errstate(over="ignore"):
                W = np.exp(gamma * h)
            return float(lrho / gamma), value_dict(m, W)
    raise IterationLimitError(
        f"Perron power iteration did not converge (spread {spread:.3e})",
        spread, max_iters)
