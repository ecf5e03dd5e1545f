"""Discounted reward with the certainty equivalent applied stage by stage.

The solved equation is the nested-risk Bellman fixed point

    V(x) = max_a { r(x,a) + beta * S_u( V(X') ) },   X' ~ q(.|x,a),

whose operator L is a beta-contraction in the sup norm (shift additivity plus
monotonicity of S_u), so value iteration from the zero function converges and
the maximizer defines an optimal stationary policy.

For the entropic utility the same fixed point can be written without the
inner search:

    V(x) = max_a { r(x,a) - (beta/gamma) ln sum_y q(y|x,a) exp(-gamma V(y)) },

equivalently (after exponentiating with Vt = exp(-gamma V), which flips max
to min) the multiplicative form Vt(x) = min_a exp(-gamma r) (sum q Vt)^beta.
:func:`entropic_fast_path` iterates the logarithmic form directly with
log-sum-exp stabilization, which never under- or overflows.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .errors import IterationLimitError, ParameterError
from .mdp import StationaryPolicy, value_dict
from .oce import DiscreteDistribution, oce
from .report import SolveReport

MAX_ITERS = 10**6


def _check_gamma_range(m, gamma):
    """Log-space evaluation needs gamma * d / (1 - beta) itself to be finite."""
    if not (gamma > 0.0 and np.isfinite(gamma)):
        raise ParameterError(f"risk aversion must be > 0, got {gamma}")
    top = gamma * max(m.reward_bound, 1.0) / max(1.0 - m.discount, 1e-16)
    if not np.isfinite(top) or top > 1e300:
        raise ParameterError(
            f"gamma={gamma} overflows double range even in log space for this model")


def push_forward(m, state_idx, action_idx, v):
    """Law of v(X') under q(.|state, action), equal values merged.

    Merging is exact because the certainty equivalent is law-invariant, and it
    keeps the eta search on as few atoms as possible.
    """
    row = m.kernel[state_idx, action_idx]
    support = row > 0.0
    vals = np.asarray(v, dtype=float)[support]
    mass = row[support]
    uniq, inverse = np.unique(vals, return_inverse=True)
    merged = np.bincount(inverse, weights=mass, minlength=uniq.size)
    return DiscreteDistribution(uniq, merged / merged.sum())


def recursive_bellman_L(m, spec, v):
    """One sweep of the nested-risk operator.  Returns (Lv, argmax policy)."""
    v = np.asarray(v, dtype=float)
    beta = m.discount
    out = np.empty(m.n_states)
    choice = {}
    for si, s in enumerate(m.states):
        best_val = -np.inf
        best_act = None
        for a in m.admissible[s]:
            ai = m.action_index[a]
            risk = oce(push_forward(m, si, ai, v), spec).value
            val = m.reward[si, ai] + beta * risk
            if val > best_val:
                best_val = val
                best_act = a
        out[si] = best_val
        choice[s] = best_act
    return out, StationaryPolicy(choice)


def _iterate(m, sweep, tol, max_iters, v0=None):
    """Contraction iteration with the a-posteriori bound beta*||dv||/(1-beta)."""
    beta = m.discount
    v = np.zeros(m.n_states) if v0 is None else np.asarray(v0, dtype=float)
    stop = tol if beta == 0.0 else tol * (1.0 - beta) / beta
    for it in range(1, max_iters + 1):
        w, policy = sweep(v)
        delta = float(np.max(np.abs(w - v)))
        v = w
        if delta <= stop or beta == 0.0:
            bound = 0.0 if beta == 0.0 else beta * delta / (1.0 - beta)
            residual = float(np.max(np.abs(sweep(v)[0] - v)))
            return v, policy, it, residual, bound
    raise IterationLimitError("nested-risk value iteration did not converge", delta, max_iters)


def solve_recursive(m, spec, tol=1e-9, max_iters=MAX_ITERS):
    """Fixed point of L with a stationary argmax policy attached."""
    m.require_valid()
    v, policy, it, residual, bound = _iterate(
        m, lambda v: recursive_bellman_L(m, spec, v), tol, max_iters)
    return SolveReport(
        criterion="recursive_oce",
        value=value_dict(m, v),
        policy=dict(policy.choice),
        iterations=it,
        residual=residual,
        error_bound=bound,
        extras={"utility": spec.to_json()},
    )


def entropic_fast_path(m, gamma, tol=1e-9, max_iters=MAX_ITERS):
    """Vectorized entropic recursion, equal to :func:`solve_recursive` with
    the entropic utility (same values within iteration tolerance, identical
    argmax under the first-in-order tie-break)."""
    m.require_valid()
    _check_gamma_range(m, gamma)
    beta = m.discount
    logq = np.where(m.kernel > 0.0, np.log(np.where(m.kernel > 0.0, m.kernel, 1.0)), -np.inf)

    def sweep(v):
        # -(1/gamma) ln sum_y q e^{-gamma v(y)}, batched over (x, a);
        # inadmissible rows are all-zero kernels, zero their risk before the
        # beta multiply so beta = 0 cannot produce 0 * inf
        risk = -logsumexp(logq - gamma * v[None, None, :], axis=2) / gamma
        risk = np.where(m.admissible_mask, risk, 0.0)
        q = np.where(m.admissible_mask, m.reward + beta * risk, -np.inf)
        idx = np.argmax(q, axis=1)
        policy = StationaryPolicy({s: m.actions[idx[i]] for i, s in enumerate(m.states)})
        return q.max(axis=1), policy

    v, policy, it, residual, bound = _iterate(m, sweep, tol, max_iters)
    return SolveReport(
        criterion="recursive_oce",
        value=value_dict(m, v),
        policy=dict(policy.choice),
        iterations=it,
        residual=residual,
        error_bound=bound,
        extras={"utility": {"type": "entropic", "gamma": gamma}, "fast_path": True},
    )


def policy_evaluation_recursive(m, spec, policy, tol=1e-9, max_iters=MAX_ITERS):
    """Fixed point of L_f (no maximization) for a stationary policy."""
    m.require_valid()
    idx = policy.indices(m)

    def sweep(v):
        out = np.empty(m.n_states)
        for si in range(m.n_states):
            risk = oce(push_forward(m, si, idx[si], v), spec).value
            out[si] = m.reward[si, idx[si]] + m.discount * risk
        return out, policy

    v, _, _, _, _ = _iterate(m, sweep, tol, max_iters)
    return value_dict(m, v)


def n_stage_value(m, spec, stage_policy, n_stages):
    """J_N under a stage policy: the N-fold composition of the per-stage
    operators applied to the zero function (stage N-1 innermost)."""
    m.require_valid()
    v = np.zeros(m.n_states)
    for k in reversed(range(n_stages)):
        rule = stage_policy.rule_at(k)
        idx = rule.indices(m)
        out = np.empty(m.n_states)
        for si in range(m.n_states):
            risk = oce(push_forward(m, si, idx[si], v), spec).value
            out[si] = m.reward[si, idx[si]] + m.discount * risk
        v = out
    return value_dict(m, v)
