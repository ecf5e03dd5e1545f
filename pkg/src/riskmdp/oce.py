"""Optimized certainty equivalents of finite-support distributions.

The reward-side functional evaluated here is

    S_u(X) = sup_eta { eta + E[u(X - eta)] }

for a proper, closed, concave, non-decreasing utility u with u(0) = 0 and
u'_+(0) <= 1 <= u'_-(0).  The interpretation: consume ``eta`` today, value the
remainder by expected utility, and optimize the split.  For bounded X the
supremum can be restricted to the support interval, which is what the
numerical search does.

Supported utility kinds and their closed forms:

* entropic, u(t) = (1 - exp(-gamma t)) / gamma:
      S_u(X) = -(1/gamma) ln E[exp(-gamma X)]
  (coincides with the classical certainty equivalent u^{-1} E u(X));
* cvar, u(t) = t/alpha for t < 0 and 0 for t >= 0:
      S_u(X) = -CVaR_alpha(X),  CVaR_alpha(X) = inf_eta { E[(eta-X)^+]/alpha - eta }
  i.e. minus the mean of the worst alpha-fraction of outcomes;
* mean_variance, u(t) = t - t^2/2 capped at 1/2:
      S_u(X) = E X - Var(X)/2  whenever max X <= 1 + E X;
* piecewise_linear, any concave non-decreasing piecewise-linear u.

The cost-side companion S_l(X) = inf_eta { eta + E[l(X - eta)] } with the
convex loss l(t) = -u(-t) is provided by :func:`oce_cost` and satisfies
S_l(X) = -S_u(-X) exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DistributionError, ParameterError, UnsupportedUtilityError

_MASS_TOL = 1e-12
_GOLDEN_TOL = 1e-10
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class DiscreteDistribution:
    """Finite-support probability distribution over real payoffs.

    Atoms with zero probability are accepted and ignored by every statistic.
    Instances are immutable after construction.
    """

    __slots__ = ("values", "probs")

    def __init__(self, values, probs):
        values = np.asarray(values, dtype=float)
        probs = np.asarray(probs, dtype=float)
        if values.ndim != 1 or values.shape != probs.shape or values.size == 0:
            raise DistributionError("atoms must be two equal-length, non-empty vectors")
        if not np.all(np.isfinite(values)):
            raise DistributionError("atom values must all be finite")
        if np.any(probs < 0.0) or not np.all(np.isfinite(probs)):
            raise DistributionError("probabilities must be finite and >= 0")
        if abs(probs.sum() - 1.0) > _MASS_TOL:
            raise DistributionError(
                f"probabilities sum to {probs.sum()!r}, expected 1 within {_MASS_TOL}"
            )
        keep = probs > 0.0
        if not keep.any():
            raise DistributionError("support is empty (all probabilities zero)")
        self.values = values[keep]
        self.probs = probs[keep]

    @classmethod
    def from_atoms(cls, atoms):
        """Build from an iterable of (value, probability) pairs."""
        pairs = list(atoms)
        if not pairs:
            raise DistributionError("no atoms given")
        return cls([v for v, _ in pairs], [p for _, p in pairs])

    @classmethod
    def point_mass(cls, value):
        return cls([value], [1.0])

    @property
    def atoms(self):
        return list(zip(self.values.tolist(), self.probs.tolist()))

    @property
    def support_min(self):
        return float(self.values.min())

    @property
    def support_max(self):
        return float(self.values.max())

    @property
    def is_degenerate(self):
        return bool(np.all(self.values == self.values[0]))

    def mean(self):
        return float(self.probs @ self.values)

    def variance(self):
        m = self.mean()
        return float(self.probs @ (self.values - m) ** 2)

    def shifted(self, c):
        return DiscreteDistribution(self.values + c, self.probs)

    def scaled(self, c):
        return DiscreteDistribution(self.values * c, self.probs)

    def negated(self):
        return DiscreteDistribution(-self.values, self.probs)

    def merged(self):
        """Combine atoms with identical values (sorted ascending)."""
        vals, inverse = np.unique(self.values, return_inverse=True)
        mass = np.bincount(inverse, weights=self.probs, minlength=vals.size)
        return DiscreteDistribution(vals, mass / mass.sum())

    def __repr__(self):
        inner = ", ".join(f"{v:g}@{p:g}" for v, p in self.atoms)
        return f"DiscreteDistribution({inner})"


@dataclass(frozen=True)
class UtilitySpec:
    """Tagged description of the utility u generating the certainty equivalent.

    ``kind`` is one of ``entropic``, ``cvar``, ``mean_variance``,
    ``piecewise_linear``.  Risk parameters live in ``gamma`` / ``alpha`` /
    ``points`` according to the kind.
    """

    kind: str
    gamma: float | None = None
    alpha: float | None = None
    points: tuple[tuple[float, float], ...] | None = None

    @classmethod
    def entropic(cls, gamma):
        if not (gamma > 0.0 and math.isfinite(gamma)):
            raise ParameterError(f"entropic risk aversion must be > 0, got {gamma}")
        return cls(kind="entropic", gamma=float(gamma))

    @classmethod
    def cvar(cls, alpha):
        if not (0.0 < alpha < 1.0):
            raise ParameterError(f"cvar level must lie in (0, 1), got {alpha}")
        return cls(kind="cvar", alpha=float(alpha))

    @classmethod
    def mean_variance(cls):
        return cls(kind="mean_variance")

    @classmethod
    def piecewise_linear(cls, points):
        pts = tuple((float(t), float(v)) for t, v in points)
        if len(pts) < 2:
            raise ParameterError("piecewise-linear utility needs at least two points")
        ts = np.array([t for t, _ in pts])
        us = np.array([v for _, v in pts])
        if np.any(np.diff(ts) <= 0.0):
            raise ParameterError("breakpoints must be strictly increasing in t")
        slopes = np.diff(us) / np.diff(ts)
        if np.any(slopes < -1e-12):
            raise ParameterError("utility must be non-decreasing (all slopes >= 0)")
        if np.any(np.diff(slopes) > 1e-12):
            raise ParameterError("utility must be concave (slopes non-increasing)")
        spec = cls(kind="piecewise_linear", points=pts)
        if abs(spec.u(0.0)) > 1e-12:
            raise ParameterError("utility must satisfy u(0) = 0")
        left, right = spec._slopes_at_zero()
        if left < 1.0 - 1e-12 or right > 1.0 + 1e-12:
            raise ParameterError(
                f"utility must satisfy u'_-(0) >= 1 >= u'_+(0), got {left}, {right}"
            )
        return spec

    def _slopes_at_zero(self):
        """Segment slopes immediately left and right of t = 0.

        The function extends past the first/last breakpoint with the end
        slopes, so positions outside the breakpoint range use those.
        """
        ts = np.array([t for t, _ in self.points])
        us = np.array([v for _, v in self.points])
        slopes = np.diff(us) / np.diff(ts)
        if 0.0 <= ts[0]:
            left = slopes[0]
        elif 0.0 > ts[-1]:
            left = slopes[-1]
        else:  # ts[j] < 0 <= ts[j+1]
            left = slopes[np.searchsorted(ts, 0.0, side="left") - 1]
        if 0.0 >= ts[-1]:
            right = slopes[-1]
        elif 0.0 < ts[0]:
            right = slopes[0]
        else:  # ts[j] <= 0 < ts[j+1]
            right = slopes[np.searchsorted(ts, 0.0, side="right") - 1]
        return float(left), float(right)

    def u(self, t):
        """Evaluate the utility, vectorized over t."""
        t = np.asarray(t, dtype=float)
        if self.kind == "entropic":
            g = self.gamma
            out = -np.expm1(-g * t) / g
        elif self.kind == "cvar":
            out = np.minimum(t, 0.0) / self.alpha
        elif self.kind == "mean_variance":
            out = np.where(t < 1.0, t - 0.5 * t * t, 0.5)
        elif self.kind == "piecewise_linear":
            ts = np.array([p[0] for p in self.points])
            us = np.array([p[1] for p in self.points])
            out = np.interp(t, ts, us)
            s_lo = (us[1] - us[0]) / (ts[1] - ts[0])
            s_hi = (us[-1] - us[-2]) / (ts[-1] - ts[-2])
            out = np.where(t < ts[0], us[0] + s_lo * (t - ts[0]), out)
            out = np.where(t > ts[-1], us[-1] + s_hi * (t - ts[-1]), out)
        else:
            raise UnsupportedUtilityError(f"unknown utility kind {self.kind!r}")
        return out if out.ndim else float(out)

    def to_json(self):
        if self.kind == "entropic":
            return {"type": "entropic", "gamma": self.gamma}
        if self.kind == "cvar":
            return {"type": "cvar", "alpha": self.alpha}
        if self.kind == "mean_variance":
            return {"type": "mean_variance"}
        return {"type": "piecewise_linear", "points": [list(p) for p in self.points]}

    @classmethod
    def from_json(cls, obj):
        if not isinstance(obj, dict):
            raise ParameterError(f"utility spec must be a JSON object, got {type(obj).__name__}")
        kind = obj.get("type")
        if kind == "entropic":
            return cls.entropic(obj["gamma"])
        if kind == "cvar":
            return cls.cvar(obj["alpha"])
        if kind == "mean_variance":
            return cls.mean_variance()
        if kind == "piecewise_linear":
            return cls.piecewise_linear(obj["points"])
        raise ParameterError(f"unknown utility type {kind!r}")


@dataclass
class OceResult:
    """Value and maximizing consumption split of one OCE evaluation."""

    value: float
    eta_star: float
    objective_evals: int = 0


def _objective(dist, spec, eta):
    """eta + E u(X - eta), vectorized over eta."""
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    args = dist.values[None, :] - eta[:, None]
    vals = eta + spec.u(args) @ dist.probs
    return vals


def _golden_max(dist, spec, lo, hi):
    """Golden-section search for the concave objective on [lo, hi].

    The objective is concave in eta because u is concave, so the search is
    exact up to the bracketing tolerance.  Returns (eta, value, evals).
    """
    evals = 0
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc = _objective(dist, spec, c)[0]
    fd = _objective(dist, spec, d)[0]
    evals += 2
    while b - a > _GOLDEN_TOL:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = _objective(dist, spec, c)[0]
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = _objective(dist, spec, d)[0]
        evals += 1
    eta = 0.5 * (a + b)
    return eta, _objective(dist, spec, eta)[0], evals + 1


def _kink_candidates(dist, spec, lo, hi):
    """Candidate maximizers where the objective may be non-smooth.

    Kinks of eta -> E u(X - eta) sit where some X_i - eta crosses a kink of u:
    at eta = v_i for cvar, and eta = v_i - t_j for piecewise-linear u.
    Including them makes the search exact for piecewise-linear kinds.
    """
    cands = [lo, hi]
    if spec.kind == "cvar":
        cands.extend(dist.values.tolist())
    elif spec.kind == "piecewise_linear":
        for t, _ in spec.points:
            cands.extend((dist.values - t).tolist())
    return [c for c in cands if lo <= c <= hi]


def oce_generic(dist, spec):
    """The direct search path of :func:`oce`, no closed-form dispatch.

    Golden-section over the support interval (the objective is concave)
    followed by an exact sweep of the kink candidates, which makes
    piecewise-linear utilities exact.  Exposed so the closed forms can be
    cross-checked against it.
    """
    if dist.is_degenerate:
        v = float(dist.values[0])
        return OceResult(value=v, eta_star=v, objective_evals=0)
    lo, hi = dist.support_min, dist.support_max
    eta, val, evals = _golden_max(dist, spec, lo, hi)
    cands = _kink_candidates(dist, spec, lo, hi)
    cand_vals = _objective(dist, spec, cands)
    evals += len(cands)
    best = int(np.argmax(cand_vals))
    if cand_vals[best] > val:
        eta, val = cands[best], float(cand_vals[best])
    return OceResult(value=float(val), eta_star=float(eta), objective_evals=evals)


def oce(dist, spec):
    """Reward-side optimized certainty equivalent S_u(X).

    Dispatches to the entropic / cvar closed forms; the other kinds run
    :func:`oce_generic`.
    """
    if spec.kind == "entropic":
        v = entropic(dist, spec.gamma)
        # first-order condition E exp(-gamma (X - eta)) = 1 puts the
        # maximizer at the entropic value itself
        return OceResult(value=v, eta_star=v, objective_evals=1)
    if dist.is_degenerate:
        v = float(dist.values[0])
        return OceResult(value=v, eta_star=v, objective_evals=0)
    if spec.kind == "cvar":
        risk = cvar(dist, spec.alpha)
        return OceResult(value=-risk, eta_star=_lower_quantile(dist, spec.alpha), objective_evals=1)
    return oce_generic(dist, spec)


def oce_cost(dist, spec):
    """Cost-side optimized certainty equivalent S_l(X), l(t) = -u(-t).

    Computed through the exact mirror identity S_l(X) = -S_u(-X); the
    minimizing eta is the negated maximizer of the mirrored problem.  The
    result dominates E[X] (convex-side Jensen).
    """
    mirrored = oce(dist.negated(), spec)
    return OceResult(
        value=-mirrored.value,
        eta_star=-mirrored.eta_star,
        objective_evals=mirrored.objective_evals,
    )


def entropic(dist, gamma):
    """Entropic risk value -(1/gamma) ln E[exp(-gamma X)], log-sum-exp stabilized."""
    if not (gamma > 0.0 and math.isfinite(gamma)):
        raise ParameterError(f"entropic risk aversion must be > 0, got {gamma}")
    return float(-logsumexp(-gamma * dist.values, b=dist.probs) / gamma)


def _lower_quantile(dist, alpha):
    """Smallest t with P(X <= t) >= alpha (a maximizer of the cvar objective)."""
    order = np.argsort(dist.values, kind="stable")
    cum = np.cumsum(dist.probs[order])
    idx = int(np.searchsorted(cum, alpha - 1e-15))
    return float(dist.values[order][min(idx, dist.values.size - 1)])


def cvar(dist, alpha):
    """Conditional value-at-risk: the mean of the worst alpha-tail of losses.

    Losses are -X.  Atoms straddling the alpha boundary are split
    fractionally, which reproduces inf_eta { E[(eta-X)^+]/alpha - eta }
    exactly on finite support.
    """
    if not (0.0 < alpha < 1.0):
        raise ParameterError(f"cvar level must lie in (0, 1), got {alpha}")
    order = np.argsort(dist.values, kind="stable")  # ascending reward = descending loss
    vals = dist.values[order]
    mass = dist.probs[order]
    take = np.minimum(mass, np.maximum(alpha - np.concatenate(([0.0], np.cumsum(mass)[:-1])), 0.0))
    return float((take @ -vals) / alpha)


def certainty_equivalent(dist, spec):
    """Classical certainty equivalent u^{-1}(E u(X)).

    Only the entropic kind has a strictly increasing invertible u here, and
    for it the certainty equivalent coincides with the optimized one, so the
    call forwards to :func:`entropic`.
    """
    if spec.kind != "entropic":
        raise UnsupportedUtilityError(
            f"certainty equivalent needs an invertible utility; kind {spec.kind!r} is not"
        )
    return entropic(dist, spec.gamma)
