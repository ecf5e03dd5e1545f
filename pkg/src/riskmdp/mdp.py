"""Finite MDP data model, validation, file I/O, and induced-chain utilities.

A model consists of ordered state and action id lists, a nonempty admissible
action set per state, a transition kernel row per admissible pair, a
nonnegative bounded reward table, an optional nonnegative cost table, and a
discount factor in [0, 1).  State and action ids are strings in files and are
mapped to dense indices internally; the declared file order fixes every
iteration order, so runs are reproducible.

Rewards are required to be nonnegative; negative inputs are rejected rather
than shifted (shift additivity of the criteria is the caller-side remedy).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    EnumerationCapError,
    ModelFormatError,
    ModelValidationError,
    PolicyError,
)

_ROW_TOL = 1e-12


class FiniteMdp:
    """Immutable tabular MDP.

    Construction is lenient so that :meth:`validate` can report semantic
    violations (bad row sums, negative rewards, empty admissible sets) instead
    of throwing; structural problems (unknown ids, wrong types) are rejected
    during parsing.
    """

    def __init__(self, states, actions, admissible, transitions, rewards,
                 costs=None, discount=0.0):
        self.states = list(states)
        self.actions = list(actions)
        self.state_index = {s: i for i, s in enumerate(self.states)}
        self.action_index = {a: i for i, a in enumerate(self.actions)}
        if len(self.state_index) != len(self.states):
            raise ModelFormatError("duplicate state ids", "/states")
        if len(self.action_index) != len(self.actions):
            raise ModelFormatError("duplicate action ids", "/actions")
        self.discount = float(discount)

        ns, na = len(self.states), len(self.actions)
        self.admissible_mask = np.zeros((ns, na), dtype=bool)
        raw_admissible = {s: list(admissible.get(s, [])) for s in self.states}
        for s, acts in raw_admissible.items():
            for a in acts:
                if a not in self.action_index:
                    raise ModelFormatError(f"unknown action {a!r}", f"/admissible/{s}")
                self.admissible_mask[self.state_index[s], self.action_index[a]] = True
        # canonical per-state order = declared action order, so every
        # tie-break (vectorized argmax or per-state loop) agrees
        self.admissible = {
            s: sorted(raw_admissible[s], key=self.action_index.__getitem__)
            for s in self.states
        }

        self.kernel = np.zeros((ns, na, ns))
        for s, row in transitions.items():
            si = self._sidx(s, "/transitions")
            for a, dist in row.items():
                ai = self._aidx(a, f"/transitions/{s}")
                for y, p in dist.items():
                    yi = self._sidx(y, f"/transitions/{s}/{a}")
                    self.kernel[si, ai, yi] = float(p)

        self.reward = np.zeros((ns, na))
        for s, row in rewards.items():
            si = self._sidx(s, "/rewards")
            for a, r in row.items():
                self.reward[si, self._aidx(a, f"/rewards/{s}")] = float(r)

        self.cost = None
        if costs is not None:
            self.cost = np.zeros((ns, na))
            for s, row in costs.items():
                si = self._sidx(s, "/costs")
                for a, c in row.items():
                    self.cost[si, self._aidx(a, f"/costs/{s}")] = float(c)

    def _sidx(self, s, pointer):
        try:
            return self.state_index[s]
        except KeyError:
            raise ModelFormatError(f"unknown state {s!r}", pointer) from None

    def _aidx(self, a, pointer):
        try:
            return self.action_index[a]
        except KeyError:
            raise ModelFormatError(f"unknown action {a!r}", pointer) from None

    @property
    def n_states(self):
        return len(self.states)

    @property
    def n_actions(self):
        return len(self.actions)

    @property
    def reward_bound(self):
        """Upper reward bound d = max admissible r(x, a)."""
        if not self.admissible_mask.any():
            return 0.0
        return float(self.reward[self.admissible_mask].max())

    def admissible_actions(self, state):
        return list(self.admissible[state])

    def admissible_pairs(self):
        """(state_index, action_index) pairs in declared order."""
        out = []
        for si, s in enumerate(self.states):
            for a in self.admissible[s]:
                out.append((si, self.action_index[a]))
        return out

    # -- validation ---------------------------------------------------------

    def validate(self, for_discounted=True):
        """Return the list of invariant violations (empty iff the model is sound)."""
        out = []
        for s in self.states:
            if not self.admissible[s]:
                out.append(f"admissible[{s}]: empty action set")
            seen = set()
            for a in self.admissible[s]:
                if a in seen:
                    out.append(f"admissible[{s}]: duplicate action {a}")
                seen.add(a)
        for si, s in enumerate(self.states):
            for a in self.admissible[s]:
                ai = self.action_index[a]
                row = self.kernel[si, ai]
                total = row.sum()
                if abs(total - 1.0) > _ROW_TOL:
                    out.append(f"transitions[{s}][{a}]: row sums to {total!r}, expected 1")
                if np.any(row < 0.0):
                    out.append(f"transitions[{s}][{a}]: negative probability")
                r = self.reward[si, ai]
                if not math.isfinite(r) or r < 0.0:
                    out.append(f"rewards[{s}][{a}]: must be finite and >= 0, got {r!r}")
                if self.cost is not None:
                    c = self.cost[si, ai]
                    if not math.isfinite(c) or c < 0.0:
                        out.append(f"costs[{s}][{a}]: must be finite and >= 0, got {c!r}")
        if for_discounted and not (0.0 <= self.discount < 1.0):
            out.append(f"discount: must lie in [0, 1), got {self.discount!r}")
        return out

    def require_valid(self, for_discounted=True):
        violations = self.validate(for_discounted)
        if violations:
            raise ModelValidationError(violations)
        return self

    # -- serialization ------------------------------------------------------

    def to_dict(self):
        """Canonical dict form: declared-order keys, zero probabilities dropped."""
        trans = {}
        rew = {}
        cost = {} if self.cost is not None else None
        for si, s in enumerate(self.states):
            trans[s] = {}
            rew[s] = {}
            if cost is not None:
                cost[s] = {}
            for a in self.admissible[s]:
                ai = self.action_index[a]
                trans[s][a] = {
                    y: float(self.kernel[si, ai, yi])
                    for yi, y in enumerate(self.states)
                    if self.kernel[si, ai, yi] != 0.0
                }
                rew[s][a] = float(self.reward[si, ai])
                if cost is not None:
                    cost[s][a] = float(self.cost[si, ai])
        out = {
            "states": list(self.states),
            "actions": list(self.actions),
            "admissible": {s: list(self.admissible[s]) for s in self.states},
            "transitions": trans,
            "rewards": rew,
            "discount": self.discount,
        }
        if cost is not None:
            out["costs"] = cost
        return out

    @classmethod
    def from_dict(cls, obj):
        if not isinstance(obj, dict):
            raise ModelFormatError("model must be a JSON object", "")
        for key, typ in (("states", list), ("actions", list), ("admissible", dict),
                         ("transitions", dict), ("rewards", dict)):
            if key not in obj:
                raise ModelFormatError(f"missing required field {key!r}", f"/{key}")
            if not isinstance(obj[key], typ):
                raise ModelFormatError(f"field {key!r} has wrong type", f"/{key}")
        if "discount" not in obj:
            raise ModelFormatError("missing required field 'discount'", "/discount")
        if not isinstance(obj["discount"], (int, float)) or isinstance(obj["discount"], bool):
            raise ModelFormatError("field 'discount' must be a number", "/discount")
        return cls(
            states=[str(s) for s in obj["states"]],
            actions=[str(a) for a in obj["actions"]],
            admissible=obj["admissible"],
            transitions=obj["transitions"],
            rewards=obj["rewards"],
            costs=obj.get("costs"),
            discount=obj["discount"],
        )

    def __eq__(self, other):
        return isinstance(other, FiniteMdp) and self.to_dict() == other.to_dict()


def save(m, path):
    """Write the canonical JSON form."""
    with open(path, "w") as fh:
        json.dump(m.to_dict(), fh, indent=2)
        fh.write("\n")


def load(path, validate=True):
    """Read, parse, and (by default) validate a model file."""
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"not valid JSON: {exc}", "") from exc
    m = FiniteMdp.from_dict(obj)
    if validate:
        m.require_valid(for_discounted=False)
    return m


# -- policies ----------------------------------------------------------------


@dataclass(frozen=True)
class StationaryPolicy:
    """One decision rule applied at every stage: state id -> action id."""

    choice: dict

    def action(self, state):
        return self.choice[state]

    def indices(self, m):
        """Action index per state index; raises if any choice is inadmissible."""
        out = np.empty(m.n_states, dtype=int)
        for s in m.states:
            a = self.choice.get(s)
            if a is None or a not in m.admissible[s]:
                raise PolicyError(f"policy picks {a!r} at state {s!r}, admissible: {m.admissible[s]}")
            out[m.state_index[s]] = m.action_index[a]
        return out

    def __hash__(self):
        return hash(tuple(sorted(self.choice.items())))


@dataclass(frozen=True)
class StagePolicy:
    """Stage-dependent rules for stages 0..N-1 plus a stationary tail."""

    stages: tuple
    tail: StationaryPolicy

    def rule_at(self, stage):
        if stage < len(self.stages):
            return self.stages[stage]
        return self.tail

    @property
    def horizon(self):
        return len(self.stages)


def first_admissible_policy(m):
    return StationaryPolicy({s: m.admissible[s][0] for s in m.states})


def enumerate_policies(m, cap=10**6):
    """All stationary deterministic policies in declared action order.

    Raises :class:`EnumerationCapError` when the product of admissible-set
    sizes exceeds ``cap``.
    """
    count = 1
    for s in m.states:
        count *= max(len(m.admissible[s]), 1)
    if count > cap:
        raise EnumerationCapError(count, cap)
    pools = [m.admissible[s] for s in m.states]
    return [StationaryPolicy(dict(zip(m.states, combo)))
            for combo in itertools.product(*pools)]


def induced_chain(m, policy):
    """Row-stochastic matrix P_f plus reward / cost vectors under ``policy``."""
    idx = policy.indices(m)
    rows = np.arange(m.n_states)
    P = m.kernel[rows, idx, :]
    r = m.reward[rows, idx]
    c = m.cost[rows, idx] if m.cost is not None else None
    return P, r, c


# -- chain structure ----------------------------------------------------------


def _reachability(P):
    """Boolean closure: reach[i, j] iff j is reachable from i in >= 1 steps."""
    adj = P > 0.0
    reach = adj.copy()
    for _ in range(int(math.ceil(math.log2(max(P.shape[0], 2)))) + 1):
        reach = reach | (reach @ adj)
    return reach


def chain_period(P, states_in_class):
    """Period of an irreducible class: gcd of (level(u) + 1 - level(v)) over edges.

    Levels come from a BFS inside the class; the gcd of all level slacks along
    edges equals the cycle-length gcd.
    """
    members = sorted(states_in_class)
    pos = {s: k for k, s in enumerate(members)}
    level = {members[0]: 0}
    frontier = [members[0]]
    while frontier:
        nxt = []
        for u in frontier:
            for v in members:
                if P[u, v] > 0.0 and v not in level:
                    level[v] = level[u] + 1
                    nxt.append(v)
        frontier = nxt
    g = 0
    for u in members:
        for v in members:
            if P[u, v] > 0.0:
                g = math.gcd(g, level[u] + 1 - level[v])
    return abs(g) if g != 0 else 1


@dataclass
class ChainReport:
    """Structure of the chain induced by one stationary policy."""

    policy: StationaryPolicy
    irreducible: bool
    unichain: bool
    n_recurrent_classes: int
    period: int | None  # of the unique recurrent class when unichain

    @property
    def aperiodic(self):
        return self.period == 1


def analyze_chain(m, policy):
    P, _, _ = induced_chain(m, policy)
    n = m.n_states
    reach = _reachability(P)
    # communicating classes: mutual reachability (a state communicates with itself)
    comm = (reach & reach.T) | np.eye(n, dtype=bool)
    seen = np.zeros(n, dtype=bool)
    classes = []
    for i in range(n):
        if not seen[i]:
            cls = np.flatnonzero(comm[i])
            seen[cls] = True
            classes.append(cls)
    closed = []
    for cls in classes:
        inside = np.zeros(n, dtype=bool)
        inside[cls] = True
        if not np.any(P[cls][:, ~inside] > 0.0):
            closed.append(cls)
    unichain = len(closed) == 1
    irreducible = len(classes) == 1
    period = chain_period(P, list(closed[0])) if unichain else None
    return ChainReport(policy, irreducible, unichain, len(closed), period)


@dataclass
class UnichainCheck:
    """Aggregate of per-policy chain reports, possibly on a sampled subset."""

    reports: list
    exhaustive: bool

    @property
    def all_unichain(self):
        return all(r.unichain for r in self.reports)

    @property
    def all_irreducible(self):
        return all(r.irreducible for r in self.reports)

    @property
    def flagged(self):
        return [r for r in self.reports if not r.unichain or not r.aperiodic]

    def first_reducible(self):
        for r in self.reports:
            if not r.unichain:
                return r
        return None


def check_unichain_aperiodic(m, cap=10**6, sample=None, seed=0):
    """Analyze the chain of every stationary policy (or a sampled subset).

    With ``sample=None`` the policy space is enumerated and
    :class:`EnumerationCapError` is raised beyond ``cap``; with an integer
    ``sample`` that many policies are drawn uniformly with a seeded generator
    and the result is marked non-exhaustive.
    """
    if sample is None:
        policies = enumerate_policies(m, cap=cap)
        exhaustive = True
    else:
        rng = np.random.default_rng(seed)
        policies = []
        for _ in range(sample):
            policies.append(StationaryPolicy(
                {s: m.admissible[s][rng.integers(len(m.admissible[s]))] for s in m.states}
            ))
        exhaustive = False
    return UnichainCheck([analyze_chain(m, f) for f in policies], exhaustive)


def value_dict(m, vec):
    """Pair a dense value vector with state ids, preserving declared order."""
    return {s: float(vec[i]) for i, s in enumerate(m.states)}
