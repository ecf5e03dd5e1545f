import math

import numpy as np
import pytest

from riskmdp import fixtures
from riskmdp.mdp import StagePolicy
from riskmdp.neutral import bellman_T, value_iteration
from riskmdp.oce import UtilitySpec
from riskmdp.recursive import (
    entropic_fast_path,
    n_stage_value,
    policy_evaluation_recursive,
    recursive_bellman_L,
    solve_recursive,
)

from conftest import random_mdp

# fixed point under the safe-branch policy, solved by hand:
# V1 = 1 + V1/4 - ln(0.9 + 0.1 e^-8)/2
JAQUETTE_NESTED_V1 = (4.0 / 3.0) * (1.0 + math.log(math.sqrt(10.0 / (9.0 + math.exp(-8.0)))))

KINDS = [
    UtilitySpec.entropic(1.0),
    UtilitySpec.cvar(0.25),
    UtilitySpec.mean_variance(),
    UtilitySpec.piecewise_linear([(-2.0, -4.0), (0.0, 0.0), (2.0, 1.0)]),
]


class TestOperator:
    def test_matches_risk_neutral_at_tiny_gamma(self, jaquette):
        v = np.array([1.0, 2.0, 3.0])
        lv, _ = recursive_bellman_L(jaquette, UtilitySpec.entropic(1e-8), v)
        tv, _ = bellman_T(jaquette, v)
        assert np.max(np.abs(lv - tv)) <= 1e-6

    def test_point_mass_pushforwards(self, jaquette):
        # states 2, 3 jump deterministically, so L0 equals the reward row
        lv, policy = recursive_bellman_L(jaquette, UtilitySpec.entropic(1.0), np.zeros(3))
        assert lv.tolist() == [1.0, 0.0, 8.0]
        assert policy.choice["1"] == "b2"

    def test_deterministic_kernel_reduces_to_T(self):
        rng = np.random.default_rng(21)
        from riskmdp.mdp import FiniteMdp
        states = ["s0", "s1", "s2"]
        trans = {s: {"a": {states[(i + 1) % 3]: 1.0}} for i, s in enumerate(states)}
        m = FiniteMdp(states=states, actions=["a"],
                      admissible={s: ["a"] for s in states},
                      transitions=trans,
                      rewards={s: {"a": float(rng.random())} for s in states},
                      discount=0.7)
        v = rng.uniform(0, 5, 3)
        tv, _ = bellman_T(m, v)
        for spec in KINDS:
            lv, _ = recursive_bellman_L(m, spec, v)
            assert np.max(np.abs(lv - tv)) <= 1e-12

    def test_bound_preserved(self, jaquette):
        d = jaquette.reward_bound
        v = np.full(3, d / (1 - jaquette.discount))
        for spec in KINDS:
            lv, _ = recursive_bellman_L(jaquette, spec, v)
            assert np.all(lv >= -1e-12)
            assert np.all(lv <= d + jaquette.discount * np.max(v) + 1e-12)

    def test_contraction_all_kinds(self):
        rng = np.random.default_rng(22)
        for trial in range(8):
            m = random_mdp(rng, n_states=4, n_actions=2, beta=float(rng.uniform(0.3, 0.9)))
            spec = KINDS[trial % len(KINDS)]
            for _ in range(5):
                v1 = rng.uniform(0, 8, 4)
                v2 = rng.uniform(0, 8, 4)
                lhs = np.max(np.abs(recursive_bellman_L(m, spec, v1)[0]
                                    - recursive_bellman_L(m, spec, v2)[0]))
                assert lhs <= m.discount * np.max(np.abs(v1 - v2)) + 1e-12

    def test_monotone(self):
        rng = np.random.default_rng(23)
        m = random_mdp(rng, n_states=4, n_actions=2, beta=0.8)
        for spec in KINDS:
            v = rng.uniform(0, 5, 4)
            w = v + rng.uniform(0, 3, 4)
            assert np.all(recursive_bellman_L(m, spec, v)[0]
                          <= recursive_bellman_L(m, spec, w)[0] + 1e-12)


class TestSolve:
    def test_jaquette_entropic_closed_form(self, jaquette):
        rep = solve_recursive(jaquette, UtilitySpec.entropic(1.0), tol=1e-10)
        assert rep.value["1"] == pytest.approx(JAQUETTE_NESTED_V1, abs=1e-9)
        assert rep.value["2"] == pytest.approx(rep.value["1"] / 2.0, abs=1e-9)
        assert rep.value["3"] == pytest.approx(8.0 + rep.value["1"] / 2.0, abs=1e-9)
        assert rep.policy == {"1": "b2", "2": "a", "3": "a"}

    def test_tiny_gamma_meets_risk_neutral(self, jaquette):
        rep = solve_recursive(jaquette, UtilitySpec.entropic(1e-6), tol=1e-10)
        assert rep.value["1"] == pytest.approx(8.0 / 3.0, abs=1e-4)

    def test_values_in_bounds(self):
        rng = np.random.default_rng(24)
        for trial in range(6):
            m = random_mdp(rng, n_states=4, n_actions=2, beta=0.8)
            spec = KINDS[trial % len(KINDS)]
            rep = solve_recursive(m, spec, tol=1e-9)
            top = m.reward_bound / (1 - m.discount)
            for v in rep.value.values():
                assert -1e-9 <= v <= top + 1e-9

    def test_fixed_point_residual(self, jaquette):
        rep = solve_recursive(jaquette, UtilitySpec.cvar(0.3), tol=1e-9)
        assert rep.residual <= 1e-9 * (1 - jaquette.discount) * 2

    def test_never_beats_risk_neutral(self):
        # S_u <= E pointwise, so the nested fixed point sits below the
        # risk-neutral one for every utility kind
        rng = np.random.default_rng(27)
        for trial in range(4):
            m = random_mdp(rng, n_states=4, n_actions=2, beta=0.8)
            neutral = value_iteration(m, tol=1e-10)
            spec = KINDS[trial % len(KINDS)]
            rep = solve_recursive(m, spec, tol=1e-9)
            for s in m.states:
                assert rep.value[s] <= neutral.value[s] + 1e-8


class TestFastPath:
    def test_identical_to_generic(self, jaquette):
        gen = solve_recursive(jaquette, UtilitySpec.entropic(1.0), tol=1e-10)
        fast = entropic_fast_path(jaquette, 1.0, tol=1e-10)
        for s in jaquette.states:
            assert fast.value[s] == pytest.approx(gen.value[s], abs=1e-8)
        assert fast.policy == gen.policy

    def test_identical_on_random_models(self):
        rng = np.random.default_rng(25)
        for _ in range(6):
            m = random_mdp(rng, n_states=4, n_actions=3, beta=0.8,
                           full_admissible=False)
            gamma = float(rng.uniform(0.2, 2.0))
            gen = solve_recursive(m, UtilitySpec.entropic(gamma), tol=1e-10)
            fast = entropic_fast_path(m, gamma, tol=1e-10)
            for s in m.states:
                assert fast.value[s] == pytest.approx(gen.value[s], abs=1e-8)
            assert fast.policy == gen.policy

    def test_tie_break_consistent_across_paths(self):
        # two identical actions, admissible list declared in reverse order:
        # every path must settle on the first action in declared action order
        from riskmdp.mdp import FiniteMdp
        from riskmdp.neutral import value_iteration
        m = FiniteMdp(
            states=["s0", "s1"], actions=["x", "y"],
            admissible={"s0": ["y", "x"], "s1": ["x"]},
            transitions={"s0": {"x": {"s1": 1.0}, "y": {"s1": 1.0}},
                         "s1": {"x": {"s0": 1.0}}},
            rewards={"s0": {"x": 1.0, "y": 1.0}, "s1": {"x": 0.0}},
            discount=0.5)
        assert m.admissible["s0"] == ["x", "y"]
        spec = UtilitySpec.entropic(1.0)
        gen = solve_recursive(m, spec, tol=1e-10)
        fast = entropic_fast_path(m, 1.0, tol=1e-10)
        assert gen.policy["s0"] == "x"
        assert fast.policy["s0"] == "x"
        assert value_iteration(m, tol=1e-10).policy["s0"] == "x"

    def test_deterministic_chain_gamma_irrelevant(self):
        from riskmdp.mdp import FiniteMdp
        states = ["s0", "s1"]
        m = FiniteMdp(states=states, actions=["a"],
                      admissible={s: ["a"] for s in states},
                      transitions={"s0": {"a": {"s1": 1.0}}, "s1": {"a": {"s0": 1.0}}},
                      rewards={"s0": {"a": 1.0}, "s1": {"a": 3.0}},
                      discount=0.5)
        neutral = value_iteration(m, tol=1e-11)
        fast = entropic_fast_path(m, 1.0, tol=1e-11)
        for s in states:
            assert fast.value[s] == pytest.approx(neutral.value[s], abs=1e-9)

    def test_stochastic_dominance_ordering(self):
        # shifting mass toward the better successor can only help
        from riskmdp.mdp import FiniteMdp

        def chain(p_good):
            return FiniteMdp(
                states=["root", "good", "bad"], actions=["a"],
                admissible={s: ["a"] for s in ["root", "good", "bad"]},
                transitions={
                    "root": {"a": {"good": p_good, "bad": 1.0 - p_good}},
                    "good": {"a": {"root": 1.0}},
                    "bad": {"a": {"root": 1.0}},
                },
                rewards={"root": {"a": 0.0}, "good": {"a": 5.0}, "bad": {"a": 1.0}},
                discount=0.5)

        lo = entropic_fast_path(chain(0.3), 1.0, tol=1e-10)
        hi = entropic_fast_path(chain(0.7), 1.0, tol=1e-10)
        assert hi.value["root"] > lo.value["root"]

    def test_risk_aversion_monotone_in_gamma(self):
        rng = np.random.default_rng(26)
        for _ in range(5):
            m = random_mdp(rng, n_states=4, n_actions=2, beta=0.8)
            vals = [entropic_fast_path(m, g, tol=1e-10).value for g in (0.01, 0.1, 1.0, 2.0)]
            for lo, hi in zip(vals, vals[1:]):
                for s in m.states:
                    assert hi[s] <= lo[s] + 1e-9


class TestStagewise:
    def test_zero_stages(self, jaquette):
        sp = StagePolicy(stages=(), tail=fixtures.jaquette_policy("g"))
        assert n_stage_value(jaquette, UtilitySpec.entropic(1.0), sp, 0) == {
            "1": 0.0, "2": 0.0, "3": 0.0}

    def test_two_stage_composition_by_hand(self, jaquette):
        sp = StagePolicy(stages=(), tail=fixtures.jaquette_policy("g"))
        j2 = n_stage_value(jaquette, UtilitySpec.entropic(1.0), sp, 2)
        expected = 1.0 + 0.5 * (-math.log(0.9 + 0.1 * math.exp(-8.0)))
        assert j2["1"] == pytest.approx(expected, abs=1e-12)

    def test_monotone_in_horizon_and_bounded(self, jaquette):
        sp = StagePolicy(stages=(), tail=fixtures.jaquette_policy("f"))
        spec = UtilitySpec.entropic(1.0)
        top = jaquette.reward_bound / (1 - jaquette.discount)
        prev = {s: 0.0 for s in jaquette.states}
        for n in range(1, 12):
            cur = n_stage_value(jaquette, spec, sp, n)
            for s in jaquette.states:
                assert cur[s] >= prev[s] - 1e-12
                assert cur[s] <= top + 1e-12
            prev = cur

    def test_converges_to_policy_value(self, jaquette):
        spec = UtilitySpec.entropic(1.0)
        g = fixtures.jaquette_policy("g")
        sp = StagePolicy(stages=(), tail=g)
        fixed = policy_evaluation_recursive(jaquette, spec, g, tol=1e-11)
        beta, d = jaquette.discount, jaquette.reward_bound
        n = 40
        jn = n_stage_value(jaquette, spec, sp, n)
        for s in jaquette.states:
            assert abs(jn[s] - fixed[s]) <= beta**n * d / (1 - beta) + 1e-9

    def test_optimal_policy_evaluation_matches_solve(self, jaquette):
        spec = UtilitySpec.entropic(1.0)
        rep = solve_recursive(jaquette, spec, tol=1e-10)
        val = policy_evaluation_recursive(jaquette, spec, fixtures.jaquette_policy("g"),
                                          tol=1e-10)
        for s in jaquette.states:
            assert val[s] == pytest.approx(rep.value[s], abs=1e-8)
