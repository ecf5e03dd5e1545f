"""Built-in demonstration models, exportable through the CLI.

* ``jaquette``: the classic 3-state gamble-selection chain: the only choice
  sits at state 1 between a fair 50/50 branch (actions lead to a zero-reward
  and a high-reward successor) and a safer 90/10 branch with an immediate
  payment; states 2 and 3 return to state 1 deterministically.  Discount 1/2.
  The risk-neutral, nested-risk, and total-reward criteria all pick different
  policies on it, which makes it the standard cross-criterion witness.

* ``invariant_model``: two states, transition probabilities independent of
  the current state (rows all (1/2, 1/2)), costs 0 and 1, a single action.
  Its multiplicative Poisson equation is solvable by hand: the growth factor
  is (1 + e^gamma)/2.

* ``inventory_toy``: a four-level base-stock inventory chain with uniform
  demand on {0, 1, 2, 3}, sale price 3, unit order cost 1 and 0.5 per unit
  expected leftover holding cost on the cost side.  Demand can clear any
  stock level, so every ordering policy induces a unichain.
"""

from __future__ import annotations

from .mdp import FiniteMdp, StationaryPolicy


def jaquette():
    return FiniteMdp(
        states=["1", "2", "3"],
        actions=["a", "b1", "b2"],
        admissible={"1": ["b1", "b2"], "2": ["a"], "3": ["a"]},
        transitions={
            "1": {"b1": {"2": 0.5, "3": 0.5}, "b2": {"2": 0.9, "3": 0.1}},
            "2": {"a": {"1": 1.0}},
            "3": {"a": {"1": 1.0}},
        },
        rewards={"1": {"b1": 0.0, "b2": 1.0}, "2": {"a": 0.0}, "3": {"a": 8.0}},
        discount=0.5,
    )


def jaquette_policy(name):
    """The two stationary rules: 'f' gambles (b1), 'g' takes the safe branch (b2)."""
    if name not in ("f", "g"):
        raise KeyError(f"jaquette has policies 'f' and 'g', not {name!r}")
    return StationaryPolicy({"1": "b1" if name == "f" else "b2", "2": "a", "3": "a"})


def invariant_model():
    return FiniteMdp(
        states=["s0", "s1"],
        actions=["a"],
        admissible={"s0": ["a"], "s1": ["a"]},
        transitions={
            "s0": {"a": {"s0": 0.5, "s1": 0.5}},
            "s1": {"a": {"s0": 0.5, "s1": 0.5}},
        },
        rewards={"s0": {"a": 0.0}, "s1": {"a": 1.0}},
        costs={"s0": {"a": 0.0}, "s1": {"a": 1.0}},
        discount=0.5,
    )


def inventory_toy(capacity=3, price=3.0, order_cost=1.0, holding=0.5, discount=0.9):
    """Base-stock inventory model with demand uniform on {0, ..., capacity}."""
    demand = [(d, 1.0 / (capacity + 1)) for d in range(capacity + 1)]
    states = [str(x) for x in range(capacity + 1)]
    actions = [f"order{o}" for o in range(capacity + 1)]
    admissible = {str(x): [f"order{o}" for o in range(capacity - x + 1)]
                  for x in range(capacity + 1)}
    transitions = {}
    rewards = {}
    costs = {}
    for x in range(capacity + 1):
        transitions[str(x)] = {}
        rewards[str(x)] = {}
        costs[str(x)] = {}
        for o in range(capacity - x + 1):
            stock = x + o
            row = {}
            exp_sales = 0.0
            exp_left = 0.0
            for d, p in demand:
                sold = min(d, stock)
                left = stock - sold
                row[str(left)] = row.get(str(left), 0.0) + p
                exp_sales += p * sold
                exp_left += p * left
            a = f"order{o}"
            transitions[str(x)][a] = row
            rewards[str(x)][a] = price * exp_sales - order_cost * o
            costs[str(x)][a] = order_cost * o + holding * exp_left
    return FiniteMdp(
        states=states,
        actions=actions,
        admissible=admissible,
        transitions=transitions,
        rewards=rewards,
        costs=costs,
        discount=discount,
    )


FIXTURES = {
    "jaquette": jaquette,
    "invariant_model": invariant_model,
    "inventory_toy": inventory_toy,
}
