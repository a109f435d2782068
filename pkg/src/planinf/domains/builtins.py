"""Built-in benchmark and diagnostic domains.

Every number here (advance probabilities, payoffs, penalties) is a fixed
constant of this package, chosen so each domain exhibits one qualitative
behaviour worth testing: staged progress with an overcooking risk, a long
credit-assignment chain, a factorizing bandit, and a corridor where random
rollouts see every useful action as a losing bet.
"""

import numpy as np

from ..mdp import ACT, SAME, FactoredMDP, Parent, RewardFactor, TransitionCpt

COOK_ADVANCE = 0.8

CHAIN_ACT_ON = 0.9
CHAIN_ACT_OFF = 0.05
CHAIN_PASS_ON = 0.85
CHAIN_PASS_OFF = 0.05

CORRIDOR_GRAB_BONUS = 1.0
CORRIDOR_TRAP_COST = -2.0
CORRIDOR_GOAL_VALUE = 2.0


def _fill(shape, fn):
    out = np.zeros(shape)
    for idx in np.ndindex(*shape):
        out[idx] = fn(*idx)
    return out


def build_cooking():
    """Two dishes on one stove, three actions, five stages per dish.

    Each dish carries four bits: cookMed and cookWell ratchet up while the
    dish is on the heat, cooking marks the heat itself, and watching is a
    same-slice copy of cooking.  The heat pulses: a cook action lights it
    with probability 0.8 and it goes out again one step later, so quality
    advances one notch per pulse.  A dish showing cookMed and cookWell with
    the heat off pays 1 per step; relighting it risks the absorbing burned
    pattern (all three cooking bits on), which pays nothing forever.
    """
    transitions = {}
    rewards = []
    state_vars = []
    for d, cook_idx in ((1, 0), (2, 1)):
        med = f"d{d}.cookMed"
        well = f"d{d}.cookWell"
        heat = f"d{d}.cooking"
        watch = f"d{d}.watching"
        state_vars += [med, well, heat, watch]

        transitions[med] = TransitionCpt(
            (Parent(med), Parent("action", ACT), Parent(heat)),
            _fill((2, 3, 2), lambda m, a, c: 1.0 if m else
                  (COOK_ADVANCE if a == cook_idx and c else 0.0)))
        transitions[well] = TransitionCpt(
            (Parent(well), Parent("action", ACT), Parent(med), Parent(heat)),
            _fill((2, 3, 2, 2), lambda w, a, m, c: 1.0 if w else
                  (COOK_ADVANCE if a == cook_idx and m and c else 0.0)))

        def heat_next(m, w, c, a, cook=cook_idx):
            if m and w and c:
                return 1.0          # burned: all three bits stay locked on
            if a == cook:
                if m and w:
                    return COOK_ADVANCE   # relighting a finished dish
                return 0.0 if c else COOK_ADVANCE
            return float(c)
        transitions[heat] = TransitionCpt(
            (Parent(med), Parent(well), Parent(heat), Parent("action", ACT)),
            _fill((2, 2, 2, 3), heat_next))
        transitions[watch] = TransitionCpt(
            (Parent(heat, SAME),), np.array([0.0, 1.0]))

        rewards.append(RewardFactor(
            f"dish{d}", (Parent(med), Parent(well), Parent(heat)),
            _fill((2, 2, 2), lambda m, w, c: 1.0 if m and w and not c else 0.0)))

    return FactoredMDP(state_vars, transitions, rewards,
                       action_values=("cook-dish1", "cook-dish2", "do-nothing"),
                       horizon_default=12, name="cooking")


def build_chain_reward(m=3):
    """Signal chain: the action feeds s1, each si feeds the next, sM pays.

    The reward arrives m+1 steps after the action that caused it, and the
    unrolled network stays a tree for every lookahead, which makes this the
    reference domain for exactness checks on message passing.
    """
    if m < 1:
        raise ValueError("chain-reward needs m >= 1")
    transitions = {"s1": TransitionCpt(
        (Parent("a", ACT),), np.array([CHAIN_ACT_OFF, CHAIN_ACT_ON]))}
    for i in range(2, m + 1):
        transitions[f"s{i}"] = TransitionCpt(
            (Parent(f"s{i - 1}"),), np.array([CHAIN_PASS_OFF, CHAIN_PASS_ON]))
    reward = RewardFactor("goal", (Parent(f"s{m}"),), np.array([0.0, 1.0]))
    return FactoredMDP([f"s{i}" for i in range(1, m + 1)], transitions,
                       [reward], action_vars=["a"], horizon_default=10,
                       name=f"chain-reward-{m}")


def build_independent_arms(n=2, payoffs=None):
    """n action bits, each paying its own rate, plus one inert state bit.

    Rewards read only the action bits, so with a single live arm the
    posterior over plans is an exact product distribution.  Default payoffs
    descend linearly from 0.9 to 0.1.
    """
    if n < 1:
        raise ValueError("independent-arms needs n >= 1")
    if payoffs is None:
        payoffs = tuple(np.linspace(0.9, 0.1, n)) if n > 1 else (0.9,)
    payoffs = tuple(float(p) for p in payoffs)
    if len(payoffs) != n:
        raise ValueError("need one payoff per arm")
    transitions = {"idle": TransitionCpt((Parent("idle"),),
                                         np.array([0.0, 1.0]))}
    rewards = [RewardFactor(f"arm{l + 1}", (Parent(f"pull{l + 1}", ACT),),
                            np.array([0.0, payoffs[l]])) for l in range(n)]
    return FactoredMDP(["idle"], transitions, rewards,
                       action_vars=[f"pull{l + 1}" for l in range(n)],
                       horizon_default=6, name=f"independent-arms-{n}")


def build_penalty_corridor(depth=3):
    """Advance pays later, grabbing pays now and poisons every later step.

    Doing nothing scores exactly 0.  Walking the corridor (advance x depth,
    then wait) is the only positive plan.  Grabbing nets +1 once and -2 per
    step afterwards, so the myopic plan loses; a uniform-rollout evaluator
    sees negative continuations behind every move and freezes.
    """
    if depth < 1:
        raise ValueError("penalty-corridor needs depth >= 1")
    act = Parent("action", ACT)
    transitions = {"trap": TransitionCpt(
        (Parent("trap"), act),
        _fill((2, 3), lambda tr, a: 1.0 if tr or a == 2 else 0.0))}
    transitions["prog1"] = TransitionCpt(
        (Parent("prog1"), act),
        _fill((2, 3), lambda p, a: 1.0 if p or a == 1 else 0.0))
    for i in range(2, depth + 1):
        transitions[f"prog{i}"] = TransitionCpt(
            (Parent(f"prog{i}"), Parent(f"prog{i - 1}"), act),
            _fill((2, 2, 3), lambda p, q, a: 1.0 if p or (q and a == 1)
                  else 0.0))
    rewards = [
        RewardFactor("grab-bonus", (act,),
                     np.array([0.0, 0.0, CORRIDOR_GRAB_BONUS])),
        RewardFactor("trap-cost", (Parent("trap"),),
                     np.array([0.0, CORRIDOR_TRAP_COST])),
        RewardFactor("goal", (Parent(f"prog{depth}"),),
                     np.array([0.0, CORRIDOR_GOAL_VALUE])),
    ]
    return FactoredMDP(["trap"] + [f"prog{i}" for i in range(1, depth + 1)],
                       transitions, rewards,
                       action_values=("do-nothing", "advance", "grab"),
                       horizon_default=depth + 3,
                       name=f"penalty-corridor-{depth}")


_SYNTHETIC = {
    "chain-reward": build_chain_reward,
    "independent-arms": build_independent_arms,
    "penalty-corridor": build_penalty_corridor,
}


def build_synthetic(name, **params):
    """Deterministic generator dispatch for the synthetic domain family."""
    try:
        builder = _SYNTHETIC[name]
    except KeyError:
        raise ValueError(f"unknown synthetic domain {name!r}; "
                         f"choose from {sorted(_SYNTHETIC)}") from None
    return builder(**params)
