"""Shared builders and the brute-force reference enumerator for the tests."""

import numpy as np

from planinf.mdp import (
    ACT,
    PREV,
    SAME,
    GROUP_ACTION,
    EvidenceMode,
    FactoredMDP,
    Parent,
    RewardFactor,
    TransitionCpt,
)
from planinf.policy import PolicyParams


def two_var_toy():
    """2 state vars, 1 binary action var, one reward factor on (x1, a)."""
    sv = ["x0", "x1"]
    trans = {
        "x0": TransitionCpt((Parent("x0"), Parent("a", ACT)),
                            np.array([[0.2, 0.7], [0.6, 0.9]])),
        "x1": TransitionCpt((Parent("x0"), Parent("x1")),
                            np.array([[0.1, 0.5], [0.4, 0.8]])),
    }
    reward = RewardFactor("goal", (Parent("x1"), Parent("a", ACT)),
                          np.array([[0.0, 1.0], [3.0, 5.0]]))
    return FactoredMDP(sv, trans, [reward], action_vars=["a"],
                       initial={"x0": 0.0, "x1": 0.0}, horizon_default=3,
                       name="two-var-toy")


def single_switch():
    """Deterministic domain where only a = 1 ever produces reward."""
    trans = {"on": TransitionCpt((Parent("a", ACT),), np.array([0.0, 1.0]))}
    reward = RewardFactor("lit", (Parent("on"),), np.array([0.0, 1.0]))
    return FactoredMDP(["on"], trans, [reward], action_vars=["a"],
                       initial={"on": 0.0}, horizon_default=2,
                       name="single-switch")


def random_mdp(rng, n_state=2, n_action=1, k_factors=1, enum_values=None,
               synchronic=False, p_range=(0.05, 0.95), r_range=(-2.0, 2.0),
               random_start=False):
    """Small dense random model; parent sets stay tiny for enumerability."""
    sv = [f"x{i}" for i in range(n_state)]
    if enum_values is not None:
        act_parent = Parent("act", ACT)
        action_kw = dict(action_values=enum_values, action_name="act")
    else:
        av = [f"a{i}" for i in range(n_action)]
        act_parent = Parent(av[0], ACT)
        action_kw = dict(action_vars=av)

    def rand_table(shape):
        lo, hi = p_range
        return lo + (hi - lo) * rng.random(shape)

    def card(parent):
        if parent.kind == ACT and enum_values is not None:
            return len(enum_values)
        return 2

    trans = {}
    for i, v in enumerate(sv):
        parents = [Parent(v)]
        if i > 0 and synchronic and rng.random() < 0.7:
            parents.append(Parent(sv[i - 1], SAME))
        elif i > 0:
            parents.append(Parent(sv[i - 1]))
        if rng.random() < 0.8:
            parents.append(act_parent)
        shape = tuple(card(p) for p in parents)
        trans[v] = TransitionCpt(tuple(parents), rand_table(shape))

    factors = []
    for k in range(k_factors):
        parents = [Parent(sv[rng.integers(n_state)])]
        if rng.random() < 0.6:
            parents.append(act_parent)
        shape = tuple(card(p) for p in parents)
        lo, hi = r_range
        factors.append(RewardFactor(f"g{k}", tuple(parents),
                                    lo + (hi - lo) * rng.random(shape)))

    initial = {v: float(rng.random()) if random_start else 0.0 for v in sv}
    return FactoredMDP(sv, trans, factors, initial=initial,
                       horizon_default=3, name="random", **action_kw)


class NaiveJoint:
    """Full-joint enumeration over every node of an unrolled network.

    Exponentially dumber than the production oracle: no chain recursions,
    no block precomputation, just the product of all conditional tables
    over every joint assignment.  Keep total cardinality tiny.
    """

    def __init__(self, dbn, theta=None):
        mdp = dbn.mdp
        if theta is None:
            theta = PolicyParams.uniform(mdp, dbn.lookahead)
        self.dbn = dbn
        names = list(dbn.order)
        index = {n: i for i, n in enumerate(names)}
        info = []
        for n in names:
            node = dbn.nodes[n]
            if node.group == GROUP_ACTION:
                comp = 0 if mdp.enum_action else mdp.action_vars.index(node.var)
                info.append((node.card, (), np.asarray(theta.distribution(node.t, comp))))
            else:
                info.append((node.card, tuple(index[p] for p in node.parents),
                             np.asarray(node.table)))
        self.names, self.info = names, info
        self.evidence_idx = {index[k]: v for k, v in dbn.evidence.items()}
        self.ct_idx = index[dbn.cumulative_node(dbn.lookahead)]
        self.r_idx = [index[dbn.reward_node(t)] for t in range(1, dbn.lookahead + 1)]

        self.z = 0.0
        self.prior_ct = 0.0
        self.prior_r = [0.0] * dbn.lookahead
        self.post = [np.zeros(c) for c, _, _ in info]
        self.raw = 0.0
        self._mdp = mdp
        self._asg = [0] * len(names)
        self._walk(0, 1.0)
        for vec in self.post:
            vec /= self.z

    def _walk(self, i, w):
        if i == len(self.names):
            self._leaf(w)
            return
        card, ppos, table = self.info[i]
        for v in range(card):
            idx = tuple(self._asg[p] for p in ppos) + (v,)
            pv = float(table[idx]) if ppos else float(table[v])
            if pv == 0.0:
                continue
            self._asg[i] = v
            self._walk(i + 1, w * pv)

    def _leaf(self, w):
        asg, dbn, mdp = self._asg, self.dbn, self._mdp
        self.prior_ct += w * asg[self.ct_idx]
        for t, ri in enumerate(self.r_idx):
            self.prior_r[t] += w * asg[ri]
        for t in range(1, dbn.lookahead + 1):
            state = {v: asg[self.names.index(dbn.state_node(t - 1, v))]
                     for v in mdp.state_vars}
            if mdp.enum_action:
                action = asg[self.names.index(dbn.action_node(t - 1))]
            else:
                action = {v: asg[self.names.index(dbn.action_node(t - 1, v))]
                          for v in mdp.action_vars}
            self.raw += w * mdp.raw_reward(state, action)
        if all(asg[i] == v for i, v in self.evidence_idx.items()):
            self.z += w
            for i, v in enumerate(asg):
                self.post[i][v] += w

    def marginal(self, name):
        return self.post[self.names.index(name)]
