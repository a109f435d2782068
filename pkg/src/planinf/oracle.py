"""Exact enumeration oracle for unrolled networks.

Sums over every state/action trajectory of the unrolled network with
zero-probability branches pruned, handling the reward machinery exactly:
the intra-step collecting block is enumerated outright per distinct parent
configuration, and the two-state cumulative chain is contracted with an
exact forward/backward recursion per trajectory.  All accumulators use
compensated summation.  This is deliberately the dumbest correct
computation and serves as the ground truth for every approximate backend.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mdp import GROUP_ACTION, GROUP_STATE, EvidenceMode, unroll
from .policy import PolicyParams

DEFAULT_MAX_PATHS = 2 ** 26


class EnumerationLimitError(RuntimeError):
    """Raised when the reachable trajectory space exceeds the size guard."""


class _Kahan:
    """Compensated scalar accumulator."""

    __slots__ = ("total", "comp")

    def __init__(self):
        self.total = 0.0
        self.comp = 0.0

    def add(self, x):
        y = x - self.comp
        t = self.total + y
        self.comp = (t - self.total) - y
        self.total = t

    @property
    def value(self):
        return self.total


@dataclass(frozen=True)
class ExactSummary:
    """Exact quantities for one policy on one unrolled network.

    expected_cT and expected_step_rewards are prior expectations (no
    evidence applied); action_posterior, node_marginals and log_evidence
    condition on the network's evidence.  elbo_upper_bound repeats
    log_evidence: no variational lower bound can exceed it.
    """

    expected_raw_return: float
    expected_cT: float
    log_evidence: float
    action_posterior: list
    node_marginals: dict
    elbo_upper_bound: float
    expected_step_rewards: list
    paths_enumerated: int


def _flatten_conditional(table, card):
    """Dense conditional as a flat python list with child value innermost."""
    return [float(x) for x in np.asarray(table, dtype=float).reshape(-1)]


class _RewardBlockTemplate:
    """Time-invariant enumeration of one step's reward block.

    For every configuration of the distinct reward parents this stores the
    distribution q over the step reward bit and, for every block node, the
    joint probability of the node being on with each reward value.  Node
    keys are templates ("pr", i), ("cr", i) or ("r",) that map to concrete
    node names per step.
    """

    def __init__(self, dbn):
        mdp = dbn.mdp
        self.parent_refs = []          # distinct Parent refs, order of appearance
        factor_slots = []
        for f in mdp.reward_factors:
            slots = []
            for p in f.parents:
                if p not in self.parent_refs:
                    self.parent_refs.append(p)
                slots.append(self.parent_refs.index(p))
            factor_slots.append(slots)
        self.parent_cards = [mdp.parent_card(p) for p in self.parent_refs]

        K = len(mdp.reward_factors)
        self.K = K
        # normalized per-factor on-probabilities, via the materialized tables
        if K == 1:
            node = dbn.nodes[dbn.reward_node(1)]
            factor_tabs = [np.asarray(node.table)[..., 1]]
        else:
            factor_tabs = [np.asarray(dbn.nodes[dbn.partial_node(1, i)].table)[..., 1]
                           for i in range(1, K + 1)]
            self.chain_tabs = [np.asarray(dbn.nodes[dbn.collecting_node(1, i)].table)
                               for i in range(1, K + 1)]
        raw_tabs = [np.asarray(f.table, dtype=float) for f in mdp.reward_factors]

        self.node_keys = ([("pr", i) for i in range(1, K + 1)] if K > 1 else []) \
            + [("cr", i) for i in range(1, K)] + [("r",)]
        self.blocks = []               # per config index: (q, joint_on, raw_sum)
        shape = tuple(self.parent_cards)
        for cfg in np.ndindex(*shape) if shape else [()]:
            raw_sum = 0.0
            probs = []
            for slots, rtab, ntab in zip(factor_slots, raw_tabs, factor_tabs):
                idx = tuple(cfg[s] for s in slots)
                raw_sum += float(rtab[idx])
                probs.append(float(ntab[idx]))
            q = [0.0, 0.0]
            joint_on = {key: [0.0, 0.0] for key in self.node_keys}
            if K == 1:
                q = [1.0 - probs[0], probs[0]]
                joint_on[("r",)][1] = probs[0]
            else:
                for bits in np.ndindex(*((2,) * (2 * K))):
                    u, v = bits[:K], bits[K:]
                    prob = 1.0
                    for i in range(K):
                        prob *= probs[i] if u[i] else 1.0 - probs[i]
                    prob *= float(self.chain_tabs[0][u[0], v[0]])
                    for i in range(1, K):
                        prob *= float(self.chain_tabs[i][v[i - 1], u[i], v[i]])
                    if prob == 0.0:
                        continue
                    r_val = v[K - 1]
                    q[r_val] += prob
                    for i in range(K):
                        if u[i]:
                            joint_on[("pr", i + 1)][r_val] += prob
                    for i in range(K - 1):
                        if v[i]:
                            joint_on[("cr", i + 1)][r_val] += prob
                    if r_val:
                        joint_on[("r",)][1] += prob
            self.blocks.append((q, joint_on, raw_sum))

    def config_index(self, values):
        idx = 0
        for v, card in zip(values, self.parent_cards):
            idx = idx * card + int(v)
        return idx

    def node_name(self, dbn, t, key):
        if key[0] == "pr":
            return dbn.partial_node(t, key[1])
        if key[0] == "cr":
            return dbn.collecting_node(t, key[1])
        return dbn.reward_node(t)


def reward_block_marginals(dbn, t, parent_values):
    """Exact p(node = 1 | reward parents) for every step-t reward block node.

    parent_values maps each distinct reward parent (mdp-level name) to its
    value.  Used to check the collecting chain against the plain average of
    the partial reward probabilities.
    """
    block = _RewardBlockTemplate(dbn)
    cfg = tuple(int(parent_values[p.name]) for p in block.parent_refs)
    q, joint_on, _ = block.blocks[block.config_index(cfg)]
    out = {}
    for key in block.node_keys:
        out[block.node_name(dbn, t, key)] = joint_on[key][0] + joint_on[key][1]
    return out


def exact_enumerate(mdp, T, theta=None, mode=EvidenceMode.TERMINAL,
                    max_paths=DEFAULT_MAX_PATHS, start=None):
    """Exact inference on the unrolled network by trajectory enumeration.

    Args:
      mdp: FactoredMDP to unroll and enumerate.
      T: lookahead depth (steps bearing reward).
      theta: PolicyParams for the action nodes; uniform when None.
      mode: evidence construction passed to unroll.
      max_paths: guard on the number of reachable trajectories.
      start: optional start distribution overriding mdp.initial.

    Returns:
      ExactSummary.  Raises EnumerationLimitError when the reachable
      trajectory space exceeds max_paths.  When the asserted evidence has
      probability zero under the policy the posterior fields come back as
      None (log_evidence -inf); the prior fields stay exact.
    """
    dbn = unroll(mdp, start=start, lookahead=T, mode=mode)
    if theta is None:
        theta = PolicyParams.uniform(mdp, T)
    if theta.lookahead != T:
        raise ValueError(f"policy depth {theta.lookahead} != lookahead {T}")

    traj = dbn.trajectory_nodes
    pos = {name: i for i, name in enumerate(traj)}
    node_info = []                      # (card, parent_positions, flat_table)
    for name in traj:
        node = dbn.nodes[name]
        if node.group == GROUP_ACTION:
            comp = 0
            if not mdp.enum_action:
                comp = mdp.action_vars.index(node.var)
            dist = [float(x) for x in theta.distribution(node.t, comp)]
            node_info.append((node.card, (), dist))
        else:
            flat = _flatten_conditional(node.table, node.card)
            ppos = tuple(pos[p] for p in node.parents)
            node_info.append((node.card, ppos, flat))

    block = _RewardBlockTemplate(dbn)
    # positions of the block parents per step, as trajectory indices
    step_parent_pos = []
    for t in range(1, T + 1):
        cur = []
        for p in block.parent_refs:
            if p.kind == "action":
                cur.append(pos[dbn.action_node(t - 1, None if mdp.enum_action else p.name)])
            else:
                cur.append(pos[dbn.state_node(t - 1, p.name)])
        step_parent_pos.append(tuple(cur))

    # cumulative chain tables as nested python lists, per step
    c_tabs = [None]
    c1 = np.asarray(dbn.nodes[dbn.cumulative_node(1)].table)
    c_tabs.append([[float(c1[r, c]) for c in (0, 1)] for r in (0, 1)])
    for t in range(2, T + 1):
        ct = np.asarray(dbn.nodes[dbn.cumulative_node(t)].table)
        c_tabs.append([[[float(ct[cp, r, c]) for c in (0, 1)] for r in (0, 1)]
                       for cp in (0, 1)])

    exp_mode = mode == EvidenceMode.EXPONENTIATED
    # multiplicative masks encoding per-step evidence on the chain values
    c_mask = [None]
    for t in range(1, T + 1):
        if exp_mode or t == T:
            c_mask.append((0.0, 1.0))
        else:
            c_mask.append((1.0, 1.0))
    r_mask = [None]
    for t in range(1, T + 1):
        r_mask.append((0.0, 1.0) if exp_mode else (1.0, 1.0))

    n_traj = len(traj)
    n_cfg = len(block.blocks)
    z_acc = _Kahan()
    raw_acc = _Kahan()
    ct_free_acc = _Kahan()
    step_r_acc = [_Kahan() for _ in range(T + 1)]
    post = [[_Kahan() for _ in range(card)] for card, _, _ in node_info]
    h_acc = [[[_Kahan(), _Kahan()] for _ in range(n_cfg)] for _ in range(T + 1)]
    c_on_acc = [_Kahan() for _ in range(T + 1)]
    paths = 0

    asg = [0] * n_traj

    def leaf(w):
        nonlocal paths
        paths += 1
        if paths > max_paths:
            raise EnumerationLimitError(
                f"reachable trajectory space exceeds {max_paths} configurations")
        cfg_idx = []
        qs = [None]
        raw_total = 0.0
        for t in range(1, T + 1):
            ci = block.config_index(tuple(asg[p] for p in step_parent_pos[t - 1]))
            cfg_idx.append(ci)
            q, _, raw_sum = block.blocks[ci]
            qs.append(q)
            raw_total += raw_sum
        raw_acc.add(w * raw_total)

        # unrestricted forward pass for the prior expectation of c_T
        q = qs[1]
        uf0 = q[0] * c_tabs[1][0][0] + q[1] * c_tabs[1][1][0]
        uf1 = q[0] * c_tabs[1][0][1] + q[1] * c_tabs[1][1][1]
        for t in range(2, T + 1):
            ct, q = c_tabs[t], qs[t]
            n0 = uf0 * (q[0] * ct[0][0][0] + q[1] * ct[0][1][0]) \
                + uf1 * (q[0] * ct[1][0][0] + q[1] * ct[1][1][0])
            n1 = uf0 * (q[0] * ct[0][0][1] + q[1] * ct[0][1][1]) \
                + uf1 * (q[0] * ct[1][0][1] + q[1] * ct[1][1][1])
            uf0, uf1 = n0, n1
        ct_free_acc.add(w * uf1)
        for t in range(1, T + 1):
            step_r_acc[t].add(w * qs[t][1])

        # evidence-restricted forward pass
        f = [None] * (T + 1)
        q, rm, cm = qs[1], r_mask[1], c_mask[1]
        ct = c_tabs[1]
        f[1] = (cm[0] * (q[0] * rm[0] * ct[0][0] + q[1] * rm[1] * ct[1][0]),
                cm[1] * (q[0] * rm[0] * ct[0][1] + q[1] * rm[1] * ct[1][1]))
        for t in range(2, T + 1):
            ct, q, rm, cm = c_tabs[t], qs[t], r_mask[t], c_mask[t]
            p0, p1 = f[t - 1]
            w00, w01 = q[0] * rm[0], q[1] * rm[1]
            f[t] = (cm[0] * (p0 * (w00 * ct[0][0][0] + w01 * ct[0][1][0])
                             + p1 * (w00 * ct[1][0][0] + w01 * ct[1][1][0])),
                    cm[1] * (p0 * (w00 * ct[0][0][1] + w01 * ct[0][1][1])
                             + p1 * (w00 * ct[1][0][1] + w01 * ct[1][1][1])))
        like = f[T][0] + f[T][1]

        # evidence-restricted backward pass
        b = [None] * (T + 1)
        b[T] = (1.0, 1.0)
        for t in range(T, 1, -1):
            ct, q, rm, cm = c_tabs[t], qs[t], r_mask[t], c_mask[t]
            n0, n1 = b[t]
            m0, m1 = cm[0] * n0, cm[1] * n1
            w00, w01 = q[0] * rm[0], q[1] * rm[1]
            b[t - 1] = (w00 * (ct[0][0][0] * m0 + ct[0][0][1] * m1)
                        + w01 * (ct[0][1][0] * m0 + ct[0][1][1] * m1),
                        w00 * (ct[1][0][0] * m0 + ct[1][0][1] * m1)
                        + w01 * (ct[1][1][0] * m0 + ct[1][1][1] * m1))

        if like > 0.0:
            z_acc.add(w * like)
            for i in range(n_traj):
                post[i][asg[i]].add(w * like)
            # per-step reward-value conditionals h_t(r) = p(later+current
            # chain evidence | r_t = r, path) and cumulative-on posteriors
            for t in range(1, T + 1):
                ct, rm, cm = c_tabs[t], r_mask[t], c_mask[t]
                n0, n1 = b[t]
                m0, m1 = cm[0] * n0, cm[1] * n1
                if t == 1:
                    h0 = rm[0] * (ct[0][0] * m0 + ct[0][1] * m1)
                    h1 = rm[1] * (ct[1][0] * m0 + ct[1][1] * m1)
                else:
                    p0, p1 = f[t - 1]
                    h0 = rm[0] * (p0 * (ct[0][0][0] * m0 + ct[0][0][1] * m1)
                                  + p1 * (ct[1][0][0] * m0 + ct[1][0][1] * m1))
                    h1 = rm[1] * (p0 * (ct[0][1][0] * m0 + ct[0][1][1] * m1)
                                  + p1 * (ct[1][1][0] * m0 + ct[1][1][1] * m1))
                cell = h_acc[t][cfg_idx[t - 1]]
                cell[0].add(w * h0)
                cell[1].add(w * h1)
                c_on_acc[t].add(w * f[t][1] * b[t][1])

    def walk(i, w):
        if i == n_traj:
            leaf(w)
            return
        card, ppos, flat = node_info[i]
        base = 0
        for p in ppos:
            # mixed radix: the enumerated action's card can exceed 2
            base = base * node_info[p][0] + asg[p]
        for v in range(card):
            pv = flat[base * card + v]
            if pv == 0.0:
                continue
            asg[i] = v
            walk(i + 1, w * pv)

    walk(0, 1.0)

    z = z_acc.value
    if z <= 0.0:
        # the asserted evidence has probability zero under this policy, so
        # posterior quantities are undefined; prior ones remain exact
        return ExactSummary(
            expected_raw_return=raw_acc.value,
            expected_cT=ct_free_acc.value,
            log_evidence=float("-inf"),
            action_posterior=None,
            node_marginals=None,
            elbo_upper_bound=float("-inf"),
            expected_step_rewards=[step_r_acc[t].value
                                   for t in range(1, T + 1)],
            paths_enumerated=paths)

    node_marginals = {}
    for i, name in enumerate(traj):
        card = node_info[i][0]
        vec = np.array([post[i][v].value for v in range(card)]) / z
        node_marginals[name] = vec
    for t in range(1, T + 1):
        margs = {}
        for ci, (q, joint_on, _) in enumerate(block.blocks):
            h0 = h_acc[t][ci][0].value
            h1 = h_acc[t][ci][1].value
            if h0 == 0.0 and h1 == 0.0:
                continue
            for key in block.node_keys:
                j = joint_on[key]
                margs[key] = margs.get(key, 0.0) + j[0] * h0 + j[1] * h1
        for key in block.node_keys:
            name = block.node_name(dbn, t, key)
            on = margs.get(key, 0.0) / z
            node_marginals[name] = np.array([1.0 - on, on])
        c_on = c_on_acc[t].value / z
        node_marginals[dbn.cumulative_node(t)] = np.array([1.0 - c_on, c_on])

    action_posterior = []
    for t in range(T):
        per_var = {}
        for name in dbn.action_nodes(t):
            node = dbn.nodes[name]
            per_var[node.var] = node_marginals[name].copy()
        action_posterior.append(per_var)

    log_evidence = math.log(z)
    return ExactSummary(
        expected_raw_return=raw_acc.value,
        expected_cT=ct_free_acc.value,
        log_evidence=log_evidence,
        action_posterior=action_posterior,
        node_marginals=node_marginals,
        elbo_upper_bound=log_evidence,
        expected_step_rewards=[step_r_acc[t].value for t in range(1, T + 1)],
        paths_enumerated=paths,
    )
