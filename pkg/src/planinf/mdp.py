"""Factored MDP model and its compilation into an unrolled all-binary DBN.

State and action variables are binary (one optional enumerated action
variable is allowed).  Rewards are table factors over small parent sets.
Compilation normalizes rewards into [0, 1] Bernoulli nodes, chains the
per-step reward factors through an averaging collecting chain, and threads
an averaging cumulative chain across steps, so that the probability of the
final cumulative node being on is an affine image of the expected
undiscounted return.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

# parent kinds
PREV = "prev"      # state variable, previous slice
ACT = "action"     # action variable (acts between slices t and t+1)
SAME = "same"      # state variable, same (new) slice: synchronic arc

# node groups of the unrolled network
GROUP_STATE = "states"
GROUP_ACTION = "actions"
GROUP_REWARD = "rewards"        # also holds partial/collecting chain nodes
GROUP_CUMULATIVE = "cumulatives"


class ModelError(ValueError):
    """Raised when a model definition is structurally or numerically invalid."""


class EvidenceMode(enum.Enum):
    """How reward evidence is asserted in the unrolled network."""

    TERMINAL = "terminal"            # condition on c_T = 1 only
    EXPONENTIATED = "exponentiated"  # condition on r_t = 1 and c_t = 1 for all t


@dataclass(frozen=True)
class Parent:
    """Reference to a conditioning variable of a CPT row.

    kind is one of PREV (state, previous slice), ACT (action variable) or
    SAME (state, same slice; these synchronic arcs must stay acyclic).
    """

    name: str
    kind: str = PREV

    def __post_init__(self):
        if self.kind not in (PREV, ACT, SAME):
            raise ModelError(f"unknown parent kind {self.kind!r}")


@dataclass(frozen=True)
class TransitionCpt:
    """p(var'=1 | parents) as a dense table, one axis per parent."""

    parents: tuple
    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        object.__setattr__(self, "table", np.asarray(self.table, dtype=float))


@dataclass(frozen=True)
class RewardFactor:
    """Raw-valued reward table over state (previous slice) and action parents."""

    name: str
    parents: tuple
    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        object.__setattr__(self, "table", np.asarray(self.table, dtype=float))


class FactoredMDP:
    """Finite-horizon factored MDP with binary variables and table rewards.

    Args:
      state_vars: ordered state variable names.
      transitions: dict mapping each state var to its TransitionCpt.
      reward_factors: ordered list of RewardFactor (K factors).
      action_vars: names of binary action variables, or None.
      action_values: values of the single enumerated action variable, or
        None.  Exactly one of action_vars / action_values must be given.
      action_name: name of the enumerated action variable.
      initial: dict var -> probability of 1 at time 0; missing vars are 0.
      horizon_default: default episode horizon.
      name: diagnostic label.

    The discount is fixed to 1; the cumulative chain encodes the
    undiscounted sum of rewards.
    """

    def __init__(self, state_vars, transitions, reward_factors,
                 action_vars=None, action_values=None, action_name="action",
                 initial=None, horizon_default=40, name="mdp"):
        self.state_vars = tuple(state_vars)
        self.transitions = dict(transitions)
        self.reward_factors = tuple(reward_factors)
        self.action_vars = tuple(action_vars) if action_vars is not None else None
        self.action_values = tuple(action_values) if action_values is not None else None
        self.action_name = action_name
        self.initial = {v: float((initial or {}).get(v, 0.0)) for v in self.state_vars}
        self.horizon_default = int(horizon_default)
        self.discount = 1.0
        self.name = name
        self._validate()

    # -- structure helpers -------------------------------------------------

    @property
    def enum_action(self):
        return self.action_values is not None

    @property
    def action_components(self):
        """Names of the action components (one entry for an enum action)."""
        if self.enum_action:
            return (self.action_name,)
        return self.action_vars

    def action_card(self, name):
        if self.enum_action:
            if name != self.action_name:
                raise ModelError(f"unknown action variable {name!r}")
            return len(self.action_values)
        if name not in self.action_vars:
            raise ModelError(f"unknown action variable {name!r}")
        return 2

    def parent_card(self, parent):
        if parent.kind == ACT:
            return self.action_card(parent.name)
        return 2

    @property
    def same_slice_order(self):
        """State vars topologically ordered by synchronic (SAME) arcs."""
        return self._g_order

    def raw_reward(self, state, action):
        """Sum of raw reward factor values at (state dict, action).

        action is a dict var -> bit for binary action vars, or an integer
        value index for an enumerated action.
        """
        total = 0.0
        for f in self.reward_factors:
            idx = tuple(self._parent_value(p, state, state, action) for p in f.parents)
            total += float(f.table[idx])
        return total

    def _parent_value(self, parent, prev_state, same_state, action):
        if parent.kind == PREV:
            return int(prev_state[parent.name])
        if parent.kind == SAME:
            return int(same_state[parent.name])
        if self.enum_action:
            return int(action)
        return int(action[parent.name])

    # -- validation --------------------------------------------------------

    def _validate(self):
        if (self.action_vars is None) == (self.action_values is None):
            raise ModelError("exactly one of action_vars / action_values is required")
        if self.enum_action and len(self.action_values) < 2:
            raise ModelError("enumerated action needs at least 2 values")
        if self.enum_action and len(set(self.action_values)) != len(self.action_values):
            raise ModelError("duplicate enumerated action values")
        names = list(self.state_vars) + list(self.action_components)
        if len(set(names)) != len(names):
            raise ModelError("state/action variable names must be unique")
        if self.horizon_default < 1:
            raise ModelError("horizon_default must be >= 1")
        if self.discount != 1.0:
            raise ModelError("only discount 1 is supported")

        missing = [v for v in self.state_vars if v not in self.transitions]
        if missing:
            raise ModelError(f"missing transition CPTs for {missing}")
        extra = [v for v in self.transitions if v not in self.state_vars]
        if extra:
            raise ModelError(f"transition CPTs for undeclared variables {extra}")

        for var, cpt in self.transitions.items():
            self._check_cpt_shape(f"cpt {var}", cpt.parents, cpt.table)
            tab = cpt.table
            if not np.all(np.isfinite(tab)):
                raise ModelError(f"cpt {var}: non-finite probability entry")
            if np.any(tab < -1e-9) or np.any(tab > 1 + 1e-9):
                raise ModelError(f"cpt {var}: probability entry outside [0, 1]")

        seen = set()
        for f in self.reward_factors:
            if f.name in seen:
                raise ModelError(f"duplicate reward factor name {f.name!r}")
            seen.add(f.name)
            for p in f.parents:
                if p.kind == SAME:
                    raise ModelError(f"reward {f.name}: same-slice parents not allowed")
            self._check_cpt_shape(f"reward {f.name}", f.parents, f.table)
            if not np.all(np.isfinite(f.table)):
                raise ModelError(f"reward {f.name}: non-finite reward entry")

        for v, p in self.initial.items():
            if not (0.0 <= p <= 1.0):
                raise ModelError(f"initial probability for {v} outside [0, 1]")

        self._g_order = self._toposort_same_slice()

    def _check_cpt_shape(self, label, parents, table):
        cards = []
        for p in parents:
            if p.kind in (PREV, SAME):
                if p.name not in self.state_vars:
                    raise ModelError(f"{label}: unknown state parent {p.name!r}")
            else:
                self.action_card(p.name)  # raises on unknown names
            cards.append(self.parent_card(p))
        if table.shape != tuple(cards):
            raise ModelError(
                f"{label}: table shape {table.shape} does not match parents {tuple(cards)}")

    def _toposort_same_slice(self):
        deps = {v: set() for v in self.state_vars}
        for var, cpt in self.transitions.items():
            for p in cpt.parents:
                if p.kind == SAME:
                    deps[var].add(p.name)
        order, ready = [], [v for v in self.state_vars if not deps[v]]
        placed = set()
        while ready:
            v = ready.pop(0)
            order.append(v)
            placed.add(v)
            for w in self.state_vars:
                if w not in placed and w not in ready and deps[w] <= placed:
                    ready.append(w)
        if len(order) != len(self.state_vars):
            cyclic = [v for v in self.state_vars if v not in order]
            raise ModelError(f"synchronic arcs form a cycle through {cyclic}")
        return tuple(order)


def structurally_equal(a, b):
    """True when two models have identical structure and table values."""
    if a.state_vars != b.state_vars or a.action_vars != b.action_vars:
        return False
    if a.action_values != b.action_values or a.action_name != b.action_name:
        return False
    if a.initial != b.initial or a.horizon_default != b.horizon_default:
        return False
    for v in a.state_vars:
        ca, cb = a.transitions[v], b.transitions[v]
        if ca.parents != cb.parents or not np.array_equal(ca.table, cb.table):
            return False
    if len(a.reward_factors) != len(b.reward_factors):
        return False
    for fa, fb in zip(a.reward_factors, b.reward_factors):
        if fa.name != fb.name or fa.parents != fb.parents:
            return False
        if not np.array_equal(fa.table, fb.table):
            return False
    return True


# -- reward normalization and chain CPT entries ----------------------------


def normalize_reward_factor(factor, mode, r_min, r_max):
    """Normalized Bernoulli table p(on) for one reward factor.

    Linear mode maps the raw table affinely with the global raw-reward
    range [r_min, r_max], so the minimum over all factors lands on 0 and
    the maximum on 1; a degenerate range (constant reward everywhere) maps
    to all ones with a diagnostic, which cannot change any argmax.
    Exponentiated mode maps entry R to exp(R - r_max), so the global
    maximum lands on 1 and no separate partition constant is needed.
    """
    table = np.asarray(factor.table, dtype=float)
    if not np.all(np.isfinite(table)):
        raise ModelError(f"reward {factor.name}: non-finite reward entry")
    if mode == EvidenceMode.EXPONENTIATED:
        return np.exp(table - r_max)
    if r_max == r_min:
        warnings.warn(
            f"reward factor {factor.name!r}: constant raw reward, normalizing to 1",
            RuntimeWarning, stacklevel=2)
        return np.ones_like(table)
    return (table - r_min) / (r_max - r_min)


def cumulative_cpt_entry(t, c_prev, r):
    """p(c_t = 1 | c_{t-1}, r_t) = ((t-1) * c_prev + r) / t for step t >= 1."""
    if t < 1:
        raise ValueError(f"cumulative chain step must be >= 1, got {t}")
    return ((t - 1) * c_prev + r) / t


def collecting_cpt_entry(i, cr_prev, pr):
    """p(cr_i = 1 | cr_{i-1}, pr_i) = ((i-1) * cr_prev + pr) / i for factor i >= 1."""
    if i < 1:
        raise ValueError(f"collecting chain index must be >= 1, got {i}")
    return ((i - 1) * cr_prev + pr) / i


def _binary_conditional(p_on):
    """Stack p(off), p(on) tables into a conditional with the child axis last."""
    p_on = np.asarray(p_on, dtype=float)
    return np.stack([1.0 - p_on, p_on], axis=-1)


# -- unrolled network ------------------------------------------------------


@dataclass(frozen=True)
class DbnNode:
    """One node of the unrolled network.

    table holds the full conditional p(node = v | parents) with the child
    value on the last axis; parentless nodes store their prior directly.
    """

    name: str
    card: int
    parents: tuple
    table: np.ndarray
    group: str
    t: int
    var: str = None


class UnrolledDbn:
    """Unrolled network over T steps with reward and cumulative chains.

    Node naming: ``s{t}.{var}`` for states (t = 0..T), ``a{t}`` or
    ``a{t}.{var}`` for actions (t = 0..T-1), ``pr{t}.{i}`` / ``cr{t}.{i}``
    for the intra-step collecting chain (t = 1..T), ``r{t}`` for the
    per-step reward (the terminal collecting node when K > 1) and ``c{t}``
    for the cumulative chain.  The constants c_0 and cr_t^0 are folded
    into the first chain CPT of each chain rather than materialized.
    """

    def __init__(self, mdp, lookahead, mode, nodes, order, evidence,
                 reward_scale, reward_shift):
        self.mdp = mdp
        self.lookahead = lookahead
        self.mode = mode
        self.nodes = nodes            # name -> DbnNode
        self.order = order            # topological list of names
        self.evidence = evidence      # name -> observed value
        self.reward_scale = reward_scale
        self.reward_shift = reward_shift

    # node-id helpers
    def state_node(self, t, var):
        return f"s{t}.{var}"

    def action_node(self, t, var=None):
        if self.mdp.enum_action:
            return f"a{t}"
        if var is None:
            raise ValueError("binary action spaces need the variable name")
        return f"a{t}.{var}"

    def action_nodes(self, t):
        if self.mdp.enum_action:
            return [f"a{t}"]
        return [f"a{t}.{v}" for v in self.mdp.action_vars]

    def reward_node(self, t):
        return f"r{t}"

    def cumulative_node(self, t):
        return f"c{t}"

    def partial_node(self, t, i):
        return f"pr{t}.{i}"

    def collecting_node(self, t, i):
        if i == len(self.mdp.reward_factors):
            return f"r{t}"
        return f"cr{t}.{i}"

    @property
    def latent_nodes(self):
        return [n for n in self.order if n not in self.evidence]

    @property
    def trajectory_nodes(self):
        """State and action node names in topological order."""
        keep = (GROUP_STATE, GROUP_ACTION)
        return [n for n in self.order if self.nodes[n].group in keep]

    def node_group(self, name):
        return self.nodes[name].group

    @property
    def raw_recoverable(self):
        return self.mode == EvidenceMode.TERMINAL


def unroll(mdp, start=None, lookahead=None, mode=EvidenceMode.TERMINAL):
    """Unroll an MDP into its evidence-bearing binary network.

    Args:
      mdp: the FactoredMDP to compile.
      start: dict var -> probability of 1 at time 0 (defaults to
        mdp.initial); a planner passes the current state as a point mass.
      lookahead: number of reward-bearing steps T >= 1.
      mode: EvidenceMode.TERMINAL conditions on c_T = 1; EXPONENTIATED
        replaces reward CPTs with exp(R - R_max) tables and conditions on
        r_t = 1 and c_t = 1 for every step.

    Returns:
      UnrolledDbn with reward_scale/reward_shift recording the affine map
      from p(c_T = 1) back to expected raw return per step.
    """
    if lookahead is None:
        lookahead = mdp.horizon_default
    T = int(lookahead)
    if T < 1:
        raise ModelError(f"lookahead must be >= 1, got {T}")
    start = dict(mdp.initial if start is None else start)
    for v in mdp.state_vars:
        p = float(start.get(v, 0.0))
        if not (0.0 <= p <= 1.0):
            raise ModelError(f"start probability for {v} outside [0, 1]")
        start[v] = p

    factors = mdp.reward_factors
    if not factors:
        raise ModelError("at least one reward factor is required")
    K = len(factors)
    r_min = min(float(f.table.min()) for f in factors)
    r_max = max(float(f.table.max()) for f in factors)
    norm_tables = [normalize_reward_factor(f, mode, r_min, r_max) for f in factors]
    if mode == EvidenceMode.TERMINAL:
        reward_scale = K * (r_max - r_min)
        reward_shift = K * r_min
    else:
        reward_scale, reward_shift = 1.0, 0.0

    nodes, order = {}, []

    def add(node):
        nodes[node.name] = node
        order.append(node.name)

    def parent_node(parent, t):
        # parents of a node written at slice t: PREV/ACT live at t-1, SAME at t
        if parent.kind == PREV:
            return f"s{t - 1}.{parent.name}"
        if parent.kind == SAME:
            return f"s{t}.{parent.name}"
        if mdp.enum_action:
            return f"a{t - 1}"
        return f"a{t - 1}.{parent.name}"

    # time 0: priors from the start distribution
    for var in mdp.same_slice_order:
        add(DbnNode(f"s0.{var}", 2, (), np.array([1 - start[var], start[var]]),
                    GROUP_STATE, 0, var))

    for t in range(1, T + 1):
        # action taken between slices t-1 and t; uniform placeholder CPT,
        # planners supply the policy distribution separately
        if mdp.enum_action:
            k = len(mdp.action_values)
            add(DbnNode(f"a{t - 1}", k, (), np.full(k, 1.0 / k),
                        GROUP_ACTION, t - 1, mdp.action_name))
        else:
            for var in mdp.action_vars:
                add(DbnNode(f"a{t - 1}.{var}", 2, (), np.array([0.5, 0.5]),
                            GROUP_ACTION, t - 1, var))

        for var in mdp.same_slice_order:
            cpt = mdp.transitions[var]
            pnames = tuple(parent_node(p, t) for p in cpt.parents)
            add(DbnNode(f"s{t}.{var}", 2, pnames, _binary_conditional(cpt.table),
                        GROUP_STATE, t, var))

        if K == 1:
            pnames = tuple(parent_node(p, t) for p in factors[0].parents)
            add(DbnNode(f"r{t}", 2, pnames, _binary_conditional(norm_tables[0]),
                        GROUP_REWARD, t))
        else:
            for i, f in enumerate(factors, start=1):
                pnames = tuple(parent_node(p, t) for p in f.parents)
                add(DbnNode(f"pr{t}.{i}", 2, pnames,
                            _binary_conditional(norm_tables[i - 1]),
                            GROUP_REWARD, t))
            # collecting chain; cr_t^0 == 1 is folded into the i=1 CPT and
            # the terminal element cr_t^K is the per-step reward node r_t
            for i in range(1, K + 1):
                name = f"r{t}" if i == K else f"cr{t}.{i}"
                if i == 1:
                    p_on = np.array([collecting_cpt_entry(1, 1, pr) for pr in (0, 1)])
                    parents = (f"pr{t}.1",)
                else:
                    prev = f"cr{t}.{i - 1}"
                    p_on = np.array([[collecting_cpt_entry(i, cr, pr)
                                      for pr in (0, 1)] for cr in (0, 1)])
                    parents = (prev, f"pr{t}.{i}")
                add(DbnNode(name, 2, parents, _binary_conditional(p_on),
                            GROUP_REWARD, t))

        # cumulative chain; c_0 == 1 is folded into the t=1 CPT
        if t == 1:
            p_on = np.array([cumulative_cpt_entry(1, 1, r) for r in (0, 1)])
            parents = (f"r{t}",)
        else:
            p_on = np.array([[cumulative_cpt_entry(t, c, r) for r in (0, 1)]
                             for c in (0, 1)])
            parents = (f"c{t - 1}", f"r{t}")
        add(DbnNode(f"c{t}", 2, parents, _binary_conditional(p_on),
                    GROUP_CUMULATIVE, t))

    if mode == EvidenceMode.TERMINAL:
        evidence = {f"c{T}": 1}
    else:
        evidence = {}
        for t in range(1, T + 1):
            evidence[f"r{t}"] = 1
            evidence[f"c{t}"] = 1

    return UnrolledDbn(mdp, T, mode, nodes, order, evidence,
                       reward_scale, reward_shift)


@dataclass(frozen=True)
class RawReturn:
    """Expected raw return recovered from p(c_T = 1).

    raw_units is False in exponentiated mode, where the affine inverse
    does not exist and the value passes through unchanged.
    """

    value: float
    raw_units: bool


def raw_expected_reward(p_ct, dbn):
    """Map p(c_T = 1) back to the expected undiscounted raw return.

    In terminal mode the cumulative chain averages the T per-step reward
    probabilities, each an affine image of the raw step reward, so the
    inverse is T * (scale * p + shift).
    """
    if not (0.0 - 1e-12 <= p_ct <= 1.0 + 1e-12):
        raise ValueError(f"p_ct must be a probability, got {p_ct}")
    if dbn.mode == EvidenceMode.EXPONENTIATED:
        return RawReturn(float(p_ct), False)
    value = dbn.lookahead * (dbn.reward_scale * float(p_ct) + dbn.reward_shift)
    return RawReturn(value, True)
