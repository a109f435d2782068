"""Loopy belief propagation over unrolled networks, and the planner on it.

Messages live in log space and are max-normalized after every update, so
deterministic CPTs keep exact -inf entries for impossible values instead
of drifting through underflow.  Two schedules are provided: "parallel"
(flood all factor-to-variable messages from the previous state, then all
variable-to-factor messages) and "sequential-topological" (one pass over
the factors in network order, each message seeing the freshest values).
With no evidence the sequential schedule reaches its fixed point in a
single sweep.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .mdp import EvidenceMode, ModelError, unroll
from .policy import ActionAssignment

NEG_INF = float("-inf")


class InferenceError(RuntimeError):
    """Contradictory evidence: some variable ended with an all-zero belief."""


@dataclass(frozen=True)
class BPConfig:
    schedule: str = "parallel"
    max_iterations: int = 100
    damping: float = 0.0
    convergence_tol: float = 1e-6

    def __post_init__(self):
        if self.schedule not in ("parallel", "sequential-topological"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.convergence_tol <= 0.0:
            raise ValueError("convergence_tol must be positive")


@dataclass(frozen=True)
class ConvergenceReport:
    iterations_run: int
    converged: bool
    final_delta: float


class _Factor:
    __slots__ = ("name", "scope", "log_table")

    def __init__(self, name, scope, table):
        self.name = name
        self.scope = scope
        with np.errstate(divide="ignore"):
            self.log_table = np.log(table)


class FactorGraph:
    """Bipartite view of an unrolled network: one factor per CPT plus one
    clamp factor per evidence node."""

    def __init__(self, dbn, evidence=None):
        self.dbn = dbn
        self.card = {name: dbn.nodes[name].card for name in dbn.order}
        self.factors = []
        for name in dbn.order:
            node = dbn.nodes[name]
            scope = tuple(node.parents) + (name,)
            self.factors.append(_Factor(f"cpt:{name}", scope, node.table))
        if evidence is None:
            evidence = dbn.evidence
        self.evidence = dict(evidence)
        for name, value in self.evidence.items():
            clamp = np.zeros(self.card[name])
            clamp[value] = 1.0
            self.factors.append(_Factor(f"clamp:{name}", (name,), clamp))
        # var -> [(factor index, axis in its scope)]
        self.adjacency = {name: [] for name in dbn.order}
        for fi, f in enumerate(self.factors):
            for ax, v in enumerate(f.scope):
                self.adjacency[v].append((fi, ax))

    @property
    def n_cpt_factors(self):
        return len(self.dbn.order)

    @property
    def n_clamp_factors(self):
        return len(self.evidence)


def build_factor_graph(dbn, evidence=None):
    """Translate an unrolled network into a factor graph.

    evidence overrides the network's own evidence dict; pass {} to build
    the unclamped graph (used by prior-marginal checks).
    """
    return FactorGraph(dbn, evidence)


def _normalize(msg):
    m = msg.max()
    if m == NEG_INF or np.isnan(m):
        return np.full_like(msg, NEG_INF)
    return msg - m


class _Messages:
    """Mutable message state for one propagate call."""

    def __init__(self, fg):
        self.fg = fg
        self.f2v = {}
        self.v2f = {}
        for fi, f in enumerate(fg.factors):
            for ax, v in enumerate(f.scope):
                self.f2v[(fi, ax)] = np.zeros(fg.card[v])
                self.v2f[(fi, ax)] = np.zeros(fg.card[v])

    def compute_f2v(self, fi, ax):
        f = self.fg.factors[fi]
        acc = f.log_table
        for other_ax in range(len(f.scope)):
            if other_ax == ax:
                continue
            shape = [1] * len(f.scope)
            shape[other_ax] = self.fg.card[f.scope[other_ax]]
            acc = acc + self.v2f[(fi, other_ax)].reshape(shape)
        if len(f.scope) == 1:
            return _normalize(acc.copy())
        axes = tuple(i for i in range(len(f.scope)) if i != ax)
        with np.errstate(invalid="ignore"):
            out = logsumexp(acc, axis=axes)
        return _normalize(np.nan_to_num(out, nan=NEG_INF, neginf=NEG_INF))

    def compute_v2f(self, fi, ax):
        f = self.fg.factors[fi]
        v = f.scope[ax]
        acc = np.zeros(self.fg.card[v])
        for ofi, oax in self.fg.adjacency[v]:
            if ofi == fi:
                continue
            acc = acc + self.f2v[(ofi, oax)]
        return _normalize(acc)

    def belief(self, v):
        acc = np.zeros(self.fg.card[v])
        for fi, ax in self.fg.adjacency[v]:
            acc = acc + self.f2v[(fi, ax)]
        return acc


def _delta(old, new):
    both_dead = np.isneginf(old) & np.isneginf(new)
    diff = np.where(both_dead, 0.0, np.abs(new - old))
    return float(np.max(diff)) if diff.size else 0.0


def _store(table, key, new, damping):
    old = table[key]
    if damping > 0.0:
        new = _normalize(damping * old + (1.0 - damping) * new)
    table[key] = new
    return _delta(old, new)


def propagate(fg, cfg=None):
    """Run sum-product message passing; returns (marginals, report).

    Marginals are normalized per variable and sum to 1.  Non-convergence
    is reported, not raised; contradictory evidence (an all-zero belief)
    raises InferenceError naming the variable.
    """
    if cfg is None:
        cfg = BPConfig()
    state = _Messages(fg)
    keys = [(fi, ax) for fi, f in enumerate(fg.factors)
            for ax in range(len(f.scope))]

    delta = float("inf")
    iterations = 0
    converged = False
    for iterations in range(1, cfg.max_iterations + 1):
        delta = 0.0
        if cfg.schedule == "parallel":
            fresh = {k: state.compute_f2v(*k) for k in keys}
            for k in keys:
                delta = max(delta, _store(state.f2v, k, fresh[k],
                                          cfg.damping))
            fresh = {k: state.compute_v2f(*k) for k in keys}
            for k in keys:
                delta = max(delta, _store(state.v2f, k, fresh[k],
                                          cfg.damping))
        else:
            for fi, f in enumerate(fg.factors):
                for ax in range(len(f.scope)):
                    delta = max(delta, _store(
                        state.v2f, (fi, ax), state.compute_v2f(fi, ax),
                        cfg.damping))
                for ax in range(len(f.scope)):
                    delta = max(delta, _store(
                        state.f2v, (fi, ax), state.compute_f2v(fi, ax),
                        cfg.damping))
        if delta <= cfg.convergence_tol:
            converged = True
            break

    marginals = {}
    for v in fg.dbn.order:
        b = state.belief(v)
        top = b.max()
        if top == NEG_INF:
            raise InferenceError(
                f"contradictory evidence: variable {v!r} has an all-zero "
                "belief")
        p = np.exp(b - top)
        marginals[v] = p / p.sum()
    return marginals, ConvergenceReport(iterations, converged, delta)


def action_argmax(marginals, dbn):
    """Per-variable argmax of action marginals, ties toward value 0."""
    mdp = dbn.mdp
    steps = []
    for t in range(dbn.lookahead):
        if mdp.enum_action:
            vec = marginals[dbn.action_node(t)]
            steps.append(int(np.argmax(vec)))
        else:
            bits = []
            for name in dbn.action_nodes(t):
                vec = marginals[name]
                bits.append(1 if vec[1] > vec[0] else 0)
            steps.append(tuple(bits))
    return tuple(steps)


def backward_bp_plan(mdp, start=None, T=None, cfg=None):
    """Plan by conditioning on total success and reading action marginals.

    The network is unrolled with terminal evidence and uniform action
    priors; loopy BP produces posterior action marginals whose
    per-variable argmax (ties toward 0) is the returned open-loop plan.
    Non-convergence is diagnosed in the report, never raised.
    """
    if cfg is None:
        cfg = BPConfig()
    dbn = unroll(mdp, start=start, lookahead=T, mode=EvidenceMode.TERMINAL)
    fg = build_factor_graph(dbn)
    marginals, report = propagate(fg, cfg)
    steps = action_argmax(marginals, dbn)
    action_marginals = [
        {dbn.nodes[name].var: marginals[name].copy()
         for name in dbn.action_nodes(t)}
        for t in range(dbn.lookahead)]
    return ActionAssignment(steps, mdp, diagnostics={
        "iterations": report.iterations_run,
        "converged": report.converged,
        "final_delta": report.final_delta,
        "action_marginals": action_marginals,
    })
