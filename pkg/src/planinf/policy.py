"""Open-loop policy parameters and extracted action assignments.

An open-loop policy factorizes over steps: each step holds independent
Bernoulli parameters for binary action variables, or one categorical
distribution for an enumerated action.  The same object parameterizes the
enumeration oracle, the forward gradient planner and the variational
planners.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PARAM_EPS = 1e-6


class PolicyParams:
    """Per-step action distributions for an open-loop policy.

    values has shape (T, N) with P(a_t^l = 1) for binary action variables,
    or (T, k) rows on the probability simplex for an enumerated action.
    """

    def __init__(self, mdp, values):
        self.mdp = mdp
        self.values = np.asarray(values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("policy values must be a (T, components) array")
        width = len(mdp.action_values) if mdp.enum_action else len(mdp.action_vars)
        if self.values.shape[1] != width:
            raise ValueError(
                f"policy width {self.values.shape[1]} does not match action space {width}")

    @property
    def lookahead(self):
        return self.values.shape[0]

    @classmethod
    def uniform(cls, mdp, lookahead):
        if mdp.enum_action:
            k = len(mdp.action_values)
            return cls(mdp, np.full((lookahead, k), 1.0 / k))
        return cls(mdp, np.full((lookahead, len(mdp.action_vars)), 0.5))

    @classmethod
    def random(cls, mdp, lookahead, rng):
        if mdp.enum_action:
            k = len(mdp.action_values)
            raw = rng.random((lookahead, k)) + PARAM_EPS
            return cls(mdp, raw / raw.sum(axis=1, keepdims=True))
        return cls(mdp, rng.random((lookahead, len(mdp.action_vars))))

    @classmethod
    def point(cls, mdp, actions):
        """Point mass on a concrete action sequence.

        actions is a list with one entry per step: an int value index for
        an enumerated action, or a bit sequence aligned with action_vars.
        """
        T = len(actions)
        if mdp.enum_action:
            vals = np.zeros((T, len(mdp.action_values)))
            for t, a in enumerate(actions):
                vals[t, int(a)] = 1.0
        else:
            vals = np.array([[float(b) for b in a] for a in actions])
        return cls(mdp, vals)

    def distribution(self, t, component=0):
        """Probability vector over the action component's values at step t."""
        if self.mdp.enum_action:
            return self.values[t]
        p = self.values[t, component]
        return np.array([1.0 - p, p])

    def log_prob(self, t, component, value):
        """log P(component = value) at step t, floored at log(PARAM_EPS)."""
        p = self.distribution(t, component)[value]
        return float(np.log(max(p, PARAM_EPS)))

    def copy(self):
        return PolicyParams(self.mdp, self.values.copy())

    def clipped(self):
        """Parameters pushed inside [PARAM_EPS, 1 - PARAM_EPS]."""
        vals = np.clip(self.values, PARAM_EPS, 1.0 - PARAM_EPS)
        if self.mdp.enum_action:
            vals = vals / vals.sum(axis=1, keepdims=True)
        return PolicyParams(self.mdp, vals)

    def argmax_assignment(self, diagnostics=None):
        """Deterministic extraction; ties resolve toward value 0 (the no-op)."""
        steps = []
        for t in range(self.lookahead):
            if self.mdp.enum_action:
                steps.append(int(np.argmax(self.values[t])))
            else:
                steps.append(tuple(int(p > 0.5) for p in self.values[t]))
        return ActionAssignment(tuple(steps), self.mdp, dict(diagnostics or {}))

    def sample_assignment(self, rng, diagnostics=None):
        steps = []
        for t in range(self.lookahead):
            if self.mdp.enum_action:
                steps.append(int(rng.choice(len(self.mdp.action_values),
                                            p=self.values[t])))
            else:
                steps.append(tuple(int(rng.random() < p) for p in self.values[t]))
        return ActionAssignment(tuple(steps), self.mdp, dict(diagnostics or {}))


def project_box(values):
    """Clip binary Bernoulli parameters into [0, 1]."""
    return np.clip(values, 0.0, 1.0)


def project_simplex(v):
    """Euclidean projection of each row of v onto the probability simplex."""
    v = np.atleast_2d(np.asarray(v, dtype=float))
    u = np.sort(v, axis=1)[:, ::-1]
    css = np.cumsum(u, axis=1) - 1.0
    idx = np.arange(1, v.shape[1] + 1)
    cond = u - css / idx > 0
    rho = cond.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
    tau = css[np.arange(v.shape[0]), rho] / (rho + 1)
    return np.maximum(v - tau[:, None], 0.0)


@dataclass(frozen=True)
class ActionAssignment:
    """Concrete open-loop action sequence plus planner diagnostics.

    steps holds one entry per step: an int value index for an enumerated
    action, or a tuple of bits aligned with the MDP's action_vars.
    """

    steps: tuple
    mdp: object
    diagnostics: dict = field(default_factory=dict)

    @property
    def first(self):
        return self.steps[0]

    def format_step(self, t):
        a = self.steps[t]
        if self.mdp.enum_action:
            return self.mdp.action_values[a]
        return "".join(str(b) for b in a)

    def step_dict(self, t):
        """Action at step t as the representation simulate_step consumes."""
        a = self.steps[t]
        if self.mdp.enum_action:
            return a
        return {v: a[i] for i, v in enumerate(self.mdp.action_vars)}
