"""Model construction, reward normalization and unrolled-network structure."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from planinf.mdp import (
    ACT,
    GROUP_CUMULATIVE,
    GROUP_REWARD,
    GROUP_STATE,
    EvidenceMode,
    FactoredMDP,
    ModelError,
    Parent,
    RewardFactor,
    TransitionCpt,
    collecting_cpt_entry,
    cumulative_cpt_entry,
    normalize_reward_factor,
    raw_expected_reward,
    unroll,
)

from conftest import random_mdp, two_var_toy


class TestChainEntries:
    @pytest.mark.parametrize("t,c,r,want", [
        (1, 1, 1, 1.0),
        (1, 1, 0, 0.0),
        (3, 1, 0, 2.0 / 3.0),
        (3, 0, 1, 1.0 / 3.0),
        (2, 1, 1, 1.0),
        (5, 0, 0, 0.0),
    ])
    def test_cumulative_values(self, t, c, r, want):
        assert cumulative_cpt_entry(t, c, r) == pytest.approx(want, abs=1e-15)

    @pytest.mark.parametrize("i,cr,pr,want", [
        (2, 1, 0, 0.5),
        (2, 0, 1, 0.5),
        (1, 1, 1, 1.0),
        (3, 1, 1, 1.0),
    ])
    def test_collecting_values(self, i, cr, pr, want):
        assert collecting_cpt_entry(i, cr, pr) == pytest.approx(want, abs=1e-15)

    def test_step_zero_rejected(self):
        with pytest.raises(ValueError):
            cumulative_cpt_entry(0, 1, 1)
        with pytest.raises(ValueError):
            collecting_cpt_entry(0, 1, 1)

    @given(st.integers(min_value=1, max_value=50),
           st.integers(min_value=0, max_value=1),
           st.integers(min_value=0, max_value=1))
    def test_cumulative_entry_is_probability(self, t, c, r):
        p = cumulative_cpt_entry(t, c, r)
        assert 0.0 <= p <= 1.0


class TestNormalization:
    def test_linear_global_range(self):
        f = RewardFactor("g", (Parent("x"),), np.array([-5.0, 5.0]))
        out = normalize_reward_factor(f, EvidenceMode.TERMINAL, -5.0, 5.0)
        np.testing.assert_allclose(out, [0.0, 1.0])

    def test_linear_midpoint(self):
        f = RewardFactor("g", (Parent("x"),), np.array([0.0, 2.5]))
        out = normalize_reward_factor(f, EvidenceMode.TERMINAL, -5.0, 5.0)
        np.testing.assert_allclose(out, [0.5, 0.75])

    def test_exponentiated_max_maps_to_one(self):
        f = RewardFactor("g", (Parent("x"),), np.array([0.0, 2.0]))
        out = normalize_reward_factor(f, EvidenceMode.EXPONENTIATED, -1.0, 2.0)
        np.testing.assert_allclose(out, [np.exp(-2.0), 1.0])

    def test_constant_factor_maps_to_one_with_diagnostic(self):
        f = RewardFactor("g", (Parent("x"),), np.array([3.0, 3.0]))
        with pytest.warns(RuntimeWarning):
            out = normalize_reward_factor(f, EvidenceMode.TERMINAL, 3.0, 3.0)
        np.testing.assert_allclose(out, [1.0, 1.0])

    def test_non_finite_rejected(self):
        f = RewardFactor("g", (Parent("x"),), np.array([0.0, np.inf]))
        with pytest.raises(ModelError):
            normalize_reward_factor(f, EvidenceMode.TERMINAL, 0.0, 1.0)

    @given(st.lists(st.floats(min_value=-50, max_value=50), min_size=2, max_size=8))
    @settings(max_examples=50)
    def test_linear_entries_are_probabilities(self, values):
        f = RewardFactor("g", (Parent("x"),), np.array(values))
        lo, hi = min(values), max(values)
        if lo == hi:
            return
        out = normalize_reward_factor(f, EvidenceMode.TERMINAL, lo, hi)
        assert np.all(out >= 0.0) and np.all(out <= 1.0)


class TestUnrollStructure:
    def test_minimal_nodes_and_evidence(self):
        mdp = two_var_toy()
        dbn = unroll(mdp, lookahead=1)
        assert sorted(dbn.nodes) == ["a0.a", "c1", "r1", "s0.x0", "s0.x1",
                                     "s1.x0", "s1.x1"]
        assert dbn.evidence == {"c1": 1}
        # c_0 is folded: the first cumulative CPT conditions on r_1 alone
        assert dbn.nodes["c1"].parents == ("r1",)
        np.testing.assert_allclose(dbn.nodes["c1"].table,
                                   [[1.0, 0.0], [0.0, 1.0]])

    def test_exponentiated_evidence_set(self):
        dbn = unroll(two_var_toy(), lookahead=2, mode=EvidenceMode.EXPONENTIATED)
        assert dbn.evidence == {"r1": 1, "c1": 1, "r2": 1, "c2": 1}

    def test_chain_node_counts_k3(self):
        rng = np.random.default_rng(7)
        mdp = random_mdp(rng, n_state=2, n_action=1, k_factors=3)
        dbn = unroll(mdp, lookahead=2)
        groups = {}
        for name in dbn.order:
            groups.setdefault(dbn.nodes[name].group, []).append(name)
        # per step: 3 partial + 2 intermediate collecting + the reward node
        assert len(groups[GROUP_REWARD]) == 2 * (3 + 2 + 1)
        assert len(groups[GROUP_CUMULATIVE]) == 2
        assert len(groups[GROUP_STATE]) == 2 * 3
        assert dbn.nodes["r1"].parents == ("cr1.2", "pr1.3")

    def test_rows_normalize(self):
        rng = np.random.default_rng(11)
        for enum_values in (None, ("u", "v", "w")):
            mdp = random_mdp(rng, n_state=3, k_factors=2, enum_values=enum_values,
                             synchronic=True)
            dbn = unroll(mdp, lookahead=3)
            for node in dbn.nodes.values():
                sums = np.asarray(node.table).sum(axis=-1)
                np.testing.assert_allclose(sums, np.ones_like(sums), atol=1e-9)

    def test_topological_order(self):
        dbn = unroll(two_var_toy(), lookahead=3)
        seen = set()
        for name in dbn.order:
            assert all(p in seen for p in dbn.nodes[name].parents)
            seen.add(name)

    def test_lookahead_zero_rejected(self):
        with pytest.raises(ModelError):
            unroll(two_var_toy(), lookahead=0)


class TestRawRecovery:
    def test_affine_inverse(self):
        # single factor with raw range [0, 10]: scale 10, shift 0
        trans = {"x": TransitionCpt((Parent("x"),), np.array([0.5, 0.5]))}
        reward = RewardFactor("g", (Parent("x"),), np.array([0.0, 10.0]))
        mdp = FactoredMDP(["x"], trans, [reward], action_vars=["a"])
        dbn = unroll(mdp, lookahead=4)
        assert dbn.reward_scale == 10.0 and dbn.reward_shift == 0.0
        out = raw_expected_reward(0.5, dbn)
        assert out.value == pytest.approx(20.0) and out.raw_units

    def test_exponentiated_mode_has_no_inverse(self):
        dbn = unroll(two_var_toy(), lookahead=2, mode=EvidenceMode.EXPONENTIATED)
        out = raw_expected_reward(0.25, dbn)
        assert out.value == 0.25 and not out.raw_units

    def test_shift_covers_negative_rewards(self):
        trans = {"x": TransitionCpt((Parent("x"),), np.array([0.5, 0.5]))}
        reward = RewardFactor("g", (Parent("x"),), np.array([-4.0, 6.0]))
        mdp = FactoredMDP(["x"], trans, [reward], action_vars=["a"])
        dbn = unroll(mdp, lookahead=2)
        # p(r=1) = (R + 4) / 10, so p = 0 must invert back to -4 per step
        assert raw_expected_reward(0.0, dbn).value == pytest.approx(-8.0)


class TestValidation:
    def test_probability_out_of_range(self):
        trans = {"x": TransitionCpt((Parent("x"),), np.array([0.5, 1.2]))}
        reward = RewardFactor("g", (Parent("x"),), np.array([0.0, 1.0]))
        with pytest.raises(ModelError):
            FactoredMDP(["x"], trans, [reward], action_vars=["a"])

    def test_unknown_parent(self):
        trans = {"x": TransitionCpt((Parent("y"),), np.array([0.5, 0.5]))}
        reward = RewardFactor("g", (Parent("x"),), np.array([0.0, 1.0]))
        with pytest.raises(ModelError):
            FactoredMDP(["x"], trans, [reward], action_vars=["a"])

    def test_synchronic_cycle(self):
        trans = {
            "x": TransitionCpt((Parent("y", "same"),), np.array([0.5, 0.5])),
            "y": TransitionCpt((Parent("x", "same"),), np.array([0.5, 0.5])),
        }
        reward = RewardFactor("g", (Parent("x"),), np.array([0.0, 1.0]))
        with pytest.raises(ModelError):
            FactoredMDP(["x", "y"], trans, [reward], action_vars=["a"])

    def test_reward_same_slice_parent_rejected(self):
        trans = {"x": TransitionCpt((Parent("x"),), np.array([0.5, 0.5]))}
        reward = RewardFactor("g", (Parent("x", "same"),), np.array([0.0, 1.0]))
        with pytest.raises(ModelError):
            FactoredMDP(["x"], trans, [reward], action_vars=["a"])

    def test_action_space_must_be_single_form(self):
        trans = {"x": TransitionCpt((Parent("x"),), np.array([0.5, 0.5]))}
        reward = RewardFactor("g", (Parent("x"),), np.array([0.0, 1.0]))
        with pytest.raises(ModelError):
            FactoredMDP(["x"], trans, [reward], action_vars=["a"],
                        action_values=("u", "v"))
        with pytest.raises(ModelError):
            FactoredMDP(["x"], trans, [reward])

    def test_table_shape_mismatch(self):
        trans = {"x": TransitionCpt((Parent("x"),), np.array([[0.5, 0.5]]))}
        reward = RewardFactor("g", (Parent("x"),), np.array([0.0, 1.0]))
        with pytest.raises(ModelError):
            FactoredMDP(["x"], trans, [reward], action_vars=["a"])
