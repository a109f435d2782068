"""Planning as inference in all-binary unrolled dynamic Bayesian networks."""

from .mdp import (
    ACT,
    PREV,
    SAME,
    EvidenceMode,
    FactoredMDP,
    ModelError,
    Parent,
    RawReturn,
    RewardFactor,
    TransitionCpt,
    UnrolledDbn,
    collecting_cpt_entry,
    cumulative_cpt_entry,
    normalize_reward_factor,
    raw_expected_reward,
    structurally_equal,
    unroll,
)
from .oracle import EnumerationLimitError, ExactSummary, exact_enumerate
from .policy import ActionAssignment, PolicyParams

__version__ = "0.1.0"
