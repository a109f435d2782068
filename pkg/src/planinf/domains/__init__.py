"""Domain definitions: native-format parser plus built-in builders."""

from .builtins import (build_chain_reward, build_cooking,
                       build_independent_arms, build_penalty_corridor,
                       build_synthetic)
from .parser import (DomainParseError, load_domain, parse_domain,
                     serialize_domain)

__all__ = [
    "DomainParseError",
    "build_chain_reward",
    "build_cooking",
    "build_independent_arms",
    "build_penalty_corridor",
    "build_synthetic",
    "load_domain",
    "parse_domain",
    "serialize_domain",
]
