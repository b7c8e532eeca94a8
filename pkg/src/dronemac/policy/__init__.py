"""Policy language, compiler, audit-log extraction and the loading user agent."""

from .compiler import (
    AppInventory,
    AppSpec,
    HighLevelPolicy,
    PolicyKind,
    base_graph,
    compile_policy,
)
from .extract import PolicyCandidate, extract_graph
from .format import parse_policy, serialize_policy
from .loader import LoadResult, bind_and_load, resolve, unload

__all__ = [
    "AppInventory",
    "AppSpec",
    "HighLevelPolicy",
    "LoadResult",
    "PolicyCandidate",
    "PolicyKind",
    "base_graph",
    "bind_and_load",
    "compile_policy",
    "extract_graph",
    "parse_policy",
    "resolve",
    "serialize_policy",
    "unload",
]
