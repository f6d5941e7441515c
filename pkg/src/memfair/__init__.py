"""Weak-memory litmus checking, operational machines and spinloop termination under fairness."""

from .consistency import ALL_MODELS, ModelId, consistent, is_consistent
from .enumeration import ExplorationBounds, check_outcome, enumerate_consistent_graphs
from .errors import MemfairError
from .graphs import Behavior, Event, ExecutionGraph, Label, Relation
from .program import ConcurrentProgram, parse_program
from .termination import analyze_termination

__all__ = [
    "ALL_MODELS",
    "Behavior",
    "ConcurrentProgram",
    "Event",
    "ExecutionGraph",
    "ExplorationBounds",
    "Label",
    "MemfairError",
    "ModelId",
    "Relation",
    "analyze_termination",
    "check_outcome",
    "consistent",
    "enumerate_consistent_graphs",
    "is_consistent",
    "parse_program",
]
