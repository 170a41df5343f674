"""Hitting times and conjugacy invariants of attracting cycles between two periodic orbits."""

from __future__ import annotations

from .model import (
    CycleParams,
    InvariantSet,
    TransitionParams,
    derive_constants,
    invariants_closed_form,
    recursion_constant,
)
from .piecewise import CylPoint, HittingRecord, hitting_sequence

__all__ = [
    "CycleParams",
    "CylPoint",
    "HittingRecord",
    "InvariantSet",
    "TransitionParams",
    "derive_constants",
    "hitting_sequence",
    "invariants_closed_form",
    "recursion_constant",
]
