"""Deletion gauntlet: attacks, security games, and mechanisms for machine unlearning."""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    DeletionRequest,
    Mechanism,
    MechanismTranscript,
    Multiset,
    Release,
    STAR,
    exact_median,
    rank_error,
    remove,
    star_count,
)
