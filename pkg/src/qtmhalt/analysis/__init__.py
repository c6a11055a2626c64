"""Finite truncations of the machine and matrix-side verification of the monitoring identities."""
from .oracle import (
    HeisenbergReport,
    LemmaReport,
    RelationReport,
    TelescopingReport,
    evolution_agreement,
    heisenberg_monitored_distribution,
    heisenberg_observable,
    lemma_suite,
    projection_relations_check,
    qnd_check,
    spectral_blocks,
    telescoping_check,
)
from .truncation import (
    DEFAULT_BASIS_CAP,
    BasisCapError,
    Reach,
    TruncatedModel,
    TruncationError,
    Window,
    build_truncated,
    register_family,
)

__all__ = [
    "DEFAULT_BASIS_CAP", "BasisCapError", "HeisenbergReport", "LemmaReport", "Reach", "RelationReport",
    "TelescopingReport", "TruncatedModel", "TruncationError", "Window", "build_truncated",
    "evolution_agreement", "heisenberg_monitored_distribution", "heisenberg_observable", "lemma_suite",
    "projection_relations_check", "qnd_check", "register_family", "spectral_blocks", "telescoping_check",
]
