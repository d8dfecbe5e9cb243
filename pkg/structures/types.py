"""Core RNA structure containers."""

import hashlib
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from config import ALPHABET
from core.errors import DimensionError, InputValidationError

# Bead order along axis 1 of RnaStructure.beads
BEAD_NAMES = ("P", "C4'", "N")
P_BEAD, C4_BEAD, N_BEAD = 0, 1, 2

# Unknown bases are allowed at design time (pure backbone input)
UNKNOWN_BASE = "N"


def ensemble_id(sequence: str) -> str:
    """Deterministic ensemble id: first 12 hex chars of sha1(sequence)."""
    return hashlib.sha1(sequence.encode("utf-8")).hexdigest()[:12]


@dataclass
class RnaStructure:
    """One chain's 3-bead coarse-grained backbone.

    Attributes:
        id: Structure identifier (file stem + chain)
        sequence: Bases over ACGU (N for unknown)
        beads: [L, 3, 3] coordinates of P, C4', N1/N9 in Angstrom
        mask: [L] True where all three beads are present
        chain_id: PDB chain identifier
        residue_numbers: PDB residue numbers, defaults to 1..L
    """

    id: str
    sequence: str
    beads: np.ndarray
    mask: np.ndarray
    chain_id: str = "A"
    residue_numbers: Optional[List[int]] = None

    def __post_init__(self):
        self.beads = np.asarray(self.beads, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.beads.ndim != 3 or self.beads.shape[1:] != (3, 3):
            raise DimensionError(f"{self.id}: beads must be [L, 3, 3], got {self.beads.shape}")
        if len(self.sequence) != self.beads.shape[0] or self.mask.shape != (self.beads.shape[0],):
            raise DimensionError(
                f"{self.id}: sequence length {len(self.sequence)}, beads {self.beads.shape[0]}, "
                f"mask {self.mask.shape} disagree"
            )
        bad = set(self.sequence) - set(ALPHABET) - {UNKNOWN_BASE}
        if bad:
            raise InputValidationError(f"{self.id}: unknown bases {sorted(bad)}")
        if not np.all(np.isfinite(self.beads[self.mask])):
            raise InputValidationError(f"{self.id}: non-finite coordinates on unmasked residues")
        if self.residue_numbers is None:
            self.residue_numbers = list(range(1, len(self.sequence) + 1))

    def __len__(self) -> int:
        return len(self.sequence)

    @property
    def n_valid(self) -> int:
        return int(self.mask.sum())

    def c4_coords(self) -> np.ndarray:
        """C4' coordinates of unmasked residues, [n, 3]."""
        return self.beads[self.mask, C4_BEAD]

    def with_beads(self, beads: np.ndarray, suffix: str = "") -> "RnaStructure":
        return RnaStructure(
            id=self.id + suffix,
            sequence=self.sequence,
            beads=beads,
            mask=self.mask.copy(),
            chain_id=self.chain_id,
            residue_numbers=list(self.residue_numbers),
        )


@dataclass
class Ensemble:
    """All conformations observed for one sequence."""

    sequence: str
    states: List[RnaStructure] = field(default_factory=list)
    id: str = ""

    def __post_init__(self):
        if not self.states:
            raise InputValidationError("an ensemble needs at least one state")
        for state in self.states:
            if state.sequence != self.sequence:
                raise InputValidationError(
                    f"state {state.id} has sequence of length {len(state.sequence)} "
                    f"that differs from the ensemble sequence"
                )
        if not self.id:
            self.id = ensemble_id(self.sequence)

    def __len__(self) -> int:
        return len(self.sequence)

    @property
    def k(self) -> int:
        return len(self.states)

    def common_mask(self) -> np.ndarray:
        mask = self.states[0].mask.copy()
        for state in self.states[1:]:
            mask &= state.mask
        return mask
