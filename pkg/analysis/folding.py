"""Secondary structures: max-pairing Nussinov folding oracle and 3D-derived ground truth.

The folding oracle stands in for a thermodynamic folding package; every report
that uses it carries the label config.FOLDING_ORACLE.
"""

from dataclasses import dataclass, field
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from config import CANONICAL_PAIRS, MIN_HAIRPIN_LOOP, PAIR_N_DISTANCE, PAIR_N_TOLERANCE
from core.errors import InputValidationError
from structures.formats import parse_dot_bracket, to_dot_bracket
from structures.types import N_BEAD, RnaStructure


@dataclass(frozen=True)
class SecondaryStructure:
    """Base pairs (i, j), i < j, over n positions; each index pairs at most once.

    Every pair encloses at least `min_loop` unpaired positions (j - i > min_loop).
    """

    n: int
    pairs: FrozenSet[Tuple[int, int]]
    min_loop: int = field(default=MIN_HAIRPIN_LOOP, compare=False)

    def __post_init__(self):
        seen = set()
        for i, j in self.pairs:
            if not 0 <= i < j < self.n:
                raise InputValidationError(f"pair ({i}, {j}) outside 0..{self.n - 1} or not i < j")
            if j - i <= self.min_loop:
                raise InputValidationError(f"pair ({i}, {j}) closes a loop shorter than {self.min_loop}")
            if i in seen or j in seen:
                raise InputValidationError(f"position in pair ({i}, {j}) is already paired")
            seen.update((i, j))

    @classmethod
    def from_pairs(cls, n: int, pairs: Iterable[Tuple[int, int]], min_loop: int = MIN_HAIRPIN_LOOP) -> "SecondaryStructure":
        return cls(n, frozenset((min(i, j), max(i, j)) for i, j in pairs), min_loop)

    @classmethod
    def from_dot_bracket(cls, structure: str, min_loop: int = MIN_HAIRPIN_LOOP) -> "SecondaryStructure":
        return cls.from_pairs(len(structure), parse_dot_bracket(structure), min_loop)

    def dot_bracket(self) -> str:
        return to_dot_bracket(self.n, sorted(self.pairs))

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.pairs:
            adj[i, j] = adj[j, i] = True
        return adj

    def restrict(self, positions: Sequence[int]) -> "SecondaryStructure":
        """Re-index onto a subset of positions (e.g. graph nodes); pairs leaving the subset are dropped."""
        index = {int(p): k for k, p in enumerate(positions)}
        kept = []
        for i, j in self.pairs:
            if i in index and j in index and index[j] - index[i] > self.min_loop:
                kept.append((index[i], index[j]))
        return SecondaryStructure.from_pairs(len(index), kept, self.min_loop)

    def __len__(self) -> int:
        return len(self.pairs)


def can_pair(a: str, b: str) -> bool:
    return (a + b) in CANONICAL_PAIRS


def nussinov_matrix(sequence: str, min_loop: int = MIN_HAIRPIN_LOOP) -> np.ndarray:
    """Max-pair-count table N[i, j] over subsequence i..j."""
    n = len(sequence)
    table = np.zeros((n, n), dtype=np.int64)
    for span in range(min_loop + 1, n):
        for i in range(n - span):
            j = i + span
            best = max(table[i + 1, j], table[i, j - 1])
            if can_pair(sequence[i], sequence[j]):
                best = max(best, table[i + 1, j - 1] + 1)
            if j - i >= 2:
                best = max(best, int(np.max(table[i, i + 1:j] + table[i + 2:j + 1, j])))
            table[i, j] = best
    return table


def nussinov_fold(sequence: str, min_loop: int = MIN_HAIRPIN_LOOP) -> SecondaryStructure:
    """Maximum base-pair structure (WC + GU) with loops of at least `min_loop`.

    Traceback is deterministic: i unpaired, then j unpaired, then (i, j) paired,
    then the leftmost bifurcation reaching the optimum.
    """
    n = len(sequence)
    if n == 0:
        raise InputValidationError("cannot fold an empty sequence")
    table = nussinov_matrix(sequence, min_loop)
    pairs: List[Tuple[int, int]] = []
    stack = [(0, n - 1)]
    while stack:
        i, j = stack.pop()
        if j - i <= min_loop:
            continue
        value = table[i, j]
        if value == 0:
            continue
        if table[i + 1, j] == value:
            stack.append((i + 1, j))
        elif table[i, j - 1] == value:
            stack.append((i, j - 1))
        elif can_pair(sequence[i], sequence[j]) and table[i + 1, j - 1] + 1 == value:
            pairs.append((i, j))
            stack.append((i + 1, j - 1))
        else:
            for k in range(i + 1, j):
                if table[i, k] + table[k + 1, j] == value:
                    stack.append((k + 1, j))
                    stack.append((i, k))
                    break
    return SecondaryStructure.from_pairs(n, pairs, min_loop)


def pairs_from_structure(
    structure: RnaStructure,
    target: float = PAIR_N_DISTANCE,
    tolerance: float = PAIR_N_TOLERANCE,
    dot_bracket: Optional[str] = None,
) -> SecondaryStructure:
    """Ground-truth pairs from glycosidic-nitrogen geometry.

    Complementary nucleotides (WC + GU) whose N beads lie within
    target +/- tolerance, with j - i >= 4, are matched greedily closest to
    `target` first (ties by index); each nucleotide pairs once. A supplied
    dot-bracket string overrides the heuristic.
    """
    n = len(structure)
    if dot_bracket is not None:
        if len(dot_bracket) != n:
            raise InputValidationError(f"dot-bracket length {len(dot_bracket)} != structure length {n}")
        return SecondaryStructure.from_dot_bracket(dot_bracket)

    valid = np.nonzero(structure.mask)[0]
    coords = structure.beads[valid, N_BEAD]
    candidates = []
    for a in range(len(valid)):
        deltas = np.linalg.norm(coords[a + 1:] - coords[a], axis=1)
        for offset, d in enumerate(deltas):
            i, j = int(valid[a]), int(valid[a + 1 + offset])
            if j - i <= MIN_HAIRPIN_LOOP or abs(d - target) > tolerance:
                continue
            if can_pair(structure.sequence[i], structure.sequence[j]):
                candidates.append((abs(d - target), i, j))

    used = set()
    pairs = []
    for _, i, j in sorted(candidates):
        if i in used or j in used:
            continue
        used.update((i, j))
        pairs.append((i, j))
    return SecondaryStructure.from_pairs(n, pairs)


def mcc(pred: SecondaryStructure, truth: SecondaryStructure) -> float:
    """Matthews correlation over candidate pairs i < j with j - i > min_loop.

    The smaller `min_loop` of the two structures sets the candidates. A zero
    denominator gives 0.
    """
    if pred.n != truth.n:
        raise InputValidationError(f"structures have different lengths {pred.n} and {truth.n}")
    n = pred.n
    span = min(pred.min_loop, truth.min_loop) + 1
    total = sum(n - d for d in range(span, n))
    tp = len(pred.pairs & truth.pairs)
    fp = len(pred.pairs - truth.pairs)
    fn = len(truth.pairs - pred.pairs)
    tn = total - tp - fp - fn
    denom = np.sqrt(float(tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
    if denom == 0.0:
        return 0.0
    return float((tp * tn - fp * fn) / denom)
