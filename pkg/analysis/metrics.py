"""Design metrics: native sequence recovery, perplexity, and design-set diversity.

Matthews correlation over base pairs lives with the folding oracle in
analysis/folding.py.
"""

from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from config import ALPHABET
from core.errors import DimensionError


@dataclass
class DesignResult:
    """A designed sequence with its per-position log-probabilities and scores."""

    sequence: str
    per_position_logprob: List[float]
    perplexity: float
    recovery: Optional[float] = None
    mcc: Optional[float] = None
    sample_index: int = 0
    details: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_logprobs(cls, sequence: str, logprobs: Sequence[float], **kwargs) -> "DesignResult":
        return cls(
            sequence=sequence,
            per_position_logprob=[float(x) for x in logprobs],
            perplexity=perplexity_from_logprobs(logprobs),
            **kwargs,
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def recovery(designed: str, native: str, mask: Optional[Sequence[bool]] = None) -> float:
    """Fraction of positions where the design matches the native base.

    RR = matches / positions counted

    Args:
        designed: Designed sequence
        native: Native sequence, same length
        mask: Positions to count; defaults to positions with a known native base

    Returns:
        Recovery in [0, 1] (0.0 when no position is counted)

    Raises:
        DimensionError: If the lengths differ
    """
    if len(designed) != len(native):
        raise DimensionError(f"designed length {len(designed)} != native length {len(native)}")
    if mask is None:
        mask = [b in ALPHABET for b in native]
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (len(native),):
        raise DimensionError(f"mask length {mask.shape} != sequence length {len(native)}")
    counted = int(mask.sum())
    if counted == 0:
        return 0.0
    matches = sum(1 for d, t, m in zip(designed, native, mask) if m and d == t)
    return matches / counted


def perplexity_from_logprobs(logprobs: Sequence[float]) -> float:
    """exp(-mean(log p)), natural log."""
    logprobs = np.asarray(logprobs, dtype=np.float64)
    if logprobs.size == 0:
        return float("nan")
    return float(np.exp(-np.mean(logprobs)))


def hamming(a: str, b: str) -> int:
    if len(a) != len(b):
        raise DimensionError(f"sequences have different lengths {len(a)} and {len(b)}")
    return sum(1 for x, y in zip(a, b) if x != y)


def diversity(sequences: Sequence[str]) -> float:
    """Mean pairwise Hamming distance divided by length (0 for fewer than two designs)."""
    if len(sequences) < 2:
        return 0.0
    n = len(sequences[0])
    if n == 0:
        return 0.0
    return float(np.mean([hamming(a, b) / n for a, b in combinations(sequences, 2)]))


def summarize_designs(results: Sequence[DesignResult]) -> Dict[str, float]:
    """Mean recovery / perplexity / MCC over a design set, plus diversity."""
    summary: Dict[str, float] = {
        "n_designs": len(results),
        "sample_perplexity": float(np.mean([r.perplexity for r in results])) if results else float("nan"),
        "diversity": diversity([r.sequence for r in results]),
    }
    recoveries = [r.recovery for r in results if r.recovery is not None]
    if recoveries:
        summary["recovery"] = float(np.mean(recoveries))
    mccs = [r.mcc for r in results if r.mcc is not None]
    if mccs:
        summary["mcc"] = float(np.mean(mccs))
    return summary
