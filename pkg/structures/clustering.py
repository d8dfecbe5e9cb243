"""Greedy leader clustering of ensembles by structure or sequence similarity."""

import logging
from typing import Dict, List, Sequence

import numpy as np

from config import MAX_CLUSTERED_LENGTH, SEQUENCE_IDENTITY_THRESHOLD, TM_SCORE_THRESHOLD
from structures.align import tm_score
from structures.types import C4_BEAD, Ensemble

logger = logging.getLogger(__name__)

UNCLUSTERED = -1


def sequence_identity(a: str, b: str) -> float:
    """Identity over the shorter sequence at the best ungapped offset."""
    if len(a) > len(b):
        a, b = b, a
    if not a:
        return 0.0
    short = np.frombuffer(a.encode("ascii"), dtype=np.uint8)
    long = np.frombuffer(b.encode("ascii"), dtype=np.uint8)
    best = max(int(np.sum(short == long[off:off + len(short)])) for off in range(len(long) - len(short) + 1))
    return best / len(short)


def structural_similarity(a: Ensemble, b: Ensemble) -> float:
    """TM-score between the first states of two equal-length ensembles.

    Positions masked in either state are left out; fewer than 3 shared
    positions gives 0.
    """
    sa, sb = a.states[0], b.states[0]
    shared = sa.mask & sb.mask
    if shared.sum() < 3:
        return 0.0
    return tm_score(sa.beads[shared, C4_BEAD], sb.beads[shared, C4_BEAD])


def _similar(a: Ensemble, b: Ensemble, tm_threshold: float, identity_threshold: float) -> bool:
    if len(a) == len(b):
        return structural_similarity(a, b) > tm_threshold
    return sequence_identity(a.sequence, b.sequence) >= identity_threshold


def cluster_structures(
    ensembles: Sequence[Ensemble],
    threshold: float = TM_SCORE_THRESHOLD,
    identity_threshold: float = SEQUENCE_IDENTITY_THRESHOLD,
    max_length: int = MAX_CLUSTERED_LENGTH,
) -> Dict[str, int]:
    """Assign each ensemble id to a cluster index.

    Ensembles are visited by descending length (ties by id). Each joins the
    first existing cluster whose leader is similar: TM-score above `threshold`
    for equal lengths, sequence identity at least `identity_threshold` otherwise.
    Ensembles longer than `max_length` are left unclustered (index -1).

    Returns:
        Mapping ensemble id -> cluster index (0-based, in creation order)
    """
    order = sorted(ensembles, key=lambda e: (-len(e), e.id))
    leaders: List[Ensemble] = []
    assignments: Dict[str, int] = {}
    for ensemble in order:
        if len(ensemble) > max_length:
            assignments[ensemble.id] = UNCLUSTERED
            continue
        for idx, leader in enumerate(leaders):
            if _similar(ensemble, leader, threshold, identity_threshold):
                assignments[ensemble.id] = idx
                break
        else:
            assignments[ensemble.id] = len(leaders)
            leaders.append(ensemble)
    logger.info(f"Clustered {len(ensembles)} ensembles into {len(leaders)} clusters")
    return assignments


def cluster_members(assignments: Dict[str, int]) -> Dict[int, List[str]]:
    """Invert an assignment map; member ids sorted."""
    members: Dict[int, List[str]] = {}
    for eid, cluster in sorted(assignments.items()):
        members.setdefault(cluster, []).append(eid)
    return members
