"""Single-state and multi-state train/validation/test splits.

Both splits keep whole clusters together and cap validation/test clusters at
MAX_CLUSTER_SEQUENCES unique sequences. RNAs shorter than MIN_RNA_LENGTH are
dropped; unclustered (very large) RNAs always go to train.
"""

import logging
from itertools import combinations
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

import config
from core.errors import InputValidationError
from runner.schema import SplitManifest
from structures.align import kabsch_rmsd
from structures.clustering import UNCLUSTERED, cluster_members
from structures.types import C4_BEAD, Ensemble

logger = logging.getLogger(__name__)

TIE_BREAK_NOTE = "clusters with equal median intra-sequence RMSD are ordered by smallest member id"


def split_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, config.STREAM_SPLIT]))


def eligible_ensembles(ensembles: Iterable[Ensemble], min_length: int = config.MIN_RNA_LENGTH) -> List[Ensemble]:
    kept = [e for e in ensembles if len(e) >= min_length]
    return sorted(kept, key=lambda e: e.id)


def intra_sequence_rmsd(ensemble: Ensemble) -> float:
    """Median pairwise C4' RMSD among an ensemble's states (0 for one state)."""
    if ensemble.k < 2:
        return 0.0
    mask = ensemble.common_mask()
    if mask.sum() < 3:
        return 0.0
    coords = [state.beads[mask, C4_BEAD] for state in ensemble.states]
    return float(np.median([kabsch_rmsd(a, b) for a, b in combinations(coords, 2)]))


def _fill(
    clusters: Sequence[Tuple[int, List[str]]],
    cap: int,
    max_sequences: int,
) -> Tuple[List[str], List[Tuple[int, List[str]]]]:
    """Take clusters in order while they fit under cap; return (taken ids, leftovers)."""
    taken: List[str] = []
    leftovers = []
    full = False
    for cluster_id, members in clusters:
        if not full and len(members) <= max_sequences and len(taken) + len(members) <= cap:
            taken.extend(members)
        else:
            if len(members) <= max_sequences and len(taken) + len(members) > cap:
                full = True
            leftovers.append((cluster_id, members))
    return taken, leftovers


def make_single_state_split(
    ensembles: Sequence[Ensemble],
    clusters: Dict[str, int],
    test_ids: Sequence[str],
    seed: int = config.DEFAULT_SEED,
    val_size: int = config.VAL_SIZE,
    max_cluster_sequences: int = config.MAX_CLUSTER_SEQUENCES,
    min_length: int = config.MIN_RNA_LENGTH,
) -> SplitManifest:
    """Hold out every cluster touching a listed test RNA.

    Test clusters with more than `max_cluster_sequences` members contribute only
    the listed test ids; their other members are excluded. Remaining clusters are
    shuffled and fill validation up to `val_size`; the rest is training data.

    Raises:
        InputValidationError: If a test id is not in the corpus or the test set
            is empty after length filtering
    """
    eligible = eligible_ensembles(ensembles, min_length)
    eligible_ids = {e.id for e in eligible}
    corpus_ids = {e.id for e in ensembles}
    missing = [t for t in test_ids if t not in corpus_ids]
    if missing:
        raise InputValidationError(f"Test ids not in corpus: {missing[:5]}")

    members = cluster_members({eid: c for eid, c in clusters.items() if eid in eligible_ids})
    test_set = [t for t in test_ids if t in eligible_ids]
    if not test_set:
        raise InputValidationError("Test set is empty after length filtering")

    test: List[str] = []
    excluded: List[str] = []
    test_clusters = {clusters[t] for t in test_set if clusters.get(t, UNCLUSTERED) != UNCLUSTERED}
    for cluster_id in sorted(test_clusters):
        cluster = members[cluster_id]
        if len(cluster) <= max_cluster_sequences:
            test.extend(cluster)
        else:
            test.extend(eid for eid in cluster if eid in test_set)
            excluded.extend(eid for eid in cluster if eid not in test_set)
    test.extend(t for t in test_set if clusters.get(t, UNCLUSTERED) == UNCLUSTERED)

    train: List[str] = list(members.get(UNCLUSTERED, []))
    train = [eid for eid in train if eid not in test]
    remaining = [(cid, ids) for cid, ids in sorted(members.items())
                 if cid != UNCLUSTERED and cid not in test_clusters]
    order = split_rng(seed).permutation(len(remaining))
    shuffled = [remaining[i] for i in order]
    val, leftovers = _fill(shuffled, val_size, max_cluster_sequences)
    for _, ids in leftovers:
        train.extend(ids)

    manifest = SplitManifest(
        split_name="single_state",
        train=sorted(train),
        val=sorted(val),
        test=sorted(set(test)),
        cluster_assignments={eid: clusters[eid] for eid in sorted(eligible_ids) if eid in clusters},
        seed=seed,
        excluded=sorted(excluded),
    )
    logger.info(f"single_state split: {len(manifest.train)} train / {len(manifest.val)} val / "
                f"{len(manifest.test)} test ({len(excluded)} excluded)")
    return manifest


def make_multi_state_split(
    ensembles: Sequence[Ensemble],
    clusters: Dict[str, int],
    seed: int = config.DEFAULT_SEED,
    test_size: int = config.TEST_SIZE,
    val_size: int = config.VAL_SIZE,
    max_cluster_sequences: int = config.MAX_CLUSTER_SEQUENCES,
    min_length: int = config.MIN_RNA_LENGTH,
) -> SplitManifest:
    """Hold out the most conformationally flexible clusters.

    Each cluster is scored by the median over its members of intra-sequence
    RMSD. Clusters are ranked by descending score (ties by smallest member id);
    clusters with positive score fill test, then validation; everything else
    is training data.
    """
    eligible = eligible_ensembles(ensembles, min_length)
    by_id = {e.id: e for e in eligible}
    members = cluster_members({eid: c for eid, c in clusters.items() if eid in by_id})

    scored = []
    for cluster_id, ids in members.items():
        if cluster_id == UNCLUSTERED:
            continue
        score = float(np.median([intra_sequence_rmsd(by_id[eid]) for eid in ids]))
        scored.append((score, ids[0], cluster_id, ids))
    scored.sort(key=lambda item: (-item[0], item[1]))

    flexible = [(cid, ids) for score, _, cid, ids in scored if score > 0.0]
    rigid = [(cid, ids) for score, _, cid, ids in scored if score <= 0.0]
    test, rest = _fill(flexible, test_size, max_cluster_sequences)
    val, rest = _fill(rest, val_size, max_cluster_sequences)

    train: List[str] = list(members.get(UNCLUSTERED, []))
    for _, ids in rest + rigid:
        train.extend(ids)

    manifest = SplitManifest(
        split_name="multi_state",
        train=sorted(train),
        val=sorted(val),
        test=sorted(test),
        cluster_assignments={eid: clusters[eid] for eid in sorted(by_id) if eid in clusters},
        seed=seed,
        notes=[TIE_BREAK_NOTE],
    )
    logger.info(f"multi_state split: {len(manifest.train)} train / {len(manifest.val)} val / "
                f"{len(manifest.test)} test")
    return manifest


def cluster_sizes(manifest: SplitManifest, split: str) -> Dict[int, int]:
    """Unique-sequence count per cluster inside one split list."""
    sizes: Dict[int, int] = {}
    for eid in getattr(manifest, split):
        cluster = manifest.cluster_assignments.get(eid, UNCLUSTERED)
        sizes[cluster] = sizes.get(cluster, 0) + 1
    return sizes


def select_split(ensembles: Sequence[Ensemble], manifest: SplitManifest, split: str) -> List[Ensemble]:
    wanted = set(getattr(manifest, split))
    return [e for e in sorted(ensembles, key=lambda e: e.id) if e.id in wanted]


def read_test_ids(text: Optional[str]) -> List[str]:
    """One ensemble id per line; '#' starts a comment."""
    if not text:
        return []
    ids = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            ids.append(line)
    return ids
