"""Synthetic backbones with known answers: ideal hairpins, random coils, flexible ensembles.

Hairpin geometry: the helix axis is z, rise 2.8 A and twist 32.7 deg per base
pair. Paired glycosidic nitrogens sit on a radius-5 cylinder 125.7 deg apart,
which puts every base-paired N-N distance at 8.9 A. Stems are G/C only and
loops are all A, so the only complementary N-N contacts near 8.9 A are the
designed pairs.
"""

from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from config import ALPHABET
from structures.types import C4_BEAD, Ensemble, RnaStructure

RISE = 2.8
TWIST = np.deg2rad(32.7)
PAIR_OFFSET = np.deg2rad(125.7)
N_RADIUS = 5.0
C4_RADIUS = 7.8
P_RADIUS = 9.0

COMPLEMENT = {"G": "C", "C": "G"}


def _bead_triplet(angle: float, z: float, strand: int) -> np.ndarray:
    """P, C4', N beads of one nucleotide; strand 2 mirrors the offsets."""
    sign = 1.0 if strand == 1 else -1.0
    p = (P_RADIUS, angle - sign * 0.25, z - sign * 1.0)
    c4 = (C4_RADIUS, angle + sign * 0.15, z + sign * 0.6)
    n = (N_RADIUS, angle, z)
    return np.array([[r * np.cos(a), r * np.sin(a), h] for r, a, h in (p, c4, n)])


def ideal_hairpin(
    stem_length: int,
    loop_length: int,
    rng: np.random.Generator,
    structure_id: str = "hairpin",
    stem_sequence: Optional[str] = None,
) -> Tuple[RnaStructure, List[Tuple[int, int]]]:
    """Ideal stem-loop with known base pairs.

    Args:
        stem_length: Base pairs in the stem (>= 1)
        loop_length: Unpaired loop nucleotides (>= 3)
        rng: Random generator for the stem sequence
        structure_id: Id of the returned structure
        stem_sequence: 5' strand of the stem over G/C; random when omitted

    Returns:
        (structure, pairs) with pairs (i, n-1-i) for i < stem_length
    """
    if loop_length < 3 or stem_length < 1:
        raise ValueError("hairpins need stem_length >= 1 and loop_length >= 3")
    if stem_sequence is None:
        stem_sequence = "".join(rng.choice(["G", "C"], size=stem_length))
    n = 2 * stem_length + loop_length
    beads = np.zeros((n, 3, 3))
    for i in range(stem_length):
        angle = i * TWIST
        beads[i] = _bead_triplet(angle, i * RISE, strand=1)
        beads[n - 1 - i] = _bead_triplet(angle + PAIR_OFFSET, i * RISE, strand=2)

    top_angle = (stem_length - 1) * TWIST
    top_z = (stem_length - 1) * RISE
    for t in range(1, loop_length + 1):
        frac = t / (loop_length + 1)
        angle = top_angle + PAIR_OFFSET * frac
        z = top_z + 3.0 + 2.0 * np.sin(np.pi * frac)
        beads[stem_length + t - 1] = _bead_triplet(angle, z, strand=1)

    sequence = stem_sequence + "A" * loop_length + "".join(COMPLEMENT[b] for b in reversed(stem_sequence))
    pairs = [(i, n - 1 - i) for i in range(stem_length)]
    structure = RnaStructure(id=structure_id, sequence=sequence, beads=beads, mask=np.ones(n, dtype=bool))
    return structure, pairs


def random_coil(
    n: int,
    rng: np.random.Generator,
    structure_id: str = "coil",
    step: float = 6.0,
    sequence: Optional[str] = None,
) -> RnaStructure:
    """Self-avoiding-ish random walk of C4' beads with P and N hung off at fixed distances."""
    c4 = np.zeros((n, 3))
    direction = np.array([1.0, 0.0, 0.0])
    for i in range(1, n):
        turn = rng.normal(size=3)
        direction = direction + 0.8 * turn / np.linalg.norm(turn)
        direction /= np.linalg.norm(direction)
        c4[i] = c4[i - 1] + step * direction
    offsets = rng.normal(size=(n, 2, 3))
    offsets /= np.linalg.norm(offsets, axis=-1, keepdims=True)
    beads = np.stack([c4 + 3.9 * offsets[:, 0], c4, c4 + 3.4 * offsets[:, 1]], axis=1)
    if sequence is None:
        sequence = "".join(rng.choice(list(ALPHABET), size=n))
    return RnaStructure(id=structure_id, sequence=sequence, beads=beads, mask=np.ones(n, dtype=bool))


def rigid_transform(structure: RnaStructure, rotation: np.ndarray, translation: np.ndarray, suffix: str = "") -> RnaStructure:
    """Apply x -> R x + t to every bead."""
    beads = structure.beads @ np.asarray(rotation).T + np.asarray(translation)
    return structure.with_beads(beads, suffix)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    return Rotation.random(random_state=rng).as_matrix()


def bend(structure: RnaStructure, angle: float, axis: Optional[np.ndarray] = None, suffix: str = "") -> RnaStructure:
    """Rotate the 3' half of the chain about an axis through the middle C4' bead."""
    n = len(structure)
    hinge = structure.beads[n // 2, C4_BEAD]
    axis = np.array([1.0, 0.0, 0.0]) if axis is None else np.asarray(axis, dtype=np.float64)
    rot = Rotation.from_rotvec(angle * axis / np.linalg.norm(axis)).as_matrix()
    beads = structure.beads.copy()
    beads[n // 2:] = (beads[n // 2:] - hinge) @ rot.T + hinge
    return structure.with_beads(beads, suffix)


def flexible_ensemble(structure: RnaStructure, k: int, max_angle: float) -> Ensemble:
    """k hinge-bent states of one structure, bend angles evenly spaced in [0, max_angle]."""
    angles = np.linspace(0.0, max_angle, k)
    states = [bend(structure, float(a), suffix=f"_s{idx}") for idx, a in enumerate(angles)]
    return Ensemble(sequence=structure.sequence, states=states)


def hairpin_corpus(
    n_ensembles: int,
    rng: np.random.Generator,
    stem_range: Tuple[int, int] = (5, 9),
    loop_range: Tuple[int, int] = (4, 7),
    flexible_fraction: float = 0.25,
    max_states: int = 3,
) -> List[Ensemble]:
    """Corpus of distinct hairpin ensembles; a fraction are multi-state (bent)."""
    ensembles: List[Ensemble] = []
    seen = set()
    while len(ensembles) < n_ensembles:
        stem = int(rng.integers(stem_range[0], stem_range[1] + 1))
        loop = int(rng.integers(loop_range[0], loop_range[1] + 1))
        structure, _ = ideal_hairpin(stem, loop, rng, structure_id=f"hp{len(ensembles):03d}")
        if structure.sequence in seen:
            continue
        seen.add(structure.sequence)
        if rng.random() < flexible_fraction:
            k = int(rng.integers(2, max_states + 1))
            ensembles.append(flexible_ensemble(structure, k, max_angle=float(rng.uniform(0.4, 0.9))))
        else:
            ensembles.append(Ensemble(sequence=structure.sequence, states=[structure]))
    return ensembles
