"""Rigid superposition (Kabsch), RMSD and TM-score on C4' coordinates."""

from typing import Tuple

import numpy as np

from core.errors import DimensionError


def _check_pair(a: np.ndarray, b: np.ndarray, min_points: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != 3 or a.shape != b.shape:
        raise DimensionError(f"coordinate sets must both be [n, 3], got {a.shape} and {b.shape}")
    if a.shape[0] < min_points:
        raise DimensionError(f"need at least {min_points} points, got {a.shape[0]}")
    return a, b


def kabsch_rotation(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rotation R minimizing |(a - ca) R - (b - cb)| for centered row-vector sets.

    SVD of the covariance with the determinant sign correction, so R is a proper
    rotation even when the best orthogonal fit is a reflection.
    """
    cov = a.T @ b
    v, _, wt = np.linalg.svd(cov)
    d = np.sign(np.linalg.det(v) * np.linalg.det(wt))
    if d == 0:
        d = 1.0
    correction = np.diag([1.0, 1.0, d])
    return v @ correction @ wt


def superpose(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Return a moved onto b by the optimal rigid motion."""
    a, b = _check_pair(a, b)
    ca, cb = a.mean(axis=0), b.mean(axis=0)
    rot = kabsch_rotation(a - ca, b - cb)
    return (a - ca) @ rot + cb


def kabsch_rmsd(a: np.ndarray, b: np.ndarray) -> float:
    """Minimal RMSD over rigid superposition.

    Args:
        a: [n, 3] coordinates
        b: [n, 3] coordinates, same n

    Returns:
        RMSD in Angstrom

    Raises:
        DimensionError: If shapes differ or n < 3
    """
    a, b = _check_pair(a, b, min_points=3)
    diff = superpose(a, b) - b
    return float(np.sqrt(np.mean(np.sum(diff * diff, axis=1))))


def tm_d0(n: int) -> float:
    """RNA distance scale d0 = max(0.3, 0.6 * sqrt(n - 0.5) - 2.5)."""
    return max(0.3, 0.6 * np.sqrt(max(n - 0.5, 0.0)) - 2.5)


def tm_score_from_distances(distances: np.ndarray) -> float:
    d0 = tm_d0(len(distances))
    return float(np.mean(1.0 / (1.0 + (np.asarray(distances) / d0) ** 2)))


def tm_score(a: np.ndarray, b: np.ndarray) -> float:
    """TM-score of two equal-length structures under the Kabsch superposition."""
    a, b = _check_pair(a, b, min_points=1)
    if a.shape[0] < 3:
        distances = np.linalg.norm(a - a.mean(axis=0) - (b - b.mean(axis=0)), axis=1)
    else:
        distances = np.linalg.norm(superpose(a, b) - b, axis=1)
    return tm_score_from_distances(distances)
