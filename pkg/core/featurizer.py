"""Geometric graph featurization of RNA backbones.

Node features (per unmasked nucleotide i, centroid x_i of its three beads):
    node_s = [rbf16(|C4'->P|), rbf16(|C4'->N|), sin/cos angle(P, C4', N),
              sin/cos eta_i, sin/cos theta_i]                        (38 values)
    node_v = [unit(x_{i+1} - x_i), unit(x_i - x_{i-1}),
              unit(P - C4'), unit(N - C4')]                          (4 x 3)
Edge features (edge j -> i):
    edge_s = [rbf32(|x_j - x_i|), posenc32(pos_j - pos_i)]           (64 values)
    edge_v = [unit(x_j - x_i)]                                       (1 x 3)

Pseudotorsions:
    eta_i   = dihedral(C4'_{i-1}, P_i, C4'_i, P_{i+1})
    theta_i = dihedral(P_i, C4'_i, P_{i+1}, C4'_{i+1})
Undefined neighbours (chain ends, gaps left by masked residues) give zero
vectors and zero angle features.
"""

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

import config
from core.errors import DimensionError, InputValidationError
from structures.types import C4_BEAD, N_BEAD, P_BEAD, RnaStructure


@dataclass
class GeometricGraph:
    """One featurized conformation. Arrays are float64 numpy."""

    coords: np.ndarray          # [n, 3]
    node_s: np.ndarray          # [n, NODE_SCALAR_IN]
    node_v: np.ndarray          # [n, NODE_VECTOR_IN, 3]
    edge_index: np.ndarray      # [2, E] rows (src j, dst i)
    edge_s: np.ndarray          # [E, EDGE_SCALAR_IN]
    edge_v: np.ndarray          # [E, 1, 3]
    positions: np.ndarray       # [n] residue index in the full chain
    sequence: str = ""          # bases of the n graph nodes

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edge_index.shape[1]


@dataclass
class MultiGraph:
    """k conformations stacked over one union edge list."""

    node_s: np.ndarray          # [n, k, NODE_SCALAR_IN]
    node_v: np.ndarray          # [n, k, NODE_VECTOR_IN, 3]
    edge_index: np.ndarray      # [2, E] union edges sorted by (dst, src)
    edge_s: np.ndarray          # [E, k, EDGE_SCALAR_IN], zero where absent
    edge_v: np.ndarray          # [E, k, 1, 3], zero where absent
    edge_mask: np.ndarray       # [E, k] bool, edge present in that state
    positions: np.ndarray       # [n]
    sequence: str = ""
    state_ids: List[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.node_s.shape[0]

    @property
    def k(self) -> int:
        return self.node_s.shape[1]

    @property
    def num_edges(self) -> int:
        return self.edge_index.shape[1]


# ---------------------------------------------------------------------------
# Geometry primitives
# ---------------------------------------------------------------------------

def unit(v: np.ndarray, eps: float = config.SAFE_NORM_EPS) -> np.ndarray:
    """v / |v| with exact zeros for zero vectors."""
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    return np.where(norm > eps, v / np.maximum(norm, eps), 0.0)


def rbf(d: np.ndarray, count: int, d_min: float = config.RBF_D_MIN, d_max: float = config.RBF_D_MAX) -> np.ndarray:
    """Gaussian radial basis exp(-((d - c_m) / w)^2), centers linspace(d_min, d_max, count), w = spacing."""
    centers = np.linspace(d_min, d_max, count)
    width = (d_max - d_min) / (count - 1)
    d = np.asarray(d, dtype=np.float64)[..., None]
    return np.exp(-(((d - centers) / width) ** 2))


def rbf32(d) -> np.ndarray:
    return rbf(d, config.EDGE_RBF_COUNT)


def posenc(offset, dim: int = config.POSENC_DIM, base: float = config.POSENC_BASE) -> np.ndarray:
    """Interleaved sinusoidal encoding [sin(o/T^(2m/dim)), cos(o/T^(2m/dim))] for m < dim/2."""
    offset = np.asarray(offset, dtype=np.float64)[..., None]
    freq = base ** (2.0 * np.arange(dim // 2) / dim)
    angles = offset / freq
    out = np.empty(offset.shape[:-1] + (dim,))
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


def posenc32(offset) -> np.ndarray:
    return posenc(offset, config.POSENC_DIM)


def dihedral(p0: np.ndarray, p1: np.ndarray, p2: np.ndarray, p3: np.ndarray) -> np.ndarray:
    """Signed dihedral angle (radians) of the chain p0-p1-p2-p3, vectorized over leading axes."""
    b1 = p1 - p0
    b2 = p2 - p1
    b3 = p3 - p2
    n1 = np.cross(b1, b2)
    n2 = np.cross(b2, b3)
    y = np.linalg.norm(b2, axis=-1) * np.sum(b1 * n2, axis=-1)
    x = np.sum(n1 * n2, axis=-1)
    return np.arctan2(y, x)


def bond_angle(a: np.ndarray, center: np.ndarray, b: np.ndarray) -> np.ndarray:
    u = unit(a - center)
    w = unit(b - center)
    return np.arctan2(np.linalg.norm(np.cross(u, w), axis=-1), np.sum(u * w, axis=-1))


# ---------------------------------------------------------------------------
# Featurization operations
# ---------------------------------------------------------------------------

def centroid_coords(structure: RnaStructure, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-nucleotide mean of the three bead coordinates, unmasked nucleotides only."""
    mask = structure.mask if mask is None else mask
    return structure.beads[mask].mean(axis=1)


def add_noise(coords: np.ndarray, sigma: float, rng: Optional[np.random.Generator]) -> np.ndarray:
    """I.i.d. Gaussian noise per coordinate component; sigma 0 returns a copy."""
    if sigma <= 0.0 or rng is None:
        return np.array(coords, dtype=np.float64, copy=True)
    return coords + rng.normal(0.0, sigma, size=np.shape(coords))


def knn_edges(coords: np.ndarray, kmax: int = config.KNN_K) -> np.ndarray:
    """Directed edges j -> i from the min(kmax, n-1) nearest j of every node i.

    Ties go to the smaller index (stable sort).

    Returns:
        [2, n * min(kmax, n-1)] int array, rows (src, dst), grouped by dst
    """
    n = coords.shape[0]
    if n < 2:
        raise InputValidationError(f"knn_edges needs at least 2 nodes, got {n}")
    k = min(kmax, n - 1)
    dist = cdist(coords, coords)
    np.fill_diagonal(dist, np.inf)
    neighbours = np.argsort(dist, axis=1, kind="stable")[:, :k]
    src = neighbours.reshape(-1)
    dst = np.repeat(np.arange(n), k)
    return np.stack([src, dst])


def _neighbour_flags(positions: np.ndarray):
    n = len(positions)
    has_next = np.zeros(n, dtype=bool)
    has_prev = np.zeros(n, dtype=bool)
    if n > 1:
        contiguous = np.diff(positions) == 1
        has_next[:-1] = contiguous
        has_prev[1:] = contiguous
    return has_prev, has_next


def node_features(beads: np.ndarray, coords: np.ndarray, positions: np.ndarray):
    """Scalar and vector node features.

    Args:
        beads: [n, 3, 3] P, C4', N beads of the graph nodes
        coords: [n, 3] node centroids
        positions: [n] residue indices (gaps mark chain breaks)

    Returns:
        (node_s [n, NODE_SCALAR_IN], node_v [n, NODE_VECTOR_IN, 3])
    """
    n = coords.shape[0]
    p, c4, nb = beads[:, P_BEAD], beads[:, C4_BEAD], beads[:, N_BEAD]
    has_prev, has_next = _neighbour_flags(positions)

    forward = np.zeros((n, 3))
    reverse = np.zeros((n, 3))
    forward[has_next] = unit(coords[1:] - coords[:-1])[has_next[:-1]]
    reverse[has_prev] = unit(coords[1:] - coords[:-1])[has_prev[1:]]
    node_v = np.stack([forward, reverse, unit(p - c4), unit(nb - c4)], axis=1)

    angle = bond_angle(p, c4, nb)

    eta = np.zeros(n)
    theta = np.zeros(n)
    eta_ok = has_prev & has_next
    if eta_ok.any():
        idx = np.nonzero(eta_ok)[0]
        eta[idx] = dihedral(c4[idx - 1], p[idx], c4[idx], p[idx + 1])
    if has_next.any():
        idx = np.nonzero(has_next)[0]
        theta[idx] = dihedral(p[idx], c4[idx], p[idx + 1], c4[idx + 1])

    def sincos(values: np.ndarray, valid: np.ndarray) -> np.ndarray:
        out = np.stack([np.sin(values), np.cos(values)], axis=-1)
        out[~valid] = 0.0
        return out

    node_s = np.concatenate([
        rbf(np.linalg.norm(p - c4, axis=-1), config.NODE_RBF_COUNT),
        rbf(np.linalg.norm(nb - c4, axis=-1), config.NODE_RBF_COUNT),
        sincos(angle, np.ones(n, dtype=bool)),
        sincos(eta, eta_ok),
        sincos(theta, has_next),
    ], axis=-1)
    return node_s, node_v


def edge_features(coords: np.ndarray, edge_index: np.ndarray, positions: np.ndarray):
    """edge_s = rbf32(|x_j - x_i|) ++ posenc32(pos_j - pos_i); edge_v = unit(x_j - x_i)."""
    src, dst = edge_index
    delta = coords[src] - coords[dst]
    edge_s = np.concatenate([
        rbf32(np.linalg.norm(delta, axis=-1)),
        posenc32(positions[src] - positions[dst]),
    ], axis=-1)
    edge_v = unit(delta)[:, None, :]
    return edge_s, edge_v


def featurize_structure(
    structure: RnaStructure,
    noise_sigma: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    node_mask: Optional[np.ndarray] = None,
    kmax: int = config.KNN_K,
) -> GeometricGraph:
    """Featurize one conformation (noise is added to bead coordinates first).

    Args:
        structure: Input backbone
        noise_sigma: Gaussian noise std in Angstrom (training only)
        rng: Generator for the noise
        node_mask: Residues to keep; defaults to the structure's own mask
        kmax: Neighbours per node

    Returns:
        GeometricGraph over the kept residues
    """
    mask = structure.mask if node_mask is None else np.asarray(node_mask, dtype=bool)
    if mask.shape != structure.mask.shape or np.any(mask & ~structure.mask):
        raise InputValidationError(f"{structure.id}: node mask selects residues with missing beads")
    if noise_sigma > 0.0:
        noisy = structure.beads.copy()
        noisy[mask] = add_noise(structure.beads[mask], noise_sigma, rng)
        structure = structure.with_beads(noisy)
    beads = structure.beads[mask]
    coords = centroid_coords(structure, mask)
    positions = np.nonzero(mask)[0]
    edge_index = knn_edges(coords, kmax)
    node_s, node_v = node_features(beads, coords, positions)
    edge_s, edge_v = edge_features(coords, edge_index, positions)
    sequence = "".join(structure.sequence[i] for i in positions)
    return GeometricGraph(coords, node_s, node_v, edge_index, edge_s, edge_v, positions, sequence)


def build_multigraph(graphs: Sequence[GeometricGraph], state_ids: Optional[Sequence[str]] = None) -> MultiGraph:
    """Stack conformations over the union of their edge sets.

    Raises:
        DimensionError: If the graphs disagree on node count or ordering
    """
    if not graphs:
        raise InputValidationError("build_multigraph needs at least one graph")
    n = graphs[0].n
    for g in graphs[1:]:
        if g.n != n or not np.array_equal(g.positions, graphs[0].positions):
            raise DimensionError(f"multigraph states disagree on nodes: {g.n} vs {n}")

    keys = [g.edge_index[1].astype(np.int64) * n + g.edge_index[0] for g in graphs]
    union = np.unique(np.concatenate(keys))
    edge_index = np.stack([union % n, union // n])
    num_edges, k = len(union), len(graphs)

    edge_s = np.zeros((num_edges, k, graphs[0].edge_s.shape[1]))
    edge_v = np.zeros((num_edges, k, 1, 3))
    edge_mask = np.zeros((num_edges, k), dtype=bool)
    for state, (g, key) in enumerate(zip(graphs, keys)):
        slots = np.searchsorted(union, key)
        edge_s[slots, state] = g.edge_s
        edge_v[slots, state] = g.edge_v
        edge_mask[slots, state] = True

    return MultiGraph(
        node_s=np.stack([g.node_s for g in graphs], axis=1),
        node_v=np.stack([g.node_v for g in graphs], axis=1),
        edge_index=edge_index,
        edge_s=edge_s,
        edge_v=edge_v,
        edge_mask=edge_mask,
        positions=graphs[0].positions.copy(),
        sequence=graphs[0].sequence,
        state_ids=list(state_ids) if state_ids is not None else [str(i) for i in range(k)],
    )


def featurize_ensemble(
    states: Sequence[RnaStructure],
    noise_sigma: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    kmax: int = config.KNN_K,
) -> MultiGraph:
    """Featurize every state over the residues present in all of them and stack."""
    if not states:
        raise InputValidationError("featurize_ensemble needs at least one state")
    lengths = {len(s) for s in states}
    if len(lengths) != 1:
        raise DimensionError(f"ensemble states have different lengths {sorted(lengths)}")
    mask = states[0].mask.copy()
    for s in states[1:]:
        mask &= s.mask
    graphs = [featurize_structure(s, noise_sigma, rng, node_mask=mask, kmax=kmax) for s in states]
    return build_multigraph(graphs, [s.id for s in states])


def noised_states(structure: RnaStructure, k: int, sigma: float, rng: np.random.Generator) -> List[RnaStructure]:
    """k independently noised copies of one backbone (a pseudo-ensemble)."""
    return [
        structure.with_beads(
            np.where(structure.mask[:, None, None], add_noise(structure.beads, sigma, rng), structure.beads),
            suffix=f"_noise{idx}",
        )
        for idx in range(k)
    ]


# ---------------------------------------------------------------------------
# JSON dump
# ---------------------------------------------------------------------------

_ARRAY_FIELDS = ("node_s", "node_v", "edge_index", "edge_s", "edge_v", "edge_mask", "positions")


def graph_to_json(graph: MultiGraph) -> Dict:
    """Shapes plus flattened row-major arrays."""
    payload: Dict = {"sequence": graph.sequence, "state_ids": list(graph.state_ids), "n": graph.n, "k": graph.k}
    for name in _ARRAY_FIELDS:
        arr = getattr(graph, name)
        payload[name] = {"shape": list(arr.shape), "data": arr.reshape(-1).tolist()}
    return payload


def graph_from_json(payload: Dict) -> MultiGraph:
    arrays = {}
    for name in _ARRAY_FIELDS:
        entry = payload[name]
        arr = np.asarray(entry["data"]).reshape(entry["shape"])
        if name in ("edge_index", "positions"):
            arr = arr.astype(np.int64)
        elif name == "edge_mask":
            arr = arr.astype(bool)
        arrays[name] = arr
    return MultiGraph(sequence=payload["sequence"], state_ids=list(payload["state_ids"]), **arrays)


def dump_graph(graph: MultiGraph) -> str:
    return json.dumps(graph_to_json(graph), indent=2, sort_keys=True)
