"""Deterministic graph structures and feature vectors for one molecule.

Node features (width 12 + T, in this order):
    z, log(1 + deg), mean neighbor distance, std neighbor distance,
    min/max distance ratio, directional asymmetry (norm of the mean unit
    displacement to neighbors), distance-skew proxy, distance to matched
    partner, 3 PCA projections, centroid distance, T random-walk returns.

Edge features (width L + 9, per directed pair (i, j), in this order):
    L RBF entries, 1/d, exp(-d), exp(-d^2), d, centroid-frame cosine
    Phi_ij, angular diversity of the source node i, M_init[i, j],
    |d_center,i - d_center,j| / d_max, (d_center,i + d_center,j) / (2 d_max).

Pair features (width 6, per i < j):
    |delta PCA| (3), cos(centroid->i, i->j), cos(partner(i)->i, i->j),
    d_ij / d_max.

This ordering is a compatibility contract for checkpoints.  Neighbor
statistics and the random-walk encoding are evaluated on the fine-cutoff
radius graph.  Degenerate inputs take neutral values: zero-degree nodes
get zero distance statistics (ratio 1, asymmetry 0), vanishing standard
deviation zeroes the skew proxy, and zero-norm direction vectors give
cosine 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .chem import Geometry
from .datagen import givens_guess
from .errors import DegenerateEdge, InvalidInput

NODE_BASE_WIDTH = 12
EDGE_EXTRA_WIDTH = 9
PAIR_WIDTH = 6

DEFAULT_R_FINE = 2.5
DEFAULT_R_COARSE = 5.0
DEFAULT_T_WALK = 8
DEFAULT_L_RBF = 20
DEFAULT_RBF_RANGE = (0.0, 6.0)

_EPS_NORM = 1e-9


@dataclass
class FeatureGraph:
    """All connectivity and feature arrays for a single molecule."""

    n: int
    node_x: np.ndarray
    fine_edges: np.ndarray      # (E, 2) directed pairs (i, j), both orientations
    fine_edge_x: np.ndarray
    coarse_edges: np.ndarray
    coarse_edge_x: np.ndarray
    complete_pairs: np.ndarray  # (P, 2) with i < j
    complete_edge_x: np.ndarray
    pair_x: np.ndarray
    meta: dict = field(default_factory=dict)


def build_graphs(geom: Geometry, r_fine: float, r_coarse: float):
    """Directed radius graphs at both cutoffs plus the complete (i < j) pairs."""
    if r_fine > r_coarse:
        raise InvalidInput(f"r_fine {r_fine} exceeds r_coarse {r_coarse}")
    dist = geom.distance_matrix()
    n = geom.n_atoms

    def radius_edges(cut):
        edges = [(i, j) for i in range(n) for j in range(n) if i != j and dist[i, j] < cut]
        return np.array(edges, dtype=int).reshape(-1, 2)

    pairs = np.array(
        [(i, j) for i in range(n) for j in range(i + 1, n)], dtype=int
    ).reshape(-1, 2)
    return radius_edges(r_fine), radius_edges(r_coarse), pairs


def rwse(adjacency: np.ndarray, t: int) -> np.ndarray:
    """Return probabilities diag(P^k), P = A D^{-1}, for k = 1..t.

    Isolated nodes produce all-zero rows.
    """
    if t < 1:
        raise InvalidInput(f"walk length {t} must be >= 1")
    a = np.asarray(adjacency, dtype=float)
    deg = a.sum(axis=0)
    inv = np.where(deg > 0, 1.0 / np.where(deg > 0, deg, 1.0), 0.0)
    p = a * inv[None, :]
    out = np.zeros((a.shape[0], t))
    power = np.eye(a.shape[0])
    for k in range(t):
        power = power @ p
        out[:, k] = np.diag(power)
    return out


def rbf_expand(r, l: int, d_min: float, d_max: float) -> np.ndarray:
    """Gaussian expansion on a uniform center grid including both endpoints."""
    if l < 2 or d_max <= d_min:
        raise InvalidInput("need l >= 2 and d_max > d_min")
    centers = np.linspace(d_min, d_max, l)
    sigma = (d_max - d_min) / l
    r = np.asarray(r, dtype=float)
    return np.exp(-((r[..., None] - centers) ** 2) / (2.0 * sigma**2))


def angular_matrix(geom: Geometry) -> tuple[np.ndarray, np.ndarray]:
    """Centroid-frame cosine matrix and per-atom angular diversity.

    Phi[i, j] is the cosine of the angle subtended at the centroid;
    atoms sitting on the centroid contribute zero cosines.  Diversity is
    the variance of the off-diagonal row entries.
    """
    n = geom.n_atoms
    if n < 2:
        raise InvalidInput("angular matrix needs at least two atoms")
    centered = geom.coords - geom.coords.mean(axis=0)
    norms = np.linalg.norm(centered, axis=1)
    safe = np.where(norms > _EPS_NORM, norms, 1.0)
    unit = centered / safe[:, None]
    unit[norms <= _EPS_NORM] = 0.0
    phi = unit @ unit.T
    np.clip(phi, -1.0, 1.0, out=phi)
    mask = ~np.eye(n, dtype=bool)
    diversity = np.array([np.var(phi[i][mask[i]]) for i in range(n)])
    return phi, diversity


def _partner_map(matching, n: int) -> np.ndarray:
    partner = np.full(n, -1, dtype=int)
    for i, j in matching:
        partner[i] = j
        partner[j] = i
    if np.any(partner < 0):
        raise InvalidInput("matching does not cover every atom")
    return partner


def node_features(
    geom: Geometry,
    matching,
    adjacency: np.ndarray,
    pca_projections: np.ndarray,
    rwse_rows: np.ndarray,
) -> np.ndarray:
    n = geom.n_atoms
    dist = geom.distance_matrix()
    partner = _partner_map(matching, n)
    centered = geom.coords - geom.coords.mean(axis=0)
    d_center = np.linalg.norm(centered, axis=1)
    t = rwse_rows.shape[1]
    out = np.zeros((n, NODE_BASE_WIDTH + t))
    for i in range(n):
        nbrs = np.flatnonzero(adjacency[i])
        out[i, 0] = 1.0  # atomic number of hydrogen
        out[i, 1] = np.log1p(len(nbrs))
        if len(nbrs) == 0:
            mean_d = std_d = 0.0
            ratio = 1.0
            asym = 0.0
            skew = 0.0
        else:
            d = dist[i, nbrs]
            mean_d = d.mean()
            std_d = d.std()
            ratio = d.min() / d.max()
            units = (geom.coords[nbrs] - geom.coords[i]) / d[:, None]
            asym = float(np.linalg.norm(units.mean(axis=0)))
            midrange = 0.5 * (d.min() + d.max())
            skew = (mean_d - midrange) / std_d if std_d > 1e-12 else 0.0
        out[i, 2] = mean_d
        out[i, 3] = std_d
        out[i, 4] = ratio
        out[i, 5] = asym
        out[i, 6] = skew
        out[i, 7] = dist[i, partner[i]]
        out[i, 8:11] = pca_projections[i]
        out[i, 11] = d_center[i]
        out[i, 12:] = rwse_rows[i]
    return out


def edge_features(
    geom: Geometry,
    m_init: np.ndarray,
    edges: np.ndarray,
    l: int,
    d_min: float,
    d_max_rbf: float,
) -> np.ndarray:
    """Per-directed-edge feature vectors; the first index is the source."""
    edges = np.asarray(edges, dtype=int).reshape(-1, 2)
    n = geom.n_atoms
    dist = geom.distance_matrix()
    phi, diversity = angular_matrix(geom)
    centered = geom.coords - geom.coords.mean(axis=0)
    d_center = np.linalg.norm(centered, axis=1)
    d_max = max(dist.max(), _EPS_NORM)
    out = np.zeros((edges.shape[0], l + EDGE_EXTRA_WIDTH))
    for row, (i, j) in enumerate(edges):
        d = dist[i, j]
        if d < _EPS_NORM:
            raise DegenerateEdge(f"atoms {i} and {j} are separated by {d:.1e} A")
        out[row, :l] = rbf_expand(d, l, d_min, d_max_rbf)
        out[row, l] = 1.0 / d
        out[row, l + 1] = np.exp(-d)
        out[row, l + 2] = np.exp(-d * d)
        out[row, l + 3] = d
        out[row, l + 4] = phi[i, j]
        out[row, l + 5] = diversity[i]
        out[row, l + 6] = m_init[i, j]
        out[row, l + 7] = abs(d_center[i] - d_center[j]) / d_max
        out[row, l + 8] = (d_center[i] + d_center[j]) / (2.0 * d_max)
    return out


def _safe_cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu < _EPS_NORM or nv < _EPS_NORM:
        return 0.0
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def pair_features(
    geom: Geometry,
    matching,
    pca_projections: np.ndarray,
    pairs: np.ndarray,
) -> np.ndarray:
    n = geom.n_atoms
    partner = _partner_map(matching, n)
    centroid = geom.coords.mean(axis=0)
    dist = geom.distance_matrix()
    d_max = max(dist.max(), _EPS_NORM)
    out = np.zeros((pairs.shape[0], PAIR_WIDTH))
    for row, (i, j) in enumerate(pairs):
        bond = geom.coords[j] - geom.coords[i]
        out[row, 0:3] = np.abs(pca_projections[i] - pca_projections[j])
        out[row, 3] = _safe_cosine(geom.coords[i] - centroid, bond)
        out[row, 4] = _safe_cosine(geom.coords[i] - geom.coords[partner[i]], bond)
        out[row, 5] = dist[i, j] / d_max
    return out


def featurize(
    geom: Geometry,
    matching,
    r_fine: float = DEFAULT_R_FINE,
    r_coarse: float = DEFAULT_R_COARSE,
    t_walk: int = DEFAULT_T_WALK,
    l_rbf: int = DEFAULT_L_RBF,
    rbf_min: float = DEFAULT_RBF_RANGE[0],
    rbf_max: float = DEFAULT_RBF_RANGE[1],
) -> FeatureGraph:
    """Full deterministic featurization of one molecule."""
    n = geom.n_atoms
    fine_edges, coarse_edges, pairs = build_graphs(geom, r_fine, r_coarse)
    adjacency = np.zeros((n, n))
    if fine_edges.size:
        adjacency[fine_edges[:, 0], fine_edges[:, 1]] = 1.0
    _, projections = linalg.pca_axes(geom.coords)
    walks = rwse(adjacency, t_walk)
    m_init = givens_guess(matching, n)
    node_x = node_features(geom, matching, adjacency, projections, walks)

    def efeat(edge_list):
        if edge_list.shape[0] == 0:
            return np.zeros((0, l_rbf + EDGE_EXTRA_WIDTH))
        return edge_features(geom, m_init, edge_list, l_rbf, rbf_min, rbf_max)

    return FeatureGraph(
        n=n,
        node_x=node_x,
        fine_edges=fine_edges,
        fine_edge_x=efeat(fine_edges),
        coarse_edges=coarse_edges,
        coarse_edge_x=efeat(coarse_edges),
        complete_pairs=pairs,
        complete_edge_x=efeat(pairs),
        pair_x=pair_features(geom, matching, projections, pairs),
        meta={
            "r_fine": r_fine,
            "r_coarse": r_coarse,
            "t_walk": t_walk,
            "l_rbf": l_rbf,
            "rbf_min": rbf_min,
            "rbf_max": rbf_max,
        },
    )


def feature_dump(fg: FeatureGraph) -> dict:
    """JSON-ready dump of a feature graph (debugging aid)."""
    return {
        "n": fg.n,
        "node_x": fg.node_x.tolist(),
        "fine_edges": fg.fine_edges.tolist(),
        "fine_edge_x": fg.fine_edge_x.tolist(),
        "coarse_edges": fg.coarse_edges.tolist(),
        "coarse_edge_x": fg.coarse_edge_x.tolist(),
        "complete_pairs": fg.complete_pairs.tolist(),
        "complete_edge_x": fg.complete_edge_x.tolist(),
        "pair_x": fg.pair_x.tolist(),
        "meta": fg.meta,
    }
