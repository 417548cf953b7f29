"""Geometry sampling, perfect matching, Givens guesses and dataset records.

Records are written as UTF-8 JSON Lines with a fixed field order so a
given (family, n, count, seed) spec reproduces the file byte for byte.
Per-record seeds are derived from (base seed, record index, attempt), so
generation parallelizes across records without changing content.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import linalg, orbital_opt, spa
from .chem import Geometry, atomic_integrals, hydrogen_chain, hydrogen_ring, overlap_matrix, to_native_basis
from .errors import BranchBoundary, ConvergenceFailure, InvalidInput, SamplingFailure

SCHEMA_VERSION = 1

FAMILIES = (
    "linear_equidistant",
    "linear_random",
    "planar_equidistant",
    "planar_random",
    "ring",
    "random_3d",
)

SPACING_RANGE = (0.5, 4.0)  # Angstrom
_REJECTION_BUDGET = 10_000
_RECORD_ATTEMPTS = 100
# Box sides chosen so typical nearest-neighbor spacing lands near 1.2 A.
_BOX_SCALE_2D = 2.0
_BOX_SCALE_3D = 2.2


def derive_record_seed(base_seed: int, index: int, attempt: int = 0) -> int:
    """Deterministic, collision-resistant per-record seed."""
    return int(np.random.SeedSequence((base_seed, index, attempt)).generate_state(1)[0])


def _nn_ok(coords: np.ndarray) -> bool:
    d = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt(np.sum(d * d, axis=-1))
    np.fill_diagonal(dist, np.inf)
    nn = dist.min(axis=1)
    lo, hi = SPACING_RANGE
    return bool(nn.min() > lo and nn.max() < hi)


def sample_geometry(family: str, n: int, seed: int) -> Geometry:
    """Draw one configuration from a Table-style geometry family."""
    if family not in FAMILIES:
        raise InvalidInput(f"unknown family {family!r}")
    if n % 2 != 0 or not 4 <= n <= 12:
        raise InvalidInput(f"atom count {n} must be even and in [4, 12]")
    rng = np.random.default_rng(seed)
    lo, hi = SPACING_RANGE

    if family == "linear_equidistant":
        coords = np.zeros((n, 3))
        coords[:, 0] = rng.uniform(lo, hi) * np.arange(n)
    elif family == "linear_random":
        gaps = rng.uniform(lo, hi, size=n - 1)
        coords = np.zeros((n, 3))
        coords[1:, 0] = np.cumsum(gaps)
    elif family == "planar_equidistant":
        # 2 x (n/2) rectangular grid.
        spacing = rng.uniform(lo, hi)
        coords = np.zeros((n, 3))
        cols = n // 2
        for i in range(n):
            coords[i, 0] = spacing * (i % cols)
            coords[i, 1] = spacing * (i // cols)
    elif family == "ring":
        return Geometry(
            hydrogen_ring(n, rng.uniform(lo, hi)).coords,
            ("H",) * n,
            family=family,
            seed=seed,
        )
    else:
        if family == "planar_random":
            side = _BOX_SCALE_2D * np.sqrt(n)
            dims = 2
        else:  # random_3d
            side = _BOX_SCALE_3D * n ** (1.0 / 3.0)
            dims = 3
        for _ in range(_REJECTION_BUDGET):
            coords = np.zeros((n, 3))
            coords[:, :dims] = rng.uniform(0.0, side, size=(n, dims))
            if _nn_ok(coords):
                break
        else:
            raise SamplingFailure(
                f"no valid {family} H{n} sample in {_REJECTION_BUDGET} attempts"
            )
    return Geometry(coords, ("H",) * n, family=family, seed=seed)


def min_weight_matching(geom: Geometry) -> tuple[tuple[int, int], ...]:
    """Exact minimum-total-length perfect matching of the atoms.

    Exhaustive recursion with memoization over index subsets; ties are
    broken by lexicographically smallest edge list.  At n = 12 this
    enumerates 10395 matchings, so no Blossom machinery is needed.
    """
    n = geom.n_atoms
    if n % 2 != 0:
        raise InvalidInput(f"perfect matching needs an even atom count, got {n}")
    dist = geom.distance_matrix()

    @lru_cache(maxsize=None)
    def best(mask: int) -> tuple[float, tuple[tuple[int, int], ...]]:
        if mask == 0:
            return 0.0, ()
        i = (mask & -mask).bit_length() - 1
        candidates = []
        for j in range(i + 1, n):
            if mask & (1 << j):
                rest_cost, rest_edges = best(mask & ~(1 << i) & ~(1 << j))
                candidates.append((dist[i, j] + rest_cost, ((i, j),) + rest_edges))
        return min(candidates)

    _, edges = best((1 << n) - 1)
    best.cache_clear()
    return edges


def givens_guess(matching, n: int) -> np.ndarray:
    """Block bonding/anti-bonding guess: per edge (i, j) the 2x2 block
    (1/sqrt 2) [[1, 1], [-1, 1]] at rows/columns (i, j), identity elsewhere."""
    m = np.eye(n)
    r = 1.0 / np.sqrt(2.0)
    for i, j in matching:
        if not 0 <= i < j < n:
            raise InvalidInput(f"edge ({i}, {j}) out of range for n={n}")
        m[i, i] = m[j, j] = r
        m[i, j] = r
        m[j, i] = -r
    return m


@dataclass
class DatasetRecord:
    """One training tuple: geometry, matching, optimized angles and orbitals."""

    geometry: Geometry
    edges: tuple[tuple[int, int], ...]
    theta_opt: np.ndarray
    m_oo: np.ndarray
    e_spa: float
    e_init: float
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> str:
        obj = {
            "coords": self.geometry.coords.tolist(),
            "elements": list(self.geometry.elements),
            "family": self.geometry.family,
            "seed": int(self.geometry.seed),
            "edges": [list(e) for e in self.edges],
            "theta_opt": np.asarray(self.theta_opt).tolist(),
            "m_oo": np.asarray(self.m_oo).tolist(),
            "e_spa": float(self.e_spa),
            "e_init": float(self.e_init),
            "schema_version": int(self.schema_version),
        }
        return json.dumps(obj, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "DatasetRecord":
        obj = json.loads(line)
        if obj.get("schema_version") != SCHEMA_VERSION:
            raise InvalidInput(
                f"unsupported schema_version {obj.get('schema_version')!r}"
            )
        geometry = Geometry(
            np.array(obj["coords"], dtype=float),
            tuple(obj["elements"]),
            family=obj["family"],
            seed=int(obj["seed"]),
        )
        record = cls(
            geometry=geometry,
            edges=tuple(tuple(int(v) for v in e) for e in obj["edges"]),
            theta_opt=np.array(obj["theta_opt"], dtype=float),
            m_oo=np.array(obj["m_oo"], dtype=float),
            e_spa=float(obj["e_spa"]),
            e_init=float(obj["e_init"]),
        )
        record.check_invariants()
        return record

    def check_invariants(self):
        n = self.geometry.n_atoms
        m = self.m_oo
        if m.shape != (n, n):
            raise InvalidInput(f"m_oo shape {m.shape} does not match {n} atoms")
        if np.max(np.abs(m.T @ m - np.eye(n))) > linalg.ORTHO_TOL:
            raise InvalidInput("stored m_oo violates orthogonality tolerance")
        if self.e_spa > self.e_init + 1e-9:
            raise InvalidInput("stored e_spa exceeds the Givens-basis energy")
        spa.PairStructure.from_matching(self.edges)


def generate_record(family: str, n: int, seed: int) -> DatasetRecord:
    """Run the full per-record pipeline for one sampled geometry.

    Raises ``BranchBoundary`` when the optimized rotation has no principal
    real logarithm; callers resample with an advanced seed in that case.
    """
    geom = sample_geometry(family, n, seed).validate()
    edges = min_weight_matching(geom)
    ps = spa.PairStructure.from_matching(edges)
    m_init = givens_guess(edges, n)
    ints_native = to_native_basis(atomic_integrals(geom), overlap_matrix(geom))
    try:
        result = orbital_opt.optimize_orbitals(ints_native, ps, m_init)
    except ConvergenceFailure as exc:
        result = exc.result  # monotone best-so-far is still a valid record
    linalg.logm_special_orthogonal(result.m_oo)  # reject branch-boundary targets
    return DatasetRecord(
        geometry=geom,
        edges=edges,
        theta_opt=result.theta_opt,
        m_oo=result.m_oo,
        e_spa=result.e_spa,
        e_init=result.energy_trace[0],
    )


def _record_line(args) -> tuple[str, int]:
    family, n, base_seed, index = args
    rejected = 0
    for attempt in range(_RECORD_ATTEMPTS):
        seed = derive_record_seed(base_seed, index, attempt)
        try:
            return generate_record(family, n, seed).to_json(), rejected
        except BranchBoundary:
            rejected += 1
    raise SamplingFailure(
        f"record {index}: {_RECORD_ATTEMPTS} attempts all hit the branch boundary"
    )


def generate_dataset(
    family: str,
    n: int,
    count: int,
    seed: int,
    out_path,
    workers: int = 1,
) -> dict:
    """Generate ``count`` records and append nothing: the file is rewritten.

    Output is deterministic for a given (family, n, count, seed) spec
    regardless of ``workers``.
    """
    tasks = [(family, n, seed, i) for i in range(count)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_record_line, tasks, chunksize=4))
    else:
        results = [_record_line(t) for t in tasks]
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        for line, _ in results:
            fh.write(line + "\n")
    return {"written": len(results), "rejected": sum(r for _, r in results)}


def load_dataset(path) -> list[DatasetRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(DatasetRecord.from_json(line))
            except (KeyError, ValueError, InvalidInput) as exc:
                raise InvalidInput(f"{path}:{lineno}: bad record: {exc}") from exc
    return records


def reference_chain(n: int, spacing: float) -> Geometry:
    """Deterministic equidistant chain used by the energy-curve workflows."""
    return hydrogen_chain(n, spacing)


def reference_ring(n: int, edge: float) -> Geometry:
    return hydrogen_ring(n, edge)
