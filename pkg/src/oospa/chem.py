"""Minimal-basis integral engine for hydrogen systems (STO-3G, 1s only).

All coordinates are stored in Angstrom and converted to bohr once at
integral evaluation; energies are in Hartree throughout.  Only s-type
contracted Gaussians occur, so overlap, kinetic, nuclear-attraction and
electron-repulsion integrals all have closed forms built on the Boys
F0 function:

    S_ab = (pi/p)^{3/2} exp(-mu R_AB^2)
    T_ab = mu (3 - 2 mu R_AB^2) S_ab
    V_ab = -2 pi/p exp(-mu R_AB^2) F0(p |P - C|^2)            (per nucleus C)
    (ab|cd) = 2 pi^{5/2} / (p q sqrt(p+q)) exp(...) F0(pq/(p+q) |P-Q|^2)

with p = alpha + beta, mu = alpha beta / p and P the Gaussian product
center.  Contracted coefficients are renormalized so diagonal overlaps
are exactly 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from . import linalg
from .errors import InvalidGeometry, InvalidInput

BOHR_PER_ANGSTROM = 1.8897259886

# STO-3G hydrogen 1s: standard published exponents / contraction coefficients.
STO3G_H_EXPONENTS = np.array([3.42525091, 0.62391373, 0.16885540])
STO3G_H_COEFFS = np.array([0.15432897, 0.53532814, 0.44463454])

GEOMETRY_MIN_ATOMS = 2
GEOMETRY_MAX_ATOMS = 16
NEAREST_NEIGHBOR_RANGE = (0.5, 4.0)  # Angstrom


@dataclass(frozen=True)
class Geometry:
    """One molecular configuration: coordinates in Angstrom plus metadata."""

    coords: np.ndarray
    elements: tuple[str, ...]
    family: str = "custom"
    seed: int = 0

    def __post_init__(self):
        coords = np.atleast_2d(np.asarray(self.coords, dtype=float))
        if coords.ndim != 2 or coords.shape[1] != 3:
            raise InvalidGeometry(f"coords must be N x 3, got shape {coords.shape}")
        if not np.all(np.isfinite(coords)):
            raise InvalidGeometry("coords contain non-finite values")
        if len(self.elements) != coords.shape[0]:
            raise InvalidGeometry("elements length does not match coords")
        if any(e != "H" for e in self.elements):
            raise InvalidGeometry("only hydrogen is supported")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "elements", tuple(self.elements))

    @property
    def n_atoms(self) -> int:
        return self.coords.shape[0]

    def distance_matrix(self) -> np.ndarray:
        d = self.coords[:, None, :] - self.coords[None, :, :]
        return np.sqrt(np.sum(d * d, axis=-1))

    def nearest_neighbor_distances(self) -> np.ndarray:
        d = self.distance_matrix()
        np.fill_diagonal(d, np.inf)
        return d.min(axis=1)

    def validate(self) -> "Geometry":
        """Enforce the sampled-dataset invariants (even N, spacing window)."""
        n = self.n_atoms
        if n % 2 != 0 or not GEOMETRY_MIN_ATOMS <= n <= GEOMETRY_MAX_ATOMS:
            raise InvalidGeometry(f"atom count {n} outside even range [2, 16]")
        nn = self.nearest_neighbor_distances()
        lo, hi = NEAREST_NEIGHBOR_RANGE
        if nn.min() <= lo or nn.max() >= hi:
            raise InvalidGeometry(
                f"nearest-neighbor distances [{nn.min():.3f}, {nn.max():.3f}] "
                f"outside ({lo}, {hi}) Angstrom"
            )
        return self


def hydrogen_chain(n: int, spacing: float, family: str = "linear_equidistant") -> Geometry:
    """Equidistant chain along x with the given spacing in Angstrom."""
    coords = np.zeros((n, 3))
    coords[:, 0] = spacing * np.arange(n)
    return Geometry(coords, ("H",) * n, family=family)


def hydrogen_ring(n: int, edge: float) -> Geometry:
    """Regular n-gon in the xy plane with the given edge length in Angstrom."""
    radius = edge / (2.0 * np.sin(np.pi / n))
    angles = 2.0 * np.pi * np.arange(n) / n
    coords = np.stack(
        [radius * np.cos(angles), radius * np.sin(angles), np.zeros(n)], axis=1
    )
    return Geometry(coords, ("H",) * n, family="ring")


@dataclass(frozen=True)
class IntegralSet:
    """Nuclear repulsion, one-electron matrix and two-electron tensor.

    ``g`` uses the chemists' convention (pq|rs) with full 8-fold
    permutation symmetry.
    """

    e_nn: float
    h: np.ndarray
    g: np.ndarray
    basis_label: str = "atomic"

    @property
    def n_orbitals(self) -> int:
        return self.h.shape[0]


def boys_f0(t):
    """Boys function F0; series below 1e-7, erf closed form above."""
    t = np.asarray(t, dtype=float)
    small = t < 1e-7
    safe = np.where(small, 1.0, t)
    series = 1.0 - t / 3.0 + t * t / 10.0
    closed = 0.5 * np.sqrt(np.pi / safe) * erf(np.sqrt(safe))
    return np.where(small, series, closed)


def _contraction_coefficients() -> np.ndarray:
    """Primitive coefficients including norms, renormalized to unit self-overlap."""
    alpha = STO3G_H_EXPONENTS
    d = STO3G_H_COEFFS * (2.0 * alpha / np.pi) ** 0.75
    p = alpha[:, None] + alpha[None, :]
    self_overlap = np.sum(d[:, None] * d[None, :] * (np.pi / p) ** 1.5)
    return d / np.sqrt(self_overlap)


_D = _contraction_coefficients()
_ALPHA = STO3G_H_EXPONENTS


def _pair_tables(coords_bohr: np.ndarray):
    """Per atom-pair primitive-pair tables used by all integral routines.

    For atoms (a, b) and primitive exponents (alpha_k, alpha_l) returns
    p = alpha_k + alpha_l (9,), the product prefactor coeff * exp(-mu R^2)
    (9,) and the product centers (9, 3), flattened over primitive pairs.
    """
    n = coords_bohr.shape[0]
    ak = _ALPHA[:, None].repeat(3, axis=1).ravel()
    al = _ALPHA[None, :].repeat(3, axis=0).ravel()
    dk = _D[:, None].repeat(3, axis=1).ravel()
    dl = _D[None, :].repeat(3, axis=0).ravel()
    p = ak + al
    coeff = dk * dl
    tables = {}
    for a in range(n):
        for b in range(a, n):
            r2 = float(np.sum((coords_bohr[a] - coords_bohr[b]) ** 2))
            pref = coeff * np.exp(-ak * al / p * r2)
            centers = (ak[:, None] * coords_bohr[a] + al[:, None] * coords_bohr[b]) / p[:, None]
            tables[(a, b)] = (p, pref, centers, r2)
    return tables


def overlap_matrix(geom: Geometry) -> np.ndarray:
    coords = geom.coords * BOHR_PER_ANGSTROM
    n = geom.n_atoms
    tables = _pair_tables(coords)
    s = np.eye(n)
    for a in range(n):
        for b in range(a, n):
            p, pref, _, _ = tables[(a, b)]
            s[a, b] = s[b, a] = np.sum(pref * (np.pi / p) ** 1.5)
    return s


def core_hamiltonian(geom: Geometry) -> np.ndarray:
    coords = geom.coords * BOHR_PER_ANGSTROM
    n = geom.n_atoms
    ak = _ALPHA[:, None].repeat(3, axis=1).ravel()
    al = _ALPHA[None, :].repeat(3, axis=0).ravel()
    tables = _pair_tables(coords)
    h = np.zeros((n, n))
    for a in range(n):
        for b in range(a, n):
            p, pref, centers, r2 = tables[(a, b)]
            mu = ak * al / p
            kinetic = np.sum(pref * mu * (3.0 - 2.0 * mu * r2) * (np.pi / p) ** 1.5)
            attraction = 0.0
            for c in range(n):  # Z = 1 for every nucleus
                pc2 = np.sum((centers - coords[c]) ** 2, axis=1)
                attraction -= np.sum(pref * (2.0 * np.pi / p) * boys_f0(p * pc2))
            h[a, b] = h[b, a] = kinetic + attraction
    return h


def eri_tensor(geom: Geometry) -> np.ndarray:
    """Two-electron repulsion tensor (pq|rs), chemists' convention."""
    coords = geom.coords * BOHR_PER_ANGSTROM
    n = geom.n_atoms
    tables = _pair_tables(coords)
    g = np.zeros((n, n, n, n))
    pairs = [(a, b) for a in range(n) for b in range(a, n)]
    for idx, (a, b) in enumerate(pairs):
        p, pref_ab, centers_ab, _ = tables[(a, b)]
        for (c, d) in pairs[idx:]:
            q, pref_cd, centers_cd, _ = tables[(c, d)]
            pq2 = np.sum(
                (centers_ab[:, None, :] - centers_cd[None, :, :]) ** 2, axis=-1
            )
            psum = p[:, None] + q[None, :]
            value = float(
                np.sum(
                    pref_ab[:, None]
                    * pref_cd[None, :]
                    * 2.0
                    * np.pi**2.5
                    / (p[:, None] * q[None, :] * np.sqrt(psum))
                    * boys_f0(p[:, None] * q[None, :] / psum * pq2)
                )
            )
            for (i, j) in ((a, b), (b, a)):
                for (k, l) in ((c, d), (d, c)):
                    g[i, j, k, l] = value
                    g[k, l, i, j] = value
    return g


def nuclear_repulsion(geom: Geometry) -> float:
    coords = geom.coords * BOHR_PER_ANGSTROM
    n = geom.n_atoms
    total = 0.0
    for a in range(n):
        for b in range(a + 1, n):
            r = float(np.linalg.norm(coords[a] - coords[b]))
            if r < 1e-6 * BOHR_PER_ANGSTROM:
                raise InvalidGeometry(f"atoms {a} and {b} are coincident")
            total += 1.0 / r
    return total


def atomic_integrals(geom: Geometry) -> IntegralSet:
    """Assemble all integrals in the raw (non-orthogonal) atomic basis."""
    return IntegralSet(
        e_nn=nuclear_repulsion(geom),
        h=core_hamiltonian(geom),
        g=eri_tensor(geom),
        basis_label="atomic",
    )


def _rotate_integrals(h: np.ndarray, g: np.ndarray, c: np.ndarray):
    h_new = c.T @ h @ c
    h_new = 0.5 * (h_new + h_new.T)
    # O(N^5): four successive one-index contractions.
    g_new = np.einsum("ap,abcd->pbcd", c, g)
    g_new = np.einsum("bq,pbcd->pqcd", c, g_new)
    g_new = np.einsum("cr,pqcd->pqrd", c, g_new)
    g_new = np.einsum("ds,pqrd->pqrs", c, g_new)
    return h_new, g_new


def transform_integrals(ints: IntegralSet, c: np.ndarray) -> IntegralSet:
    """Rotate integrals in an orthonormal basis by an orthogonal matrix."""
    c = np.asarray(c, dtype=float)
    n = ints.n_orbitals
    if c.shape != (n, n):
        raise InvalidInput(f"rotation shape {c.shape} does not match {n} orbitals")
    if np.max(np.abs(c.T @ c - np.eye(n))) > 1e-8:
        raise InvalidInput("rotation matrix is not orthogonal")
    h_new, g_new = _rotate_integrals(ints.h, ints.g, c)
    return IntegralSet(e_nn=ints.e_nn, h=h_new, g=g_new, basis_label="rotated")


def to_native_basis(ints: IntegralSet, s: np.ndarray) -> IntegralSet:
    """Transform atomic-basis integrals to Loewdin-orthogonalized orbitals."""
    x = linalg.lowdin_inverse_sqrt(s)
    h_new, g_new = _rotate_integrals(ints.h, ints.g, x)
    return IntegralSet(e_nn=ints.e_nn, h=h_new, g=g_new, basis_label="native")


def native_integrals(geom: Geometry) -> IntegralSet:
    """Atomic integrals followed by symmetric orthogonalization."""
    return to_native_basis(atomic_integrals(geom), overlap_matrix(geom))
