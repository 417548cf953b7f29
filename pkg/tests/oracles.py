"""Independent oracle implementations used by the test suite only.

These deliberately re-derive quantities through different routes than
the package (brute-force series, explicit loops, determinant algebra,
numerical quadrature) so each check has two independent sides.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np
from scipy.integrate import dblquad, quad

# ---------------------------------------------------------------------------
# matrix exponential: fixed 30-term Taylor series with spectral-norm scaling


def taylor_expm(a: np.ndarray, terms: int = 30) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    spectral = np.linalg.norm(a, ord=2)
    squarings = max(0, int(np.ceil(np.log2(max(spectral, 1e-300) / 0.5))))
    b = a / (2.0**squarings)
    n = a.shape[0]
    acc = np.eye(n)
    for k in range(terms, 0, -1):  # Horner from the top
        acc = np.eye(n) + b @ acc / k
    for _ in range(squarings):
        acc = acc @ acc
    return acc


def random_skew(n: int, spectral_norm: float, rng: np.random.Generator) -> np.ndarray:
    raw = rng.standard_normal((n, n))
    a = raw - raw.T
    current = np.linalg.norm(a, ord=2)
    return a * (spectral_norm / current)


def random_rotation(n: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def rigid_motion(coords: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    rot = random_rotation(3, rng)
    shift = rng.uniform(-5.0, 5.0, size=3)
    return coords @ rot.T + shift


# ---------------------------------------------------------------------------
# STO-3G quadrature: values frozen into the chem tests were produced by
# these routines (all in bohr; independent of the Boys-function closed forms)

_ALPHA = np.array([3.42525091, 0.62391373, 0.16885540])
_COEF = np.array([0.15432897, 0.53532814, 0.44463454])
_PRIM_NORM = (2.0 * _ALPHA / np.pi) ** 0.75


def _phi_factory():
    def phi_raw(r):
        r = np.asarray(r, dtype=float)
        return np.sum(_COEF * _PRIM_NORM * np.exp(-_ALPHA * r[..., None] ** 2), axis=-1)

    norm, _ = quad(lambda r: 4 * np.pi * r * r * phi_raw(np.array(r)) ** 2, 0, 20, limit=200)
    scale = 1.0 / np.sqrt(norm)
    return lambda r: scale * phi_raw(np.asarray(r, dtype=float))


def overlap_quadrature(r_bohr: float) -> float:
    phi = _phi_factory()
    value, _ = dblquad(
        lambda rho, z: 2 * np.pi * rho * phi(np.hypot(rho, z)) * phi(np.hypot(rho, z - r_bohr)),
        -12, 13, 0, 12, epsabs=1e-11, epsrel=1e-11,
    )
    return value


def h00_quadrature() -> float:
    phi = _phi_factory()
    h = 1e-6

    def dphi(r):
        return (phi(r + h) - phi(r - h)) / (2 * h)

    kinetic, _ = quad(lambda r: 0.5 * 4 * np.pi * r * r * dphi(r) ** 2, 0, 20, limit=400)
    attraction, _ = quad(lambda r: -4 * np.pi * r * phi(r) ** 2, 0, 20, limit=400)
    return kinetic + attraction


def eri0000_quadrature() -> float:
    phi = _phi_factory()

    def cumulative(r1):
        v, _ = quad(lambda r2: 4 * np.pi * r2 * r2 * phi(r2) ** 2, 0, r1, limit=200)
        return v

    def tail(r1):
        v, _ = quad(lambda r2: 4 * np.pi * r2 * phi(r2) ** 2, r1, 25, limit=200)
        return v

    value, _ = quad(
        lambda r1: 4 * np.pi * r1 * r1 * phi(r1) ** 2 * (cumulative(r1) / max(r1, 1e-300) + tail(r1)),
        0, 25, limit=400, epsabs=1e-10, epsrel=1e-10,
    )
    return value


# ---------------------------------------------------------------------------
# naive 8-nested-loop two-electron transform


def naive_transform(h: np.ndarray, g: np.ndarray, c: np.ndarray):
    n = h.shape[0]
    h_new = np.zeros_like(h)
    for p in range(n):
        for q in range(n):
            acc = 0.0
            for a in range(n):
                for b in range(n):
                    acc += c[a, p] * c[b, q] * h[a, b]
            h_new[p, q] = acc
    g_new = np.zeros_like(g)
    for p in range(n):
        for q in range(n):
            for r in range(n):
                for s in range(n):
                    acc = 0.0
                    for a in range(n):
                        for b in range(n):
                            for cc in range(n):
                                for d in range(n):
                                    acc += (
                                        c[a, p] * c[b, q] * c[cc, r] * c[d, s]
                                        * g[a, b, cc, d]
                                    )
                    g_new[p, q, r, s] = acc
    return h_new, g_new


# ---------------------------------------------------------------------------
# determinant-algebra (Slater-Condon) construction of the seniority-zero
# Hamiltonian directly from integrals


def determinant_hamiltonian(h: np.ndarray, g: np.ndarray, n_pairs: int):
    """Dense seniority-zero Hamiltonian over closed-shell determinants.

    Diagonal from <D|H|D> = 2 sum h_pp + sum_{p,q in D} (2 (pp|qq) - (pq|qp));
    off-diagonal (pq|pq) between determinants related by a paired double
    excitation.  Uses chemists' notation throughout.
    """
    n = h.shape[0]
    basis = list(combinations(range(n), n_pairs))
    index = {occ: i for i, occ in enumerate(basis)}
    dim = len(basis)
    ham = np.zeros((dim, dim))
    for i, occ in enumerate(basis):
        diag = 2.0 * sum(h[p, p] for p in occ)
        for p in occ:
            for q in occ:
                diag += 2.0 * g[p, p, q, q] - g[p, q, q, p]
        ham[i, i] = diag
        occ_set = set(occ)
        for p in occ:
            for q in range(n):
                if q in occ_set:
                    continue
                moved = tuple(sorted(occ_set - {p} | {q}))
                ham[i, index[moved]] = g[p, q, p, q]
    return ham, basis


def embed_product_state(ps_pairs, theta: np.ndarray, basis) -> np.ndarray:
    """Amplitudes of the separable pair state in the dense occupation basis."""
    amplitudes = np.zeros(len(basis))
    for i, occ in enumerate(basis):
        occ_set = set(occ)
        amp = 1.0
        for (b, a), t in zip(ps_pairs, theta):
            if b in occ_set and a not in occ_set:
                amp *= np.cos(0.5 * t)
            elif a in occ_set and b not in occ_set:
                amp *= -np.sin(0.5 * t)
            else:
                amp = 0.0
                break
        amplitudes[i] = amp
    return amplitudes


def dense_expectation(h, g, e_nn, ps_pairs, theta) -> float:
    """<Psi(theta)|H|Psi(theta)> in the dense determinant basis."""
    ham, basis = determinant_hamiltonian(h, g, len(ps_pairs))
    psi = embed_product_state(ps_pairs, theta, basis)
    norm = psi @ psi
    return float(psi @ ham @ psi / norm + e_nn)


# ---------------------------------------------------------------------------
# exhaustive perfect-matching enumeration (no memoization)


def all_perfect_matchings(indices):
    indices = list(indices)
    if not indices:
        yield ()
        return
    first = indices[0]
    for pos in range(1, len(indices)):
        second = indices[pos]
        rest = indices[1:pos] + indices[pos + 1 :]
        for sub in all_perfect_matchings(rest):
            yield ((first, second),) + sub


def exhaustive_min_matching(coords: np.ndarray):
    n = coords.shape[0]
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    best = None
    for matching in all_perfect_matchings(range(n)):
        cost = sum(dist[i, j] for i, j in matching)
        key = (cost, matching)
        if best is None or key < best:
            best = key
    return best[1]
