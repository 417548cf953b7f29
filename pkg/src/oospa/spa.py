"""Seniority-zero Hamiltonian assembly and separable-pair simulation.

In the seniority-zero (hardcore-boson) picture each spatial orbital is
either doubly occupied or empty.  The product ansatz places one boson
per matched orbital pair with amplitudes (cos(theta/2), -sin(theta/2)),
which makes the energy, its gradient and the theta-minimization fully
classical.  A dense diagonalization over all occupation bitstrings
serves as the brute-force oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np
from scipy.optimize import minimize

from .chem import IntegralSet
from .errors import ConvergenceFailure, InvalidInput

THETA_GRAD_TOL = 1e-9
_THETA_MAX_ITER = 500


@dataclass(frozen=True)
class HcbCoefficients:
    """Hardcore-boson Hamiltonian coefficients in an orthonormal basis.

    eps[p] = 2 h_pp + (pp|pp)
    w[p,q] = 4 (pp|qq) - 2 (pq|pq)   (p != q, summed once per unordered pair)
    k[p,q] = (pq|pq)                 (p != q, pair-hopping amplitude)
    """

    eps: np.ndarray
    w: np.ndarray
    k: np.ndarray
    e_nn: float

    @property
    def n_orbitals(self) -> int:
        return self.eps.shape[0]


@dataclass(frozen=True)
class PairStructure:
    """Orbital pairs, one per matching edge; first index is the bonding orbital."""

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "pairs", tuple((int(i), int(j)) for i, j in self.pairs)
        )
        flat = [i for pair in self.pairs for i in pair]
        if sorted(flat) != list(range(len(flat))):
            raise InvalidInput(f"pairs {self.pairs} do not partition the orbitals")

    @property
    def n_orbitals(self) -> int:
        return 2 * len(self.pairs)

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    @classmethod
    def from_matching(cls, edges) -> "PairStructure":
        return cls(tuple(tuple(sorted(e)) for e in sorted(edges)))


def hcb_coefficients(ints: IntegralSet) -> HcbCoefficients:
    g = ints.g
    eps = 2.0 * np.diag(ints.h) + np.einsum("pppp->p", g)
    j = np.einsum("ppqq->pq", g)
    k = np.einsum("pqpq->pq", g).copy()
    w = 4.0 * j - 2.0 * k
    # rotated tensors are 8-fold symmetric only to roundoff; make w, k exact
    w = 0.5 * (w + w.T)
    k = 0.5 * (k + k.T)
    np.fill_diagonal(w, 0.0)
    np.fill_diagonal(k, 0.0)
    return HcbCoefficients(eps=eps, w=w, k=k, e_nn=ints.e_nn)


def _occupations(ps: PairStructure, theta: np.ndarray) -> np.ndarray:
    occ = np.zeros(ps.n_orbitals)
    half = 0.5 * theta
    for (b, a), c, s in zip(ps.pairs, np.cos(half), np.sin(half)):
        occ[b] = c * c
        occ[a] = s * s
    return occ


def spa_energy(c: HcbCoefficients, ps: PairStructure, theta: np.ndarray) -> float:
    """Energy of the separable-pair product state at fixed angles.

    Cross-pair Coulomb terms enter once per unordered orbital pair; the
    intra-pair occupation product is identically zero (one boson per
    pair), and cross-pair coherences vanish for product states.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (ps.n_pairs,):
        raise InvalidInput(f"theta shape {theta.shape}, expected ({ps.n_pairs},)")
    occ = _occupations(ps, theta)
    energy = c.e_nn + float(occ @ c.eps)
    full = float(occ @ c.w @ occ)  # counts every ordered p != q
    intra = sum(occ[b] * occ[a] * c.w[b, a] for b, a in ps.pairs)
    energy += 0.5 * full - intra
    for (b, a), t in zip(ps.pairs, theta):
        energy -= np.sin(t) * c.k[b, a]
    return float(energy)


def spa_gradient(c: HcbCoefficients, ps: PairStructure, theta: np.ndarray) -> np.ndarray:
    """Analytic gradient of ``spa_energy`` with respect to each angle."""
    theta = np.asarray(theta, dtype=float)
    occ = _occupations(ps, theta)
    field = c.w @ occ
    grad = np.zeros(ps.n_pairs)
    for idx, ((b, a), t) in enumerate(zip(ps.pairs, theta)):
        field_b = field[b] - occ[a] * c.w[b, a]
        field_a = field[a] - occ[b] * c.w[a, b]
        grad[idx] = -0.5 * np.sin(t) * (
            c.eps[b] + field_b - c.eps[a] - field_a
        ) - np.cos(t) * c.k[b, a]
    return grad


def canonical_angles(theta: np.ndarray) -> np.ndarray:
    """Map angles into [-pi, pi); the energy is 2*pi-periodic in each."""
    return (np.asarray(theta, dtype=float) + np.pi) % (2.0 * np.pi) - np.pi


def _newton_polish(c: HcbCoefficients, ps: PairStructure, theta: np.ndarray) -> np.ndarray:
    """Newton steps on the analytic gradient; clears BFGS line-search stalls."""
    h = 1e-6
    n = theta.size
    for _ in range(8):
        grad = spa_gradient(c, ps, theta)
        gnorm = np.max(np.abs(grad))
        if gnorm < 0.1 * THETA_GRAD_TOL:
            break
        hess = np.zeros((n, n))
        for i in range(n):
            plus, minus = theta.copy(), theta.copy()
            plus[i] += h
            minus[i] -= h
            hess[:, i] = (spa_gradient(c, ps, plus) - spa_gradient(c, ps, minus)) / (2 * h)
        try:
            step = np.linalg.solve(0.5 * (hess + hess.T), grad)
        except np.linalg.LinAlgError:
            break
        candidate = theta - step
        if np.max(np.abs(spa_gradient(c, ps, candidate))) >= gnorm:
            break
        if spa_energy(c, ps, candidate) > spa_energy(c, ps, theta) + 1e-12:
            break
        theta = candidate
    return theta


def minimize_theta(
    c: HcbCoefficients, ps: PairStructure, theta0: np.ndarray | None = None
) -> tuple[np.ndarray, float]:
    """Quasi-Newton minimization of the pair energy over the angles.

    Starts from the bonding reference (theta = 0) unless a warm start is
    supplied; this is a local descent, matching how the reference state
    seeds the variational optimization.  Raises ``ConvergenceFailure``
    (carrying the best angles and energy found) if the gradient norm does
    not reach tolerance.
    """
    if theta0 is None:
        theta0 = np.zeros(ps.n_pairs)
    theta0 = np.asarray(theta0, dtype=float)
    if not np.all(np.isfinite(theta0)):
        raise InvalidInput("theta0 contains non-finite values")

    res = minimize(
        lambda t: spa_energy(c, ps, t),
        theta0,
        jac=lambda t: spa_gradient(c, ps, t),
        method="BFGS",
        options={"gtol": 1e-10, "maxiter": _THETA_MAX_ITER},
    )
    best = _newton_polish(c, ps, res.x)
    grad_norm = np.max(np.abs(spa_gradient(c, ps, best)))
    if grad_norm > THETA_GRAD_TOL:
        raise ConvergenceFailure(
            f"theta gradient norm {grad_norm:.3e} above {THETA_GRAD_TOL}",
            result=(canonical_angles(best), float(spa_energy(c, ps, best))),
        )
    theta = canonical_angles(best)
    energy = spa_energy(c, ps, theta)
    raw_energy = spa_energy(c, ps, best)
    if energy > raw_energy:  # canonicalization shifted by an ulp; keep the best
        return best, float(raw_energy)
    return theta, float(energy)


def seniority_zero_hamiltonian(
    c: HcbCoefficients, n_pairs: int
) -> tuple[np.ndarray, list[tuple[int, ...]]]:
    """Dense Hamiltonian over all occupations with ``n_pairs`` bosons.

    Diagonal: sum of eps over occupied orbitals plus w summed once per
    occupied unordered pair.  Off-diagonal: k[p, q] between configurations
    related by moving one boson p -> q.  Excludes e_nn.
    """
    n = c.n_orbitals
    dim = comb(n, n_pairs)
    if n > 12 or dim > 924:
        raise InvalidInput(f"dense basis dimension {dim} exceeds the n <= 12 budget")
    basis = list(combinations(range(n), n_pairs))
    index = {occ: i for i, occ in enumerate(basis)}
    ham = np.zeros((dim, dim))
    for i, occ in enumerate(basis):
        occ_set = set(occ)
        diag = float(np.sum(c.eps[list(occ)]))
        for p, q in combinations(occ, 2):
            diag += c.w[p, q]
        ham[i, i] = diag
        for p in occ:
            for q in range(n):
                if q in occ_set:
                    continue
                moved = tuple(sorted(occ_set - {p} | {q}))
                ham[i, index[moved]] = c.k[p, q]
    return ham, basis


def doci_ground_energy(c: HcbCoefficients, n_pairs: int) -> tuple[float, np.ndarray]:
    """Lowest eigenvalue (plus e_nn) and eigenvector of the dense Hamiltonian."""
    ham, _ = seniority_zero_hamiltonian(c, n_pairs)
    vals, vecs = np.linalg.eigh(ham)
    vec = vecs[:, 0]
    pivot = int(np.argmax(np.abs(vec)))
    if vec[pivot] < 0.0:
        vec = -vec
    return float(vals[0] + c.e_nn), vec
