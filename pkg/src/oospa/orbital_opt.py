"""Orbital optimization over the special-orthogonal manifold.

The orbital rotation is parametrized by the packed upper triangle of a
skew-symmetric generator A with M = exp(A).  The outer quasi-Newton
loop minimizes f(A) = min_theta E(theta; integrals rotated by exp(A))
with a central finite-difference gradient; the inner theta solve always
restarts from theta = 0 so f is a pure function of A.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from . import linalg, spa
from .chem import IntegralSet, transform_integrals
from .errors import ConvergenceFailure

OUTER_MAX_ITER = 200
OUTER_ENERGY_TOL = 1e-8
OUTER_GRAD_TOL = 1e-6
FD_STEP = 1e-5


@dataclass
class OrbitalOptResult:
    m_oo: np.ndarray
    theta_opt: np.ndarray
    e_spa: float
    outer_iterations: int
    energy_trace: list[float]


def _inner_solve(avec: np.ndarray, ints_native: IntegralSet, ps: spa.PairStructure):
    a = linalg.unpack_upper(avec, ints_native.n_orbitals)
    m = linalg.expm_antisymmetric(a)
    coeffs = spa.hcb_coefficients(transform_integrals(ints_native, m))
    try:
        theta, energy = spa.minimize_theta(coeffs, ps)
    except ConvergenceFailure as exc:  # keep best-so-far; f stays total
        theta, energy = exc.result
    return energy, theta, m


def _central_fd_gradient(fun, x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    grad = np.zeros_like(x)
    for i in range(x.size):
        forward = x.copy()
        backward = x.copy()
        forward[i] += step
        backward[i] -= step
        grad[i] = (fun(forward) - fun(backward)) / (2.0 * step)
    return grad


def _run_outer(
    ints_native: IntegralSet,
    ps: spa.PairStructure,
    m_init: np.ndarray,
    max_iter: int,
    energy_tol: float | None,
    grad_tol: float,
):
    a0 = linalg.pack_upper(linalg.logm_special_orthogonal(np.asarray(m_init, float)))

    def fun(avec):
        return _inner_solve(avec, ints_native, ps)[0]

    trace = [fun(a0)]

    def callback(xk):
        trace.append(fun(xk))
        if energy_tol is not None and trace[-2] - trace[-1] < energy_tol:
            raise StopIteration

    res = minimize(
        fun,
        a0,
        jac=lambda x: _central_fd_gradient(fun, x),
        method="BFGS",
        callback=callback,
        options={"gtol": grad_tol, "maxiter": max_iter},
    )
    return res, trace


def optimize_orbitals(
    ints_native: IntegralSet,
    ps: spa.PairStructure,
    m_init: np.ndarray,
    max_outer: int = OUTER_MAX_ITER,
) -> OrbitalOptResult:
    """Nested minimization of the pair energy over (generator, angles).

    Terminates on the finite-difference gradient tolerance, on an energy
    decrease below tolerance, or at the iteration cap, whichever comes
    first.  Raises ``ConvergenceFailure`` (carrying the best result) only
    when the line search stalls while the gradient is still large.
    """
    res, trace = _run_outer(
        ints_native, ps, m_init, max_outer, OUTER_ENERGY_TOL, OUTER_GRAD_TOL
    )
    energy, theta, m = _inner_solve(res.x, ints_native, ps)
    if trace[-1] != energy:
        trace.append(energy)
    result = OrbitalOptResult(
        m_oo=m,
        theta_opt=theta,
        e_spa=energy,
        outer_iterations=int(res.nit),
        energy_trace=trace,
    )
    stalled = res.status == 2  # line-search precision loss
    if stalled and np.max(np.abs(res.jac)) > OUTER_GRAD_TOL and res.nit < max_outer:
        raise ConvergenceFailure(
            f"orbital optimization stalled with gradient {np.max(np.abs(res.jac)):.2e}",
            result=result,
        )
    return result


def warm_start_step(
    ints_native: IntegralSet, ps: spa.PairStructure, m_start: np.ndarray
) -> OrbitalOptResult:
    """Exactly one outer quasi-Newton update (with line search) from m_start.

    The angles are fully re-minimized before and after the update; the
    energy never increases.  ``outer_iterations`` is 1 by contract even
    when the gradient at the start is already below machine noise.
    """
    res, trace = _run_outer(ints_native, ps, m_start, 1, None, 1e-14)
    energy, theta, m = _inner_solve(res.x, ints_native, ps)
    if len(trace) == 1:
        trace.append(energy)
    return OrbitalOptResult(
        m_oo=m,
        theta_opt=theta,
        e_spa=energy,
        outer_iterations=1,
        energy_trace=trace,
    )
