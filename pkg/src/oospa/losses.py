"""Training objective: Huber regression plus two gauge-invariant terms.

The Huber term supervises the packed generator entries directly.  The
determinant-overlap term compares occupied subspaces and is invariant
to orthogonal mixing within the occupied block; the orbital term
compares columns up to their individual signs.  All functions accept
torch tensors (gradients flow through) or array-likes.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import InvalidInput

_DTYPE = torch.float64


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 0.1   # determinant-overlap weight
    lambda2: float = 0.1   # sign-invariant orbital weight
    huber_delta: float = 1.0

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0 or self.huber_delta < 0:
            raise InvalidInput("loss weights must be non-negative")


def occupied_columns(matching) -> tuple[int, ...]:
    """Occupied-block column indices: the lower atom index of each edge.

    This is the bonding orbital of the Givens construction, which carries
    the symmetric (+, +) combination of each matched pair.
    """
    return tuple(sorted(min(i, j) for i, j in matching))


def _t(x) -> torch.Tensor:
    return x if isinstance(x, torch.Tensor) else torch.as_tensor(x, dtype=_DTYPE)


def huber_loss(pred, ref, delta: float) -> torch.Tensor:
    """Mean Huber penalty; residuals exactly at the kink take the quadratic branch."""
    pred, ref = _t(pred), _t(ref)
    if pred.shape != ref.shape:
        raise InvalidInput(f"shape mismatch {tuple(pred.shape)} vs {tuple(ref.shape)}")
    r = pred - ref
    absr = torch.abs(r)
    quad = 0.5 * r * r
    lin = delta * (absr - 0.5 * delta)
    return torch.where(absr <= delta, quad, lin).mean()


def det_overlap_loss(m_pred, m_ref, occupied) -> torch.Tensor:
    """1 - det(S)^2 with S the occupied-block overlap; 0 iff subspaces coincide."""
    m_pred, m_ref = _t(m_pred), _t(m_ref)
    if m_pred.shape != m_ref.shape:
        raise InvalidInput("matrix shapes differ")
    cols = list(occupied)
    s = m_pred[:, cols].T @ m_ref[:, cols]
    det = torch.linalg.det(s)
    return 1.0 - det * det


def sign_invariant_orbital_loss(m_pred, m_ref) -> torch.Tensor:
    """Mean over columns of the squared distance minimized over the sign."""
    m_pred, m_ref = _t(m_pred), _t(m_ref)
    if m_pred.shape != m_ref.shape:
        raise InvalidInput("matrix shapes differ")
    minus = ((m_pred - m_ref) ** 2).sum(dim=0)
    plus = ((m_pred + m_ref) ** 2).sum(dim=0)
    return torch.minimum(minus, plus).mean()


def combined_loss(
    pred_upper, m_pred, ref_upper, m_ref, weights: LossWeights, occupied
) -> torch.Tensor:
    return (
        huber_loss(pred_upper, ref_upper, weights.huber_delta)
        + weights.lambda1 * det_overlap_loss(m_pred, m_ref, occupied)
        + weights.lambda2 * sign_invariant_orbital_loss(m_pred, m_ref)
    )


def batch_loss(
    pred_uppers, m_preds, ref_uppers, m_refs, weights: LossWeights, occupied_sets
) -> tuple[torch.Tensor, dict]:
    """Batch reduction: Huber averages over all generator entries of the
    batch; the gauge terms average over molecules."""
    huber = huber_loss(torch.cat(list(pred_uppers)), torch.cat(list(ref_uppers)), weights.huber_delta)
    det_terms = [
        det_overlap_loss(mp, mr, occ)
        for mp, mr, occ in zip(m_preds, m_refs, occupied_sets)
    ]
    orb_terms = [sign_invariant_orbital_loss(mp, mr) for mp, mr in zip(m_preds, m_refs)]
    det = torch.stack(det_terms).mean()
    orb = torch.stack(orb_terms).mean()
    total = huber + weights.lambda1 * det + weights.lambda2 * orb
    parts = {
        "huber": float(huber.detach()),
        "det": float(det.detach()),
        "orb": float(orb.detach()),
    }
    return total, parts
