"""Cross-entropy over affordance maps and the Huber regression loss."""
from __future__ import annotations

import torch


def _as_tensor(x) -> torch.Tensor:
    return x if isinstance(x, torch.Tensor) else torch.as_tensor(x, dtype=torch.float64)


def softmax_nll(Q, Y) -> torch.Tensor:
    """``-sum(Y * log softmax(Q))`` with the softmax over every location of ``Q``."""
    Q, Y = _as_tensor(Q), _as_tensor(Y).to(_as_tensor(Q).dtype)
    logp = Q.flatten() - torch.logsumexp(Q.flatten(), 0)
    return -(Y.flatten() * logp).sum()


def loss_2d(Q_pick, Q_place, Y_pick, Y_place) -> torch.Tensor:
    return softmax_nll(Q_pick, Y_pick) + softmax_nll(Q_place, Y_place)


def loss_2d_index(Q_pick: torch.Tensor, Q_place: torch.Tensor, pick, place) -> torch.Tensor:
    """Same value as :func:`loss_2d` for one-hot targets, from the hot indices."""
    lp = torch.logsumexp(Q_pick.flatten(), 0) - Q_pick[pick[0], pick[1]]
    lq = torch.logsumexp(Q_place.flatten(), 0) - Q_place[place[0], place[1], place[2]]
    return lp + lq


def huber(e) -> torch.Tensor:
    """``0.5 e^2`` for ``|e| < 1``, else ``|e| - 0.5``."""
    e = _as_tensor(e)
    a = e.abs()
    return torch.where(a < 1, 0.5 * e * e, a - 0.5)


def loss_3d(pred, target) -> torch.Tensor:
    """Huber loss summed over (roll, pitch, z)."""
    return huber(_as_tensor(pred) - _as_tensor(target)).sum()
