"""Central finite-difference gradient verification.

The oracle never touches the tape: it re-runs the forward computation with
per-element nudges, so it stays independent of the analytic path it checks.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def finite_difference_grads(
    loss_fn: Callable[[], Tensor], tensors: Sequence[Tensor], eps: float = 1e-5
) -> list:
    """Central-difference gradient of ``loss_fn()`` w.r.t. each tensor's data.

    ``loss_fn`` must recompute the scalar loss from the tensors' current
    contents on every call; the tensors are perturbed in place and restored.
    """
    grads = []
    for t in tensors:
        fd = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        fd_flat = fd.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(loss_fn().data)
            flat[i] = orig - eps
            f_minus = float(loss_fn().data)
            flat[i] = orig
            fd_flat[i] = (f_plus - f_minus) / (2.0 * eps)
        grads.append(fd)
    return grads


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """||a - b|| / max(||a|| + ||b||, tiny); 0 when both vanish."""
    na = np.linalg.norm(a.ravel())
    nb = np.linalg.norm(b.ravel())
    if na == 0.0 and nb == 0.0:
        return 0.0
    return float(np.linalg.norm((a - b).ravel()) / max(na + nb, 1e-12))


def check_gradients(
    loss_fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    eps: float = 1e-5,
    tol: float = 1e-4,
) -> float:
    """Assert analytic grads of ``loss_fn`` match finite differences.

    Returns the worst relative error over the given tensors; raises
    AssertionError past ``tol``.
    """
    for t in tensors:
        t.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    numeric = finite_difference_grads(loss_fn, tensors, eps=eps)
    worst = 0.0
    for i, (an, fd) in enumerate(zip(analytic, numeric)):
        err = relative_error(an, fd)
        if err > worst:
            worst = err
        assert err < tol, f"gradient mismatch on tensor {i}: rel err {err:.3e} >= {tol:.1e}"
    return worst
