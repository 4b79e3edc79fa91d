"""Batched per-node linear algebra helpers over grid-shaped arrays."""

from __future__ import annotations

import numpy as np


def eye_like(a: np.ndarray) -> np.ndarray:
    """Identity matrices broadcast to the shape of a stack of square matrices."""
    return np.broadcast_to(np.eye(a.shape[-1]), a.shape).copy()


def transpose(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


def safe_inv(a: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Inverse where ``mask`` holds, identity elsewhere."""
    guarded = np.where(mask[..., None, None], a, eye_like(a))
    return np.linalg.inv(guarded)


def matvec(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    return (a @ x[..., None])[..., 0]


def condition_numbers(a: np.ndarray) -> np.ndarray:
    """2-norm condition numbers; singular matrices map to ``inf``."""
    s = np.linalg.svd(a, compute_uv=False)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(s[..., -1] > 0.0, s[..., 0] / s[..., -1], np.inf)


def masked_max(values: np.ndarray, mask: np.ndarray) -> float:
    """Max of ``values`` over masked nodes (trailing axes reduced too)."""
    if not mask.any():
        return 0.0
    selected = values[mask]
    return float(np.max(selected)) if selected.size else 0.0


def frobenius(a: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(a * a, axis=(-2, -1)))
