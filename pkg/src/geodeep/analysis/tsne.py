"""Exact (O(n^2)) t-SNE for subsampled feature vectors.

Input affinities are Gaussian with a per-point bandwidth found by bisection
to match the target perplexity (entropy tolerance 1e-5, at most 50 steps),
then symmetrized. Output affinities are Student-t. Optimization is plain
gradient descent with momentum 0.5 (0.8 after iteration 250), learning rate
200, and 12x early exaggeration for the first 250 iterations. Instead of a
random start the embedding is initialized from the first `dims` PCA
coordinates of the sample, each scaled to std 1e-4, which makes the whole
procedure deterministic; the seed argument is kept for interface stability
but has no effect.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pca import fit_pca
from .sampling import PixelSample

ENTROPY_TOL = 1e-5
MAX_BISECTIONS = 50
EXAGGERATION = 12.0
EXAGGERATION_ITERS = 250
LEARNING_RATE = 200.0
MOMENTUM_EARLY = 0.5
MOMENTUM_LATE = 0.8
P_FLOOR = 1e-12


@dataclass
class TsneResult:
    embedding: np.ndarray  # (n, dims)
    kl_initial: float
    kl_final: float


def _squared_distances(x: np.ndarray) -> np.ndarray:
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d2, 0.0)
    return np.maximum(d2, 0.0)


def _conditional_p(d2: np.ndarray, perplexity: float) -> np.ndarray:
    """Per-row Gaussian affinities with entropy log(perplexity)."""
    n = d2.shape[0]
    target = np.log(perplexity)
    p = np.zeros((n, n))
    for i in range(n):
        di = np.delete(d2[i], i)
        beta, beta_min, beta_max = 1.0, -np.inf, np.inf
        for _ in range(MAX_BISECTIONS):
            w = np.exp(-di * beta)
            sw = w.sum()
            if sw <= 0:
                entropy = 0.0
                pi = np.zeros_like(di)
            else:
                entropy = np.log(sw) + beta * float(np.dot(di, w)) / sw
                pi = w / sw
            diff = entropy - target
            if abs(diff) < ENTROPY_TOL:
                break
            if diff > 0:  # entropy too high: sharpen
                beta_min = beta
                beta = beta * 2.0 if np.isinf(beta_max) else (beta + beta_max) / 2.0
            else:
                beta_max = beta
                beta = beta / 2.0 if np.isinf(beta_min) else (beta + beta_min) / 2.0
        p[i, np.arange(n) != i] = pi
    return p


def _joint_q(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    num = 1.0 / (1.0 + _squared_distances(y))
    np.fill_diagonal(num, 0.0)
    q = num / num.sum()
    return np.maximum(q, P_FLOOR), num


def _kl(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def tsne_embed(sample: PixelSample | np.ndarray, dims: int = 2,
               perplexity: float = 30.0, iterations: int = 1000,
               seed: int = 0) -> TsneResult:
    """Embed the sample into `dims` dimensions with exact t-SNE."""
    x = sample.values if isinstance(sample, PixelSample) else np.asarray(sample)
    x = x.astype(np.float64)
    n, d = x.shape
    if dims not in (2, 3):
        raise ValueError("dims must be 2 or 3")
    if perplexity <= 0:
        raise ValueError("perplexity must be positive")
    if n < 3 * perplexity + 1:
        raise ValueError(
            f"n too small: need at least 3*perplexity+1 = "
            f"{int(3 * perplexity + 1)} points, got {n}"
        )
    if n > 10000:
        raise ValueError("exact t-SNE is limited to 10000 points")
    if d < dims:
        raise ValueError(f"cannot draw a {dims}-D init from {d}-D features")

    cond = _conditional_p(_squared_distances(x), perplexity)
    p = (cond + cond.T) / (2.0 * n)
    p = np.maximum(p, P_FLOOR)

    init = fit_pca(x, k=dims)
    y = (x - init.mean) @ init.components.T
    col_std = y.std(axis=0)
    y = np.where(col_std > 0, y / np.where(col_std > 0, col_std, 1.0) * 1e-4, 0.0)

    q, _ = _joint_q(y)
    kl_initial = _kl(p, q)

    velocity = np.zeros_like(y)
    for it in range(iterations):
        p_eff = p * EXAGGERATION if it < EXAGGERATION_ITERS else p
        q, num = _joint_q(y)
        pq = (p_eff - q) * num
        grad = 4.0 * ((np.diag(pq.sum(axis=1)) - pq) @ y)
        momentum = MOMENTUM_EARLY if it < EXAGGERATION_ITERS else MOMENTUM_LATE
        velocity = momentum * velocity - LEARNING_RATE * grad
        y = y + velocity

    q, _ = _joint_q(y)
    return TsneResult(embedding=y, kl_initial=kl_initial, kl_final=_kl(p, q))
