from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distances import MetricError


@dataclass(frozen=True)
class GaussianStats:
    mean: np.ndarray  # (d,)
    cov: np.ndarray  # (d, d)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def gaussian_stats(features, eps: float = 1e-6) -> GaussianStats:
    """Sample mean and unbiased covariance (plus ``eps * I``) of row vectors."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] == 0:
        raise MetricError("cannot fit a Gaussian to an empty feature set")
    mu = x.mean(axis=0)
    if x.shape[0] > 1:
        cov = np.cov(x, rowvar=False).reshape(x.shape[1], x.shape[1])
    else:
        cov = np.zeros((x.shape[1], x.shape[1]))
    return GaussianStats(mu, cov + eps * np.eye(x.shape[1]))


def _sym_sqrt(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((a + a.T) / 2)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.T


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """Squared 2-Wasserstein distance between two Gaussians.

    tr((Sa Sb)^1/2) is taken as the trace of the square root of the
    symmetric product Sa^1/2 Sb Sa^1/2, which has the same eigenvalues.
    """
    if a.dim != b.dim:
        raise MetricError(f"dimension mismatch: {a.dim} vs {b.dim}")
    ra = _sym_sqrt(a.cov)
    m = ra @ b.cov @ ra
    eig = np.linalg.eigvalsh((m + m.T) / 2)
    tr_sqrt = float(np.sum(np.sqrt(np.clip(eig, 0, None))))
    diff = a.mean - b.mean
    d = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2 * tr_sqrt)
    return max(d, 0.0)


def semantic_embeddings(tokenizer, waves) -> np.ndarray:
    """Time-pooled frozen semantic features, one row per clip."""
    import torch

    tokenizer.eval()
    with torch.no_grad():
        return np.stack([tokenizer.encode_semantic(w).data[0].mean(0).double().numpy() for w in waves])


def semantic_fad(tokenizer, reference, generated, eps: float = 1e-6) -> float:
    """Frechet distance between two clip sets in the frozen semantic encoder's embedding space.

    Stands in for FAD at desk scale, where no pretrained audio embedder is
    available. Values are only comparable between runs sharing one encoder.
    """
    return frechet_distance(
        gaussian_stats(semantic_embeddings(tokenizer, reference), eps),
        gaussian_stats(semantic_embeddings(tokenizer, generated), eps),
    )
