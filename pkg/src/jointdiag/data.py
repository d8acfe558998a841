"""Synthetic experiments, whitening initialization and segment covariances."""

import warnings
from dataclasses import dataclass

import numpy as np

from .core import Diagonalizer, DomainError, SymmetricMatrixSet

GENERATOR_NAME = "numpy.random.Generator(PCG64)"

MIN_DIAGONAL = 1e-3
MAX_CONDITION = 1e6


@dataclass(frozen=True)
class SynthConfig:
    n: int
    p: int
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be >= 1")
        if not self.sigma >= 0:
            raise ValueError("sigma must be >= 0")


@dataclass(frozen=True)
class GroundTruth:
    """Mixing matrix and source diagonals of a synthetic set."""

    a: np.ndarray
    diags: np.ndarray
    diag_redraws: int = 0
    mixing_redraws: int = 0
    generator: str = GENERATOR_NAME

    @property
    def condition_number(self):
        return float(np.linalg.cond(self.a))


def _draw_diagonals(rng, n, p):
    diags = rng.uniform(0.0, 1.0, size=(n, p))
    redraws = 0
    for i in range(n):
        while diags[i].min() < MIN_DIAGONAL:
            diags[i] = rng.uniform(0.0, 1.0, size=p)
            redraws += 1
    return diags, redraws


def _draw_mixing(rng, p):
    redraws = 0
    a = rng.standard_normal((p, p))
    while np.linalg.cond(a) > MAX_CONDITION:
        a = rng.standard_normal((p, p))
        redraws += 1
    return a, redraws


def gen_synthetic(config):
    """Generate ``C^i = A D^i A^T + sigma^2 R^i R^i^T``.

    ``D^i`` are diagonal with entries uniform in ``[0, 1]`` (rows with an
    entry below 1e-3 are redrawn), ``A`` and the ``R^i`` have standard normal
    entries (``A`` is redrawn while its condition number exceeds 1e6).
    With ``sigma = 0`` the set is exactly diagonalized by ``A^-1``.

    Returns
    -------
    cset : SymmetricMatrixSet
    truth : GroundTruth
    """
    rng = np.random.default_rng(config.seed)
    n, p = config.n, config.p
    diags, diag_redraws = _draw_diagonals(rng, n, p)
    a, mixing_redraws = _draw_mixing(rng, p)
    r = rng.standard_normal((n, p, p))
    c = (a * diags[:, None, :]) @ a.T
    c += config.sigma ** 2 * (r @ np.swapaxes(r, 1, 2))
    truth = GroundTruth(a, diags, diag_redraws, mixing_redraws)
    return SymmetricMatrixSet(c), truth


def whitener(cset):
    """Whitening matrix of the average of the set.

    With ``P diag(lam) P^T = mean_i C^i`` (eigenvalues sorted descending,
    each eigenvector signed so that its largest-magnitude entry is
    positive), returns ``B0 = diag(lam)^-1/2 P^T``.
    """
    mean = np.mean(cset.data, axis=0)
    lam, vecs = np.linalg.eigh(mean)
    if lam[0] <= 0:
        raise DomainError(
            "Mean matrix is not positive definite: eigenvalue %.6g." % lam[0])
    lam, vecs = lam[::-1], vecs[:, ::-1]
    pivot = vecs[np.argmax(np.abs(vecs), axis=0), np.arange(len(lam))]
    vecs = vecs * np.sign(pivot)
    b0 = vecs.T / np.sqrt(lam)[:, None]
    return Diagonalizer(b0, -0.5 * float(np.sum(np.log(lam))))


def covariances_from_segments(segments):
    """Build ``C^i = X_i X_i^T / T_i`` from ``p x T_i`` signal segments."""
    segments = [np.asarray(x, dtype=np.float64) for x in segments]
    if not segments:
        raise ValueError("Need at least one segment.")
    if any(x.ndim != 2 for x in segments):
        raise ValueError("Segments must be 2-D arrays of shape (p, T).")
    p = segments[0].shape[0]
    if any(x.shape[0] != p for x in segments):
        raise ValueError("All segments must have the same number of channels.")
    if any(x.shape[1] < 1 for x in segments):
        raise ValueError("Segments must contain at least one sample.")
    if any(x.shape[1] < p for x in segments):
        warnings.warn("Some segments have fewer samples than channels; their "
                      "covariance is singular.", stacklevel=2)
    return SymmetricMatrixSet(np.stack([x @ x.T / x.shape[1] for x in segments]))


def gen_segment_signals(n, p, length, seed=0, noise=0.1):
    """Mixed non-stationary sources cut into ``n`` segments of ``p x length``.

    Each source has a constant power on each segment, drawn log-uniformly;
    a small amount of white sensor noise keeps the model approximate. Used
    as a stand-in for recorded multichannel data.
    """
    rng = np.random.default_rng(seed)
    a, _ = _draw_mixing(rng, p)
    powers = np.exp(rng.uniform(-2.0, 2.0, size=(n, p)))
    segments = []
    for i in range(n):
        s = np.sqrt(powers[i])[:, None] * rng.standard_normal((p, length))
        segments.append(a @ s + noise * rng.standard_normal((p, length)))
    return segments
