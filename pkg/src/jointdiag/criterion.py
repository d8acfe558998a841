"""Joint-diagonality criterion, relative derivatives and the sparse Hessian.

All functions take the working set ``D^i = B C^i B^T`` (a
:class:`~jointdiag.core.TransformedSet` or a raw ``(n, p, p)`` array).
The criterion is

    L(B) = 1/(2n) sum_i [log det diag(D^i) - log det D^i]

and the relative derivatives are taken with respect to ``E`` in the update
``B <- (I + E) B``.
"""

from dataclasses import dataclass

import numpy as np

from .core import DomainError, transform_set

INFINITE_LOSS = np.inf

# Blocks with Gamma_ab * Gamma_ba - 1 below this are solved as the identity.
DEGENERATE_BLOCK_EPS = 1e-9


def _as_array(dset):
    return np.asarray(getattr(dset, "data", dset))


def _positive_diagonals(d):
    diag = np.diagonal(d, axis1=1, axis2=2)
    if not np.all(diag > 0):
        raise DomainError(
            "Criterion evaluated outside domain: non-positive diagonal entry.")
    return diag


def loss(dset):
    """Evaluate the criterion on a transformed set by Cholesky factorization.

    Each matrix is first normalized to unit diagonal, ``R = S^-1/2 D S^-1/2``
    with ``S = diag(D)``, so that its term is ``-log det R / 2``. With
    ``R = L L^T`` and ``L_aa^2 = 1 - s_a``, ``s_a = sum_{k<a} L_ak^2``, the
    log-determinant is accumulated as ``sum_a log1p(-s_a)``, which keeps full
    relative accuracy when the set is nearly diagonal.

    Returns
    -------
    value : float
        The criterion, or ``INFINITE_LOSS`` when a diagonal entry is not
        positive or a factorization fails.
    """
    d = _as_array(dset)
    n = d.shape[0]
    diag = np.diagonal(d, axis1=1, axis2=2)
    if not (np.all(diag > 0) and np.all(np.isfinite(d))):
        return INFINITE_LOSS
    scale = 1.0 / np.sqrt(diag)
    r = d * (scale[:, :, None] * scale[:, None, :])
    try:
        chol = np.linalg.cholesky(r)
    except np.linalg.LinAlgError:
        return INFINITE_LOSS
    # Strictly lower part only: 1 - L_aa^2 would lose the small s_a.
    idx = np.arange(d.shape[1])
    chol[:, idx, idx] = 0.0
    s = np.einsum("iab,iab->ia", chol, chol)
    if not np.all(s < 1):
        return INFINITE_LOSS
    return float(0.5 * np.sum(-np.log1p(-s)) / n)


def loss_incremental(diagonals, log_abs_det_b, sum_logdet_c):
    """Evaluate the criterion from the diagonals of the working set only.

    Uses ``log det(B C^i B^T) = log det C^i + 2 log|det B|``.

    Parameters
    ----------
    diagonals : ndarray, shape (n, p)
        Diagonal entries ``D^i_aa``.
    log_abs_det_b : float
        ``log|det B|``.
    sum_logdet_c : float
        ``sum_i log det C^i``, precomputed once per input set.
    """
    diagonals = np.asarray(diagonals)
    n = diagonals.shape[0]
    if not np.all(diagonals > 0) or not np.isfinite(log_abs_det_b):
        return INFINITE_LOSS
    return float(
        (np.sum(np.log(diagonals)) - sum_logdet_c) / (2 * n) - log_abs_det_b)


def sum_logdet(cset):
    """Return ``sum_i log det C^i`` (``-inf`` if some matrix is not PD)."""
    sign, logdet = np.linalg.slogdet(_as_array(cset))
    if np.any(sign <= 0):
        return -np.inf
    return float(np.sum(logdet))


def loss_at(cset, b):
    """Evaluate the criterion at ``B`` on the original set."""
    return loss(transform_set(cset, b))


def loss_change(dset, x, alphas, xd=None, eigenvalues=None):
    """Change of the criterion along ``B <- (I - alpha X) B``.

    Computes ``L((I - alpha X) B) - L(B)`` for every ``alpha`` without
    re-factorizing the set::

        1/(2n) sum_ia log(D'_aa / D_aa) - log|det(I - alpha X)|

    where ``D'_aa = D_aa - 2 alpha (XD)_aa + alpha^2 (X D X^T)_aa`` and the
    determinant is expanded over the eigenvalues of ``X``. Both terms are
    accumulated with ``log1p``, so the error scales with ``alpha |X|`` and
    not with the magnitude of the loss; this lets strict decrease be
    detected down to very small gradients.

    Parameters
    ----------
    dset : TransformedSet | ndarray, shape (n, p, p)
        Working set at ``B``.
    x : ndarray, shape (p, p)
        Direction.
    alphas : array_like
        Step sizes.
    xd : ndarray, shape (n, p, p), optional
        Precomputed ``X @ D^i``.
    eigenvalues : ndarray, shape (p,), optional
        Precomputed eigenvalues of ``X``.

    Returns
    -------
    delta : ndarray
        One value per step size, ``+inf`` when the step leaves the domain.
    """
    d = _as_array(dset)
    n = d.shape[0]
    alphas = np.atleast_1d(np.asarray(alphas, dtype=np.float64))
    if xd is None:
        xd = x @ d
    diag = np.diagonal(d, axis1=1, axis2=2)
    lin = np.diagonal(xd, axis1=1, axis2=2) / diag
    quad = np.sum(xd * x, axis=2) / diag
    a = alphas[:, None, None]
    z_diag = -2 * a * lin + a ** 2 * quad
    lam = np.linalg.eigvals(x) if eigenvalues is None else eigenvalues
    a = alphas[:, None]
    z_det = -2 * a * lam.real + a ** 2 * np.abs(lam) ** 2
    out = np.full(alphas.shape, INFINITE_LOSS)
    ok = (np.all(z_diag > -1, axis=(1, 2)) & np.all(z_det > -1, axis=1)
          & np.all(np.isfinite(z_diag), axis=(1, 2)))
    out[ok] = (np.sum(np.log1p(z_diag[ok]), axis=(1, 2)) / (2 * n)
               - 0.5 * np.sum(np.log1p(z_det[ok]), axis=1))
    return out


def log_abs_det_update(x, alpha, eigenvalues=None):
    """``log|det(I - alpha X)|`` accumulated from the eigenvalues of ``X``."""
    lam = np.linalg.eigvals(x) if eigenvalues is None else eigenvalues
    z = -2 * alpha * lam.real + alpha ** 2 * np.abs(lam) ** 2
    if np.any(z <= -1):
        return -np.inf
    return float(0.5 * np.sum(np.log1p(z)))


def relative_gradient(dset):
    """Relative gradient ``G_ab = mean_i D^i_ab / D^i_aa - delta_ab``.

    The diagonal is exactly zero.
    """
    d = _as_array(dset)
    diag = _positive_diagonals(d)
    g = np.mean(d / diag[:, :, None], axis=0)
    np.fill_diagonal(g, 0.0)
    return g


def full_hessian(dset):
    """Dense relative Hessian tensor ``H[a, b, c, d]``.

    Only meant for small ``p``: the tensor has ``p**4`` entries.
    """
    d = _as_array(dset)
    n, p, _ = d.shape
    diag = _positive_diagonals(d)
    # block[a, b, d] = mean_i D_bd / D_aa - 2 D_ab D_ad / D_aa^2
    inv = 1.0 / diag
    block = (np.einsum("ia,ibd->abd", inv, d)
             - 2 * np.einsum("ia,iab,iad->abd", inv ** 2, d, d)) / n
    eye = np.eye(p)
    h = np.einsum("ac,abd->abcd", eye, block)
    h += np.einsum("ad,bc->abcd", eye, eye)
    # H_aaaa vanishes analytically; pin it against rounding.
    idx = np.arange(p)
    h[idx, idx, idx, idx] = 0.0
    return h


@dataclass(frozen=True)
class GammaMatrix:
    """``gamma[a, b] = mean_i D^i_bb / D^i_aa`` and the diagonals it came from."""

    gamma: np.ndarray
    diagonals: np.ndarray

    @property
    def p(self):
        return self.gamma.shape[0]


def gamma(dset):
    """Compute the matrix of averaged diagonal ratios of the working set."""
    d = _as_array(dset)
    diag = _positive_diagonals(d).copy()
    n = diag.shape[0]
    gam = (1.0 / diag).T @ diag / n
    np.fill_diagonal(gam, 1.0)
    return GammaMatrix(gam, diag)


def _gamma_array(gam):
    return gam.gamma if isinstance(gam, GammaMatrix) else np.asarray(gam)


def approx_hessian_apply(gam, m):
    """Apply the sparse Hessian approximation to a ``p x p`` matrix.

    Each pair ``(M_ab, M_ba)`` is multiplied by the block
    ``[[gamma_ab, 1], [1, gamma_ba]]``; diagonal entries map to zero.
    """
    g = _gamma_array(gam)
    m = np.asarray(m, dtype=np.float64)
    if m.shape != g.shape:
        raise ValueError("Dimension mismatch: %s vs %s" % (m.shape, g.shape))
    out = g * m + m.T
    idx = np.arange(m.shape[0])
    out[idx, idx] -= 2 * m[idx, idx]
    return out


def approx_hessian_dense(gam):
    """Dense ``(p, p, p, p)`` tensor of the sparse Hessian approximation."""
    g = _gamma_array(gam)
    p = g.shape[0]
    eye = np.eye(p)
    h = np.einsum("ac,bd,ab->abcd", eye, eye, g)
    h += np.einsum("ad,bc->abcd", eye, eye)
    idx = np.arange(p)
    h[idx, idx, idx, idx] -= 2
    return h


def degenerate_blocks(gam, eps=DEGENERATE_BLOCK_EPS):
    """Boolean ``(p, p)`` mask of off-diagonal pairs whose block is singular."""
    g = _gamma_array(gam)
    mask = g * g.T - 1 < eps
    np.fill_diagonal(mask, False)
    return mask


def approx_hessian_solve(gam, g, eps=DEGENERATE_BLOCK_EPS):
    """Pseudo-inverse of the sparse Hessian applied to a gradient.

    For ``a != b`` returns
    ``X_ab = (gamma_ba G_ab - G_ba) / (gamma_ab gamma_ba - 1)`` and
    ``X_aa = 0``. Pairs whose determinant ``gamma_ab gamma_ba - 1`` is below
    ``eps`` fall back to ``X_ab = G_ab`` so the result stays a descent
    direction.

    Parameters
    ----------
    gam : GammaMatrix | ndarray, shape (p, p)
    g : ndarray, shape (p, p)
        Relative gradient; its diagonal is ignored.
    eps : float
        Degenerate-block threshold.

    Returns
    -------
    x : ndarray, shape (p, p)
    """
    gm = _gamma_array(gam)
    g = np.asarray(g, dtype=np.float64)
    if g.shape != gm.shape:
        raise ValueError("Dimension mismatch: %s vs %s" % (g.shape, gm.shape))
    det = gm * gm.T - 1
    degenerate = det < eps
    with np.errstate(divide="ignore", invalid="ignore"):
        x = (gm.T * g - g.T) / det
    x = np.where(degenerate, g, x)
    np.fill_diagonal(x, 0.0)
    return x
