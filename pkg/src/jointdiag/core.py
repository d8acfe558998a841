"""Matrix-set and diagonalizer data model, and the congruence transform."""

from dataclasses import dataclass

import numpy as np

# Relative asymmetry above which an input set is rejected instead of symmetrized.
ASYMMETRY_TOL = 1e-8


class DomainError(ValueError):
    """Raised when inputs fall outside the domain of the criterion."""


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def symmetrize(a):
    """Return ``(a + a^T) / 2`` on the last two axes (bit-exact symmetric)."""
    return 0.5 * (a + np.swapaxes(a, -1, -2))


class SymmetricMatrixSet:
    """A set of ``n`` symmetric ``p x p`` matrices stored contiguously.

    Parameters
    ----------
    data : array_like, shape (n, p, p) or (p, p)
        The matrices. Inputs whose asymmetry ``max|C - C^T|`` is at most
        ``1e-8 * max|C|`` are symmetrized, larger asymmetry is rejected.
    """

    def __init__(self, data):
        a = np.asarray(data, dtype=np.float64)
        if a.ndim == 2:
            a = a[None]
        if a.ndim != 3 or a.shape[1] != a.shape[2]:
            raise ValueError(
                "Expected an array of shape (n, p, p), got %s" % (a.shape,))
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError("Matrix set must have n >= 1 and p >= 1.")
        if not np.all(np.isfinite(a)):
            raise ValueError("Matrix set contains non-finite values.")
        scale = np.max(np.abs(a))
        asym = np.max(np.abs(a - np.swapaxes(a, 1, 2)))
        if asym > ASYMMETRY_TOL * scale:
            raise ValueError(
                "Input matrices are not symmetric (max asymmetry %.3g, "
                "scale %.3g)." % (asym, scale))
        self._data = _frozen(symmetrize(a))

    @property
    def data(self):
        return self._data

    @property
    def n(self):
        return self._data.shape[0]

    @property
    def p(self):
        return self._data.shape[1]

    def __len__(self):
        return self.n

    def __getitem__(self, i):
        return self._data[i]

    def __repr__(self):
        return "SymmetricMatrixSet(n=%d, p=%d)" % (self.n, self.p)


class Diagonalizer:
    """An invertible ``p x p`` matrix together with ``log|det|``.

    ``log_abs_det`` is usually maintained incrementally by the solver; when
    omitted it is computed from ``b``.
    """

    def __init__(self, b, log_abs_det=None):
        b = np.asarray(b, dtype=np.float64)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise ValueError("Diagonalizer must be square, got %s" % (b.shape,))
        if log_abs_det is None:
            sign, log_abs_det = np.linalg.slogdet(b)
            if sign == 0:
                log_abs_det = -np.inf
        if not np.isfinite(log_abs_det):
            raise DomainError("Diagonalizer is singular.")
        self._b = _frozen(b)
        self.log_abs_det = float(log_abs_det)

    @classmethod
    def identity(cls, p):
        return cls(np.eye(p), 0.0)

    @property
    def b(self):
        return self._b

    @property
    def p(self):
        return self._b.shape[0]

    def __repr__(self):
        return "Diagonalizer(p=%d, log_abs_det=%.6g)" % (self.p, self.log_abs_det)


class TransformedSet:
    """The working set ``D^i = B C^i B^T``; symmetric bit-exact."""

    def __init__(self, data):
        self._data = _frozen(data)

    @property
    def data(self):
        return self._data

    @property
    def n(self):
        return self._data.shape[0]

    @property
    def p(self):
        return self._data.shape[1]

    def diagonals(self):
        """Return the ``(n, p)`` array of diagonal entries ``D^i_aa``."""
        return np.diagonal(self._data, axis1=1, axis2=2).copy()

    def __repr__(self):
        return "TransformedSet(n=%d, p=%d)" % (self.n, self.p)


def congruence(data, m):
    """Return ``m @ data[i] @ m.T`` for each matrix, symmetrized."""
    return symmetrize(m @ data @ m.T)


def transform_set(cset, b):
    """Compute ``D^i = B C^i B^T`` for every matrix of the set.

    Parameters
    ----------
    cset : SymmetricMatrixSet | TransformedSet
        Matrices to transform.
    b : Diagonalizer | ndarray, shape (p, p)
        The transform.

    Returns
    -------
    dset : TransformedSet
    """
    bmat = b.b if isinstance(b, Diagonalizer) else np.asarray(b, dtype=np.float64)
    if bmat.ndim != 2 or bmat.shape != (cset.p, cset.p):
        raise ValueError(
            "Dimension mismatch: set has p=%d, transform has shape %s"
            % (cset.p, bmat.shape))
    return TransformedSet(congruence(cset.data, bmat))


@dataclass(frozen=True)
class SPDReport:
    """Per-matrix outcome of a Cholesky factorization attempt."""

    positive_definite: tuple

    @property
    def all_positive_definite(self):
        return all(self.positive_definite)

    @property
    def failed(self):
        return [i for i, ok in enumerate(self.positive_definite) if not ok]

    def __bool__(self):
        return self.all_positive_definite


def validate_spd(cset):
    """Check that every matrix of the set is positive definite."""
    flags = []
    for c in cset.data:
        try:
            np.linalg.cholesky(c)
            flags.append(True)
        except np.linalg.LinAlgError:
            flags.append(False)
    return SPDReport(tuple(flags))
