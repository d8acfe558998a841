"""Relative quasi-Newton joint diagonalization and a gradient-descent baseline."""

import time
from dataclasses import dataclass, field

import numpy as np

from . import criterion
from .core import Diagonalizer, DomainError, transform_set, validate_spd

QUASI_NEWTON = "quasi_newton"
GRADIENT_DESCENT = "gradient_descent"
METHODS = (QUASI_NEWTON, GRADIENT_DESCENT)

CONVERGED = "converged"
MAX_ITER_REACHED = "max_iter_reached"
LINE_SEARCH_FAILED = "line_search_failed"

# Iterations between full recomputations of the working set from B.
REFRESH_EVERY = 50


@dataclass(frozen=True)
class SolverConfig:
    max_iter: int = 1000
    grad_tol: float = 1e-10
    max_halvings: int = 30
    method: str = QUASI_NEWTON
    record_trace: bool = True

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be > 0")
        if self.max_halvings < 1:
            raise ValueError("max_halvings must be >= 1")
        if self.method not in METHODS:
            raise ValueError("method must be one of %s" % (METHODS,))


@dataclass(frozen=True)
class TraceRecord:
    """State after ``iteration`` accepted steps.

    ``step_size``, ``halvings`` and ``loss_change`` describe the step that
    produced this iterate and are 0 for the initial point. ``loss_change``
    is evaluated along the step, so it stays strictly negative even when the
    decrease is below the resolution of ``loss``.
    """

    iteration: int
    loss: float
    grad_norm: float
    step_size: float
    halvings: int
    wall_time: float
    loss_change: float = 0.0


@dataclass
class SolverTrace:
    records: list = field(default_factory=list)
    status: str = ""
    init_time: float = 0.0

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    @property
    def losses(self):
        return self.column("loss")

    @property
    def grad_norms(self):
        return self.column("grad_norm")

    @property
    def n_iter(self):
        return self.records[-1].iteration if self.records else 0


@dataclass
class SolveResult:
    b: Diagonalizer
    trace: SolverTrace
    degenerate_blocks: int = 0
    factorizations: int = 0

    @property
    def status(self):
        return self.trace.status

    @property
    def loss(self):
        return self.trace.records[-1].loss

    @property
    def grad_norm(self):
        return self.trace.records[-1].grad_norm

    @property
    def n_iter(self):
        return self.trace.n_iter


@dataclass(frozen=True)
class LineSearchResult:
    success: bool
    step_size: float = 0.0
    halvings: int = 0
    loss_change: float = criterion.INFINITE_LOSS
    update: np.ndarray = None
    xd: np.ndarray = None
    eigenvalues: np.ndarray = None


def backtracking_search(dset, direction, current_loss=None, max_halvings=30):
    """Find the largest ``alpha = 2^-k`` that strictly decreases the loss.

    Candidates are ``(I - alpha X) B`` for ``alpha`` in
    ``1, 1/2, ..., 2^(1 - max_halvings)``. Out-of-domain candidates have
    infinite loss and are simply rejected. The decrease is measured with
    :func:`~jointdiag.criterion.loss_change`, so ``current_loss`` is only
    checked for finiteness.

    Parameters
    ----------
    dset : TransformedSet | ndarray, shape (n, p, p)
        Working set at the current ``B``.
    direction : ndarray, shape (p, p)
        The matrix ``X``.
    current_loss : float, optional
        Criterion at the current ``B``.
    max_halvings : int
        Number of candidate step sizes.

    Returns
    -------
    result : LineSearchResult
        On success, holds the accepted step, its loss change and the update
        matrix ``I - alpha X``.
    """
    if current_loss is not None and not np.isfinite(current_loss):
        raise ValueError("current_loss must be finite")
    d = np.asarray(getattr(dset, "data", dset))
    xd = direction @ d
    lam = np.linalg.eigvals(direction)
    alphas = 0.5 ** np.arange(max_halvings)
    # The full step is accepted most of the time; try it alone first.
    delta = criterion.loss_change(d, direction, alphas[:1], xd=xd,
                                  eigenvalues=lam)
    if not delta[0] < 0 and max_halvings > 1:
        delta = np.concatenate([delta, criterion.loss_change(
            d, direction, alphas[1:], xd=xd, eigenvalues=lam)])
    hits = np.flatnonzero(delta < 0)
    if hits.size == 0:
        return LineSearchResult(False)
    k = int(hits[0])
    alpha = float(alphas[k])
    update = np.eye(d.shape[1]) - alpha * direction
    return LineSearchResult(True, alpha, k, float(delta[k]), update, xd, lam)


def _apply_step(d, xd, x, alpha):
    # (I - aX) D (I - aX)^T = D - a (XD + (XD)^T) + a^2 (XD) X^T, built from
    # bitwise-symmetric terms so the result is exactly symmetric.
    xdx = xd @ x.T
    xdx += np.swapaxes(xdx, 1, 2).copy()
    xdx *= 0.5 * alpha ** 2
    lin = xd + np.swapaxes(xd, 1, 2)
    lin *= alpha
    out = d - lin
    out += xdx
    return out


class _CompensatedSum:
    """Running float sum with a compensation term (Neumaier)."""

    def __init__(self, value):
        self.hi = float(value)
        self.lo = 0.0

    def add(self, v):
        s = self.hi + v
        if abs(self.hi) >= abs(v):
            self.lo += (self.hi - s) + v
        else:
            self.lo += (v - s) + self.hi
        self.hi = s

    @property
    def value(self):
        return self.hi + self.lo


def _direction(d, g, method):
    if method == QUASI_NEWTON:
        gam = criterion.gamma(d)
        return (criterion.approx_hessian_solve(gam, g),
                int(np.count_nonzero(criterion.degenerate_blocks(gam))) // 2)
    x = g.copy()
    np.fill_diagonal(x, 0.0)
    return x, 0


def solve(cset, b0=None, config=None):
    """Minimize the joint-diagonality criterion by relative updates.

    Each iteration computes the relative gradient ``G`` and a direction
    ``X`` (the sparse-Hessian pseudo-inverse applied to ``G`` for
    ``quasi_newton``, ``G`` itself for ``gradient_descent``), then sets
    ``B <- (I - alpha X) B`` with ``alpha`` found by backtracking.

    Parameters
    ----------
    cset : SymmetricMatrixSet
        Positive definite matrices to diagonalize.
    b0 : Diagonalizer | ndarray | None
        Initial point, identity when None.
    config : SolverConfig | None

    Returns
    -------
    result : SolveResult
    """
    if config is None:
        config = SolverConfig()
    report = validate_spd(cset)
    if not report.all_positive_definite:
        raise DomainError(
            "Matrices %s are not positive definite." % report.failed)
    if b0 is None:
        b0 = Diagonalizer.identity(cset.p)
    elif not isinstance(b0, Diagonalizer):
        b0 = Diagonalizer(b0)
    if b0.p != cset.p:
        raise ValueError("Dimension mismatch: set has p=%d, b0 has p=%d"
                         % (cset.p, b0.p))

    t_start = time.perf_counter()
    b = b0.b.copy()
    log_abs_det = _CompensatedSum(b0.log_abs_det)
    d = transform_set(cset, b).data
    current_loss = criterion.loss(d)
    factorizations = cset.n
    if not np.isfinite(current_loss):
        raise DomainError("Initial point is outside the domain.")
    trace = SolverTrace(init_time=time.perf_counter() - t_start)

    t0 = time.perf_counter()
    step, halvings, change = 0.0, 0, 0.0
    n_degenerate = 0
    it = 0
    while True:
        g = criterion.relative_gradient(d)
        grad_norm = float(np.linalg.norm(g))
        record = TraceRecord(it, current_loss, grad_norm, step, halvings,
                             time.perf_counter() - t0, change)
        if config.record_trace or it == 0:
            trace.records.append(record)
        if grad_norm < config.grad_tol:
            status = CONVERGED
            break
        if it >= config.max_iter:
            status = MAX_ITER_REACHED
            break
        x, deg = _direction(d, g, config.method)
        n_degenerate += deg
        ls = backtracking_search(d, x, current_loss, config.max_halvings)
        if not ls.success:
            status = LINE_SEARCH_FAILED
            break
        it += 1
        step, halvings, change = ls.step_size, ls.halvings, ls.loss_change
        b = ls.update @ b
        log_abs_det.add(criterion.log_abs_det_update(x, step, ls.eigenvalues))
        if it % REFRESH_EVERY == 0:
            d = transform_set(cset, b).data
        else:
            d = _apply_step(d, ls.xd, x, step)
        # Prefer the direct value; fall back on the accepted increment when
        # the decrease is below the rounding of the direct evaluation.
        direct = criterion.loss(d)
        factorizations += cset.n
        if direct < current_loss:
            current_loss = direct
        else:
            current_loss = max(current_loss + ls.loss_change, 0.0)

    if trace.records[-1] is not record:
        trace.records.append(record)
    trace.status = status
    return SolveResult(Diagonalizer(b, log_abs_det.value), trace, n_degenerate,
                       factorizations)


@dataclass(frozen=True)
class RateReport:
    conclusive: bool
    order: float = float("nan")
    constant: float = float("nan")
    quadratic: bool = False
    n_pairs: int = 0


def quadratic_rate_check(trace, threshold=1e-3, min_pairs=2):
    """Estimate the local convergence order from gradient norms.

    Uses consecutive pairs ``(g_t, g_{t+1})`` with ``g_t < threshold`` and
    fits the slope of ``log g_{t+1}`` against ``log g_t``. ``constant`` is
    ``max g_{t+1} / g_t^2`` over those pairs and ``quadratic`` tells whether
    the fitted order is at least 1.5.
    """
    g = trace.grad_norms if isinstance(trace, SolverTrace) else np.asarray(trace)
    pairs = [(a, b) for a, b in zip(g[:-1], g[1:])
             if 0 < a < threshold and b > 0]
    if len(pairs) < min_pairs:
        return RateReport(False, n_pairs=len(pairs))
    x, y = np.log(np.array(pairs)).T
    if np.ptp(x) == 0 or not np.any(y < x):
        return RateReport(False, n_pairs=len(pairs))
    order = float(np.polyfit(x, y, 1)[0])
    a, b = np.array(pairs).T
    constant = float(np.max(b / a ** 2))
    return RateReport(True, order, constant, order >= 1.5, len(pairs))
