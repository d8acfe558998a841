import numpy as np
import pytest

from jointdiag import SymmetricMatrixSet


def random_spd_set(rng, n, p, ridge=1.0):
    a = rng.standard_normal((n, p, p))
    return SymmetricMatrixSet(a @ np.swapaxes(a, 1, 2) / p + ridge * np.eye(p))


def random_invertible(rng, p, scale=0.3):
    return np.eye(p) + scale * rng.standard_normal((p, p))


def naive_loss(cset, b):
    """Criterion straight from its definition, via slogdet."""
    d = b @ np.asarray(getattr(cset, "data", cset)) @ b.T
    diag = np.diagonal(d, axis1=1, axis2=2)
    _, logdet = np.linalg.slogdet(d)
    return float(np.mean(np.sum(np.log(diag), axis=1) - logdet) / 2)


def unit(p, a, b):
    e = np.zeros((p, p))
    e[a, b] = 1.0
    return e


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = {}


@pytest.fixture
def criterion_report():
    """Record one pass/fail line per acceptance criterion."""

    def report(number, title, ok, detail=""):
        _ACCEPTANCE[number] = (title, bool(ok), detail)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok, detail = _ACCEPTANCE[number]
        terminalreporter.write_line("[%s] AC%-2d %s  %s" % (
            "PASS" if ok else "FAIL", number, title, detail))
