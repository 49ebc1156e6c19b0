import numpy as np
import pytest

from sslq import problem as pr
from sslq.pencil import shift_block_matrix
from sslq.reduction import assemble
from sslq.system import SingularSystem


@pytest.fixture(scope="session")
def ex61():
    return pr.load_bundled("ex61")


@pytest.fixture(scope="session")
def ex62():
    return pr.load_bundled("ex62")


@pytest.fixture(scope="session")
def red61(ex61):
    c = ex61.certificate
    return assemble(ex61.system, c.K, c.M1, c.N1, c.block_sizes, ex61.weights)


@pytest.fixture(scope="session")
def red62(ex62):
    c = ex62.certificate
    return assemble(ex62.system, c.K, c.M1, c.N1, c.block_sizes, ex62.weights)


def random_unimodular(rng, n, steps=None):
    """Integer matrix with determinant +-1 (product of elementary operations)."""
    U = np.eye(n)
    for _ in range(steps or 3 * n):
        i, j = rng.choice(n, 2, replace=False) if n > 1 else (0, 0)
        if i != j:
            U[i] += rng.integers(-2, 3) * U[j]
    return U[rng.permutation(n)]


def canonical_pencil(rng, h, blocks, lo=-3, hi=4):
    """``(diag(I_h, G), diag(A1, I))`` with integer ``A1``."""
    q = sum(blocks)
    E = np.zeros((h + q, h + q))
    E[:h, :h] = np.eye(h)
    E[h:, h:] = shift_block_matrix(blocks)
    A = np.eye(h + q)
    A[:h, :h] = rng.integers(lo, hi, (h, h))
    return E, A


def random_blocks(rng, q):
    blocks = []
    while q:
        m = int(rng.integers(1, q + 1))
        blocks.append(m)
        q -= m
    return tuple(sorted(blocks, reverse=True))


def make_system(E, A, B, C=None, D=None, x0=None):
    n = E.shape[0]
    B = np.atleast_2d(B)
    C = np.zeros((n, n)) if C is None else C
    D = np.zeros_like(B, dtype=float) if D is None else D
    x0 = np.zeros(n) if x0 is None else x0
    return SingularSystem(E, A, B, C, D, x0)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[num])
