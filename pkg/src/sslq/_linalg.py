"""Small linear-algebra layer with a float (SVD) and an exact (rational) backend.

Every rank, kernel and zero decision in the package goes through this module,
so the canonical-form code can run unchanged on ``float64`` arrays or on
``object`` arrays of :class:`fractions.Fraction`.
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.linalg as spla


@dataclass
class Config:
    """Global tolerance knobs.

    tol_rank
        Singular values below ``tol_rank * sigma_max`` count as zero.
    tol_block
        Block zero-tests use ``tol_block * scale``.
    exact
        Default backend for rank/determinant decisions.
    """

    tol_rank: float = 1e-9
    tol_block: float = 1e-8
    exact: bool = False


config = Config()


def _tol_rank(tol):
    return config.tol_rank if tol is None else tol


def _tol_block(tol):
    return config.tol_block if tol is None else tol


def is_exact(a):
    return isinstance(a, np.ndarray) and a.dtype == object


def to_exact(a):
    """Convert to an object array of Fractions (binary floats convert exactly)."""
    a = np.asarray(a)
    out = np.empty(a.shape, dtype=object)
    for idx, v in np.ndenumerate(a):
        out[idx] = v if isinstance(v, Fraction) else Fraction(v)
    return out


def to_float(a):
    return np.asarray(a, dtype=float)


def convert(a, exact):
    return to_exact(a) if exact else to_float(a)


def eye(n, exact=False):
    e = np.eye(n)
    return to_exact(e) if exact else e


def zeros(shape, exact=False):
    z = np.zeros(shape)
    return to_exact(z) if exact else z


def block_diag(*blocks):
    exact = any(is_exact(b) for b in blocks)
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = zeros((rows, cols), exact)
    i = j = 0
    for b in blocks:
        out[i:i + b.shape[0], j:j + b.shape[1]] = b
        i += b.shape[0]
        j += b.shape[1]
    return out


# -- exact kernels -----------------------------------------------------------

def rref(a):
    """Reduced row echelon form of an exact matrix. Returns (R, pivot_columns)."""
    R = to_exact(a).copy()
    m, n = R.shape
    pivots = []
    row = 0
    for col in range(n):
        if row >= m:
            break
        nz = [i for i in range(row, m) if R[i, col] != 0]
        if not nz:
            continue
        p = nz[0]
        if p != row:
            R[[row, p]] = R[[p, row]]
        piv = R[row, col]
        R[row] = R[row] / piv
        for i in range(m):
            if i != row and R[i, col] != 0:
                R[i] = R[i] - R[i, col] * R[row]
        pivots.append(col)
        row += 1
    return R, pivots


def _exact_det(a):
    A = to_exact(a).copy()
    n = A.shape[0]
    det = Fraction(1)
    for col in range(n):
        nz = [i for i in range(col, n) if A[i, col] != 0]
        if not nz:
            return Fraction(0)
        p = nz[0]
        if p != col:
            A[[col, p]] = A[[p, col]]
            det = -det
        det *= A[col, col]
        for i in range(col + 1, n):
            if A[i, col] != 0:
                A[i] = A[i] - (A[i, col] / A[col, col]) * A[col]
    return det


# -- backend-dispatching helpers ----------------------------------------------

def _threshold(s, tol, scale):
    ref = s[0] if scale is None else scale
    return _tol_rank(tol) * ref


def rank(a, tol=None, scale=None):
    """Numerical rank.  ``scale`` replaces ``sigma_max`` as the reference size."""
    a = np.asarray(a)
    if a.size == 0:
        return 0
    if is_exact(a):
        return len(rref(a)[1])
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > _threshold(s, tol, scale)))


def null_space(a, tol=None, scale=None):
    """Basis (as columns) of the right kernel of ``a``."""
    a = np.asarray(a)
    m, n = a.shape
    if is_exact(a):
        if m == 0:
            return eye(n, True)
        R, piv = rref(a)
        free = [j for j in range(n) if j not in piv]
        basis = zeros((n, len(free)), True)
        for k, f in enumerate(free):
            basis[f, k] = Fraction(1)
            for i, p in enumerate(piv):
                basis[p, k] = -R[i, f]
        return basis
    if m == 0 or not np.any(a):
        return np.eye(n, dtype=a.dtype if np.iscomplexobj(a) else float)
    _, s, vh = np.linalg.svd(a)
    r = int(np.sum(s > _threshold(s, tol, scale)))
    return vh[r:].conj().T


def col_space(a, tol=None):
    """Basis (as columns) of the range of ``a``."""
    a = np.asarray(a)
    if a.shape[1] == 0:
        return zeros((a.shape[0], 0), is_exact(a))
    if is_exact(a):
        R, piv = rref(a.T)
        return R[:len(piv)].T.copy()
    if not np.any(a):
        return np.zeros((a.shape[0], 0))
    return spla.orth(a, rcond=_tol_rank(tol))


def inv(a):
    a = np.asarray(a)
    n = a.shape[0]
    if is_exact(a):
        aug = np.hstack([a, eye(n, True)])
        R, piv = rref(aug)
        if piv[:n] != list(range(n)):
            raise np.linalg.LinAlgError("singular matrix")
        return R[:, n:].copy()
    return np.linalg.inv(a)


def solve(a, b):
    if is_exact(a) or is_exact(b):
        return inv(to_exact(a)) @ to_exact(b)
    return np.linalg.solve(a, b)


def det(a):
    a = np.asarray(a)
    if a.shape[0] == 0:
        return Fraction(1) if is_exact(a) else 1.0
    if is_exact(a):
        return _exact_det(a)
    return float(np.linalg.det(a))


def is_singular(a, tol=None):
    a = np.asarray(a)
    if a.shape[0] == 0:
        return False
    if is_exact(a):
        return _exact_det(a) == 0
    s = np.linalg.svd(a, compute_uv=False)
    return s[0] == 0 or s[-1] <= _tol_rank(tol) * s[0]


def norm(a):
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(to_float(a) if is_exact(a) else a))


def is_zero(a, scale=1.0, tol=None):
    """Zero test: exact equality for rationals, ``max|a| <= tol*max(scale, 1)`` for floats."""
    a = np.asarray(a)
    if a.size == 0:
        return True
    if is_exact(a):
        return all(v == 0 for v in a.flat)
    return bool(np.max(np.abs(a)) <= _tol_block(tol) * max(scale, 1.0))


def cond(a):
    a = to_float(a)
    if a.size == 0:
        return 1.0
    return float(np.linalg.cond(a))


def matrix_power(a, k):
    out = eye(a.shape[0], is_exact(a))
    for _ in range(k):
        out = out @ a
    return out
