"""Matrix pencils ``A + lambda*E``: regularity, Weierstrass form, Kronecker indices.

All rank and kernel decisions go through :mod:`sslq._linalg`, so every routine
here accepts either float arrays or exact ``Fraction`` object arrays.  Passing
``exact=True`` converts float input to rationals first (binary floats are
converted without rounding).
"""

import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import _linalg as la
from .errors import DimensionError, IllConditioned, NotRegular

COND_CAP = 1e12


@dataclass(frozen=True)
class Pencil:
    """The pencil ``A + lambda*E`` with square ``E`` and ``A``."""

    E: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        E, A = np.asarray(self.E), np.asarray(self.A)
        if E.ndim != 2 or E.shape != A.shape or E.shape[0] != E.shape[1]:
            raise DimensionError(f"E {E.shape} and A {A.shape} must be equal square shapes")
        if not la.is_exact(E) and not (np.all(np.isfinite(E)) and np.all(np.isfinite(A))):
            raise DimensionError("pencil entries must be finite")
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "A", A)

    @property
    def n(self):
        return self.E.shape[0]

    def as_exact(self):
        return Pencil(la.to_exact(self.E), la.to_exact(self.A))

    def at(self, lam):
        return self.A + lam * self.E


@dataclass
class RegularityVerdict:
    regular: bool
    witness: object = None
    det_at_witness: object = None
    det_coefficients: list = field(default_factory=list)

    @property
    def status(self):
        return "regular" if self.regular else "not_regular"


@dataclass
class WeierstrassForm:
    M: np.ndarray
    N: np.ndarray
    h: int
    A1: np.ndarray
    G: np.ndarray
    block_sizes: tuple
    nilpotent_index: int
    cond_M: float
    cond_N: float
    lambda0: object

    @property
    def n(self):
        return self.M.shape[0]


@dataclass
class KroneckerStructure:
    zero_block: tuple
    left_indices: tuple
    right_indices: tuple
    nilpotent_sizes: tuple
    finite_block_order: int
    condition: float = 1.0

    @property
    def is_regular(self):
        return self.zero_block == (0, 0) and not self.left_indices and not self.right_indices


def _prepare(p, exact):
    if exact and not la.is_exact(p.E):
        return p.as_exact()
    return p


def sample_points(n):
    """Deterministic candidate lambdas: 0, 1, -1, 2, -2, ... then seeded reals (2n+1 total)."""
    pts = [0]
    k = 1
    while len(pts) < n + 1:
        pts += [k, -k]
        k += 1
    pts = pts[: n + 1]
    rng = np.random.default_rng(20240611)
    pts += list(rng.uniform(-3.0, 3.0, size=n))
    return pts


def _interpolate_coefficients(xs, ys, exact):
    n = len(xs)
    if exact:
        V = la.to_exact([[Fraction(x) ** k for k in range(n)] for x in xs])
        return list(la.solve(V, la.to_exact(np.array(ys, dtype=object).reshape(-1, 1))).ravel())
    V = np.vander(np.asarray(xs, dtype=float), n, increasing=True)
    return list(np.linalg.solve(V, np.asarray(ys, dtype=float)))


def is_regular(p: Pencil, exact=None, tol=None) -> RegularityVerdict:
    """Decide whether ``det(A + lambda*E)`` is not the zero polynomial.

    The determinant has degree at most ``n``, so it vanishes identically
    iff it vanishes at ``n + 1`` distinct points.  The interpolated
    coefficients are returned as the certificate either way.
    """
    exact = la.config.exact if exact is None else exact
    p = _prepare(p, exact)
    n = p.n
    if n == 0:
        return RegularityVerdict(True, 0, 1.0, [1.0])
    pts = sample_points(n)
    xs = pts[: n + 1]
    if exact:
        xs = [Fraction(x) for x in xs]
    dets = [la.det(p.at(x)) for x in xs]
    coeffs = _interpolate_coefficients(xs, dets, exact)
    for lam in pts:
        lam = Fraction(lam) if exact else lam
        if not la.is_singular(p.at(lam), tol):
            return RegularityVerdict(True, lam, la.det(p.at(lam)), coeffs)
    return RegularityVerdict(False, None, None, coeffs)


def shift_block_matrix(block_sizes, exact=False):
    """Block-diagonal nilpotent with ones on the superdiagonal of each block."""
    q = int(sum(block_sizes))
    G = la.zeros((q, q), exact)
    off = 0
    for m in block_sizes:
        for i in range(m - 1):
            G[off + i, off + i + 1] = Fraction(1) if exact else 1.0
        off += m
    return G


def _choose_lambda0(p, tol):
    best, best_rc = None, -1.0
    for lam in sample_points(p.n):
        if la.is_exact(p.E):
            lam = Fraction(lam)
        F = p.at(lam)
        if la.is_singular(F, tol):
            continue
        rc = 1.0 / la.cond(F)
        if rc > 1e-6:
            return lam
        if rc > best_rc:
            best, best_rc = lam, rc
    return best


def kernel_chain(W, tol=None):
    """Bases of ``ker W^j`` for ``j = 0, 1, ...`` until the chain stabilizes.

    Float input grows the chain one preimage at a time with orthonormal
    bases (``ker W^(j+1) = {x : W x in ker W^j}``), so every rank decision
    is made on a matrix of size ``||W||`` rather than on a power of ``W``.
    """
    exact = la.is_exact(W)
    q = W.shape[0]
    kernels = [la.zeros((q, 0), exact)]
    if exact:
        P = la.eye(q, True)
        while True:
            P = P @ W
            K = la.null_space(P)
            if K.shape[1] == kernels[-1].shape[1]:
                return kernels
            kernels.append(K)
    scale = max(la.norm(W), 1.0)
    while True:
        Qk = kernels[-1]
        proj = W - Qk @ (Qk.T @ W)
        K = la.null_space(proj, tol, scale)
        if K.shape[1] == Qk.shape[1]:
            return kernels
        kernels.append(K)


def range_limit(W, tol=None):
    """Basis of ``range W^k`` for ``k`` large (the image chain's limit)."""
    exact = la.is_exact(W)
    q = W.shape[0]
    R = la.eye(q, exact)
    scale = max(la.norm(W), 1.0)
    while True:
        WR = W @ R
        nxt = la.col_space(WR) if exact else _orth(WR, tol, scale)
        if nxt.shape[1] == R.shape[1]:
            return nxt
        R = nxt


def _orth(a, tol, scale):
    if a.shape[1] == 0:
        return a
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    thr = (la.config.tol_rank if tol is None else tol) * scale
    r = int(np.sum(s > thr))
    return u[:, :r]


def _jordan_chains(Nf, tol=None):
    """Columns T with ``inv(T) @ Nf @ T`` the shift-block nilpotent.

    Chains are taken longest first.  Each new chain top is a column of a
    kernel basis of ``Nf^j`` that is independent of ``ker Nf^(j-1)`` plus the
    level-j vectors of the chains already chosen; among the candidates the
    one with the largest residual is used (float) or the first one (exact).
    """
    exact = la.is_exact(Nf)
    q = Nf.shape[0]
    if q == 0:
        return la.zeros((0, 0), exact), ()
    kernels = kernel_chain(Nf, tol)
    if kernels[-1].shape[1] != q:
        raise NotRegular("fast part is not nilpotent within tolerance")
    index = len(kernels) - 1
    chains = []  # (top vector, length)
    for j in range(index, 0, -1):
        span = [kernels[j - 1][:, i] for i in range(kernels[j - 1].shape[1])]
        for v, length in chains:
            span.append(la.matrix_power(Nf, length - j) @ v)
        target = kernels[j].shape[1]
        cand = kernels[j]
        while True:
            S = np.column_stack(span) if span else la.zeros((q, 0), exact)
            r0 = la.rank(S, tol) if S.shape[1] else 0
            if r0 >= target:
                break
            if exact:
                pick = next(cand[:, i] for i in range(cand.shape[1])
                            if la.rank(np.column_stack([S, cand[:, i]])) > r0)
            else:
                Qs = la.col_space(S, tol) if S.shape[1] else np.zeros((q, 0))
                res = cand - Qs @ (Qs.T @ cand)
                pick = cand[:, int(np.argmax(np.linalg.norm(res, axis=0)))]
            chains.append((pick, j))
            span.append(pick)
    cols = []
    sizes = []
    for v, length in chains:
        for k in range(length - 1, -1, -1):
            cols.append(la.matrix_power(Nf, k) @ v)
        sizes.append(length)
    T = np.column_stack(cols)
    return T, tuple(sizes)


def weierstrass(p: Pencil, exact=None, tol=None) -> WeierstrassForm:
    """Compute ``M, N`` with ``M E N = diag(I_h, G)`` and ``M A N = diag(A1, I)``.

    Uses the spectral split of ``W = inv(A + l0 E) E`` into the range and the
    kernel of ``W^n``; the nilpotent part is put into shift-block form via
    Jordan chains.
    """
    exact = la.config.exact if exact is None else exact
    p = _prepare(p, exact)
    ex = la.is_exact(p.E)
    n = p.n
    lam0 = _choose_lambda0(p, tol)
    if lam0 is None:
        raise NotRegular("det(A + lambda E) vanishes at every sample point")
    F = p.at(lam0)
    Finv = la.inv(F)
    W = Finv @ p.E
    V1 = range_limit(W, tol)
    V2 = kernel_chain(W, tol)[-1]
    h = V1.shape[1]
    if h + V2.shape[1] != n:
        raise NotRegular("spectral split failed; pencil numerically non-regular")
    V = np.hstack([V1, V2])
    Vi = la.inv(V)
    Wb = Vi @ W @ V
    W1 = Wb[:h, :h]
    W2 = Wb[h:, h:]
    W1inv = la.inv(W1) if h else la.zeros((0, 0), ex)
    Iq = la.eye(n - h, ex)
    R = la.inv(Iq - lam0 * W2) if n - h else la.zeros((0, 0), ex)
    Nf = R @ W2
    T, sizes = _jordan_chains(Nf, tol)
    Tinv = la.inv(T) if n - h else T
    M = la.block_diag(W1inv, Tinv @ R) @ Vi @ Finv
    N = V @ la.block_diag(la.eye(h, ex), T)
    A1 = W1inv - lam0 * la.eye(h, ex)
    G = shift_block_matrix(sizes, ex)
    cM, cN = la.cond(M), la.cond(N)
    if max(cM, cN) > COND_CAP:
        warnings.warn(f"Weierstrass transforms ill-conditioned: cond(M)={cM:.3g}, cond(N)={cN:.3g}",
                      IllConditioned, stacklevel=2)
    return WeierstrassForm(M=M, N=N, h=h, A1=A1, G=G, block_sizes=sizes,
                           nilpotent_index=max(sizes) if sizes else 0,
                           cond_M=cM, cond_N=cN, lambda0=lam0)


def reconstruction_error(p: Pencil, wf: WeierstrassForm):
    """Return ``(||MEN - diag(I,G)||, ||MAN - diag(A1,I)||)`` in Frobenius norm."""
    ex = la.is_exact(wf.M)
    E = la.convert(p.E, ex)
    A = la.convert(p.A, ex)
    h, q = wf.h, wf.n - wf.h
    e1 = wf.M @ E @ wf.N - la.block_diag(la.eye(h, ex), wf.G)
    e2 = wf.M @ A @ wf.N - la.block_diag(wf.A1, la.eye(q, ex))
    return la.norm(e1), la.norm(e2)


def _block_toeplitz(diag, sub, k):
    """``(k+1) x k`` (or ``k x k`` when ``sub`` is None-padded) lower bidiagonal block matrix."""
    m, n = diag.shape
    ex = la.is_exact(diag)
    out = la.zeros(((k + 1) * m, k * n), ex)
    for i in range(k):
        out[i * m:(i + 1) * m, i * n:(i + 1) * n] = diag
        out[(i + 1) * m:(i + 2) * m, i * n:(i + 1) * n] = sub
    return out


def _minimal_indices(diag, sub, tol, kmax):
    c = [0]
    for k in range(1, kmax + 1):
        T = _block_toeplitz(diag, sub, k)
        c.append(T.shape[1] - la.rank(T, tol))
    counts = {}
    for j in range(0, kmax - 1):
        cm1 = c[j - 1] if j >= 1 else 0
        cnt = c[j + 1] - 2 * c[j] + cm1
        if cnt:
            counts[j] = cnt
    return counts


def kronecker_structure(p: Pencil, exact=None, tol=None) -> KroneckerStructure:
    """Kronecker structure indices from ranks of block Toeplitz matrices.

    ``dim ker`` of the block bidiagonal matrix with ``A`` on the diagonal and
    ``E`` below it counts polynomial kernel vectors of bounded degree; its
    second differences give the column minimal indices.  The same on the
    transposed pencil gives the row indices, and truncated chain matrices with
    ``E`` on the diagonal give the infinite elementary divisors.
    """
    exact = la.config.exact if exact is None else exact
    p = _prepare(p, exact)
    E, A = p.E, p.A
    n = p.n
    kmax = n + 3
    eps = _minimal_indices(A, E, tol, kmax)
    eta = _minimal_indices(A.T, E.T, tol, kmax)
    n_eps = sum(eps.values())
    # truncated chains for the infinite eigenvalue
    d = [0]
    for k in range(1, n + 2):
        ex = la.is_exact(E)
        T = la.zeros((k * n, k * n), ex)
        for i in range(k):
            T[i * n:(i + 1) * n, i * n:(i + 1) * n] = E
            if i + 1 < k:
                T[(i + 1) * n:(i + 2) * n, i * n:(i + 1) * n] = A
        d.append(k * n - la.rank(T, tol) - k * n_eps)
    ge = [d[k] - d[k - 1] for k in range(1, len(d))]  # ge[k-1] = #{rho >= k}
    rho = []
    for k in range(1, len(ge) + 1):
        cnt = ge[k - 1] - (ge[k] if k < len(ge) else 0)
        rho += [k] * max(cnt, 0)
    left = tuple(sorted(j for j, c in eps.items() if j > 0 for _ in range(c)))
    right = tuple(sorted(j for j, c in eta.items() if j > 0 for _ in range(c)))
    zero_block = (eta.get(0, 0), eps.get(0, 0))
    fin = n - sum(j + 1 for j, c in eps.items() for _ in range(c)) \
        - sum(j for j, c in eta.items() for _ in range(c)) - sum(rho)
    condition = 1.0 if exact else la.cond(np.vstack([E, A])) if n else 1.0
    return KroneckerStructure(zero_block=zero_block, left_indices=left, right_indices=right,
                              nilpotent_sizes=tuple(sorted(rho, reverse=True)),
                              finite_block_order=int(fin), condition=condition)


def nilpotent_centralizer_basis(block_sizes, exact=False):
    """Basis of ``{X : X G = G X}`` for the shift-block nilpotent ``G``.

    Block ``(j, k)`` of ``X`` is an upper-triangular Toeplitz matrix padded
    with zero columns on the left (wide blocks) or zero rows at the bottom
    (tall blocks).  The dimension is ``sum_{j,k} min(m_j, m_k)``.
    """
    sizes = [int(m) for m in block_sizes]
    q = sum(sizes)
    offs = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    one = Fraction(1) if exact else 1.0
    basis = []
    for j, p in enumerate(sizes):
        for k, r in enumerate(sizes):
            s = min(p, r)
            for dgl in range(s):
                X = la.zeros((q, q), exact)
                for i in range(s - dgl):
                    row = offs[j] + i
                    col = offs[k] + (r - s) + i + dgl
                    X[row, col] = one
                basis.append(X)
    return basis
