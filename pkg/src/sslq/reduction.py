"""Reduce a singular LQ problem to an order-``h`` normal LQ problem.

With a pre-compensating feedback ``u = Kx + v`` and a certificate
``(M1, N1)`` for the closed loop, the state splits as ``x = N1 (x1; x2)``
with ``x2 = -B2 v``.  Substituting into the quadratic cost gives the
reduced weights through the congruence

    [[Qhat, S^T], [S, Rhat]] = L^T diag(Q, R) L,
    L = [[N1, 0], [K N1, I]] @ [[I_h, 0], [0, -B2], [0, I_r]].

``S`` is stored ``r x h`` so that ``B1^T P + S`` type-checks.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import _linalg as la
from .errors import AssumptionViolated, DimensionError, KConditionsFailed
from .system import SingularSystem
from .wellposed import check_strongly_regular, verify_certificate

PSD_FLOOR = -1e-10
_RELEVANT = {"finite": ("H1", "H1'"), "infinite": ("H2", "H2'")}


@dataclass
class LQWeights:
    """Quadratic weights; ``H`` and ``T`` are ``None`` for the infinite horizon."""

    Q: np.ndarray
    R: np.ndarray
    H: np.ndarray = None
    T: float = None

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if self.H is not None:
            self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        for name in ("Q", "R", "H"):
            m = getattr(self, name)
            if m is None:
                continue
            if m.shape[0] != m.shape[1]:
                raise DimensionError(f"{name} must be square")
            if not np.allclose(m, m.T, atol=1e-12 * max(1.0, np.abs(m).max())):
                raise DimensionError(f"{name} must be symmetric")

    @property
    def infinite(self):
        return self.T is None or np.isinf(self.T)


@dataclass
class ReducedLQ:
    A1: np.ndarray
    B1: np.ndarray
    C11: np.ndarray
    C12: np.ndarray
    D1: np.ndarray
    Dtilde1: np.ndarray
    Atilde1: np.ndarray
    Ctilde1: np.ndarray
    Qhat: np.ndarray
    S: np.ndarray
    Rhat: np.ndarray
    Qtilde: np.ndarray
    Hhat: np.ndarray
    x10: np.ndarray
    K: np.ndarray
    M1: np.ndarray
    N1: np.ndarray
    B2: np.ndarray
    block_sizes: tuple
    weights: LQWeights = None
    system: SingularSystem = None

    @property
    def h(self):
        return self.A1.shape[0]

    @property
    def r(self):
        return self.B1.shape[1]

    @property
    def n(self):
        return self.M1.shape[0]

    def coordinate_map(self):
        """``L`` with ``(x; u) = L (x1; v)``."""
        return lift_matrix(self.N1, self.K, self.B2)

    def slow_projection(self):
        """``(I_h 0) N1^{-1}``: maps ``x`` to ``x1``."""
        return np.linalg.inv(self.N1)[: self.h]


def close_loop(sys: SingularSystem, K) -> SingularSystem:
    """``(E, A + BK, B, C + DK, D, x0)``."""
    K = la.convert(np.atleast_2d(K), sys.exact)
    if K.shape != (sys.r, sys.n):
        raise DimensionError(f"K must be {sys.r}x{sys.n}, got {K.shape}")
    return sys.replace(A=sys.A + sys.B @ K, C=sys.C + sys.D @ K)


def verify_k(sys, K, M1, N1, block_sizes, exact=None, tol=None):
    """Per-condition report for the closed loop ``u = Kx + v`` under ``(M1, N1)``."""
    return verify_certificate(close_loop(sys, K), M1, N1, block_sizes, exact=exact, tol=tol)


def lift_matrix(N1, K, B2):
    N1 = np.asarray(N1, dtype=float)
    K = np.atleast_2d(np.asarray(K, dtype=float))
    B2 = np.asarray(B2, dtype=float)
    n = N1.shape[0]
    r = K.shape[0]
    h = n - B2.shape[0]
    first = np.block([[N1, np.zeros((n, r))], [K @ N1, np.eye(r)]])
    second = np.zeros((n + r, h + r))
    second[:h, :h] = np.eye(h)
    second[h:n, h:] = -B2
    second[n:, h:] = np.eye(r)
    return first @ second


def _min_eig(m):
    return float(np.min(np.linalg.eigvalsh((m + m.T) / 2))) if m.size else 0.0


def _is_pd(m, tol=1e-10):
    return m.size == 0 or _min_eig(m) > tol * max(1.0, np.abs(m).max())


def _is_psd(m, tol=1e-10):
    return m.size == 0 or _min_eig(m) >= -tol * max(1.0, np.abs(m).max())


def rank_condition_matrix(K, N1, B2):
    """``I_r + K N1 (0; -B2)``."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    N1 = np.asarray(N1, dtype=float)
    B2 = np.asarray(B2, dtype=float)
    n, r = N1.shape[0], K.shape[0]
    h = n - B2.shape[0]
    col = np.vstack([np.zeros((h, r)), -B2])
    return np.eye(r) + K @ N1 @ col


def check_assumptions(sys, K, N1, B2, weights: LQWeights, horizon="finite"):
    """Evaluate (H1), (H1)', (H2), (H2)'.

    Returns a dict with one boolean per assumption, the individual tests and
    ``sufficient``: whether the assumptions relevant to ``horizon`` allow
    solving the problem.
    """
    Q, R, H = weights.Q, weights.R, weights.H
    n, r = sys.n, sys.r
    if Q.shape != (n, n) or R.shape != (r, r) or (H is not None and H.shape != (n, n)):
        raise DimensionError("weight dimensions do not match the system")
    Rc = rank_condition_matrix(K, N1, B2)
    tests = {
        "Q_pd": _is_pd(Q),
        "Q_psd": _is_psd(Q),
        "R_pd": _is_pd(R),
        "H_psd": True if H is None else _is_psd(H),
        "rank_condition": la.rank(Rc) == r,
    }
    rep = {
        "H1": tests["Q_pd"] and tests["R_pd"] and tests["H_psd"],
        "H1'": tests["Q_psd"] and tests["rank_condition"] and tests["R_pd"] and tests["H_psd"],
        "H2": tests["Q_pd"] and tests["R_pd"],
        "H2'": tests["Q_psd"] and tests["rank_condition"] and tests["R_pd"],
    }
    if horizon == "finite":
        sufficient = rep["H1"] or rep["H1'"]
    else:
        sufficient = rep["H2"] or rep["H2'"]
    return {**rep, "tests": tests, "horizon": horizon, "sufficient": sufficient}


def assemble(sys, K, M1, N1, block_sizes, weights: LQWeights, exact=None, tol=None) -> ReducedLQ:
    """Build the reduced normal LQ data for the closed loop ``u = Kx + v``."""
    K = np.atleast_2d(np.asarray(K))
    if not la.is_exact(K):
        K = K.astype(float)
    report = verify_k(sys, K, M1, N1, block_sizes, exact=exact, tol=tol)
    if not report.well_posed:
        raise KConditionsFailed(f"K conditions failed: {report.failed_conditions}",
                                report.failed_conditions)
    f = report.form
    fl = la.to_float
    A1, B1, B2 = fl(f.A1), fl(f.B1), fl(f.B2)
    C11, C12, D1 = fl(f.C11), fl(f.C12), fl(f.D1)
    M1f, N1f, Kf = fl(f.M), fl(f.N), fl(K)
    h = f.h
    L = lift_matrix(N1f, Kf, B2)
    n, r = sys.n, sys.r
    Qb = la.block_diag(weights.Q, weights.R)
    big = L.T @ Qb @ L
    big = (big + big.T) / 2
    Qhat, S, Rhat = big[:h, :h], big[h:, :h], big[h:, h:]
    horizon = "infinite" if weights.infinite else "finite"
    if not _is_pd(Rhat):
        rep = check_assumptions(sys, Kf, N1f, B2, weights, horizon)
        failed = [k for k in _RELEVANT[horizon] if not rep[k]]
        raise AssumptionViolated(f"Rhat is not positive definite; failing: {failed}", failed)
    Rinv_S = np.linalg.solve(Rhat, S)
    Qtilde = Qhat - S.T @ Rinv_S
    Qtilde = (Qtilde + Qtilde.T) / 2
    if not _is_psd(Qtilde):
        rep = check_assumptions(sys, Kf, N1f, B2, weights, horizon)
        failed = [k for k in _RELEVANT[horizon] if not rep[k]]
        raise AssumptionViolated(f"Qtilde is not positive semidefinite; failing: {failed}", failed)
    Dt1 = D1 - C12 @ B2
    if weights.H is not None:
        Mi = np.linalg.inv(M1f)
        Hfull = Mi.T @ weights.H @ Mi
        Hhat = (Hfull[:h, :h] + Hfull[:h, :h].T) / 2
    else:
        Hhat = np.zeros((h, h))
    x10 = (M1f @ fl(sys.x0))[:h]
    return ReducedLQ(A1=A1, B1=B1, C11=C11, C12=C12, D1=D1, Dtilde1=Dt1,
                     Atilde1=A1 - B1 @ Rinv_S, Ctilde1=C11 - Dt1 @ Rinv_S,
                     Qhat=Qhat, S=S, Rhat=Rhat, Qtilde=Qtilde, Hhat=Hhat, x10=x10,
                     K=Kf, M1=M1f, N1=N1f, B2=B2, block_sizes=f.block_sizes,
                     weights=weights, system=sys.as_float() if sys.exact else sys)


@dataclass
class FeedbackSuggestion:
    K: np.ndarray
    M1: np.ndarray
    N1: np.ndarray
    block_sizes: tuple
    tried: int
    heuristic: bool = True
    notes: list = field(default_factory=list)


def _candidate_gains(r, n, values, max_support, rng, n_random):
    yield np.zeros((r, n))
    idx = list(itertools.product(range(r), range(n)))
    for support in range(1, max_support + 1):
        for pos in itertools.combinations(idx, support):
            for vals in itertools.product(values, repeat=support):
                K = np.zeros((r, n))
                for (i, j), v in zip(pos, vals):
                    K[i, j] = v
                yield K
    for _ in range(n_random):
        yield rng.standard_normal((r, n))


def suggest_feedback(sys, seed=0, values=(1, -1, 2, -2), max_support=2, n_random=64,
                     budget=5000, exact=None):
    """Heuristic search for ``K`` making the closed loop well posed.

    Tries ``K = 0``, then sparse integer gains (1, then 2 nonzero entries),
    then dense Gaussian gains.  Each candidate is tested with
    :func:`sslq.wellposed.check_strongly_regular`.  Returns ``None`` if the
    budget runs out.  Failure proves nothing.
    """
    rng = np.random.default_rng(seed)
    for tried, K in enumerate(_candidate_gains(sys.r, sys.n, values, max_support, rng, n_random), 1):
        if tried > budget:
            break
        cl = close_loop(sys, la.convert(K, sys.exact))
        v = check_strongly_regular(cl, exact=exact, seed=seed)
        if v.well_posed:
            f = v.form
            return FeedbackSuggestion(K=K, M1=f.M, N1=f.N, block_sizes=f.block_sizes, tried=tried)
    return None


def normal_lq(A1, B1, C11=None, Dtilde1=None, Qhat=None, S=None, Rhat=None, Hhat=None,
              x10=None) -> ReducedLQ:
    """Wrap order-``h`` normal LQ data directly (no singular system behind it).

    Missing blocks default to zero, ``Rhat`` to the identity and ``x10`` to
    the first unit vector.  ``K``, ``M1`` and ``N1`` are trivial.
    """
    A1 = np.atleast_2d(np.asarray(A1, dtype=float))
    h = A1.shape[0]
    B1 = np.asarray(B1, dtype=float).reshape(h, -1)
    r = B1.shape[1]

    def mat(v, shape, default):
        return default if v is None else np.asarray(v, dtype=float).reshape(shape)

    C11 = mat(C11, (h, h), np.zeros((h, h)))
    Dt1 = mat(Dtilde1, (h, r), np.zeros((h, r)))
    Qhat = mat(Qhat, (h, h), np.zeros((h, h)))
    S = mat(S, (r, h), np.zeros((r, h)))
    Rhat = mat(Rhat, (r, r), np.eye(r))
    Hhat = mat(Hhat, (h, h), np.zeros((h, h)))
    x10 = mat(x10, (h,), np.eye(h)[0] if h else np.zeros(0))
    Rinv_S = np.linalg.solve(Rhat, S)
    Qt = Qhat - S.T @ Rinv_S
    return ReducedLQ(A1=A1, B1=B1, C11=C11, C12=np.zeros((h, 0)), D1=Dt1, Dtilde1=Dt1,
                     Atilde1=A1 - B1 @ Rinv_S, Ctilde1=C11 - Dt1 @ Rinv_S,
                     Qhat=Qhat, S=S, Rhat=Rhat, Qtilde=(Qt + Qt.T) / 2, Hhat=Hhat, x10=x10,
                     K=np.zeros((r, h)), M1=np.eye(h), N1=np.eye(h), B2=np.zeros((0, r)),
                     block_sizes=())
