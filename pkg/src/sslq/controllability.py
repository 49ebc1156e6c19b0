"""Exact controllability of the reduced system.

When ``Dt1`` has full row rank ``h``, the reduced dynamics can be rewritten
with ``v = M2 (z; w) + K1 x1`` as a backward equation

    -dx1 = (P x1 + P1 z + Bt1 w) dt - z dW

so controllability is a statement about the triple ``(P, P1, Bt1)``.  Two
tests are implemented:

* ``subspace_criterion``: the smallest subspace containing ``range Bt1`` and
  invariant under both ``P`` and ``P1`` must be everything.
* ``pbh_criterion``: no common left eigenvector of ``P`` and ``P1`` may be
  orthogonal to ``Bt1``.

The second is implied by the first but not conversely once the
uncontrollable part has dimension two or more, so ``check_h3`` decides with
the subspace test and reports whether the two agree.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as spla

from . import _linalg as la
from .reduction import ReducedLQ

EIG_CLUSTER = 1e-6
PBH_TOL = 1e-8


@dataclass
class ControllabilityReport:
    h: int
    rank_D1: int
    terminal_controllable: bool
    M2: np.ndarray = None
    K1: np.ndarray = None
    P: np.ndarray = None
    P1: np.ndarray = None
    B1tilde: np.ndarray = None
    reachable_dim: int = None
    pbh_verdict: bool = None
    subspace_verdict: bool = None
    witness: dict = None
    h3_holds: bool = False
    criteria_agree: bool = None
    notes: list = field(default_factory=list)


def _sign_fix(Q):
    for j in range(Q.shape[1]):
        i = int(np.argmax(np.abs(Q[:, j])))
        if Q[i, j] < 0:
            Q[:, j] = -Q[:, j]
    return Q


def build_normal_form(red: ReducedLQ, tol=None) -> ControllabilityReport:
    """Construct ``(M2, K1, P, P1, Bt1)``.

    ``M2 = [D+, Kb]`` with ``D+`` the minimum-norm right inverse of ``Dt1``
    and ``Kb`` an orthonormal kernel basis (QR with column pivoting on the
    kernel projector, signs fixed so the largest entry of each column is
    positive).
    """
    D = red.Dtilde1
    h, r = D.shape
    rk = la.rank(D, tol) if D.size else 0
    rep = ControllabilityReport(h=h, rank_D1=rk, terminal_controllable=(rk == h))
    if rk < h:
        rep.notes.append(f"rank(Dt1) = {rk} < h = {h}")
        return rep
    Dp = D.T @ np.linalg.inv(D @ D.T) if h else np.zeros((r, 0))
    proj = np.eye(r) - Dp @ D
    if r > h:
        Qf, _, _ = spla.qr(proj, pivoting=True)
        Kb = _sign_fix(Qf[:, : r - h].copy())
    else:
        Kb = np.zeros((r, 0))
    M2 = np.hstack([Dp, Kb])
    K1 = -Dp @ red.Ctilde1
    rep.M2, rep.K1 = M2, K1
    rep.P = -(red.Atilde1 + red.B1 @ K1)
    rep.P1 = -red.B1 @ Dp
    rep.B1tilde = -red.B1 @ Kb
    return rep


def _scale(*mats):
    return max([1.0] + [float(np.linalg.norm(m)) for m in mats if m.size])


def _orth(a, thr):
    if a.shape[1] == 0:
        return np.zeros((a.shape[0], 0), dtype=a.dtype)
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    return u[:, : int(np.sum(s > thr))]


def subspace_criterion(P, P1, B1tilde, tol=None):
    """Closure of ``range Bt1`` under ``P`` and ``P1``; returns ``(verdict, dim)``."""
    P, P1 = np.atleast_2d(P), np.atleast_2d(P1)
    h = P.shape[0]
    if h == 0:
        return True, 0
    B = np.asarray(B1tilde, dtype=float).reshape(h, -1)
    thr = (la.config.tol_rank if tol is None else tol) * _scale(P, P1, B)
    V = _orth(B, thr)
    for _ in range(h + 1):
        W = _orth(np.hstack([V, P @ V, P1 @ V]), thr)
        if W.shape[1] == V.shape[1]:
            break
        V = W
    dim = V.shape[1]
    return dim == h, dim


def word_matrix(P, P1, B1tilde, max_len):
    """All words in ``P, P1`` of length ``< max_len`` applied to ``Bt1``, stacked as columns."""
    cols = [np.asarray(B1tilde, dtype=float)]
    frontier = [cols[0]]
    for _ in range(max_len - 1):
        frontier = [X @ Y for Y in frontier for X in (P, P1)]
        cols += frontier
    return np.hstack(cols)


def _cluster(eigs, scale):
    groups = []
    for e in sorted(eigs, key=lambda z: (z.real, z.imag)):
        for g in groups:
            if abs(e - np.mean(g)) <= EIG_CLUSTER * scale:
                g.append(e)
                break
        else:
            groups.append([e])
    return [complex(np.mean(g)) for g in groups]


def pbh_criterion(P, P1, B1tilde, tol=PBH_TOL):
    """Search for ``beta`` with ``beta^T P = s beta^T``, ``beta^T P1 = s1 beta^T``, ``beta^T Bt1 = 0``.

    For each eigenvalue ``s`` of ``P`` the candidates form the subspace
    ``V = ker [sI - P, Bt1]^T``; inside it, the largest ``P1^T``-invariant
    subspace is found by repeated restriction, and any eigenvector of
    ``P1^T`` on it is a witness.  Returns ``(verdict, witness)``; the verdict
    is ``True`` when no witness exists.
    """
    P, P1 = np.atleast_2d(P), np.atleast_2d(P1)
    h = P.shape[0]
    if h == 0:
        return True, None
    B = np.asarray(B1tilde, dtype=float).reshape(h, -1)
    scale = _scale(P, P1, B)
    thr = tol * scale
    for s in _cluster(np.linalg.eigvals(P), scale):
        M = np.hstack([s * np.eye(h) - P, B]).T.astype(complex)
        _, sv, vh = np.linalg.svd(M)
        rank = int(np.sum(sv > thr))
        S = vh[rank:].conj().T
        while S.shape[1]:
            R = P1.T @ S - S @ (S.conj().T @ (P1.T @ S))
            _, sv, vh = np.linalg.svd(R)
            k = int(np.sum(sv > thr))
            if k == 0:
                break
            S = S @ vh[k:].conj().T
            S = _orth(S, thr) if S.shape[1] else S
        if S.shape[1]:
            small = S.conj().T @ P1.T @ S
            w, y = np.linalg.eig(small)
            beta = S @ y[:, 0]
            beta = beta / np.linalg.norm(beta)
            return False, {"s": complex(s), "s1": complex(w[0]), "beta": beta}
    return True, None


def witness_residuals(P, P1, B1tilde, witness):
    beta = witness["beta"]
    h = P.shape[0]
    B = np.asarray(B1tilde, dtype=float).reshape(h, -1)
    return (float(np.linalg.norm(beta @ (witness["s"] * np.eye(h) - P))),
            float(np.linalg.norm(beta @ (witness["s1"] * np.eye(h) - P1))),
            float(np.linalg.norm(beta @ B)) if B.size else 0.0)


def check_h3(red: ReducedLQ, tol=None) -> ControllabilityReport:
    """Full controllability report; ``h3_holds`` uses the subspace test."""
    rep = build_normal_form(red, tol)
    if not rep.terminal_controllable:
        rep.h3_holds = False
        return rep
    rep.subspace_verdict, rep.reachable_dim = subspace_criterion(rep.P, rep.P1, rep.B1tilde, tol)
    rep.pbh_verdict, rep.witness = pbh_criterion(rep.P, rep.P1, rep.B1tilde)
    rep.criteria_agree = rep.subspace_verdict == rep.pbh_verdict
    if not rep.criteria_agree:
        rep.notes.append("rank test passes but the invariant subspace is proper: "
                         "no common left eigenvector exists on the uncontrollable part")
    rep.h3_holds = bool(rep.subspace_verdict)
    return rep
