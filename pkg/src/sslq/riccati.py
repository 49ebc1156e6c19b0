"""Riccati equations of the reduced LQ problem.

Finite horizon (``P(T) = Hhat``)::

    dP/dt + P A1 + A1^T P + C11^T P C11 + Qhat - Gam^T Sig^{-1} Gam = 0
    Gam = B1^T P + S + Dt1^T P C11,   Sig = Rhat + Dt1^T P Dt1

Infinite horizon: the algebraic equation in the shifted data
(``At1, Ct1, Qt`` and no cross term), solved as the limit of ``P(0; T)``
with zero terminal weight and then polished by Newton steps.

All integration is done in reversed time ``tau = T - t``, where the
equation reads ``dP/dtau = F(P)``.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as spla
from scipy.integrate import solve_ivp

from .errors import Divergence, FactorizationFailure, GainBlowup, NoConvergence
from .reduction import ReducedLQ

NORM_CAP = 1e12
STEPS_PER_UNIT = 1024


@dataclass
class RiccatiSolution:
    grid: np.ndarray
    P: np.ndarray
    Psi: np.ndarray
    value: float
    integrator_stats: dict = field(default_factory=dict)

    @property
    def P0(self):
        return self.P[0]


@dataclass
class AreResult:
    P0: np.ndarray
    Lambda0: np.ndarray
    value: float
    horizons_used: list
    final_delta: float
    iterates: list = field(default_factory=list)
    residual: float = np.nan
    newton_steps: int = 0
    monotone: bool = True


@dataclass
class _Coeffs:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    Q: np.ndarray
    S: np.ndarray
    R: np.ndarray


def _finite_coeffs(red):
    return _Coeffs(red.A1, red.B1, red.C11, red.Dtilde1, red.Qhat, red.S, red.Rhat)


def _tilde_coeffs(red):
    return _Coeffs(red.Atilde1, red.B1, red.Ctilde1, red.Dtilde1, red.Qtilde,
                   np.zeros_like(red.S), red.Rhat)


def _gain(c, P):
    """``(Sig^{-1} Gam, Gam)`` via a Cholesky factorization of ``Sig``."""
    Gam = c.B.T @ P + c.S + c.D.T @ P @ c.C
    Sig = c.R + c.D.T @ P @ c.D
    if Sig.size == 0:
        return np.zeros_like(Gam), Gam
    try:
        cf = spla.cho_factor((Sig + Sig.T) / 2)
    except np.linalg.LinAlgError as exc:
        raise FactorizationFailure("Rhat + Dt1^T P Dt1 lost positive definiteness") from exc
    return spla.cho_solve(cf, Gam), Gam


def _rhs(c, P):
    Psi, Gam = _gain(c, P)
    F = P @ c.A + c.A.T @ P + c.C.T @ P @ c.C + c.Q - Gam.T @ Psi
    return (F + F.T) / 2


def _rk4(c, P_T, T, steps):
    h = P_T.shape[0]
    dt = T / steps
    out = np.empty((steps + 1, h, h))
    out[steps] = P_T
    P = P_T.copy()
    for i in range(steps, 0, -1):
        k1 = _rhs(c, P)
        k2 = _rhs(c, P + 0.5 * dt * k1)
        k3 = _rhs(c, P + 0.5 * dt * k2)
        k4 = _rhs(c, P + dt * k3)
        P = P + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        P = (P + P.T) / 2
        if not np.all(np.isfinite(P)) or (P.size and np.abs(P).max() > NORM_CAP):
            raise GainBlowup(f"|P| exceeded {NORM_CAP:g} at t={(i - 1) * dt:.6g}")
        out[i - 1] = P
    return out


def default_steps(T):
    return max(16, int(np.ceil(STEPS_PER_UNIT * T)))


def solve_finite(red: ReducedLQ, T, steps=None) -> RiccatiSolution:
    """Fixed-step RK4 for the finite-horizon equation on a uniform grid.

    ``steps`` defaults to 1024 per unit time.  The value is
    ``0.5 * x10^T P(0) x10``.
    """
    if T <= 0:
        raise ValueError("horizon T must be positive")
    steps = default_steps(T) if steps is None else int(steps)
    if steps < 16:
        raise ValueError("steps must be at least 16")
    c = _finite_coeffs(red)
    Hhat = (red.Hhat + red.Hhat.T) / 2
    P = _rk4(c, Hhat, float(T), steps)
    P[steps] = red.Hhat
    Psi = np.stack([_gain(c, Pi)[0] for Pi in P])
    grid = np.linspace(0.0, float(T), steps + 1)
    value = 0.5 * float(red.x10 @ P[0] @ red.x10)
    return RiccatiSolution(grid=grid, P=P, Psi=Psi, value=value,
                           integrator_stats={"method": "rk4", "steps": steps, "dt": T / steps})


def solve_finite_adaptive(red: ReducedLQ, T, rtol=1e-12, atol=1e-14, method="DOP853",
                          t_eval=None) -> RiccatiSolution:
    """Independent check: adaptive explicit RK from scipy on the vectorized equation.

    The right-hand side uses a plain linear solve rather than the Cholesky
    path of :func:`solve_finite`.
    """
    h = red.h
    A, B, C, D = red.A1, red.B1, red.C11, red.Dtilde1

    def f(_tau, y):
        P = y.reshape(h, h)
        Gam = B.T @ P + red.S + D.T @ P @ C
        Sig = red.Rhat + D.T @ P @ D
        dP = P @ A + A.T @ P + C.T @ P @ C + red.Qhat - Gam.T @ np.linalg.solve(Sig, Gam)
        return dP.ravel()

    t_eval = np.array([0.0, T]) if t_eval is None else np.asarray(t_eval, dtype=float)
    tau_eval = np.sort(T - t_eval)
    sol = solve_ivp(f, (0.0, T), red.Hhat.ravel(), method=method, rtol=rtol, atol=atol,
                    t_eval=tau_eval)
    if not sol.success:
        raise GainBlowup(sol.message)
    Ps = sol.y.T.reshape(-1, h, h)[::-1]
    grid = T - sol.t[::-1]
    Ps = (Ps + np.transpose(Ps, (0, 2, 1))) / 2
    Psi = np.stack([np.linalg.solve(red.Rhat + D.T @ P @ D, B.T @ P + red.S + D.T @ P @ C)
                    for P in Ps])
    return RiccatiSolution(grid=grid, P=Ps, Psi=Psi, value=0.5 * float(red.x10 @ Ps[0] @ red.x10),
                           integrator_stats={"method": method, "nfev": sol.nfev})


def riccati_residual(red: ReducedLQ, P, Pdot):
    """Left side of the finite-horizon equation at one time."""
    c = _finite_coeffs(red)
    return Pdot + _rhs(c, P)


def finite_residuals(red: ReducedLQ, sol: RiccatiSolution):
    """Max-norm residual at interior grid points, ``dP/dt`` by 7-point centered differences.

    The stencil error is O(dt^6), so at the step counts of interest the
    residual reflects the RK4 solution rather than the difference formula.
    """
    P = sol.P
    dt = sol.grid[1] - sol.grid[0]
    res = []
    for i in range(3, len(P) - 3):
        Pdot = (-P[i - 3] + 9 * P[i - 2] - 45 * P[i - 1] + 45 * P[i + 1] - 9 * P[i + 2]
                + P[i + 3]) / (60 * dt)
        res.append(np.abs(riccati_residual(red, P[i], Pdot)).max())
    return np.array(res)


def are_residual(red: ReducedLQ, P0):
    """Left side of the algebraic equation in the shifted data."""
    return _rhs(_tilde_coeffs(red), P0)


def are_gain(red: ReducedLQ, P0):
    """``Lambda0 = -(Rhat + Dt1^T P0 Dt1)^{-1} (B1^T P0 + Dt1^T P0 Ct1)``."""
    return -_gain(_tilde_coeffs(red), P0)[0]


def _newton_step(red, P):
    """One Kleinman step: solve the closed-loop generalized Lyapunov equation."""
    c = _tilde_coeffs(red)
    L = are_gain(red, P)
    Acl = c.A + c.B @ L
    Ccl = c.C + c.D @ L
    h = P.shape[0]
    I = np.eye(h)
    # vec(X A) = (A^T kron I) vec X in column-major order
    op = np.kron(Acl.T, I) + np.kron(I, Acl.T) + np.kron(Ccl.T, Ccl.T)
    rhs = -(c.Q + L.T @ c.R @ L)
    X = np.linalg.solve(op, rhs.reshape(-1, order="F")).reshape(h, h, order="F")
    return (X + X.T) / 2


def solve_are(red: ReducedLQ, T_step=1.0, max_T=200.0, tol_conv=1e-10, steps_per_unit=256,
              newton_max=20) -> AreResult:
    """Stationary solution as the limit of ``P(0; T)`` with zero terminal weight.

    The reduced equation is autonomous, so ``P(0; T + dT)`` is the
    ``dT``-horizon solution with terminal weight ``P(0; T)``; every extension
    continues the previous integration.  Newton steps then polish the limit,
    and a step is kept only if it lowers the residual.
    """
    from dataclasses import replace

    h = red.h
    tred = replace(red, A1=red.Atilde1, C11=red.Ctilde1, Qhat=red.Qtilde,
                   S=np.zeros_like(red.S))
    P = np.zeros((h, h))
    iterates = [P]
    horizons = [0.0]
    delta = np.inf
    monotone = True
    steps = max(16, int(np.ceil(steps_per_unit * T_step)))
    T = 0.0
    while delta > tol_conv:
        if T + T_step > max_T + 1e-12:
            raise NoConvergence(f"no convergence by T={T:g}: last delta {delta:.3g}")
        try:
            P_new = solve_finite(replace(tred, Hhat=P), T_step, steps).P[0]
        except GainBlowup as exc:
            raise Divergence(f"P(0;T) diverged beyond T={T:g}") from exc
        T += T_step
        if h and np.min(np.linalg.eigvalsh(P_new - P)) < -1e-8 * max(1.0, np.abs(P_new).max()):
            monotone = False
        delta = float(np.abs(P_new - P).max()) if h else 0.0
        P = P_new
        iterates.append(P)
        horizons.append(T)
    res = np.abs(are_residual(red, P)).max() if h else 0.0
    n_newton = 0
    for _ in range(newton_max if h else 0):
        try:
            cand = _newton_step(red, P)
        except np.linalg.LinAlgError:
            break
        cand_res = np.abs(are_residual(red, cand)).max()
        if not cand_res < res:
            break
        P, res = cand, cand_res
        n_newton += 1
        if res <= 1e-15 * max(1.0, np.abs(P).max()):
            break
    Lam = are_gain(red, P) if h else np.zeros((red.r, 0))
    return AreResult(P0=P, Lambda0=Lam, value=float(red.x10 @ P @ red.x10),
                     horizons_used=horizons, final_delta=delta, iterates=iterates,
                     residual=float(res), newton_steps=n_newton, monotone=monotone)


def feedback_finite(sol: RiccatiSolution, K, N1):
    """``F(t_i) = K - Psi(t_i) (I_h 0) N1^{-1}`` on the solution grid, shape ``(M+1, r, n)``."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    h = sol.P.shape[1]
    proj = np.linalg.inv(np.asarray(N1, dtype=float))[:h]
    return K[None] - sol.Psi @ proj


def feedback_infinite(are: AreResult, red: ReducedLQ):
    """Constant gain ``K + (Lambda0 - Rhat^{-1} S) (I_h 0) N1^{-1}``."""
    proj = np.linalg.inv(red.N1)[: red.h]
    return red.K + (are.Lambda0 - np.linalg.solve(red.Rhat, red.S)) @ proj


def interpolate_gain(grid, F, t):
    """Piecewise-linear interpolation of a gain sequence at time ``t``."""
    i = int(np.clip(np.searchsorted(grid, t, side="right") - 1, 0, len(grid) - 2))
    w = (t - grid[i]) / (grid[i + 1] - grid[i])
    w = min(max(w, 0.0), 1.0)
    return (1 - w) * F[i] + w * F[i + 1]
