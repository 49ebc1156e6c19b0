"""Monte Carlo validation of synthesized feedback laws.

Only the slow state ``x1`` is integrated (Euler-Maruyama).  The fast state
is recovered from the algebraic relation ``x2 = -B2 v`` and the original
coordinates from ``x = N1 (x1; x2)``, ``u = K x + v``.

Every path owns a Philox stream keyed by ``(seed, path index)`` and the
per-path costs are stored in path order, so results do not depend on batch
size or on how many worker threads are used.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import NotScalar, Unstable
from .reduction import ReducedLQ

OVERFLOW = 1e150


@dataclass
class SimConfig:
    dt: float = 1e-3
    horizon: float = 1.0
    n_paths: int = 1000
    seed: int = 0
    scheme: str = "euler_maruyama"
    batch_size: int = 2048
    chunk: int = 512
    workers: int = 1
    first_path: int = 0
    keep_paths: int = 0
    record_every: int = 1

    def __post_init__(self):
        if self.dt <= 0 or self.horizon <= 0:
            raise ValueError("dt and horizon must be positive")
        if self.dt > self.horizon:
            raise ValueError("dt must not exceed the horizon")
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if self.scheme != "euler_maruyama":
            raise ValueError(f"unsupported scheme {self.scheme!r}")

    @property
    def n_steps(self):
        return int(round(self.horizon / self.dt))


@dataclass
class SimulationResult:
    cost_mean: float
    cost_stderr: float
    ci95: tuple
    per_path_costs: np.ndarray = None
    per_path_reduced_costs: np.ndarray = None
    sample_paths: dict = None
    constraint_residual: float = 0.0
    checkpoint_costs: np.ndarray = None
    checkpoints: np.ndarray = None
    horizon_kind: str = "finite"
    notes: list = field(default_factory=list)

    def ci(self, level=0.99):
        from scipy.stats import norm

        z = norm.ppf(0.5 + level / 2)
        return (self.cost_mean - z * self.cost_stderr, self.cost_mean + z * self.cost_stderr)


def path_generator(seed, path):
    """Counter-based stream for one path."""
    key = np.array([np.uint64(seed % 2**64), np.uint64(path)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _reduced_gain(red, F):
    """Map an original-coordinate gain ``F`` to ``v = L x1``.

    With ``(F - K) N1 = [Gs Gf]`` and ``x2 = -B2 v``, ``v = (I + Gf B2)^{-1} Gs x1``.
    """
    G = (np.atleast_2d(F) - red.K) @ red.N1
    Gs, Gf = G[:, : red.h], G[:, red.h:]
    return np.linalg.solve(np.eye(red.r) + Gf @ red.B2, Gs)


def _stage_matrix(red, L):
    """Rows ``[drift; diffusion; x; u; x1; v]`` as a linear map of ``x1``.

    ``x = N1 (x1; -B2 v)`` and ``u = K x + v`` with ``v = L x1``.
    """
    h = red.h
    lift = np.vstack([np.eye(h), -red.B2 @ L])
    X = red.N1 @ lift
    U = red.K @ X + L
    return np.vstack([red.A1 + red.B1 @ L, red.C11 + red.Dtilde1 @ L, X, U, np.eye(h), L])


class _GainSchedule:
    def __init__(self, red, gain, n_steps, dt):
        if isinstance(gain, tuple):
            grid, F = gain
            grid = np.asarray(grid, dtype=float)
            F = np.asarray(F, dtype=float)
            t = np.arange(n_steps + 1) * dt
            idx = np.clip(np.searchsorted(grid, t, side="right") - 1, 0, len(grid) - 2)
            w = np.clip((t - grid[idx]) / (grid[idx + 1] - grid[idx]), 0.0, 1.0)
            Ft = (1 - w)[:, None, None] * F[idx] + w[:, None, None] * F[idx + 1]
            self.S = np.stack([_stage_matrix(red, _reduced_gain(red, Fk)) for Fk in Ft])
            self.constant = False
        else:
            self.S = _stage_matrix(red, _reduced_gain(red, np.asarray(gain, dtype=float)))[None]
            self.constant = True

    def __call__(self, k):
        return self.S[0] if self.constant else self.S[k]


def _simulate_batch(red, sched, cfg, paths, finite, checkpoints_idx, keep):
    h, n, r = red.h, red.n, red.r
    b = len(paths)
    gens = [path_generator(cfg.seed, p) for p in paths]
    dt = cfg.dt
    sq = np.sqrt(dt)
    N = cfg.n_steps
    ix = np.cumsum([0, h, h, n, r, h, r])
    sl = [slice(ix[i], ix[i + 1]) for i in range(6)]
    Wr = np.block([[red.Qhat, red.S.T], [red.S, red.Rhat]])
    if red.weights is None:
        # bare normal LQ data: the original problem is the reduced one
        Wo, H, E = Wr, red.Hhat, np.eye(h)
    else:
        w = red.weights
        Wo = np.block([[w.Q, np.zeros((n, r))], [np.zeros((r, n)), w.R]])
        H, E = w.H, red.system.E
    fast = np.linalg.inv(red.N1)[h:]
    x1 = np.repeat(red.x10[:, None], b, axis=1)
    ck = dict(zip(checkpoints_idx, range(len(checkpoints_idx))))
    ck_costs = np.zeros((len(checkpoints_idx), b))
    rec = {"t": [], "x1": [], "x2": [], "x": [], "u": [], "dW": []} if keep else None

    def stage(k, x1):
        z = sched(k) @ x1
        xu = z[ix[2]:ix[4]]
        zr = z[ix[4]:]
        with np.errstate(over="ignore", invalid="ignore"):
            # squares of runaway paths overflow before the magnitude guard fires
            ell = np.sum(xu * (Wo @ xu), axis=0)
            ell_red = np.sum(zr * (Wr @ zr), axis=0)
        res = 0.0
        if n > h:
            res = float(np.abs(fast @ z[sl[2]] + red.B2 @ z[sl[5]]).max())
        return z, ell, ell_red, res

    def record(k, z, dw):
        rec["t"].append(k * dt)
        x = z[sl[2]][:, :keep]
        rec["x1"].append(z[sl[4]][:, :keep].T.copy())
        rec["x"].append(x.T.copy())
        rec["x2"].append((fast @ x).T.copy())
        rec["u"].append(z[sl[3]][:, :keep].T.copy())
        if dw is not None:
            rec["dW"].append(dw[:keep].copy())

    z, ell, ell_red, resid = stage(0, x1)
    run, run_red = 0.5 * dt * ell, 0.5 * dt * ell_red
    k = 0
    while k < N:
        m = min(cfg.chunk, N - k)
        dW = np.stack([g.standard_normal(m) for g in gens], axis=1) * sq
        for j in range(m):
            dw = dW[j]
            if rec is not None and k % cfg.record_every == 0:
                record(k, z, dw)
            x1 = x1 + z[sl[0]] * dt + z[sl[1]] * dw
            k += 1
            z, ell, ell_red, res = stage(k, x1)
            resid = max(resid, res)
            if k in ck:
                ck_costs[ck[k]] = (run + 0.5 * dt * ell) * (0.5 if finite else 1.0)
            wt = dt if k < N else 0.5 * dt
            run += wt * ell
            run_red += wt * ell_red
        if (not np.all(np.isfinite(x1)) or np.abs(x1).max(initial=0.0) > OVERFLOW
                or not np.all(np.isfinite(run))):
            raise Unstable(f"path magnitude exceeded {OVERFLOW:g} by t={k * dt:g}")
    if rec is not None:
        record(N, z, None)
    if finite:
        cost, cost_red = 0.5 * run, 0.5 * run_red
        if H is not None:
            Ex = E @ z[sl[2]]
            cost = cost + 0.5 * np.sum(Ex * (H @ Ex), axis=0)
            cost_red = cost_red + 0.5 * np.sum(x1 * (red.Hhat @ x1), axis=0)
    else:
        cost, cost_red = run, run_red
    return cost, cost_red, ck_costs, resid, rec


def simulate_closed_loop(red: ReducedLQ, gain, cfg: SimConfig, horizon_kind="finite",
                         checkpoints=None) -> SimulationResult:
    """Estimate the cost of ``u = F x`` by Monte Carlo.

    ``gain`` is either a constant ``r x n`` matrix or a pair ``(grid, F)``
    with ``F`` of shape ``(len(grid), r, n)``, interpolated linearly in time.
    ``horizon_kind`` is ``"finite"`` (half weights plus terminal term) or
    ``"infinite_truncated"`` (full weights, no terminal term, cut at
    ``cfg.horizon``).  ``checkpoints`` are times at which the running cost
    is also recorded (shared noise across checkpoints).
    """
    if horizon_kind not in ("finite", "infinite_truncated"):
        raise ValueError(f"unknown horizon kind {horizon_kind!r}")
    finite = horizon_kind == "finite"
    N = cfg.n_steps
    sched = _GainSchedule(red, gain, N, cfg.dt)
    ck_times = np.asarray([] if checkpoints is None else checkpoints, dtype=float)
    ck_idx = [int(round(t / cfg.dt)) for t in ck_times]
    paths = np.arange(cfg.first_path, cfg.first_path + cfg.n_paths)
    batches = [paths[i:i + cfg.batch_size] for i in range(0, len(paths), cfg.batch_size)]
    keep_left = cfg.keep_paths

    def run(i):
        keep = min(max(keep_left - i * cfg.batch_size, 0), len(batches[i]))
        return _simulate_batch(red, sched, cfg, batches[i], finite, ck_idx, keep)

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            outs = list(pool.map(run, range(len(batches))))
    else:
        outs = [run(i) for i in range(len(batches))]
    costs = np.concatenate([o[0] for o in outs])
    costs_red = np.concatenate([o[1] for o in outs])
    ckc = np.concatenate([o[2] for o in outs], axis=1) if ck_idx else None
    resid = max(o[3] for o in outs)
    sample = None
    recs = [o[4] for o in outs if o[4] is not None]
    if recs:
        sample = {key: np.concatenate([np.stack(r[key], axis=1) for r in recs])
                  for key in ("x1", "x2", "x", "u")}
        sample["t"] = np.asarray(recs[0]["t"])
        sample["dW"] = np.concatenate([np.stack(r["dW"], axis=1) for r in recs])
    mean = float(np.sum(costs) / len(costs))
    se = float(np.std(costs, ddof=1) / np.sqrt(len(costs))) if len(costs) > 1 else float("nan")
    return SimulationResult(cost_mean=mean, cost_stderr=se, ci95=(mean - 1.96 * se, mean + 1.96 * se),
                            per_path_costs=costs, per_path_reduced_costs=costs_red,
                            sample_paths=sample, constraint_residual=float(resid),
                            checkpoint_costs=ckc, checkpoints=ck_times if ck_idx else None,
                            horizon_kind=horizon_kind)


def estimate_value_curve(red: ReducedLQ, gain, cfg: SimConfig, horizons,
                         horizon_kind="infinite_truncated"):
    """Mean cost truncated at each horizon, from one run with common random numbers.

    Returns a list of ``(horizon, mean, stderr)`` tuples.
    """
    horizons = np.sort(np.asarray(horizons, dtype=float))
    run_cfg = SimConfig(**{**cfg.__dict__, "horizon": float(horizons[-1]), "keep_paths": 0})
    res = simulate_closed_loop(red, gain, run_cfg, horizon_kind, checkpoints=horizons)
    out = []
    for T, c in zip(horizons, res.checkpoint_costs):
        se = float(np.std(c, ddof=1) / np.sqrt(len(c))) if len(c) > 1 else float("nan")
        out.append((float(T), float(np.sum(c) / len(c)), se))
    return out


def closed_loop_matrices(red: ReducedLQ, F):
    """Drift and diffusion matrices of ``x1`` under the constant gain ``F``."""
    L = _reduced_gain(red, F)
    return red.A1 + red.B1 @ L, red.C11 + red.Dtilde1 @ L


def second_moment_rate(Acl, Ccl):
    """Decay rate ``alpha`` of ``E[x1 x1^T]``: minus the spectral abscissa of its generator."""
    h = Acl.shape[0]
    I = np.eye(h)
    gen = np.kron(I, Acl) + np.kron(Acl, I) + np.kron(Ccl, Ccl)
    return -float(np.max(np.linalg.eigvals(gen).real))


def truncation_horizon(red: ReducedLQ, F, rel_tol=1e-3):
    """Horizon after which the second moment has decayed by ``rel_tol``.

    Returns ``(horizon, alpha)``; the neglected tail is roughly
    ``exp(-alpha * horizon)`` times the value.
    """
    alpha = second_moment_rate(*closed_loop_matrices(red, F))
    if alpha <= 0:
        raise Unstable(f"closed loop not mean-square stable (rate {alpha:.3g})")
    return float(np.log(1.0 / rel_tol) / alpha), alpha


def scalar_closed_loop(red: ReducedLQ, F):
    """``(a, sigma)`` of a scalar closed loop ``dx1 = a x1 dt + sigma x1 dW``."""
    if red.h != 1:
        raise NotScalar(f"closed loop has order {red.h}")
    Acl, Ccl = closed_loop_matrices(red, F)
    return float(Acl[0, 0]), float(Ccl[0, 0])


def analytic_scalar_path(a, sigma, x10, times, noise):
    """Exact solution ``x10 * exp((a - sigma^2/2) t + sigma W(t))`` of geometric Brownian motion.

    ``noise`` holds the Brownian increments between consecutive ``times``.
    """
    for name, val in (("a", a), ("sigma", sigma), ("x10", x10)):
        if np.size(val) != 1:
            raise NotScalar(f"{name} must be a scalar")
    a, sigma, x10 = float(np.ravel(a)[0]), float(np.ravel(sigma)[0]), float(np.ravel(x10)[0])
    times = np.asarray(times, dtype=float)
    noise = np.asarray(noise, dtype=float)
    W = np.concatenate([np.zeros(noise.shape[:-1] + (1,)), np.cumsum(noise, axis=-1)], axis=-1)
    return x10 * np.exp((a - 0.5 * sigma**2) * (times - times[0]) + sigma * W)


def sde_residual(sys, x, u, dW, dt):
    """Max over steps of ``|E dx - (A x + B u) dt - (C x + D u) dW|`` for one path.

    ``x``: ``(steps+1, n)``, ``u``: ``(steps+1, r)``, ``dW``: ``(steps,)``.
    """
    E, A, B, C, D = (np.asarray(getattr(sys, k), dtype=float) for k in "EABCD")
    dx = np.diff(x, axis=0)
    lhs = dx @ E.T
    rhs = (x[:-1] @ A.T + u[:-1] @ B.T) * dt + (x[:-1] @ C.T + u[:-1] @ D.T) * dW[:, None]
    return float(np.abs(lhs - rhs).max())
