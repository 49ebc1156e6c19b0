import math

import numpy as np
import pytest

from sslq.errors import Divergence, FactorizationFailure, GainBlowup, NoConvergence
from sslq.reduction import normal_lq
from sslq.riccati import (are_gain, are_residual, feedback_finite, feedback_infinite,
                          finite_residuals, interpolate_gain, solve_are, solve_finite,
                          solve_finite_adaptive)

from instances import bounded_normal_lq, random_normal_lq


def tanh_problem(T=1.0):
    return normal_lq(A1=[[0.0]], B1=[[1.0]], Qhat=[[1.0]], Rhat=[[1.0]], Hhat=[[0.0]], x10=[1.0])


def test_zero_cost_gives_zero():
    red = normal_lq(A1=[[0.3, 1], [0, -1]], B1=[[1.0], [0.5]], x10=[1.0, 2.0])
    sol = solve_finite(red, 1.0, 64)
    assert np.all(sol.P == 0) and np.all(sol.Psi == 0) and sol.value == 0
    F = feedback_finite(sol, np.array([[1.0, 2.0]]), np.eye(2))
    assert np.all(F == np.array([[1.0, 2.0]]))


def test_tanh_closed_form():
    sol = solve_finite(tanh_problem(), 1.0, 1024)
    assert sol.P0[0, 0] == pytest.approx(math.tanh(1.0), abs=1e-8)
    assert np.allclose(sol.P[:, 0, 0], np.tanh(1.0 - sol.grid), atol=1e-8)
    assert sol.value == pytest.approx(0.5 * math.tanh(1.0), abs=1e-8)


def test_rk4_order():
    red = tanh_problem()
    err = [abs(solve_finite(red, 1.0, m).P0[0, 0] - math.tanh(1.0)) for m in (16, 32)]
    assert 12 <= err[0] / err[1] <= 20


def test_terminal_and_symmetry(red61):
    sol = solve_finite(red61, 1.0)
    assert np.array_equal(sol.P[-1], red61.Hhat)
    drift = np.abs(sol.P - np.transpose(sol.P, (0, 2, 1))).max()
    assert drift <= 1e-10
    assert min(np.linalg.eigvalsh(P).min() for P in sol.P) >= -1e-8


def test_ex61_integrators_agree(red61):
    sol = solve_finite(red61, 1.0)
    for method in ("DOP853", "RK45"):
        ref = solve_finite_adaptive(red61, 1.0, rtol=1e-11, atol=1e-13, method=method)
        assert np.abs(sol.P0 - ref.P0).max() <= 1e-6


def test_ex61_gain_structure(red61):
    sol = solve_finite(red61, 1.0)
    P = sol.P
    assert np.allclose(sol.Psi[:, 0, :], np.stack([-2 * P[:, 1, 0], -2 * P[:, 1, 1]], axis=1),
                       atol=1e-12)
    F = feedback_finite(sol, red61.K, red61.N1)
    assert np.allclose(F[:, 0, :2], -sol.Psi[:, 0, :], atol=1e-12)
    assert np.allclose(F[:, 0, 2], 1.0)
    x0 = red61.system.x0
    v = 0.5 * x0 @ red61.M1.T @ np.vstack([np.eye(2), np.zeros((1, 2))]) @ sol.P0 \
        @ np.hstack([np.eye(2), np.zeros((2, 1))]) @ red61.M1 @ x0
    assert sol.value == pytest.approx(v, rel=1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_feedback_matches_direct_multiply(seed):
    rng = np.random.default_rng(seed)
    h, r, n = 2, 2, 4
    red = random_normal_lq(rng, h, r)
    sol = solve_finite(red, 0.5, 32)
    K = rng.standard_normal((r, n))
    N1 = rng.standard_normal((n, n))
    F = feedback_finite(sol, K, N1)
    Ninv = np.linalg.inv(N1)
    for i in (0, 7, 32):
        for a in range(r):
            for b in range(n):
                expect = K[a, b] - sum(sol.Psi[i, a, k] * Ninv[k, b] for k in range(h))
                assert F[i, a, b] == pytest.approx(expect, rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("seed", range(40))
def test_residual_small_at_512_steps(seed):
    rng = np.random.default_rng(seed)
    red = bounded_normal_lq(rng, int(rng.integers(1, 5)), int(rng.integers(1, 4)))
    sol = solve_finite(red, 1.0, 512)
    assert finite_residuals(red, sol).max() <= 1e-6
    assert np.abs(sol.P - np.transpose(sol.P, (0, 2, 1))).max() <= 1e-10


@pytest.mark.parametrize("seed", range(12))
def test_residual_is_fourth_order_on_unbounded_data(seed):
    # unscaled Gaussian data can exceed the fixed bound at 512 steps; the defect still shrinks as dt^4
    rng = np.random.default_rng(seed)
    red = random_normal_lq(rng, int(rng.integers(1, 5)), int(rng.integers(1, 4)))
    r1, r2 = (finite_residuals(red, solve_finite(red, 1.0, m)).max() for m in (512, 1024))
    if r1 > 1e-9:
        assert 12 <= r1 / r2 <= 20
    else:
        assert r2 <= 1e-9


@pytest.mark.parametrize("seed", range(8))
def test_loewner_monotone_in_horizon(seed):
    rng = np.random.default_rng(seed)
    red = random_normal_lq(rng, int(rng.integers(1, 4)), 2, finite=False)
    P = [solve_finite(red, T, int(256 * T)).P0 for T in (1, 2, 4, 8)]
    for a, b in zip(P, P[1:]):
        assert np.linalg.eigvalsh(b - a).min() >= -1e-8


def test_are_ex62(red62):
    are = solve_are(red62)
    p = 2 * math.cos(2 * math.pi / 9) - 1
    assert are.P0[0, 0] == pytest.approx(p, abs=1e-8)
    assert abs(are.P0[0, 0] ** 3 + 3 * are.P0[0, 0] ** 2 - 1) <= 1e-10
    lam = are.Lambda0.ravel()
    assert lam == pytest.approx([-(1 - 1 / (2 * math.cos(2 * math.pi / 9))), -p, 0], abs=1e-9)
    assert are.monotone and are.value == pytest.approx(p, abs=1e-8)
    F = feedback_infinite(are, red62)
    assert np.allclose(F, are.Lambda0 @ np.array([[1.0, 0, 0]]))


def test_are_scalar_quadratic():
    red = normal_lq(A1=[[-1.0]], B1=[[1.0]], Qhat=[[1.0]], Rhat=[[1.0]], x10=[1.0])
    are = solve_are(red)
    assert are.P0[0, 0] == pytest.approx(math.sqrt(2) - 1, abs=1e-8)
    assert are.Lambda0[0, 0] == pytest.approx(-(math.sqrt(2) - 1), abs=1e-8)


def test_are_zero_weight():
    red = normal_lq(A1=[[-1.0, 0.5], [0, -2]], B1=[[1.0], [0.0]], x10=[1.0, 1.0])
    are = solve_are(red)
    assert np.all(are.P0 == 0) and np.all(are.Lambda0 == 0) and are.value == 0
    assert np.all(feedback_infinite(are, red) == red.K)


@pytest.mark.parametrize("seed", range(6))
def test_are_stationary_fixed_point(seed):
    rng = np.random.default_rng(seed)
    red = random_normal_lq(rng, int(rng.integers(1, 4)), 2, finite=False)
    are = solve_are(red)
    assert np.abs(are_residual(red, are.P0)).max() <= 1e-8 * max(1, np.abs(are.P0).max())
    from dataclasses import replace

    sol = solve_finite(replace(red, Hhat=are.P0), 1.0, 256)
    assert np.abs(sol.P - are.P0).max() <= 1e-7
    assert np.allclose(are.Lambda0, are_gain(red, are.P0))
    for a, b in zip(are.iterates, are.iterates[1:]):
        assert np.linalg.eigvalsh(b - a).min() >= -1e-8 * max(1, np.abs(b).max())


def test_are_feedback_matches_oracle():
    rng = np.random.default_rng(11)
    red = random_normal_lq(rng, 2, 2, finite=False)
    are = solve_are(red)
    Rt = red.Rhat + red.Dtilde1.T @ are.P0 @ red.Dtilde1
    lam = -np.linalg.solve(Rt, red.B1.T @ are.P0 + red.Dtilde1.T @ are.P0 @ red.Ctilde1)
    assert np.allclose(are.Lambda0, lam, atol=1e-12)
    F = feedback_infinite(are, red)
    assert np.allclose(F, red.K + (lam - np.linalg.solve(red.Rhat, red.S)), atol=1e-12)


def test_errors():
    blow = normal_lq(A1=[[20.0]], B1=[[0.0]], Hhat=[[1.0]], x10=[1.0])
    with pytest.raises(GainBlowup):
        solve_finite(blow, 1.0, 64)
    bad = normal_lq(A1=[[0.0]], B1=[[1.0]], Rhat=[[-1.0]], x10=[1.0])
    with pytest.raises(FactorizationFailure):
        solve_finite(bad, 1.0, 64)
    unstab = normal_lq(A1=[[1.0]], B1=[[0.0]], Qhat=[[1.0]], x10=[1.0])
    with pytest.raises(Divergence):
        solve_are(unstab, max_T=100)
    slow = normal_lq(A1=[[-0.01]], B1=[[0.0]], Qhat=[[1.0]], x10=[1.0])
    with pytest.raises(NoConvergence):
        solve_are(slow, max_T=3)
    with pytest.raises(ValueError):
        solve_finite(tanh_problem(), 1.0, 8)


def test_interpolate_gain():
    grid = np.array([0.0, 1.0, 2.0])
    F = np.array([[[0.0]], [[2.0]], [[4.0]]])
    assert interpolate_gain(grid, F, 0.25)[0, 0] == pytest.approx(0.5)
    assert interpolate_gain(grid, F, 2.0)[0, 0] == pytest.approx(4.0)
    assert interpolate_gain(grid, F, 1.5)[0, 0] == pytest.approx(3.0)
