import numpy as np
import pytest

from sslq.errors import AssumptionViolated, DimensionError, KConditionsFailed
from sslq.pencil import is_regular
from sslq.reduction import (LQWeights, assemble, check_assumptions, close_loop, lift_matrix,
                            rank_condition_matrix, suggest_feedback, verify_k)
from sslq.system import SingularSystem


def test_close_loop_zero_gain(ex62):
    sys = ex62.system
    cl = close_loop(sys, np.zeros((3, 3)))
    for k in "EABCD":
        assert np.array_equal(getattr(cl, k), getattr(sys, k))


def test_close_loop_ex61(ex61):
    sys = ex61.system
    cl = close_loop(sys, np.array([[0.0, 0, 1]]))
    expected = sys.A.copy()
    expected[:, 2] += sys.B[:, 0]
    assert np.array_equal(cl.A, expected)
    assert np.array_equal(cl.C, sys.D @ np.array([[0.0, 0, 1]]))


@pytest.mark.parametrize("seed", range(5))
def test_close_loop_matches_direct_product(seed):
    rng = np.random.default_rng(seed)
    n, r = 4, 2
    sys = SingularSystem(*(rng.standard_normal(s) for s in ((n, n), (n, n), (n, r), (n, n),
                                                            (n, r), (n,))))
    K = rng.standard_normal((r, n))
    cl = close_loop(sys, K)
    for i in range(n):
        for j in range(n):
            assert cl.A[i, j] == pytest.approx(sys.A[i, j] + sum(sys.B[i, k] * K[k, j]
                                                                 for k in range(r)))
    with pytest.raises(DimensionError):
        close_loop(sys, np.zeros((n, r)))


def test_verify_k_examples(ex61, ex62):
    c = ex62.certificate
    assert verify_k(ex62.system, c.K, c.M1, c.N1, c.block_sizes).well_posed
    c = ex61.certificate
    assert verify_k(ex61.system, c.K, c.M1, c.N1, c.block_sizes).well_posed
    assert not verify_k(ex61.system, np.zeros((1, 3)), c.M1, c.N1, c.block_sizes).well_posed
    assert not is_regular(ex61.system.pencil).regular
    assert is_regular(close_loop(ex61.system, c.K).pencil).regular


def test_assemble_ex62(red62):
    assert red62.h == 1
    assert red62.Qhat == pytest.approx(np.eye(1))
    assert np.allclose(red62.S, 0) and red62.S.shape == (3, 1)
    assert red62.Rhat == pytest.approx(np.diag([1.0, 1, 2]))
    assert red62.Atilde1 == pytest.approx(-np.eye(1))
    assert red62.Ctilde1 == pytest.approx(np.eye(1))
    assert red62.Dtilde1 == pytest.approx(np.array([[1.0, 0, 0]]))
    assert red62.Qtilde == pytest.approx(np.eye(1))
    assert red62.x10 == pytest.approx(np.array([1.0]))


def test_assemble_ex61(red61):
    assert red61.h == 2
    assert red61.Rhat == pytest.approx(np.eye(1))
    assert np.allclose(red61.Dtilde1, 0, atol=1e-12) and red61.Dtilde1.shape == (2, 1)
    assert np.allclose(red61.S, 0, atol=1e-12) and red61.S.shape == (1, 2)
    assert red61.Qhat == pytest.approx(np.eye(2))
    assert red61.Hhat == pytest.approx(np.array([[5.0, 2], [2, 2]]))
    assert red61.x10 == pytest.approx(np.array([1.0, 0.0]))


def test_assemble_normal_system():
    rng = np.random.default_rng(3)
    n, r = 3, 2
    sys = SingularSystem(np.eye(n), rng.standard_normal((n, n)), rng.standard_normal((n, r)),
                         np.zeros((n, n)), rng.standard_normal((n, r)), rng.standard_normal(n))
    Q, R = np.diag([1.0, 2, 3]), np.diag([4.0, 5])
    red = assemble(sys, np.zeros((r, n)), np.eye(n), np.eye(n), (), LQWeights(Q, R, Q, 1.0))
    assert red.Qhat == pytest.approx(Q) and red.Rhat == pytest.approx(R)
    assert np.allclose(red.S, 0) and red.B2.shape == (0, r)


def test_assemble_raises(ex61, ex62):
    c = ex61.certificate
    with pytest.raises(KConditionsFailed) as exc:
        assemble(ex61.system, np.zeros((1, 3)), c.M1, c.N1, c.block_sizes, ex61.weights)
    assert "A_canonical" in exc.value.failed
    c = ex62.certificate
    w = LQWeights(np.eye(3), np.diag([0.0, 1, 1]))
    with pytest.raises(AssumptionViolated) as exc:
        assemble(ex62.system, c.K, c.M1, c.N1, c.block_sizes, w)
    assert set(exc.value.failed) == {"H2", "H2'"}


def test_weighted_blocks_reproduce_congruence(red61, red62):
    for red in (red61, red62):
        L = red.coordinate_map()
        W = L.T @ np.block([[red.weights.Q, np.zeros((red.n, red.r))],
                            [np.zeros((red.r, red.n)), red.weights.R]]) @ L
        h = red.h
        assert np.allclose(W[:h, :h], red.Qhat, atol=1e-12)
        assert np.allclose(W[h:, :h], red.S, atol=1e-12)
        assert np.allclose(W[h:, h:], red.Rhat, atol=1e-12)


def _random_pieces(rng, n, r, h):
    N1 = rng.standard_normal((n, n))
    K = rng.standard_normal((r, n))
    B2 = rng.standard_normal((n - h, r))
    return N1, K, B2


@pytest.mark.parametrize("seed", range(10))
def test_schur_identity(seed):
    rng = np.random.default_rng(seed)
    n, r, h = 4, 2, 2
    N1, K, B2 = _random_pieces(rng, n, r, h)
    L = lift_matrix(N1, K, B2)
    Wt = np.block([[np.eye(n), np.zeros((n, r))], [np.zeros((r, n)), np.eye(r)]])
    W = L.T @ Wt @ L
    Qh, S, Rh = W[:h, :h], W[h:, :h], W[h:, h:]
    Qt = Qh - S.T @ np.linalg.solve(Rh, S)
    T = np.block([[np.eye(h), np.zeros((h, r))], [-np.linalg.solve(Rh, S), np.eye(r)]])
    out = T.T @ W @ T
    target = np.block([[Qt, np.zeros((h, r))], [np.zeros((r, h)), Rh]])
    assert np.abs(out - target).max() <= 1e-12 * np.abs(W).max()


@pytest.mark.parametrize("seed", range(10))
def test_pointwise_cost_equivalence(seed):
    rng = np.random.default_rng(seed)
    n, r, h = 5, 2, 3
    N1, K, B2 = _random_pieces(rng, n, r, h)
    Q = np.diag(rng.uniform(0.5, 2, n))
    R = np.diag(rng.uniform(0.5, 2, r))
    L = lift_matrix(N1, K, B2)
    W = L.T @ np.block([[Q, np.zeros((n, r))], [np.zeros((r, n)), R]]) @ L
    for _ in range(5):
        x1, v = rng.standard_normal(h), rng.standard_normal(r)
        x = N1 @ np.concatenate([x1, -B2 @ v])
        u = K @ x + v
        z = np.concatenate([x1, v])
        assert x @ Q @ x + u @ R @ u == pytest.approx(z @ W @ z, rel=1e-12)


def test_assumption_examples(ex61, red61):
    rep = check_assumptions(ex61.system, red61.K, red61.N1, red61.B2, ex61.weights)
    assert rep["H1"] and rep["sufficient"]
    n, r = 3, 2
    sys = SingularSystem(np.eye(n), np.eye(n), np.zeros((n, r)), np.zeros((n, n)),
                         np.zeros((n, r)), np.zeros(n))
    rep = check_assumptions(sys, np.zeros((r, n)), np.eye(n), np.zeros((1, r)),
                            LQWeights(np.zeros((n, n)), np.eye(r), np.zeros((n, n)), 1.0))
    assert not rep["H1"] and rep["H1'"] and rep["sufficient"]


def test_rank_condition_violation_detected():
    # I + K N1 (0; -B2) = I - K[:, h:] B2, singular when K[:, h:] B2 = I on one direction
    n, r, h = 3, 1, 2
    B2 = np.array([[1.0]])
    K = np.array([[0.0, 0.0, 1.0]])
    Rc = rank_condition_matrix(K, np.eye(n), B2)
    assert np.linalg.svd(Rc, compute_uv=False).min() < 1e-12
    sys = SingularSystem(np.eye(n), np.eye(n), np.zeros((n, r)), np.zeros((n, n)),
                         np.zeros((n, r)), np.zeros(n))
    w = LQWeights(np.diag([1.0, 1, 0]), np.eye(r), None, None)
    rep = check_assumptions(sys, K, np.eye(n), B2, w, "infinite")
    assert not rep["H2"] and not rep["H2'"] and not rep["sufficient"]


@pytest.mark.parametrize("seed", range(100))
def test_rhat_positive_when_assumptions_hold(seed):
    rng = np.random.default_rng(seed)
    n, r = int(rng.integers(2, 6)), int(rng.integers(1, 4))
    h = int(rng.integers(0, n))
    N1, K, B2 = _random_pieces(rng, n, r, h)
    if seed % 2:
        Q = np.diag(rng.uniform(0.1, 2, n))
    else:
        G = rng.standard_normal((n, n - 1))
        Q = G @ G.T  # singular PSD, leaves (H1)' to carry the load
    R = np.diag(rng.uniform(0.1, 2, r))
    sys = SingularSystem(np.eye(n), np.eye(n), np.zeros((n, r)), np.zeros((n, n)),
                         np.zeros((n, r)), np.zeros(n))
    rep = check_assumptions(sys, K, N1, B2, LQWeights(Q, R, np.eye(n), 1.0))
    L = lift_matrix(N1, K, B2)
    W = L.T @ np.block([[Q, np.zeros((n, r))], [np.zeros((r, n)), R]]) @ L
    if rep["H1"] or rep["H1'"]:
        assert np.linalg.eigvalsh(W[h:, h:]).min() > 0


def test_suggest_feedback_ex61(ex61):
    s = suggest_feedback(ex61.system)
    assert s is not None and s.heuristic
    assert verify_k(ex61.system, s.K, s.M1, s.N1, s.block_sizes).well_posed
    red = assemble(ex61.system, s.K, s.M1, s.N1, s.block_sizes, ex61.weights)
    assert red.h == 2
