import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sslq import problem as pr
from sslq.errors import ProblemFileError
from sslq.reduction import LQWeights
from sslq.system import SingularSystem

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@st.composite
def problem_files(draw):
    n = draw(st.integers(1, 4))
    r = draw(st.integers(1, 3))
    mat = lambda shape: draw(arrays(np.float64, shape, elements=finite))  # noqa: E731
    sys = SingularSystem(mat((n, n)), mat((n, n)), mat((n, r)), mat((n, n)), mat((n, r)),
                         mat((n,)))
    weights = None
    if draw(st.booleans()):
        G = mat((n, n)) % 7
        weights = LQWeights(G @ G.T, np.eye(r) * draw(st.floats(0.1, 10)),
                            None if draw(st.booleans()) else np.eye(n),
                            draw(st.one_of(st.none(), st.floats(0.1, 10))))
    cert = None
    if draw(st.booleans()):
        cert = pr.Certificate(mat((r, n)), mat((n, n)), mat((n, n)), (1,) * draw(st.integers(0, n)))
    return pr.ProblemFile(sys, weights, cert, {"seed": draw(st.integers(0, 2**31))}, "rt")


def _same(a, b):
    return a.shape == b.shape and np.array_equal(np.asarray(a, float), np.asarray(b, float))


@settings(max_examples=80, deadline=None)
@given(problem_files())
def test_round_trip_lossless(pf):
    back = pr.loads(pr.dumps(pf))
    for k in "EABCD":
        assert _same(getattr(pf.system, k), getattr(back.system, k))
    assert _same(pf.system.x0, back.system.x0)
    if pf.weights is None:
        assert back.weights is None
    else:
        for k in "QRH":
            a, b = getattr(pf.weights, k), getattr(back.weights, k)
            assert (a is None and b is None) or _same(a, b)
        assert pf.weights.T == back.weights.T
    if pf.certificate is None:
        assert back.certificate is None
    else:
        for k in ("K", "M1", "N1"):
            assert _same(getattr(pf.certificate, k), getattr(back.certificate, k))
        assert pf.certificate.block_sizes == back.certificate.block_sizes
    assert back.options == pf.options and back.name == pf.name


@settings(max_examples=50, deadline=None)
@given(st.lists(st.fractions(max_denominator=50), min_size=1, max_size=9))
def test_exact_entries_round_trip(vals):
    a = np.empty((1, len(vals)), dtype=object)
    a[0, :] = vals
    enc = pr.encode_matrix(a)
    back = pr.parse_matrix(json.loads(json.dumps(enc)), exact=True)
    assert list(back.ravel()) == vals


def test_bundled_examples_load():
    for name in pr.BUNDLED:
        pf = pr.load_bundled(name)
        assert pf.name == name and pf.system.n == 3
    pf = pr.load_bundled("ex61", exact=True)
    assert pf.certificate.M1[0, 0] == Fraction(-1, 5)
    assert pf.certificate.block_sizes == (1,)
    with pytest.raises(ProblemFileError):
        pr.bundled_path("ex99")


def test_nested_lists_and_rational_strings():
    m = pr.parse_matrix({"rows": 2, "cols": 2, "data": [[1, "1/3"], [0, 2.5]]})
    assert m.dtype == float and m[0, 1] == pytest.approx(1 / 3)
    m = pr.parse_matrix({"rows": 1, "cols": 2, "data": [1, "1/3"]}, exact=True)
    assert m[0, 1] == Fraction(1, 3)


@pytest.mark.parametrize("bad", [
    "{not json",
    "[]",
    '{"system": {}}',
    '{"system": {"E": {"rows": 1, "cols": 1, "data": [1, 2]}}}',
])
def test_malformed_rejected(bad):
    with pytest.raises(ProblemFileError):
        pr.loads(bad)


def test_malformed_entries_and_dimensions():
    d = pr.to_dict(pr.load_bundled("ex62"))
    d["system"]["A"]["data"][0] = "x/y"
    with pytest.raises(ProblemFileError):
        pr.from_dict(d)
    d = pr.to_dict(pr.load_bundled("ex62"))
    d["system"]["B"] = {"rows": 2, "cols": 3, "data": [0] * 6}
    with pytest.raises(ProblemFileError):
        pr.from_dict(d)
    d = pr.to_dict(pr.load_bundled("ex62"))
    d["weights"]["Q"] = {"rows": 2, "cols": 2, "data": [1, 0, 0, 1]}
    with pytest.raises(ProblemFileError):
        pr.from_dict(d)
    d["system"]["A"]["data"][0] = True
    with pytest.raises(ProblemFileError):
        pr.from_dict(d)


def test_save_and_load(tmp_path):
    pf = pr.load_bundled("ex61", exact=True)
    path = tmp_path / "p.json"
    pr.save(pf, path)
    back = pr.load(path, exact=True)
    assert np.all(back.certificate.M1 == pf.certificate.M1)
    with pytest.raises(ProblemFileError):
        pr.load(tmp_path / "missing.json")
