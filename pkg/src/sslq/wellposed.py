"""Well-posedness of singular SDEs through canonical-form certificates.

A certificate is a pair ``(M, N)`` putting ``(E, A)`` into Weierstrass form.
Given one from :func:`sslq.pencil.weierstrass`, the only remaining freedom
that keeps ``diag(I_h, G)`` and ``diag(A1, I)`` fixed is
``M <- diag(X1, X) M``, ``N <- N diag(inv(X1), inv(X))`` with ``X`` commuting
with ``G``.  The fast-input pattern is searched over that centralizer; every
other condition is invariant under it.

Condition identifiers used in ``failed_conditions``:

``pencil_regular``            ``det(A + lambda E)`` is not identically zero
``E_canonical``               ``M E N = diag(I_h, G)``
``A_canonical``               ``M A N = diag(A1, I)``
``fast_input_pattern``        only the first row of each block of ``B2`` is nonzero
``fast_noise_zero``           ``D2 = 0``  (case ``C = 0``)
``diffusion_coupling_zero``   ``C21 = 0``
``fast_diffusion_match``      ``C22 B2 = D2``
``fast_noise_equals_input``   ``D2 = B2``  (case ``C = A``)
``initial_condition``         ``(0  I) M x0 = 0``
"""

from dataclasses import dataclass, field

import numpy as np

from . import _linalg as la
from .errors import CNotEqualA, CNotZero, DimensionError, NotRegular, SingularTransform
from .pencil import is_regular, nilpotent_centralizer_basis, shift_block_matrix, weierstrass
from .system import SingularSystem

WELL_POSED = "well_posed"
NOT_WELL_POSED = "not_well_posed"
INCONCLUSIVE = "inconclusive"

CASE_CONDITIONS = {
    "C_zero": ("fast_input_pattern", "fast_noise_zero", "initial_condition"),
    "strongly_regular": ("fast_input_pattern", "diffusion_coupling_zero",
                         "fast_diffusion_match", "initial_condition"),
    "C_equals_A": ("fast_input_pattern", "fast_noise_equals_input", "initial_condition"),
}

DEFAULT_SEARCH_SAMPLES = 32


@dataclass
class StronglyRegularForm:
    M: np.ndarray
    N: np.ndarray
    h: int
    block_sizes: tuple
    G: np.ndarray
    A1: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C11: np.ndarray
    C12: np.ndarray
    C21: np.ndarray
    C22: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    E_hat: np.ndarray = None
    A_hat: np.ndarray = None


@dataclass
class WellPosednessVerdict:
    status: str
    case_used: str
    form: StronglyRegularForm = None
    failed_conditions: list = field(default_factory=list)
    initial_condition_ok: bool = False
    conditions: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def well_posed(self):
        return self.status == WELL_POSED


def _split(sys, M, N, h, block_sizes):
    ex = la.is_exact(M)
    E, A, B, C, D = (la.convert(getattr(sys, k), ex) for k in "EABCD")
    Eh, Ah, Ch = M @ E @ N, M @ A @ N, M @ C @ N
    MB, MD = M @ B, M @ D
    return StronglyRegularForm(
        M=M, N=N, h=h, block_sizes=tuple(block_sizes),
        G=shift_block_matrix(block_sizes, ex),
        A1=Ah[:h, :h], B1=MB[:h], B2=MB[h:],
        C11=Ch[:h, :h], C12=Ch[:h, h:], C21=Ch[h:, :h], C22=Ch[h:, h:],
        D1=MD[:h], D2=MD[h:], E_hat=Eh, A_hat=Ah)


def non_leading_rows(block_sizes):
    """Row indices (within the fast part) that are not the first row of a block."""
    rows, off = [], 0
    for m in block_sizes:
        rows += list(range(off + 1, off + m))
        off += m
    return rows


def _scale(*mats):
    return max([1.0] + [la.norm(m) for m in mats])


def _check(form, sys, names, tol=None):
    ex = la.is_exact(form.M)
    x0 = la.convert(sys.x0, ex)
    h = form.h
    s_in = _scale(form.B2, form.D2, form.C22)
    out = {}
    for name in names:
        if name == "E_canonical":
            target = la.block_diag(la.eye(h, ex), form.G)
            ok = la.is_zero(form.E_hat - target, _scale(form.E_hat), tol)
        elif name == "A_canonical":
            target = la.block_diag(form.A1, la.eye(form.M.shape[0] - h, ex))
            ok = la.is_zero(form.A_hat - target, _scale(form.A_hat), tol)
        elif name == "fast_input_pattern":
            ok = la.is_zero(form.B2[non_leading_rows(form.block_sizes)], _scale(form.B2), tol)
        elif name == "fast_noise_zero":
            ok = la.is_zero(form.D2, _scale(form.D1, form.D2), tol)
        elif name == "diffusion_coupling_zero":
            ok = la.is_zero(form.C21, _scale(form.C11, form.C21, form.C22), tol)
        elif name == "fast_diffusion_match":
            ok = la.is_zero(form.C22 @ form.B2 - form.D2, s_in * _scale(form.B2), tol)
        elif name == "fast_noise_equals_input":
            ok = la.is_zero(form.D2 - form.B2, s_in, tol)
        elif name == "initial_condition":
            v = form.M @ x0
            ok = la.is_zero(v[h:], _scale(v), tol)
        else:
            raise KeyError(name)
        out[name] = bool(ok)
    return out


def _centralizer_search(form, rng, samples, tol=None):
    """Find invertible ``X`` in the centralizer of ``G`` with ``X B2`` in first-row pattern.

    Returns ``X`` or ``None``.  The identity is tried first; otherwise random
    elements of the linear subspace satisfying the row constraints are
    sampled until one is invertible.
    """
    ex = la.is_exact(form.M)
    q = form.M.shape[0] - form.h
    rows = non_leading_rows(form.block_sizes)
    if not rows or la.is_zero(form.B2[rows], _scale(form.B2), tol):
        return la.eye(q, ex)
    basis = nilpotent_centralizer_basis(form.block_sizes, ex)
    cols = [(X @ form.B2)[rows].reshape(-1) for X in basis]
    L = np.column_stack(cols)
    coeff_basis = la.null_space(L, tol, _scale(form.B2))
    k = coeff_basis.shape[1]
    if k == 0:
        return None
    for _ in range(samples):
        if ex:
            c = coeff_basis @ la.to_exact(rng.integers(-5, 6, size=k))
        else:
            c = coeff_basis @ rng.standard_normal(k)
        X = sum(ci * Xi for ci, Xi in zip(c, basis))
        if not la.is_singular(X, tol):
            return X
    return None


def _apply_fast_transform(sys, form, X):
    ex = la.is_exact(form.M)
    h = form.h
    M = la.block_diag(la.eye(h, ex), X) @ form.M
    N = form.N @ la.block_diag(la.eye(h, ex), la.inv(X))
    return _split(sys, M, N, h, form.block_sizes)


def _search_case(sys, case, exact, seed, samples, tol):
    exact = la.config.exact if exact is None else exact
    sys = sys.converted(exact)
    rng = np.random.default_rng(seed)
    reg = is_regular(sys.pencil, exact=exact)
    names = CASE_CONDITIONS[case]
    if not reg.regular:
        status = INCONCLUSIVE if case == "strongly_regular" else NOT_WELL_POSED
        return WellPosednessVerdict(status=status, case_used=case,
                                    failed_conditions=["pencil_regular"],
                                    conditions={"pencil_regular": False})
    try:
        wf = weierstrass(sys.pencil, exact=exact)
    except NotRegular:
        status = INCONCLUSIVE if case == "strongly_regular" else NOT_WELL_POSED
        return WellPosednessVerdict(status=status, case_used=case,
                                    failed_conditions=["pencil_regular"],
                                    conditions={"pencil_regular": False},
                                    notes=["Weierstrass split failed at this tolerance"])
    form = _split(sys, wf.M, wf.N, wf.h, wf.block_sizes)
    X = _centralizer_search(form, rng, samples, tol)
    notes = []
    if X is not None:
        form = _apply_fast_transform(sys, form, X)
    else:
        notes.append(f"no invertible centralizer element in {samples} samples")
    conds = {"pencil_regular": True}
    conds.update(_check(form, sys, names, tol))
    if X is None:
        conds["fast_input_pattern"] = False
    failed = [k for k, v in conds.items() if not v]
    if not failed:
        status = WELL_POSED
    elif case == "strongly_regular" and not conds["fast_input_pattern"]:
        status = INCONCLUSIVE
        notes.append("system is regular but not strongly regular")
    else:
        status = NOT_WELL_POSED
    return WellPosednessVerdict(status=status, case_used=case, form=form,
                                failed_conditions=failed,
                                initial_condition_ok=conds.get("initial_condition", False),
                                conditions=conds, notes=notes)


def _is_zero_matrix(a, exact):
    if exact or la.is_exact(a):
        return la.is_zero(la.to_exact(a))
    return la.is_zero(a, 1.0, la.config.tol_rank)


def check_c_zero(sys: SingularSystem, exact=None, seed=0,
                 samples=DEFAULT_SEARCH_SAMPLES, tol=None) -> WellPosednessVerdict:
    """Necessary-and-sufficient test for ``C = 0``."""
    ex = la.config.exact if exact is None else exact
    if not _is_zero_matrix(sys.C, ex):
        raise CNotZero("check_c_zero requires C = 0")
    return _search_case(sys, "C_zero", exact, seed, samples, tol)


def check_strongly_regular(sys: SingularSystem, exact=None, seed=0,
                           samples=DEFAULT_SEARCH_SAMPLES, tol=None) -> WellPosednessVerdict:
    """Test for general ``C``.

    Decisive inside the strongly regular class.  A system outside it gets
    ``inconclusive``, since such systems may still be well posed.
    """
    return _search_case(sys, "strongly_regular", exact, seed, samples, tol)


def check_c_equals_a(sys: SingularSystem, exact=None, seed=0,
                     samples=DEFAULT_SEARCH_SAMPLES, tol=None) -> WellPosednessVerdict:
    """Necessary-and-sufficient test for ``C = A``."""
    ex = la.config.exact if exact is None else exact
    diff = la.convert(sys.C, ex) - la.convert(sys.A, ex)
    if not _is_zero_matrix(diff, ex):
        raise CNotEqualA("check_c_equals_a requires C = A")
    return _search_case(sys, "C_equals_A", exact, seed, samples, tol)


def case_for(sys, exact=None):
    ex = la.config.exact if exact is None else exact
    if _is_zero_matrix(sys.C, ex):
        return "C_zero"
    if _is_zero_matrix(la.convert(sys.C, ex) - la.convert(sys.A, ex), ex):
        return "C_equals_A"
    return "strongly_regular"


def analyze(sys: SingularSystem, exact=None, seed=0, samples=DEFAULT_SEARCH_SAMPLES,
            tol=None) -> WellPosednessVerdict:
    """Dispatch to the sharpest applicable checker."""
    case = case_for(sys, exact)
    fn = {"C_zero": check_c_zero, "C_equals_A": check_c_equals_a,
          "strongly_regular": check_strongly_regular}[case]
    return fn(sys, exact=exact, seed=seed, samples=samples, tol=tol)


def verify_certificate(sys: SingularSystem, M, N, block_sizes, exact=None,
                       tol=None) -> WellPosednessVerdict:
    """Check a user-supplied ``(M, N, block_sizes)`` condition by condition."""
    exact = la.config.exact if exact is None else exact
    sys = sys.converted(exact)
    M = la.convert(M, exact)
    N = la.convert(N, exact)
    n = sys.n
    if M.shape != (n, n) or N.shape != (n, n):
        raise DimensionError("M and N must be n x n")
    if la.is_singular(M, tol) or la.is_singular(N, tol):
        raise SingularTransform("certificate transform is singular")
    block_sizes = tuple(int(m) for m in block_sizes)
    if any(m < 1 for m in block_sizes) or sum(block_sizes) > n:
        raise DimensionError(f"invalid block sizes {block_sizes} for n={n}")
    h = n - sum(block_sizes)
    form = _split(sys, M, N, h, block_sizes)
    case = case_for(sys, exact)
    names = ("E_canonical", "A_canonical") + CASE_CONDITIONS[case]
    conds = _check(form, sys, names, tol)
    failed = [k for k, v in conds.items() if not v]
    return WellPosednessVerdict(status=WELL_POSED if not failed else NOT_WELL_POSED,
                                case_used="verify_certificate", form=form,
                                failed_conditions=failed,
                                initial_condition_ok=conds["initial_condition"],
                                conditions=conds, notes=[f"conditions of case {case}"])
