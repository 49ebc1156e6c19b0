"""The controlled stochastic singular system ``E dx = (Ax + Bu)dt + (Cx + Du)dW``."""

from dataclasses import dataclass

import numpy as np

from . import _linalg as la
from .errors import DimensionError
from .pencil import Pencil


@dataclass(frozen=True)
class SingularSystem:
    """System matrices plus the initial value ``x0`` of ``E x(0)``.

    ``E, A, C`` are ``n x n``; ``B, D`` are ``n x r``.  Arrays may be float or
    exact ``Fraction`` object arrays.
    """

    E: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        exact = any(la.is_exact(np.asarray(getattr(self, k))) for k in "EABCD")
        for name in ("E", "A", "B", "C", "D", "x0"):
            v = np.asarray(getattr(self, name))
            if name in "BD" and v.ndim == 1:
                v = v.reshape(-1, 1)
            v = la.to_exact(v) if exact else np.asarray(v, dtype=float)
            object.__setattr__(self, name, v)
        n = self.E.shape[0]
        if self.x0.ndim != 1:
            object.__setattr__(self, "x0", self.x0.reshape(-1))
        for name in ("E", "A", "C"):
            if getattr(self, name).shape != (n, n):
                raise DimensionError(f"{name} must be {n}x{n}, got {getattr(self, name).shape}")
        r = self.B.shape[1]
        for name in ("B", "D"):
            if getattr(self, name).shape != (n, r):
                raise DimensionError(f"{name} must be {n}x{r}, got {getattr(self, name).shape}")
        if self.x0.shape != (n,):
            raise DimensionError(f"x0 must have length {n}, got {self.x0.shape}")

    @property
    def n(self):
        return self.E.shape[0]

    @property
    def r(self):
        return self.B.shape[1]

    @property
    def exact(self):
        return la.is_exact(self.E)

    @property
    def pencil(self):
        return Pencil(self.E, self.A)

    @property
    def is_singular(self):
        return la.rank(self.E) < self.n

    def as_exact(self):
        return SingularSystem(*(la.to_exact(getattr(self, k)) for k in ("E", "A", "B", "C", "D", "x0")))

    def as_float(self):
        return SingularSystem(*(la.to_float(getattr(self, k)) for k in ("E", "A", "B", "C", "D", "x0")))

    def converted(self, exact):
        if exact and not self.exact:
            return self.as_exact()
        if not exact and self.exact:
            return self.as_float()
        return self

    def transform(self, U, V):
        """Restricted system equivalence: ``(UEV, UAV, UB, UCV, UD, Ux0)``."""
        U = la.convert(U, self.exact)
        V = la.convert(V, self.exact)
        return SingularSystem(U @ self.E @ V, U @ self.A @ V, U @ self.B,
                              U @ self.C @ V, U @ self.D, U @ self.x0)

    def replace(self, **kw):
        d = {k: getattr(self, k) for k in ("E", "A", "B", "C", "D", "x0")}
        d.update(kw)
        return SingularSystem(**d)
