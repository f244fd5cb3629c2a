"""Quadratic Hamiltonians, their linear flows, and the Moyal algebra of polynomial symbols.

Coordinates are ordered ``z = (p_1..p_d, q_1..q_d)`` throughout. A quadratic
Hamiltonian is stored as ``H(z) = z @ A @ z / 2``; the flow it generates is
linear, ``z_t = J_t z``, with ``J_t = expm(t K A)`` and ``K = [[0, -I], [I, 0]]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np
from scipy.linalg import expm

__all__ = [
    "QuadraticHamiltonian",
    "FlowJacobian",
    "PolynomialSymbol",
    "symplectic_form",
    "symplectic_adjoint",
    "flow_jacobian",
    "flow_point",
    "star_product",
    "moyal_bracket",
    "poisson_bracket",
]


def symplectic_form(dim: int = 1) -> np.ndarray:
    """Matrix ``S`` with ``z @ S @ z' = p.q' - q.p'``."""
    eye = np.eye(dim)
    zero = np.zeros((dim, dim))
    return np.block([[zero, eye], [-eye, zero]])


def _generator_kernel(dim: int) -> np.ndarray:
    eye = np.eye(dim)
    zero = np.zeros((dim, dim))
    return np.block([[zero, -eye], [eye, zero]])


def symplectic_adjoint(M: np.ndarray) -> np.ndarray:
    """Adjoint of ``M`` with respect to the symplectic form, ``S M^T S^{-1}``."""
    M = np.asarray(M, dtype=float)
    S = symplectic_form(M.shape[0] // 2)
    return S @ M.T @ S.T


@dataclass(frozen=True)
class QuadraticHamiltonian:
    """At most quadratic Hamiltonian ``H(z) = z.A.z / 2``.

    Parameters
    ----------
    A : array_like
        Symmetric ``(2d, 2d)`` coefficient matrix in ``(p, q)`` block order.
    hbar : float
        Reduced Planck constant carried along for quantum computations.
    """

    A: np.ndarray
    hbar: float = 1.0
    dim: int = field(init=False)

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] % 2:
            raise ValueError("A must be a square matrix of even size")
        if not np.allclose(A, A.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(A).max())):
            raise ValueError("A must be symmetric")
        if self.hbar < 0:
            raise ValueError("hbar must be nonnegative")
        A = 0.5 * (A + A.T)
        A.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "dim", A.shape[0] // 2)

    @classmethod
    def free(cls, m: float = 1.0, hbar: float = 1.0) -> "QuadraticHamiltonian":
        """Free particle ``p^2 / 2m``."""
        return cls.harmonic(m, 0.0, hbar)

    @classmethod
    def harmonic(cls, m: float = 1.0, omega: float = 1.0, hbar: float = 1.0) -> "QuadraticHamiltonian":
        """Oscillator ``p^2 / 2m + m omega^2 q^2 / 2``."""
        if m <= 0:
            raise ValueError("mass must be positive")
        return cls(np.diag([1.0 / m, m * omega**2]), hbar)

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", z, self.A, z)

    @property
    def generator(self) -> np.ndarray:
        """Matrix ``B`` of the linear equation of motion ``dz/dt = B z``."""
        return _generator_kernel(self.dim) @ self.A

    def with_hbar(self, hbar: float) -> "QuadraticHamiltonian":
        return QuadraticHamiltonian(self.A, hbar)


@dataclass(frozen=True)
class FlowJacobian:
    """Jacobian ``J`` of the Hamiltonian flow at time ``t``."""

    t: float
    J: np.ndarray

    def __matmul__(self, other):
        if isinstance(other, FlowJacobian):
            return FlowJacobian(self.t + other.t, self.J @ other.J)
        return self.J @ other

    @property
    def adjoint(self) -> np.ndarray:
        return symplectic_adjoint(self.J)


def flow_jacobian(H: QuadraticHamiltonian, t: float) -> FlowJacobian:
    """Jacobian of the flow of ``H`` after time ``t``."""
    t = float(t)
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    J = expm(t * H.generator)
    J.setflags(write=False)
    return FlowJacobian(t, J)


def flow_point(H: QuadraticHamiltonian, z0, t: float) -> np.ndarray:
    """Phase-space point reached from ``z0`` after time ``t``."""
    return np.asarray(z0, dtype=float) @ flow_jacobian(H, t).J.T


class PolynomialSymbol:
    """Polynomial phase-space function ``sum c[mu, nu] p^mu q^nu`` for one canonical pair.

    Coefficients are stored in a dense complex array indexed ``[mu, nu]``.
    """

    __slots__ = ("coef", "hbar")

    def __init__(self, coef, hbar: float = 1.0):
        c = np.atleast_2d(np.asarray(coef, dtype=complex))
        if c.ndim != 2:
            raise ValueError("coefficients must form a 2-d array")
        self.coef = _trim(c)
        self.coef.setflags(write=False)
        self.hbar = float(hbar)

    @classmethod
    def from_terms(cls, terms: dict, hbar: float = 1.0) -> "PolynomialSymbol":
        """Build from ``{(mu, nu): coefficient}``."""
        if not terms:
            return cls.zero(hbar)
        n_p = max(k[0] for k in terms) + 1
        n_q = max(k[1] for k in terms) + 1
        c = np.zeros((n_p, n_q), dtype=complex)
        for (mu, nu), v in terms.items():
            c[mu, nu] += v
        return cls(c, hbar)

    @classmethod
    def zero(cls, hbar: float = 1.0) -> "PolynomialSymbol":
        return cls(np.zeros((1, 1)), hbar)

    @classmethod
    def one(cls, hbar: float = 1.0) -> "PolynomialSymbol":
        return cls(np.ones((1, 1)), hbar)

    @classmethod
    def p(cls, hbar: float = 1.0) -> "PolynomialSymbol":
        return cls.from_terms({(1, 0): 1.0}, hbar)

    @classmethod
    def q(cls, hbar: float = 1.0) -> "PolynomialSymbol":
        return cls.from_terms({(0, 1): 1.0}, hbar)

    @property
    def degree(self) -> int:
        nz = np.argwhere(self.coef != 0)
        return int(nz.sum(axis=1).max()) if nz.size else 0

    def terms(self) -> dict:
        return {(int(i), int(j)): complex(self.coef[i, j]) for i, j in np.argwhere(self.coef != 0)}

    def __call__(self, p, q):
        p = np.asarray(p, dtype=complex)
        q = np.asarray(q, dtype=complex)
        out = np.zeros(np.broadcast(p, q).shape, dtype=complex)
        for (i, j), c in self.terms().items():
            out = out + c * p**i * q**j
        return out

    def derivative(self, n_p: int = 0, n_q: int = 0) -> "PolynomialSymbol":
        c = np.asarray(self.coef)
        for _ in range(n_p):
            if c.shape[0] == 1:
                return PolynomialSymbol.zero(self.hbar)
            c = c[1:, :] * np.arange(1, c.shape[0])[:, None]
        for _ in range(n_q):
            if c.shape[1] == 1:
                return PolynomialSymbol.zero(self.hbar)
            c = c[:, 1:] * np.arange(1, c.shape[1])[None, :]
        return PolynomialSymbol(c, self.hbar)

    def allclose(self, other, atol: float = 1e-12) -> bool:
        a, b = _pad(self.coef, _as_symbol(other, self.hbar).coef)
        return bool(np.allclose(a, b, rtol=0.0, atol=atol))

    def __add__(self, other):
        a, b = _pad(self.coef, _as_symbol(other, self.hbar).coef)
        return PolynomialSymbol(a + b, self.hbar)

    __radd__ = __add__

    def __neg__(self):
        return PolynomialSymbol(-self.coef, self.hbar)

    def __sub__(self, other):
        return self + (-_as_symbol(other, self.hbar))

    def __rsub__(self, other):
        return _as_symbol(other, self.hbar) - self

    def __mul__(self, other):
        """Pointwise product."""
        if np.isscalar(other):
            return PolynomialSymbol(self.coef * other, self.hbar)
        b = _as_symbol(other, self.hbar).coef
        a = self.coef
        out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1] + b.shape[1] - 1), dtype=complex)
        for i, j in np.argwhere(a != 0):
            out[i:i + b.shape[0], j:j + b.shape[1]] += a[i, j] * b
        return PolynomialSymbol(out, self.hbar)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        out = PolynomialSymbol.one(self.hbar)
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other):
        if not isinstance(other, PolynomialSymbol):
            return NotImplemented
        a, b = _pad(self.coef, other.coef)
        return bool(np.array_equal(a, b))

    def __repr__(self):
        parts = [f"({c:.6g})*p^{i}*q^{j}" for (i, j), c in sorted(self.terms().items())]
        return "PolynomialSymbol(" + (" + ".join(parts) or "0") + f", hbar={self.hbar})"


def _trim(c: np.ndarray) -> np.ndarray:
    rows = np.flatnonzero(np.any(c != 0, axis=1))
    cols = np.flatnonzero(np.any(c != 0, axis=0))
    if rows.size == 0:
        return np.zeros((1, 1), dtype=complex)
    return np.array(c[: rows[-1] + 1, : cols[-1] + 1], dtype=complex)


def _pad(a: np.ndarray, b: np.ndarray):
    shape = (max(a.shape[0], b.shape[0]), max(a.shape[1], b.shape[1]))
    out_a = np.zeros(shape, dtype=complex)
    out_b = np.zeros(shape, dtype=complex)
    out_a[: a.shape[0], : a.shape[1]] = a
    out_b[: b.shape[0], : b.shape[1]] = b
    return out_a, out_b


def _as_symbol(x, hbar: float) -> PolynomialSymbol:
    if isinstance(x, PolynomialSymbol):
        return x
    return PolynomialSymbol(np.full((1, 1), x, dtype=complex), hbar)


def _shared_hbar(f: PolynomialSymbol, g, hbar):
    if hbar is not None:
        return float(hbar)
    if isinstance(g, PolynomialSymbol) and g.hbar != f.hbar:
        raise ValueError(f"symbols carry different hbar ({f.hbar} vs {g.hbar})")
    return f.hbar


def _bidifferential(f: PolynomialSymbol, g: PolynomialSymbol, k: int) -> PolynomialSymbol:
    # k-th power of the Poisson bidifferential operator
    out = PolynomialSymbol.zero(f.hbar)
    for j in range(k + 1):
        sign = -1 if (k - j) % 2 else 1
        left = f.derivative(j, k - j)
        right = g.derivative(k - j, j)
        out = out + (sign * comb(k, j)) * (left * right)
    return out


def star_product(f: PolynomialSymbol, g: PolynomialSymbol, hbar: float | None = None) -> PolynomialSymbol:
    """Moyal product of two polynomial symbols.

    The series terminates since both factors are polynomials.
    """
    h = _shared_hbar(f, g, hbar)
    f = PolynomialSymbol(f.coef, h)
    g = PolynomialSymbol(_as_symbol(g, h).coef, h)
    kmax = min(f.degree, g.degree)
    out = PolynomialSymbol.zero(h)
    for k in range(kmax + 1):
        out = out + ((-0.5j * h) ** k / factorial(k)) * _bidifferential(f, g, k)
    return out


def moyal_bracket(f: PolynomialSymbol, g: PolynomialSymbol, hbar: float | None = None) -> PolynomialSymbol:
    """``(i / hbar)(f * g - g * f)`` with the Moyal product.

    Only odd orders survive, so the even terms are skipped and ``hbar = 0``
    reduces to the Poisson bracket.
    """
    h = _shared_hbar(f, g, hbar)
    f = PolynomialSymbol(f.coef, h)
    g = PolynomialSymbol(_as_symbol(g, h).coef, h)
    kmax = min(f.degree, g.degree)
    out = PolynomialSymbol.zero(h)
    for k in range(1, kmax + 1, 2):
        # (i/h) * 2 * (-i h/2)^k / k!  =  (-1)^((k-1)/2) (h/2)^(k-1) / k!
        c = (-1) ** ((k - 1) // 2) * (0.5 * h) ** (k - 1) / factorial(k)
        out = out + c * _bidifferential(f, g, k)
    return out


def poisson_bracket(f: PolynomialSymbol, g: PolynomialSymbol) -> PolynomialSymbol:
    """``d_p f d_q g - d_q f d_p g``."""
    return PolynomialSymbol(_bidifferential(f, _as_symbol(g, f.hbar), 1).coef, f.hbar)
