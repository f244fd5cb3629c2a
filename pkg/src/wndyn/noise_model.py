"""Covariance functions of homogeneous Gaussian white-noise fields.

The field ``N_t(p, q)`` is delta-correlated in time with spatial covariance
``C(p - p', q - q')``. Three families are supported:

* ``gaussian``: ``C0 exp(-p^2 / 2 lp^2 - q^2 / 2 lq^2)``; an infinite length
  scale removes the dependence on that variable.
* ``constant``: ``C0``, which adds no dynamics beyond a random phase.
* ``spectral``: a finite sum of weighted cosines ``sum_a w_a cos((p q_a - q p_a) / hbar)``,
  i.e. the symplectic Fourier transform of a symmetric discrete measure.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import factorial
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import NotPositiveType

__all__ = [
    "CovarianceSpec",
    "DiffusionMatrix",
    "PositivityReport",
    "FieldSampler",
    "eval_C",
    "diffusion_coefficients",
    "diffusion_matrix",
    "validate_positive_type",
    "sample_field_increment",
    "load_spectral_atoms",
]

_FAMILIES = ("gaussian", "constant", "spectral")


@dataclass(frozen=True)
class CovarianceSpec:
    """Spatial covariance ``C`` of the noise field.

    Parameters
    ----------
    family : {"gaussian", "constant", "spectral"}
    C0 : float
        Amplitude, ``C(0, 0)`` for the gaussian and constant families.
    lp, lq : float
        Length scales of the gaussian family; ``inf`` allowed.
    atoms : array_like, shape (n, 3)
        Rows ``(p_a, q_a, w_a)`` of the spectral family, ``w_a >= 0``.
    hbar : float
        Scale of the phases in the spectral family.
    """

    family: str
    C0: float = 1.0
    lp: float = np.inf
    lq: float = np.inf
    atoms: np.ndarray | None = None
    hbar: float = 1.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown covariance family {self.family!r}")
        if self.family == "spectral":
            if self.atoms is None:
                raise ValueError("spectral family needs atoms")
            a = np.array(self.atoms, dtype=float).reshape(-1, 3)
            if np.any(a[:, 2] < 0):
                raise ValueError("atom weights must be nonnegative")
            a.setflags(write=False)
            object.__setattr__(self, "atoms", a)
            object.__setattr__(self, "C0", float(a[:, 2].sum()))
        else:
            if self.C0 < 0:
                raise ValueError("C0 must be nonnegative")
            if not (self.lp > 0 and self.lq > 0):
                raise ValueError("length scales must be positive")

    @classmethod
    def gaussian(cls, C0: float = 1.0, lp: float = np.inf, lq: float = np.inf) -> "CovarianceSpec":
        return cls("gaussian", C0=C0, lp=lp, lq=lq)

    @classmethod
    def constant(cls, C0: float = 1.0) -> "CovarianceSpec":
        return cls("constant", C0=C0)

    @classmethod
    def spectral(cls, atoms, hbar: float = 1.0) -> "CovarianceSpec":
        return cls("spectral", atoms=atoms, hbar=hbar)

    @property
    def q_only(self) -> bool:
        """True if ``C`` does not depend on the momentum argument."""
        if self.family == "constant":
            return True
        if self.family == "gaussian":
            return bool(np.isinf(self.lp))
        return bool(np.all(self.atoms[:, 1] == 0) | np.all(self.atoms[:, 2] == 0))

    @property
    def is_constant(self) -> bool:
        if self.family == "constant" or self.C0 == 0:
            return True
        if self.family == "gaussian":
            return bool(np.isinf(self.lp) and np.isinf(self.lq))
        a = self.atoms
        return bool(np.all((a[:, 2] == 0) | ((a[:, 0] == 0) & (a[:, 1] == 0))))

    def __call__(self, p, q):
        return eval_C(self, p, q)

    def to_dict(self) -> dict:
        d = {"family": self.family}
        if self.family == "spectral":
            d["atoms"] = [{"p": a[0], "q": a[1], "weight": a[2]} for a in self.atoms.tolist()]
            d["hbar"] = self.hbar
        else:
            d["C0"] = self.C0
            if self.family == "gaussian":
                d["lp"] = None if np.isinf(self.lp) else self.lp
                d["lq"] = None if np.isinf(self.lq) else self.lq
        return d


def eval_C(spec: CovarianceSpec, p, q):
    """Evaluate ``C(p, q)``; broadcasts over array arguments."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if spec.family == "constant":
        return np.full(np.broadcast(p, q).shape, spec.C0)[()]
    if spec.family == "gaussian":
        e = np.zeros(np.broadcast(p, q).shape)
        if np.isfinite(spec.lp):
            e = e - p**2 / (2 * spec.lp**2)
        if np.isfinite(spec.lq):
            e = e - q**2 / (2 * spec.lq**2)
        return (spec.C0 * np.exp(e))[()]
    pa, qa, w = spec.atoms.T
    phase = (np.multiply.outer(p, qa) - np.multiply.outer(q, pa)) / spec.hbar
    return (np.cos(phase) @ w)[()]


def diffusion_coefficients(spec: CovarianceSpec, order: int = 2) -> dict:
    """Curvature coefficients ``D[(mu, nu)]`` for ``mu + nu`` even, ``2 <= mu + nu <= order``.

    ``D[(mu, nu)] = ((-i d_p)^mu (i d_q)^nu C)(0) / (mu! nu!)``; the first index
    counts derivatives in ``p``.
    """
    out = {}
    for total in range(2, order + 1, 2):
        for mu in range(total + 1):
            out[(mu, total - mu)] = _dcoef(spec, mu, total - mu)
    return out


def _dcoef(spec: CovarianceSpec, mu: int, nu: int) -> float:
    if spec.family == "constant":
        return 0.0
    if spec.family == "gaussian":
        # even Gaussian moments: d^{2k} exp(-x^2/2l^2) at 0 = (-1)^k (2k-1)!! / l^{2k}
        if mu % 2 or nu % 2:
            return 0.0
        k, j = mu // 2, nu // 2
        val = spec.C0
        for n, ell in ((k, spec.lp), (j, spec.lq)):
            if n == 0:
                continue
            if np.isinf(ell):
                return 0.0
            val *= _double_factorial(2 * n - 1) / ell ** (2 * n)
        # (-i)^{2k} (i)^{2j} (-1)^{k+j} = 1
        return float(val / (factorial(mu) * factorial(nu)))
    pa, qa, w = spec.atoms.T
    h = spec.hbar
    # C = sum w cos(p qa/h - q pa/h); d_p -> qa/h, d_q -> -pa/h on exp(i phase)
    # (-i d_p)^mu (i d_q)^nu exp(i phase) = (qa/h)^mu (pa/h)^nu exp(i phase)
    return float(np.sum(w * (qa / h) ** mu * (pa / h) ** nu) / (factorial(mu) * factorial(nu)))


def _double_factorial(n: int) -> int:
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


@dataclass(frozen=True)
class DiffusionMatrix:
    """``D = [[D02, D11/2], [D11/2, D20]]`` in ``(p, q)`` order.

    ``D02`` drives momentum diffusion and comes from the ``q``-curvature of ``C``.
    """

    D02: float = 0.0
    D11: float = 0.0
    D20: float = 0.0
    matrix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        M = np.array([[self.D02, 0.5 * self.D11], [0.5 * self.D11, self.D20]], dtype=float)
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @classmethod
    def from_matrix(cls, M) -> "DiffusionMatrix":
        M = np.asarray(M, dtype=float)
        return cls(float(M[0, 0]), float(M[0, 1] + M[1, 0]), float(M[1, 1]))


def diffusion_matrix(spec: CovarianceSpec) -> DiffusionMatrix:
    """Diffusion matrix from the curvature of ``C`` at the origin."""
    d = diffusion_coefficients(spec, 2)
    return DiffusionMatrix(D02=d[(0, 2)], D11=d[(1, 1)], D20=d[(2, 0)])


@dataclass(frozen=True)
class PositivityReport:
    passed: bool
    minimum: float
    tolerance: float
    n_samples: int


def validate_positive_type(
    spec: CovarianceSpec | Callable,
    samples: int = 256,
    extent: float | None = None,
    rel_tol: float = 1e-8,
    raise_on_fail: bool = True,
) -> PositivityReport:
    """Check that ``C`` sampled on a symmetric grid has a nonnegative discrete spectrum.

    Parameters
    ----------
    spec : CovarianceSpec or callable ``C(p, q)``
    samples : int
        Points per axis.
    extent : float, optional
        Half-width of the grid. Defaults to eight length scales for the gaussian
        family and 10 otherwise.
    rel_tol : float
        Tolerance relative to ``C(0, 0)``.
    """
    C = spec if callable(spec) and not isinstance(spec, CovarianceSpec) else (lambda p, q: eval_C(spec, p, q))
    if extent is None:
        extent = 10.0
        if isinstance(spec, CovarianceSpec) and spec.family == "gaussian":
            scales = [s for s in (spec.lp, spec.lq) if np.isfinite(s)]
            if scales:
                extent = 8.0 * max(scales)
    n = int(samples)
    x = (np.arange(n) - n // 2) * (2 * extent / n)
    P, Q = np.meshgrid(x, x, indexing="ij")
    vals = np.asarray(C(P, Q), dtype=float) * np.ones_like(P)
    c0 = float(np.asarray(C(0.0, 0.0)))
    masses = np.fft.fft2(np.fft.ifftshift(vals)).real / vals.size
    minimum = float(masses.min())
    tol = rel_tol * abs(c0)
    report = PositivityReport(minimum >= -tol, minimum, tol, n)
    if raise_on_fail and not report.passed:
        raise NotPositiveType(f"spectral minimum {minimum:.3e} below -{tol:.3e}")
    return report


class FieldSampler:
    """Finite spectral representation of a ``q``-only homogeneous field.

    The covariance ``C(q) = int c(k) cos(k q) dk`` is replaced by a Gauss-Hermite
    mode sum, so ``-dN/dq`` integrated over ``dt`` is
    ``sum_i sqrt(c_i dt) k_i (a_i sin(k_i q) - b_i cos(k_i q))`` with standard normal
    ``a_i, b_i``. The single-point variance ``-C''(0) dt`` is reproduced exactly.
    """

    def __init__(self, spec: CovarianceSpec, box: float = 10.0, tol: float = 1e-3, max_modes: int = 512):
        if not spec.q_only:
            raise ValueError("field sampling supports q-only covariances")
        if spec.family == "constant" or spec.is_constant:
            self.k = np.zeros(0)
            self.c = np.zeros(0)
        elif spec.family == "spectral":
            pa, _, w = spec.atoms.T
            self.k = -pa / spec.hbar
            self.c = w.copy()
        else:
            self.k, self.c = self._gauss_hermite(spec, box, tol, max_modes)
        self.spec = spec

    @staticmethod
    def _gauss_hermite(spec, box, tol, max_modes):
        ell = spec.lq
        qs = np.linspace(0.0, box, 401)
        target = spec.C0 / ell**2 * (1 - qs**2 / ell**2) * np.exp(-qs**2 / (2 * ell**2))
        K = 8
        while True:
            # spectral density of C0 exp(-q^2/2l^2) is Gaussian in k with variance 1/l^2;
            # Gauss-Hermite nodes of the physicists' weight need the sqrt(2) rescaling
            x, wts = np.polynomial.hermite.hermgauss(2 * K)
            keep = x > 0
            k = np.sqrt(2.0) * x[keep] / ell
            c = 2 * spec.C0 * wts[keep] / np.sqrt(np.pi)
            approx = (c * k**2) @ np.cos(np.outer(k, qs))
            if np.max(np.abs(approx - target)) <= tol * spec.C0 / ell**2 or K >= max_modes:
                return k, c
            K *= 2

    @property
    def n_modes(self) -> int:
        return int(self.k.size)

    def covariance(self, dq) -> np.ndarray:
        """Cross-covariance per unit time, ``-C''(dq)``, of the truncated field."""
        return (self.c * self.k**2) @ np.cos(np.outer(self.k, np.atleast_1d(dq)))

    def increment(self, rng: np.random.Generator, positions, dt: float) -> np.ndarray:
        positions = np.asarray(positions, dtype=float)
        if dt < 0:
            raise ValueError("dt must be nonnegative")
        if dt == 0 or self.n_modes == 0:
            return np.zeros_like(positions)
        amp = np.sqrt(self.c * dt) * self.k
        a = rng.standard_normal(self.n_modes)
        b = rng.standard_normal(self.n_modes)
        phase = np.multiply.outer(positions, self.k)
        return np.sin(phase) @ (amp * a) - np.cos(phase) @ (amp * b)


def sample_field_increment(spec: CovarianceSpec, rng: np.random.Generator, positions, dt: float,
                           sampler: FieldSampler | None = None) -> np.ndarray:
    """Force increments ``-d_q N(q) dt`` at ``positions`` for a single time step."""
    sampler = sampler or FieldSampler(spec)
    return sampler.increment(rng, positions, dt)


def load_spectral_atoms(path: str | Path, hbar: float = 1.0) -> CovarianceSpec:
    """Read ``[{"p": .., "q": .., "weight": ..}, ...]`` into a spectral spec."""
    rows = json.loads(Path(path).read_text())
    atoms = [[r["p"], r["q"], r["weight"]] for r in rows]
    return CovarianceSpec.spectral(atoms, hbar=hbar)
