"""Harmonic heat bath: finite oscillator baths, spectral densities, Green functions,
thermal fluctuations and reduced system moments.

Conventions
-----------
* ``J(nu)`` is even; ``gamma(t) = int J(nu) exp(i nu t) dnu`` over the real line.
* ``gamma_hat(z) = i int J(nu) / (z - nu) dnu`` for ``Im z > 0``; on the real axis
  the boundary value from above is used, so ``Re gamma_hat(nu) = pi J(nu)``.
* ``G_hat(z) = 1 / (omega^2 - z^2 - i z gamma_hat(z) / m)`` is the transform of the
  causal Green function, ``G_hat(z) = int_0^inf G(t) exp(i z t) dt``.
* ``curvature`` is ``(-d_q^2 C)(0)``, twice the momentum diffusion coefficient.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import PchipInterpolator
from scipy.special import erfcx, wofz

from .errors import AssumptionViolation, PVDivergence
from .noise_model import CovarianceSpec, diffusion_matrix
from .phase_space import QuadraticHamiltonian

__all__ = [
    "BathSpec",
    "SpectralDensity",
    "GreenFunction",
    "BathCorrelation",
    "beta_eff",
    "build_bath",
    "total_hamiltonian",
    "discretize_bath",
    "finite_n_green",
    "finite_n_green_partial_fraction",
    "finite_n_moments",
    "gn_identity_check",
    "gamma_hat",
    "green_hat",
    "green",
    "phi_beta",
    "phi_beta_finite",
    "reduced_moments",
    "thermal_values",
    "equilibrium_bounds",
    "longtime_limits",
    "parseval_integrals",
    "load_tabulated_density",
]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_GL8_X, _GL8_W = np.polynomial.legendre.leggauss(8)


def beta_eff(E, beta: float):
    """Effective inverse temperature ``(2 / E) tanh(beta E / 2)``; equals ``beta`` at ``E = 0``."""
    E = np.asarray(E, dtype=float)
    if np.any(E < 0):
        raise ValueError("E must be nonnegative")
    x = 0.5 * beta * E
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(x > 1e-8, beta * np.tanh(x) / np.where(x > 0, x, 1.0), beta * (1 - x**2 / 3))
    return out[()]


def _coth(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-6
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 / np.where(small, x, 1.0) + x / 3.0, 1.0 / np.tanh(safe))[()]


def _nu_coth(nu, beta: float, hbar: float):
    """``hbar nu coth(beta hbar nu / 2)``; tends to ``2 / beta`` as ``nu -> 0`` or ``hbar -> 0``."""
    nu = np.asarray(nu, dtype=float)
    if hbar == 0:
        return np.full(nu.shape, 2.0 / beta)[()]
    x = 0.5 * beta * hbar * nu
    small = np.abs(x) < 1e-4
    xs = np.where(small, 1.0, x)
    big = hbar * nu / np.tanh(xs)
    xx = np.where(small, x, 0.0) ** 2
    ser = (2.0 / beta) * (1 + xx / 3 - xx**2 / 45)
    return np.where(small, ser, big)[()]


# -- finite baths -----------------------------------------------------------------

@dataclass(frozen=True)
class BathSpec:
    """System oscillator ``(m, omega)`` coupled to ``n`` bath oscillators."""

    m: float
    omega: float
    masses: np.ndarray = field(default_factory=lambda: np.zeros(0))
    freqs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        masses = np.array(self.masses, dtype=float).ravel()
        freqs = np.array(self.freqs, dtype=float).ravel()
        if masses.shape != freqs.shape:
            raise ValueError("masses and freqs must have equal length")
        if self.m <= 0 or np.any(masses <= 0):
            raise ValueError("masses must be positive")
        if self.omega < 0:
            raise ValueError("omega must be nonnegative")
        if freqs.size and (freqs[0] <= 0 or np.any(np.diff(freqs) <= 0)):
            raise ValueError("bath frequencies must be positive and strictly increasing")
        for name, arr in (("masses", masses), ("freqs", freqs)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return int(self.freqs.size)

    @property
    def kappa(self) -> np.ndarray:
        return np.sqrt(self.masses / self.m)

    @property
    def gamma0(self) -> float:
        """``gamma_n(0) = sum m_j omega_j^2``."""
        return float(np.sum(self.masses * self.freqs**2))


def build_bath(spec: BathSpec) -> tuple[np.ndarray, np.ndarray]:
    """Mass matrix ``M`` and squared-frequency matrix ``Omega^2`` of the total system."""
    n = spec.n
    M = np.diag(np.concatenate([[spec.m], spec.masses]))
    k, w2 = spec.kappa, spec.freqs**2
    O2 = np.zeros((n + 1, n + 1))
    O2[0, 0] = spec.omega**2 + np.sum(k**2 * w2)
    O2[0, 1:] = O2[1:, 0] = -k * w2
    O2[1:, 1:] = np.diag(w2)
    return M, O2


def total_hamiltonian(spec: BathSpec, hbar: float = 1.0) -> QuadraticHamiltonian:
    """Quadratic form of system plus bath; coordinates ``(p, p_1..p_n, q, q_1..q_n)``."""
    M, O2 = build_bath(spec)
    sq = np.sqrt(np.diag(M))
    n1 = spec.n + 1
    A = np.zeros((2 * n1, 2 * n1))
    A[:n1, :n1] = np.diag(1.0 / np.diag(M))
    A[n1:, n1:] = sq[:, None] * O2 * sq[None, :]
    return QuadraticHamiltonian(A, hbar)


def discretize_bath(J: "SpectralDensity", n: int, cutoff: float, m: float = 1.0, omega: float = 0.0) -> BathSpec:
    """Bath of ``n`` oscillators at bin midpoints of ``[0, cutoff]``.

    The coupling of each mode is fixed by ``m_j omega_j^2 = 2 int_bin J``, so
    ``sum_j m_j omega_j^2 cos(omega_j t)`` approximates the friction kernel.
    """
    if n < 0 or cutoff <= 0:
        raise ValueError("need n >= 0 and cutoff > 0")
    if n == 0:
        return BathSpec(m, omega)
    edges = np.linspace(0.0, cutoff, n + 1)
    mids = 0.5 * (edges[1:] + edges[:-1])
    x = 0.5 * (_GL_X[None, :] + 1) * np.diff(edges)[:, None] + edges[:-1, None]
    bins = J(x) @ _GL_W * 0.5 * np.diff(edges)
    return BathSpec(m, omega, 2 * bins / mids**2, mids)


def _eig_bath(spec: BathSpec):
    _, O2 = build_bath(spec)
    lam, U = np.linalg.eigh(O2)
    return np.clip(lam, 0.0, None), U[0] ** 2


def _sin_over(lam, s):
    # sin(sqrt(lam) s) / sqrt(lam), continuous at lam = 0
    w = np.sqrt(lam)
    s = np.asarray(s, dtype=float)[..., None]
    return np.where(w > 0, np.sin(w * s) / np.where(w > 0, w, 1.0), s)


def finite_n_green(spec: BathSpec, s) -> np.ndarray:
    """``G_n(s) = (sin(Omega s) / Omega)_00`` from the eigendecomposition; zero for ``s < 0``."""
    lam, u2 = _eig_bath(spec)
    s = np.asarray(s, dtype=float)
    out = _sin_over(lam, s) @ u2
    return np.where(s < 0, 0.0, out)[()]


def finite_n_green_dot(spec: BathSpec, s) -> np.ndarray:
    """``(cos(Omega s))_00``, the time derivative of ``G_n``."""
    lam, u2 = _eig_bath(spec)
    s = np.asarray(s, dtype=float)
    out = np.cos(np.sqrt(lam) * s[..., None]) @ u2
    return np.where(s < 0, 0.0, out)[()]


def _partial_fraction_poles(spec: BathSpec):
    """Poles ``xi_k`` (in ``z^2``) and residues of ``G_hat_n`` from its continued-fraction form."""
    k2w2 = spec.kappa**2 * spec.freqs**2
    w2 = spec.freqs**2

    def d(xi):
        return spec.omega**2 - xi + np.sum(k2w2 * xi / (xi - w2))

    def weight(xi):
        return 1.0 / (1.0 + np.sum(k2w2 * w2 / (xi - w2) ** 2))

    if spec.n == 0:
        return np.array([spec.omega**2]), np.array([1.0])
    roots = []
    bounds = [-np.inf] + list(w2) + [np.inf]
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        a = lo if np.isfinite(lo) else -(abs(d(0.0)) + spec.omega**2 + 1.0 + np.sum(k2w2))
        b = hi if np.isfinite(hi) else 2 * (w2[-1] + spec.omega**2 + np.sum(k2w2)) + 1.0
        if not np.isfinite(lo):
            while d(a) <= 0:
                a = 2 * a - 1
        if not np.isfinite(hi):
            while d(b) >= 0:
                b = 2 * b + 1
        gap = b - a
        eps_a = 1e-3 * gap if np.isfinite(lo) else 0.0
        eps_b = 1e-3 * gap if np.isfinite(hi) else 0.0
        while eps_a and d(a + eps_a) <= 0 and eps_a > 1e-300:
            eps_a *= 1e-3
        while eps_b and d(b - eps_b) >= 0 and eps_b > 1e-300:
            eps_b *= 1e-3
        roots.append(optimize.brentq(d, a + eps_a, b - eps_b, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                                     maxiter=500))
    roots = np.array(roots)
    return roots, np.array([weight(x) for x in roots])


def finite_n_green_partial_fraction(spec: BathSpec, s) -> np.ndarray:
    """``G_n(s)`` from the poles of ``1 / (omega^2 - z^2 - i z gamma_hat_n(z) / m)``.

    ``G_hat_n`` is a sum of simple fractions in ``xi = z^2``; each pole at
    ``xi_k`` contributes ``w_k sin(sqrt(xi_k) s) / sqrt(xi_k)`` with residue
    weight ``w_k = 1 / (1 + sum kappa_j^2 omega_j^4 / (xi_k - omega_j^2)^2)``.
    """
    xi, wts = _partial_fraction_poles(spec)
    xi = np.clip(xi, 0.0, None)
    s = np.asarray(s, dtype=float)
    out = _sin_over(xi, s) @ wts
    return np.where(s < 0, 0.0, out)[()]


def gn_identity_check(spec: BathSpec, s) -> float:
    """Largest discrepancy between the two finite-bath Green-function routes."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    return float(np.max(np.abs(finite_n_green(spec, s) - finite_n_green_partial_fraction(spec, s))))


def finite_n_moments(spec: BathSpec, curvature: float, t: float, system_second=None,
                     beta: float | None = None, hbar: float = 1.0) -> dict:
    """Exact system moments of the finite total system at time ``t``.

    Parameters
    ----------
    curvature : float
        ``(-d_q^2 C)(0)`` of the noise acting on the system position.
    system_second : array_like, shape (2, 2), optional
        Initial raw second moments of ``(p, q)``; with ``beta`` the bath starts in
        its Gaussian state at the effective temperatures.

    Returns
    -------
    dict
        ``p2_noise``, ``q2_noise`` (the added terms) and, when initial data are
        given, ``p2`` and ``q2``.
    """
    lam, U = np.linalg.eigh(build_bath(spec)[1])
    lam = np.clip(lam, 0.0, None)
    u2 = U[0] ** 2

    def cos00(s):
        return np.cos(np.sqrt(lam) * s) @ u2

    def sin00(s):
        return _sin_over(lam, s) @ u2

    opts = dict(limit=400, epsabs=1e-13, epsrel=1e-11)
    p_noise = curvature * integrate.quad(lambda s: cos00(s) ** 2, 0.0, t, **opts)[0] if t > 0 else 0.0
    q_noise = curvature / spec.m**2 * integrate.quad(lambda s: sin00(s) ** 2, 0.0, t, **opts)[0] if t > 0 else 0.0
    out = {"p2_noise": p_noise, "q2_noise": q_noise}
    if system_second is not None:
        if beta is None:
            raise ValueError("beta is required with initial moments")
        S0 = np.asarray(system_second, dtype=float)
        n1 = spec.n + 1
        M = np.concatenate([[spec.m], spec.masses])
        be = beta_eff(hbar * spec.freqs, beta) if spec.n else np.zeros(0)
        var_p = np.concatenate([[0.0], spec.masses / be])
        var_q = np.concatenate([[0.0], 1.0 / (spec.masses * spec.freqs**2 * be)])
        # x = M^{1/2} q, y = M^{-1/2} p evolve by cos / sin of Omega
        w = np.sqrt(lam)
        c = U @ np.diag(np.cos(w * t)) @ U.T
        sn = U @ np.diag(np.where(w > 0, np.sin(w * t) / np.where(w > 0, w, 1), t)) @ U.T
        ws = U @ np.diag(w * np.sin(w * t)) @ U.T
        sqm = np.sqrt(M)
        # p(t) = M^{1/2}(c M^{-1/2} p0 - ws M^{1/2} q0);  q(t) = M^{-1/2}(c M^{1/2} q0 + sn M^{-1/2} p0)
        Pp = sqm[0] * c[0, :] / sqm
        Pq = -sqm[0] * ws[0, :] * sqm
        Qq = c[0, :] * sqm / sqm[0]
        Qp = sn[0, :] / (sqm * sqm[0])
        p2 = (Pp[0] ** 2 * S0[0, 0] + 2 * Pp[0] * Pq[0] * S0[0, 1] + Pq[0] ** 2 * S0[1, 1]
              + np.sum(Pp[1:] ** 2 * var_p[1:]) + np.sum(Pq[1:] ** 2 * var_q[1:]))
        q2 = (Qp[0] ** 2 * S0[0, 0] + 2 * Qp[0] * Qq[0] * S0[0, 1] + Qq[0] ** 2 * S0[1, 1]
              + np.sum(Qp[1:] ** 2 * var_p[1:]) + np.sum(Qq[1:] ** 2 * var_q[1:]))
        out["p2"] = float(p2 + p_noise)
        out["q2"] = float(q2 + q_noise)
        out["n1"] = n1
    return out


# -- spectral densities ---------------------------------------------------------

_SD_FAMILIES = ("drude", "gaussian", "tabulated")


@dataclass(frozen=True)
class SpectralDensity:
    """Even, positive spectral density of a macroscopic bath.

    Families: ``drude`` with ``J0 omega0^2 / (omega0^2 + nu^2)``, ``gaussian`` with
    ``J0 exp(-nu^2 / 2 omega0^2)`` and ``tabulated`` samples on ``nu >= 0``,
    extended beyond the last sample by ``L / nu^2``.

    Raises
    ------
    AssumptionViolation
        For ohmic or otherwise non-decaying densities, ``J(0) <= 0``, or
        nonpositive or uneven samples.
    """

    family: str
    J0: float = 1.0
    omega0: float = 1.0
    nu: np.ndarray | None = None
    values: np.ndarray | None = None
    _interp: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.family == "ohmic":
            raise AssumptionViolation("ohmic spectral densities do not decay and are excluded")
        if self.family not in _SD_FAMILIES:
            raise ValueError(f"unknown spectral family {self.family!r}")
        if self.family == "tabulated":
            self._setup_table()
        else:
            if not self.J0 > 0:
                raise AssumptionViolation("J(0) must be positive")
            if not self.omega0 > 0:
                raise ValueError("omega0 must be positive")

    def _setup_table(self):
        nu = np.asarray(self.nu, dtype=float).ravel()
        v = np.asarray(self.values, dtype=float).ravel()
        if nu.shape != v.shape or nu.size < 4:
            raise ValueError("tabulated density needs at least four matching samples")
        order = np.argsort(nu)
        nu, v = nu[order], v[order]
        if np.any(nu < 0):
            neg = nu < 0
            mirror = np.interp(-nu[neg], nu[~neg], v[~neg])
            if not np.allclose(mirror, v[neg], rtol=1e-6, atol=1e-12 * np.abs(v).max()):
                raise AssumptionViolation("tabulated J is not even")
            nu, v = nu[~neg], v[~neg]
        if np.any(v <= 0):
            raise AssumptionViolation("J must be strictly positive on the sampled range")
        if nu[0] > 0:
            raise ValueError("tabulated J must include nu = 0")
        tail = nu >= 0.8 * nu[-1]
        s = nu[tail] ** 2 * v[tail]
        if tail.sum() < 2 or np.ptp(s) > 0.05 * s[-1]:
            raise AssumptionViolation("nu^2 J(nu) does not approach a limit on the sampled range")
        nu.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "J0", float(v[0]))
        object.__setattr__(self, "omega0", float(nu[-1]))
        object.__setattr__(self, "_interp", PchipInterpolator(nu, v, extrapolate=False))

    @classmethod
    def drude(cls, J0: float, omega0: float) -> "SpectralDensity":
        return cls("drude", J0, omega0)

    @classmethod
    def gaussian(cls, J0: float, omega0: float) -> "SpectralDensity":
        return cls("gaussian", J0, omega0)

    @classmethod
    def tabulated(cls, nu, values) -> "SpectralDensity":
        return cls("tabulated", nu=nu, values=values)

    def __call__(self, nu):
        a = np.abs(np.asarray(nu, dtype=float))
        if self.family == "drude":
            return (self.J0 * self.omega0**2 / (self.omega0**2 + a**2))[()]
        if self.family == "gaussian":
            return (self.J0 * np.exp(-0.5 * (a / self.omega0) ** 2))[()]
        last = self.nu[-1]
        inside = np.nan_to_num(self._interp(np.minimum(a, last)))
        return np.where(a <= last, inside, self.L / np.where(a > 0, a, 1.0) ** 2)[()]

    @property
    def L(self) -> float:
        """Limit of ``nu^2 J(nu)``."""
        if self.family == "drude":
            return self.J0 * self.omega0**2
        if self.family == "gaussian":
            return 0.0
        return float(self.nu[-1] ** 2 * self.values[-1])

    @property
    def scale(self) -> float:
        """Characteristic frequency of the density."""
        return float(self.omega0)

    @property
    def gamma0(self) -> float:
        """``gamma(0) = int J`` over the real line."""
        if self.family == "drude":
            return float(np.pi * self.J0 * self.omega0)
        if self.family == "gaussian":
            return float(np.sqrt(2 * np.pi) * self.J0 * self.omega0)
        head = integrate.quad(self, 0.0, self.nu[-1], limit=500, points=self.nu[1:-1][:400])[0]
        return float(2 * (head + self.L / self.nu[-1]))

    def gamma_t(self, t):
        """Friction kernel ``gamma(t)``."""
        t = np.abs(np.asarray(t, dtype=float))
        if self.family == "drude":
            return (np.pi * self.J0 * self.omega0 * np.exp(-self.omega0 * t))[()]
        if self.family == "gaussian":
            return (np.sqrt(2 * np.pi) * self.J0 * self.omega0 * np.exp(-0.5 * (self.omega0 * t) ** 2))[()]
        return np.vectorize(lambda s: self.gamma0 if s == 0 else
                            2 * integrate.quad(self, 0, np.inf, weight="cos", wvar=s, limlst=200)[0])(t)[()]

    def to_dict(self) -> dict:
        if self.family == "tabulated":
            return {"family": "tabulated", "nu": self.nu.tolist(), "J": self.values.tolist()}
        return {"family": self.family, "J0": self.J0, "omega0": self.omega0}


def load_tabulated_density(path: str | Path) -> SpectralDensity:
    """Read ``{"nu": [...], "J": [...]}``."""
    data = json.loads(Path(path).read_text())
    return SpectralDensity.tabulated(data["nu"], data["J"])


def _pv_real(J: SpectralDensity, nu: float) -> float:
    """``PV int J(x) / (nu - x) dx`` over the real line for ``nu > 0``."""
    B = max(4.0 * nu, 60.0 * J.scale)
    # interpolation kinks cap the attainable accuracy for tabulated input
    rel = 1e-8 if J.family == "tabulated" else 1e-10
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            head = integrate.quad(lambda x: -2 * nu * J(x) / (x + nu), 0.0, B, weight="cauchy", wvar=nu,
                                  limit=400, epsabs=1e-13, epsrel=rel)[0]
            tail = integrate.quad(lambda x: 2 * nu * J(x) / (nu**2 - x**2), B, np.inf, limit=400,
                                  epsabs=1e-14, epsrel=rel)[0]
        except integrate.IntegrationWarning as exc:
            raise PVDivergence(f"principal value at nu={nu} did not converge: {exc}") from exc
    return head + tail


def gamma_hat(J: SpectralDensity, z, method: str = "auto"):
    """Transform ``i int J(nu) / (z - nu) dnu`` of the friction kernel.

    Real ``z`` is read as the boundary value from the upper half-plane.
    ``method="quadrature"`` bypasses the closed forms.
    """
    z = np.asarray(z, dtype=complex)
    if method == "auto" and J.family == "drude":
        return (1j * np.pi * J.J0 * J.omega0 / (z + 1j * J.omega0))[()]
    if method == "auto" and J.family == "gaussian":
        return (np.pi * J.J0 * wofz(z / (np.sqrt(2) * J.omega0)))[()]
    out = np.empty(z.shape, dtype=complex)
    for idx, zz in np.ndenumerate(z):
        if zz.imag < 0:
            raise ValueError("gamma_hat is defined for Im z >= 0")
        if zz.imag == 0:
            x = zz.real
            pv = 0.0 if x == 0 else np.sign(x) * _pv_real(J, abs(x))
            out[idx] = np.pi * J(x) + 1j * pv
            continue
        # i int_0^inf J(x) 2z / (z^2 - x^2) dx, split at the near-singular point
        f = lambda x: 1j * J(x) * 2 * zz / (zz**2 - x**2)
        knee = max(abs(zz.real), J.scale)
        rel = 1e-8 if J.family == "tabulated" else 1e-11
        opts = dict(limit=400, epsabs=1e-13, epsrel=rel, complex_func=True)
        pts = [abs(zz.real)] if zz.real else None
        out[idx] = integrate.quad(f, 0, 2 * knee, points=pts, **opts)[0] + integrate.quad(f, 2 * knee, np.inf, **opts)[0]
    return out[()]


def gamma_hat_imag_axis(J: SpectralDensity, nu):
    """``gamma_hat(i nu)`` for ``nu >= 0``, real valued."""
    nu = np.asarray(nu, dtype=float)
    if J.family == "drude":
        return (np.pi * J.J0 * J.omega0 / (nu + J.omega0))[()]
    if J.family == "gaussian":
        return (np.pi * J.J0 * erfcx(nu / (np.sqrt(2) * J.omega0)))[()]
    # i int J(x) / (i nu - x) dx = int J(x) 2 nu / (nu^2 + x^2) dx over x >= 0
    f = np.vectorize(lambda v: integrate.quad(lambda x: 2 * v * J(x) / (v**2 + x**2), 0, np.inf, limit=400,
                                              epsabs=1e-14)[0] if v > 0 else np.pi * J(0.0))
    return f(nu)[()]


def green_hat(J: SpectralDensity, m: float, omega: float, z, method: str = "auto"):
    """``1 / (omega^2 - z^2 - i z gamma_hat(z) / m)``."""
    z = np.asarray(z, dtype=complex)
    return (1.0 / (omega**2 - z**2 - 1j * z * gamma_hat(J, z, method) / m))[()]


def _spectral(J: SpectralDensity, m: float, omega: float, nu):
    """``Im G_hat(nu)`` for ``nu > 0`` written without cancellation."""
    nu = np.asarray(nu, dtype=float)
    g = gamma_hat(J, nu)
    if omega == 0:
        # G_hat = -1 / (nu (nu + i g / m)); Im = (Re g / m) / (nu |nu + i g / m|^2)
        den = nu * np.abs(nu + 1j * g / m) ** 2
        return (g.real / m / den)[()]
    d = omega**2 - nu**2 - 1j * nu * g / m
    return ((nu * g.real / m) / np.abs(d) ** 2)[()]


@dataclass
class BathCorrelation:
    """Fluctuation correlation ``Phi_beta(t) = hbar int_0^inf J nu coth(beta hbar nu / 2) cos(nu t) dnu``."""

    J: SpectralDensity
    beta: float
    hbar: float

    def spectrum(self, nu):
        """``S(nu)`` with ``Phi(t) = int S(nu) exp(i nu t) dnu``."""
        return (0.5 * self.J(nu) * _nu_coth(nu, self.beta, self.hbar))[()]

    def __call__(self, t):
        t = np.abs(np.asarray(t, dtype=float))

        def one(s):
            f = lambda nu: self.J(nu) * _nu_coth(nu, self.beta, self.hbar)
            if s == 0:
                if self.J.family != "gaussian":
                    return np.inf  # nu J coth ~ 1 / nu: logarithmic divergence at t = 0
                return integrate.quad(f, 0, np.inf, limit=500)[0]
            return integrate.quad(f, 0, np.inf, weight="cos", wvar=s, limlst=200, limit=500)[0]

        return np.vectorize(one)(t)[()]

    def integral(self) -> float:
        """``int Phi dt`` over the real line."""
        return float(2 * np.pi * self.spectrum(0.0))

    def samples(self, times) -> np.ndarray:
        return np.asarray(self(times))


def phi_beta(J: SpectralDensity, beta: float, hbar: float) -> BathCorrelation:
    if not (0 < beta < np.inf):
        raise ValueError("beta must be positive and finite")
    return BathCorrelation(J, beta, hbar)


def phi_beta_finite(spec: BathSpec, beta: float, hbar: float):
    """Finite-bath correlation ``sum m_j omega_j^2 / beta_eff(hbar omega_j) cos(omega_j t)``."""
    amp = spec.masses * spec.freqs**2 / beta_eff(hbar * spec.freqs, beta)

    def phi(t):
        return (np.cos(np.multiply.outer(np.asarray(t, dtype=float), spec.freqs)) @ amp)[()]

    phi.amplitudes = amp
    return phi


# -- Green function in the time domain ---------------------------------------------

def _decay_guess(J: SpectralDensity, m: float, omega: float) -> float:
    wJ = np.sqrt(omega**2 + J.gamma0 / m)
    rates = [np.pi * J(wJ) / (2 * m)]
    if omega > 0:
        rates.append(m * omega**2 / (np.pi * J(0.0)))
    else:
        rates += [np.pi * J(0.0) / m, J.scale]
    return float(min(rates))


class GreenFunction:
    """Causal Green function of the damped oscillator, evaluated by spectral inversion.

    ``G(t) = (2 / pi) int_0^inf Im G_hat(nu) sin(nu t) dnu`` for ``t > 0`` with
    a Gauss-Legendre panel mesh refined where ``Im G_hat`` varies. For
    ``omega = 0`` the ``1 / nu`` pole is removed analytically with a term that
    decays like ``nu^-5`` and whose transform approaches the plateau ``m / (pi J(0))``.
    """

    def __init__(self, J: SpectralDensity, m: float = 1.0, omega: float = 0.0, t_max: float | None = None,
                 tol: float = 1e-11):
        if m <= 0 or omega < 0:
            raise ValueError("need m > 0 and omega >= 0")
        if not J(0.0) > 0:
            raise AssumptionViolation("J(0) must be positive")
        self.J, self.m, self.omega = J, float(m), float(omega)
        self.eta_guess = _decay_guess(J, m, omega)
        self.t_max = float(t_max) if t_max is not None else float(min(12.0 / self.eta_guess, 2000.0))
        self.omega_J = float(np.sqrt(omega**2 + J.gamma0 / m))
        if omega == 0:
            self.plateau = self.m / (np.pi * J(0.0))
            self.a = np.pi * J(0.0) / self.m
        else:
            self.plateau = 0.0
            self.a = 0.0
        self._build_mesh(tol)
        self._eta = None

    def hat(self, nu):
        return green_hat(self.J, self.m, self.omega, nu)

    def spectral(self, nu):
        return _spectral(self.J, self.m, self.omega, nu)

    def _remainder(self, nu):
        r = self.spectral(nu)
        if self.omega == 0:
            c, a = self.plateau, self.a
            r = r - c * a**4 / (nu * (nu**2 + a**2) ** 2)
        return r

    def _pole_terms(self, t):
        """Inverse transform of the subtracted ``1 / nu`` term and its first two derivatives."""
        c, a = self.plateau, self.a
        e = np.exp(-a * t)
        return c * (1 - e * (1 + 0.5 * a * t)), 0.5 * c * a * e * (1 + a * t), -0.5 * c * a**3 * t * e

    def _build_mesh(self, tol):
        scales = [self.omega_J, self.J.scale, max(self.omega, 1e-3 * self.omega_J)]
        if self.omega == 0:
            scales.append(self.a)
        hi = 20 * max(scales)
        while hi**2 * abs(self._remainder(hi)) > 1e-6 * (1 + self.plateau) and hi < 1e5:
            hi *= 1.5
        self.nu_max = hi
        lo = 1e-4 * min(scales)
        pts = np.unique(np.concatenate([[0.0], np.geomspace(lo, hi, 60), scales]))
        pts = pts[pts <= hi]
        a, b = pts[:-1], pts[1:]
        done_a, done_b = [], []
        ref = None
        for _ in range(60):
            mid = 0.5 * (a + b)
            half = 0.5 * (b - a)
            x16 = mid[:, None] + half[:, None] * _GL_X
            x8 = mid[:, None] + half[:, None] * _GL8_X
            f16 = self._remainder(x16) * (1 + x16**2)
            f8 = self._remainder(x8) * (1 + x8**2)
            i16 = half * (f16 @ _GL_W)
            i8 = half * (f8 @ _GL8_W)
            if ref is None:
                ref = 1.0 + np.abs(i16).sum()
            bad = np.abs(i16 - i8) > tol * ref
            bad &= half > 1e-12 * (1 + mid)
            done_a.append(a[~bad])
            done_b.append(b[~bad])
            if not bad.any():
                break
            a, b = np.concatenate([a[bad], mid[bad]]), np.concatenate([mid[bad], b[bad]])
        a, b = np.concatenate(done_a), np.concatenate(done_b)
        order = np.argsort(a)
        a, b = a[order], b[order]
        cap = 10.0 / self.t_max
        nsub = np.maximum(1, np.ceil((b - a) / cap).astype(int))
        edges_a = np.concatenate([a[i] + (b[i] - a[i]) * np.arange(k) / k for i, k in enumerate(nsub)])
        edges_b = np.concatenate([a[i] + (b[i] - a[i]) * np.arange(1, k + 1) / k for i, k in enumerate(nsub)])
        mid = 0.5 * (edges_a + edges_b)
        half = 0.5 * (edges_b - edges_a)
        self.nodes = (mid[:, None] + half[:, None] * _GL_X).ravel()
        self.weights = (half[:, None] * _GL_W).ravel() * (2 / np.pi)
        self.rem = self._remainder(self.nodes)

    # spectral sums -------------------------------------------------------------

    def _sums(self, t):
        """Return ``(G, Gdot, Gddot)`` at arbitrary nonnegative times."""
        t = np.asarray(t, dtype=float)
        flat = t.ravel()
        out = np.zeros((3, flat.size))
        wr = self.weights * self.rem
        coef = np.stack([wr, wr * self.nodes, -wr * self.nodes**2])
        for s in range(0, flat.size, 256):
            ts = flat[s:s + 256]
            ph = np.outer(self.nodes, ts)
            sn, cs = np.sin(ph), np.cos(ph)
            out[0, s:s + 256] = coef[0] @ sn
            out[1, s:s + 256] = coef[1] @ cs
            out[2, s:s + 256] = coef[2] @ sn
        if self.omega == 0:
            out += np.stack(self._pole_terms(flat))
        out[:, flat < 0] = 0.0
        return out.reshape((3,) + t.shape)

    def uniform(self, h: float, n: int):
        """``(t, G, Gdot, Gddot)`` on ``t_j = j h``, ``j = 0..n``, using a phase recurrence."""
        t = h * np.arange(n + 1)
        wr = self.weights * self.rem
        coef = np.stack([wr, wr * self.nodes, -wr * self.nodes**2]).astype(complex)
        B = 128
        step = np.exp(1j * np.outer(self.nodes, h * np.arange(B)))
        jump = np.exp(1j * self.nodes * h * B)
        start = np.ones(self.nodes.size, dtype=complex)
        vals = np.empty((3, n + 1), dtype=complex)
        for s in range(0, n + 1, B):
            k = min(B, n + 1 - s)
            vals[:, s:s + k] = (coef * start) @ step[:, :k]
            start = start * jump
            if (s // B) % 16 == 15:
                # refresh to stop round-off drift
                start = np.exp(1j * self.nodes * h * (s + B))
        out = np.stack([vals[0].imag, vals[1].real, vals[2].imag])
        if self.omega == 0:
            out += np.stack(self._pole_terms(t))
        return t, out[0], out[1], out[2]

    def G(self, t):
        return self._sums(t)[0]

    def Gdot(self, t):
        return self._sums(t)[1]

    def Gddot(self, t):
        return self._sums(t)[2]

    def samples(self, n: int = 2001):
        """Time grid on ``[0, t_max]`` with ``G``, ``Gdot``, ``Gddot``."""
        return self.uniform(self.t_max / (n - 1), n - 1)

    @property
    def eta(self) -> float:
        """Decay rate from a log-linear fit of the oscillation envelope over the last decade of the grid."""
        if self._eta is None:
            t, g, gd, _ = self.samples(4001)
            env = np.sqrt((g - self.plateau) ** 2 + (gd / self.omega_J) ** 2)
            sel = (t >= t[-1] / 10) & (env > 1e-9 * env.max())
            if sel.sum() < 10:
                sel = (t > 0) & (env > 1e-12 * env.max())
            slope = np.polyfit(t[sel], np.log(env[sel]), 1)[0]
            self._eta = float(max(-slope, 1e-12))
        return self._eta

    def to_csv(self, path, n: int = 2001) -> None:
        t, g, gd, gdd = self.samples(n)
        np.savetxt(path, np.column_stack([t, g, gd, gdd]), delimiter=",", header="t,G,Gdot,Gddot",
                   comments="", fmt="%.17g")


def green(J: SpectralDensity, m: float = 1.0, omega: float = 0.0, t_max: float | None = None) -> GreenFunction:
    return GreenFunction(J, m, omega, t_max)


# -- reduced dynamics -------------------------------------------------------------

def _curvature(noise) -> float:
    if noise is None:
        return 0.0
    if isinstance(noise, CovarianceSpec):
        if not noise.q_only:
            raise ValueError("the bath model takes position-only noise")
        return 2.0 * diffusion_matrix(noise).D02
    return float(noise)


def _filon_weights(theta):
    th = np.asarray(theta, dtype=float)
    small = np.abs(th) < 1e-3
    ts = np.where(small, 1.0, th)
    W = np.where(small, 1 - th**2 / 12 + th**4 / 360, 2 * (1 - np.cos(ts)) / ts**2)
    A_big = 1j / ts + (1 - np.exp(1j * ts)) / ts**2
    A_small = 0.5 + 1j * th / 6 - th**2 / 24 - 1j * th**3 / 120
    A = np.where(small, A_small, A_big)
    return W, A


def _fourier_on_interval(u: np.ndarray, h: float, pad: int = 4):
    """Exact transform ``int_0^T u(s) exp(i nu s) ds`` of the piecewise-linear interpolant
    at ``nu_k = 2 pi k / (P h)``, ``0 <= nu_k <= pi / h``."""
    n = u.size - 1
    P = 1 << int(np.ceil(np.log2(pad * (n + 1))))
    S = np.fft.ifft(u, n=P) * P
    k = np.arange(P // 2 + 1)
    theta = 2 * np.pi * k / P
    W, A = _filon_weights(theta)
    B = np.conj(A)
    ut = h * (W * S[: k.size] + (A - W) * u[0] + (B - W) * u[-1] * np.exp(1j * theta * n))
    return theta / h, ut


def _double_convolution(u: np.ndarray, h: float, corr: BathCorrelation) -> float:
    """``int_0^T int_0^T u(s) Phi(s - s') u(s') ds ds'`` via ``int S(nu) |u~(nu)|^2 dnu``."""
    nu, ut = _fourier_on_interval(u, h)
    S = corr.spectrum(nu)
    f = S * np.abs(ut) ** 2
    dnu = nu[1] - nu[0]
    body = dnu * (f[0] + 2 * f[1:-1].sum() + f[-1])
    # beyond pi / h the transform is dominated by the end-point jumps
    amp = u[0] ** 2 + u[-1] ** 2
    tail = 0.0
    if amp > 0:
        tail = 2 * integrate.quad(lambda x: corr.spectrum(x) * amp / x**2, nu[-1], np.inf, limit=200)[0]
    return float(body + tail)


def reduced_moments(J: SpectralDensity, noise, m: float, omega: float, beta: float, hbar: float, t,
                    initial=None, green_fn: GreenFunction | None = None, h: float | None = None) -> tuple:
    """System ``<p^2>_t`` and ``<q^2>_t`` under the reduced averaged dynamics.

    Parameters
    ----------
    noise : CovarianceSpec or float
        Position-only noise covariance, or directly its curvature ``(-d_q^2 C)(0)``.
    initial : dict
        Initial ``{"p2": .., "pq": .., "q2": ..}`` (symmetrised ``pq``).

    Returns
    -------
    p2, q2 : ndarray
    """
    curv = _curvature(noise)
    initial = initial or {"p2": 0.0, "pq": 0.0, "q2": 0.0}
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(times < 0):
        raise ValueError("t must be nonnegative")
    t_top = float(times.max()) if times.size else 0.0
    gf = green_fn
    if gf is None or gf.t_max < t_top:
        gf = GreenFunction(J, m, omega, t_max=max(t_top, 1.0))
    corr = phi_beta(J, beta, hbar)
    if h is None:
        h = min(0.01, 0.25 / max(gf.omega_J, J.scale))
    p2 = np.empty(times.size)
    q2 = np.empty(times.size)
    for i, T in enumerate(times):
        if T == 0:
            p2[i], q2[i] = initial["p2"], initial["q2"]
            continue
        n = max(64, int(np.ceil(T / h)))
        hh = T / n
        _, g, gd, gdd = gf.uniform(hh, n)
        G, Gd, Gdd = g[-1], gd[-1], gdd[-1]
        init_p = Gd**2 * initial["p2"] + 2 * m * Gd * Gdd * initial["pq"] + m**2 * Gdd**2 * initial["q2"]
        init_q = (G / m) ** 2 * initial["p2"] + 2 * (G / m) * Gd * initial["pq"] + Gd**2 * initial["q2"]
        white_p = curv * integrate.simpson(gd**2, dx=hh)
        white_q = curv / m**2 * integrate.simpson(g**2, dx=hh)
        p2[i] = init_p + _double_convolution(gd, hh, corr) + white_p
        q2[i] = init_q + _double_convolution(g, hh, corr) / m**2 + white_q
    return p2, q2


# -- equilibrium ------------------------------------------------------------------

def _integrate_halfline(f, points, epsrel=1e-11):
    pts = np.unique(np.asarray([p for p in points if p > 0], dtype=float))
    edges = np.concatenate([[0.0], pts, [pts[-1] * 4 if pts.size else 1.0]])
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        total += integrate.quad(f, a, b, limit=400, epsabs=0, epsrel=epsrel)[0]
    total += integrate.quad(f, edges[-1], np.inf, limit=400, epsabs=0, epsrel=epsrel)[0]
    return total


def _resonance_points(J, m, omega):
    wJ = np.sqrt(omega**2 + J.gamma0 / m)
    pts = [0.25 * wJ, 0.5 * wJ, wJ, 2 * wJ, J.scale]
    if omega > 0:
        pts += [0.5 * omega, omega, 1.5 * omega]
    return pts


def _thermal_spectral(J, m, omega, beta, hbar, which):
    pts = _resonance_points(J, m, omega)

    def absG2(nu):
        return np.abs(green_hat(J, m, omega, nu)) ** 2

    p2 = q2 = None
    if "p2" in which:
        # hbar int J nu^3 |G|^2 coth  =  int J nu^2 |G|^2 (hbar nu coth)
        p2 = _integrate_halfline(lambda x: J(x) * x**2 * absG2(x) * _nu_coth(x, beta, hbar), pts)
    if "q2" in which:
        q2 = _integrate_halfline(lambda x: J(x) * absG2(x) * _nu_coth(x, beta, hbar), pts) / m**2
    return p2, q2


def _thermal_pv(J, m, omega, beta, hbar, which):
    """Principal-value form over the real line, paired symmetrically about ``nu = 0``.

    The real-line integrand ``G_hat(nu) coth(beta hbar nu / 2)`` has a pole at
    the origin through ``coth``; adding the values at ``+nu`` and ``-nu`` (with
    ``G_hat(-nu)`` evaluated from ``gamma_hat`` at negative frequency) removes it.
    """
    nodes, weights = _panel_rule(_resonance_points(J, m, omega), J, m, omega)
    gp = green_hat(J, m, omega, nodes)
    gm = green_hat(J, m, omega, -nodes)
    # f(nu) + f(-nu) with coth odd; hbar coth -> 2 / (beta nu) classically
    if hbar == 0:
        pair_q = (gp - gm) * (2.0 / (beta * nodes))
    else:
        pair_q = (gp - gm) * hbar * _coth(0.5 * beta * hbar * nodes)
    p2 = q2 = None
    if "p2" in which:
        p2 = (m / (2 * np.pi * 1j) * np.sum(weights * nodes**2 * pair_q)).real
    if "q2" in which:
        q2 = (1.0 / (2 * np.pi * 1j * m) * np.sum(weights * pair_q)).real
    return p2, q2


def _panel_rule(points, J, m, omega):
    wJ = np.sqrt(omega**2 + J.gamma0 / m)
    hi = 200 * max(wJ, J.scale, omega)
    edges = np.unique(np.concatenate([[0.0], np.geomspace(1e-4 * min(wJ, J.scale), hi, 400),
                                      np.asarray(points, dtype=float)]))
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * np.diff(edges)
    nodes = (mid[:, None] + half[:, None] * _GL_X).ravel()
    weights = (half[:, None] * _GL_W).ravel()
    # algebraic tail beyond hi via x = hi / u on (0, 1]
    u = 0.5 * (_GL_X + 1)
    tail_nodes = hi / u
    tail_w = 0.5 * _GL_W * hi / u**2
    return np.concatenate([nodes, tail_nodes]), np.concatenate([weights, tail_w])


def _thermal_matsubara(J, m, omega, beta, hbar, which, lmax=4000):
    if hbar == 0:
        p2 = m / beta
        q2 = 1.0 / (m * beta * omega**2) if omega > 0 else np.inf
        return (p2 if "p2" in which else None), (q2 if "q2" in which else None)
    base = 2 * np.pi / (beta * hbar)

    def Ghat_im(nu):
        return 1.0 / (omega**2 + nu**2 + nu * gamma_hat_imag_axis(J, nu) / m)

    def fp(x):
        # 1 - nu^2 G_hat(i nu), written without cancellation
        nu = base * np.asarray(x, dtype=float)
        return (omega**2 + nu * gamma_hat_imag_axis(J, nu) / m) * Ghat_im(nu)

    def fq(x):
        return Ghat_im(base * np.asarray(x, dtype=float))

    def summed(f, zero):
        l = np.arange(1, lmax + 1)
        head = np.sum(f(l))
        # Euler-Maclaurin tail for l > lmax
        integral = integrate.quad(f, lmax, np.inf, limit=200, epsabs=0, epsrel=1e-12)[0]
        dh = 1e-3 * lmax
        deriv = (f(lmax + dh) - f(lmax - dh)) / (2 * dh)
        tail = integral - 0.5 * f(lmax) - deriv / 12.0
        return zero + 2 * (head + tail)

    p2 = q2 = None
    if "p2" in which:
        p2 = m / beta * summed(fp, 1.0)
    if "q2" in which:
        q2 = summed(fq, 1.0 / omega**2) / (m * beta)
    return p2, q2


def thermal_values(J: SpectralDensity, m: float, omega: float, beta: float, hbar: float,
                   method: str = "spectral-integral", which=("p2", "q2")) -> tuple:
    """Equilibrium ``(<p^2>, <q^2>)`` of the damped oscillator.

    Parameters
    ----------
    method : {"spectral-integral", "pv-integral", "matsubara"}
        Three independent representations of the same quantities.
    which : tuple
        Subset of ``("p2", "q2")``; ``q2`` requires ``omega > 0``.
    """
    which = tuple(which)
    if "q2" in which and omega <= 0:
        raise ValueError("<q^2> has no equilibrium value for omega = 0")
    if not J(0.0) > 0:
        raise AssumptionViolation("J(0) must be positive")
    fn = {"spectral-integral": _thermal_spectral, "pv-integral": _thermal_pv,
          "matsubara": _thermal_matsubara}.get(method)
    if fn is None:
        raise ValueError(f"unknown method {method!r}")
    return fn(J, m, omega, beta, hbar, which)


def equilibrium_bounds(J: SpectralDensity, m: float, omega: float, beta: float, hbar: float) -> dict:
    """Terms of the chain bounding the equilibrium kinetic and potential energies.

    Returns the values in order ``lower_q <= potential <= mid <= kinetic <= upper_p``.
    """
    p2, q2 = thermal_values(J, m, omega, beta, hbar)
    wJ = np.sqrt(omega**2 + J.gamma0 / m)
    be = lambda E: beta_eff(E, beta)
    return {
        "lower_q": max(1 / (2 * beta), (omega / wJ) ** 2 / (2 * be(hbar * wJ))),
        "potential": 0.5 * m * omega**2 * q2,
        "mid": 1 / (2 * be(hbar * omega)),
        "kinetic": p2 / (2 * m),
        "upper_p": 1 / (2 * be(hbar * wJ)),
    }


def parseval_integrals(J: SpectralDensity, m: float, omega: float, which: str = "Gdot",
                       green_fn: GreenFunction | None = None, t_max: float | None = None) -> tuple:
    """``(int_0^inf u(s)^2 ds, int |u_hat|^2 dnu / 2 pi)`` for ``u = Gdot`` or ``u = G``."""
    gf = green_fn or GreenFunction(J, m, omega, t_max=t_max)
    n = int(np.ceil(gf.t_max / 0.005))
    t, g, gd, _ = gf.uniform(gf.t_max / n, n)
    u = gd if which == "Gdot" else g
    time_side = integrate.simpson(u**2, x=t)
    pts = _resonance_points(J, m, omega)
    if which == "Gdot":
        freq = _integrate_halfline(lambda x: x**2 * np.abs(green_hat(J, m, omega, x)) ** 2, pts) / np.pi
    else:
        if omega == 0:
            raise ValueError("G is not square integrable for omega = 0")
        freq = _integrate_halfline(lambda x: np.abs(green_hat(J, m, omega, x)) ** 2, pts) / np.pi
    return float(time_side), float(freq)


def longtime_limits(J: SpectralDensity, noise, m: float, omega: float, beta: float, hbar: float) -> dict:
    """Long-time limits of the reduced moments.

    For ``omega > 0``: ``p2_limit`` and ``q2_limit``. For ``omega = 0``:
    ``p2_limit`` and ``diffusion_constant`` ``lim <q^2>_t / t``.
    """
    curv = _curvature(noise)
    pts = _resonance_points(J, m, omega)
    kin = _integrate_halfline(lambda x: x**2 * np.abs(green_hat(J, m, omega, x)) ** 2, pts) / np.pi
    which = ("p2", "q2") if omega > 0 else ("p2",)
    p2_eq, q2_eq = thermal_values(J, m, omega, beta, hbar, which=which)
    out = {"p2_limit": p2_eq + curv * kin, "p2_thermal": p2_eq, "p2_noise": curv * kin}
    if omega > 0:
        pot = _integrate_halfline(lambda x: np.abs(green_hat(J, m, omega, x)) ** 2, pts) / np.pi
        out.update(q2_limit=q2_eq + curv * pot / m**2, q2_thermal=q2_eq, q2_noise=curv * pot / m**2)
    else:
        j0 = J(0.0)
        out["diffusion_constant"] = 2.0 / (np.pi * j0) * (1.0 / beta + curv / (2 * np.pi * j0))
    return out
