"""Averaged dynamics of a quadratic Hamiltonian driven by white noise.

States and observables on one canonical pair ``(p, q)`` are evolved exactly in
time. Grid evolution smears the state by the measure ``P_t`` (a Fourier
multiplier) and then transports it with the backward linear flow ``J_{-t}``.
The transport is split into three shears, each applied as an exact Fourier
phase, so the ``L2`` norm (and therefore purity) is conserved to round-off.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import comb
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import quad_vec
from scipy.linalg import expm

from .errors import SupportEscape
from .noise_model import CovarianceSpec, DiffusionMatrix, eval_C
from .phase_space import QuadraticHamiltonian, flow_jacobian, symplectic_adjoint

__all__ = [
    "WignerGrid",
    "SmearingCovariance",
    "CharacteristicFn",
    "MomentTable",
    "gaussian_wigner",
    "smearing_covariance",
    "characteristic_fn",
    "evolve_wigner",
    "propagate_moments",
    "d_polynomial",
    "gaussian_raw_moments",
    "free_q4_moment",
    "purity",
    "renyi2_entropy",
    "classical_evolve",
    "bg_entropy",
]

ESCAPE_TOL = 1e-6


@dataclass(frozen=True)
class WignerGrid:
    """Phase-space density sampled on a uniform ``(p, q)`` lattice.

    ``w[i, j]`` is the value at ``(p[i], q[j])``. ``classical=True`` marks a
    probability density rather than a Wigner function.
    """

    p: np.ndarray
    q: np.ndarray
    w: np.ndarray
    hbar: float = 1.0
    classical: bool = False

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        q = np.array(self.q, dtype=float)
        w = np.array(self.w, dtype=float)
        if w.shape != (p.size, q.size):
            raise ValueError(f"w has shape {w.shape}, expected {(p.size, q.size)}")
        for x in (p, q):
            if x.size < 4 or not np.allclose(np.diff(x), x[1] - x[0], rtol=1e-9, atol=0):
                raise ValueError("grid axes must be uniform with at least four points")
        for name, arr in (("p", p), ("q", q), ("w", w)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_function(cls, f: Callable, p, q, hbar: float = 1.0, classical: bool = False) -> "WignerGrid":
        P, Q = np.meshgrid(p, q, indexing="ij")
        return cls(p, q, f(P, Q), hbar, classical)

    @staticmethod
    def axis(n: int, half_width: float) -> np.ndarray:
        """Uniform axis of ``n`` points, symmetric in the periodic sense and containing 0."""
        h = 2.0 * half_width / n
        return (np.arange(n) - n // 2) * h

    @property
    def dp(self) -> float:
        return float(self.p[1] - self.p[0])

    @property
    def dq(self) -> float:
        return float(self.q[1] - self.q[0])

    @property
    def cell(self) -> float:
        return self.dp * self.dq

    @property
    def mesh(self):
        return np.meshgrid(self.p, self.q, indexing="ij")

    def replace(self, w: np.ndarray) -> "WignerGrid":
        return WignerGrid(self.p, self.q, w, self.hbar, self.classical)

    def integrate(self, f=None) -> float:
        """``<f, w>`` by the rectangle rule; ``f`` is a callable ``f(p, q)`` or None for 1."""
        if f is None:
            return float(self.w.sum() * self.cell)
        P, Q = self.mesh
        return float(np.sum(f(P, Q) * self.w) * self.cell)

    def mass(self) -> float:
        return self.integrate()

    def moment(self, a: int, b: int) -> float:
        """Raw moment ``<p^a q^b>``."""
        return float((self.p**a) @ self.w @ (self.q**b) * self.cell)

    def second_moments(self) -> tuple[np.ndarray, np.ndarray]:
        """Mean vector and raw second-moment matrix in ``(p, q)`` order."""
        mean = np.array([self.moment(1, 0), self.moment(0, 1)])
        pq = self.moment(1, 1)
        second = np.array([[self.moment(2, 0), pq], [pq, self.moment(0, 2)]])
        return mean, second

    def to_csv(self, path, sidecar: bool = True) -> None:
        """Write ``p,q,w`` rows plus a JSON sidecar with the lattice metadata."""
        path = Path(path)
        P, Q = self.mesh
        data = np.column_stack([P.ravel(), Q.ravel(), self.w.ravel()])
        np.savetxt(path, data, delimiter=",", header="p,q,w", comments="", fmt="%.17g")
        if sidecar:
            meta = {
                "p_min": float(self.p[0]), "dp": self.dp, "n_p": int(self.p.size),
                "q_min": float(self.q[0]), "dq": self.dq, "n_q": int(self.q.size),
                "hbar": self.hbar, "classical": self.classical,
            }
            path.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")

    @classmethod
    def from_csv(cls, path) -> "WignerGrid":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        data = np.loadtxt(path, delimiter=",", skiprows=1, comments="#")
        p = meta["p_min"] + meta["dp"] * np.arange(meta["n_p"])
        q = meta["q_min"] + meta["dq"] * np.arange(meta["n_q"])
        w = data[:, 2].reshape(meta["n_p"], meta["n_q"])
        return cls(p, q, w, meta["hbar"], meta.get("classical", False))


def gaussian_wigner(mean, cov, p, q, hbar: float = 1.0, classical: bool = False) -> WignerGrid:
    """Gaussian density with the given mean and covariance, ``(p, q)`` order.

    A Gaussian Wigner function is pure when ``det cov = hbar^2 / 4``.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    inv = np.linalg.inv(cov)
    norm = 1.0 / (2 * np.pi * np.sqrt(np.linalg.det(cov)))
    P, Q = np.meshgrid(p, q, indexing="ij")
    dP, dQ = P - mean[0], Q - mean[1]
    quad = inv[0, 0] * dP**2 + 2 * inv[0, 1] * dP * dQ + inv[1, 1] * dQ**2
    return WignerGrid(p, q, norm * np.exp(-0.5 * quad), hbar, classical)


@dataclass(frozen=True)
class SmearingCovariance:
    t: float
    C: np.ndarray
    direction: str


def _van_loan(B: np.ndarray, Q: np.ndarray, t: float) -> np.ndarray:
    """``int_0^t expm(s B) Q expm(s B)^T ds`` via one block exponential."""
    n = B.shape[0]
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = -B
    M[:n, n:] = Q
    M[n:, n:] = B.T
    E = expm(t * M)
    out = E[n:, n:].T @ E[:n, n:]
    return 0.5 * (out + out.T)


def _diffusion_array(D) -> np.ndarray:
    return D.matrix if isinstance(D, DiffusionMatrix) else np.asarray(D, dtype=float)


def smearing_covariance(H: QuadraticHamiltonian, D, t: float, direction: str = "state",
                        method: str = "exact") -> SmearingCovariance:
    """Covariance ``2 int_0^t J_{-s} D J_{-s}^T ds`` (state) or with ``J_{+s}`` (observable).

    Parameters
    ----------
    method : {"exact", "quadrature"}
        ``exact`` uses a block matrix exponential; ``quadrature`` integrates the
        matrix integrand adaptively and serves as a cross-check.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if direction not in ("state", "observable"):
        raise ValueError("direction must be 'state' or 'observable'")
    Dm = _diffusion_array(D)
    sign = -1.0 if direction == "state" else 1.0
    B = sign * H.generator
    if t == 0:
        C = np.zeros_like(Dm)
    elif method == "exact":
        C = 2.0 * _van_loan(B, Dm, t)
    elif method == "quadrature":
        def integrand(s):
            J = expm(s * B)
            return (J @ Dm @ J.T).ravel()

        val, _ = quad_vec(integrand, 0.0, t, epsabs=1e-14, epsrel=1e-12)
        C = 2.0 * val.reshape(Dm.shape)
        C = 0.5 * (C + C.T)
    else:
        raise ValueError(f"unknown method {method!r}")
    C.setflags(write=False)
    return SmearingCovariance(float(t), C, direction)


class CharacteristicFn:
    """Symplectic Fourier transform ``P~_t`` of the smearing measure.

    ``log P~_t(x) = hbar^-2 int_0^t (C(J_{-s}^# x) - C(0)) ds`` is evaluated
    directly, so the weights never underflow for small ``hbar``.
    """

    def __init__(self, H: QuadraticHamiltonian, spec: CovarianceSpec, t: float, hbar: float,
                 rtol: float = 1e-8):
        if t < 0:
            raise ValueError("t must be nonnegative")
        if hbar <= 0:
            raise ValueError("hbar must be positive")
        self.H, self.spec, self.t, self.hbar, self.rtol = H, spec, float(t), float(hbar), rtol
        self.C0 = float(eval_C(spec, 0.0, 0.0))

    @property
    def atom_weight(self) -> float:
        """Weight ``exp(-t C(0) / hbar^2)`` of the point mass at the origin."""
        return float(np.exp(-self.t * self.C0 / self.hbar**2))

    @property
    def q_mass(self) -> float:
        """Total mass of the absolutely continuous part ``Q_t``."""
        return float(-np.expm1(-self.t * self.C0 / self.hbar**2))

    def log(self, p, q) -> np.ndarray:
        p, q = np.broadcast_arrays(np.asarray(p, dtype=float), np.asarray(q, dtype=float))
        if self.t == 0 or self.spec.is_constant:
            return np.zeros(p.shape)
        B = -self.H.generator
        x = np.stack([p.ravel(), q.ravel()])

        def integrand(s):
            y = symplectic_adjoint(expm(s * B)) @ x
            return eval_C(self.spec, y[0], y[1]) - self.C0

        val, _ = quad_vec(integrand, 0.0, self.t, epsrel=self.rtol, epsabs=1e-13 * max(self.C0, 1e-300),
                          norm="max")
        return (val / self.hbar**2).reshape(p.shape)

    def __call__(self, p, q) -> np.ndarray:
        return np.exp(self.log(p, q))

    def q_tilde(self, p, q) -> np.ndarray:
        """Transform of ``Q_t = P_t - atom``, computed without cancellation."""
        lg = self.log(p, q)
        return self.atom_weight * np.expm1(lg + self.t * self.C0 / self.hbar**2)

    def multiplier(self, kp: np.ndarray, kq: np.ndarray) -> np.ndarray:
        """Fourier multiplier of the convolution with ``P_t`` at wavevectors ``(kp, kq)``."""
        return self(self.hbar * kq, -self.hbar * kp)

    def q_density(self, n: int | None = None, half_width: float | None = None):
        """Density of ``Q_t`` on a square grid and the analytic sup bound.

        By default the step resolves the decay of ``C`` on the Fourier side and the
        window covers the spread of ``Q_t`` under the flow; ``n`` is the next power
        of two, capped at 2048.

        Returns
        -------
        z : ndarray
            Axis shared by ``p`` and ``q``.
        density : ndarray, shape (n, n)
        bound : float
            ``t (2 pi hbar^2)^-2 int |C|`` for integrable Gaussian ``C``; ``nan`` otherwise.
        """
        spec = self.spec
        B = -self.H.generator
        growth = max(np.linalg.norm(expm(s * B), 2) for s in np.linspace(0.0, self.t, 33))
        if half_width is None:
            scale = self.hbar / min(spec.lp, spec.lq) if spec.family == "gaussian" else self.hbar
            half_width = 16.0 * max(scale, 1e-12) * growth
        if n is None:
            n = 256
            if spec.family == "gaussian" and np.isfinite(max(spec.lp, spec.lq)):
                # the transform reaches out to |x| ~ growth * max(lp, lq)
                h_max = np.pi * self.hbar / (7.0 * max(spec.lp, spec.lq) * growth)
                n = min(2048, max(n, 1 << int(np.ceil(np.log2(2 * half_width / h_max)))))
        z = WignerGrid.axis(n, half_width)
        h = z[1] - z[0]
        u = 2 * np.pi * np.fft.fftfreq(n, d=h)
        UP, UQ = np.meshgrid(u, u, indexing="ij")
        qhat = self.q_tilde(self.hbar * UQ, -self.hbar * UP)
        dens = np.fft.fftshift(np.fft.ifft2(qhat).real) / h**2
        if spec.family == "gaussian" and np.isfinite(spec.lp) and np.isfinite(spec.lq):
            integral = spec.C0 * 2 * np.pi * spec.lp * spec.lq
            bound = self.t * integral / (2 * np.pi * self.hbar**2) ** 2
        else:
            bound = float("nan")
        return z, dens, bound


def characteristic_fn(H: QuadraticHamiltonian, spec: CovarianceSpec, t: float,
                      hbar: float | None = None) -> CharacteristicFn:
    return CharacteristicFn(H, spec, t, H.hbar if hbar is None else hbar)


# -- exact transport by Fourier shears -------------------------------------------

def _shear_factors(A: np.ndarray):
    """Write ``A`` (det 1) as ``sign * F1 F2 F3`` with unit-triangular ``F_i``.

    Returns ``(sign, [(kind, coef), ...])`` where kind is ``"L"`` for
    ``[[1, 0], [c, 1]]`` and ``"U"`` for ``[[1, b], [0, 1]]``.
    """
    best = None
    for sign in (1.0, -1.0):
        a, b, c, d = (sign * A).ravel()
        cands = []
        if abs(b) > 1e-14:
            cands.append([("L", (d - 1) / b), ("U", b), ("L", (a - 1) / b)])
        if abs(c) > 1e-14:
            cands.append([("U", (a - 1) / c), ("L", c), ("U", (d - 1) / c)])
        if abs(b) <= 1e-14 and abs(c) <= 1e-14 and abs(a - 1) < 1e-12 and abs(d - 1) < 1e-12:
            cands.append([])
        for fac in cands:
            size = max((abs(x) for _, x in fac), default=0.0)
            if best is None or size < best[0]:
                best = (size, sign, fac)
    if best is None:
        # pure squeeze: precondition with a unit shear
        pre = np.array([[1.0, 0.0], [1.0, 1.0]])
        sign, fac = _shear_factors(pre @ A)
        return sign, [("L", -1.0)] + fac
    return best[1], [f for f in best[2] if f[1] != 0.0]


def _shift_along(w: np.ndarray, axis: int, shifts: np.ndarray, h: float) -> np.ndarray:
    """``out[..., x, ...] = w(x + shift)`` along ``axis`` with band-limited interpolation."""
    n = w.shape[axis]
    k = 2 * np.pi * np.fft.rfftfreq(n, d=h)
    W = np.fft.rfft(w, axis=axis)
    if axis == 1:
        W = W * np.exp(1j * np.outer(shifts, k))
    else:
        W = W * np.exp(1j * np.outer(k, shifts))
    return np.fft.irfft(W, n=n, axis=axis)


def _edge_mass(w: np.ndarray, cell: float) -> float:
    b = max(2, min(w.shape) // 32)
    inner = np.abs(w[b:-b, b:-b]).sum()
    return float((np.abs(w).sum() - inner) * cell)


def _check_edges(g: WignerGrid, w: np.ndarray, stage: str):
    m = _edge_mass(w, g.cell)
    if m > ESCAPE_TOL:
        raise SupportEscape(f"mass {m:.2e} reached the grid boundary during {stage}")


def _reflect(w: np.ndarray) -> np.ndarray:
    # f(-z) on a periodic grid whose index n//2 sits at the origin
    n_p, n_q = w.shape
    ip = (2 * (n_p // 2) - np.arange(n_p)) % n_p
    iq = (2 * (n_q // 2) - np.arange(n_q)) % n_q
    return w[np.ix_(ip, iq)]


def _compose_linear(g: WignerGrid, w: np.ndarray, A: np.ndarray, check: bool) -> np.ndarray:
    """Return samples of ``z -> w(A z)``."""
    sign, factors = _shear_factors(A)
    if sign < 0:
        if not (np.isclose(g.p[g.p.size // 2], 0.0) and np.isclose(g.q[g.q.size // 2], 0.0)):
            raise ValueError("reflection needs a grid centred on the origin")
        w = _reflect(w)
    for kind, coef in factors:
        if kind == "L":
            w = _shift_along(w, 1, coef * g.p, g.dq)
        else:
            w = _shift_along(w, 0, coef * g.q, g.dp)
        if check:
            _check_edges(g, w, "transport")
    return w


def _convolve(g: WignerGrid, multiplier: Callable) -> np.ndarray:
    kp = 2 * np.pi * np.fft.fftfreq(g.p.size, d=g.dp)
    kq = 2 * np.pi * np.fft.fftfreq(g.q.size, d=g.dq)
    KP, KQ = np.meshgrid(kp, kq, indexing="ij")
    return np.fft.ifft2(np.fft.fft2(g.w) * multiplier(KP, KQ)).real


def evolve_wigner(w: WignerGrid, H: QuadraticHamiltonian, spec: CovarianceSpec, t: float,
                  check: bool = True) -> WignerGrid:
    """Averaged evolution of a Wigner function over time ``t``.

    Raises
    ------
    SupportEscape
        If more than ``1e-6`` of the mass reaches the grid border.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return w
    if check:
        _check_edges(w, w.w, "input")
    vals = w.w
    if not spec.is_constant:
        chi = CharacteristicFn(H, spec, t, w.hbar)
        vals = _convolve(w, chi.multiplier)
        if check:
            _check_edges(w, vals, "smearing")
    vals = _compose_linear(w, vals, flow_jacobian(H, -t).J, check)
    return w.replace(vals)


def classical_evolve(rho: WignerGrid, H: QuadraticHamiltonian, D, t: float,
                     check: bool = True) -> WignerGrid:
    """Fokker-Planck evolution of a classical density: Gaussian smearing, then transport.

    A singular smearing covariance is handled by the Fourier multiplier
    ``exp(-k.C_t.k / 2)``, which smears only along its range.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return rho
    if check:
        _check_edges(rho, rho.w, "input")
    C = smearing_covariance(H, D, t, "state").C
    vals = rho.w
    if np.any(C != 0):
        vals = _convolve(rho, lambda kp, kq: np.exp(-0.5 * (C[0, 0] * kp**2 + 2 * C[0, 1] * kp * kq
                                                            + C[1, 1] * kq**2)))
        if check:
            _check_edges(rho, vals, "smearing")
    vals = _compose_linear(rho, vals, flow_jacobian(H, -t).J, check)
    return rho.replace(vals)


def purity(w: WignerGrid) -> float:
    """``<w, w>``; equals ``1 / (2 pi hbar)`` for pure states."""
    return float(np.sum(w.w**2) * w.cell)


def renyi2_entropy(w: WignerGrid) -> float:
    return float(-np.log(2 * np.pi * w.hbar * purity(w)))


def bg_entropy(rho: WignerGrid) -> float:
    """Boltzmann-Gibbs entropy ``-<rho, ln(2 pi hbar rho)>``; nonpositive samples are dropped."""
    r = rho.w[rho.w > 0]
    return float(-np.sum(r * np.log(2 * np.pi * rho.hbar * r)) * rho.cell)


# -- moments ---------------------------------------------------------------------

@dataclass
class MomentTable:
    """Moments of ``p``, ``q``, ``p^2``, ``pq``, ``q^2`` and ``H`` on a time grid.

    For the free particle ``polynomials`` holds the exact time polynomials of
    each entry together with ``d2`` and ``d4``.
    """

    times: np.ndarray
    values: dict
    polynomials: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]


def d_polynomial(coefs: dict, m: float, mu: int) -> Polynomial:
    """``d_mu(t) = sum_nu D[(mu - nu, nu)] t^(nu + 1) / ((nu + 1) m^nu)``."""
    c = np.zeros(mu + 2)
    for nu in range(mu + 1):
        c[nu + 1] = coefs.get((mu - nu, nu), 0.0) / ((nu + 1) * m**nu)
    return Polynomial(c)


def propagate_moments(H: QuadraticHamiltonian, D, mean, second, t) -> MomentTable:
    """Exact first and second moments under the averaged dynamics.

    Parameters
    ----------
    mean : array_like, shape (2,)
        Initial ``(<p>, <q>)``.
    second : array_like, shape (2, 2)
        Initial raw second moments ``[[<p^2>, <pq>], [<pq>, <q^2>]]``.
    t : float or array_like
    """
    if H.dim != 1:
        raise ValueError("propagate_moments handles one canonical pair")
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(times < 0):
        raise ValueError("times must be nonnegative")
    mean = np.asarray(mean, dtype=float)
    S0 = np.asarray(second, dtype=float)
    out = {k: np.empty(times.size) for k in ("p", "q", "p2", "pq", "q2", "H")}
    for i, s in enumerate(times):
        J = flow_jacobian(H, s).J
        mu = J @ mean
        S = J @ S0 @ J.T + smearing_covariance(H, D, s, "observable").C
        out["p"][i], out["q"][i] = mu
        out["p2"][i], out["pq"][i], out["q2"][i] = S[0, 0], S[0, 1], S[1, 1]
        out["H"][i] = 0.5 * np.sum(H.A * S)
    polys = {}
    B = H.generator
    if np.allclose(B @ B, 0.0):
        Dm = _diffusion_array(D)
        # J_t = I + tB and C_t = 2(tD + t^2 (BD + DB^T)/2 + t^3 BDB^T/3)
        S_coef = [S0, B @ S0 + S0 @ B.T, B @ S0 @ B.T]
        C_coef = [np.zeros((2, 2)), 2 * Dm, B @ Dm + Dm @ B.T, 2.0 / 3.0 * B @ Dm @ B.T]
        tot = [S_coef[k] if k < 3 else 0 for k in range(4)]
        tot = [tot[k] + C_coef[k] for k in range(4)]
        polys["p"] = Polynomial([mean[0], (B @ mean)[0]])
        polys["q"] = Polynomial([mean[1], (B @ mean)[1]])
        polys["p2"] = Polynomial([c[0, 0] for c in tot])
        polys["pq"] = Polynomial([c[0, 1] for c in tot])
        polys["q2"] = Polynomial([c[1, 1] for c in tot])
        polys["H"] = Polynomial([0.5 * np.sum(H.A * c) for c in tot])
    return MomentTable(times, out, polys)


def energy_rate(H: QuadraticHamiltonian, D) -> float:
    """Constant growth rate of the mean energy, ``tr(A D)``."""
    return float(np.sum(H.A * _diffusion_array(D)))


def gaussian_raw_moments(mean, cov, order: int = 4) -> dict:
    """Raw moments ``{(a, b): E[p^a q^b]}`` of a bivariate normal, ``a + b <= order``."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    out = {}
    for a in range(order + 1):
        for b in range(order + 1 - a):
            out[(a, b)] = _normal_moment(mean, cov, a, b)
    return out


def _normal_moment(mean, cov, a: int, b: int) -> float:
    # expand (mu_p + x)^a (mu_q + y)^b and use central moments of (x, y)
    total = 0.0
    for i in range(a + 1):
        for j in range(b + 1):
            total += comb(a, i) * comb(b, j) * mean[0] ** (a - i) * mean[1] ** (b - j) * _central(cov, i, j)
    return total


def _central(cov, i: int, j: int) -> float:
    # Isserlis: sum over perfect matchings of i copies of x and j copies of y
    if (i + j) % 2:
        return 0.0
    labels = [0] * i + [1] * j

    def pairings(items):
        if not items:
            return 1.0
        first, rest = items[0], items[1:]
        s = 0.0
        for k in range(len(rest)):
            s += cov[first, rest[k]] * pairings(rest[:k] + rest[k + 1:])
        return s

    return pairings(labels)


def free_q4_moment(m: float, D: dict, hbar: float, initial: dict, t: float) -> float:
    """Fourth position moment for ``H = p^2 / 2m``.

    Parameters
    ----------
    D : dict
        Curvature coefficients ``{(mu, nu): D_mu_nu}`` up to total order 4.
    initial : dict
        Raw initial moments ``{(a, b): <p^a q^b>}`` for ``a + b`` in ``{2, 4}``.
    """
    x2 = sum(comb(2, j) * (t / m) ** j * initial.get((j, 2 - j), 0.0) for j in range(3))
    x4 = sum(comb(4, j) * (t / m) ** j * initial.get((j, 4 - j), 0.0) for j in range(5))
    d2 = d_polynomial(D, m, 2)(t)
    d4 = d_polynomial(D, m, 4)(t)
    return float(x4 + 12.0 * (x2 * d2 + 2.0 * hbar**2 * d4 + d2**2))
