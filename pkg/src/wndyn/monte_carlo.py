"""Monte Carlo oracle for linear white-noise dynamics.

Trajectories are advanced exactly between observation times: the flow
``J_dt`` is applied to the state and a Gaussian increment with the smearing
covariance of the interval is added. For quadratic Hamiltonians this has no
time-step bias.

Random numbers come from Philox streams keyed by ``(seed, block)``, where a
block is a fixed-size group of trajectories, so results do not depend on the
number of worker threads.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .averaged_semigroup import smearing_covariance
from .heat_bath import BathSpec, beta_eff, total_hamiltonian
from .noise_model import CovarianceSpec, DiffusionMatrix, diffusion_matrix
from .phase_space import QuadraticHamiltonian, flow_jacobian

__all__ = [
    "SimulationConfig",
    "MomentEstimate",
    "simulate_classical",
    "simulate_total_system",
    "max_workers",
]

BLOCK = 8192
OBSERVABLES = ("p", "q", "p2", "pq", "q2", "p4", "q4", "H")


def max_workers() -> int:
    """Worker cap from ``WNDYN_MAX_WORKERS`` (default: CPU count)."""
    env = os.environ.get("WNDYN_MAX_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass
class SimulationConfig:
    """Inputs of a Monte Carlo run.

    Parameters
    ----------
    n_traj : int
    times : array_like
        Strictly increasing observation times, all ``>= 0``.
    seed : int
    H : QuadraticHamiltonian
        One-pair system Hamiltonian (the bath is added by ``simulate_total_system``).
    noise : CovarianceSpec, DiffusionMatrix or array, optional
    mean, cov : array_like, optional
        Gaussian initial law of ``(p, q)``; ``cov`` of zeros gives a point state.
    bath : BathSpec, optional
    """

    n_traj: int
    times: np.ndarray
    seed: int
    H: QuadraticHamiltonian
    noise: object = None
    mean: np.ndarray = field(default_factory=lambda: np.zeros(2))
    cov: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))
    bath: BathSpec | None = None
    keep_samples: bool = False

    def __post_init__(self):
        self.times = np.atleast_1d(np.asarray(self.times, dtype=float))
        if self.n_traj < 2:
            raise ValueError("need at least two trajectories")
        if np.any(self.times < 0) or np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be nonnegative and strictly increasing")
        if not isinstance(self.H, QuadraticHamiltonian) or self.H.dim != 1:
            raise TypeError("H must be a one-pair QuadraticHamiltonian")
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)

    @property
    def diffusion(self) -> np.ndarray:
        if self.noise is None:
            return np.zeros((2, 2))
        if isinstance(self.noise, CovarianceSpec):
            return diffusion_matrix(self.noise).matrix
        if isinstance(self.noise, DiffusionMatrix):
            return self.noise.matrix
        return np.asarray(self.noise, dtype=float)


@dataclass
class MomentEstimate:
    """Per-time sample means of system observables with standard errors.

    ``estimates[name]`` and ``stderr[name]`` are arrays over ``times``. Raw
    moments are named ``p``, ``q``, ``p2``, ``pq``, ``q2``, ``p4``, ``q4`` and
    ``H``; central ones ``var_p``, ``var_q``, ``cov_pq``, ``c4_p``, ``c4_q``.
    """

    times: np.ndarray
    estimates: dict
    stderr: dict
    n_traj: int
    seed: int
    samples: np.ndarray | None = None

    def __getitem__(self, key):
        return self.estimates[key]

    def contains(self, name: str, value, k: float = 3.0) -> np.ndarray:
        """Whether ``value`` lies within ``k`` standard errors of the estimate, per time."""
        return np.abs(self.estimates[name] - np.asarray(value)) <= k * self.stderr[name]

    def slope(self, name: str, energy=None) -> tuple[float, float]:
        """Least-squares slope of a raw observable against time with its standard error.

        The slope of the sample means equals the mean of per-trajectory slopes, whose
        spread gives an error estimate that accounts for correlations along trajectories.
        """
        if self.samples is None:
            raise ValueError("run with keep_samples=True to fit slopes")
        vals = _observable(self.samples, name, energy)
        t = self.times
        c = (t - t.mean()) / np.sum((t - t.mean()) ** 2)
        per_traj = vals.T @ c
        return float(per_traj.mean()), float(per_traj.std(ddof=1) / np.sqrt(per_traj.size))


def _observable(x: np.ndarray, name: str, energy=None) -> np.ndarray:
    p, q = x[..., 0], x[..., 1]
    if name == "H":
        return energy(x)
    table = {"p": p, "q": q, "p2": p * p, "pq": p * q, "q2": q * q, "p4": p**4, "q4": q**4}
    return table[name]


def _summarise(times, samples, energy, n_traj, seed, keep) -> MomentEstimate:
    est, err = {}, {}
    n = samples.shape[1]
    for name in OBSERVABLES:
        v = _observable(samples, name, energy)
        est[name] = v.mean(axis=1)
        err[name] = v.std(axis=1, ddof=1) / np.sqrt(n)
    p = samples[..., 0] - samples[..., 0].mean(axis=1, keepdims=True)
    q = samples[..., 1] - samples[..., 1].mean(axis=1, keepdims=True)
    for name, a, b in (("var_p", p, p), ("var_q", q, q), ("cov_pq", p, q)):
        prod = a * b
        est[name] = prod.sum(axis=1) / (n - 1)
        err[name] = prod.std(axis=1, ddof=1) / np.sqrt(n)
    for name, a in (("c4_p", p), ("c4_q", q)):
        est[name] = np.mean(a**4, axis=1)
        err[name] = (a**4).std(axis=1, ddof=1) / np.sqrt(n)
    for name in err:
        err[name] = np.maximum(err[name], np.finfo(float).tiny)
    return MomentEstimate(np.asarray(times), est, err, n_traj, seed, samples if keep else None)


def _factor(C: np.ndarray) -> np.ndarray:
    """``L`` with ``L L^T = C`` for symmetric positive semidefinite ``C``."""
    lam, V = np.linalg.eigh(0.5 * (C + C.T))
    return V * np.sqrt(np.clip(lam, 0.0, None))


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))


def _run_blocks(n_traj: int, seed: int, fn) -> np.ndarray:
    blocks = [(b, min(BLOCK, n_traj - b * BLOCK)) for b in range((n_traj + BLOCK - 1) // BLOCK)]
    workers = min(max_workers(), len(blocks))
    if workers <= 1:
        parts = [fn(_block_rng(seed, b), size) for b, size in blocks]
    else:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda bs: fn(_block_rng(seed, bs[0]), bs[1]), blocks))
    return np.concatenate(parts, axis=1)


def _propagators(H: QuadraticHamiltonian, D: np.ndarray, times: np.ndarray):
    steps = np.diff(np.concatenate([[0.0], times]))
    cache, out = {}, []
    for dt in steps:
        key = float(dt)
        if key not in cache:
            J = flow_jacobian(H, dt).J
            C = smearing_covariance(H, D, dt, "observable").C if np.any(D) and dt > 0 else None
            cache[key] = (J, None if C is None else _factor(C))
        out.append(cache[key])
    return out


def simulate_classical(config: SimulationConfig) -> MomentEstimate:
    """Sample the classical Langevin dynamics of one canonical pair."""
    H, D = config.H, config.diffusion
    props = _propagators(H, D, config.times)
    L0 = _factor(config.cov)

    def block(rng, size):
        z = config.mean[None, :] + rng.standard_normal((size, 2)) @ L0.T
        out = np.empty((config.times.size, size, 2))
        for i, (J, Lc) in enumerate(props):
            z = z @ J.T
            if Lc is not None:
                z = z + rng.standard_normal((size, 2)) @ Lc.T
            out[i] = z
        return out

    samples = _run_blocks(config.n_traj, config.seed, block)
    return _summarise(config.times, samples, H, config.n_traj, config.seed, config.keep_samples)


def simulate_total_system(config: SimulationConfig, beta: float, hbar: float = 1.0) -> MomentEstimate:
    """Sample system plus finite bath; bath modes start in Gaussian states at ``beta_eff(hbar omega_j)``.

    Only the system momentum receives noise, with diffusion ``D02`` taken from
    the noise specification.
    """
    bath = config.bath
    if bath is None:
        raise ValueError("config.bath is required")
    m0 = 1.0 / config.H.A[0, 0]
    w0 = np.sqrt(config.H.A[1, 1] / m0)
    if not (np.isclose(m0, bath.m) and np.isclose(w0, bath.omega) and config.H.A[0, 1] == 0):
        raise ValueError("config.H must be the system oscillator of the bath spec")
    Htot = total_hamiltonian(bath, hbar)
    n1 = bath.n + 1
    D = np.zeros((2 * n1, 2 * n1))
    D[0, 0] = config.diffusion[0, 0]
    if np.any(config.diffusion[[0, 1, 1], [1, 0, 1]] != 0):
        raise ValueError("the bath model takes position-only noise")
    props = _propagators(Htot, D, config.times)
    be = beta_eff(hbar * bath.freqs, beta) if bath.n else np.zeros(0)
    sd_p = np.sqrt(bath.masses / be)
    sd_q = np.sqrt(1.0 / (bath.masses * bath.freqs**2 * be))
    L0 = _factor(config.cov)

    def block(rng, size):
        z = np.zeros((size, 2 * n1))
        sys = config.mean[None, :] + rng.standard_normal((size, 2)) @ L0.T
        z[:, 0], z[:, n1] = sys[:, 0], sys[:, 1]
        z[:, 1:n1] = rng.standard_normal((size, bath.n)) * sd_p
        z[:, n1 + 1:] = rng.standard_normal((size, bath.n)) * sd_q
        out = np.empty((config.times.size, size, 2))
        for i, (J, Lc) in enumerate(props):
            z = z @ J.T
            if Lc is not None:
                z = z + rng.standard_normal((size, Lc.shape[1])) @ Lc.T
            out[i, :, 0], out[i, :, 1] = z[:, 0], z[:, n1]
        return out

    samples = _run_blocks(config.n_traj, config.seed, block)
    return _summarise(config.times, samples, config.H, config.n_traj, config.seed, config.keep_samples)
