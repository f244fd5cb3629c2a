import json

import numpy as np
import pytest
from scipy import integrate

from wndyn.errors import AssumptionViolation
from wndyn.heat_bath import (
    BathSpec,
    GreenFunction,
    SpectralDensity,
    beta_eff,
    build_bath,
    discretize_bath,
    equilibrium_bounds,
    finite_n_green,
    finite_n_green_dot,
    finite_n_moments,
    gamma_hat,
    gamma_hat_imag_axis,
    gn_identity_check,
    green_hat,
    load_tabulated_density,
    longtime_limits,
    parseval_integrals,
    phi_beta,
    phi_beta_finite,
    reduced_moments,
    thermal_values,
    total_hamiltonian,
)
from wndyn.noise_model import CovarianceSpec

DRUDE = SpectralDensity.drude(0.2, 5.0)


def tabulated_drude(J0=0.2, w0=5.0, top=200.0, n=4001):
    nu = np.linspace(0, top, n)
    return SpectralDensity.tabulated(nu, J0 * w0**2 / (w0**2 + nu**2))


# -- effective temperature and bath matrices -------------------------------------

def test_beta_eff_values():
    assert beta_eff(0.0, 2.0) == 2.0
    assert beta_eff(2.0, 1.0) == pytest.approx(np.tanh(1.0))
    assert beta_eff(1e6, 1.0) == pytest.approx(2e-6)
    assert beta_eff(1e-7, 1.3) == pytest.approx(1.3)
    with pytest.raises(ValueError):
        beta_eff(-1.0, 1.0)


def test_build_bath_no_modes():
    M, O2 = build_bath(BathSpec(2.0, 1.5))
    np.testing.assert_array_equal(O2, [[2.25]])
    np.testing.assert_array_equal(M, [[2.0]])


def test_build_bath_single_mode():
    _, O2 = build_bath(BathSpec(1.0, 0.0, [1.0], [1.0]))
    np.testing.assert_allclose(O2, [[1, -1], [-1, 1]])
    np.testing.assert_allclose(np.linalg.eigvalsh(O2), [0, 2], atol=1e-15)


def test_total_hamiltonian_is_psd():
    spec = BathSpec(1.0, 0.5, [0.3, 0.7, 1.1], [0.5, 1.0, 2.0])
    H = total_hamiltonian(spec)
    assert H.dim == 4
    assert np.linalg.eigvalsh(H.A).min() >= -1e-12


def test_bath_spec_validation():
    with pytest.raises(ValueError):
        BathSpec(1.0, 1.0, [1.0, 1.0], [2.0, 1.0])
    with pytest.raises(ValueError):
        BathSpec(1.0, 1.0, [-1.0], [1.0])
    with pytest.raises(ValueError):
        BathSpec(1.0, 1.0, [1.0], [1.0, 2.0])


def test_discretized_friction_at_zero():
    spec = discretize_bath(DRUDE, 4000, 10000.0)
    assert spec.gamma0 == pytest.approx(DRUDE.gamma0, rel=1e-3)
    assert np.all(np.diff(spec.freqs) > 0)


# -- finite-bath Green function ------------------------------------------------------

def test_no_modes_green_is_sine():
    spec = BathSpec(1.0, 1.3)
    s = np.linspace(0, 10, 101)
    np.testing.assert_allclose(finite_n_green(spec, s), np.sin(1.3 * s) / 1.3, atol=1e-14)
    assert gn_identity_check(spec, s) <= 1e-12


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("n", [1, 5, 12, 20])
def test_finite_n_identity(seed, n):
    rng = np.random.default_rng(seed)
    freqs = np.sort(rng.uniform(0.2, 4.0, n))
    spec = BathSpec(rng.uniform(0.5, 2), rng.uniform(0, 2), rng.uniform(0.05, 1.0, n), freqs)
    assert gn_identity_check(spec, np.linspace(0, 10, 201)) <= 1e-10


def test_finite_n_causal_and_initial_values():
    spec = discretize_bath(DRUDE, 50, 40.0, 1.0, 1.0)
    assert finite_n_green(spec, -0.5) == 0.0
    assert finite_n_green(spec, 0.0) == 0.0
    assert finite_n_green_dot(spec, 0.0) == pytest.approx(1.0)


def test_finite_n_moments_zero_time():
    spec = discretize_bath(DRUDE, 20, 40.0, 1.0, 1.0)
    out = finite_n_moments(spec, 0.7, 0.0)
    assert out["p2_noise"] == 0.0 and out["q2_noise"] == 0.0


def test_finite_n_moments_no_modes():
    # free oscillator: added terms are curvature * int cos^2 and curvature * int sin^2 / w^2
    w, t, c = 1.3, 2.1, 0.4
    out = finite_n_moments(BathSpec(1.0, w), c, t)
    assert out["p2_noise"] == pytest.approx(c * (t / 2 + np.sin(2 * w * t) / (4 * w)))
    assert out["q2_noise"] == pytest.approx(c / w**2 * (t / 2 - np.sin(2 * w * t) / (4 * w)))


def test_finite_n_converges_to_macroscopic():
    gf = GreenFunction(DRUDE, 1.0, 1.0, t_max=10.0)
    t, g, _, _ = gf.samples(1001)
    errs = [np.max(np.abs(finite_n_green(discretize_bath(DRUDE, n, 5 * np.sqrt(n), 1.0, 1.0), t) - g))
            for n in (100, 200, 400, 800)]
    assert np.all(np.diff(errs) < 0)


# -- spectral densities ------------------------------------------------------------

def test_ohmic_rejected():
    with pytest.raises(AssumptionViolation):
        SpectralDensity("ohmic")


def test_nonpositive_amplitude_rejected():
    with pytest.raises(AssumptionViolation):
        SpectralDensity.drude(0.0, 1.0)


def test_tabulated_checks():
    nu = np.linspace(0, 50, 501)
    with pytest.raises(AssumptionViolation):
        SpectralDensity.tabulated(nu, np.ones_like(nu))  # nu^2 J grows
    with pytest.raises(AssumptionViolation):
        SpectralDensity.tabulated(nu, 1 / (1 + nu**2) - 0.5)  # negative
    sym = np.concatenate([-nu[:0:-1], nu])
    vals = 1 / (1 + sym**2)
    assert SpectralDensity.tabulated(sym, vals)(3.0) == pytest.approx(0.1, rel=1e-4)
    with pytest.raises(AssumptionViolation):
        SpectralDensity.tabulated(sym, vals * (1 + 0.1 * (sym > 0)))  # not even


def test_tabulated_from_json(tmp_path):
    nu = np.linspace(0, 200, 2001)
    path = tmp_path / "J.json"
    path.write_text(json.dumps({"nu": nu.tolist(), "J": (0.2 * 25 / (25 + nu**2)).tolist()}))
    J = load_tabulated_density(path)
    assert J(1.0) == pytest.approx(DRUDE(1.0), rel=1e-6)
    assert J(500.0) == pytest.approx(DRUDE(500.0), rel=1e-3)
    assert J.gamma0 == pytest.approx(DRUDE.gamma0, rel=1e-4)


# -- friction transform ------------------------------------------------------------

@pytest.mark.parametrize("J", [DRUDE, SpectralDensity.gaussian(0.3, 2.0)], ids=["drude", "gaussian"])
def test_closed_forms_match_quadrature(J):
    for z in (0.7, 3.0, 1.2 + 0.5j, -2.0 + 0.1j, 4j):
        assert gamma_hat(J, z) == pytest.approx(gamma_hat(J, z, method="quadrature"), rel=1e-8, abs=1e-10)


def test_drude_closed_form():
    z = 0.3 + 0.8j
    assert gamma_hat(DRUDE, z) == pytest.approx(1j * np.pi * 0.2 * 5 / (z + 5j))


@pytest.mark.parametrize("J", [DRUDE, SpectralDensity.gaussian(0.3, 2.0), tabulated_drude()],
                         ids=["drude", "gaussian", "tabulated"])
def test_real_part_on_axis(J):
    nu = np.array([0.0, 0.4, 2.0, 7.0])
    np.testing.assert_allclose(np.real(gamma_hat(J, nu)), np.pi * J(nu), rtol=1e-10)


def test_tabulated_matches_drude_off_axis():
    J = tabulated_drude()
    for z in (1.0 + 0.3j, 2.0):
        assert gamma_hat(J, z) == pytest.approx(gamma_hat(DRUDE, z), rel=1e-3)


def test_decay_at_imaginary_infinity():
    for J in (DRUDE, SpectralDensity.gaussian(0.3, 2.0)):
        assert abs(gamma_hat(J, 1e8j)) < 1e-6
        assert gamma_hat_imag_axis(J, 2.5) == pytest.approx(gamma_hat(J, 2.5j).real, rel=1e-12)


def test_spectral_identity():
    m, w = 1.3, 0.8
    nu = np.linspace(0.05, 20, 50)
    G = green_hat(DRUDE, m, w, nu)
    np.testing.assert_allclose(G.imag, np.pi / m * DRUDE(nu) * nu * np.abs(G) ** 2, rtol=1e-6)
    assert np.all(np.isfinite(G))


# -- Green function ----------------------------------------------------------------

@pytest.mark.parametrize("omega", [0.0, 1.0])
@pytest.mark.parametrize("J", [DRUDE, SpectralDensity.gaussian(0.3, 2.0)], ids=["drude", "gaussian"])
def test_initial_values_and_causality(J, omega):
    gf = GreenFunction(J, 1.0, omega)
    s = np.array([1e-6, -1.0])
    g, gd, gdd = gf.G(s), gf.Gdot(s), gf.Gddot(s)
    assert abs(g[0]) <= 1e-4 and abs(gd[0] - 1) <= 1e-4 and abs(gdd[0]) <= 1e-4
    assert g[1] == gd[1] == gdd[1] == 0.0


def test_weak_coupling_is_undamped():
    gf = GreenFunction(SpectralDensity.drude(1e-5, 5.0), 1.0, 1.0, t_max=5.0)
    t, g, _, _ = gf.samples(501)
    assert np.max(np.abs(g - np.sin(t))) <= 1e-3


@pytest.mark.parametrize("m", [1.0, 2.5])
def test_free_particle_plateau(m):
    J = SpectralDensity.drude(0.4, 3.0)
    gf = GreenFunction(J, m, 0.0)
    assert gf.G(gf.t_max) == pytest.approx(m / (np.pi * J(0.0)), rel=5e-3)


def test_uniform_matches_direct_sums():
    gf = GreenFunction(DRUDE, 1.0, 1.0, t_max=20.0)
    t, g, gd, gdd = gf.uniform(0.01, 2000)
    ref = np.stack([gf.G(t), gf.Gdot(t), gf.Gddot(t)])
    np.testing.assert_allclose(np.stack([g, gd, gdd]), ref, atol=1e-12)


def test_green_solves_langevin_equation():
    # G'' + omega^2 G + (1/m) int_0^t gamma(t - s) G'(s) ds = 0
    m, w = 1.0, 1.0
    gf = GreenFunction(DRUDE, m, w, t_max=10.0)
    h = 0.001
    t, g, gd, gdd = gf.uniform(h, 5000)
    k = 3000
    conv = integrate.simpson(DRUDE.gamma_t(t[k] - t[:k + 1]) * gd[:k + 1], x=t[:k + 1])
    assert gdd[k] + w**2 * g[k] + conv / m == pytest.approx(0.0, abs=1e-7)


def test_eta_positive_and_csv(tmp_path):
    gf = GreenFunction(DRUDE, 1.0, 1.0)
    assert 0 < gf.eta < 10
    gf.to_csv(tmp_path / "g.csv", n=11)
    data = np.loadtxt(tmp_path / "g.csv", delimiter=",", skiprows=1)
    assert data.shape == (11, 4)
    assert (tmp_path / "g.csv").read_text().startswith("t,G,Gdot,Gddot")


# -- correlation -------------------------------------------------------------------

def test_phi_integral():
    assert phi_beta(DRUDE, 0.7, 1.0).integral() == pytest.approx(2 * np.pi * DRUDE(0.0) / 0.7)
    J = SpectralDensity.gaussian(0.3, 2.0)
    corr = phi_beta(J, 0.7, 1.0)
    t = np.linspace(0, 12, 601)
    numeric = 2 * integrate.simpson(corr(t), x=t)
    assert numeric == pytest.approx(2 * np.pi * J(0.0) / 0.7, rel=1e-4)


def test_phi_drude_diverges_at_origin():
    corr = phi_beta(DRUDE, 0.7, 1.0)
    assert corr(0.0) == np.inf
    assert np.isfinite(corr(1e-3)) and corr(1e-3) > corr(1e-2) > 0


def test_phi_even_and_classical_limit():
    corr = phi_beta(DRUDE, 0.5, 1e-6)
    for s in (0.2, 1.0):
        assert corr(-s) == corr(s)
        assert corr(s) == pytest.approx(DRUDE.gamma_t(s) / 0.5, rel=1e-6)


def test_phi_finite_single_mode():
    phi = phi_beta_finite(BathSpec(1.0, 1.0, [1.0], [2.0]), 1.0, 1.0)
    assert phi.amplitudes[0] == pytest.approx(4 / np.tanh(1.0))
    assert phi(0.0) == pytest.approx(5.2521, abs=1e-4)


def test_phi_rejects_zero_temperature():
    with pytest.raises(ValueError):
        phi_beta(DRUDE, np.inf, 1.0)


# -- reduced dynamics and equilibrium ---------------------------------------------

def test_reduced_moments_at_zero():
    init = {"p2": 0.7, "pq": 0.1, "q2": 0.4}
    p2, q2 = reduced_moments(DRUDE, 0.3, 1.0, 1.0, 1.0, 1.0, [0.0], initial=init)
    assert p2[0] == 0.7 and q2[0] == 0.4


def test_reduced_moments_match_finite_bath():
    spec = discretize_bath(DRUDE, 400, 100.0, 1.0, 1.0)
    S0 = np.diag([0.5, 0.5])
    p2, q2 = reduced_moments(DRUDE, 0.2, 1.0, 1.0, 2.0, 1.0, [1.0, 3.0], initial={"p2": 0.5, "pq": 0, "q2": 0.5})
    for i, t in enumerate([1.0, 3.0]):
        ref = finite_n_moments(spec, 0.2, t, S0, beta=2.0, hbar=1.0)
        assert p2[i] == pytest.approx(ref["p2"], rel=2e-3)
        assert q2[i] == pytest.approx(ref["q2"], rel=2e-3)


def test_reduced_relaxes_to_thermal():
    gf = GreenFunction(DRUDE, 1.0, 1.0)
    T = 10 / gf.eta
    p2, q2 = reduced_moments(DRUDE, None, 1.0, 1.0, 1.0, 1.0, [T], green_fn=gf)
    p_eq, q_eq = thermal_values(DRUDE, 1.0, 1.0, 1.0, 1.0)
    assert p2[0] == pytest.approx(p_eq, rel=1e-2)
    assert q2[0] == pytest.approx(q_eq, rel=1e-2)


def test_noise_spec_must_be_position_only():
    with pytest.raises(ValueError):
        reduced_moments(DRUDE, CovarianceSpec.gaussian(1.0, 1.0, 1.0), 1.0, 1.0, 1.0, 1.0, [1.0])


@pytest.mark.parametrize("beta,J0", [(0.5, 0.1), (1.0, 0.2), (3.0, 0.5)])
def test_three_thermal_methods(beta, J0):
    J = SpectralDensity.drude(J0, 5.0)
    ref = thermal_values(J, 1.0, 1.0, beta, 1.0, "spectral-integral")
    for method in ("pv-integral", "matsubara"):
        np.testing.assert_allclose(thermal_values(J, 1.0, 1.0, beta, 1.0, method), ref, rtol=1e-3)


def test_thermal_low_friction():
    J = SpectralDensity.drude(1e-4, 5.0)
    p2, _ = thermal_values(J, 1.0, 1.0, 2.0, 1.0)
    assert p2 == pytest.approx(0.5 / np.tanh(1.0), rel=1e-2)


def test_thermal_equipartition():
    m, w, beta = 1.5, 0.8, 2.0
    p2, q2 = thermal_values(DRUDE, m, w, beta, 1e-5)
    assert p2 == pytest.approx(m / beta, rel=1e-3)
    assert m * w**2 * q2 == pytest.approx(1 / beta, rel=1e-3)


def test_free_particle_position_rejected():
    with pytest.raises(ValueError):
        thermal_values(DRUDE, 1.0, 0.0, 1.0, 1.0, which=("p2", "q2"))


def test_inequality_chain():
    b = equilibrium_bounds(DRUDE, 1.0, 1.0, 1.0, 1.0)
    chain = [b["lower_q"], b["potential"], b["mid"], b["kinetic"], b["upper_p"]]
    assert all(x <= y * (1 + 1e-10) for x, y in zip(chain, chain[1:]))


def test_free_diffusion_constant():
    J = SpectralDensity.drude(1.0, 5.0)
    assert longtime_limits(J, None, 1.0, 0.0, 1.0, 1.0)["diffusion_constant"] == pytest.approx(2 / np.pi)


def test_noise_terms_independent_of_hbar():
    a = longtime_limits(DRUDE, 0.3, 1.0, 1.0, 1.0, 1.0)
    b = longtime_limits(DRUDE, 0.3, 1.0, 1.0, 1.0, 0.2)
    assert a["p2_noise"] == b["p2_noise"] and a["q2_noise"] == b["q2_noise"]
    assert a["p2_thermal"] != b["p2_thermal"]


@pytest.mark.parametrize("which", ["Gdot", "G"])
def test_parseval(which):
    time_side, freq_side = parseval_integrals(DRUDE, 1.0, 1.0, which)
    assert time_side == pytest.approx(freq_side, rel=5e-3)
