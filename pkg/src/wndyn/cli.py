"""Command-line experiment runner.

    wndyn run --config exp.json [--seed N] [--out DIR]
    wndyn validate --config exp.json

A config is a JSON object ``{"schema_version": 1, "experiment": ..., "seed": ...,
"params": {...}}``. Each run writes ``<experiment>.csv`` (plus optional extras)
into the output directory. Files start with ``#`` provenance lines.
"""
from __future__ import annotations

import argparse
import hashlib
import io
import json
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .averaged_semigroup import (evolve_wigner, gaussian_wigner, propagate_moments, purity,
                                 WignerGrid)
from .errors import WndynError
from .heat_bath import (GreenFunction, SpectralDensity, discretize_bath, finite_n_green,
                        load_tabulated_density, longtime_limits, reduced_moments, thermal_values)
from .monte_carlo import SimulationConfig, simulate_classical, simulate_total_system
from .noise_model import CovarianceSpec, DiffusionMatrix
from .phase_space import QuadraticHamiltonian

EXPERIMENTS = ("moments", "evolve-wigner", "mc", "bath-green", "thermal", "longtime", "convergence")

TARGETS = {
    "moments": "first and second moments under linear drift and constant diffusion (Monte Carlo vs exact)",
    "evolve-wigner": "averaged Wigner evolution on a grid: norm, purity, second and fourth moments",
    "mc": "system moments of a discretized bath model vs reduced averaged dynamics",
    "bath-green": "retarded Green function of the quantum Langevin equation",
    "thermal": "equilibrium second moments by spectral integral, principal value and Matsubara sum",
    "longtime": "long-time limits of the reduced second moments",
    "convergence": "finite-bath Green function approaching the macroscopic limit",
}

_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_times = {"type": "array", "items": _nonneg, "minItems": 1}
_vec2 = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_mat2 = {"type": "array", "items": _vec2, "minItems": 2, "maxItems": 2}

_noise = {
    "oneOf": [
        {"type": "object", "required": ["family"], "additionalProperties": False,
         "properties": {"family": {"const": "gaussian"}, "C0": _nonneg, "lp": _pos, "lq": _pos}},
        {"type": "object", "required": ["family"], "additionalProperties": False,
         "properties": {"family": {"const": "constant"}, "C0": _nonneg}},
        {"type": "object", "required": ["family", "atoms"], "additionalProperties": False,
         "properties": {"family": {"const": "spectral"},
                        "atoms": {"type": "array", "items": {"type": "array", "items": {"type": "number"},
                                                             "minItems": 3, "maxItems": 3}}}},
        {"type": "object", "required": ["D02", "D20"], "additionalProperties": False,
         "properties": {"D02": _nonneg, "D11": {"type": "number"}, "D20": _nonneg}},
    ]
}

_density = {
    "oneOf": [
        {"type": "object", "required": ["family", "J0", "omega0"], "additionalProperties": False,
         "properties": {"family": {"enum": ["drude", "gaussian"]}, "J0": _pos, "omega0": _pos}},
        {"type": "object", "required": ["family", "path"], "additionalProperties": False,
         "properties": {"family": {"const": "tabulated"}, "path": {"type": "string"}}},
    ]
}

_common = {"m": _pos, "omega": _nonneg, "hbar": _nonneg, "beta": _pos}

PARAMS = {
    "moments": {"noise": _noise, "mean": _vec2, "cov": _mat2, "times": _times,
                "n_traj": {"type": "integer", "minimum": 2}},
    "evolve-wigner": {"noise": _noise, "mean": _vec2, "cov": _mat2, "times": _times,
                      "n": {"type": "integer", "minimum": 16}, "half_width": _pos,
                      "save_grid": {"type": "boolean"}},
    "mc": {"density": _density, "noise": _noise, "cov": _mat2, "times": _times,
           "n_traj": {"type": "integer", "minimum": 2}, "n_bath": {"type": "integer", "minimum": 1},
           "cutoff": _pos},
    "bath-green": {"density": _density, "t_max": _pos, "n_samples": {"type": "integer", "minimum": 2}},
    "thermal": {"density": _density},
    "longtime": {"density": _density, "noise": _noise, "horizon": _pos},
    "convergence": {"density": _density, "ns": {"type": "array", "items": {"type": "integer", "minimum": 1},
                                                "minItems": 1},
                    "cutoff_scale": _pos, "t_max": _pos, "n_samples": {"type": "integer", "minimum": 2}},
}

REQUIRED = {
    "moments": ["noise", "times"],
    "evolve-wigner": ["noise", "times"],
    "mc": ["density", "times"],
    "bath-green": ["density"],
    "thermal": ["density", "beta"],
    "longtime": ["density", "beta"],
    "convergence": ["density"],
}

SCHEMA = {
    "type": "object",
    "required": ["schema_version", "experiment", "params"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": 1},
        "experiment": {"enum": list(EXPERIMENTS)},
        "seed": {"type": "integer", "minimum": 0},
        "params": {"type": "object"},
    },
    "allOf": [
        {"if": {"properties": {"experiment": {"const": name}}},
         "then": {"properties": {"params": {"type": "object", "additionalProperties": False,
                                            "required": REQUIRED[name],
                                            "properties": {**_common, **PARAMS[name]}}}}}
        for name in EXPERIMENTS
    ],
}


class ConfigError(ValueError):
    pass


def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg) -> None:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from exc


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


# -- parameter builders ----------------------------------------------------------

def _noise(d: dict | None, hbar: float = 1.0):
    if d is None:
        return None
    if "family" not in d:
        return DiffusionMatrix(d["D02"], d.get("D11", 0.0), d["D20"])
    if d["family"] == "gaussian":
        return CovarianceSpec.gaussian(d.get("C0", 1.0), d.get("lp", np.inf), d.get("lq", np.inf))
    if d["family"] == "constant":
        return CovarianceSpec.constant(d.get("C0", 1.0))
    return CovarianceSpec.spectral(d["atoms"], hbar)


def _density(d: dict) -> SpectralDensity:
    if d["family"] == "tabulated":
        return load_tabulated_density(d["path"])
    return getattr(SpectralDensity, d["family"])(d["J0"], d["omega0"])


def _hamiltonian(p: dict) -> QuadraticHamiltonian:
    m, omega, hbar = p.get("m", 1.0), p.get("omega", 0.0), p.get("hbar", 1.0)
    if omega == 0:
        return QuadraticHamiltonian.free(m, hbar)
    return QuadraticHamiltonian.harmonic(m, omega, hbar)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


# -- experiments -------------------------------------------------------------------
# Each returns (header, rows, extra files).

def _moments(p, seed):
    H = _hamiltonian(p)
    noise = _noise(p["noise"], p.get("hbar", 1.0))
    mean = np.asarray(p.get("mean", [0.0, 0.0]), dtype=float)
    cov = np.asarray(p.get("cov", [[0.0, 0.0], [0.0, 0.0]]), dtype=float)
    n_traj = p.get("n_traj", 10000)
    cfg = SimulationConfig(n_traj, p["times"], seed, H, noise, mean=mean, cov=cov)
    est = simulate_classical(cfg)
    exact = propagate_moments(H, cfg.diffusion, mean, cov + np.outer(mean, mean), cfg.times)
    rows = []
    for i, t in enumerate(cfg.times):
        for name in ("p", "q", "p2", "pq", "q2", "H"):
            rows.append([t, name, est[name][i], est.stderr[name][i], n_traj, seed, exact[name][i]])
    return ["time", "observable", "estimate", "stderr", "n_traj", "seed", "exact"], rows, {}


def _evolve_wigner(p, seed):
    H = _hamiltonian(p)
    spec = _noise(p["noise"], p.get("hbar", 1.0))
    if not isinstance(spec, CovarianceSpec):
        raise ConfigError("evolve-wigner needs a covariance family, not a bare diffusion matrix")
    hbar = p.get("hbar", 1.0)
    n, hw = p.get("n", 256), p.get("half_width", 12.0)
    ax = WignerGrid.axis(n, hw)
    w = gaussian_wigner(p.get("mean", [0.0, 0.0]), p.get("cov", [[0.5, 0.0], [0.0, 0.5]]), ax, ax, hbar)
    rows, prev = [], 0.0
    for t in p["times"]:
        if t > prev:
            w = evolve_wigner(w, H, spec, t - prev)
            prev = t
        rows.append([t, w.mass(), purity(w), w.moment(2, 0), w.moment(0, 2), w.moment(0, 4)])
    extra = {}
    if p.get("save_grid"):
        extra["evolve-wigner-grid.csv"] = w
    return ["time", "mass", "purity", "p2", "q2", "q4"], rows, extra


def _mc(p, seed):
    J = _density(p["density"])
    m, omega, hbar, beta = p.get("m", 1.0), p.get("omega", 1.0), p.get("hbar", 1.0), p.get("beta", 1.0)
    n_bath = p.get("n_bath", 400)
    cutoff = p.get("cutoff", 20.0 * max(J.scale, omega, 1.0))
    noise = _noise(p.get("noise"), p.get("hbar", 1.0))
    cov = np.asarray(p.get("cov", [[0.5, 0.0], [0.0, 0.5]]), dtype=float)
    bath = discretize_bath(J, n_bath, cutoff, m, omega)
    n_traj = p.get("n_traj", 10000)
    cfg = SimulationConfig(n_traj, p["times"], seed, QuadraticHamiltonian.harmonic(m, omega, hbar), noise,
                           cov=cov, bath=bath)
    est = simulate_total_system(cfg, beta, hbar)
    init = {"p2": cov[0, 0], "pq": cov[0, 1], "q2": cov[1, 1]}
    p2, q2 = reduced_moments(J, noise, m, omega, beta, hbar, cfg.times, initial=init)
    rows = []
    for i, t in enumerate(cfg.times):
        rows.append([t, "p2", est["p2"][i], est.stderr["p2"][i], n_traj, seed, p2[i]])
        rows.append([t, "q2", est["q2"][i], est.stderr["q2"][i], n_traj, seed, q2[i]])
    return ["time", "observable", "estimate", "stderr", "n_traj", "seed", "reduced"], rows, {}


def _bath_green(p, seed):
    J = _density(p["density"])
    gf = GreenFunction(J, p.get("m", 1.0), p.get("omega", 0.0), p.get("t_max"))
    t, g, gd, gdd = gf.samples(p.get("n_samples", 2001))
    return ["t", "G", "Gdot", "Gddot"], np.column_stack([t, g, gd, gdd]).tolist(), {}


def _thermal(p, seed):
    J = _density(p["density"])
    m, omega, hbar, beta = p.get("m", 1.0), p.get("omega", 1.0), p.get("hbar", 1.0), p["beta"]
    which = ("p2", "q2") if omega > 0 else ("p2",)
    rows = []
    for method in ("spectral-integral", "pv-integral", "matsubara"):
        p2, q2 = thermal_values(J, m, omega, beta, hbar, method=method, which=which)
        rows.append([method, p2, q2])
    return ["method", "p2", "q2"], rows, {}


def _longtime(p, seed):
    J = _density(p["density"])
    m, omega, hbar, beta = p.get("m", 1.0), p.get("omega", 1.0), p.get("hbar", 1.0), p["beta"]
    noise = _noise(p.get("noise"), p.get("hbar", 1.0))
    lim = longtime_limits(J, noise, m, omega, beta, hbar)
    rows = [[k, v] for k, v in lim.items()]
    gf = GreenFunction(J, m, omega)
    T = p.get("horizon", 10.0 / gf.eta)
    if omega == 0:
        ts = np.linspace(T / 2, T, 11)
        _, q2 = reduced_moments(J, noise, m, omega, beta, hbar, ts)
        rows.append(["diffusion_constant_fit", float(np.polyfit(ts, q2, 1)[0])])
    else:
        p2, q2 = reduced_moments(J, noise, m, omega, beta, hbar, [T])
        rows += [["p2_reduced_at_horizon", p2[0]], ["q2_reduced_at_horizon", q2[0]]]
    rows.append(["horizon", T])
    return ["quantity", "value"], rows, {}


def _convergence(p, seed):
    J = _density(p["density"])
    m, omega = p.get("m", 1.0), p.get("omega", 0.0)
    t_max = p.get("t_max", 10.0)
    gf = GreenFunction(J, m, omega, t_max=t_max)
    t, g, _, _ = gf.samples(p.get("n_samples", 2001))
    rows = []
    for n in p.get("ns", [100, 200, 400, 800]):
        cutoff = p.get("cutoff_scale", 5.0) * np.sqrt(n)
        err = np.max(np.abs(finite_n_green(discretize_bath(J, n, cutoff, m, omega), t) - g))
        rows.append([n, cutoff, err])
    return ["n", "cutoff", "sup_error"], rows, {}


RUNNERS = {
    "moments": _moments,
    "evolve-wigner": _evolve_wigner,
    "mc": _mc,
    "bath-green": _bath_green,
    "thermal": _thermal,
    "longtime": _longtime,
    "convergence": _convergence,
}


def render_csv(cfg: dict, seed: int, header, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# wndyn {__version__}\n")
    buf.write(f"# experiment: {cfg['experiment']}\n")
    buf.write(f"# config_sha256: {config_hash(cfg)}\n")
    buf.write(f"# seed: {seed}\n")
    buf.write(f"# target: {TARGETS[cfg['experiment']]}\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(x if isinstance(x, str) else _fmt(x) for x in row) + "\n")
    return buf.getvalue()


def run(cfg: dict, seed: int | None = None, out: str | Path = ".") -> list[Path]:
    """Validate and execute one experiment; return the written paths."""
    validate_config(cfg)
    seed = cfg.get("seed", 0) if seed is None else seed
    header, rows, extra = RUNNERS[cfg["experiment"]](cfg["params"], seed)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{cfg['experiment']}.csv"
    path.write_text(render_csv(cfg, seed, header, rows))
    written = [path]
    for name, grid in extra.items():
        grid.to_csv(out / name)
        written.append(out / name)
    return written


def _fail(kind: str, exc: Exception, code: int) -> int:
    print(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="wndyn", description="Averaged white-noise dynamics experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--out", default=".")
    p_val = sub.add_parser("validate", help="check a config against the schema")
    p_val.add_argument("--config", required=True)
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        return _fail("config", exc, 2)
    if args.command == "validate":
        print(json.dumps({"valid": True, "experiment": cfg["experiment"], "config_sha256": config_hash(cfg)}))
        return 0
    try:
        paths = run(cfg, args.seed, args.out)
    except ConfigError as exc:
        return _fail("config", exc, 2)
    except (WndynError, ValueError, OSError) as exc:
        return _fail("runtime", exc, 1)
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
