"""Experiment definitions, config loading and CSV/JSON output.

A config is an INI file. ``[experiment] name`` picks the experiment. The other
sections (``market``, ``grid``, ``exploration``, ``bounds``, ``learn``,
``quadratic``, ``simulation``, ``factor``) supply parameters, and anything
omitted falls back to the defaults in ``DEFAULTS``. Every experiment writes
plottable CSVs plus ``summary.json``, which holds closed-form reference
values next to the simulated or learned ones, and ``manifest.json``.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import math
import os
import subprocess
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import closedform_log as cl
from . import closedform_quad as cq
from .factor import FactorModel, factor_value, feynman_kac_f, h_of_y
from .learner import (
    DivergenceError,
    LearnConfig,
    ModelVariant,
    default_phi_init,
    policy_dist,
    train,
    true_phi,
    true_theta,
)
from .market import MarketParams, SimGrid, merton_fraction, rollout
from .stats import kl_trunc, trunc_mean, trunc_variance

__version__ = "0.1.0"


class ConfigError(ValueError):
    """The config file is missing, malformed or inconsistent."""


# ---------------------------------------------------------------- CSV


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def emit_csv(rows, schema, path) -> Path:
    """Write ``rows`` under the header ``schema``: LF endings, 12 significant digits."""
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(schema)
            for i, row in enumerate(rows):
                row = list(row)
                if len(row) != len(schema):
                    raise ValueError(f"{path}: row {i} has {len(row)} fields, schema has {len(schema)}")
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


# ---------------------------------------------------------------- config


DEFAULTS = {
    "experiment": {"name": "", "seeds": "0", "out": ""},
    "market": {"r": "0.03", "mu": "0.08", "sigma": "0.3"},
    "grid": {"T": "1", "dt": "0.004"},
    "exploration": {"m": "0.01", "m_values": ""},
    "bounds": {"a": "0", "b": "1", "a_values": "-1, -0.5, 0", "b_values": "1, 1.5, 2"},
    "learn": {
        "eta_theta": "0.01",
        "eta_phi": "0.001",
        "iterations": "2000",
        "n_paths": "1000",
        "decay": "0.51",
        "theta_init": "true",
        "theta_init_noise": "0.01",
        "phi_init": "default",
        "phi_init_noise": "0",
        "pe_form": "mean",
        "checkpoints": "500, 1000, 2000, 3000, 4000, 5000, 10000",
        "x0": "1",
    },
    "quadratic": {"K": "1", "eps": "1", "x0": "0.5", "t_eval": "0.5", "x_eval": "0.5"},
    "simulation": {"n_paths": "10000", "x0": "1", "stepping": "exploratory-moments"},
    "factor": {"y0": "0", "kappa": "1", "ybar": "0", "eta": "0.5", "tilt": "0.2", "n_paths": "2000", "n_steps": "100"},
}


def _floats(s) -> list[float]:
    return [float(v) for v in s.replace(";", ",").split(",") if v.strip()]


def _seeds(s) -> list[int]:
    out = []
    for part in s.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


@dataclass
class ExperimentConfig:
    experiment: str
    market: MarketParams
    grid: SimGrid
    m: float
    m_values: list[float]
    bounds: cl.IntervalBounds
    seeds: list[int]
    out: str
    sections: dict = field(default_factory=dict)

    def get(self, section, key) -> str:
        return self.sections[section][key]

    def getf(self, section, key) -> float:
        return float(self.get(section, key))

    def geti(self, section, key) -> int:
        return int(self.get(section, key))


def parse_config(text: str, source="<string>") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    sections = {k: dict(v) for k, v in DEFAULTS.items()}
    for name in cp.sections():
        if name not in DEFAULTS:
            raise ConfigError(f"{source}: unknown section [{name}]")
        for key, val in cp.items(name):
            if key not in DEFAULTS[name]:
                raise ConfigError(f"{source}: unknown key {key!r} in [{name}]")
            sections[name][key] = val
    exp = sections["experiment"]["name"].strip()
    if exp not in EXPERIMENTS:
        raise ConfigError(f"{source}: unknown experiment {exp!r}; known: {', '.join(EXPERIMENTS)}")
    try:
        mk = sections["market"]
        market = MarketParams(float(mk["r"]), float(mk["mu"]), float(mk["sigma"]))
        grid = SimGrid(float(sections["grid"]["T"]), float(sections["grid"]["dt"]))
        m = float(sections["exploration"]["m"])
        m_values = _floats(sections["exploration"]["m_values"])
        bounds = cl.IntervalBounds(float(sections["bounds"]["a"]), float(sections["bounds"]["b"]))
        seeds = _seeds(sections["experiment"]["seeds"])
        # touch every numeric field once so typos surface at check time
        for sec in ("learn", "quadratic", "simulation", "factor"):
            for key, val in sections[sec].items():
                if key in ("theta_init", "phi_init", "pe_form", "stepping", "checkpoints"):
                    continue
                float(val)
        _floats(sections["learn"]["checkpoints"])
        _floats(sections["bounds"]["a_values"])
        _floats(sections["bounds"]["b_values"])
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    if not seeds:
        raise ConfigError(f"{source}: seeds must be nonempty")
    if m < 0 or any(v < 0 for v in m_values):
        raise ConfigError(f"{source}: exploration weights must be nonnegative")
    if sections["learn"]["pe_form"] not in ("mean", "pathwise", "terminal"):
        raise ConfigError(f"{source}: pe_form must be mean, pathwise or terminal")
    if sections["simulation"]["stepping"] not in ("exploratory-moments", "action-sampled"):
        raise ConfigError(f"{source}: stepping must be exploratory-moments or action-sampled")
    out = sections["experiment"]["out"].strip() or os.path.join("results", exp)
    return ExperimentConfig(exp, market, grid, m, m_values, bounds, seeds, out, sections)


def preset_names() -> list[str]:
    folder = resources.files("explorer") / "presets"
    return sorted(p.name[:-4] for p in folder.iterdir() if p.name.endswith(".ini"))


def load_config(ref: str) -> ExperimentConfig:
    """Load a config file path, or a shipped preset by name."""
    path = Path(ref)
    if path.is_file():
        return parse_config(path.read_text(encoding="utf-8"), source=str(path))
    name = ref[:-4] if ref.endswith(".ini") else ref
    res = resources.files("explorer") / "presets" / f"{name}.ini"
    if res.is_file():
        return parse_config(res.read_text(encoding="utf-8"), source=f"preset:{name}")
    raise ConfigError(f"no config file or preset named {ref!r}")


# ---------------------------------------------------------------- experiments


def _m_values(cfg, default):
    return cfg.m_values or default


def exp_cost_curve(cfg: ExperimentConfig, out: Path):
    T, mkt = cfg.grid.T, cfg.market
    ms = _m_values(cfg, list(np.logspace(math.log10(0.001), math.log10(2.0), 60)))
    b_fixed, a_fixed = 1.0, 0.0
    sweeps = [("unconstrained", -math.inf, math.inf)]
    sweeps += [("lower", a, b_fixed) for a in _floats(cfg.get("bounds", "a_values"))]
    sweeps += [("upper", a_fixed, b) for b in _floats(cfg.get("bounds", "b_values"))]
    rows = []
    worst_unc = 0.0
    dominated = True
    for sweep, a, b in sweeps:
        for m in ms:
            if sweep == "unconstrained":
                cost = cl.exploration_cost_unconstrained(m, T)
                worst_unc = max(worst_unc, abs(cost - m * T / 2))
            else:
                cost = cl.exploration_cost_constrained(m, T, mkt, (a, b))
                if a < merton_fraction(mkt) < b:
                    dominated &= cost <= m * T / 2
            rows.append((sweep, a, b, m, cost))
    emit_csv(rows, ["sweep", "a", "b", "m", "cost"], out / "cost_vs_m.csv")
    return {
        "files": ["cost_vs_m.csv"],
        "true": {"unconstrained_cost_law": "m*T/2"},
        "checks": {"max_abs_unconstrained_minus_mT_over_2": worst_unc, "constrained_le_unconstrained": bool(dominated)},
    }


def exp_value_gap(cfg: ExperimentConfig, out: Path):
    T, mkt, bd = cfg.grid.T, cfg.market, cfg.bounds
    ms = _m_values(cfg, [2.0, 0.001])
    ts = np.linspace(0.0, T, 21)
    xs = np.linspace(0.1, 2.0, 20)
    rows, max_gap = [], {}
    for m in ms:
        gaps = []
        for t in ts:
            for x in xs:
                vm = cl.log_value_constrained(t, x, m, mkt, T, bd)
                v0 = cl.constrained_value_no_exploration(t, x, mkt, T, bd)
                gaps.append(abs(vm - v0))
                rows.append((m, t, x, vm, v0, abs(vm - v0)))
        max_gap[str(m)] = float(max(gaps))
    emit_csv(rows, ["m", "t", "x", "value_m", "value_0", "gap"], out / "value_gap.csv")
    return {"files": ["value_gap.csv"], "checks": {"max_gap_by_m": max_gap}}


def exp_wealth_density(cfg: ExperimentConfig, out: Path):
    """ln-wealth at T/2 and T under the optimal policy for several m, on common random numbers."""
    mkt, bd, grid = cfg.market, cfg.bounds, cfg.grid
    ms = _m_values(cfg, [0.5, 0.1, 0.001])
    n_paths = cfg.geti("simulation", "n_paths")
    x0 = cfg.getf("simulation", "x0")
    stepping = cfg.get("simulation", "stepping")
    seed = cfg.seeds[0]
    half = grid.n_steps // 2
    rows, stats = [], {}
    for kind in ("constrained", "unconstrained"):
        for m in list(ms) + [0.0]:
            if m == 0:
                pol = cl.constrained_merton(mkt, bd) if kind == "constrained" else merton_fraction(mkt)
            elif kind == "constrained":
                pol = cl.log_policy_constrained(mkt, m, bd)
            else:
                pol = cl.log_policy_unconstrained(mkt, m)
            b = rollout(pol, mkt, grid, x0, seed, n_paths=n_paths, stepping=stepping)
            lw_half = np.log(b.states[:, half])
            lw_end = np.log(b.states[:, -1])
            for p in range(n_paths):
                rows.append((kind, m, p, b.times[half], lw_half[p]))
                rows.append((kind, m, p, b.times[-1], lw_end[p]))
            stats[f"{kind}:m={m:g}"] = {
                "m": m,
                "policy": kind,
                "var_log_wealth_half": float(lw_half.var(ddof=1)),
                "var_log_wealth_end": float(lw_end.var(ddof=1)),
                "mean_log_wealth_end": float(lw_end.mean()),
            }
    emit_csv(rows, ["policy", "m", "path", "t", "log_wealth"], out / "wealth_density.csv")
    return {"files": ["wealth_density.csv"], "seed": seed, "checks": stats}


def _learn_config(cfg: ExperimentConfig, variant: ModelVariant, seed: int, m: float, x0=None, eta_phi=None):
    L = cfg.sections["learn"]
    mkt = cfg.market
    theta_init = None
    if L["theta_init"].strip() not in ("true", ""):
        theta_init = np.array(_floats(L["theta_init"]))
    phi_spec = L["phi_init"].strip()
    if phi_spec == "true":
        phi_init = true_phi(variant, mkt, m)
    elif phi_spec in ("default", ""):
        phi_init = default_phi_init(variant)
    else:
        phi_init = np.array(_floats(phi_spec))
    return LearnConfig(
        eta_theta=float(L["eta_theta"]),
        eta_phi=float(L["eta_phi"]) if eta_phi is None else eta_phi,
        m=m,
        iterations=int(L["iterations"]),
        n_paths=int(L["n_paths"]),
        grid=cfg.grid,
        decay=float(L["decay"]),
        seed=seed,
        x0=float(L["x0"]) if x0 is None else x0,
        theta_init=theta_init,
        theta_init_noise=float(L["theta_init_noise"]),
        phi_init=phi_init,
        phi_init_noise=float(L["phi_init_noise"]),
        pe_form=L["pe_form"],
        threads=int(cfg.sections.get("_runtime", {}).get("threads", 1)),
    )


def _write_trace(res, path):
    emit_csv(res.trace_rows(), res.trace_header(), path)


def exp_train_log_constrained(cfg: ExperimentConfig, out: Path):
    mkt, bd, T = cfg.market, cfg.bounds, cfg.grid.T
    variant = ModelVariant("log-constrained", bounds=bd)
    ms = _m_values(cfg, [cfg.m])
    checkpoints = [int(c) for c in _floats(cfg.get("learn", "checkpoints"))]
    files, table1, table2, err_rows, dens_rows, per_m = [], [], [], [], [], {}
    for m in ms:
        th_true, ph_true = true_theta(variant, mkt, m), true_phi(variant, mkt, m)
        results = []
        for seed in cfg.seeds:
            res = train(variant, mkt, _learn_config(cfg, variant, seed, m))
            results.append(res)
            name = f"trace_m{m:g}_seed{seed}.csv"
            _write_trace(res, out / name)
            files.append(name)
        M = len(results[0].theta) - 1
        thetas = np.stack([r.theta for r in results])  # (seeds, M+1, 2)
        phis = np.stack([r.phi for r in results])
        # value error at (t, x) = (0.5, 0.5) along the iterations, averaged over seeds
        v_true = cl.log_value_constrained(0.5 * T, 0.5, m, mkt, T, bd)
        J = np.log(0.5) + (thetas.sum(axis=2) + 0.5 * m * math.log(2 * math.pi * m)) * (T - 0.5 * T)
        err = np.abs(J - v_true).mean(axis=0)
        err_rows += [(m, k, err[k]) for k in range(M + 1)]
        phi_bar = phis[:, -1].mean(axis=0)
        true_pol = policy_dist(0, None, ph_true, m, variant)
        learned_pol = policy_dist(0, None, phi_bar, m, variant)
        kl = kl_trunc(learned_pol, true_pol)
        kl_seeds = [kl_trunc(policy_dist(0, None, p, m, variant), true_pol) for p in phis[:, -1]]
        table1.append((m, ph_true[0], phi_bar[0], phis[:, -1, 0].std(ddof=1) if len(results) > 1 else 0.0, kl))
        for c in sorted(set([c for c in checkpoints if c <= M] + [M])):
            th_c, ph_c = thetas[:, c].mean(axis=0), phis[:, c].mean(axis=0)
            table2.append((m, c, *th_true, *th_c, *ph_true, *ph_c))
        grid_pi = np.linspace(bd.a, bd.b, 201) if math.isfinite(bd.a) and math.isfinite(bd.b) else np.linspace(-2, 3, 201)
        for p in grid_pi:
            dens_rows.append((m, p, true_pol.pdf(p), learned_pol.pdf(p)))
        per_m[f"{m:g}"] = {
            "m": m,
            "true_theta": th_true.tolist(),
            "true_phi": ph_true.tolist(),
            "learned_theta_mean": thetas[:, -1].mean(axis=0).tolist(),
            "learned_phi_mean": phi_bar.tolist(),
            "learned_phi_std": phis[:, -1].std(axis=0, ddof=1).tolist() if len(results) > 1 else [0.0, 0.0],
            "kl_learned_mean_policy": kl,
            "kl_per_seed_mean": float(np.mean(kl_seeds)),
            "true_trunc_mean": float(trunc_mean(true_pol)),
            "learned_trunc_mean": float(trunc_mean(learned_pol)),
            "iterations": M,
            "wall_clock_s": float(sum(r.wall_clock for r in results)),
        }
    emit_csv(table1, ["m", "true_mean", "learned_mean", "std", "kl"], out / "table1.csv")
    emit_csv(
        table2,
        ["m", "iteration", "true_theta1", "true_theta2", "learned_theta1", "learned_theta2",
         "true_phi1", "true_phi2", "learned_phi1", "learned_phi2"],
        out / "table2.csv",
    )
    emit_csv(err_rows, ["m", "iter", "mean_abs_value_error"], out / "error_vs_iter.csv")
    emit_csv(dens_rows, ["m", "pi", "true_density", "learned_density"], out / "policy_density.csv")
    files += ["table1.csv", "table2.csv", "error_vs_iter.csv", "policy_density.csv"]
    return {"files": files, "seeds": cfg.seeds, "checks": per_m}


def exp_policy_dirac_limit(cfg: ExperimentConfig, out: Path):
    mkt, bd = cfg.market, cfg.bounds
    ms = _m_values(cfg, [1e-4, 1e-5])
    lo = bd.a if math.isfinite(bd.a) else merton_fraction(mkt) - 1
    hi = bd.b if math.isfinite(bd.b) else merton_fraction(mkt) + 1
    grid_pi = np.linspace(lo, hi, 2001)
    rows, checks = [], {}
    for m in ms:
        pol = cl.log_policy_constrained(mkt, m, bd)
        dens = np.asarray(pol.pdf(grid_pi))
        rows += [(m, p, d) for p, d in zip(grid_pi, dens)]
        checks[f"{m:g}"] = {
            "trunc_mean": float(trunc_mean(pol)),
            "trunc_std": float(math.sqrt(trunc_variance(pol))),
            "constrained_merton": cl.constrained_merton(mkt, bd),
        }
    emit_csv(rows, ["m", "pi", "density"], out / "policy_dirac.csv")
    return {"files": ["policy_dirac.csv"], "checks": checks}


def exp_train_quadratic(cfg: ExperimentConfig, out: Path):
    mkt, T = cfg.market, cfg.grid.T
    Q = cfg.sections["quadratic"]
    quad = cq.QuadUtilityParams(float(Q["K"]), float(Q["eps"]))
    variant = ModelVariant("quadratic", quad=quad, r=mkt.r)
    x0, t_eval, x_eval = float(Q["x0"]), float(Q["t_eval"]), float(Q["x_eval"])
    ms = _m_values(cfg, [cfg.m])
    files, dens_rows, checks = [], [], {}
    for m in ms:
        th_true, ph_true = true_theta(variant, mkt, m), true_phi(variant, mkt, m)
        results = []
        for seed in cfg.seeds:
            res = train(variant, mkt, _learn_config(cfg, variant, seed, m, x0=x0))
            results.append(res)
            name = f"trace_m{m:g}_seed{seed}.csv"
            _write_trace(res, out / name)
            files.append(name)
        trailing = np.stack([r.theta[-100:].mean(axis=0) for r in results])
        phi_bar = np.stack([r.phi[-1] for r in results]).mean(axis=0)
        true_pol = policy_dist(t_eval, x_eval, ph_true, m, variant, T)
        learned_pol = policy_dist(t_eval, x_eval, phi_bar, m, variant, T)
        sd = math.sqrt(max(float(true_pol.var), float(learned_pol.var)))
        for a in np.linspace(float(true_pol.mean) - 5 * sd, float(true_pol.mean) + 5 * sd, 201):
            dens_rows.append((m, a, float(true_pol.pdf(a)), float(learned_pol.pdf(a))))
        checks[f"{m:g}"] = {
            "m": m,
            "true_theta": th_true.tolist(),
            "true_phi": ph_true.tolist(),
            "trailing100_theta_per_seed": trailing.tolist(),
            "trailing100_theta_mean": trailing.mean(axis=0).tolist(),
            "learned_phi_mean": phi_bar.tolist(),
            "true_policy_at_eval": [float(true_pol.mean), float(true_pol.var)],
            "learned_policy_at_eval": [float(learned_pol.mean), float(learned_pol.var)],
            "mean_terminal_wealth_closed_form": cq.quad_mean_terminal_wealth(x0, mkt, quad, T),
            "bliss": quad.bliss,
        }
    emit_csv(dens_rows, ["m", "amount", "true_density", "learned_density"], out / "policy_density.csv")
    files.append("policy_density.csv")
    return {"files": files, "seeds": cfg.seeds, "checks": checks}


def exp_factor_demo(cfg: ExperimentConfig, out: Path):
    """Degenerate-factor equivalence and Monte-Carlo error scaling for an OU factor."""
    mkt, T = cfg.market, cfg.grid.T
    F = cfg.sections["factor"]
    m = cfg.m
    y0, n_paths, n_steps = float(F["y0"]), int(F["n_paths"]), int(F["n_steps"])
    seed = cfg.seeds[0]
    const = FactorModel.constant(mkt)
    rows = []
    worst = 0.0
    for t in np.linspace(0.0, T, 5)[:-1]:
        for x in (0.5, 1.0, 2.0):
            v_mc, se = factor_value(t, x, y0, m, const, T, n_paths=4, n_steps=n_steps, seed=seed)
            v_cf = cl.log_value_unconstrained(t, x, m, mkt, T)
            worst = max(worst, abs(v_mc - v_cf))
            rows.append(("constant", t, x, y0, v_cf, v_mc, se))
    tilt = float(F["tilt"])
    ou = FactorModel.ornstein_uhlenbeck(
        lambda y: np.full(np.shape(y), mkt.mu),
        lambda y: mkt.sigma * (1 + tilt * np.tanh(y)),
        mkt.r,
        kappa=float(F["kappa"]),
        ybar=float(F["ybar"]),
        eta=float(F["eta"]),
    )
    scaling = []
    for n in (n_paths, 4 * n_paths):
        f, se = feynman_kac_f(0.0, y0, m, ou, T, n_paths=n, n_steps=n_steps, seed=seed)
        rows.append((f"ou:n_paths={n}", 0.0, 1.0, y0, math.nan, f, se))
        scaling.append(se)
    emit_csv(rows, ["model", "t", "x", "y", "closed_form", "monte_carlo", "stderr"], out / "factor_demo.csv")
    return {
        "files": ["factor_demo.csv"],
        "checks": {
            "max_abs_degenerate_error": worst,
            "ou_stderr": scaling,
            "ou_stderr_ratio": scaling[0] / scaling[1],
            "h_constant": h_of_y(y0, const, m),
        },
    }


EXPERIMENTS = {
    "cost-curve": (exp_cost_curve, "exploration cost versus m, unconstrained and for several bounds"),
    "value-gap": (exp_value_gap, "|v(t,x;m) - v(t,x;0)| on a (t,x) grid for large and small m"),
    "wealth-density": (exp_wealth_density, "ln-wealth samples under the optimal policy for several m"),
    "train-log-constrained": (exp_train_log_constrained, "actor-critic on the bounded log-utility problem"),
    "policy-dirac-limit": (exp_policy_dirac_limit, "optimal truncated policy densities as m -> 0"),
    "train-quadratic": (exp_train_quadratic, "actor-critic on the unconstrained quadratic-utility problem"),
    "factor-demo": (exp_factor_demo, "factor-model Monte Carlo against the constant-coefficient closed form"),
}


def _version() -> str:
    try:
        here = Path(__file__).resolve().parent
        got = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=here,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if got.returncode == 0 and got.stdout.strip():
            return f"{__version__}+g{got.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(cfg: ExperimentConfig, out_dir=None, threads: int = 1) -> dict:
    """Run ``cfg`` and write its CSVs, ``summary.json`` and ``manifest.json``; returns the summary."""
    out = Path(out_dir or cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    cfg.sections.setdefault("_runtime", {})["threads"] = threads
    func, _ = EXPERIMENTS[cfg.experiment]
    start = time.perf_counter()
    summary = func(cfg, out)
    summary["experiment"] = cfg.experiment
    summary["wall_clock_s"] = time.perf_counter() - start
    summary["market"] = {"r": cfg.market.r, "mu": cfg.market.mu, "sigma": cfg.market.sigma}
    summary["merton_fraction"] = merton_fraction(cfg.market)
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, default=_json_default)
        fh.write("\n")
    manifest = {
        "experiment": cfg.experiment,
        "version": _version(),
        "seeds": cfg.seeds,
        "files": {name: _sha256(out / name) for name in summary["files"]},
        "summary": "summary.json",
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return summary


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o)}")


__all__ = [
    "ConfigError",
    "DivergenceError",
    "EXPERIMENTS",
    "ExperimentConfig",
    "emit_csv",
    "load_config",
    "parse_config",
    "preset_names",
    "run_experiment",
]
