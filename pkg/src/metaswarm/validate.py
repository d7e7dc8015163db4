"""End-to-end validation experiments coupling the particle simulator, the
PDE solver, the quasi-steady construction, and the slow-exchange
asymptotics.

Every experiment is reproducible from (config, seed), takes all its
tolerances from the config dict (defaults below), echoes them into the
report, and optionally writes CSV/JSON artifacts.
"""

from __future__ import annotations

import copy
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import io, metadyn, particles, pde, quasisteady
from .errors import ConvergenceError
from .kernels import make_cubic, make_linear

DEFAULT_CONFIG = {
    "gaussian": {
        "eps2": 0.001,
        "grid": {"x_left": -0.25, "x_right": 0.25, "n_cells": 600},
        "t_max": 100.0,
        "residual_tol": 1e-8,
        "pde_linf_tol": 0.02,
        "mean_tol": 1e-6,
        "n_particles": 200,
        "particle_dt": 1e-3,
        "transient_t": 10.0,
        "n_snapshots": 100,
        "snapshot_stride": 500,
        "bins": 25,
        "window_sigmas": 6.0,
        "particle_l1_tol": 0.1,
    },
    "quasisteady": {
        "eps2": 0.001,
        "t_end": 500.0,
        "domain": [0.0, 3.0],
        "x1": 1.0,
        "cells_per_eps": 8,
        "peak_rel_tol": 0.05,
        "peak_symmetry_tol": 1e-6,
        "half_mass_tol": 1e-8,
    },
    "metastability": {
        "eps2_list": [0.002, 0.001, 0.0008],
        "masses": [0.35, 0.65],
        # the heavy spike has width c2 = 0.05, so its 8-sigma support
        # reaches past x = 3.5 at these eps; the domain must cover it
        "domain": [0.0, 4.0],
        "x1": 1.0,
        "cells_per_eps": 8,
        "cfl_fraction": 0.8,
        # long enough for the constructed ansatz to relax onto the true
        # quasi-steady profile, short enough that the fastest declared
        # eps2 has not yet crossed the measurement window
        "transient_t": 2.0,
        "t_max": 50000.0,
        "outputs_per_decade": 60,
        "d_window": [0.1, 0.25],
        # the log-time collapse is scored on a sub-window: near the top
        # of d_window the heavy spike's tail across the separatrix biases
        # the measured mass split by an amount that does not scale with
        # eps^2, which would mask the scaling the ratio test looks for
        "logt_d_window": [0.1, 0.18],
        "d_stop": 0.08,
        "slope_dev_factor": 5.0,
        "ratio_range": [1.5, 2.7],
        "offset_bound": 20.0,
        "mass_drift_tol": 1e-10,
    },
    "particle_equilibration": {
        "sigma": 0.075,
        "n_left": 80,
        "n_right": 120,
        "centers": [-0.5, 0.5],
        "spread": 0.05,
        "dt": 1e-3,
        "t_end": 10000.0,
        "record_stride": 1000,
        # the mass gap decays on an O(10-100) timescale here, so the
        # initial window must sit right after the transient to catch it
        "transient_frac": 0.001,
        "window_frac": 0.01,
    },
}


@dataclass
class ExperimentReport:
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)


def _merge(defaults: dict, override: dict | None) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("METASWARM_THREADS", "1")))
    except ValueError:
        return 1


def _run_pde_to_steady(rho, k, cfg, residual_tol, t_max, check_every=200):
    """Advance until max|drho/dt| <= residual_tol; error past t_max."""
    prev = rho.values.copy()
    while rho.time < t_max:
        pde._advance(rho, k, cfg.dt, cfg.eps2, check_every)
        residual = float(np.max(np.abs(rho.values - prev)) / (check_every * cfg.dt))
        if residual <= residual_tol:
            return residual
        prev = rho.values.copy()
    raise ConvergenceError(
        f"no steady state within t={t_max} (residual {residual:.3g})"
    )


def gaussian_experiment(eps2: float | None = None, *, config: dict | None = None,
                        output_dir: str | None = None,
                        seed: int = 0) -> ExperimentReport:
    """Single-cluster steady state: PDE profile against the closed-form
    Gaussian, and the noisy-particle histogram against the same curve."""
    cfg = _merge(DEFAULT_CONFIG["gaussian"], config)
    if eps2 is not None:
        cfg["eps2"] = eps2
    eps2 = cfg["eps2"]
    if not 1e-5 < eps2 < 1e-1:
        raise ValueError("eps2 outside the supported range (1e-5, 1e-1)")
    eps = np.sqrt(eps2)
    k = make_linear()

    grid = pde.Grid(cfg["grid"]["x_left"], cfg["grid"]["x_right"],
                    cfg["grid"]["n_cells"])
    xc = grid.centers()
    center = 0.5 * (grid.x_left + grid.x_right)
    vmax = max(abs(grid.x_left - center), abs(grid.x_right - center))
    dt = 0.5 * grid.dx / vmax
    pcfg = pde.PdeConfig(eps2=eps2, dt=dt, t_end=cfg["t_max"])

    # broad unimodal start, centered
    width0 = 0.2 * (grid.x_right - grid.x_left)
    values = np.exp(-0.5 * ((xc - center) / width0) ** 2)
    values /= values.sum() * grid.dx
    rho = pde.DensityField(grid, values)
    mass0 = rho.total_mass
    mean0 = float(np.sum(xc * rho.values) * grid.dx / mass0)

    residual = _run_pde_to_steady(rho, k, pcfg, cfg["residual_tol"], cfg["t_max"])
    mass1 = rho.total_mass
    mean1 = float(np.sum(xc * rho.values) * grid.dx / mass1)

    exact = mass0 / np.sqrt(2.0 * np.pi * eps2) * np.exp(
        -0.5 * (xc - mean0) ** 2 / eps2)
    linf_rel = float(np.max(np.abs(rho.values - exact)) / np.max(exact))

    # particle side: seeded noisy run, pooled recentred snapshots
    n = cfg["n_particles"]
    sigma = float(np.sqrt(2.0 * eps2))
    dt_p = cfg["particle_dt"]
    transient_steps = int(round(cfg["transient_t"] / dt_p))
    ens = particles.ParticleEnsemble(np.zeros(n))
    scfg = particles.SdeConfig(sigma=sigma, dt=dt_p, steps=transient_steps,
                               seed=seed)
    rng = scfg.make_rng()
    ens, _ = particles.simulate(ens, k, scfg, rng=rng)
    sample_cfg = particles.SdeConfig(
        sigma=sigma, dt=dt_p,
        steps=cfg["n_snapshots"] * cfg["snapshot_stride"], seed=seed)
    _, snaps = particles.simulate(ens, k, sample_cfg,
                                  record_every=cfg["snapshot_stride"], rng=rng)
    recentred = [particles.ParticleEnsemble(s.positions - s.positions.mean(),
                                            s.time) for s in snaps]
    half = cfg["window_sigmas"] * eps
    hist = particles.density_estimate(recentred, cfg["bins"], (-half, half))
    gauss_bins = (1.0 / np.sqrt(2.0 * np.pi * eps2)
                  * np.exp(-0.5 * hist.centers ** 2 / eps2))
    l1 = float(np.sum(np.abs(hist.counts - gauss_bins) * hist.bin_widths))

    metrics = {
        "eps2": eps2,
        "pde_linf_rel_err": linf_rel,
        "pde_residual": residual,
        "pde_mass_drift": abs(mass1 - mass0) / mass0,
        "mean_offset": abs(mean1 - mean0),
        "particle_l1": l1,
        "tol_pde_linf": cfg["pde_linf_tol"],
        "tol_particle_l1": cfg["particle_l1_tol"],
        "tol_residual": cfg["residual_tol"],
        "tol_mean": cfg["mean_tol"],
    }
    passed = (linf_rel <= cfg["pde_linf_tol"]
              and l1 <= cfg["particle_l1_tol"]
              and residual <= cfg["residual_tol"]
              and metrics["mean_offset"] <= cfg["mean_tol"])
    report = ExperimentReport("gaussian", passed, metrics)
    if output_dir:
        io.ensure_dir(output_dir)
        report.artifacts.append(io.write_profile_csv(
            os.path.join(output_dir, "gaussian_profile.csv"), rho))
        report.artifacts.append(io.write_histogram_csv(
            os.path.join(output_dir, "gaussian_histogram.csv"), hist))
        report.artifacts.append(io.write_report_json(
            os.path.join(output_dir, "gaussian_report.json"), report))
    return report


def _metastability_grid(domain, eps, cells_per_eps):
    n = int(np.ceil((domain[1] - domain[0]) / (eps / cells_per_eps)))
    return pde.Grid(domain[0], domain[1], n)


def _two_spike_dt(rho, k, cfl_fraction):
    v = pde.velocity_field_fast(rho, k)
    vmax = float(np.max(np.abs(v)))
    return cfl_fraction * rho.grid.dx / vmax


def quasisteady_experiment(eps2: float | None = None, *,
                           config: dict | None = None,
                           output_dir: str | None = None) -> ExperimentReport:
    """Symmetric two-spike run: long-time PDE profile against the
    two-Gaussian quasi-steady ansatz."""
    cfg = _merge(DEFAULT_CONFIG["quasisteady"], config)
    if eps2 is not None:
        cfg["eps2"] = eps2
    eps2 = cfg["eps2"]
    eps = float(np.sqrt(eps2))
    k = make_cubic()
    a = k.root_a
    x1 = cfg["x1"]

    grid = _metastability_grid(cfg["domain"], eps, cfg["cells_per_eps"])
    M1 = M2 = 0.5
    rho = quasisteady.build_two_spike(M1, M2, x1, k, eps, grid)
    dt = _two_spike_dt(rho, k, 0.8)
    pcfg = pde.PdeConfig(eps2=eps2, dt=dt, t_end=cfg["t_end"])
    _, rho = pde.run_to(rho, k, pcfg, x1=x1, initial_masses=(M1, M2))

    xc = grid.centers()
    c1, c2 = quasisteady.spike_widths(M1, M2, k)
    predicted_peaks = np.array([
        M1 / eps * np.sqrt(c1 / (2.0 * np.pi)),
        M2 / eps * np.sqrt(c2 / (2.0 * np.pi)),
    ])
    half_width = 0.4 * a
    peaks = np.array([
        float(np.max(rho.values[np.abs(xc - x1) < half_width])),
        float(np.max(rho.values[np.abs(xc - (x1 + a)) < half_width])),
    ])
    peak_err = float(np.max(np.abs(peaks - predicted_peaks) / predicted_peaks))
    peak_asym = float(abs(peaks[0] - peaks[1]) / peaks.max())

    ansatz = quasisteady.two_spike_profile(xc, M1, M2, x1, k, eps)
    l1_err = float(np.sum(np.abs(rho.values - ansatz)) * grid.dx)
    mid = x1 + 0.5 * a
    m_left, m_right = pde.mass_split(rho, mid)
    half_mass_err = float(max(abs(m_left - 0.5), abs(m_right - 0.5)))

    metrics = {
        "eps2": eps2,
        "peak_rel_err": peak_err,
        "peak_asymmetry": peak_asym,
        "profile_l1_err": l1_err,
        "half_mass_err": half_mass_err,
        "tol_peak_rel": cfg["peak_rel_tol"],
        "tol_peak_symmetry": cfg["peak_symmetry_tol"],
        "tol_half_mass": cfg["half_mass_tol"],
    }
    passed = (peak_err <= cfg["peak_rel_tol"]
              and peak_asym <= cfg["peak_symmetry_tol"]
              and half_mass_err <= cfg["half_mass_tol"])
    report = ExperimentReport("quasisteady", passed, metrics)
    if output_dir:
        io.ensure_dir(output_dir)
        report.artifacts.append(io.write_profile_csv(
            os.path.join(output_dir, "quasisteady_profile.csv"), rho))
        report.artifacts.append(io.write_report_json(
            os.path.join(output_dir, "quasisteady_report.json"), report))
    return report


def _metastability_single(eps2, cfg):
    """One PDE mass-leak run; returns (trajectory, mass drift)."""
    eps = float(np.sqrt(eps2))
    k = make_cubic()
    x1 = cfg["x1"]
    M1, M2 = cfg["masses"]
    grid = _metastability_grid(cfg["domain"], eps, cfg["cells_per_eps"])
    rho = quasisteady.build_two_spike(M1, M2, x1, k, eps, grid)
    mass0 = rho.total_mass
    dt = _two_spike_dt(rho, k, cfg["cfl_fraction"])

    transient = pde.PdeConfig(eps2=eps2, dt=dt, t_end=cfg["transient_t"])
    _, rho = pde.run_to(rho, k, transient, x1=x1, initial_masses=(M1, M2))

    n_out = int(np.ceil(np.log10(cfg["t_max"] / cfg["transient_t"])
                        * cfg["outputs_per_decade"]))
    times = pde.log_spaced_times(cfg["transient_t"] * 1.0001, cfg["t_max"], n_out)
    main = pde.PdeConfig(eps2=eps2, dt=dt, t_end=cfg["t_max"],
                         output_times=times)
    traj, rho = pde.run_to(rho, k, main, x1=x1, initial_masses=(M1, M2),
                           stop_d_below=cfg["d_stop"])
    drift = abs(rho.total_mass - mass0) / mass0
    return traj, drift


def _window_mask(d, window):
    return (d >= window[0]) & (d <= window[1])


def _slope_deviation(traj, eps2, cfg, M=1.0):
    dmid, lhs, rhs = metadyn.slope_diagnostic(traj, float(np.sqrt(eps2)), M)
    mask = _window_mask(dmid, cfg["d_window"])
    if not np.any(mask):
        raise ConvergenceError("no diagnostic samples inside the d window")
    return dmid[mask], lhs[mask], rhs[mask], float(np.max(np.abs(lhs - rhs)[mask]))


def _logtime_deviation(traj, eps2, cfg, M=1.0):
    """Max vertical gap between PDE d(t) and the implicit log-time curve,
    after fitting the single allowed O(1) horizontal offset."""
    mask = _window_mask(traj.d, cfg["logt_d_window"])
    t = traj.t[mask]
    d = traj.d[mask]
    scale = 64.0 * M ** 3 * eps2
    axis = metadyn.log_time_axis(t, M, float(np.sqrt(eps2)))

    def max_dev(b):
        shifted = axis + b * scale
        if np.any(shifted <= 0.0) or np.any(shifted > M ** 4):
            return np.inf
        pred = np.array([metadyn.gap_from_axis(v, M) for v in shifted])
        return float(np.max(np.abs(pred - d)))

    bound = cfg["offset_bound"]
    bs = np.linspace(-bound, bound, 161)
    devs = np.array([max_dev(b) for b in bs])
    i = int(np.argmin(devs))
    # local refinement around the coarse optimum
    lo = bs[max(i - 1, 0)]
    hi = bs[min(i + 1, len(bs) - 1)]
    bs2 = np.linspace(lo, hi, 41)
    devs2 = np.array([max_dev(b) for b in bs2])
    j = int(np.argmin(devs2))
    return float(bs2[j]), float(devs2[j])


def metastability_experiment(eps2_list=None, *, config: dict | None = None,
                             output_dir: str | None = None) -> ExperimentReport:
    """PDE mass-leak runs across eps^2 values: slow-exchange slope law and
    log-time collapse, with the O(eps^2) deviation-scaling ratio test."""
    cfg = _merge(DEFAULT_CONFIG["metastability"], config)
    if eps2_list is not None:
        cfg["eps2_list"] = list(eps2_list)
    eps2_list = sorted(cfg["eps2_list"], reverse=True)
    if len(eps2_list) < 2:
        raise ValueError("need at least two eps2 values for the scaling test")
    for eps2 in eps2_list:
        eps = float(np.sqrt(eps2))
        grid = _metastability_grid(cfg["domain"], eps, cfg["cells_per_eps"])
        if grid.dx > eps / 6.0:
            raise ConvergenceError(
                f"grid too coarse for eps2={eps2}: dx={grid.dx:.4g} > eps/6")

    workers = min(worker_count(), len(eps2_list))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(
                lambda e: _metastability_single(e, cfg), eps2_list))
    else:
        results = [_metastability_single(e, cfg) for e in eps2_list]

    metrics = {}
    artifacts = []
    slope_devs = {}
    logt_devs = {}
    per_eps_ok = {}
    diag_data = {}
    for eps2, (traj, drift) in zip(eps2_list, results):
        d = traj.d
        decreasing = bool(np.all(np.diff(d) < 0.0))
        dmid, lhs, rhs, dev = _slope_deviation(traj, eps2, cfg)
        offset, dev_logt = _logtime_deviation(traj, eps2, cfg)
        slope_devs[eps2] = dev
        logt_devs[eps2] = dev_logt
        diag_data[eps2] = (traj, dmid, lhs, rhs)
        tag = f"{eps2:g}"
        metrics[f"slope_dev[{tag}]"] = dev
        metrics[f"slope_dev_limit[{tag}]"] = cfg["slope_dev_factor"] * eps2
        metrics[f"logt_dev[{tag}]"] = dev_logt
        metrics[f"logt_offset[{tag}]"] = offset
        metrics[f"mass_drift[{tag}]"] = drift
        metrics[f"d_monotone[{tag}]"] = float(decreasing)
        per_eps_ok[eps2] = (dev <= cfg["slope_dev_factor"] * eps2
                            and drift <= cfg["mass_drift_tol"]
                            and decreasing)

    # scaling ratios across the two largest eps2 values, only once the
    # per-eps checks pass on at least two of them
    lo_r, hi_r = cfg["ratio_range"]
    ratio_ok = False
    if sum(per_eps_ok.values()) >= 2:
        e_big, e_small = eps2_list[0], eps2_list[1]
        slope_ratio = slope_devs[e_big] / slope_devs[e_small]
        logt_ratio = logt_devs[e_big] / logt_devs[e_small]
        metrics["slope_dev_ratio"] = slope_ratio
        metrics["logt_dev_ratio"] = logt_ratio
        ratio_ok = (lo_r <= slope_ratio <= hi_r and lo_r <= logt_ratio <= hi_r)
    metrics["tol_slope_dev_factor"] = cfg["slope_dev_factor"]
    metrics["tol_ratio_low"] = lo_r
    metrics["tol_ratio_high"] = hi_r
    metrics["tol_mass_drift"] = cfg["mass_drift_tol"]

    passed = all(per_eps_ok.values()) and ratio_ok
    report = ExperimentReport("metastability", passed, metrics)
    if output_dir:
        io.ensure_dir(output_dir)
        for eps2, (traj, dmid, lhs, rhs) in diag_data.items():
            tag = f"{eps2:g}".replace(".", "p")
            artifacts.append(io.write_trajectory_csv(
                os.path.join(output_dir, f"metastability_{tag}.csv"), traj))
            artifacts.append(io.write_diagnostic_csv(
                os.path.join(output_dir, f"slope_diag_{tag}.csv"),
                dmid, lhs, rhs))
        report.artifacts = artifacts
        report.artifacts.append(io.write_report_json(
            os.path.join(output_dir, "metastability_report.json"), report))
    return report


def particle_equilibration_experiment(seed: int = 0, *,
                                      config: dict | None = None,
                                      output_dir: str | None = None
                                      ) -> ExperimentReport:
    """Noisy two-cluster particle run: the cluster-mass gap shrinks over
    time; the zero-noise control keeps masses exactly constant."""
    cfg = _merge(DEFAULT_CONFIG["particle_equilibration"], config)
    k = make_cubic()
    n = cfg["n_left"] + cfg["n_right"]
    rng0 = np.random.Generator(np.random.PCG64(seed))
    x0 = np.concatenate([
        rng0.normal(cfg["centers"][0], cfg["spread"], cfg["n_left"]),
        rng0.normal(cfg["centers"][1], cfg["spread"], cfg["n_right"]),
    ])

    split0 = 0.5 * (cfg["centers"][0] + cfg["centers"][1])

    def masses_of(ens, m_prev, split_prev):
        # the ensemble's center of mass random-walks, so anchor the
        # separatrix to the current left-cluster center, iterating once
        # from the previous masses and split point
        try:
            xh = metadyn.find_xhat(m_prev[0], m_prev[1], k).xhat
        except Exception:
            xh = 0.5 * k.root_a
        left = ens.positions[ens.positions < split_prev]
        split = float(left.mean()) + xh if left.size else split_prev
        return particles.cluster_masses(ens, split), split

    steps = int(round(cfg["t_end"] / cfg["dt"]))
    scfg = particles.SdeConfig(sigma=cfg["sigma"], dt=cfg["dt"], steps=steps,
                               seed=seed)
    rng = scfg.make_rng()
    ens = particles.ParticleEnsemble(x0.copy())
    m = particles.cluster_masses(ens, split0)
    m_init = m
    split = split0
    times = [0.0]
    m1s = [m[0]]
    stride = cfg["record_stride"]
    done = 0
    while done < steps:
        block = min(stride, steps - done)
        bcfg = particles.SdeConfig(sigma=cfg["sigma"], dt=cfg["dt"],
                                   steps=block, seed=seed)
        ens, _ = particles.simulate(ens, k, bcfg, rng=rng)
        done += block
        m, split = masses_of(ens, m, split)
        times.append(ens.time)
        m1s.append(m[0])
    m1s = np.array(m1s)
    traj = metadyn.MassTrajectory(np.array(times), m1s, 1.0 - m1s)

    d_abs = np.abs(traj.d)
    n_rec = len(traj)
    n_transient = max(1, int(cfg["transient_frac"] * n_rec))
    n_window = max(1, int(cfg["window_frac"] * n_rec))
    initial_avg = float(np.mean(d_abs[n_transient:n_transient + n_window]))
    final_avg = float(np.mean(d_abs[-n_window:]))

    # zero-noise control: masses must not move at all
    ctrl_cfg = particles.SdeConfig(sigma=0.0, dt=cfg["dt"], steps=2000,
                                   seed=seed)
    ctrl, snaps = particles.simulate(
        particles.ParticleEnsemble(x0.copy()), k, ctrl_cfg, record_every=200)
    ctrl_masses = [particles.cluster_masses(s, split0)[0] for s in snaps]
    control_constant = all(mm == m_init[0] for mm in ctrl_masses)

    # asymptotic overlay from the same initial masses
    eps = cfg["sigma"] / np.sqrt(2.0)
    ode_traj = metadyn.integrate_masses(m_init[0], 1.0, k, eps, cfg["t_end"])

    metrics = {
        "initial_M1": m_init[0],
        "initial_M2": m_init[1],
        "initial_window_d": initial_avg,
        "final_window_d": final_avg,
        "control_constant": float(control_constant),
    }
    passed = final_avg < initial_avg and control_constant
    report = ExperimentReport("particle_equilibration", passed, metrics)
    if output_dir:
        io.ensure_dir(output_dir)
        report.artifacts.append(io.write_trajectory_csv(
            os.path.join(output_dir, "particle_masses.csv"), traj))
        report.artifacts.append(io.write_trajectory_csv(
            os.path.join(output_dir, "particle_masses_ode.csv"), ode_traj))
        report.artifacts.append(io.write_report_json(
            os.path.join(output_dir, "particle_equilibration_report.json"),
            report))
    return report


EXPERIMENTS = {
    "gaussian": gaussian_experiment,
    "quasisteady": quasisteady_experiment,
    "metastability": metastability_experiment,
    "particle_equilibration": particle_equilibration_experiment,
}
