"""Command-line front end: reports, figure reproduction, sweeps, replay.

Every command writes its outputs plus a run manifest into the --out
directory; `selfpulse replay <manifest>` re-executes the recorded
invocation and reproduces the outputs byte-identically (stochastic
commands included, via the recorded seed).

Exit codes: 0 success, 1 usage/validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import center_manifold as cm
from . import noise, semiclassics, stochastic
from .errors import DomainError, SelfPulseError
from .model import SystemParams, rescale_to_unit_chi
from .svg import Curve, gnuplot_script, render_svg

DEFAULT_REL_TOL = 1e-9


def _echo(doc: dict, fmt: str) -> None:
    """Mirror a report to stdout as JSON (default) or flat key,value CSV."""
    if fmt == "csv":
        def flat(prefix, obj):
            if isinstance(obj, dict):
                for k in sorted(obj):
                    yield from flat(f"{prefix}{k}." if prefix else f"{k}.", obj[k])
            else:
                yield prefix[:-1], obj
        for key, val in flat("", doc):
            print(f"{key},{val}")
    else:
        print(json.dumps(doc, indent=2, sort_keys=True, default=_json_default))


def _env_rel_tol() -> float:
    raw = os.environ.get("SELFPULSE_DEFAULT_TOL")
    if raw is None:
        return DEFAULT_REL_TOL
    try:
        return float(raw)
    except ValueError as exc:
        raise DomainError(f"SELFPULSE_DEFAULT_TOL={raw!r} is not a number") from exc


class _Parser(argparse.ArgumentParser):
    """argparse variant honoring the exit-code contract (usage errors -> 1)."""

    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n",
                    encoding="utf-8")


def _write_manifest(out: Path, command: str, params: dict, seed: int,
                    argv: list, outputs: list, wall: float) -> Path:
    name = command.replace("-", "_") + "_manifest.json"
    _write_json(out / name, {
        "command": command,
        "parameters": params,
        "seed": seed,
        "version": __version__,
        "argv": argv,
        "outputs": outputs,
        "wall_time_s": wall,
    })
    return out / name


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _resolve(cli_value, config: dict, key: str, default):
    """Precedence: CLI flag > config-file entry > built-in default."""
    if cli_value is not None:
        return cli_value
    if key in config:
        return config[key]
    return default


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise DomainError("--config must contain a JSON object")
    return doc


def _pmap(fn, items, jobs: int):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def _parse_floats(text: str, flag: str) -> list:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise DomainError(f"{flag} expects comma-separated numbers, got {text!r}") from exc


def _parse_pairs(text: str, flag: str) -> list:
    pairs = []
    for chunk in text.split(";"):
        if chunk.strip() == "":
            continue
        vals = _parse_floats(chunk, flag)
        if len(vals) != 2:
            raise DomainError(f"{flag} expects 'a,b;c,d;...' pairs, got {text!r}")
        pairs.append((vals[0], vals[1]))
    return pairs


def _parse_grid(text: str, flag: str):
    parts = text.split(":")
    if len(parts) != 3:
        raise DomainError(f"{flag} expects min:max:count, got {text!r}")
    lo, hi = float(parts[0]), float(parts[1])
    count = int(parts[2])
    if count < 1:
        raise DomainError(f"{flag} grid is empty (count={count})")
    return np.linspace(lo, hi, count)


# ---------------------------------------------------------------------------
# fixed-point
# ---------------------------------------------------------------------------

def _run_fixed_point(p: dict, out: Path) -> list:
    params = SystemParams(kappa=p["kappa"], gamma=p["gamma"], epsilon=p["epsilon"])
    fp = semiclassics.fixed_point(params)
    report = semiclassics.classify_fixed_point(params, fp)
    doc = {
        "kappa": p["kappa"],
        "gamma": p["gamma"],
        "epsilon": p["epsilon"],
        "beta_i0": fp.beta_i0,
        "alpha_i0": fp.alpha_i0,
        "residual": fp.residual,
        "classification": report.classification,
        "max_real_part": report.max_real_part,
        "eigenvalues": [[z.real, z.imag] for z in report.eigenvalues],
    }
    _write_json(out / "fixed_point.json", doc)
    _echo(doc, p["format"])
    return ["fixed_point.json"]


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _run_simulate(p: dict, out: Path) -> list:
    params = SystemParams(kappa=p["kappa"], gamma=p["gamma"],
                          epsilon=p["epsilon"], chi=p["chi"])
    chi = params.chi
    scaled = rescale_to_unit_chi(params) if chi != 1.0 else params
    y0 = [p["beta0"].real, p["beta0"].imag, p["alpha0"].real, p["alpha0"].imag]
    traj = semiclassics.integrate(
        y0, scaled, (0.0, p["t_final"] * chi),
        rel_tol=p["rel_tol"], abs_tol=p["abs_tol"], n_samples=p["n_samples"],
    )
    if chi != 1.0:
        traj = semiclassics.Trajectory(times=traj.times / chi, y=traj.y,
                                       params=params, dense=None)
    traj.to_csv(out / "trajectory.csv")
    print(f"wrote trajectory.csv ({len(traj.times)} samples)")
    return ["trajectory.csv"]


# ---------------------------------------------------------------------------
# hopf
# ---------------------------------------------------------------------------

def _run_hopf(p: dict, out: Path) -> list:
    doc = cm.cm_report(p["kappa"], p["gamma"])
    doc["eigenvalues_at_threshold"] = [
        [z.real, z.imag] for z in semiclassics.hopf_eigenvalues(p["kappa"], p["gamma"])
    ]
    doc["trace_derivative"] = cm.trace_derivative(p["kappa"], p["gamma"])
    _write_json(out / "hopf.json", doc)
    _echo(doc, p["format"])
    return ["hopf.json"]


# ---------------------------------------------------------------------------
# limit-cycle
# ---------------------------------------------------------------------------

def _measure_cycle(kappa: float, gamma: float, delta_eps: float, t_periods: float,
                   rel_tol: float, n_per_period: int = 60,
                   transient_fraction: float = 0.5):
    """Integrate from the predicted orbit and measure the settled cycle."""
    hp = semiclassics.hopf_threshold(kappa, gamma)
    pred = cm.predict_limit_cycle(kappa, gamma, delta_eps)
    params = SystemParams(kappa=kappa, gamma=gamma, epsilon=hp.epsilon_h + delta_eps)
    period0 = 2.0 * math.pi / pred.omega_h
    t_final = t_periods * period0
    traj = semiclassics.integrate(
        pred.orbit(0.0)[0], params, (0.0, t_final), rel_tol=rel_tol,
        n_samples=max(2000, int(t_periods * n_per_period)),
    )
    meas = semiclassics.detect_limit_cycle(traj, transient_fraction=transient_fraction)
    sel = traj.times >= traj.times[0] + transient_fraction * (traj.times[-1] - traj.times[0])
    u, v = cm.to_normal_form(kappa, gamma, traj.y[sel, 0], traj.y[sel, 2])
    radius = np.hypot(u, v)
    return pred, meas, traj, radius


def _run_limit_cycle(p: dict, out: Path) -> list:
    pred, meas, traj, radius = _measure_cycle(
        p["kappa"], p["gamma"], p["delta_eps"], p["t_periods"], p["rel_tol"],
    )
    nf_amp = float(radius.mean())
    doc = {
        "kappa": p["kappa"],
        "gamma": p["gamma"],
        "delta_epsilon": p["delta_eps"],
        "measured": {
            "period": meas.period,
            "amplitude_beta_r": meas.amplitude_beta_r,
            "amplitude_alpha_r": meas.amplitude_alpha_r,
            "mean_beta_i": meas.mean_beta_i,
            "mean_alpha_i": meas.mean_alpha_i,
            "normal_form_amplitude": nf_amp,
            "converged": meas.converged,
            "n_crossings": meas.n_crossings,
        },
        "predicted": {
            "amplitude_A": pred.amplitude_A,
            "amplitude_beta_r": pred.amplitude_beta_r,
            "period": 2.0 * math.pi / pred.omega_h,
            "omega_h": pred.omega_h,
            "beta_i_const": pred.beta_i_const,
            "alpha_i_const": pred.alpha_i_const,
        },
        "relative_errors": {
            "amplitude": abs(nf_amp - pred.amplitude_A) / pred.amplitude_A,
            "period": abs(meas.period - 2.0 * math.pi / pred.omega_h) * pred.omega_h
            / (2.0 * math.pi),
        },
    }
    _write_json(out / "limit_cycle.json", doc)
    traj.to_csv(out / "limit_cycle_trajectory.csv")
    _echo(doc, p["format"])
    return ["limit_cycle.json", "limit_cycle_trajectory.csv"]


# ---------------------------------------------------------------------------
# spectrum
# ---------------------------------------------------------------------------

def _parse_elements(text: str) -> list:
    pairs = []
    for tok in text.split(","):
        tok = tok.strip()
        if tok == "":
            continue
        if len(tok) != 2 or not tok.isdigit():
            raise DomainError(f"--elements expects two-digit labels like '33', got {tok!r}")
        i, j = int(tok[0]) - 1, int(tok[1]) - 1
        if not (0 <= i < 4 and 0 <= j < 4):
            raise DomainError(f"element {tok} out of range 11..44")
        pairs.append((i, j))
    return pairs


def _peak_or_note(result, i: int, j: int) -> dict:
    try:
        pk = noise.spectral_peak(result, i, j)
        return {"omega_peak": pk.omega_peak, "height": pk.height, "fwhm": pk.fwhm}
    except DomainError as exc:
        return {"note": str(exc)}


def _run_spectrum(p: dict, out: Path) -> list:
    params = SystemParams(kappa=p["kappa"], gamma=p["gamma"], epsilon=p["epsilon"])
    model = noise.linear_noise_model(params)
    result = noise.spectrum_scan(model, p["omega_min"], p["omega_max"], p["n_points"])
    extra = [e for e in p["elements"] if e != (2, 2)]
    noise.spectrum_to_csv(result, out / "spectrum.csv", extra_pairs=extra)
    summary = {
        "kappa": p["kappa"],
        "gamma": p["gamma"],
        "epsilon": p["epsilon"],
        "epsilon_h": semiclassics.hopf_threshold(p["kappa"], p["gamma"]).epsilon_h,
        "peaks": {f"S{i + 1}{j + 1}": _peak_or_note(result, i, j)
                  for i, j in [(2, 2)] + extra},
    }
    _write_json(out / "spectrum_summary.json", summary)
    _echo(summary, p["format"])
    return ["spectrum.csv", "spectrum_summary.json"]


# ---------------------------------------------------------------------------
# phase-diffusion
# ---------------------------------------------------------------------------

def _run_phase_diffusion(p: dict, out: Path) -> list:
    params = SystemParams(kappa=p["kappa"], gamma=p["gamma"], epsilon=0.0)
    config = stochastic.SDEConfig(
        dt=p["dt"], n_steps=int(round(p["t_final"] / p["dt"])),
        n_ensemble=p["n_ensemble"], seed=p["seed"], burn_in=p["burn_in"],
    )
    record = stochastic.simulate_limit_cycle_noise(
        params, p["delta_eps"], config, mode=p["mode"], noise_scale=p["noise_scale"],
        radial_noise=p["radial_noise"],
    )
    fit = stochastic.measure_phase_diffusion(record)
    analytic = noise.phase_diffusion_constant(p["kappa"], p["delta_eps"], gamma=p["gamma"])
    doc = {
        "kappa": p["kappa"],
        "gamma": p["gamma"],
        "delta_epsilon": p["delta_eps"],
        "mode": p["mode"],
        "noise_scale": p["noise_scale"],
        "seed": p["seed"],
        "n_members": fit.n_members,
        "excluded": record.excluded,
        "d_phi_hat": fit.d_phi_hat,
        "stderr": fit.stderr,
        "d_phi_hat_physical": fit.d_phi_hat_physical,
        "stderr_physical": fit.stderr_physical,
        "r_squared": fit.r_squared,
        "analytic": {
            "value": analytic.value,
            "prefactor": analytic.prefactor,
            "rounded_value": analytic.rounded_value,
        },
    }
    _write_json(out / "phase_diffusion.json", doc)
    stochastic.phase_record_to_csv(record, out / "phase_variance.csv")
    _echo(doc, p["format"])
    return ["phase_diffusion.json", "phase_variance.csv"]


# ---------------------------------------------------------------------------
# figure1
# ---------------------------------------------------------------------------

def _figure1_panel(task):
    """One (kappa, gamma) panel: settled orbits and predictions per delta-eps."""
    kappa, gamma, fracs, t_periods, rel_tol = task
    hp = semiclassics.hopf_threshold(kappa, gamma)
    panel = []
    for frac in fracs:
        deps = frac * hp.epsilon_h
        if deps == 0.0:
            fp = semiclassics.fixed_point(
                SystemParams(kappa=kappa, gamma=gamma, epsilon=hp.epsilon_h))
            panel.append({
                "delta_eps": 0.0,
                "numerical": np.array([[0.0, fp.beta_i0, 0.0, fp.alpha_i0]]),
                "predicted": np.array([[0.0, fp.beta_i0, 0.0, fp.alpha_i0]]),
                "times": np.array([0.0]),
                "overlap": float("nan"),
                "period": float("nan"),
            })
            continue
        pred, meas, traj, radius = _measure_cycle(
            kappa, gamma, deps, t_periods, rel_tol, transient_fraction=0.6)
        period = meas.period if meas.converged else 2.0 * math.pi / pred.omega_h
        tail = traj.times >= traj.times[-1] - 1.05 * period
        ts = np.linspace(0.0, 2.0 * math.pi / pred.omega_h, 241)
        panel.append({
            "delta_eps": deps,
            "numerical": traj.y[tail],
            "times": traj.times[tail],
            "predicted": pred.orbit(ts),
            "overlap": float(np.mean(np.abs(radius - pred.amplitude_A)) / pred.amplitude_A),
            "period": period,
        })
    return panel


def _run_figure1(p: dict, out: Path) -> list:
    if not p["fracs"]:
        raise DomainError("--delta-eps-fracs must be non-empty")
    tasks = [(k, g, tuple(p["fracs"]), p["t_periods"], p["rel_tol"])
             for k, g in p["pairs"]]
    panels = _pmap(_figure1_panel, tasks, p["jobs"])

    outputs = []
    summary = []
    for idx, ((kappa, gamma), panel) in enumerate(zip(p["pairs"], panels)):
        curves = []
        for q, item in enumerate(panel):
            num_name = f"figure1_panel{idx}_deps{q}_numerical.csv"
            pred_name = f"figure1_panel{idx}_deps{q}_predicted.csv"
            _orbit_csv(out / num_name, item["times"], item["numerical"])
            _orbit_csv(out / pred_name, np.arange(len(item["predicted"])), item["predicted"])
            outputs += [num_name, pred_name]
            label = f"deps={item['delta_eps']:.4g}"
            curves.append(Curve(x=item["numerical"][:, 0], y=item["numerical"][:, 2],
                                label=label, dashed=False))
            curves.append(Curve(x=item["predicted"][:, 0], y=item["predicted"][:, 2],
                                label="", dashed=True))
            summary.append({
                "panel": idx, "kappa": kappa, "gamma": gamma,
                "delta_eps": item["delta_eps"],
                "mean_radial_gap_over_A": item["overlap"],
                "period": item["period"],
            })
        if p.get("gnuplot"):
            gp_name = f"figure1_panel{idx}.gp"
            data_files = []
            styles = []
            for q, item in enumerate(panel):
                data_files.append((f"figure1_panel{idx}_deps{q}_numerical.csv",
                                   f"deps={item['delta_eps']:.4g}", "2:4"))
                styles.append("lines")
                data_files.append((f"figure1_panel{idx}_deps{q}_predicted.csv",
                                   "predicted", "2:4"))
                styles.append("dashed")
            gnuplot_script(out / gp_name, data_files,
                           title=f"kappa={kappa:g}, gamma={gamma:g}",
                           xlabel="beta_r", ylabel="alpha_r", styles=styles)
            outputs.append(gp_name)
        else:
            svg_name = f"figure1_panel{idx}.svg"
            render_svg(out / svg_name, curves,
                       title=f"kappa={kappa:g}, gamma={gamma:g}",
                       xlabel="beta_r", ylabel="alpha_r")
            outputs.append(svg_name)
    _write_json(out / "figure1_summary.json", summary)
    outputs.append("figure1_summary.json")
    print(f"wrote {len(outputs)} files for {len(p['pairs'])} panels")
    return outputs


def _orbit_csv(path: Path, times, states) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,beta_r,beta_i,alpha_r,alpha_i\n")
        for t, row in zip(times, states):
            fh.write(",".join(format(v, ".17g") for v in (t, *row)) + "\n")


# ---------------------------------------------------------------------------
# figure2
# ---------------------------------------------------------------------------

def _run_figure2(p: dict, out: Path) -> list:
    params = SystemParams(kappa=p["kappa"], gamma=p["gamma"], epsilon=0.0)
    outputs = []
    curves = []
    peaks = {}
    for eps in p["eps_list"]:
        model = noise.linear_noise_model(params, epsilon=eps)  # ThresholdError names eps_h
        result = noise.spectrum_scan(model, p["omega_min"], p["omega_max"], p["n_points"])
        name = f"spectrum_eps{eps:g}.csv"
        noise.spectrum_to_csv(result, out / name)
        outputs.append(name)
        pos = result.omega_grid >= 0.0
        curves.append(Curve(x=result.omega_grid[pos],
                            y=np.abs(result.S[pos, 2, 2]),
                            label=f"eps={eps:g}"))
        peaks[f"eps={eps:g}"] = _peak_or_note(result, 2, 2)
    if p.get("gnuplot"):
        gnuplot_script(out / "figure2.gp",
                       [(name, f"eps={eps:g}", "1:4")
                        for name, eps in zip(outputs, p["eps_list"])],
                       title=f"|S33|, kappa={p['kappa']:g}, gamma={p['gamma']:g}",
                       xlabel="omega", ylabel="|S33|")
        outputs.append("figure2.gp")
    else:
        render_svg(out / "figure2.svg", curves, title=f"|S33|, kappa={p['kappa']:g}, "
                   f"gamma={p['gamma']:g}", xlabel="omega", ylabel="|S33|")
        outputs.append("figure2.svg")
    summary = {
        "kappa": p["kappa"],
        "gamma": p["gamma"],
        "omega_h": semiclassics.hopf_frequency(p["kappa"], p["gamma"]),
        "epsilon_h": semiclassics.hopf_threshold(p["kappa"], p["gamma"]).epsilon_h,
        "peaks": peaks,
    }
    _write_json(out / "figure2_summary.json", summary)
    outputs.append("figure2_summary.json")
    _echo(summary, p["format"])
    return outputs


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

_SWEEP_QUANTITIES = ("epsilon_h", "omega_h", "d", "a", "beta_i0h", "alpha_i0h", "d_phi")


def _sweep_point(task):
    kappa, gamma, quantities, delta_eps = task
    row = {"kappa": kappa, "gamma": gamma}
    hp = semiclassics.hopf_threshold(kappa, gamma)
    for q in quantities:
        if q == "epsilon_h":
            row[q] = hp.epsilon_h
        elif q == "omega_h":
            row[q] = semiclassics.hopf_frequency(kappa, gamma)
        elif q == "d":
            row[q] = cm.radial_growth_rate(kappa, gamma)
        elif q == "a":
            row[q] = cm.lyapunov_coefficient(kappa, gamma, cross_check=False)
        elif q == "beta_i0h":
            row[q] = hp.beta_i0h
        elif q == "alpha_i0h":
            row[q] = hp.alpha_i0h
        elif q == "d_phi":
            row[q] = noise.phase_diffusion_constant(kappa, delta_eps, gamma=gamma).value
    return row


def _run_sweep(p: dict, out: Path) -> list:
    tasks = [(k, g, tuple(p["quantities"]), p["delta_eps"])
             for k in p["kappa_grid"] for g in p["gamma_grid"]]
    rows = _pmap(_sweep_point, tasks, p["jobs"])
    header = ["kappa", "gamma"] + list(p["quantities"])
    with open(out / "sweep.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format(row[h], ".17g") for h in header) + "\n")
    print(f"wrote sweep.csv ({len(rows)} rows)")
    return ["sweep.csv"]


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def _add_common(sp):
    sp.add_argument("--config", default=None, help="JSON file with default values")
    sp.add_argument("--out", default=None, help="output directory (default selfpulse_out)")
    sp.add_argument("--seed", type=int, default=None, help="64-bit PRNG seed")
    sp.add_argument("--jobs", type=int, default=None, help="parallel workers")
    sp.add_argument("--format", choices=("csv", "json"), default=None,
                    help="accepted for compatibility; commands emit their native formats")


def build_parser() -> _Parser:
    parser = _Parser(prog="selfpulse", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("fixed-point", parents=[], help="critical point and stability")
    _add_common(sp)
    sp.add_argument("--kappa", type=float, default=None)
    sp.add_argument("--gamma", type=float, default=None)
    sp.add_argument("--epsilon", type=float, default=None)

    sp = sub.add_parser("simulate", help="integrate the semiclassical equations")
    _add_common(sp)
    sp.add_argument("--kappa", type=float, default=None)
    sp.add_argument("--gamma", type=float, default=None)
    sp.add_argument("--epsilon", type=float, default=None)
    sp.add_argument("--chi", type=float, default=None)
    sp.add_argument("--beta0", type=complex, default=None, help="e.g. '0.4j' or '0.1+0.2j'")
    sp.add_argument("--alpha0", type=complex, default=None)
    sp.add_argument("--t-final", type=float, default=None)
    sp.add_argument("--n-samples", type=int, default=None)
    sp.add_argument("--rel-tol", type=float, default=None)
    sp.add_argument("--abs-tol", type=float, default=None)

    sp = sub.add_parser("hopf", help="threshold, frequency and reduction report")
    _add_common(sp)
    sp.add_argument("--kappa", type=float, default=None)
    sp.add_argument("--gamma", type=float, default=None)

    sp = sub.add_parser("limit-cycle", help="measure the settled cycle above threshold")
    _add_common(sp)
    sp.add_argument("--kappa", type=float, default=None)
    sp.add_argument("--gamma", type=float, default=None)
    sp.add_argument("--delta-eps", type=float, default=None)
    sp.add_argument("--t-periods", type=float, default=None)
    sp.add_argument("--rel-tol", type=float, default=None)

    sp = sub.add_parser("spectrum", help="linearized noise spectrum below threshold")
    _add_common(sp)
    sp.add_argument("--kappa", type=float, default=None)
    sp.add_argument("--gamma", type=float, default=None)
    sp.add_argument("--epsilon", type=float, default=None)
    sp.add_argument("--omega-min", type=float, default=None)
    sp.add_argument("--omega-max", type=float, default=None)
    sp.add_argument("--n-points", type=int, default=None)
    sp.add_argument("--elements", default=None, help="one-based labels, e.g. '33,11'")

    sp = sub.add_parser("phase-diffusion", help="Monte-Carlo phase diffusion on the cycle")
    _add_common(sp)
    sp.add_argument("--kappa", type=float, default=None)
    sp.add_argument("--gamma", type=float, default=None)
    sp.add_argument("--delta-eps", type=float, default=None)
    sp.add_argument("--mode", choices=("reduced", "full"), default=None)
    sp.add_argument("--noise-scale", type=float, default=None)
    sp.add_argument("--radial-noise", action="store_true", default=None)
    sp.add_argument("--n-ensemble", type=int, default=None)
    sp.add_argument("--dt", type=float, default=None)
    sp.add_argument("--t-final", type=float, default=None)
    sp.add_argument("--burn-in", type=float, default=None)

    sp = sub.add_parser("figure1", help="limit cycles vs predictions, four panels")
    _add_common(sp)
    sp.add_argument("--pairs", default=None, help="'k1,g1;k2,g2;...'")
    sp.add_argument("--delta-eps-fracs", default=None, help="fractions of epsilon_h")
    sp.add_argument("--t-periods", type=float, default=None)
    sp.add_argument("--rel-tol", type=float, default=None)
    sp.add_argument("--gnuplot", action="store_true", default=None,
                    help="emit a plot script with the data instead of SVG")

    sp = sub.add_parser("figure2", help="|S33| curves approaching threshold")
    _add_common(sp)
    sp.add_argument("--kappa", type=float, default=None)
    sp.add_argument("--gamma", type=float, default=None)
    sp.add_argument("--eps-list", default=None, help="comma-separated drives")
    sp.add_argument("--omega-min", type=float, default=None)
    sp.add_argument("--omega-max", type=float, default=None)
    sp.add_argument("--n-points", type=int, default=None)
    sp.add_argument("--gnuplot", action="store_true", default=None,
                    help="emit a plot script with the data instead of SVG")

    sp = sub.add_parser("sweep", help="closed-form quantities over a (kappa, gamma) grid")
    _add_common(sp)
    sp.add_argument("--kappa-grid", default=None, help="min:max:count")
    sp.add_argument("--gamma-grid", default=None, help="min:max:count")
    sp.add_argument("--quantities", default=None,
                    help=f"comma-separated from {', '.join(_SWEEP_QUANTITIES)}")
    sp.add_argument("--delta-eps", type=float, default=None, help="required for d_phi")

    sp = sub.add_parser("replay", help="re-run a recorded manifest")
    sp.add_argument("manifest")
    sp.add_argument("--out", default=None, help="output directory for the replay")

    return parser


def _validate(args, config: dict) -> dict:
    """Resolve every option (CLI > config > default) and validate ranges."""
    cmd = args.command
    p = {}

    def res(key, default, attr=None):
        p[key] = _resolve(getattr(args, attr or key), config, key, default)
        return p[key]

    if cmd in ("fixed-point", "simulate", "spectrum", "figure2", "limit-cycle",
               "phase-diffusion", "hopf"):
        res("kappa", 1.0)
        res("gamma", 0.0 if cmd != "figure2" else 0.1)
        kappa_floor_ok = p["kappa"] >= 0 if cmd == "simulate" else p["kappa"] > 0
        if p["kappa"] is None or not kappa_floor_ok:
            raise DomainError(f"--kappa must be > 0, got {p['kappa']}")
        if p["gamma"] < 0:
            raise DomainError(f"--gamma must be >= 0, got {p['gamma']}")

    if cmd == "fixed-point":
        res("epsilon", 0.0)
    elif cmd == "simulate":
        res("epsilon", 0.0)
        res("chi", 1.0)
        if not (p["chi"] > 0):
            raise DomainError(f"--chi must be > 0, got {p['chi']}")
        p["beta0"] = complex(_resolve(args.beta0, config, "beta0", 0.1 + 0.0j))
        p["alpha0"] = complex(_resolve(args.alpha0, config, "alpha0", 0.0j))
        res("t_final", 100.0)
        if not (p["t_final"] > 0):
            raise DomainError("--t-final must be > 0")
        res("n_samples", 2000)
        res("rel_tol", _env_rel_tol())
        res("abs_tol", 1e-12)
    elif cmd == "limit-cycle":
        res("delta_eps", None)
        if p["delta_eps"] is None or not (p["delta_eps"] > 0):
            raise DomainError(f"--delta-eps must be > 0, got {p['delta_eps']}")
        res("t_periods", 150.0)
        res("rel_tol", _env_rel_tol())
    elif cmd == "spectrum":
        res("epsilon", 0.01)
        res("omega_min", -2.0)
        res("omega_max", 2.0)
        res("n_points", 2001)
        if p["n_points"] < 2:
            raise DomainError("--n-points must be >= 2")
        raw = _resolve(args.elements, config, "elements", "33")
        p["elements"] = _parse_elements(raw)
    elif cmd == "phase-diffusion":
        res("delta_eps", None)
        if p["delta_eps"] is None or not (p["delta_eps"] > 0):
            raise DomainError(f"--delta-eps must be > 0, got {p['delta_eps']}")
        res("mode", "reduced")
        res("noise_scale", 1.0 if p["mode"] == "reduced" else 1e-3)
        p["radial_noise"] = bool(_resolve(args.radial_noise, config, "radial_noise", False))
        res("n_ensemble", 500)
        if p["n_ensemble"] < 100:
            raise DomainError("--n-ensemble must be >= 100 for a meaningful fit")
        res("dt", stochastic.default_cycle_dt(p["kappa"], p["gamma"]))
        res("t_final", 80.0)
        res("burn_in", 0.0 if p["mode"] == "reduced" else 10.0)
    elif cmd == "figure1":
        raw = _resolve(args.pairs, config, "pairs", "1.0,0.0;1.0,0.1;0.5,0.0;0.5,0.5")
        p["pairs"] = _parse_pairs(raw, "--pairs")
        if not p["pairs"]:
            raise DomainError("--pairs must be non-empty")
        raw = _resolve(args.delta_eps_fracs, config, "delta_eps_fracs", "0.05,0.1,0.2")
        p["fracs"] = _parse_floats(raw, "--delta-eps-fracs")
        if not p["fracs"]:
            raise DomainError("--delta-eps-fracs must be non-empty")
        if any(f < 0 for f in p["fracs"]):
            raise DomainError("--delta-eps-fracs must be >= 0")
        res("t_periods", 80.0)
        res("rel_tol", _env_rel_tol())
    elif cmd == "figure2":
        raw = _resolve(args.eps_list, config, "eps_list", "0.01,0.05,0.13")
        p["eps_list"] = _parse_floats(raw, "--eps-list")
        if not p["eps_list"]:
            raise DomainError("--eps-list must be non-empty")
        res("omega_min", -2.0)
        res("omega_max", 2.0)
        res("n_points", 2001)
    elif cmd == "sweep":
        raw_k = _resolve(args.kappa_grid, config, "kappa_grid", None)
        raw_g = _resolve(args.gamma_grid, config, "gamma_grid", None)
        if raw_k is None or raw_g is None:
            raise DomainError("sweep requires --kappa-grid and --gamma-grid (min:max:count)")
        p["kappa_grid"] = [float(v) for v in _parse_grid(raw_k, "--kappa-grid")]
        p["gamma_grid"] = [float(v) for v in _parse_grid(raw_g, "--gamma-grid")]
        if any(k <= 0 for k in p["kappa_grid"]):
            raise DomainError("--kappa-grid values must be > 0")
        raw_q = _resolve(args.quantities, config, "quantities", "epsilon_h,omega_h,d,a")
        p["quantities"] = [q.strip() for q in raw_q.split(",") if q.strip()]
        bad = [q for q in p["quantities"] if q not in _SWEEP_QUANTITIES]
        if bad:
            raise DomainError(f"unknown sweep quantities: {bad}")
        res("delta_eps", None)
        if "d_phi" in p["quantities"] and (p["delta_eps"] is None or p["delta_eps"] <= 0):
            raise DomainError("quantity d_phi requires --delta-eps > 0")
        if p["delta_eps"] is None:
            p["delta_eps"] = 0.0

    p["seed"] = int(_resolve(getattr(args, "seed", None), config, "seed", 0))
    p["jobs"] = int(_resolve(getattr(args, "jobs", None), config, "jobs", 1))
    if p["jobs"] < 1:
        raise DomainError("--jobs must be >= 1")
    p["format"] = _resolve(getattr(args, "format", None), config, "format", "json")
    if p["format"] not in ("csv", "json"):
        raise DomainError(f"--format must be csv or json, got {p['format']!r}")
    if cmd in ("figure1", "figure2"):
        p["gnuplot"] = bool(_resolve(getattr(args, "gnuplot", None), config,
                                     "gnuplot", False))
    return p


_FLAG_SPECS = {
    "fixed-point": [("--kappa", "kappa"), ("--gamma", "gamma"), ("--epsilon", "epsilon")],
    "simulate": [("--kappa", "kappa"), ("--gamma", "gamma"), ("--epsilon", "epsilon"),
                 ("--chi", "chi"), ("--beta0", "beta0"), ("--alpha0", "alpha0"),
                 ("--t-final", "t_final"), ("--n-samples", "n_samples"),
                 ("--rel-tol", "rel_tol"), ("--abs-tol", "abs_tol")],
    "hopf": [("--kappa", "kappa"), ("--gamma", "gamma")],
    "limit-cycle": [("--kappa", "kappa"), ("--gamma", "gamma"),
                    ("--delta-eps", "delta_eps"), ("--t-periods", "t_periods"),
                    ("--rel-tol", "rel_tol")],
    "spectrum": [("--kappa", "kappa"), ("--gamma", "gamma"), ("--epsilon", "epsilon"),
                 ("--omega-min", "omega_min"), ("--omega-max", "omega_max"),
                 ("--n-points", "n_points")],
    "phase-diffusion": [("--kappa", "kappa"), ("--gamma", "gamma"),
                        ("--delta-eps", "delta_eps"), ("--mode", "mode"),
                        ("--noise-scale", "noise_scale"), ("--n-ensemble", "n_ensemble"),
                        ("--dt", "dt"), ("--t-final", "t_final"), ("--burn-in", "burn_in")],
    "figure1": [("--t-periods", "t_periods"), ("--rel-tol", "rel_tol")],
    "figure2": [("--kappa", "kappa"), ("--gamma", "gamma"),
                ("--omega-min", "omega_min"), ("--omega-max", "omega_max"),
                ("--n-points", "n_points")],
    "sweep": [("--delta-eps", "delta_eps")],
}

_RUNNERS = {
    "fixed-point": _run_fixed_point,
    "simulate": _run_simulate,
    "hopf": _run_hopf,
    "limit-cycle": _run_limit_cycle,
    "spectrum": _run_spectrum,
    "phase-diffusion": _run_phase_diffusion,
    "figure1": _run_figure1,
    "figure2": _run_figure2,
    "sweep": _run_sweep,
}


def _canonical_argv(cmd: str, p: dict) -> list:
    argv = [cmd]
    for flag, key in _FLAG_SPECS.get(cmd, []):
        if p.get(key) is not None:
            argv += [flag, _fmt(p[key])]
    if cmd == "phase-diffusion" and p.get("radial_noise"):
        argv.append("--radial-noise")
    if cmd in ("figure1", "figure2") and p.get("gnuplot"):
        argv.append("--gnuplot")
    if cmd == "spectrum":
        argv += ["--elements", ",".join(f"{i + 1}{j + 1}" for i, j in p["elements"])]
    if cmd == "figure1":
        argv += ["--pairs", ";".join(f"{k},{g}" for k, g in p["pairs"])]
        argv += ["--delta-eps-fracs", ",".join(_fmt(f) for f in p["fracs"])]
    if cmd == "figure2":
        argv += ["--eps-list", ",".join(_fmt(e) for e in p["eps_list"])]
    if cmd == "sweep":
        kg, gg = p["kappa_grid"], p["gamma_grid"]
        argv += ["--kappa-grid", f"{kg[0]!r}:{kg[-1]!r}:{len(kg)}"]
        argv += ["--gamma-grid", f"{gg[0]!r}:{gg[-1]!r}:{len(gg)}"]
        argv += ["--quantities", ",".join(p["quantities"])]
    argv += ["--seed", str(p["seed"]), "--jobs", str(p["jobs"]), "--format", p["format"]]
    return argv


def _run_replay(args) -> int:
    with open(args.manifest, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    argv = list(manifest["argv"])
    out = args.out or (str(Path(args.manifest).resolve().parent) + "_replay")
    argv += ["--out", out]
    return main(argv)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "replay":
        try:
            return _run_replay(args)
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            print(f"selfpulse replay: cannot load manifest: {exc}", file=sys.stderr)
            return 1

    try:
        config = _load_config(args.config)
        p = _validate(args, config)
    except (DomainError, OSError, json.JSONDecodeError) as exc:
        print(f"selfpulse {args.command}: {exc}", file=sys.stderr)
        return 1

    out = Path(_resolve(args.out, config, "out", "selfpulse_out"))
    out.mkdir(parents=True, exist_ok=True)

    start = time.monotonic()
    try:
        outputs = _RUNNERS[args.command](p, out)
    except SelfPulseError as exc:
        print(f"selfpulse {args.command}: {exc}", file=sys.stderr)
        return 2
    wall = time.monotonic() - start

    manifest_params = {k: v for k, v in p.items()}
    for key, val in list(manifest_params.items()):
        if isinstance(val, complex):
            manifest_params[key] = str(val)
        elif isinstance(val, list) and val and isinstance(val[0], tuple):
            manifest_params[key] = [list(t) for t in val]
        elif isinstance(val, tuple):
            manifest_params[key] = list(val)
    _write_manifest(out, args.command, manifest_params, p["seed"],
                    _canonical_argv(args.command, p), outputs, wall)
    return 0


if __name__ == "__main__":
    sys.exit(main())
