"""``cascade-pde`` command line: one subcommand per pipeline stage.

Every run resolves its JSON config (defaults filled, unknown keys rejected),
writes ``resolved_config.json`` into ``--out`` and then its outputs. Exit
codes: 2 for invalid input or any other package error, 3 for numerical
divergence, 4 for an infeasible fit.
"""
from __future__ import annotations

import functools
import json
import math
import sys
from pathlib import Path

import click
import numpy as np

from . import calibrate, cascade, solver, spectral, stefan
from .config import (
    apply_overrides,
    build_decay,
    build_grid,
    build_heterogeneity,
    build_initial,
    build_scalar_model,
    build_system_model,
    load_config,
    resolve_command,
)
from .errors import CascadePDEError, DivergenceError, FitError, ValidationError
from .fileio import fmt, read_density_csv, write_density_csv, write_rows
from .models import GridSpec

EXIT_VALIDATION, EXIT_DIVERGENCE, EXIT_FIT = 2, 3, 4


def _dump_json(path: Path, doc):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _new_figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # fixed salt and no timestamp keep the SVG bytes reproducible
    matplotlib.rcParams["svg.hashsalt"] = "cascade-pde"
    fig, ax = plt.subplots(figsize=(6, 4))
    return plt, fig, ax


def _save_figure(plt, fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_density(field, path, title="density"):
    """Density against distance, one line per observation time."""
    plt, fig, ax = _new_figure()
    for j, t in enumerate(field.times):
        ax.plot(field.distances, field.values[:, j], marker="o", ms=3, label=f"t={t:g}")
    ax.set_xlabel("distance x")
    ax.set_ylabel("I(x, t)")
    ax.set_title(title)
    if len(field.times) <= 12:
        ax.legend(fontsize=7)
    _save_figure(plt, fig, path)


def plot_lines(curves, path, xlabel, ylabel, title=""):
    """``curves`` is a list of ``(label, x, y)``."""
    plt, fig, ax = _new_figure()
    for label, x, y in curves:
        ax.plot(x, y, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if len(curves) <= 12:
        ax.legend(fontsize=7)
    _save_figure(plt, fig, path)


# --- shared option plumbing ------------------------------------------------------

_COMMON_OPTIONS = (
    click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                 help="JSON run configuration."),
    click.option("--out", "out_dir", type=click.Path(file_okay=False), default="out",
                 show_default=True, help="Output directory."),
    click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None,
                 help="RNG seed (overrides the config)."),
    click.option("--plot", is_flag=True, default=False, help="Also write SVG plots."),
    click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
                 help="Override a config key (dotted path, JSON value)."),
)


def _with(options):
    def decorate(func):
        for option in reversed(options):
            func = option(func)
        return func

    return decorate


_common_options = _with(_COMMON_OPTIONS)


def _run(command, handler, config_path, out_dir, seed, plot, overrides, extra=None):
    try:
        if config_path is not None:
            doc, base = load_config(config_path), Path(config_path).resolve().parent
        else:
            doc, base = {}, Path.cwd()
        doc.update({k: v for k, v in (extra or {}).items() if v is not None})
        doc = apply_overrides(doc, overrides)
        if seed is not None:
            doc["seed"] = seed
        if plot:
            doc["plot"] = True
        resolved = resolve_command(command, doc, base)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _dump_json(out / "resolved_config.json", resolved)
        handler(resolved, out)
    except FitError as exc:
        click.echo(f"error: fit failed: {exc}", err=True)
        sys.exit(EXIT_FIT)
    except DivergenceError as exc:
        click.echo(f"error: numerical divergence: {exc}", err=True)
        sys.exit(EXIT_DIVERGENCE)
    except (CascadePDEError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)


@click.group()
@click.version_option(package_name="cascade-pde")
def main():
    """Reaction-diffusion modelling of information cascades."""


# --- ingest / density ----------------------------------------------------------------

def _parse_times(text):
    if text is None:
        return None
    if ":" in text:
        start, stop, step = (float(v) for v in text.split(":"))
        return {"start": start, "stop": stop, "step": step}
    return [float(v) for v in text.split(",") if v.strip()]


def _ingest(cfg, out, full=True):
    graph = cascade.read_graph_csv(cfg["graph"], user_count=cfg["user_count"])
    sources = cascade.read_sources(cfg["sources"])
    casc = cascade.read_cascade_csv(cfg["cascade"], sources)
    field = cascade.density_field(graph, casc, cfg["times"], cfg["mode"], cfg["population"])
    write_density_csv(out / "density.csv", field)
    if cfg["plot"]:
        plot_density(field, out / "density.svg")
    if not full:
        return
    dmap = cascade.hop_distances(graph, casc.source_ids)
    write_rows(out / "distances.csv", ["user_id", "distance"], dmap.distances.items())
    sizes = dmap.group_sizes(exclude=casc.source_ids)
    write_rows(out / "group_sizes.csv", ["distance", "group_size"], sizes.items())
    stats = {
        "users": graph.user_count,
        "edges": len(graph.edges),
        "sources": sorted(casc.source_ids),
        "adopters": len(casc.adopters - casc.source_ids),
        "reachable_users": len(dmap.distances),
        "unreachable_users": dmap.unreachable_count,
        "skipped_adopters": field.skipped_adopters,
    }
    _dump_json(out / "stats.json", stats)
    click.echo(f"distance groups: {len(sizes)}; unreachable users: {dmap.unreachable_count}; "
               f"skipped adopters: {field.skipped_adopters}")


_ingest_options = _with((
    click.option("--graph", type=click.Path(dir_okay=False), default=None,
                 help="follower,followee CSV."),
    click.option("--cascade", "cascade_path", type=click.Path(dir_okay=False), default=None,
                 help="user_id,time_hours CSV."),
    click.option("--sources", type=click.Path(dir_okay=False), default=None,
                 help="File with one source id per line."),
    click.option("--times", default=None, help="start:stop:step or a comma list."),
    click.option("--mode", type=click.Choice(["ratio", "count"]), default=None),
))


@main.command("ingest")
@_common_options
@_ingest_options
def cmd_ingest(config_path, out_dir, seed, plot, overrides, graph, cascade_path, sources, times,
               mode):
    """Distances, group sizes, density field and counts from raw cascade files."""
    extra = {"graph": graph, "cascade": cascade_path, "sources": sources,
             "times": _parse_times(times), "mode": mode}
    _run("ingest", _ingest, config_path, out_dir, seed, plot, overrides, extra)


@main.command("density")
@_common_options
@_ingest_options
def cmd_density(config_path, out_dir, seed, plot, overrides, graph, cascade_path, sources, times,
                mode):
    """Only the density field of a cascade."""
    extra = {"graph": graph, "cascade": cascade_path, "sources": sources,
             "times": _parse_times(times), "mode": mode}
    _run("density", functools.partial(_ingest, full=False), config_path, out_dir, seed, plot,
         overrides, extra)


# --- solve / synth -----------------------------------------------------------------

def _solution_rows(sol, k):
    for t, row in zip(sol.t, sol.components[k]):
        yield [float(t)] + [float(v) for v in row]


def _solve(cfg, out):
    grid = build_grid(cfg["grid"])
    if isinstance(cfg["initial"], list):
        model = build_system_model(cfg["model"])
        sol = solver.solve_system(model, grid, [build_initial(v) for v in cfg["initial"]])
    else:
        model = build_scalar_model(cfg["model"])
        sol = solver.solve_scalar(model, grid, build_initial(cfg["initial"]))
    header = ["t"] + [fmt(float(x)) for x in sol.x]
    for k, name in enumerate(sol.names):
        write_rows(out / f"solution_{name}.csv", header, _solution_rows(sol, k))
    if cfg["sample"] is not None:
        field = solver.sample_at_distances(sol, cfg["sample"]["distances"],
                                           cfg["sample"]["times"], mode=cfg["mode"])
        write_density_csv(out / "sampled.csv", field)
        if cfg["plot"]:
            plot_density(field, out / "sampled.svg", "sampled density")
    if cfg["plot"]:
        idx = np.unique(np.linspace(0, sol.t.size - 1, min(8, sol.t.size)).astype(int))
        for k, name in enumerate(sol.names):
            curves = [(f"t={sol.t[i]:g}", sol.x, sol.components[k][i]) for i in idx]
            plot_lines(curves, out / f"solution_{name}.svg", "x", name)
    click.echo(f"solved {len(sol.names)} component(s) on {sol.x.size} nodes, "
               f"{sol.t.size} stored times")


@main.command("solve")
@_common_options
def cmd_solve(config_path, out_dir, seed, plot, overrides):
    """Integrate a scalar model or a system from a config."""
    _run("solve", _solve, config_path, out_dir, seed, plot, overrides)


def _synth(cfg, out):
    field = calibrate.synthesize(
        build_scalar_model(cfg["model"]), build_grid(cfg["grid"]), build_initial(cfg["initial"]),
        cfg["noise_level"], cfg["seed"], cfg["distances"], cfg["times"], cfg["mode"],
    )
    write_density_csv(out / "density.csv", field)
    if cfg["plot"]:
        plot_density(field, out / "density.svg", "synthetic density")
    click.echo(f"synthetic field: {len(field.distances)} distances x {len(field.times)} times")


@main.command("synth")
@_common_options
def cmd_synth(config_path, out_dir, seed, plot, overrides):
    """Synthetic density field from a model, optionally with noise."""
    _run("synth", _synth, config_path, out_dir, seed, plot, overrides)


# --- fit -----------------------------------------------------------------------------

def _fit(cfg, out):
    observed = read_density_csv(cfg["observed"], mode=cfg["mode"])
    free = tuple(calibrate.FreeParameter(name, s["lo"], s["hi"], s["init"])
                 for name, s in cfg["free"].items())
    base = build_scalar_model(cfg["model"]).with_params(**{p.name: p.init for p in free})
    problem = calibrate.FitProblem(
        base, observed, free, loss=cfg["loss"], per_unit=cfg["per_unit"], dt=cfg["dt"],
        seed=cfg["seed"], restarts=cfg["restarts"], max_evals=cfg["max_evals"],
        xatol=cfg["xatol"], fatol=cfg["fatol"],
    )
    res = calibrate.fit(problem)

    rows = [[p.name, p.init, res.parameters[p.name], "free"] for p in free]
    rows += [[k, v, v, "fixed"] for k, v in problem.fixed.items()]
    write_rows(out / "parameters.csv", ["name", "initial", "value", "status"], rows)
    header = ["distance"] + [fmt(t) for t in observed.times] + ["average"]
    acc_rows = []
    for i, x in enumerate(observed.distances):
        avg = res.per_distance_average.get(x, math.nan)
        acc_rows.append([x] + [float(v) for v in res.per_cell_accuracy[i]] + [avg])
    write_rows(out / "accuracy.csv", header, acc_rows)
    write_density_csv(out / "predicted.csv", res.predicted)

    lines = [
        f"loss: {cfg['loss']}",
        f"initial loss: {fmt(res.initial_loss)}",
        f"final loss: {fmt(res.final_loss)}",
        f"iterations: {res.iterations}",
        f"evaluations: {res.evaluations}",
        "parameters:",
    ]
    lines += [f"  {p.name} = {fmt(res.parameters[p.name])} (free, start {fmt(p.init)})"
              for p in free]
    lines += [f"  {k} = {fmt(v)} (fixed)" for k, v in problem.fixed.items()]
    lines.append("accuracy by distance:")
    lines += [f"  x={x}: {fmt(v)} over {res.included_cells[x]} cells"
              for x, v in res.per_distance_average.items()]
    lines.append(f"overall accuracy: {fmt(res.overall_average)}")
    (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if cfg["plot"]:
        plt, fig, ax = _new_figure()
        for j, t in enumerate(observed.times):
            line, = ax.plot(observed.distances, res.predicted.values[:, j], label=f"t={t:g}")
            ax.plot(observed.distances, observed.values[:, j], "o", ms=3, color=line.get_color())
        ax.set_xlabel("distance x")
        ax.set_ylabel("I(x, t)")
        ax.set_title("observed (markers) and fitted (lines)")
        if len(observed.times) <= 12:
            ax.legend(fontsize=7)
        _save_figure(plt, fig, out / "fit.svg")
    click.echo(f"overall accuracy: {res.overall_average:.6f}")
    for p in free:
        click.echo(f"{p.name} = {res.parameters[p.name]:.6g}")


@main.command("fit")
@_common_options
def cmd_fit(config_path, out_dir, seed, plot, overrides):
    """Calibrate model parameters against an observed density CSV."""
    _run("fit", _fit, config_path, out_dir, seed, plot, overrides)


# --- speed / eig ------------------------------------------------------------------------

def _speed(cfg, out):
    fam, p = cfg["family"], cfg["parameters"]
    if fam == "fisher":
        if not (p["r"] > 0 and p["d"] > 0):
            raise ValidationError("fisher speed needs d > 0 and r > 0")
        lin = spectral.Linearization.scalar(p["d"], p["r"])
        lam = math.sqrt(p["r"] / p["d"])
        closed = spectral.SpeedResult(2 * math.sqrt(p["d"] * p["r"]), lam, "closed-form",
                                      spectral._profile(lin, lam))
    elif fam == "cooperative":
        closed = spectral.min_speed_cooperative(**p)
        lin = spectral.Linearization((p["d1"], p["d2"]), np.diag([p["r1"], p["r2"]]))
    elif fam == "competition":
        closed = spectral.min_speed_competition(**p)
        lin = spectral.competition_linearization(
            p["d1"], p["r1"], p["alpha1"], p["k2"], p.get("d2", p["d1"]), p.get("r2", 0.0),
            p.get("alpha2", 0.0))
    elif fam == "sir":
        closed = spectral.min_speed_sir(**p)
        lin = spectral.sir_linearization(**p)
    else:
        closed = None
        lin = spectral.Linearization(tuple(p["diffusivities"]), np.array(p["jacobian"], dtype=float))
    result = closed
    numeric = None
    if closed is None or cfg["compare_numeric"]:
        numeric = spectral.min_speed_numeric(lin, allow_noncooperative=(fam == "sir"))
        result = closed or numeric
    click.echo(f"c* = {result.c_star:.10g}")
    click.echo(f"lambda* = {result.lam_star:.10g}")
    click.echo(f"method: {result.method}")
    summary = {"family": fam, "c_star": result.c_star, "lambda_star": result.lam_star,
               "method": result.method}
    if numeric is not None and closed is not None:
        rel = abs(numeric.c_star - closed.c_star) / closed.c_star
        click.echo(f"numeric c* = {numeric.c_star:.10g} (relative difference {rel:.2e})")
        summary["numeric_c_star"] = numeric.c_star
    _dump_json(out / "speed.json", summary)
    write_rows(out / "phi_curve.csv", ["lambda", "phi"], result.profile.tolist())
    if cfg["plot"]:
        plot_lines([("Phi", result.profile[:, 0], result.profile[:, 1])], out / "phi_curve.svg",
                   "lambda", "Phi(lambda)", f"c* = {result.c_star:.6g}")


@main.command("speed")
@_common_options
def cmd_speed(config_path, out_dir, seed, plot, overrides):
    """Minimum wave speed of a linearised family."""
    _run("speed", _speed, config_path, out_dir, seed, plot, overrides)


def _eig(cfg, out):
    h_spec = build_heterogeneity(cfg["heterogeneity"])
    res = spectral.principal_eigenvalue(cfg["d"], cfg["b"], h_spec, cfg["robin_alpha"],
                                        tuple(cfg["interval"]), cfg["nx"])
    lam_star = spectral.persistence_threshold(res.mu, cfg["r_infinity"])
    click.echo(f"mu1 = {res.mu:.10g}")
    click.echo(f"lambda* = {lam_star:.10g}")
    write_rows(out / "eigenfunction.csv", ["x", "u"], zip(res.x.tolist(), res.eigenfunction.tolist()))
    summary = {"mu1": res.mu, "lambda_star": lam_star, "iterations": res.iterations}
    if cfg["check_persistence"]:
        rows = []
        for factor in (1.5, 0.5):
            lam = factor * lam_star
            sup = spectral.persistence_check(cfg["d"], cfg["b"], h_spec, cfg["robin_alpha"],
                                             tuple(cfg["interval"]), cfg["r_infinity"], lam)
            rows.append([lam, sup])
            click.echo(f"lambda = {lam:.6g}: sup|u(T)| = {sup:.6g}")
        write_rows(out / "persistence.csv", ["lambda", "sup_norm_final"], rows)
        summary["persistence"] = rows
    _dump_json(out / "eig.json", summary)
    if cfg["plot"]:
        plot_lines([("u1", res.x, res.eigenfunction)], out / "eigenfunction.svg", "x", "u",
                   f"mu1 = {res.mu:.6g}")


@main.command("eig")
@_common_options
def cmd_eig(config_path, out_dir, seed, plot, overrides):
    """Principal eigenvalue of the weighted Robin problem and the persistence threshold."""
    _run("eig", _eig, config_path, out_dir, seed, plot, overrides)


# --- stefan ------------------------------------------------------------------------------

def _stefan(cfg, out):
    decay = build_decay(cfg["decay"])
    g = cfg["grid"]
    grid = GridSpec(l=0.0, L=1.0, nx=g["nx"], t0=g["t0"], t_end=g["t_end"], dt=g["dt"],
                    save_every=g["save_every"])
    settings = stefan.RegimeSettings(**cfg["regime"])
    r_inf = decay.limit
    rows, curves = [], []
    for i, mu in enumerate(cfg["mu"]):
        model = stefan.StefanModel(cfg["d"], cfg["K"], decay, mu, cfg["h0"],
                                   stefan.cosine_profile(cfg["h0"]), scale=cfg["scale"])
        traj = stefan.solve_stefan(model, grid, regime=settings)
        write_rows(out / f"front_{i}.csv", ["t", "h"],
                   zip(traj.times.tolist(), traj.h_values.tolist()))
        k0 = resid = math.nan
        if traj.regime != "vanishing":
            k0, resid = stefan.front_speed(traj, cfg["tail_fraction"])
        ratio = k0 / math.sqrt(r_inf * cfg["d"])
        rows.append([mu, mu * cfg["K"] / cfg["d"], k0, ratio, resid, traj.regime])
        curves.append((f"mu={mu:g}", traj.times, traj.h_values))
        click.echo(f"mu = {mu:g}: regime {traj.regime}, k0 = {k0:.6g}, "
                   f"k0/sqrt(r d) = {ratio:.6g}")
    write_rows(out / "speed_ratio.csv",
               ["mu", "mu_K_over_d", "k0", "ratio", "fit_residual", "regime"], rows)
    thr = cfg["threshold"]
    if thr is not None:
        model = stefan.StefanModel(cfg["d"], cfg["K"], decay, thr["mu"], thr["h0"],
                                   stefan.cosine_profile(thr["h0"]))
        lo, hi = stefan.vanishing_threshold(model, thr["lam_lo"], thr["lam_hi"], grid,
                                            thr["n_bisect"], settings)
        write_rows(out / "threshold.csv", ["lam_vanishing", "lam_spreading"], [[lo, hi]])
        click.echo(f"vanishing/spreading threshold in [{lo:.8g}, {hi:.8g}]")
    if cfg["plot"]:
        plot_lines(curves, out / "fronts.svg", "t", "h(t)", "front position")


@main.command("stefan")
@_common_options
def cmd_stefan(config_path, out_dir, seed, plot, overrides):
    """Free-boundary runs: front trajectories, speed ratios, optional threshold search."""
    _run("stefan", _stefan, config_path, out_dir, seed, plot, overrides)


if __name__ == "__main__":
    main()
