"""Measured mid-level front speed of the logistic model against 2 sqrt(r d).

    python scripts/fisher_speed.py --out results/fisher
"""
from pathlib import Path

import click
import numpy as np

from cascade_pde.fileio import write_rows
from cascade_pde.models import DecaySpec, GridSpec, ScalarModel
from cascade_pde.solver import front_positions, solve_scalar


@click.command()
@click.option("--out", type=click.Path(file_okay=False), default="results/fisher")
@click.option("--length", default=400.0, show_default=True)
@click.option("--nx", default=1600, show_default=True)
@click.option("--t-end", default=150.0, show_default=True)
@click.option("--dt", default=0.05, show_default=True)
def main(out, length, nx, t_end, dt):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for d, r in [(1.0, 1.0), (0.5, 2.0), (2.0, 0.25), (1.0, 4.0)]:
        model = ScalarModel("logistic", d=d, K=1.0, decay=DecaySpec.constant(r))
        grid = GridSpec(l=0, L=length, nx=nx, t0=0, t_end=t_end, dt=dt, save_every=20)
        sol = solve_scalar(model, grid, lambda x: np.where(x <= 10.0, 1.0, 0.0))
        front = front_positions(sol, 0.5)
        ok = np.isfinite(front) & (front < 0.95 * length)
        tail = ok & (sol.t >= 0.5 * sol.t[ok].max())
        speed = float(np.polyfit(sol.t[tail], front[tail], 1)[0])
        c_star = 2.0 * np.sqrt(r * d)
        rows.append([d, r, c_star, speed, speed / c_star - 1.0])
        click.echo(f"d={d:g} r={r:g}: c*={c_star:.4f} measured={speed:.4f} "
                   f"({100 * (speed / c_star - 1):+.2f}%)")
    write_rows(out / "fisher_speed.csv", ["d", "r", "c_star", "measured", "rel_error"], rows)


if __name__ == "__main__":
    main()
