"""Synthesize from a published parameter set, refit from perturbed guesses, report accuracy.

    python scripts/roundtrip_fit.py --preset story-1 --noise 0 --noise 0.05
"""
import json
import time
from pathlib import Path

import click

from cascade_pde.calibrate import fit, synthesize
from cascade_pde.fileio import write_density_csv
from cascade_pde.presets import PRESETS


@click.command()
@click.option("--preset", "names", multiple=True, type=click.Choice(sorted(PRESETS)),
              default=tuple(sorted(PRESETS)))
@click.option("--noise", "noises", multiple=True, type=float, default=(0.0, 0.05))
@click.option("--seed", default=3, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default="results/roundtrip")
def main(names, noises, seed, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    summary = []
    for name in names:
        preset = PRESETS[name]()
        truth = preset.model.flat_params()
        for noise in noises:
            start = time.perf_counter()
            observed = synthesize(preset.model, preset.grid, preset.phi, noise, seed=seed)
            res = fit(preset.problem(observed, seed=seed))
            elapsed = time.perf_counter() - start
            tag = f"{name}_noise{noise:g}"
            write_density_csv(out / f"{tag}_observed.csv", observed)
            write_density_csv(out / f"{tag}_predicted.csv", res.predicted)
            errors = {p.name: res.parameters[p.name] / truth[p.name] - 1.0 for p in preset.free}
            summary.append({"preset": name, "noise": noise, "accuracy": res.overall_average,
                            "parameters": dict(res.parameters), "relative_errors": errors,
                            "evaluations": res.evaluations, "seconds": round(elapsed, 1)})
            click.echo(f"{name} noise={noise:g}: accuracy {res.overall_average:.4f}, "
                       f"worst parameter error {max(abs(v) for v in errors.values()):.2e}, "
                       f"{res.evaluations} evaluations, {elapsed:.0f} s")
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")


if __name__ == "__main__":
    main()
