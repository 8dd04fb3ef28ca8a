"""JSON run configurations: key checking, defaults, and object builders.

Every ``resolve_*`` function takes the raw (parsed) document, rejects keys
it does not know, fills defaults and returns a fully explicit dict. Writing
that dict back out and running from it reproduces the run exactly.
"""
from __future__ import annotations

import copy
import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .models import GridSpec, DecaySpec, HeterogeneitySpec, ScalarModel, SystemModel
from .spline import build_initial_density

__all__ = [
    "load_config",
    "apply_overrides",
    "check_keys",
    "resolve_command",
    "build_decay",
    "build_heterogeneity",
    "build_scalar_model",
    "build_system_model",
    "build_grid",
    "build_initial",
    "COMMANDS",
]

COMMANDS = ("ingest", "density", "solve", "fit", "speed", "eig", "stefan", "synth")


def load_config(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: top level must be an object")
    return doc


def apply_overrides(doc: dict, assignments) -> dict:
    """Apply ``a.b.c=value`` overrides; ``value`` is parsed as JSON when possible."""
    out = copy.deepcopy(doc)
    for item in assignments:
        if "=" not in item:
            raise ValidationError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        parts = key.strip().split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValidationError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = value
    return out


def check_keys(doc, allowed, where):
    if not isinstance(doc, dict):
        raise ValidationError(f"{where}: expected an object")
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ValidationError(f"{where}: unknown keys {unknown} (allowed: {sorted(allowed)})")


def _require(doc, key, where):
    if key not in doc:
        raise ValidationError(f"{where}: missing required key {key!r}")
    return doc[key]


def _num(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _path(value, base: Path, where):
    if not isinstance(value, str):
        raise ValidationError(f"{where}: expected a path string")
    p = Path(value)
    return str(p if p.is_absolute() else (base / p).resolve())


# --- model pieces -----------------------------------------------------------

_DECAY_KEYS = {"ode": ("alpha", "beta", "gamma"), "offset-exp": ("A", "B", "C"),
               "constant": ("rate",)}


def resolve_decay(doc, where="decay"):
    if isinstance(doc, (int, float)) and not isinstance(doc, bool):
        doc = {"form": "constant", "rate": doc}
    form = _require(doc, "form", where) if isinstance(doc, dict) else None
    if form not in _DECAY_KEYS:
        raise ValidationError(f"{where}: form must be one of {sorted(_DECAY_KEYS)}")
    check_keys(doc, ("form",) + _DECAY_KEYS[form], where)
    out = {"form": form}
    for k in _DECAY_KEYS[form]:
        out[k] = _num(_require(doc, k, where), f"{where}.{k}")
    return out


def build_decay(doc) -> DecaySpec:
    form = doc["form"]
    if form == "ode":
        return DecaySpec.ode(doc["alpha"], doc["beta"], doc["gamma"])
    if form == "offset-exp":
        return DecaySpec.offset_exp(doc["A"], doc["B"], doc["C"])
    return DecaySpec.constant(doc["rate"])


def resolve_heterogeneity(doc, where="heterogeneity"):
    doc = {"form": "constant"} if doc is None else doc
    form = _require(doc, "form", where)
    if form == "constant":
        check_keys(doc, ("form",), where)
        return {"form": "constant"}
    if form == "quadratic":
        check_keys(doc, ("form", "rho", "sigma"), where)
        return {"form": "quadratic", "rho": _num(_require(doc, "rho", where), where),
                "sigma": _num(_require(doc, "sigma", where), where)}
    raise ValidationError(f"{where}: form must be 'constant' or 'quadratic'")


def build_heterogeneity(doc) -> HeterogeneitySpec:
    if doc["form"] == "quadratic":
        return HeterogeneitySpec.quadratic(doc["rho"], doc["sigma"])
    return HeterogeneitySpec()


_SCALAR_KEYS = ("family", "d", "b", "K", "decay", "heterogeneity", "bc", "robin_alpha",
                "rate_scale")


def resolve_scalar_model(doc, where="model"):
    check_keys(doc, _SCALAR_KEYS, where)
    out = {
        "family": _require(doc, "family", where),
        "d": _num(_require(doc, "d", where), f"{where}.d"),
        "b": _num(doc.get("b", 0.0), f"{where}.b"),
        "K": _num(doc.get("K", 1.0), f"{where}.K"),
        "decay": resolve_decay(_require(doc, "decay", where), f"{where}.decay"),
        "heterogeneity": resolve_heterogeneity(doc.get("heterogeneity"), f"{where}.heterogeneity"),
        "bc": doc.get("bc", "neumann"),
        "robin_alpha": _num(doc.get("robin_alpha", 0.0), f"{where}.robin_alpha"),
        "rate_scale": _num(doc.get("rate_scale", 1.0), f"{where}.rate_scale"),
    }
    build_scalar_model(out)  # validate family invariants now
    return out


def build_scalar_model(doc) -> ScalarModel:
    return ScalarModel(
        family=doc["family"], d=doc["d"], b=doc["b"], K=doc["K"],
        decay=build_decay(doc["decay"]), heterogeneity=build_heterogeneity(doc["heterogeneity"]),
        bc=doc["bc"], robin_alpha=doc["robin_alpha"], rate_scale=doc["rate_scale"],
    )


_SYSTEM_KEYS = ("family", "diffusivities", "rates", "capacities", "alphas", "beta", "gamma",
                "bc", "robin_alpha")


def resolve_system_model(doc, where="model"):
    check_keys(doc, _SYSTEM_KEYS, where)
    fam = _require(doc, "family", where)
    out = {
        "family": fam,
        "diffusivities": [_num(v, f"{where}.diffusivities")
                          for v in _require(doc, "diffusivities", where)],
        "rates": [resolve_decay(r, f"{where}.rates[{i}]") for i, r in enumerate(doc.get("rates", []))],
        "capacities": [_num(v, f"{where}.capacities") for v in doc.get("capacities", [])],
        "alphas": [_num(v, f"{where}.alphas") for v in doc.get("alphas", [0.0, 0.0])],
        "beta": _num(doc.get("beta", 0.0), f"{where}.beta"),
        "gamma": _num(doc.get("gamma", 0.0), f"{where}.gamma"),
        "bc": doc.get("bc", "neumann"),
        "robin_alpha": _num(doc.get("robin_alpha", 0.0), f"{where}.robin_alpha"),
    }
    if len(out["alphas"]) != 2:
        raise ValidationError(f"{where}.alphas: need exactly two values")
    build_system_model(out)
    return out


def build_system_model(doc) -> SystemModel:
    return SystemModel(
        family=doc["family"], diffusivities=tuple(doc["diffusivities"]),
        rates=tuple(build_decay(r) for r in doc["rates"]), capacities=tuple(doc["capacities"]),
        alphas=tuple(doc["alphas"]), beta_e=doc["beta"], gamma_e=doc["gamma"],
        bc=doc["bc"], robin_alpha=doc["robin_alpha"],
    )


_GRID_KEYS = ("l", "L", "nx", "per_unit", "t0", "t_end", "dt", "save_every")


def resolve_grid(doc, where="grid", defaults=None):
    doc = dict(defaults or {}, **(doc or {}))
    check_keys(doc, _GRID_KEYS, where)
    l = _num(doc.get("l", 1.0), f"{where}.l")
    L = _num(doc.get("L", 5.0), f"{where}.L")
    if "nx" in doc and "per_unit" in doc:
        raise ValidationError(f"{where}: give nx or per_unit, not both")
    if "per_unit" in doc:
        nx = GridSpec.aligned(l, L, int(doc["per_unit"])).nx
    else:
        nx = int(doc.get("nx", 40))
    out = {"l": l, "L": L, "nx": nx, "t0": _num(doc.get("t0", 1.0), f"{where}.t0"),
           "t_end": _num(doc.get("t_end", 6.0), f"{where}.t_end"),
           "dt": _num(doc.get("dt", 0.01), f"{where}.dt"),
           "save_every": int(doc.get("save_every", 1))}
    build_grid(out)
    return out


def build_grid(doc) -> GridSpec:
    return GridSpec(**doc)


# --- initial data -----------------------------------------------------------

_INITIAL_KINDS = {
    "samples": ("kind", "samples"),
    "density_csv": ("kind", "path", "time"),
    "constant": ("kind", "value"),
    "step": ("kind", "value", "until"),
    "exponential": ("kind", "amplitude", "rate", "origin"),
}


def resolve_initial(doc, base: Path, where="initial"):
    kind = _require(doc, "kind", where)
    if kind not in _INITIAL_KINDS:
        raise ValidationError(f"{where}.kind must be one of {sorted(_INITIAL_KINDS)}")
    check_keys(doc, _INITIAL_KINDS[kind], where)
    if kind == "samples":
        pts = _require(doc, "samples", where)
        return {"kind": kind, "samples": [[_num(x, where), _num(v, where)] for x, v in pts]}
    if kind == "density_csv":
        return {"kind": kind, "path": _path(_require(doc, "path", where), base, where),
                "time": _num(doc.get("time", 1.0), where)}
    if kind == "constant":
        return {"kind": kind, "value": _num(_require(doc, "value", where), where)}
    if kind == "step":
        return {"kind": kind, "value": _num(_require(doc, "value", where), where),
                "until": _num(_require(doc, "until", where), where)}
    return {"kind": kind, "amplitude": _num(_require(doc, "amplitude", where), where),
            "rate": _num(_require(doc, "rate", where), where),
            "origin": _num(doc.get("origin", 0.0), where)}


def build_initial(doc):
    """An :class:`InitialDensity` (spline kinds) or a callable of ``x``."""
    kind = doc["kind"]
    if kind == "samples":
        return build_initial_density(doc["samples"])
    if kind == "density_csv":
        from .fileio import read_density_csv

        field = read_density_csv(doc["path"])
        if doc["time"] not in field.times:
            raise ValidationError(f"{doc['path']}: no column for t={doc['time']}")
        return build_initial_density(list(zip(field.distances, field.column(doc["time"]))))
    if kind == "constant":
        value = doc["value"]
        return lambda x: np.full_like(np.asarray(x, dtype=float), value)
    if kind == "step":
        value, until = doc["value"], doc["until"]
        return lambda x: np.where(np.asarray(x) < until, value, 0.0)
    amp, rate, origin = doc["amplitude"], doc["rate"], doc["origin"]
    return lambda x: amp * np.exp(-rate * (np.asarray(x, dtype=float) - origin))


# --- per-command documents ------------------------------------------------------

def _times(value, where):
    if isinstance(value, dict):
        check_keys(value, ("start", "stop", "step"), where)
        start, stop, step = (_num(_require(value, k, where), where) for k in ("start", "stop", "step"))
        if not step > 0 or stop < start:
            raise ValidationError(f"{where}: need step > 0 and stop >= start")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [start + i * step for i in range(n)]
    if not isinstance(value, list) or not value:
        raise ValidationError(f"{where}: expected a non-empty list or {{start, stop, step}}")
    return [_num(v, where) for v in value]


def _common(doc, out):
    out["seed"] = int(doc.get("seed", 0))
    if out["seed"] < 0 or out["seed"] >= 2**64:
        raise ValidationError("seed must be an unsigned 64-bit integer")
    out["plot"] = bool(doc.get("plot", False))
    return out


def _resolve_ingest(doc, base):
    check_keys(doc, ("graph", "cascade", "sources", "times", "mode", "population", "user_count",
                     "seed", "plot"), "config")
    out = {
        "graph": _path(_require(doc, "graph", "config"), base, "graph"),
        "cascade": _path(_require(doc, "cascade", "config"), base, "cascade"),
        "sources": _path(_require(doc, "sources", "config"), base, "sources"),
        "times": _times(_require(doc, "times", "config"), "times"),
        "mode": doc.get("mode", "ratio"),
        "population": doc.get("population", "reachable"),
        "user_count": None if doc.get("user_count") is None else int(doc["user_count"]),
    }
    if out["mode"] not in ("ratio", "count"):
        raise ValidationError("mode must be 'ratio' or 'count'")
    return _common(doc, out)


def _resolve_solve(doc, base):
    check_keys(doc, ("model", "grid", "initial", "sample", "mode", "seed", "plot"), "config")
    model = _require(doc, "model", "config")
    system = isinstance(model, dict) and model.get("family") in ("cooperative", "competing", "si", "sir")
    out = {}
    if system:
        out["model"] = resolve_system_model(model)
        inits = _require(doc, "initial", "config")
        if not isinstance(inits, list):
            raise ValidationError("initial: system models need a list, one entry per component")
        out["initial"] = [resolve_initial(v, base, f"initial[{i}]") for i, v in enumerate(inits)]
    else:
        out["model"] = resolve_scalar_model(model)
        out["initial"] = resolve_initial(_require(doc, "initial", "config"), base)
    out["grid"] = resolve_grid(doc.get("grid"))
    sample = doc.get("sample")
    if sample is not None:
        check_keys(sample, ("distances", "times"), "sample")
        out["sample"] = {"distances": [int(v) for v in _require(sample, "distances", "sample")],
                         "times": _times(_require(sample, "times", "sample"), "sample.times")}
    else:
        out["sample"] = None
    out["mode"] = doc.get("mode", "count")
    return _common(doc, out)


def _resolve_fit(doc, base):
    check_keys(doc, ("observed", "mode", "model", "free", "loss", "per_unit", "dt", "restarts",
                     "max_evals", "xatol", "fatol", "seed", "plot"), "config")
    free = _require(doc, "free", "config")
    check_keys(free, free.keys(), "free")
    free_out = {}
    for name, spec in free.items():
        check_keys(spec, ("lo", "hi", "init"), f"free.{name}")
        free_out[name] = {k: _num(_require(spec, k, f"free.{name}"), f"free.{name}.{k}")
                          for k in ("lo", "hi", "init")}
    out = {
        "observed": _path(_require(doc, "observed", "config"), base, "observed"),
        "mode": doc.get("mode", "count"),
        "model": resolve_scalar_model(_require(doc, "model", "config")),
        "free": free_out,
        "loss": doc.get("loss", "rmse"),
        "per_unit": int(doc.get("per_unit", 4)),
        "dt": _num(doc.get("dt", 0.05), "dt"),
        "restarts": int(doc.get("restarts", 3)),
        "max_evals": int(doc.get("max_evals", 1500)),
        "xatol": _num(doc.get("xatol", 1e-8), "xatol"),
        "fatol": _num(doc.get("fatol", 1e-12), "fatol"),
    }
    return _common(doc, out)


_SPEED_PARAMS = {
    "fisher": (("d", "r"), ()),
    "cooperative": (("d1", "r1", "d2", "r2", "alpha1", "alpha2", "k1", "k2"), ()),
    "competition": (("d1", "r1", "alpha1", "k2"), ("d2", "r2", "alpha2")),
    "sir": (("d2", "beta", "gamma"), ("d1",)),
    "general": (("diffusivities", "jacobian"), ()),
}


def _resolve_speed(doc, base):
    check_keys(doc, ("family", "parameters", "compare_numeric", "seed", "plot"), "config")
    fam = _require(doc, "family", "config")
    if fam not in _SPEED_PARAMS:
        raise ValidationError(f"family must be one of {sorted(_SPEED_PARAMS)}")
    required, optional = _SPEED_PARAMS[fam]
    params = doc.get("parameters", {})
    check_keys(params, required + optional, "parameters")
    out_params = {}
    for k in required:
        v = _require(params, k, "parameters")
        out_params[k] = v if fam == "general" else _num(v, f"parameters.{k}")
    for k in optional:
        if params.get(k) is not None:
            out_params[k] = _num(params[k], f"parameters.{k}")
    out = {"family": fam, "parameters": out_params,
           "compare_numeric": bool(doc.get("compare_numeric", True))}
    return _common(doc, out)


def _resolve_eig(doc, base):
    check_keys(doc, ("d", "b", "heterogeneity", "robin_alpha", "interval", "nx", "r_infinity",
                     "check_persistence", "seed", "plot"), "config")
    interval = doc.get("interval", [0.0, 1.0])
    if not isinstance(interval, list) or len(interval) != 2:
        raise ValidationError("interval: expected [l, L]")
    out = {
        "d": _num(doc.get("d", 1.0), "d"),
        "b": _num(doc.get("b", 0.0), "b"),
        "heterogeneity": resolve_heterogeneity(doc.get("heterogeneity")),
        "robin_alpha": _num(doc.get("robin_alpha", 0.0), "robin_alpha"),
        "interval": [_num(v, "interval") for v in interval],
        "nx": int(doc.get("nx", 200)),
        "r_infinity": _num(doc.get("r_infinity", 1.0), "r_infinity"),
        "check_persistence": bool(doc.get("check_persistence", False)),
    }
    return _common(doc, out)


def _resolve_stefan(doc, base):
    check_keys(doc, ("d", "K", "decay", "mu", "h0", "scale", "grid", "tail_fraction", "regime",
                     "threshold", "seed", "plot"), "config")
    mu = doc.get("mu", [1.0, 10.0, 100.0])
    mu = mu if isinstance(mu, list) else [mu]
    grid = doc.get("grid", {})
    check_keys(grid, ("nx", "t0", "t_end", "dt", "save_every"), "grid")
    regime = doc.get("regime", {})
    check_keys(regime, ("vanish_tol", "horizon_factor", "stop_early"), "regime")
    out = {
        "d": _num(doc.get("d", 1.0), "d"),
        "K": _num(doc.get("K", 1.0), "K"),
        "decay": resolve_decay(doc.get("decay", {"form": "constant", "rate": 1.0})),
        "mu": [_num(v, "mu") for v in mu],
        "h0": _num(doc.get("h0", 2.0), "h0"),
        "scale": _num(doc.get("scale", 1.0), "scale"),
        "grid": {"nx": int(grid.get("nx", 400)), "t0": _num(grid.get("t0", 0.0), "grid.t0"),
                 "t_end": _num(grid.get("t_end", 30.0), "grid.t_end"),
                 "dt": _num(grid.get("dt", 0.02), "grid.dt"),
                 "save_every": int(grid.get("save_every", 50))},
        "tail_fraction": _num(doc.get("tail_fraction", 0.5), "tail_fraction"),
        "regime": {"vanish_tol": _num(regime.get("vanish_tol", 1e-6), "regime.vanish_tol"),
                   "horizon_factor": _num(regime.get("horizon_factor", 5.0), "regime.horizon_factor"),
                   "stop_early": bool(regime.get("stop_early", False))},
        "threshold": None,
    }
    thr = doc.get("threshold")
    if thr is not None:
        check_keys(thr, ("lam_lo", "lam_hi", "n_bisect", "mu", "h0"), "threshold")
        out["threshold"] = {
            "lam_lo": _num(_require(thr, "lam_lo", "threshold"), "threshold.lam_lo"),
            "lam_hi": _num(_require(thr, "lam_hi", "threshold"), "threshold.lam_hi"),
            "n_bisect": int(thr.get("n_bisect", 20)),
            "mu": _num(thr.get("mu", out["mu"][0]), "threshold.mu"),
            "h0": _num(thr.get("h0", out["h0"]), "threshold.h0"),
        }
    return _common(doc, out)


def _resolve_synth(doc, base):
    check_keys(doc, ("model", "grid", "initial", "noise_level", "mode", "distances", "times",
                     "seed", "plot"), "config")
    out = {
        "model": resolve_scalar_model(_require(doc, "model", "config")),
        "grid": resolve_grid(doc.get("grid")),
        "initial": resolve_initial(_require(doc, "initial", "config"), base),
        "noise_level": _num(doc.get("noise_level", 0.0), "noise_level"),
        "mode": doc.get("mode", "count"),
        "distances": None if doc.get("distances") is None else [int(v) for v in doc["distances"]],
        "times": None if doc.get("times") is None else _times(doc["times"], "times"),
    }
    return _common(doc, out)


_RESOLVERS = {
    "ingest": _resolve_ingest,
    "density": _resolve_ingest,
    "solve": _resolve_solve,
    "fit": _resolve_fit,
    "speed": _resolve_speed,
    "eig": _resolve_eig,
    "stefan": _resolve_stefan,
    "synth": _resolve_synth,
}


def resolve_command(command: str, doc: dict, base: Path) -> dict:
    if command not in _RESOLVERS:
        raise ValidationError(f"unknown command {command!r}")
    return _RESOLVERS[command](doc, Path(base))
