import json

import pytest

from cascade_pde.config import (
    apply_overrides,
    build_grid,
    build_scalar_model,
    load_config,
    resolve_command,
    resolve_decay,
    resolve_grid,
)
from cascade_pde.errors import ValidationError
from cascade_pde.models import DecaySpec


def test_overrides_parse_json_and_create_paths():
    doc = apply_overrides({"a": {"b": 1}}, ["a.b=2.5", "a.c=[1, 2]", "name=plain"])
    assert doc == {"a": {"b": 2.5, "c": [1, 2]}, "name": "plain"}


def test_overrides_do_not_mutate_input():
    doc = {"a": {"b": 1}}
    apply_overrides(doc, ["a.b=3"])
    assert doc == {"a": {"b": 1}}


def test_malformed_override():
    with pytest.raises(ValidationError):
        apply_overrides({}, ["no-equals-sign"])


def test_unknown_keys_rejected():
    with pytest.raises(ValidationError, match="speeed"):
        resolve_command("speed", {"family": "sir", "speeed": 1}, ".")
    with pytest.raises(ValidationError, match="beta2"):
        resolve_command("speed", {"family": "sir",
                                  "parameters": {"d2": 1, "beta": 1, "gamma": 0.2, "beta2": 1}}, ".")


def test_decay_forms():
    assert resolve_decay(2.0) == {"form": "constant", "rate": 2.0}
    with pytest.raises(ValidationError):
        resolve_decay({"form": "ode", "alpha": 1.0})
    with pytest.raises(ValidationError):
        resolve_decay({"form": "power"})


def test_grid_per_unit_aligns_integers():
    g = build_grid(resolve_grid({"l": 1, "L": 5, "per_unit": 4}))
    assert g.nx == 16
    with pytest.raises(ValidationError):
        resolve_grid({"nx": 10, "per_unit": 4})


def test_model_round_trip_through_resolved_dict():
    doc = {"family": "logistic", "d": 0.01, "K": 25,
           "decay": {"form": "ode", "alpha": 1.5, "beta": 0.375, "gamma": 1.65}}
    resolved = resolve_command("synth", {"model": doc, "initial": {"kind": "constant", "value": 1}},
                               ".")
    model = build_scalar_model(resolved["model"])
    assert model.decay == DecaySpec.ode(1.5, 0.375, 1.65)
    assert json.loads(json.dumps(resolved)) == resolved


def test_model_invariants_checked_at_resolve_time():
    with pytest.raises(ValidationError):
        resolve_command("synth", {"model": {"family": "logistic", "d": -1, "decay": 1.0},
                                  "initial": {"kind": "constant", "value": 1}}, ".")


def test_time_ranges():
    cfg = resolve_command("ingest", {"graph": "g", "cascade": "c", "sources": "s",
                                     "times": {"start": 0, "stop": 1, "step": 0.25}}, "/tmp")
    assert cfg["times"] == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert cfg["graph"] == "/tmp/g"


def test_seed_range():
    with pytest.raises(ValidationError):
        resolve_command("speed", {"family": "sir", "seed": -1,
                                  "parameters": {"d2": 1, "beta": 1, "gamma": 0.2}}, ".")


def test_invalid_json_reports_line(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{\n  "a": 1,\n  "b": \n}')
    with pytest.raises(ValidationError, match="line 4"):
        load_config(p)
