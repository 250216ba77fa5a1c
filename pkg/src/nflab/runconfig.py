"""Strict JSON run configuration.

A run config is a JSON document with a schema_version field.  Loading
validates every key: unknown keys are rejected, missing keys fall back to
defaults, and all defaults are materialized so that the loaded dict is the
complete effective config.  That dict is what gets echoed into run outputs,
and feeding the echo back through load_config reproduces the run.
"""

from __future__ import annotations

import json
import os

from .activations import Activation, KINDS, gabor, gaussian, identity, relu, sinc, sine
from .network import INIT_SCHEMES, NetTemplate, NetworkConfig
from .optim import TrainConfig
from .scaling import SweepSpec
from .tasks import (
    SCENE_KINDS,
    Dataset,
    OccupancyScene,
    make_curve_dataset,
    make_image_dataset,
    make_occupancy_dataset,
)
from .image import SYNTH_KINDS, synth_image
from .rng import RngState

SCHEMA_VERSION = 1

TASKS = ("curve", "image", "occupancy", "superres", "sweep")

_ACTIVATION_FACTORY = {
    "sine": sine,
    "sinc": sinc,
    "gaussian": gaussian,
    "gabor": gabor,
    "relu": relu,
    "identity": identity,
}


class ConfigError(ValueError):
    """Anything wrong with a run config: syntax, schema, types, ranges."""


def _fail(where: str, msg: str):
    raise ConfigError(f"{where}: {msg}")


def _check_dict(obj, where: str) -> dict:
    if not isinstance(obj, dict):
        _fail(where, f"expected an object, got {type(obj).__name__}")
    return obj


def _reject_unknown(obj: dict, allowed, where: str):
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        _fail(where, f"unknown field(s): {', '.join(unknown)}")


def _get_int(obj, key, where, default=None, lo=None, hi=None, required=False):
    if key not in obj or obj[key] is None:
        if required:
            _fail(where, f"missing required field '{key}'")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, int):
        _fail(where, f"'{key}' must be an integer")
    if lo is not None and v < lo:
        _fail(where, f"'{key}' must be >= {lo}")
    if hi is not None and v > hi:
        _fail(where, f"'{key}' must be <= {hi}")
    return v


def _get_float(obj, key, where, default=None, lo=None, positive=False, required=False):
    if key not in obj or obj[key] is None:
        if required:
            _fail(where, f"missing required field '{key}'")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(where, f"'{key}' must be a number")
    v = float(v)
    if positive and not v > 0:
        _fail(where, f"'{key}' must be > 0")
    if lo is not None and v < lo:
        _fail(where, f"'{key}' must be >= {lo}")
    return v


def _get_str(obj, key, where, default=None, choices=None, required=False):
    if key not in obj or obj[key] is None:
        if required:
            _fail(where, f"missing required field '{key}'")
        return default
    v = obj[key]
    if not isinstance(v, str):
        _fail(where, f"'{key}' must be a string")
    if choices is not None and v not in choices:
        _fail(where, f"'{key}' must be one of {sorted(choices)}, got {v!r}")
    return v


def _get_bool(obj, key, where, default=False):
    if key not in obj or obj[key] is None:
        return default
    v = obj[key]
    if not isinstance(v, bool):
        _fail(where, f"'{key}' must be true or false")
    return v


def _get_int_list(obj, key, where, default=None, required=False, increasing=False, lo=1):
    if key not in obj or obj[key] is None:
        if required:
            _fail(where, f"missing required field '{key}'")
        return list(default) if default is not None else None
    v = obj[key]
    if not isinstance(v, list) or not v:
        _fail(where, f"'{key}' must be a non-empty list of integers")
    for item in v:
        if isinstance(item, bool) or not isinstance(item, int):
            _fail(where, f"'{key}' must contain only integers")
        if item < lo:
            _fail(where, f"'{key}' entries must be >= {lo}")
    if increasing and sorted(set(v)) != v:
        _fail(where, f"'{key}' must be strictly increasing")
    return list(v)


def _parse_activation(obj, where) -> dict:
    obj = _check_dict(obj, where)
    _reject_unknown(obj, ("kind", "omega", "s"), where)
    kind = _get_str(obj, "kind", where, choices=KINDS, required=True)
    defaults = _ACTIVATION_FACTORY[kind]()
    omega = _get_float(obj, "omega", where, default=defaults.omega, positive=True)
    s = _get_float(obj, "s", where, default=defaults.s, positive=True)
    return {"kind": kind, "omega": omega, "s": s}


def _parse_network(obj, where, for_sweep: bool) -> dict:
    obj = _check_dict(obj, where)
    keys = (
        "activation",
        "init",
        "hidden",
        "hidden_layers",
        "fixed_width",
        "bias_value",
        "final_exponent",
        "final_gain",
        "pe_dim",
        "pe_sigma_b",
    )
    _reject_unknown(obj, keys, where)
    if "activation" not in obj:
        _fail(where, "missing required field 'activation'")
    out = {
        "activation": _parse_activation(obj["activation"], where + ".activation"),
        "init": _get_str(obj, "init", where, default="lecun_normal", choices=INIT_SCHEMES),
        "bias_value": _get_float(obj, "bias_value", where, default=0.0),
        "final_exponent": _get_float(obj, "final_exponent", where, default=1.5),
        "final_gain": _get_float(obj, "final_gain", where, default=2.0, positive=False),
        "pe_dim": _get_int(obj, "pe_dim", where, default=0, lo=0),
        "pe_sigma_b": _get_float(obj, "pe_sigma_b", where, default=1.0, positive=True),
    }
    if for_sweep:
        if "hidden" in obj:
            _fail(where, "sweep configs size the net themselves; use hidden_layers/fixed_width, not 'hidden'")
        out["hidden_layers"] = _get_int(obj, "hidden_layers", where, default=1, lo=1)
        out["fixed_width"] = _get_int(obj, "fixed_width", where, default=64, lo=1)
    else:
        out["hidden"] = _get_int_list(obj, "hidden", where, required=True)
        if "hidden_layers" in obj or "fixed_width" in obj:
            _fail(where, "'hidden_layers'/'fixed_width' are sweep-only; give explicit 'hidden' widths")
    return out


def _parse_train(obj, where) -> dict:
    obj = _check_dict(obj if obj is not None else {}, where)
    keys = ("optimizer", "lr", "beta1", "beta2", "eps", "max_steps", "target_psnr_db", "log_every")
    _reject_unknown(obj, keys, where)
    return {
        "optimizer": _get_str(obj, "optimizer", where, default="gd", choices=("gd", "adam")),
        "lr": _get_float(obj, "lr", where, default=None, positive=True),
        "beta1": _get_float(obj, "beta1", where, default=0.9),
        "beta2": _get_float(obj, "beta2", where, default=0.999),
        "eps": _get_float(obj, "eps", where, default=1e-8, positive=True),
        "max_steps": _get_int(obj, "max_steps", where, default=1000, lo=0),
        "target_psnr_db": _get_float(obj, "target_psnr_db", where, default=None),
        "log_every": _get_int(obj, "log_every", where, default=100, lo=1),
    }


def _parse_data(obj, where, task: str) -> dict:
    obj = _check_dict(obj if obj is not None else {}, where)
    if task == "curve":
        _reject_unknown(obj, ("n",), where)
        return {"n": _get_int(obj, "n", where, default=200, lo=2)}
    if task == "image":
        _reject_unknown(obj, ("size", "kind", "n"), where)
        return {
            "size": _get_int(obj, "size", where, default=32, lo=4),
            "kind": _get_str(obj, "kind", where, default="bands", choices=SYNTH_KINDS),
            "n": _get_int(obj, "n", where, default=None, lo=1),
        }
    if task == "occupancy":
        _reject_unknown(obj, ("scene", "n_points", "eval_points"), where)
        return {
            "scene": _get_str(obj, "scene", where, default="union", choices=SCENE_KINDS),
            "n_points": _get_int(obj, "n_points", where, default=20000, lo=2),
            "eval_points": _get_int(obj, "eval_points", where, default=20000, lo=2),
        }
    if task == "superres":
        _reject_unknown(obj, ("size", "kind", "factor", "input"), where)
        out = {
            "size": _get_int(obj, "size", where, default=128, lo=8),
            "kind": _get_str(obj, "kind", where, default="bands", choices=SYNTH_KINDS),
            "factor": _get_int(obj, "factor", where, default=4),
            "input": _get_str(obj, "input", where, default=None),
        }
        if out["factor"] != 4:
            _fail(where, "only factor 4 is supported")
        if out["size"] % 4 != 0:
            _fail(where, "'size' must be divisible by 4")
        return out
    return {}


def _parse_diag(obj, where) -> dict:
    obj = _check_dict(obj if obj is not None else {}, where)
    keys = ("widths", "sizes", "seeds", "n_out", "width_factor")
    _reject_unknown(obj, keys, where)
    return {
        "widths": _get_int_list(obj, "widths", where, default=None, increasing=True),
        "sizes": _get_int_list(obj, "sizes", where, default=None, increasing=True),
        "seeds": _get_int(obj, "seeds", where, default=None, lo=1),
        "n_out": _get_int(obj, "n_out", where, default=4, lo=1),
        "width_factor": _get_int(obj, "width_factor", where, default=4, lo=1),
    }


def _parse_sweep(obj, where) -> dict:
    obj = _check_dict(obj, where)
    keys = (
        "task",
        "sizes",
        "target_psnr_db",
        "step_budget",
        "seeds_per_trial",
        "w_min",
        "w_max",
        "optimizer",
        "lr",
        "image_kind",
        "image_size",
    )
    _reject_unknown(obj, keys, where)
    out = {
        "task": _get_str(obj, "task", where, default="curve", choices=("curve", "image")),
        "sizes": _get_int_list(obj, "sizes", where, required=True, increasing=True, lo=2),
        "target_psnr_db": _get_float(obj, "target_psnr_db", where, default=35.0),
        "step_budget": _get_int(obj, "step_budget", where, default=50000, lo=1),
        "seeds_per_trial": _get_int(obj, "seeds_per_trial", where, default=3, lo=1),
        "w_min": _get_int(obj, "w_min", where, default=2, lo=1),
        "w_max": _get_int(obj, "w_max", where, default=1024, lo=1),
        "optimizer": _get_str(obj, "optimizer", where, default="gd", choices=("gd", "adam")),
        "lr": _get_float(obj, "lr", where, default=None, positive=True),
        "image_kind": _get_str(obj, "image_kind", where, default="bands", choices=SYNTH_KINDS),
        "image_size": _get_int(obj, "image_size", where, default=32, lo=4),
    }
    if out["seeds_per_trial"] % 2 == 0:
        _fail(where, "'seeds_per_trial' must be odd so the median is a single trial")
    if out["w_min"] > out["w_max"]:
        _fail(where, "'w_min' must be <= 'w_max'")
    return out


def parse_config(obj, where: str = "config") -> dict:
    """Validate a parsed JSON object; return the complete effective config."""
    obj = _check_dict(obj, where)
    _reject_unknown(obj, ("schema_version", "task", "seed", "network", "train", "data", "diag", "sweep"), where)
    version = _get_int(obj, "schema_version", where, required=True)
    if version != SCHEMA_VERSION:
        _fail(where, f"schema_version {version} not supported (this build reads {SCHEMA_VERSION})")
    task = _get_str(obj, "task", where, choices=TASKS, required=True)
    if "network" not in obj:
        _fail(where, "missing required field 'network'")
    out = {
        "schema_version": version,
        "task": task,
        "seed": _get_int(obj, "seed", where, default=0, lo=0),
        "network": _parse_network(obj["network"], where + ".network", for_sweep=(task == "sweep")),
        "train": _parse_train(obj.get("train"), where + ".train"),
        "data": _parse_data(obj.get("data"), where + ".data", task),
        "diag": _parse_diag(obj.get("diag"), where + ".diag"),
    }
    if task == "sweep":
        if "sweep" not in obj:
            _fail(where, "task 'sweep' needs a 'sweep' section")
        out["sweep"] = _parse_sweep(obj["sweep"], where + ".sweep")
    elif "sweep" in obj:
        _fail(where, f"'sweep' section is only valid for task 'sweep', not {task!r}")
    return out


def load_config(path: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return parse_config(raw, where=path)


def dump_config(cfg: dict) -> str:
    """Canonical serialization: sorted keys, 2-space indent, trailing newline."""
    return json.dumps(cfg, sort_keys=True, indent=2) + "\n"


def activation_from(cfg: dict) -> Activation:
    a = cfg["network"]["activation"]
    return Activation(a["kind"], omega=a["omega"], s=a["s"])


def template_from(cfg: dict) -> NetTemplate:
    """Width template: sweep sections carry layer counts directly; explicit
    'hidden' lists map to (depth, leading width), since the template only
    fixes the layers before the swept last hidden one."""
    net = cfg["network"]
    if "hidden" in net:
        layers = len(net["hidden"])
        fixed = net["hidden"][0]
    else:
        layers = net["hidden_layers"]
        fixed = net["fixed_width"]
    return NetTemplate(
        activation=activation_from(cfg),
        init=net["init"],
        hidden_layers=layers,
        fixed_width=fixed,
        bias_value=net["bias_value"],
        final_exponent=net["final_exponent"],
        final_gain=net["final_gain"],
        pe_dim=net["pe_dim"],
        pe_sigma_b=net["pe_sigma_b"],
    )


def network_config_from(cfg: dict, n_in: int, n_out: int) -> NetworkConfig:
    """Materialize the declared widths against task-determined end dims."""
    net = cfg["network"]
    first = net["pe_dim"] if net["pe_dim"] else n_in
    return NetworkConfig(
        widths=(first, *net["hidden"], n_out),
        activation=activation_from(cfg),
        init=net["init"],
        bias_value=net["bias_value"],
        final_exponent=net["final_exponent"],
        final_gain=net["final_gain"],
        pe_dim=net["pe_dim"],
        pe_input_dim=n_in if net["pe_dim"] else 0,
        pe_sigma_b=net["pe_sigma_b"],
    )


def resolve_lr(cfg: dict, n_points: int) -> float:
    """The config's lr, or the default rule: Adam 1e-3, plain GD 1e-4/N."""
    t = cfg["train"]
    if t["lr"] is not None:
        return t["lr"]
    if t["optimizer"] == "adam":
        return 1e-3
    return 1e-4 / n_points


def train_config_from(cfg: dict, n_points: int) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(
        optimizer=t["optimizer"],
        lr=resolve_lr(cfg, n_points),
        beta1=t["beta1"],
        beta2=t["beta2"],
        eps=t["eps"],
        max_steps=t["max_steps"],
        target_psnr_db=t["target_psnr_db"],
        log_every=t["log_every"],
    )


def dataset_from(cfg: dict, rng: RngState) -> Dataset:
    """Build the training set for a curve / image / occupancy config."""
    task = cfg["task"]
    d = cfg["data"]
    if task == "curve":
        return make_curve_dataset(d["n"])
    if task == "image":
        img = synth_image(d["kind"], d["size"], rng.derive("pixels"))
        n = d["n"] if d["n"] is not None else d["size"] * d["size"]
        return make_image_dataset(img, n, rng.derive("sample"))
    if task == "occupancy":
        scene = OccupancyScene(d["scene"])
        return make_occupancy_dataset(scene, d["n_points"], rng.derive("points"))
    raise ConfigError(f"task {task!r} has no direct dataset")


def sweep_spec_from(cfg: dict) -> SweepSpec:
    s = cfg["sweep"]
    return SweepSpec(
        task=s["task"],
        sizes=tuple(s["sizes"]),
        template=template_from(cfg),
        target_psnr_db=s["target_psnr_db"],
        step_budget=s["step_budget"],
        seeds_per_trial=s["seeds_per_trial"],
        w_min=s["w_min"],
        w_max=s["w_max"],
        optimizer=s["optimizer"],
        lr=s["lr"],
        image_kind=s["image_kind"],
        image_size=s["image_size"],
        master_seed=cfg["seed"],
    )
