"""Command-line surface: every experiment behind a JSON config, every
output machine-readable, every run reproducible from its echoed config.

Exit codes: 0 success, 2 config/usage error, 3 numerical divergence,
4 corrupt sweep journal.  One process owns one output directory (lock
file); --jobs is accepted as a parallelism bound, and execution stays
sequential so outputs never depend on scheduling.
"""

# BLAS thread pools must be pinned before numpy spins them up, or threaded
# reductions make reruns non-bitwise.
import os

for _v in ("OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "OMP_NUM_THREADS"):
    os.environ.setdefault(_v, "1")

import argparse
import json
import struct
import sys

import numpy as np
from filelock import FileLock, Timeout

from .activations import Activation
from .diagnostics import bound_reports, measure_init_loss, measure_last_layer_norm, measure_sigma_min_growth
from .image import load_image, save_image, synth_image
from .linalg import linear_fit
from .network import DenseNet, NetworkConfig, init_network, predict
from .optim import DivergenceError, train
from .pipelines import run_occupancy, run_superres
from .rng import RngState
from .runconfig import (
    ConfigError,
    dataset_from,
    dump_config,
    load_config,
    network_config_from,
    resolve_lr,
    sweep_spec_from,
    template_from,
    train_config_from,
)
from .scaling import JournalError, TrialJournal, run_sweep
from .tasks import OccupancyScene, make_curve_dataset

MODEL_MAGIC = b"NFL1"

BOUND_HEADER = "seed,N,n_last,sigma0_sq,loss0,wnorm,rhs,holds"
TRACE_HEADER = "step,loss,psnr"
VALUES_HEADER = "width,seed,value"
SWEEP_HEADER = "N,minimal_width,minimal_params,saturated,non_monotone"


# ---------------------------------------------------------------- formatting

def _fmt(v) -> str:
    """Locale-independent CSV cell: full-precision floats, 0/1 booleans."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _write_csv(path, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2) + "\n")


# ------------------------------------------------------------- model binary

def save_model(path, net: DenseNet) -> None:
    """magic NFL1, u64 config-JSON length, config JSON, then the arrays
    (positional-encoding matrix if any, then W/b per layer) as row-major
    little-endian float64."""
    cfg = net.config
    meta = {
        "widths": list(cfg.widths),
        "activation": {"kind": cfg.activation.kind, "omega": cfg.activation.omega, "s": cfg.activation.s},
        "init": cfg.init,
        "bias_value": cfg.bias_value,
        "final_exponent": cfg.final_exponent,
        "final_gain": cfg.final_gain,
        "pe_dim": cfg.pe_dim,
        "pe_input_dim": cfg.pe_input_dim,
        "pe_sigma_b": cfg.pe_sigma_b,
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        if net.pe_matrix is not None:
            fh.write(np.ascontiguousarray(net.pe_matrix, dtype="<f8").tobytes())
        for w, b in zip(net.ws, net.bs):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_model(path) -> DenseNet:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MODEL_MAGIC:
        raise ConfigError(f"{path}: not a model file (bad magic)")
    (blob_len,) = struct.unpack("<Q", raw[4:12])
    meta = json.loads(raw[12 : 12 + blob_len].decode("utf-8"))
    act = meta["activation"]
    cfg = NetworkConfig(
        widths=tuple(meta["widths"]),
        activation=Activation(act["kind"], omega=act["omega"], s=act["s"]),
        init=meta["init"],
        bias_value=meta["bias_value"],
        final_exponent=meta["final_exponent"],
        final_gain=meta["final_gain"],
        pe_dim=meta["pe_dim"],
        pe_input_dim=meta["pe_input_dim"],
        pe_sigma_b=meta["pe_sigma_b"],
    )
    off = 12 + blob_len

    def take(shape):
        nonlocal off
        count = int(np.prod(shape))
        end = off + 8 * count
        if end > len(raw):
            raise ConfigError(f"{path}: truncated model data at byte {off}")
        arr = np.frombuffer(raw[off:end], dtype="<f8").reshape(shape).astype(np.float64)
        off = end
        return arr

    pe = take((cfg.pe_input_dim, cfg.pe_dim // 2)) if cfg.pe_dim else None
    ws, bs = [], []
    for k in range(len(cfg.widths) - 1):
        ws.append(take((cfg.widths[k], cfg.widths[k + 1])))
        bs.append(take((1, cfg.widths[k + 1])))
    if off != len(raw):
        raise ConfigError(f"{path}: {len(raw) - off} trailing bytes after model data")
    return DenseNet(cfg, ws, bs, pe_matrix=pe)


# ------------------------------------------------------------------ helpers

def _out_dir(args) -> str:
    out = args.out or os.environ.get("NFLAB_OUT")
    if not out:
        raise ConfigError("no output directory: pass --out or set NFLAB_OUT")
    os.makedirs(out, exist_ok=True)
    return out


def _lock(out: str) -> FileLock:
    lock = FileLock(os.path.join(out, ".nflab.lock"))
    try:
        lock.acquire(timeout=0)
    except Timeout:
        raise ConfigError(f"output directory {out} is locked by another process")
    return lock


def _load_with_overrides(args) -> dict:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "seeds", None) is not None:
        cfg["diag"]["seeds"] = args.seeds
    return cfg


def _require_task(cfg: dict, allowed, command: str):
    if cfg["task"] not in allowed:
        raise ConfigError(f"subcommand {command} needs task in {sorted(allowed)}, got {cfg['task']!r}")


def _echo(out: str, cfg: dict) -> None:
    with open(os.path.join(out, "config_echo.json"), "w", encoding="utf-8") as fh:
        fh.write(dump_config(cfg))


def _values_rows(stats):
    for st in stats:
        for s, v in enumerate(st.values):
            yield (st.n_in, s, float(v))


def _slope_json(cfg, report):
    return {
        "config_echo": cfg,
        "slope": report.slope,
        "intercept": report.intercept,
        "residual_rms": report.residual_rms if np.isfinite(report.residual_rms) else None,
        "refused": report.refused,
        "medians": {str(st.n_in): st.median for st in report.stats},
        "model_residuals": report.model_residuals,
    }


# -------------------------------------------------------------- subcommands

def cmd_train(args) -> int:
    cfg = _load_with_overrides(args)
    _require_task(cfg, ("curve", "image"), "train")
    out = _out_dir(args)
    with _lock(out):
        rng = RngState(cfg["seed"])
        data = dataset_from(cfg, rng.derive("data"))
        cfg["train"]["lr"] = resolve_lr(cfg, data.n)
        _echo(out, cfg)
        net = init_network(network_config_from(cfg, data.X.shape[1], data.Y.shape[1]), rng.derive("init"))
        net, report = train(net, data, train_config_from(cfg, data.n))
        _write_csv(
            os.path.join(out, "trace.csv"),
            TRACE_HEADER,
            [(s, l, p) for (s, l), (_, p) in zip(report.loss_trace, report.psnr_trace)],
        )
        _write_json(
            os.path.join(out, "report.json"),
            {
                "config_echo": cfg,
                "steps_run": report.steps_run,
                "reached_target": report.reached_target,
                "final_psnr_db": report.final_psnr_db,
            },
        )
        save_model(os.path.join(out, "model.bin"), net)
    print(f"trained {report.steps_run} steps, final psnr {report.final_psnr_db:.2f} dB")
    return 0


def cmd_verify_bound(args) -> int:
    cfg = _load_with_overrides(args)
    _require_task(cfg, ("curve", "image"), "verify-bound")
    if cfg["diag"]["seeds"] is None:
        cfg["diag"]["seeds"] = 100
    seeds = cfg["diag"]["seeds"]
    out = _out_dir(args)
    with _lock(out):
        rng = RngState(cfg["seed"])
        data = dataset_from(cfg, rng.derive("data"))
        _echo(out, cfg)
        ncfg = network_config_from(cfg, data.X.shape[1], data.Y.shape[1])
        reports = bound_reports(ncfg, data, seeds, rng)
        _write_csv(
            os.path.join(out, "bound.csv"),
            BOUND_HEADER,
            [
                (s, r.N, r.n_last, r.sigma0_sq, r.loss0, r.wnorm, r.rhs, r.holds)
                for s, r in enumerate(reports)
            ],
        )
    rate = sum(1 for r in reports if r.holds) / seeds
    print(f"bound held in {rate:.2%} of {seeds} seeds")
    return 0


def cmd_spectral_norm(args) -> int:
    cfg = _load_with_overrides(args)
    d = cfg["diag"]
    if d["widths"] is None:
        d["widths"] = [2**k for k in range(8, 15)]
    if d["seeds"] is None:
        d["seeds"] = 20
    if len(d["widths"]) < 2:
        raise ConfigError("diag.widths needs at least 2 entries")
    out = _out_dir(args)
    with _lock(out):
        _echo(out, cfg)
        net = cfg["network"]
        report = measure_last_layer_norm(
            net["init"],
            d["n_out"],
            d["widths"],
            d["seeds"],
            RngState(cfg["seed"]),
            final_exponent=net["final_exponent"],
            final_gain=net["final_gain"],
        )
        _write_csv(os.path.join(out, "spectral_norm.csv"), VALUES_HEADER, _values_rows(report.stats))
        _write_json(os.path.join(out, "slope.json"), _slope_json(cfg, report))
    print(f"spectral-norm slope {report.slope} over {len(d['widths'])} widths")
    return 0


def cmd_sigma_min(args) -> int:
    cfg = _load_with_overrides(args)
    _require_task(cfg, ("curve", "image"), "sigma-min")
    d = cfg["diag"]
    if d["widths"] is None:
        d["widths"] = [1024, 2048, 4096, 8192, 16384]
    if d["seeds"] is None:
        d["seeds"] = 5
    if len(d["widths"]) < 2:
        raise ConfigError("diag.widths needs at least 2 entries")
    out = _out_dir(args)
    with _lock(out):
        rng = RngState(cfg["seed"])
        data = dataset_from(cfg, rng.derive("data"))
        _echo(out, cfg)
        report = measure_sigma_min_growth(template_from(cfg), data, d["widths"], d["seeds"], rng)
        _write_csv(os.path.join(out, "sigma_min.csv"), VALUES_HEADER, _values_rows(report.stats))
        _write_json(os.path.join(out, "slope.json"), _slope_json(cfg, report))
    print(f"sigma-min growth slope {report.slope}")
    return 0


def cmd_init_loss(args) -> int:
    cfg = _load_with_overrides(args)
    _require_task(cfg, ("curve",), "init-loss")
    d = cfg["diag"]
    if d["sizes"] is None:
        d["sizes"] = [64, 256, 1024, 4096]
    if d["seeds"] is None:
        d["seeds"] = 5
    if len(d["sizes"]) < 2:
        raise ConfigError("diag.sizes needs at least 2 entries")
    out = _out_dir(args)
    with _lock(out):
        _echo(out, cfg)
        factor = d["width_factor"]
        result = measure_init_loss(
            template_from(cfg),
            make_curve_dataset,
            d["sizes"],
            d["seeds"],
            RngState(cfg["seed"]),
            width_rule=lambda n: factor * n,
        )
        rows = [(r["N"], s, float(v)) for r in result["rows"] for s, v in enumerate(r["values"])]
        _write_csv(os.path.join(out, "init_loss.csv"), VALUES_HEADER, rows)
        meds = [r["median_ratio"] for r in result["rows"]]
        ns = [r["N"] for r in result["rows"]]
        if min(meds) > 0:
            slope, intercept, rms = linear_fit(np.log(ns), np.log(meds))
        else:
            slope = intercept = rms = None
        _write_json(
            os.path.join(out, "slope.json"),
            {
                "config_echo": cfg,
                "slope": slope,
                "intercept": intercept,
                "residual_rms": rms,
                "spread": result["spread"],
                "medians": {str(r["N"]): r["median_ratio"] for r in result["rows"]},
            },
        )
    print(f"init-loss ratio spread {result['spread']:.3f}x across N")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_with_overrides(args)
    _require_task(cfg, ("sweep",), "sweep")
    out = _out_dir(args)
    with _lock(out):
        _echo(out, cfg)
        spec = sweep_spec_from(cfg)
        journal_path = os.path.join(out, "journal.csv")
        if os.path.exists(journal_path) and not args.resume:
            raise ConfigError(f"{journal_path} exists; pass --resume to continue it or use a fresh --out")
        journal = TrialJournal(journal_path)

        on_trial = None
        abort_after = os.environ.get("NFLAB_ABORT_AFTER")
        if abort_after:
            # crash injection for resume tests: die after K new trials
            budget = int(abort_after)
            done = [0]

            def on_trial(n, w, s):
                done[0] += 1
                if done[0] >= budget:
                    raise KeyboardInterrupt

        report = run_sweep(spec, journal=journal, on_trial=on_trial)
        _write_csv(
            os.path.join(out, "sweep.csv"),
            SWEEP_HEADER,
            [
                (r.N, r.minimal_width, r.minimal_params, r.saturated, r.non_monotone)
                for r in report.rows
            ],
        )
        _write_json(
            os.path.join(out, "exponent.json"),
            {
                "config_echo": cfg,
                "exponent": report.exponent,
                "intercept": report.intercept,
                "residual_rms": report.residual_rms,
                "rows": [
                    {
                        "N": r.N,
                        "minimal_width": r.minimal_width,
                        "minimal_params": r.minimal_params,
                        "saturated": r.saturated,
                        "non_monotone": r.non_monotone,
                    }
                    for r in report.rows
                ],
            },
        )
    print(f"sweep exponent {report.exponent} over {len(report.rows)} sizes")
    return 0


def cmd_superres(args) -> int:
    cfg = _load_with_overrides(args)
    _require_task(cfg, ("superres",), "superres")
    out = _out_dir(args)
    with _lock(out):
        rng = RngState(cfg["seed"])
        d = cfg["data"]
        if d["input"]:
            truth = load_image(d["input"])
            if truth.height % 4 or truth.width % 4:
                raise ConfigError(f"{d['input']}: sides must be divisible by 4")
        else:
            truth = synth_image(d["kind"], d["size"], rng.derive("pixels"))
        n_pix = truth.height * truth.width
        cfg["train"]["lr"] = resolve_lr(cfg, n_pix)
        _echo(out, cfg)
        net = init_network(network_config_from(cfg, 2, truth.channels), rng.derive("init"))
        report = run_superres(truth, net, train_config_from(cfg, n_pix))
        save_image(os.path.join(out, "recon.ppm"), report.recon)
        _write_json(
            os.path.join(out, "metrics.json"),
            {
                "task": "superres",
                "config_echo": cfg,
                "psnr_db": report.final_psnr_db,
                "quality_metric": {"name": "ssim", "value": report.ssim},
            },
        )
    print(f"superres ssim {report.ssim:.4f}, train psnr {report.final_psnr_db:.2f} dB")
    return 0


def cmd_occupancy(args) -> int:
    cfg = _load_with_overrides(args)
    _require_task(cfg, ("occupancy",), "occupancy")
    out = _out_dir(args)
    with _lock(out):
        rng = RngState(cfg["seed"])
        data = dataset_from(cfg, rng.derive("data"))
        cfg["train"]["lr"] = resolve_lr(cfg, data.n)
        _echo(out, cfg)
        net = init_network(network_config_from(cfg, 3, 1), rng.derive("init"))
        scene = OccupancyScene(cfg["data"]["scene"])
        report = run_occupancy(
            scene, data, net, train_config_from(cfg, data.n), cfg["data"]["eval_points"], rng
        )
        _write_json(
            os.path.join(out, "metrics.json"),
            {
                "task": "occupancy",
                "config_echo": cfg,
                "psnr_db": report.final_psnr_db,
                "quality_metric": {"name": "iou", "value": report.iou},
            },
        )
    print(f"occupancy iou {report.iou:.4f} (train iou {report.train_iou:.4f})")
    return 0


# -------------------------------------------------------------- plot-script

_PLOT_PREAMBLE = """\
#!/usr/bin/env python3
# Standalone plot script; run it yourself, nothing here executes it.
import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else {path!r}
with open(path, newline="") as fh:
    rows = list(csv.DictReader(fh))
"""

_PLOT_BODIES = {
    TRACE_HEADER: """\
steps = [int(r["step"]) for r in rows]
psnr = [float(r["psnr"]) for r in rows]
loss = [float(r["loss"]) for r in rows]
fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True)
ax1.plot(steps, psnr)
ax1.set_ylabel("train PSNR (dB)")
ax2.semilogy(steps, loss)
ax2.set_ylabel("loss")
ax2.set_xlabel("step")
plt.tight_layout()
plt.show()
""",
    SWEEP_HEADER: """\
rows = [r for r in rows if not int(r["saturated"])]
ns = [int(r["N"]) for r in rows]
params = [int(r["minimal_params"]) for r in rows]
widths = [int(r["minimal_width"]) for r in rows]
fig, ax = plt.subplots()
ax.loglog(ns, params, "o-", label="minimal parameters")
ax.loglog(ns, widths, "s--", label="minimal width")
ax.set_xlabel("dataset size N")
ax.set_ylabel("count")
ax.legend()
plt.show()
""",
    VALUES_HEADER: """\
from collections import defaultdict
import statistics

by_width = defaultdict(list)
for r in rows:
    by_width[int(r["width"])].append(float(r["value"]))
widths = sorted(by_width)
medians = [statistics.median(by_width[w]) for w in widths]
fig, ax = plt.subplots()
for w in widths:
    ax.loglog([w] * len(by_width[w]), by_width[w], "k.", alpha=0.3)
ax.loglog(widths, medians, "o-", label="median")
ax.set_xlabel("width")
ax.set_ylabel("value")
ax.legend()
plt.show()
""",
    BOUND_HEADER: """\
seeds = [int(r["seed"]) for r in rows]
lhs = [float(r["sigma0_sq"]) for r in rows]
rhs = [float(r["rhs"]) for r in rows]
fig, ax = plt.subplots()
ax.semilogy(seeds, lhs, "o", label="sigma0^2")
ax.semilogy(seeds, rhs, "x", label="rhs")
ax.set_xlabel("seed")
ax.legend()
plt.show()
""",
}


def cmd_plot_script(args) -> int:
    path = args.csv
    if not os.path.exists(path):
        raise ConfigError(f"csv file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
    body = _PLOT_BODIES.get(header)
    if body is None:
        raise ConfigError(f"{path}: unrecognized csv schema {header!r}")
    sys.stdout.write(_PLOT_PREAMBLE.format(path=path) + body)
    return 0


# --------------------------------------------------------------------- main

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nflab",
        description="neural-field training laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, needs_config=True):
        p = sub.add_parser(name)
        if needs_config:
            p.add_argument("--config", required=True, help="path to a JSON run config")
            p.add_argument("--out", default=None, help="output directory (default $NFLAB_OUT)")
            p.add_argument("--seed", type=int, default=None, help="override the config's master seed")
            p.add_argument("--jobs", type=int, default=1, help="parallelism bound (execution is sequential)")
        p.set_defaults(fn=fn)
        return p

    add("train", cmd_train)
    vb = add("verify-bound", cmd_verify_bound)
    vb.add_argument("--seeds", type=int, default=None, help="number of init seeds")
    sn = add("spectral-norm", cmd_spectral_norm)
    sn.add_argument("--seeds", type=int, default=None)
    sm = add("sigma-min", cmd_sigma_min)
    sm.add_argument("--seeds", type=int, default=None)
    il = add("init-loss", cmd_init_loss)
    il.add_argument("--seeds", type=int, default=None)
    sw = add("sweep", cmd_sweep)
    sw.add_argument("--resume", action="store_true", help="continue from an existing journal")
    add("superres", cmd_superres)
    add("occupancy", cmd_occupancy)
    ps = sub.add_parser("plot-script")
    ps.add_argument("csv", help="csv file to generate a plot script for")
    ps.set_defaults(fn=cmd_plot_script)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    if getattr(args, "seed", None) is not None and args.seed < 0:
        print("error: --seed must be >= 0", file=sys.stderr)
        return 2
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 3
    except JournalError as exc:
        print(f"error: corrupt journal at line {exc.line_no}: {exc}", file=sys.stderr)
        return 4
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
