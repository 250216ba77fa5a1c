"""Scaling-law harness: minimal width meeting a PSNR target per dataset size.

The pipeline is: a success predicate per (N, width) cell (median over an odd
number of seeded training trials), an exponential-probe-plus-bisection width
search per N, and a log-log fit of realized parameter counts against N.

Every trial is deterministic given (spec, N, width, seed): the net draws
from a stream derived from exactly that tuple, so results are independent
of execution order and of how many cells run concurrently.  A journal of
finished cells makes sweeps resumable.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .linalg import linear_fit
from .network import NetTemplate, init_network, param_count
from .optim import DivergenceError, TrainConfig, train
from .rng import RngState
from .tasks import make_curve_dataset, make_image_dataset
from .image import synth_image

MAX_LR_HALVINGS = 3


class JournalError(RuntimeError):
    """Corrupt journal file; carries the 1-based offending line number."""

    def __init__(self, message, line_no):
        super().__init__(message)
        self.line_no = line_no


@dataclass(frozen=True)
class SweepSpec:
    task: str                      # "curve" or "image"
    sizes: tuple
    template: NetTemplate
    target_psnr_db: float = 35.0
    step_budget: int = 50000
    seeds_per_trial: int = 3       # odd, so the median outcome is defined
    w_min: int = 2
    w_max: int = 1024
    optimizer: str = "gd"
    lr: float | None = None        # None picks the task default
    image_kind: str = "bands"
    image_size: int = 32
    master_seed: int = 0

    def __post_init__(self):
        if self.task not in ("curve", "image"):
            raise ValueError(f"unknown task {self.task!r}")
        sizes = tuple(int(n) for n in self.sizes)
        if len(sizes) < 1 or any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("sizes must be strictly increasing")
        object.__setattr__(self, "sizes", sizes)
        if self.seeds_per_trial < 1 or self.seeds_per_trial % 2 == 0:
            raise ValueError("seeds_per_trial must be odd")
        if not (1 <= self.w_min <= self.w_max):
            raise ValueError("need 1 <= w_min <= w_max")


def build_dataset(spec: SweepSpec, n: int, seed: int = 0):
    """The training set for one trial; curve grids ignore the seed."""
    if spec.task == "curve":
        return make_curve_dataset(n, normalized=True)
    img = synth_image(spec.image_kind, spec.image_size, RngState(spec.master_seed).derive("image"))
    return make_image_dataset(img, n, RngState(spec.master_seed).derive(("pixels", n, seed)))


def default_lr(spec: SweepSpec, n: int) -> float:
    """Task defaults: Adam 1e-3; GD 1e-4 divided by N to undo sum-loss growth."""
    if spec.lr is not None:
        return spec.lr
    return 1e-3 if spec.optimizer == "adam" else 1e-4 / n


def trial_succeeds(spec: SweepSpec, n: int, width: int, seed: int):
    """Train one cell member; returns (reached_target, steps_run).

    Divergence triggers up to MAX_LR_HALVINGS retries at half the rate,
    re-initializing the net identically each time; still diverging counts
    as failure.
    """
    data = build_dataset(spec, n, seed)
    cfg = spec.template.config(data.X.shape[1], width, data.Y.shape[1])
    lr = default_lr(spec, n)
    for attempt in range(MAX_LR_HALVINGS + 1):
        net = init_network(cfg, RngState(spec.master_seed).derive(("trial", n, width, seed)))
        tc = TrainConfig(
            optimizer=spec.optimizer,
            lr=lr * (0.5**attempt),
            max_steps=spec.step_budget,
            target_psnr_db=spec.target_psnr_db,
            log_every=max(1, spec.step_budget // 10),
        )
        try:
            _, report = train(net, data, tc)
            return report.reached_target, report.steps_run
        except DivergenceError:
            continue
    return False, spec.step_budget


@dataclass
class SearchResult:
    width: int | None
    saturated: bool
    non_monotone: bool
    trials: dict                   # width -> bool, every cell tested


def min_width_search(predicate, w_min: int, w_max: int) -> SearchResult:
    """Smallest width whose cell succeeds, assuming success is monotone.

    Exponential probe from w_min doubling to w_max, then bisection between
    the last failing and first succeeding probe.  A final check tests the
    result's half-width; if that unexpectedly succeeds, monotonicity is
    broken and the search falls back to a linear scan of the probe grid,
    returning the earliest succeeding probe (flagged non_monotone).
    """
    if not 1 <= w_min <= w_max:
        raise ValueError("need 1 <= w_min <= w_max")
    cache: dict = {}

    def test(w: int) -> bool:
        if w not in cache:
            cache[w] = bool(predicate(w))
        return cache[w]

    probes = []
    w = w_min
    while w < w_max:
        probes.append(w)
        w *= 2
    probes.append(w_max)

    first_success = None
    for w in probes:
        if test(w):
            first_success = w
            break

    if first_success is None:
        return SearchResult(None, True, False, cache)

    if first_success == probes[0]:
        result = first_success
    else:
        lo = probes[probes.index(first_success) - 1]  # known failing
        hi = first_success
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if test(mid):
                hi = mid
            else:
                lo = mid
        result = hi

    half = result // 2
    if half >= w_min and test(half):
        # Monotonicity violated; scan the probe grid from the bottom.
        for w in probes:
            if test(w):
                return SearchResult(w, False, True, cache)
    return SearchResult(result, False, False, cache)


class TrialJournal:
    """Append-only record of finished trials: lines "N,width,seed,success,steps".

    Loading validates every line; a malformed one raises JournalError with
    its line number.  Lookups let a resumed sweep skip completed cells.
    """

    HEADER = "N,width,seed,success,steps"

    def __init__(self, path=None):
        self.path = os.fspath(path) if path is not None else None
        self.cells: dict = {}
        if self.path and os.path.exists(self.path):
            self._load()

    def _load(self):
        with open(self.path, "r", encoding="ascii") as fh:
            for i, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or (i == 1 and line == self.HEADER):
                    continue
                parts = line.split(",")
                if len(parts) != 5:
                    raise JournalError(f"journal line {i}: expected 5 fields", i)
                try:
                    n, width, seed, success, steps = (int(p) for p in parts)
                    if success not in (0, 1) or min(n, width, steps) < 0:
                        raise ValueError
                except ValueError:
                    raise JournalError(f"journal line {i}: bad values {line!r}", i) from None
                self.cells[(n, width, seed)] = (bool(success), steps)

    def get(self, n: int, width: int, seed: int):
        return self.cells.get((n, width, seed))

    def record(self, n: int, width: int, seed: int, success: bool, steps: int):
        self.cells[(n, width, seed)] = (success, steps)
        if self.path:
            new = not os.path.exists(self.path) or os.path.getsize(self.path) == 0
            with open(self.path, "a", encoding="ascii") as fh:
                if new:
                    fh.write(self.HEADER + "\n")
                fh.write(f"{n},{width},{seed},{int(success)},{steps}\n")
                fh.flush()


@dataclass
class SweepRow:
    N: int
    minimal_width: int | None
    minimal_params: int | None
    saturated: bool
    non_monotone: bool
    trials: dict


@dataclass
class SweepReport:
    rows: list
    exponent: float | None
    intercept: float | None
    residual_rms: float | None
    spec: SweepSpec = None


def _cell_outcome(spec, n, width, journal, trial_fn, on_trial):
    """Median success over seeds, reading/writing the journal per seed."""
    wins = 0
    for seed in range(spec.seeds_per_trial):
        hit = journal.get(n, width, seed) if journal else None
        if hit is None:
            success, steps = trial_fn(spec, n, width, seed)
            if journal is not None:
                journal.record(n, width, seed, success, steps)
            if on_trial is not None:
                on_trial(n, width, seed)
        else:
            success = hit[0]
        wins += int(success)
    return wins * 2 > spec.seeds_per_trial


def run_sweep(spec: SweepSpec, journal: TrialJournal | None = None,
              trial_fn=trial_succeeds, on_trial=None) -> SweepReport:
    """Search the minimal width per dataset size and fit the growth exponent.

    Saturated rows (even w_max fails) are excluded from the fit; fewer
    than 3 usable rows yields no exponent.  trial_fn is injectable so the
    search logic can be exercised on synthetic predicates.
    """
    if journal is None:
        journal = TrialJournal(None)
    rows = []
    for n in spec.sizes:
        res = min_width_search(
            lambda w: _cell_outcome(spec, n, w, journal, trial_fn, on_trial),
            spec.w_min,
            spec.w_max,
        )
        if res.width is None:
            rows.append(SweepRow(n, None, None, True, res.non_monotone, res.trials))
            continue
        data = build_dataset(spec, n, 0)
        cfg = spec.template.config(data.X.shape[1], res.width, data.Y.shape[1])
        net = init_network(cfg, RngState(0))
        rows.append(
            SweepRow(n, res.width, param_count(net), False, res.non_monotone, res.trials)
        )

    usable = [r for r in rows if not r.saturated]
    exponent = intercept = rms = None
    if len(usable) >= 3:
        xs = np.log(np.array([r.N for r in usable], dtype=np.float64))
        ys = np.log(np.array([r.minimal_params for r in usable], dtype=np.float64))
        exponent, intercept, rms = linear_fit(xs, ys)
    return SweepReport(rows, exponent, intercept, rms, spec)


def compare_schemes(specs, reports=None, journals=None, trial_fn=trial_succeeds):
    """Side-by-side minimal params for sweeps sharing task and sizes.

    Returns {"sizes", "columns": {label: [params...]}, "dominance": counts}
    where dominance[(a, b)] counts sizes at which scheme a needed no more
    parameters than scheme b (saturated rows never dominate).
    """
    specs = list(specs)
    if len(specs) < 2:
        raise ValueError("need at least two specs to compare")
    base = specs[0].sizes
    if any(s.sizes != base or s.task != specs[0].task for s in specs[1:]):
        raise ValueError("specs must share task and sizes")
    if reports is None:
        journals = journals or [None] * len(specs)
        reports = [run_sweep(s, j, trial_fn) for s, j in zip(specs, journals)]

    labels = []
    for i, s in enumerate(specs):
        lab = f"{s.template.activation.kind}+{s.template.init}"
        if s.template.pe_dim:
            lab += "+pe"
        if lab in labels:
            lab += f"#{i}"
        labels.append(lab)
    columns = {
        lab: [r.minimal_params for r in rep.rows] for lab, rep in zip(labels, reports)
    }
    dominance = {}
    for i, a in enumerate(labels):
        for j, b in enumerate(labels):
            if i == j:
                continue
            count = 0
            for pa, pb in zip(columns[a], columns[b]):
                if pa is not None and (pb is None or pa <= pb):
                    count += 1
            dominance[(a, b)] = count
    return {"sizes": list(base), "columns": columns, "dominance": dominance, "labels": labels}
