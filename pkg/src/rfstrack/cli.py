"""Command-line entry point: simulate scenarios, run filters, evaluate and tabulate.

Subcommands
-----------
simulate     sample ground truth and measurements to a JSON dataset
run          run one filter over a dataset, write estimates and diagnostics
experiment   Monte Carlo comparison of filters over clutter rates
cardinality  Bayesian versus adaptive expected cardinality at step 2

Every output is a deterministic function of the arguments, apart from the
wall-time fields (``seconds`` columns and ``timing.csv``).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .cardinality import lemma1_report
from .evaluation import CSV_COLUMNS, curves_to_csv, gospa, rms_over_runs
from .exceptions import ConfigurationError
from .filters import FilterConfig, Variant, run_filter
from .simulation import ScenarioConfig, TrajectorySet, load_dataset, preset, save_dataset, simulate

log = logging.getLogger("rfstrack")

ALL_FILTERS = tuple(v.value for v in Variant)
SPEC_FORMAT = "rfstrack-experiment/1"


# --- scenarios -----------------------------------------------------------------

def load_scenario(name_or_path: str, clutter_rate: float | None = None) -> tuple[ScenarioConfig, str]:
    """Preset name, or a JSON file ``{"preset": name, "clutter_rate": ...}``.

    Returns the scenario and the preset name it was built from.
    """
    path = Path(name_or_path)
    if path.suffix == ".json" or path.is_file():
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read scenario file {path}: {exc}") from None
        name = doc.get("preset")
        if not isinstance(name, str):
            raise ConfigurationError(f"scenario file {path} needs a 'preset' entry")
        if clutter_rate is None and doc.get("clutter_rate") is not None:
            clutter_rate = float(doc["clutter_rate"])
    else:
        name = name_or_path
    cfg = preset(name)
    if clutter_rate is not None:
        cfg = cfg.with_clutter_rate(clutter_rate)
    return cfg, name


def _filter_config(variant: str | Variant, scenario: ScenarioConfig) -> FilterConfig:
    v = Variant.parse(variant)
    if v.adaptive and scenario.adaptive is None:
        raise ConfigurationError(f"scenario {scenario.name!r} has no adaptive-birth settings for {v.value}")
    return FilterConfig(v, adaptive=scenario.adaptive)


# --- CSV writers ---------------------------------------------------------------

def _state_columns(dim: int) -> list[str]:
    return ["px", "vx", "py", "vy"] if dim == 4 else [f"x{i}" for i in range(dim)]


def estimates_to_csv(estimates, dim: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "track_id", *_state_columns(dim)])
    for k, est in enumerate(estimates, start=1):
        for track_id, mean in sorted(est, key=lambda e: e[0]):
            w.writerow([k, track_id, *(repr(float(v)) for v in mean)])
    return buf.getvalue()


def diagnostics_to_csv(diag) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "hypotheses", "tracks", "seconds"])
    for k, (h, t, s) in enumerate(zip(diag.hypothesis_counts, diag.track_counts, diag.step_seconds), start=1):
        w.writerow([k, h, t, f"{s:.6f}"])
    return buf.getvalue()


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# --- experiment ----------------------------------------------------------------

@dataclass
class ExperimentSpec:
    """What to run: scenario, filters, clutter rates, Monte Carlo runs and base seed.

    Run ``i`` draws its measurements from seed ``seed + i``.
    """

    scenario: str = "paper_sim"
    filters: list[str] = field(default_factory=lambda: list(ALL_FILTERS))
    runs: int = 25
    seed: int = 1000
    clutter_rates: list[float] | None = None
    out: str = "results"

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigurationError("runs must be at least 1")
        if not self.filters:
            raise ConfigurationError("at least one filter is required")
        self.filters = [Variant.parse(f).value for f in self.filters]
        if self.clutter_rates is not None:
            self.clutter_rates = [float(c) for c in self.clutter_rates]

    @classmethod
    def from_file(cls, path) -> "ExperimentSpec":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read experiment spec {path}: {exc}") from None
        fmt = doc.pop("format", SPEC_FORMAT)
        if fmt != SPEC_FORMAT:
            raise ConfigurationError(f"unsupported experiment spec format {fmt!r}")
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown experiment spec fields: {', '.join(sorted(unknown))}")
        return cls(**doc)


@dataclass
class CellResult:
    filter: str
    clutter_rate: float
    gospa: list  # per run, per step
    seconds: list[float]


def _one_run(args) -> tuple[int, list, float]:
    scenario, clutter, variant, run, seed = args
    cfg, _ = load_scenario(scenario, clutter)
    data = simulate(cfg, seed)
    fc = _filter_config(variant, cfg)
    tic = time.perf_counter()
    estimates, _ = run_filter(fc, cfg.filter_models(), data.measurements)
    seconds = time.perf_counter() - tic
    dim = cfg.state_dim
    per_step = [
        gospa(
            data.states_at(k),
            np.array([m for _, m in estimates[k - 1]]).reshape(-1, dim),
            position_indices=cfg.position_indices,
        )
        for k in range(1, data.steps + 1)
    ]
    return run, per_step, seconds


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> list[CellResult]:
    base_cfg, _ = load_scenario(spec.scenario)
    rates = spec.clutter_rates or [base_cfg.sensor.clutter_rate]
    jobs = [
        (spec.scenario, rate, variant, run, spec.seed + run)
        for rate in rates
        for variant in spec.filters
        for run in range(spec.runs)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_one_run, jobs))
    else:
        outputs = []
        for job in jobs:
            outputs.append(_one_run(job))
            log.info("%s clutter=%g run %d: %.2f s", job[2], job[1], job[3], outputs[-1][2])
    cells = []
    for rate in rates:
        for variant in spec.filters:
            mine = sorted(
                (o for j, o in zip(jobs, outputs) if j[1] == rate and j[2] == variant), key=lambda o: o[0]
            )
            cells.append(CellResult(variant, rate, [o[1] for o in mine], [o[2] for o in mine]))
    return cells


def summary_to_csv(cells: Sequence[CellResult], filters: Sequence[str]) -> str:
    """One row per clutter rate, one column per filter: RMS-GOSPA across time and runs."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["clutter_rate", *filters])
    rates = sorted({c.clutter_rate for c in cells})
    by_key = {(c.clutter_rate, c.filter): c for c in cells}
    for rate in rates:
        row = [repr(rate)]
        for f in filters:
            row.append(repr(rms_over_runs(by_key[rate, f].gospa).across_time()))
        w.writerow(row)
    return buf.getvalue()


def components_to_csv(cells: Sequence[CellResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["clutter_rate", "filter", *CSV_COLUMNS[1:]])
    for c in cells:
        comp = rms_over_runs(c.gospa).components_across_time()
        w.writerow([repr(c.clutter_rate), c.filter] + [repr(comp[k]) for k in ("total", "localisation", "missed", "false")])
    return buf.getvalue()


def timing_to_csv(cells: Sequence[CellResult], filters: Sequence[str]) -> str:
    """Mean wall time per run, laid out like the summary table."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["clutter_rate", *filters])
    by_key = {(c.clutter_rate, c.filter): c for c in cells}
    for rate in sorted({c.clutter_rate for c in cells}):
        w.writerow([repr(rate)] + [f"{np.mean(by_key[rate, f].seconds):.3f}" for f in filters])
    return buf.getvalue()


def curves_name(filter_name: str, rate: float) -> str:
    return f"curves_{filter_name}_clutter{rate:g}.csv"


def write_experiment(spec: ExperimentSpec, cells: Sequence[CellResult], out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "summary.csv", summary_to_csv(cells, spec.filters))
    _write(out / "components.csv", components_to_csv(cells))
    _write(out / "timing.csv", timing_to_csv(cells, spec.filters))
    for c in cells:
        _write(out / curves_name(c.filter, c.clutter_rate), curves_to_csv(rms_over_runs(c.gospa)))
    meta = asdict(spec)
    # The output location is not part of the result.
    del meta["out"]
    meta["format"] = SPEC_FORMAT
    meta["run_seeds"] = [spec.seed + i for i in range(spec.runs)]
    meta["clutter_rates"] = sorted({c.clutter_rate for c in cells})
    _write(out / "metadata.json", json.dumps(meta, indent=1, sort_keys=True) + "\n")


# --- subcommands ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg, name = load_scenario(args.scenario, args.clutter_rate)
    data = simulate(cfg, args.seed)
    save_dataset(args.out, data, name, cfg.sensor.clutter_rate, args.seed, cfg.seed)
    print(f"wrote {data.steps} steps, {len(data.trajectories)} trajectories to {args.out}")
    return 0


def cmd_run(args) -> int:
    data, doc = load_dataset(args.dataset)
    cfg, _ = load_scenario(doc["scenario"], doc.get("clutter_rate"))
    fc = _filter_config(args.filter, cfg)
    estimates, diag = run_filter(fc, cfg.filter_models(), data.measurements)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "estimates.csv", estimates_to_csv(estimates, cfg.state_dim))
    _write(out / "diagnostics.csv", diagnostics_to_csv(diag))
    if data.trajectories:
        curves = rms_over_runs([
            [
                gospa(data.states_at(k), np.array([m for _, m in estimates[k - 1]]).reshape(-1, cfg.state_dim),
                      position_indices=cfg.position_indices)
                for k in range(1, data.steps + 1)
            ]
        ])
        _write(out / "gospa.csv", curves_to_csv(curves))
    print(f"{fc.variant.value}: {len(estimates)} steps in {diag.total_seconds:.2f} s -> {out}")
    return 0


def cmd_experiment(args) -> int:
    if args.spec:
        spec = ExperimentSpec.from_file(args.spec)
        if args.out:
            spec.out = args.out
    else:
        spec = ExperimentSpec(
            scenario=args.scenario,
            filters=args.filter or list(ALL_FILTERS),
            runs=args.runs,
            seed=args.seed,
            clutter_rates=args.clutter_rate,
            out=args.out or "results",
        )
    cells = run_experiment(spec, workers=args.workers)
    write_experiment(spec, cells, Path(spec.out))
    sys.stdout.write(summary_to_csv(cells, spec.filters))
    return 0


def cmd_cardinality(args) -> int:
    cfg, _ = load_scenario(args.scenario, args.clutter_rate)
    rep = lemma1_report(cfg, args.samples, args.seed, r_b_max=args.r_b_max)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["quantity", "value"])
    for key in ("bayes_expected", "adaptive_expected", "empirical_adaptive", "empirical_stderr", "gap",
                "r_b_max", "lb1", "lb2", "best_r_b_max"):
        w.writerow([key, repr(float(getattr(rep, key)))])
    for r, g in rep.sweep:
        w.writerow([f"gap_at_r_b_max_{r:g}", repr(g)])
    text = buf.getvalue()
    if args.out:
        _write(Path(args.out), text)
    sys.stdout.write(text)
    for v in rep.violations():
        log.warning("%s", v)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rfstrack", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="sample a dataset")
    s.add_argument("--scenario", default="paper_sim", help="preset name or scenario JSON file")
    s.add_argument("--seed", type=int, default=1000, help="measurement seed")
    s.add_argument("--clutter-rate", type=float, default=None)
    s.add_argument("--out", required=True, help="dataset JSON path")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("run", help="run one filter over a dataset")
    r.add_argument("--filter", required=True, help=f"one of {', '.join(ALL_FILTERS)}")
    r.add_argument("--dataset", required=True)
    r.add_argument("--out", required=True, help="output directory")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("experiment", help="Monte Carlo comparison")
    e.add_argument("--spec", default=None, help="experiment JSON file (overrides the flags below)")
    e.add_argument("--scenario", default="paper_sim")
    e.add_argument("--filter", action="append", default=None, help="repeatable; default all")
    e.add_argument("--runs", type=int, default=25)
    e.add_argument("--seed", type=int, default=1000, help="run i uses seed + i")
    e.add_argument("--clutter-rate", type=float, action="append", default=None, help="repeatable")
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--out", default=None, help="output directory")
    e.set_defaults(func=cmd_experiment)

    c = sub.add_parser("cardinality", help="expected cardinality at step 2")
    c.add_argument("--scenario", default="paper_sim")
    c.add_argument("--clutter-rate", type=float, default=None)
    c.add_argument("--samples", type=int, default=10_000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--r-b-max", type=float, default=None)
    c.add_argument("--out", default=None, help="CSV path (also printed)")
    c.set_defaults(func=cmd_cardinality)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, ValueError, OSError, KeyError) as exc:
        print(f"rfstrack: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
