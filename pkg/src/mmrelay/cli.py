"""Command-line front end: table building, analysis, simulation, sweeps.

The CLI is thin plumbing over the library. A configuration is a JSON
object whose keys mirror SceneConfig field names; ``--set key=value``
overrides individual fields. Angle fields may be given in degrees by
appending ``_deg`` to the field name (``--set theta_rd_deg=30``).

Success tables are cached under ``--cache-dir`` keyed by the channel
fingerprint, so sweeping protocol knobs (q_u, q_uf, q_ur, q_r, d_a)
reuses one table while any change to geometry, antennas or radio
parameters forces a rebuild.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import itertools
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import (
    LINK_INDEX,
    SCHEME_INDEX,
    SuccessTable,
    build_success_table,
    channel_fingerprint,
)
from .config import ConfigError, SceneConfig
from .metrics import PerfReport, evaluate
from .oracle import enumerate_slot_outcomes, kernel_from_laws
from .queueing import (
    QueueReport,
    StrategyMix,
    arrival_rates,
    service_rate,
    transition_kernel,
)
from .sim import SimResult, run_simulation

_FIELD_NAMES = tuple(f.name for f in dataclasses.fields(SceneConfig))
_INT_FIELDS = ("n_ues",)

DEFAULT_CACHE_DIR = ".mmrelay-cache"

# canonical grids for reproducing the published figure families
GRID_HINTS = """\
common sweep grids:
  theta_rd_deg=5:60:12        relay-placement angle
  q_uf=0:1:21                 forwarding split, step 0.05
  q_u=0.05:0.95:19            access probability
  n_ues=1:20:20               population size
  d_a=0:10:11                 alignment duration
"""


# --------------------------------------------------------------------------
# configuration plumbing


def _coerce(name: str, value):
    """Map a CLI/JSON value onto a SceneConfig field, handling _deg sugar."""
    if name.endswith("_deg"):
        stripped = name[: -len("_deg")]
        if stripped in _FIELD_NAMES:
            return stripped, math.radians(float(value))
    if name in _INT_FIELDS:
        return name, int(round(float(value)))
    return name, value


def _parse_set(item: str) -> tuple[str, object]:
    if "=" not in item:
        raise ConfigError("--set", f"expected key=value, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        raise ConfigError(key, f"cannot parse value {raw!r}") from None
    return _coerce(key.strip(), value)


def load_config(path: str | None, overrides: list[str] | None = None) -> SceneConfig:
    """Build a SceneConfig from an optional JSON file plus --set overrides."""
    data: dict = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigError("config", f"{path} must contain a JSON object")
        for key, value in raw.items():
            name, coerced = _coerce(key, value)
            data[name] = coerced
    for item in overrides or []:
        name, value = _parse_set(item)
        data[name] = value
    unknown = set(data) - set(_FIELD_NAMES)
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown configuration field")
    return SceneConfig(**data)


def cached_table(cfg: SceneConfig, cache_dir: str | Path,
                 table_seed: int = 0) -> SuccessTable:
    """Load the success table for cfg's channel, building it on a miss."""
    cache = Path(cache_dir)
    cache.mkdir(parents=True, exist_ok=True)
    key = channel_fingerprint(cfg)
    path = cache / f"table-{key}-seed{table_seed}.csv"
    if path.exists():
        return SuccessTable.from_csv(path)
    table = build_success_table(cfg, seed=table_seed)
    table.to_csv(path)
    return table


# --------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepSpec:
    """A 1- or 2-axis grid over SceneConfig scalars.

    The first axis is the outer loop; when an extremum is requested the
    trace reports, for every outer value, the inner-axis argument that
    optimizes the objective (ties broken toward the smaller value).
    """

    base: SceneConfig
    axes: tuple[tuple[str, tuple[float, ...]], ...]
    objective: str = "throughput"     # throughput | delay
    extremum: str = "none"            # max | min | none
    out: str | None = None
    extremum_out: str | None = None
    simulate: bool = False
    slots: int = 100_000
    seed: int = 0
    mode: str = "table"
    workers: int = 1
    cache_dir: str = DEFAULT_CACHE_DIR

    def __post_init__(self):
        if not 1 <= len(self.axes) <= 2:
            raise ConfigError("axes", "a sweep takes one or two axes")
        for name, values in self.axes:
            if name not in _FIELD_NAMES:
                raise ConfigError(name, "not a configuration field")
            if len(values) == 0:
                raise ConfigError(name, "axis range is empty")
        if self.objective not in ("throughput", "delay"):
            raise ConfigError("objective", f"unknown objective {self.objective!r}")
        if self.extremum not in ("max", "min", "none"):
            raise ConfigError("extremum", f"unknown extremum {self.extremum!r}")


def parse_axis(text: str) -> tuple[str, tuple[float, ...]]:
    """Parse ``name=start:stop:count`` or ``name=v1,v2,...`` axis syntax."""
    if "=" not in text:
        raise ConfigError("--axis", f"expected name=range, got {text!r}")
    key, raw = text.split("=", 1)
    key = key.strip()
    try:
        if ":" in raw:
            parts = raw.split(":")
            if len(parts) != 3:
                raise ValueError
            start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
            if count < 1:
                raise ValueError
            values = np.linspace(start, stop, count).tolist()
        else:
            values = [float(v) for v in raw.split(",") if v.strip() != ""]
            if not values:
                raise ValueError
    except ValueError:
        raise ConfigError(key, f"cannot parse axis range {raw!r}") from None
    coerced = [_coerce(key, v) for v in values]
    name = coerced[0][0]
    return name, tuple(v for _, v in coerced)


_QUEUE_COLS = tuple(f.name for f in dataclasses.fields(QueueReport))
_PERF_COLS = ("t_aggregate", "t_ud_f", "t_ud_b", "t_ur_f", "t_ur_b", "t_u",
              "d_total", "d_ue_tx", "d_relay_tx", "d_queueing", "d_alignment",
              "regime")
_SIM_COLS = ("sim_t", "sim_d", "sim_p_empty", "sim_q_bar", "sim_lambda",
             "sim_mu", "sim_q_tx")

SWEEP_HEADER = ("index", *_FIELD_NAMES, *_QUEUE_COLS, *_PERF_COLS, *_SIM_COLS,
                "source", "seed", "error")


def _flatten_reports(queue: QueueReport, perf: PerfReport) -> dict:
    row = dataclasses.asdict(queue)
    row.update(
        t_aggregate=perf.t_aggregate, t_ud_f=perf.t_ud_f, t_ud_b=perf.t_ud_b,
        t_ur_f=perf.t_ur_f, t_ur_b=perf.t_ur_b, t_u=perf.t_u,
        d_total=perf.d_total,
        d_ue_tx=perf.d_breakdown.ue_tx, d_relay_tx=perf.d_breakdown.relay_tx,
        d_queueing=perf.d_breakdown.queueing,
        d_alignment=perf.d_breakdown.alignment,
        regime=perf.regime,
    )
    return row


def _sweep_point(task) -> dict:
    """Evaluate one grid point; exceptions land in the row's error column."""
    idx, base, updates, spec_bits = task
    do_sim, slots, seed, mode, cache_dir = spec_bits
    row = {name: "" for name in SWEEP_HEADER}
    row["index"] = idx
    row["error"] = ""
    point_seed = int(np.random.SeedSequence([seed, idx]).generate_state(1)[0])
    row["seed"] = point_seed
    row["source"] = f"analysis+{mode}-sim" if do_sim else "analysis"
    try:
        cfg = base.with_updates(**updates)
        for name in _FIELD_NAMES:
            row[name] = getattr(cfg, name)
        table = cached_table(cfg, cache_dir)
        queue, perf = evaluate(cfg, table)
        row.update(_flatten_reports(queue, perf))
        if do_sim:
            sim = run_simulation(cfg, table, slots, seed=point_seed, mode=mode)
            row.update(
                sim_t=sim.t_empirical, sim_d=sim.d_empirical,
                sim_p_empty=sim.p_empty_empirical, sim_q_bar=sim.q_bar_empirical,
                sim_lambda=sim.lambda_empirical, sim_mu=sim.mu_empirical,
                sim_q_tx=sim.q_tx_empirical,
            )
    except Exception as exc:  # noqa: BLE001 - per-point isolation is the contract
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _objective_value(row: dict, objective: str):
    key = "t_aggregate" if objective == "throughput" else "d_total"
    value = row.get(key, "")
    if row["error"] or value == "":
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def _extremum_rows(spec: SweepSpec, rows: list[dict]) -> list[dict]:
    if spec.extremum == "none":
        return []
    want_max = spec.extremum == "max"
    outer_name, outer_values = spec.axes[0]
    if len(spec.axes) == 2:
        inner_name, inner_values = spec.axes[1]
    else:
        inner_name, inner_values = outer_name, outer_values

    out = []
    groups: dict[float, list[dict]] = {v: [] for v in outer_values}
    n_inner = len(inner_values) if len(spec.axes) == 2 else 1
    for i, row in enumerate(rows):
        outer = outer_values[i // n_inner] if len(spec.axes) == 2 else outer_values[i]
        groups[outer].append(row)
    if len(spec.axes) == 1:
        groups = {float("nan"): rows}

    for outer, members in groups.items():
        best = None
        best_val = None
        for row in members:
            val = _objective_value(row, spec.objective)
            if val is None:
                continue
            if best_val is None or (val > best_val if want_max else val < best_val):
                best, best_val = row, val
        out.append({
            "outer_name": outer_name if len(spec.axes) == 2 else "",
            "outer_value": outer if len(spec.axes) == 2 else "",
            "arg_name": inner_name,
            "arg_value": best[inner_name] if best is not None else "",
            "objective": spec.objective,
            "value": best_val if best_val is not None else "",
        })
    return out


def run_sweep(spec: SweepSpec) -> tuple[list[dict], list[dict]]:
    """Evaluate every grid point and return (rows, extremum trace rows).

    Rows come back in grid order (outer axis slowest). Per-point failures
    are recorded in the ``error`` column; the sweep never aborts early.
    """
    names = [name for name, _ in spec.axes]
    grids = [values for _, values in spec.axes]
    points = [dict(zip(names, combo)) for combo in itertools.product(*grids)]

    # warm the table cache sequentially so workers never race on a build
    seen: set[str] = set()
    for point in points:
        try:
            cfg = spec.base.with_updates(**point)
        except ConfigError:
            continue
        key = channel_fingerprint(cfg)
        if key not in seen:
            seen.add(key)
            cached_table(cfg, spec.cache_dir)

    bits = (spec.simulate, spec.slots, spec.seed, spec.mode, spec.cache_dir)
    tasks = [(idx, spec.base, point, bits) for idx, point in enumerate(points)]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(task) for task in tasks]
    return rows, _extremum_rows(spec, rows)


def _write_csv(path: str, header: tuple[str, ...], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(header))
        writer.writeheader()
        writer.writerows(rows)


# --------------------------------------------------------------------------
# oracle validation


def _validate_matrix(seed: int = 0, tol: float = 1e-12) -> list[tuple[str, float, bool]]:
    """Cross-check the queueing rates and kernel against brute enumeration."""
    rng = np.random.default_rng(seed)
    checks: list[tuple[str, float, bool]] = []
    for n in (1, 2, 3):
        for case in range(4):
            base = rng.uniform(0.2, 0.95, size=(3, 2))

            def prob(sc, base=base):
                li = LINK_INDEX[sc.link]
                si = SCHEME_INDEX[sc.scheme]
                crowd = (sc.n_fd_interferers + 2 * sc.n_br_interferers
                         + (1 if sc.relay_active else 0))
                return float(base[li, si] * 0.9 ** crowd)

            table = SuccessTable.from_probability_fn(n, prob)
            mix = StrategyMix(q_u=float(rng.uniform(0.1, 0.9)),
                              q_uf=float(rng.uniform(0.0, 1.0)),
                              q_ur=float(rng.uniform(0.0, 1.0)),
                              q_r=float(rng.uniform(0.1, 1.0)),
                              d_a=float(rng.integers(0, 6)))
            empty = enumerate_slot_outcomes(table, mix, n, queue_nonempty=False)
            busy = enumerate_slot_outcomes(table, mix, n, queue_nonempty=True)
            lam0, a_r, lam1 = arrival_rates(table, mix, n)
            _, mu_r = service_rate(table, mix, n)
            kernel = transition_kernel(table, mix, n)
            ref = kernel_from_laws(empty, busy)
            err = max(
                abs(lam0 - empty.mean_arrivals),
                abs(lam1 - busy.mean_arrivals),
                abs(lam1 - ((1.0 - mix.q_r) * lam0 + mix.q_r * a_r)),
                abs(mu_r - busy.departure_prob),
                float(np.max(np.abs(kernel.p0 - ref.p0))),
                float(np.max(np.abs(kernel.p1 - ref.p1))),
            )
            checks.append((f"n={n} case={case}", err, err <= tol))
    return checks


# --------------------------------------------------------------------------
# subcommand handlers


def _result_json(queue: QueueReport, perf: PerfReport) -> str:
    payload = {"queue": dataclasses.asdict(queue),
               "performance": dataclasses.asdict(perf)}
    return json.dumps(payload, indent=2, default=float)


def _sim_json(sim: SimResult) -> str:
    payload = dataclasses.asdict(sim)
    payload["qsize_trajectory"] = sim.qsize_trajectory.tolist()
    payload.pop("trace", None)
    payload["d_breakdown"] = dataclasses.asdict(sim.d_breakdown)
    return json.dumps(payload, indent=2, default=float)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _cmd_build_table(args) -> int:
    cfg = load_config(args.config, args.set)
    if args.out:
        table = build_success_table(cfg, seed=args.seed)
        table.to_csv(args.out)
        print(f"wrote {args.out} ({len(table.probs)} scenarios)")
    else:
        table = cached_table(cfg, args.cache_dir, table_seed=args.seed)
        key = channel_fingerprint(cfg)
        print(f"cached table {key} ({len(table.probs)} scenarios) in {args.cache_dir}")
    return 0


def _cmd_analyze(args) -> int:
    cfg = load_config(args.config, args.set)
    table = cached_table(cfg, args.cache_dir)
    queue, perf = evaluate(cfg, table)
    _emit(_result_json(queue, perf), args.out)
    return 0


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.set)
    table = None if args.mode == "physical" else cached_table(cfg, args.cache_dir)
    sim = run_simulation(cfg, table, args.slots, seed=args.seed, mode=args.mode,
                         trace=bool(args.trace))
    _emit(_sim_json(sim), args.out)
    if args.trace and sim.trace is not None:
        tr = sim.trace
        with open(args.trace, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            n = tr.align_remaining.shape[1]
            writer.writerow(["slot", "queue_size",
                             *(f"align_u{u}" for u in range(n)),
                             *(f"strat_u{u}" for u in range(n))])
            for t in range(len(tr.queue_size)):
                writer.writerow([t, tr.queue_size[t],
                                 *tr.align_remaining[t], *tr.strategy[t]])
        print(f"trace written to {args.trace}", file=sys.stderr)
    return 0


def _cmd_sweep(args) -> int:
    base = load_config(args.config, args.set)
    axes = tuple(parse_axis(a) for a in args.axis)
    spec = SweepSpec(
        base=base, axes=axes, objective=args.objective,
        extremum=args.extremum, out=args.out, simulate=args.simulate,
        slots=args.slots, seed=args.seed, mode=args.mode,
        workers=args.workers, cache_dir=args.cache_dir,
    )
    rows, extremum = run_sweep(spec)
    out = args.out or "sweep.csv"
    _write_csv(out, SWEEP_HEADER, rows)
    print(f"wrote {out} ({len(rows)} points)")
    if extremum:
        ext_path = args.extremum_out or str(Path(out).with_suffix("")) + "_extremum.csv"
        _write_csv(ext_path, ("outer_name", "outer_value", "arg_name",
                              "arg_value", "objective", "value"), extremum)
        print(f"wrote {ext_path} ({len(extremum)} rows)")
    failures = sum(1 for r in rows if r["error"])
    if failures:
        print(f"{failures} point(s) failed; see the error column", file=sys.stderr)
    return 0


def _cmd_validate(args) -> int:
    checks = _validate_matrix(seed=args.seed, tol=args.tol)
    ok = True
    for label, err, passed in checks:
        print(f"{label}: {'PASS' if passed else 'FAIL'} (max err {err:.3e})")
        ok = ok and passed
    print(f"{'all checks passed' if ok else 'ORACLE MISMATCH'}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmrelay",
        description=__doc__,
        epilog=GRID_HINTS,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, slots=False, mode=False):
        p.add_argument("--config", help="JSON file mirroring SceneConfig fields")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one field (repeatable; _deg suffix for angles)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--cache-dir", default=DEFAULT_CACHE_DIR)
        if slots:
            p.add_argument("--slots", type=int, default=100_000)
        if mode:
            p.add_argument("--mode", choices=("table", "physical"), default="table")

    p = sub.add_parser("build-table", help="precompute and cache a success table")
    common(p)
    p.set_defaults(func=_cmd_build_table)

    p = sub.add_parser("analyze", help="analytical throughput/delay report")
    common(p)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("simulate", help="slot-level Monte-Carlo run")
    common(p, slots=True, mode=True)
    p.add_argument("--trace", help="write a per-slot state trace CSV here")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sweep", help="grid sweep with CSV output")
    common(p, slots=True, mode=True)
    p.add_argument("--axis", action="append", required=True, metavar="NAME=RANGE",
                   help="start:stop:count or comma list; give once or twice")
    p.add_argument("--objective", choices=("throughput", "delay"),
                   default="throughput")
    p.add_argument("--extremum", choices=("max", "min", "none"), default="none")
    p.add_argument("--extremum-out", help="extremum trace path")
    p.add_argument("--simulate", action="store_true",
                   help="also simulate each point (slower)")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("validate", help="check the analysis against enumeration")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-12)
    p.set_defaults(func=_cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
