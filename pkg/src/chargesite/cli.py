"""Command-line entry point: ``chargesite <command> [options]``.

Exit status: 0 on success, 2 for configuration or argument errors, 3 when a
pipeline stage fails or an input file is malformed, 4 when an exact solve
runs out of budget.
"""

from __future__ import annotations

import argparse
import io
import logging
import os
import sys
import tempfile
import time
from dataclasses import replace
from pathlib import Path
from typing import Callable, Sequence

from .cluster import write_candidates
from .config import ConfigError, PipelineConfig, dump_config, load_config, validate
from .errors import ExactBudgetExceeded, SitingError, StageError
from .geo import RingZone, zone_of
from .ingest import clean, group_by_vehicle, parse_records, write_records
from .plot import curve_svg, map_svg
from .scenario import (Bundle, congestion_compare, generate, read_sweep, run_pipeline, select_chains,
                       sweep_m, with_policy, write_sweep)
from .solve import Method, Model, SitingSolution, check_m, read_solution, solve, write_solution
from .tripchain import build_chains, extract_demand, read_demand, write_chains, write_demand

log = logging.getLogger("chargesite")

EXIT_OK, EXIT_CONFIG, EXIT_STAGE, EXIT_BUDGET = 0, 2, 3, 4


class InputError(SitingError):
    """A file handed to the CLI could not be read or understood."""


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def atomic_write(path: Path, text: str) -> None:
    """Write ``text`` to a sibling temp file, then rename it over ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _text(fn: Callable[[io.StringIO], None]) -> str:
    buf = io.StringIO()
    fn(buf)
    return buf.getvalue()


def _out(cfg: PipelineConfig, name: str) -> Path:
    return Path(cfg.output_dir) / name


def _require_seed(cfg: PipelineConfig, what: str) -> None:
    if cfg.seed is None:
        raise ConfigError(f"{what} is stochastic and needs a seed: pass --seed or set 'seed' in the config")


def _read_records(cfg: PipelineConfig):
    path = Path(cfg.input_path)
    try:
        with path.open(newline="") as fh:
            records, errors = parse_records(fh)
    except OSError as exc:
        raise StageError("ingest", exc) from exc
    except SitingError as exc:
        raise StageError("ingest", exc) from exc
    for err in errors[:10]:
        log.warning("%s:%d: %s", path, err.line, err.message)
    if len(errors) > 10:
        log.warning("%s: %d more malformed rows skipped", path, len(errors) - 10)
    return records, errors


def _bundle(cfg: PipelineConfig, write: bool = True) -> Bundle:
    _require_seed(cfg, "candidate clustering")
    records, _ = _read_records(cfg)
    bundle = run_pipeline(records, cfg)
    if write:
        atomic_write(_out(cfg, "demand.csv"), _text(lambda s: write_demand(bundle.demand, s)))
        atomic_write(_out(cfg, "candidates.csv"), _text(lambda s: write_candidates(bundle.candidates, s)))
    return bundle


def _check_m(m: int, n_candidates: int) -> None:
    try:
        check_m(m, n_candidates)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _models(choice: str) -> list[Model]:
    return list(Model) if choice == "both" else [Model(choice)]


def _station_xy(sol: SitingSolution, bundle: Bundle) -> list[tuple[float, float]]:
    by_id = {c.id: c.location for c in bundle.candidates}
    return [(by_id[j].lon, by_id[j].lat) for j in sol.open]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(cfg: PipelineConfig, args) -> int:
    _require_seed(cfg, "synthetic generation")
    t0 = time.perf_counter()
    records = generate(cfg.synth)
    path = Path(args.out) if args.out else Path(cfg.input_path)
    atomic_write(path, _text(lambda s: write_records(records, s)))
    vehicles = len({r.vehicle_id for r in records})
    print(f"synth: {len(records)} records for {vehicles} vehicles (seed {cfg.synth.seed}) -> {path}")
    print(f"wall time: {time.perf_counter() - t0:.2f} s")
    return EXIT_OK


def cmd_ingest(cfg: PipelineConfig, args) -> int:
    records, errors = _read_records(cfg)
    try:
        cleaned, report = clean(records, cfg.cleaning)
    except (SitingError, ValueError) as exc:
        raise StageError("clean", exc) from exc
    atomic_write(_out(cfg, "clean.csv"), _text(lambda s: write_records(cleaned, s)))
    text = report.to_text()
    if errors:
        text += f"malformed_rows = {len(errors)}\n"
    atomic_write(_out(cfg, "cleaning_report.txt"), text)
    print(f"ingest: {cfg.input_path}")
    print(text, end="")
    return EXIT_OK


def cmd_chains(cfg: PipelineConfig, args) -> int:
    records, _ = _read_records(cfg)
    # chains and demand do not need clustering, so run the front half by hand
    try:
        cleaned, _ = clean(records, cfg.cleaning)
        chains = build_chains(group_by_vehicle(cleaned), cfg.chain, cfg.scale)
        kept = select_chains(chains, cfg)
        demand = extract_demand(kept, cfg.rings)
    except (SitingError, ValueError) as exc:
        raise StageError("chains", exc) from exc
    atomic_write(_out(cfg, "chains.csv"), _text(lambda s: write_chains(kept, s)))
    atomic_write(_out(cfg, "demand.csv"), _text(lambda s: write_demand(demand, s)))
    zones = {z: sum(p.zone is z for p in demand) for z in RingZone}
    print(f"chains: {len(chains)} built, {len(kept)} kept, {len(demand)} demand points")
    print("zones: " + ", ".join(f"{z.value} {n}" for z, n in zones.items()))
    return EXIT_OK


def cmd_cluster(cfg: PipelineConfig, args) -> int:
    bundle = _bundle(cfg)
    counts = [c.member_count for c in bundle.candidates]
    print(f"cluster: {len(bundle.candidates)} candidates from {len(bundle.demand)} demand points")
    print(f"members per candidate: min {min(counts)}, max {max(counts)}")
    return EXIT_OK


def cmd_solve(cfg: PipelineConfig, args) -> int:
    m = args.m if args.m is not None else cfg.solve_m
    if m < 1:
        raise ConfigError(f"m must satisfy 1 <= m <= |J|, got m = {m}")
    method = Method(args.method) if args.method else cfg.solve_method
    bundle = _bundle(cfg)
    _check_m(m, bundle.matrix.n_candidates)
    params = cfg.solve_params(m, method)
    layers = {}
    for model in _models(args.model):
        sol = solve(bundle.matrix, model, params)
        path = _out(cfg, f"solution_{model.value}_m{m}.txt")
        atomic_write(path, _text(lambda s: write_solution(sol, s, bundle.matrix, bundle.candidates)))
        layers[model.value] = _station_xy(sol, bundle)
        print(f"{model.value}: m = {m}, {'exact' if sol.exact else 'heuristic'}, "
              f"avg {sol.pmedian_avg_km:.4f} km, max {sol.minmax_objective:.4f} km, "
              f"wall time {sol.wall_time_s:.2f} s -> {path}")
    svg = map_svg([(p.location.lon, p.location.lat) for p in bundle.demand], layers,
                  title=f"Charging stations, m = {m}")
    atomic_write(_out(cfg, f"map_m{m}.svg"), svg)
    return EXIT_OK


def cmd_sweep(cfg: PipelineConfig, args) -> int:
    m_from = args.m_from if args.m_from is not None else cfg.sweep_from
    m_to = args.m_to if args.m_to is not None else cfg.sweep_to
    if not 1 <= m_from <= m_to:
        raise ConfigError(f"sweep range must satisfy 1 <= from <= to, got {m_from}..{m_to}")
    method = Method(args.method) if args.method else cfg.solve_method
    bundle = _bundle(cfg)
    if m_to > bundle.matrix.n_candidates:
        raise ConfigError(f"sweep upper bound {m_to} exceeds |J| = {bundle.matrix.n_candidates}")
    t0 = time.perf_counter()
    result = sweep_m(bundle, m_from, m_to, method, cfg.solve_params(m_from, method),
                     jobs=cfg.jobs, scenario=cfg.profile)
    atomic_write(_out(cfg, "sweep.csv"), _text(lambda s: write_sweep(result, s)))
    _write_curves(cfg, result)
    print(f"sweep: m = {m_from}..{m_to}, {len(result.rows)} rows, "
          f"wall time {time.perf_counter() - t0:.2f} s -> {_out(cfg, 'sweep.csv')}")
    for r in result.rows:
        print(f"  m={r.m:3d}  avg {r.pmedian_avg_km:.4f} km  max {r.minmax_km:.4f} km")
    for w in result.warnings:
        print(f"warning: {w}")
    failed = [r for r in result.rows if r.error]
    for r in failed:
        print(f"error at m={r.m}: {r.error}", file=sys.stderr)
    if failed:
        budget = str(ExactBudgetExceeded())
        return EXIT_BUDGET if all(budget in r.error for r in failed) else EXIT_STAGE
    return EXIT_OK


def _write_curves(cfg: PipelineConfig, result) -> None:
    xs = [r.m for r in result.rows]
    atomic_write(_out(cfg, "sweep_pmedian.svg"),
                 curve_svg(xs, {"P-median": [r.pmedian_avg_km for r in result.rows]},
                           ylabel="average distance (km)", title="Average distance vs m"))
    atomic_write(_out(cfg, "sweep_minmax.svg"),
                 curve_svg(xs, {"Min-max": [r.minmax_km for r in result.rows]},
                           ylabel="maximum distance (km)", title="Maximum distance vs m"))


def cmd_compare(cfg: PipelineConfig, args) -> int:
    m = args.m if args.m is not None else cfg.solve_m
    if m < 1:
        raise ConfigError(f"m must satisfy 1 <= m <= |J|, got m = {m}")
    plain = _bundle(replace(cfg, congestion_enabled=False))
    _check_m(m, plain.matrix.n_candidates)
    congested = with_policy(plain, cfg.congestion, cfg)
    method = Method(args.method) if args.method else cfg.solve_method
    report = congestion_compare(plain, congested, cfg.solve_params(m, method), cfg.rings)
    atomic_write(_out(cfg, "compare.txt"), report.to_text())
    atomic_write(_out(cfg, "compare_stations.csv"), _text(report.write_stations))
    pm = Model.PMEDIAN
    plain_in = report.zone_counts(report.plain[pm])[RingZone.INNER3]
    cong_in = report.zone_counts(report.congested[pm])[RingZone.INNER3]
    print(f"compare: m = {m}")
    print(f"  P-median Inner3 stations: plain {plain_in}, congested {cong_in} "
          f"(delta {report.downtown_delta(pm):+d})")
    print(f"  Min-max objective: plain {report.plain[Model.MINMAX].minmax_objective:.4f} km, "
          f"congested {report.congested[Model.MINMAX].minmax_objective:.4f} km")
    return EXIT_OK


def cmd_report(cfg: PipelineConfig, args) -> int:
    bundle = _bundle(cfg)
    m = cfg.solve_m
    _check_m(m, bundle.matrix.n_candidates)
    params = cfg.solve_params(m)
    lines = [f"profile = {cfg.profile}", f"seed = {cfg.seed}"]
    lines += [f"{k} = {v}" for k, v in bundle.provenance.items()]
    layers = {}
    for model in Model:
        sol = solve(bundle.matrix, model, params)
        layers[model.value] = _station_xy(sol, bundle)
        by_id = {c.id: c.location for c in bundle.candidates}
        counts = {z: 0 for z in RingZone}
        for j in sol.open:
            counts[zone_of(by_id[j], cfg.rings)] += 1
        lines.append(f"{model.value}.m = {m}")
        lines.append(f"{model.value}.exact = {str(sol.exact).lower()}")
        lines.append(f"{model.value}.pmedian_avg_km = {sol.pmedian_avg_km!r}")
        lines.append(f"{model.value}.minmax_km = {sol.minmax_objective!r}")
        lines += [f"{model.value}.open_{z.value} = {n}" for z, n in counts.items()]
    text = "\n".join(lines) + "\n"
    atomic_write(_out(cfg, "report.txt"), text)
    atomic_write(_out(cfg, "config_effective.conf"), dump_config(cfg))
    atomic_write(_out(cfg, f"map_m{m}.svg"),
                 map_svg([(p.location.lon, p.location.lat) for p in bundle.demand], layers,
                         title=f"Charging stations, m = {m}"))
    print(text, end="")
    return EXIT_OK


def _load_or_fail(path: str, reader):
    try:
        with open(path, newline="") as fh:
            return reader(fh)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def cmd_plot(cfg: PipelineConfig, args) -> int:
    if args.kind == "map":
        layers: dict[str, list[tuple[float, float]]] = {}
        for path in args.inputs:
            sol = _load_or_fail(path, read_solution)
            if any(lon is None for _, lon, _ in sol["stations"]):
                raise InputError(f"{path}: station coordinates missing")
            if len(sol["stations"]) != len(sol["open"]):
                raise InputError(f"{path}: station section does not match the open set")
            layers[sol["header"]["model"]] = [(lon, lat) for _, lon, lat in sol["stations"]]
        demand_path = args.demand or str(_out(cfg, "demand.csv"))
        demand = []
        if args.demand or Path(demand_path).exists():
            demand = [(p.location.lon, p.location.lat) for p in _load_or_fail(demand_path, read_demand)]
        m = len(next(iter(layers.values())))
        svg = map_svg(demand, layers, title=f"Charging stations, m = {m}")
        out = Path(args.out) if args.out else _out(cfg, f"map_m{m}.svg")
    else:
        if len(args.inputs) != 1:
            raise ConfigError("curve plots take exactly one sweep file")
        result = _load_or_fail(args.inputs[0], read_sweep)
        xs = [r.m for r in result.rows]
        series = {}
        if args.metric in ("pmedian", "both"):
            series["P-median"] = [r.pmedian_avg_km for r in result.rows]
        if args.metric in ("minmax", "both"):
            series["Min-max"] = [r.minmax_km for r in result.rows]
        try:
            svg = curve_svg(xs, series, title="Objective vs m")
        except ValueError as exc:
            raise InputError(str(exc)) from exc
        out = Path(args.out) if args.out else _out(cfg, f"sweep_{args.metric}.svg")
    atomic_write(out, svg)
    print(f"plot: {args.kind} -> {out}")
    return EXIT_OK


def cmd_config(cfg: PipelineConfig, args) -> int:
    print(dump_config(cfg), end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _common(suppress: bool) -> argparse.ArgumentParser:
    d = argparse.SUPPRESS if suppress else None
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=d, help="config file (default: $CHARGE_SITING_CONFIG)")
    p.add_argument("--seed", type=int, default=d, help="override the config seed everywhere")
    p.add_argument("--jobs", type=int, default=d, help="worker processes for sweeps")
    p.add_argument("--output-dir", default=d, help="override paths.output_dir")
    p.add_argument("--input", default=d, help="override paths.input")
    p.add_argument("-v", "--verbose", action="count", default=d)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chargesite", parents=[_common(False)],
                                     description="Charging-station siting from taxi trip records.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common(True)

    def add(name, fn, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=fn)
        return p

    p = add("synth", cmd_synth, "generate synthetic OD records")
    p.add_argument("--out", help="output CSV (default: paths.input)")
    add("ingest", cmd_ingest, "parse and clean the input records")
    add("chains", cmd_chains, "build trip chains and demand points")
    add("cluster", cmd_cluster, "cluster demand points into candidate sites")
    methods = [m.value for m in Method]
    p = add("solve", cmd_solve, "solve P-median and/or Min-max for one m")
    p.add_argument("--model", choices=["pmedian", "minmax", "both"], default="both")
    p.add_argument("--m", type=int)
    p.add_argument("--method", choices=methods)
    p = add("sweep", cmd_sweep, "solve both models over a range of m")
    p.add_argument("--from", dest="m_from", type=int)
    p.add_argument("--to", dest="m_to", type=int)
    p.add_argument("--method", choices=methods)
    p = add("compare", cmd_compare, "compare siting with and without congestion")
    p.add_argument("--m", type=int)
    p.add_argument("--method", choices=methods)
    add("report", cmd_report, "run the pipeline and summarise both models at solve.m")
    p = add("plot", cmd_plot, "render a solution map or a sweep curve as SVG")
    p.add_argument("kind", choices=["map", "curve"])
    p.add_argument("inputs", nargs="+", help="solution file(s) for map, one sweep CSV for curve")
    p.add_argument("--demand", help="demand CSV drawn under a map")
    p.add_argument("--metric", choices=["pmedian", "minmax", "both"], default="both")
    p.add_argument("--out", help="output SVG path")
    add("config", cmd_config, "print the effective configuration")
    return parser


def _resolve_config(args) -> PipelineConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.jobs is not None:
        cfg = replace(cfg, jobs=args.jobs)
    if args.output_dir is not None:
        cfg = replace(cfg, output_dir=args.output_dir)
    if args.input is not None:
        cfg = replace(cfg, input_path=args.input)
    validate(cfg)
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    verbose = args.verbose or 0
    logging.basicConfig(level=logging.DEBUG if verbose > 1 else logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve_config(args)
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ExactBudgetExceeded as exc:
        print(f"solver budget error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except StageError as exc:
        if isinstance(exc.cause, ExactBudgetExceeded):
            print(f"solver budget error: {exc}", file=sys.stderr)
            return EXIT_BUDGET
        print(f"stage error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (SitingError, ValueError) as exc:
        print(f"stage error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
