"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v`` or
``python3 tests/test_acceptance.py``. The verdict lines are repeated in the
terminal summary.
"""

import sys
import time
from pathlib import Path

import numpy as np
import pytest

from chargesite.cli import main as cli_main
from chargesite.config import SynthParams, load_config, tiny_profile
from chargesite.cost import CongestionPolicy
from chargesite.geo import RingZone
from chargesite.ingest import clean, group_by_vehicle
from chargesite.scenario import congestion_compare, generate, run_pipeline, sweep_m, with_policy
from chargesite.solve import (Method, Model, assign_nearest, solve_minmax_exact, solve_minmax_heuristic,
                              solve_pmedian_exact, solve_pmedian_heuristic)
from chargesite.tripchain import ChainParams, build_chains, extract_demand

from conftest import brute_assign, brute_minmax, brute_pmedian, chain_violations, check_feasible, instances

ROOT = Path(__file__).resolve().parents[1]
BEIJING_CONF = ROOT / "configs" / "beijing.conf"
VERDICTS: dict[int, str] = {}


def verdict(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {n} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    VERDICTS[n] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def oracle_cases():
    return instances(100, seed=2024)


@pytest.fixture(scope="module")
def beijing():
    cfg = load_config(BEIJING_CONF)
    t0 = time.perf_counter()
    bundle = run_pipeline(generate(cfg.synth), cfg)
    return cfg, bundle, time.perf_counter() - t0


def test_criterion_1_exact_matches_enumeration(oracle_cases):
    t0 = time.perf_counter()
    mismatches = []
    for k, (mat, m) in enumerate(oracle_cases):
        pm, mm = solve_pmedian_exact(mat, m), solve_minmax_exact(mat, m)
        bp, bp_set = brute_pmedian(mat, m)
        bm, _ = brute_minmax(mat, m)
        if pm.pmedian_objective != bp or pm.open != bp_set:
            mismatches.append(f"pmedian #{k}")
        if mm.minmax_objective != bm:
            mismatches.append(f"minmax #{k}")
    elapsed = time.perf_counter() - t0
    sizes = max(mat.n_demand for mat, _ in oracle_cases), max(mat.n_candidates for mat, _ in oracle_cases)
    ok = not mismatches and elapsed < 10.0
    verdict(1, "exact solvers equal exhaustive enumeration", ok,
            f"{len(oracle_cases)} instances (|I|<={sizes[0]}, |J|<={sizes[1]}, m<=4), "
            f"{len(mismatches)} mismatches, {elapsed:.2f} s (limit 10 s)")


def test_criterion_2_heuristic_gap(oracle_cases):
    within = {Model.PMEDIAN: 0, Model.MINMAX: 0}
    infeasible = []
    worst = {Model.PMEDIAN: 0.0, Model.MINMAX: 0.0}
    for k, (mat, m) in enumerate(oracle_cases):
        for model, heur, exact, key in (
                (Model.PMEDIAN, solve_pmedian_heuristic, solve_pmedian_exact, "pmedian_objective"),
                (Model.MINMAX, solve_minmax_heuristic, solve_minmax_exact, "minmax_objective")):
            h, e = heur(mat, m), exact(mat, m)
            if check_feasible(h, mat, m):
                infeasible.append(f"{model.value} #{k}")
            hv, ev = getattr(h, key), getattr(e, key)
            gap = 0.0 if hv == ev else (np.inf if ev == 0 else (hv - ev) / ev)
            worst[model] = max(worst[model], gap)
            within[model] += gap <= 0.05
    ok = all(v >= 95 for v in within.values()) and not infeasible
    verdict(2, "heuristics within 5% of exact", ok,
            f"P-median {within[Model.PMEDIAN]}/100 (worst gap {worst[Model.PMEDIAN]:.2%}), "
            f"Min-max {within[Model.MINMAX]}/100 (worst gap {worst[Model.MINMAX]:.2%}), "
            f"{len(infeasible)} infeasible")


def test_criterion_3_monotone_in_m():
    cfg = tiny_profile()
    bundle = run_pipeline(generate(cfg.synth), cfg)
    n = bundle.matrix.n_candidates
    res = sweep_m(bundle, 1, n, Method.EXACT, cfg.solve_params())
    pm = [r.pmedian_avg_km for r in res.rows]
    mm = [r.minmax_km for r in res.rows]
    exact = all(r.exact_pmedian and r.exact_minmax for r in res.rows)
    ok = exact and all(b <= a + 1e-9 for a, b in zip(pm, pm[1:])) and all(b <= a + 1e-9 for a, b in zip(mm, mm[1:]))
    verdict(3, "exact objectives non-increasing in m", ok,
            f"tiny bundle |I|={bundle.matrix.n_demand}, |J|={n}; avg {pm[0]:.3f} -> {pm[-1]:.3f} km, "
            f"max {mm[0]:.3f} -> {mm[-1]:.3f} km")


def test_criterion_4_diminishing_returns(beijing):
    cfg, bundle, build_s = beijing
    t0 = time.perf_counter()
    res = sweep_m(bundle, 30, 60, Method.HEURISTIC, cfg.solve_params(30, Method.HEURISTIC), jobs=cfg.jobs)
    elapsed = time.perf_counter() - t0
    avg = {r.m: r.pmedian_avg_km for r in res.rows}
    early, late = avg[30] - avg[40], avg[50] - avg[60]
    shape = (bundle.matrix.n_demand, bundle.matrix.n_candidates, len(bundle.chains))
    ok = avg[60] < avg[30] and late < early and elapsed + build_s < 300
    verdict(4, "diminishing returns over m = 30..60", ok,
            f"|I|={shape[0]}, |J|={shape[1]}, chains={shape[2]}; avg(30)={avg[30]:.4f}, avg(60)={avg[60]:.4f} km; "
            f"decrease 30-40 {early:.4f} km vs 50-60 {late:.4f} km; sweep {elapsed:.1f} s + build {build_s:.1f} s")


def test_criterion_5_downtown_shift(beijing):
    cfg, bundle, _ = beijing
    policy = CongestionPolicy(rings=cfg.rings, windows=cfg.congestion.windows)
    assert (policy.sigma_inner3, policy.sigma_ring34, policy.sigma_other) == (1.5, 1.2, 1.0)
    rep = congestion_compare(bundle, with_policy(bundle, policy, cfg), cfg.solve_params(30), cfg.rings)
    plain = rep.zone_counts(rep.plain[Model.PMEDIAN])[RingZone.INNER3]
    cong = rep.zone_counts(rep.congested[Model.PMEDIAN])[RingZone.INNER3]
    verdict(5, "congestion does not pull P-median stations out of Inner3", cong >= plain,
            f"m=30 Inner3 stations plain {plain}, congested {cong}; Min-max objective (reported only) "
            f"plain {rep.plain[Model.MINMAX].minmax_objective:.4f} km, "
            f"congested {rep.congested[Model.MINMAX].minmax_objective:.4f} km")


def test_criterion_6_trip_chain_invariants():
    records = generate(SynthParams(seed=606, n_vehicles=100, records_per_vehicle=100))
    cleaned, _ = clean(records)
    groups = group_by_vehicle(cleaned)
    params = ChainParams()
    chains = build_chains(groups, params)
    bad = chain_violations(chains, groups, params)
    demand = extract_demand(chains)
    ok = len(records) == 10_000 and not bad and len(demand) == 2 * len(chains)
    verdict(6, "trip-chain invariants", ok,
            f"{len(records)} records -> {len(chains)} chains, {len(demand)} demand points, "
            f"{len(bad)} violations{': ' + bad[0] if bad else ''}")


def _cli_run(work: Path, conf_text: str, commands) -> dict[str, bytes]:
    work.mkdir()
    conf = work / "run.conf"
    conf.write_text(conf_text)
    for cmd in commands:
        code = cli_main(cmd + ["--config", str(conf)])
        assert code == 0, (cmd, code)
    return {p.name: p.read_bytes() for p in sorted((work / "out").iterdir())}


def test_criterion_7_determinism(tmp_path):
    tiny = "profile = tiny\nseed = 7\npaths.input = records.csv\npaths.output_dir = out\n"
    tiny_cmds = [["synth"], ["chains"], ["cluster"], ["solve"], ["sweep"], ["compare"],
                 ["plot", "curve", "out/sweep.csv", "--out", "PLACEHOLDER"]]
    beijing = BEIJING_CONF.read_text().replace("../out/beijing/", "").replace("../out/beijing", "out")
    beijing_cmds = [["synth"], ["solve", "--m", "30"]]
    diffs, names = [], set()
    for label, text, cmds in (("tiny", tiny, tiny_cmds), ("beijing", beijing, beijing_cmds)):
        runs = []
        for k in range(2):
            work = tmp_path / f"{label}{k}"
            concrete = [[str(work / "out" / "curve.svg") if a == "PLACEHOLDER" else
                         str(work / a) if a.startswith("out/") else a for a in c] for c in cmds]
            runs.append(_cli_run(work, text, concrete))
        a, b = runs
        names |= {f"{label}/{n}" for n in a}
        diffs += [f"{label}/{n}" for n in sorted(set(a) | set(b)) if a.get(n) != b.get(n)]
    wanted = ("demand.csv", "candidates.csv", "solution_pmedian_m3.txt", "solution_minmax_m3.txt",
              "solution_pmedian_m30.txt", "sweep.csv", "map_m3.svg", "map_m30.svg", "sweep_pmedian.svg", "curve.svg")
    missing = [w for w in wanted if not any(n.endswith("/" + w) for n in names)]
    ok = not diffs and not missing
    verdict(7, "byte-identical outputs across runs", ok,
            f"{len(names)} files compared over two tiny and two beijing runs, "
            f"{len(diffs)} differ{': ' + ', '.join(diffs) if diffs else ''}"
            f"{'; missing ' + ', '.join(missing) if missing else ''}")


def test_criterion_8_nearest_assignment(oracle_cases):
    rng = np.random.default_rng(808)
    mismatches = 0
    for k in range(1000):
        mat, _ = oracle_cases[k % len(oracle_cases)]
        size = int(rng.integers(1, mat.n_candidates + 1))
        cols = sorted(rng.choice(mat.n_candidates, size=size, replace=False).tolist())
        got, pm, mm = assign_nearest(cols, mat)
        want = brute_assign(mat.d, cols)
        dist = [mat.d[i, c] for i, c in enumerate(want)]
        # brute force over every open column per demand: nothing beats the chosen one
        best = [min(mat.d[i, c] for c in cols) for i in range(mat.n_demand)]
        if got.tolist() != want or dist != best or mm != max(best):
            mismatches += 1
    verdict(8, "nearest-open assignment is optimal", mismatches == 0,
            f"1000 random open sets, {mismatches} mismatches")


def pytest_terminal_summary_lines():
    return [VERDICTS[k] for k in sorted(VERDICTS)]


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
