"""Acceptance criteria 1-7, each checked at its stated tolerance.

Every test reports one PASS/FAIL line, printed in the pytest terminal summary.
Criteria 5-7 share one paired run of 30 scenes per planner variant.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from zapp.config import ExperimentConfig
from zapp.experiment import _run_one
from zapp.metrics import compute_metrics
from zapp.oracles import (
    check_problem_gradients,
    coverage_instance,
    coverage_rate,
    grid_overlap,
    random_pair,
    random_problem,
    random_zonotope,
    sample_zonotope,
)
from zapp.zonotope import are_disjoint, to_hrep

N_SEEDS = 30


def line(report, n, ok, detail):
    report(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")


def test_c1_geometry_oracle_equivalence(report):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(100):
        z1, z2 = random_pair(rng)
        assert z1.n_generators <= 6 and z2.n_generators <= 6
        assert np.all(np.abs(z1.center) <= 5) and np.all(np.abs(z2.center) <= 5)
        bad += are_disjoint(z1, z2) == grid_overlap(z1, z2, resolution=0.01)
    secs = time.perf_counter() - t0
    ok = bad == 0 and secs < 30
    line(report, 1, ok, f"{bad} disagreements on 100 pairs in {secs:.1f} s")
    assert ok


def test_c2_hrep_correctness(report):
    rng = np.random.default_rng(102)
    fails = 0
    worst = -np.inf
    for _ in range(100):
        z = random_zonotope(rng)
        h = to_hrep(z)
        pts = sample_zonotope(z, 1000, rng)
        m = np.max(pts @ h.A.T - h.b, axis=1)
        worst = max(worst, m.max())
        fails += int(np.any(m > 1e-9))
        for i in range(h.A.shape[0]):
            vertex = z.center + z.generators @ np.sign(h.A[i] @ z.generators)
            depth = h.b[i] - h.A[i] @ z.center
            pushed = vertex + 0.01 * max(depth, 1e-6) * h.A[i]
            fails += int(np.max(h.A @ pushed - h.b) <= 0)
    ok = fails == 0
    line(report, 2, ok, f"{fails} failures on 100 zonotopes, worst interior margin {worst:.1e}")
    assert ok


def test_c3_gradient_fidelity(report):
    rng = np.random.default_rng(103)
    worst_c = worst_g = 0.0
    checked = skipped = 0
    for _ in range(50):
        problem, z = random_problem(rng)
        rep = check_problem_gradients(problem, z)
        worst_c = max(worst_c, rep.constraint_max_rel)
        worst_g = max(worst_g, rep.cost_max_rel)
        checked += rep.checked_records
        skipped += rep.skipped_records
    ok = worst_c < 1e-4 and worst_g < 1e-6 and checked > 0
    line(report, 3, ok, f"constraint max rel. error {worst_c:.1e} ({checked} records, {skipped} near ties), "
                        f"cost {worst_g:.1e}")
    assert ok


def test_c4_continuous_time_coverage(report):
    rng = np.random.default_rng(104)
    rates = [coverage_rate(*coverage_instance(rng), rng, 10_000) for _ in range(20)]
    ok = min(rates) >= 0.99
    line(report, 4, ok, f"coverage min {min(rates):.4f}, mean {np.mean(rates):.4f} over 20 x 1e4 samples")
    assert ok


# -- closed-loop benchmark ---------------------------------------------------------


@pytest.fixture(scope="module")
def paired_run():
    t0 = time.perf_counter()
    results = {}
    for variant in ("zapp", "discrete-baseline"):
        cfg = ExperimentConfig.from_dict({"variant": variant, "scenes": N_SEEDS, "seed": 0})
        cfg = replace(cfg, simulator=replace(cfg.simulator, audit_plans=True))
        results[variant] = (cfg, [_run_one((cfg, s)) for s in cfg.seeds])
    return results, time.perf_counter() - t0


def test_c5_table_direction(report, paired_run):
    results, secs = paired_run
    zapp = compute_metrics([r.log for r in results["zapp"][1]])
    base = compute_metrics([r.log for r in results["discrete-baseline"][1]])
    gap = base.crashes_pct - zapp.crashes_pct
    speed_ratio = zapp.avg_speed_mean / base.avg_speed_mean
    ok = gap >= 10.0 and zapp.crashes_pct < base.crashes_pct and abs(speed_ratio - 1) <= 0.15 and secs < 1800
    line(report, 5, ok,
         f"crashes ZAPP {zapp.crashes_pct:.1f}% vs baseline {base.crashes_pct:.1f}% (gap {gap:.1f} pts), "
         f"AS {zapp.avg_speed_mean:.2f} vs {base.avg_speed_mean:.2f} m/s (ratio {speed_ratio:.3f}), "
         f"{secs / 60:.1f} min")
    assert ok


def test_c6_consensus_and_determinism(report, paired_run):
    results, _ = paired_run
    consensus = all(s.consensus_ok for _, rs in results.values() for r in rs for s in r.log.solves)
    # replay one goal and, when present, one crash episode per variant
    replayed = mismatched = 0
    for cfg, rs in results.values():
        picks = {r.log.outcome: r for r in rs}
        for r in picks.values():
            again = _run_one((cfg, r.scene.seed))
            replayed += 1
            mismatched += again.log.fingerprint() != r.log.fingerprint()
    ok = consensus and mismatched == 0
    line(report, 6, ok, f"consensus {'exact' if consensus else 'BROKEN'} over all solves, "
                        f"{replayed - mismatched}/{replayed} replays bit-identical")
    assert ok


def test_c7_solver_discipline(report, paired_run):
    results, _ = paired_run
    solves = [s for _, rs in results.values() for r in rs for s in r.log.solves]
    max_iter = max(s.iterations for s in solves)
    audited = [s.audit_margin for s in solves if s.feasible]
    worst = min(audited)
    infeasible = sum(not s.feasible for s in solves)
    ok = max_iter <= 10 and worst >= -1e-9
    line(report, 7, ok, f"{len(solves)} solves, max {max_iter} outer iterations, worst audit margin "
                        f"{worst:.1e} over {len(audited)} feasible plans ({infeasible} fell back to braking)")
    assert ok
