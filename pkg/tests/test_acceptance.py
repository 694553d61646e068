"""Acceptance gate: one test per criterion, printing one PASS line each.

Tolerances are pinned here, not configurable.  Expensive artifacts (the
41 x 41 certification sweep, the full pipeline run) are shared through
module-scoped fixtures.
"""

import time

import numpy as np
import pytest

from oracles import (
    demo_region_member,
    demo_region_near_boundary,
    demo_stability_member,
    finite_difference_gradient,
)
from passlqr.certify import certify_gain, validate_certificate
from passlqr.errors import Infeasible
from passlqr.flow import FlowConfig, evaluate_cost, integrate_flow
from passlqr.linalg import solve_care, spectral_abscissa, unvec_gain
from passlqr.pipeline import PipelineOptions, run_pipeline
from passlqr.polytope import box_polytope, projection_operator
from passlqr.region import precheck_optimal

GRID_K1 = np.linspace(-3.0, 1.0, 41)
GRID_K2 = np.linspace(-2.0, 2.0, 41)

KT1 = np.array([[2.0, 2.0], [0.5, 2.0]])
KT2 = np.array([[2.0, 0.5], [2.0, 2.0]])
KC = 0.5 * (KT1 + KT2)


@pytest.fixture(scope="module")
def grid_sweep(demo_plant, nonstrict):
    """Certification verdict for every grid gain, plus elapsed wall time."""
    t0 = time.perf_counter()
    verdicts = {}
    certified = []
    for k1 in GRID_K1:
        for k2 in GRID_K2:
            gain = np.array([[k1, k2]])
            try:
                certify_gain(demo_plant, gain, nonstrict)
                verdicts[(k1, k2)] = True
                certified.append(gain)
            except Infeasible:
                verdicts[(k1, k2)] = False
    elapsed = time.perf_counter() - t0
    return {"verdicts": verdicts, "certified": certified, "elapsed": elapsed}


@pytest.fixture(scope="module")
def pipeline_run(demo_plant, nonstrict):
    options = PipelineOptions(edge=0.4, search_box=np.array([[-4.0, 0.0], [-2.0, 2.0]]),
                              seed=0)
    return run_pipeline(demo_plant, nonstrict, options)


@pytest.fixture(scope="module")
def atlas_samples(demo_plant, nonstrict, pipeline_run):
    """Ten random interior gains per verified cube, each certified individually."""
    _, artifacts = pipeline_run
    rng = np.random.default_rng(42)
    certified, failures = [], []
    for cube in artifacts["region"].cubes:
        for _ in range(10):
            k = cube.center + (rng.random(cube.center.size) - 0.5) * cube.edge
            gain = unvec_gain(k, demo_plant.m, demo_plant.n)
            try:
                certify_gain(demo_plant, gain, nonstrict)
                certified.append(gain)
            except Infeasible:
                failures.append(k)
    return {"certified": certified, "failures": failures,
            "n_cubes": len(artifacts["region"].cubes)}


def test_criterion_01_optimal_lqr_gain(demo_plant):
    t0 = time.perf_counter()
    _, K = solve_care(demo_plant.A, demo_plant.B_u, demo_plant.Q, demo_plant.R)
    elapsed = time.perf_counter() - t0
    assert abs(K[0, 0] - 0.048) <= 1e-3
    assert abs(K[0, 1] - 0.143) <= 1e-3
    assert elapsed < 1.0
    print(f"\nACCEPTANCE 1 PASS: K* = [{K[0, 0]:.4f} {K[0, 1]:.4f}] in {elapsed:.3f} s")


def test_criterion_02_analytic_region_agreement(grid_sweep):
    agree = total = 0
    for (k1, k2), verdict in grid_sweep["verdicts"].items():
        if demo_region_near_boundary(k1, k2, radius=0.02):
            continue
        total += 1
        agree += int(verdict == demo_region_member(k1, k2))
    ratio = agree / total
    assert ratio >= 0.98, f"agreement {ratio:.4f} below 98%"
    assert grid_sweep["elapsed"] < 120.0, f"sweep took {grid_sweep['elapsed']:.1f} s"
    print(f"\nACCEPTANCE 2 PASS: {agree}/{total} off-boundary grid points agree "
          f"({100 * ratio:.2f}%) in {grid_sweep['elapsed']:.1f} s")


def test_criterion_03_stability_region_agreement(demo_plant):
    checked = 0
    for k1 in GRID_K1:
        for k2 in GRID_K2:
            m1 = 5.0 + k1 + 2.0 * k2
            m2 = 5.0 + k1 + 3.0 * k2
            if abs(m1) <= 1e-6 or abs(m2) <= 1e-6:
                continue
            abscissa = spectral_abscissa(demo_plant.closed_loop(np.array([[k1, k2]])))
            assert (abscissa < -1e-12) == demo_stability_member(k1, k2), (k1, k2)
            checked += 1
    print(f"\nACCEPTANCE 3 PASS: spectral classification matches both half-planes "
          f"at {checked} grid points")


def test_criterion_04_nonconvexity_witness(nonconvex_plant, nonstrict):
    t0 = time.perf_counter()
    c1 = certify_gain(nonconvex_plant, KT1, nonstrict)
    c2 = certify_gain(nonconvex_plant, KT2, nonstrict)
    with pytest.raises(Infeasible):
        certify_gain(nonconvex_plant, KC, nonstrict)
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    for K in (KT1, KT2):
        assert spectral_abscissa(nonconvex_plant.closed_loop(K)) <= 1e-6
    print(f"\nACCEPTANCE 4 PASS: both witness gains certify "
          f"(P22 = {c1.P[1, 1]:.3f}, {c2.P[1, 1]:.3f}), midpoint rejected, {elapsed:.2f} s")


def test_criterion_05_cube_soundness(atlas_samples):
    assert atlas_samples["n_cubes"] > 0
    assert not atlas_samples["failures"], \
        f"{len(atlas_samples['failures'])} interior samples failed certification"
    print(f"\nACCEPTANCE 5 PASS: 10/10 interior samples certify in each of "
          f"{atlas_samples['n_cubes']} cubes")


def test_criterion_06_flow_convergence_and_invariance(demo_plant, pipeline_run):
    _, artifacts = pipeline_run
    polytope = artifacts["polytope"]
    center = polytope.chebyshev_center
    width = np.array([polytope.h[1] + polytope.h[0], polytope.h[3] + polytope.h[2]])
    starts = [center + 0.25 * width * np.array([1.0, -1.0]),
              center + 0.25 * width * np.array([-1.0, 1.0])]
    t0 = time.perf_counter()
    trajectories = [integrate_flow(demo_plant, polytope, unvec_gain(s, 1, 2), FlowConfig())
                    for s in starts]
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    for traj in trajectories:
        assert traj.termination == "converged"
        fs = [s.f for s in traj.samples]
        assert all(fs[i + 1] <= fs[i] + 1e-9 for i in range(len(fs) - 1)), "cost increased"
        assert min(s.min_g for s in traj.samples) >= -1e-9, "left the polytope"
        for s in traj.samples:
            assert spectral_abscissa(demo_plant.closed_loop(unvec_gain(s.k, 1, 2))) < 0.0
    gap = np.linalg.norm(trajectories[0].terminal_gain - trajectories[1].terminal_gain)
    assert gap <= 1e-3, f"terminal gains differ by {gap:.2e}"
    print(f"\nACCEPTANCE 6 PASS: two starts agree to {gap:.1e}, cost monotone, "
          f"feasible and stabilizing throughout, {elapsed:.1f} s")


def test_criterion_07_gradient_oracle():
    from passlqr.plant import LtiPlant
    rng = np.random.default_rng(1234)
    checked = 0
    worst = 0.0
    plants = 0
    while plants < 10:
        n = int(rng.integers(2, 5))
        A = rng.normal(size=(n, n))
        B = rng.normal(size=(n, 1))
        Qm = rng.normal(size=(n, n))
        plant = LtiPlant(A=A, B_u=B, B_d=np.eye(n)[:, :1], C=np.eye(n)[:1, :], D=[[0.0]],
                         Q=Qm @ Qm.T + 0.1 * np.eye(n), R=[[1.0]])
        try:
            _, K_star = solve_care(plant.A, plant.B_u, plant.Q, plant.R)
        except Exception:
            continue
        plants += 1
        gains = 0
        while gains < 2:
            K = K_star + 0.3 * rng.normal(size=K_star.shape)
            if spectral_abscissa(plant.closed_loop(K)) >= -1e-6:
                continue
            ev = evaluate_cost(plant, K)
            fd = finite_difference_gradient(lambda Kp: evaluate_cost(plant, Kp).f_K, K)
            rel = np.linalg.norm(fd - ev.grad) / (1e-30 + np.linalg.norm(ev.grad))
            assert rel <= 1e-4, f"relative gradient error {rel:.2e}"
            worst = max(worst, rel)
            gains += 1
            checked += 1
    assert checked == 20
    print(f"\nACCEPTANCE 7 PASS: analytic gradient matches central differences at "
          f"20 gains (worst relative error {worst:.1e})")


def test_criterion_08_unbounded_ray(demo_plant, nonstrict):
    K0 = np.array([[-0.5, 0.0]])
    cert = certify_gain(demo_plant, K0, nonstrict)
    direction = demo_plant.B_u.T @ cert.P
    for t in (1.0, 10.0, 100.0):
        validate_certificate(demo_plant, K0 + t * direction, cert.P, nonstrict)
    print("\nACCEPTANCE 8 PASS: K0 + t B_u' P0 certifies with the original "
          "storage matrix for t in {1, 10, 100}")


def test_criterion_09_inclusion(demo_plant, nonconvex_plant, grid_sweep, atlas_samples,
                                nonstrict, strict):
    count = 0
    for gain in grid_sweep["certified"] + atlas_samples["certified"]:
        assert spectral_abscissa(demo_plant.closed_loop(gain)) <= 1e-6
        count += 1
    for gain in (KT1, KT2):
        assert spectral_abscissa(nonconvex_plant.closed_loop(gain)) <= 1e-6
        count += 1
    strict_gains = [np.array([[-0.5, 0.0]]), np.array([[-0.8, 0.4]])]
    for gain in strict_gains:
        certify_gain(demo_plant, gain, strict)
        assert spectral_abscissa(demo_plant.closed_loop(gain)) < 0.0
        count += 1
    print(f"\nACCEPTANCE 9 PASS: abscissa <= 1e-6 for all {count} certified gains "
          f"({len(strict_gains)} strict ones strictly negative)")


def test_criterion_10_projection_operator_checks():
    unit = box_polytope([0.0, 0.0], [1.0, 1.0])
    op = projection_operator(unit, [0.5, 0.5])
    assert np.abs(op.M_matrix - np.eye(2) / 3.0).max() <= 1e-9

    rng = np.random.default_rng(7)
    box = box_polytope([-2.0, 1.0], [0.5, 3.0])
    checked = 0
    while checked < 100:
        k = np.array([rng.uniform(-2.0, 0.5), rng.uniform(1.0, 3.0)])
        eigs = np.linalg.eigvalsh(projection_operator(box, k).M_matrix)
        assert eigs.min() >= -1e-9 and eigs.max() <= 1.0 + 1e-9
        checked += 1

    wide = box_polytope([0.0, 0.0], [2000.0, 2000.0])
    tangency = np.linalg.norm(projection_operator(wide, [0.0, 1000.0]).M_matrix
                              @ np.array([1.0, 0.0]))
    assert tangency <= 1e-3
    print(f"\nACCEPTANCE 10 PASS: M = I/3 at the unit-box center, eigenvalues in "
          f"[0, 1] at 100 points, face tangency {tangency:.1e}")


def test_criterion_11_upper_bound_consistency(demo_plant, easy_plant, nonstrict, pipeline_run):
    ledger, _ = pipeline_run
    assert ledger.f_hat >= ledger.f_star - 1e-12
    easy_ledger, _ = run_pipeline(easy_plant, nonstrict, PipelineOptions(seed=0))
    assert easy_ledger.already_passive
    assert abs(easy_ledger.f_hat - easy_ledger.f_star) <= 1e-6
    pre = precheck_optimal(easy_plant, nonstrict)
    assert pre.already_passive
    print(f"\nACCEPTANCE 11 PASS: constrained cost {ledger.f_hat:.6f} >= optimal "
          f"{ledger.f_star:.6f}; short-circuit run has equal costs")
