"""Acceptance gate: every release criterion at its pinned tolerance.

Each test prints one `[PASS]/[FAIL]` line (visible with `pytest -s`) and
asserts the criterion including its runtime budget.  The long full-size
configuration is marked `full_scale` and deselected by default.
"""

import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest

from urasim import verification
from urasim.channel import UpaGeometry
from urasim.clustering import SlotChannels, run_clustering, stitch_messages
from urasim.codec import assemble_message, build_codebook, synthesize_slot
from urasim.gamp import GampConfig, run_estimator
from urasim.metrics import error_rates, pack_bits
from urasim.pipeline import (
    SimConfig,
    _sweep_cell,
    draw_user_channels,
    trial_seeds,
)


def report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


def run_oracle_criterion(key: str, budget_s: float, name: str) -> None:
    result = verification.ALL_CHECKS[key]()
    ok = result.passed and result.runtime_s < budget_s
    report(name, ok, f"worst {result.worst:.3e} (tol {result.tolerance:.1e}), "
                     f"{result.runtime_s:.1f}s of {budget_s:.0f}s; {result.detail}")
    assert result.passed, result.line()
    assert result.runtime_s < budget_s, f"runtime {result.runtime_s:.1f}s over budget"


def test_denoiser_closed_forms_match_quadrature():
    run_oracle_criterion("denoiser", 10.0, "denoiser oracle")


def test_activity_evidence_matches_quadrature():
    run_oracle_criterion("varpi", 5.0, "activity-evidence oracle")


def test_parameter_updates_are_stationary():
    run_oracle_criterion("em", 10.0, "parameter-update stationarity")


def test_grid_support_pass_matches_references():
    run_oracle_criterion("mrf", 10.0, "grid support exactness")


def test_assignment_solver_matches_brute_force():
    run_oracle_criterion("hungarian", 30.0, "assignment exactness")


def test_angular_basis_and_peak_predicate():
    run_oracle_criterion("channel", 30.0, "basis unitarity and peak predicate")


def test_detection_tail_matches_monte_carlo():
    run_oracle_criterion("pupe", 60.0, "analytic detection tail")


DESK_CONFIG = SimConfig(
    m_v=4,
    m_h=8,
    n=64,
    j_bits=10,
    payload_bits=40,
    k_active=20,
    snr_db=[0.0, 5.0, 10.0, 15.0],
    trials=20,
    master_seed=2024,
    channel_mode="planted",
    normalize_user_energy=True,
    gamp=GampConfig(t_max=40, t_mrf=4),
)


def test_desk_scale_error_rate_trend():
    """20 planted trials per SNR point: total error falls with SNR."""
    start = time.perf_counter()
    seeds = trial_seeds(DESK_CONFIG, 1)[0]  # common seeds across points
    jobs = [
        (DESK_CONFIG, snr, int(seed))
        for snr in DESK_CONFIG.snr_db
        for seed in seeds
    ]
    with ProcessPoolExecutor(max_workers=2) as pool:
        outcomes = list(pool.map(_sweep_cell, jobs))
    per_point = {snr: [] for snr in DESK_CONFIG.snr_db}
    for value, record, error in outcomes:
        assert error is None, f"trial failed: {error}"
        per_point[value].append(record.p_e)
    means = [float(np.mean(per_point[snr])) for snr in DESK_CONFIG.snr_db]
    elapsed = time.perf_counter() - start
    monotone = all(a >= b for a, b in zip(means, means[1:]))
    ok = monotone and means[-1] <= 0.1 and elapsed < 900
    report(
        "desk-scale error trend",
        ok,
        f"mean p_e {np.round(means, 4).tolist()} over snr {DESK_CONFIG.snr_db}, "
        f"{elapsed:.0f}s of 900s",
    )
    assert monotone, f"mean p_e not non-increasing: {means}"
    assert means[-1] <= 0.1, f"p_e at 15 dB too high: {means[-1]}"
    assert elapsed < 900


def test_noiseless_single_codeword_sanity():
    """Exact support and deep estimation accuracy without noise, 50 seeds."""
    start = time.perf_counter()
    geom = UpaGeometry(2, 8)
    config = SimConfig(
        m_v=2, m_h=8, n=64, j_bits=7, payload_bits=7, k_active=1,
        channel_mode="planted", normalize_user_energy=True,
        gamp=GampConfig(t_max=30, t_mrf=3),
    )
    failures = []
    for seed in range(50):
        rng = np.random.default_rng(seed)
        users = draw_user_channels(config, rng)
        index = int(rng.integers(1, 129))
        cb = build_codebook(64, 7, seed=seed + 1000)
        obs = synthesize_slot(cb, [(index, users[0].angular)], 0.0, rng)
        result = run_estimator(obs, cb, geom=geom, config=config.gamp)
        active = result.detection.active_set
        err = np.sum(np.abs(obs.true_signal - result.detection.estimate) ** 2)
        ref = np.sum(np.abs(obs.true_signal) ** 2)
        nmse_db = 10 * np.log10(err / ref) if err > 0 else -np.inf
        if list(active) != [index] or not nmse_db < -30:
            failures.append((seed, list(active), index, nmse_db))
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 120
    report(
        "noiseless sanity",
        ok,
        f"{50 - len(failures)}/50 seeds exact with NMSE < -30 dB, {elapsed:.0f}s of 120s",
    )
    assert not failures, f"failures: {failures[:5]}"
    assert elapsed < 120


def test_collision_resolution_recovers_both_users():
    """Scripted two-user codeword reuse in one slot with disjoint lobes."""
    start = time.perf_counter()
    geom = UpaGeometry(4, 8)
    config = SimConfig(
        m_v=4, m_h=8, n=64, j_bits=6, payload_bits=18, k_active=3,
        channel_mode="planted", normalize_user_energy=True,
    )
    rng = np.random.default_rng(42)
    users = draw_user_channels(config, rng)
    mags = [np.abs(u.angular) for u in users]
    indices = np.array(
        [
            [5, 10, 15],   # user 0: collides with user 1 in slot 0
            [5, 20, 25],   # user 1
            [30, 35, 40],  # user 2
        ]
    )
    merged = np.abs(users[0].angular + users[1].angular)
    noise = 0.01
    slots = [
        SlotChannels(
            codeword_indices=np.array([5, 30]),
            magnitudes=np.abs(
                np.vstack([merged, mags[2]]) + noise * rng.standard_normal((2, geom.m))
            ),
        ),
        SlotChannels(
            codeword_indices=indices[:, 1],
            magnitudes=np.abs(
                np.vstack(mags) + noise * rng.standard_normal((3, geom.m))
            ),
        ),
        SlotChannels(
            codeword_indices=indices[:, 2],
            magnitudes=np.abs(
                np.vstack(mags) + noise * rng.standard_normal((3, geom.m))
            ),
        ),
    ]
    state, partition = run_clustering(slots, zeta=0.95)
    recovered = stitch_messages(partition, config.j_bits, config.payload_bits)
    recovered_ints = [pack_bits(r) for r in recovered]
    sent_ints = [
        pack_bits(assemble_message(indices[k], config.j_bits, config.payload_bits))
        for k in range(3)
    ]
    p_md, p_fa, p_e = error_rates(sent_ints, recovered_ints)
    elapsed = time.perf_counter() - start
    groups_ok = len(partition.groups) == 3
    both_present = set(sent_ints[:2]) <= set(recovered_ints)
    ok = groups_ok and both_present and p_e == 0.0 and elapsed < 120
    report(
        "collision resolution",
        ok,
        f"groups={len(partition.groups)}, both colliders recovered={both_present}, "
        f"p_e={p_e:.3f}, {elapsed:.1f}s of 120s",
    )
    assert groups_ok
    assert both_present, f"sent {sent_ints}, recovered {recovered_ints}"
    assert elapsed < 120


@pytest.mark.full_scale
def test_block_length_trend():
    """Desk-scale sweep over the block length: more measurements, fewer errors."""
    config = SimConfig(
        m_v=4, m_h=8, n=64, j_bits=10, payload_bits=40, k_active=20,
        snr_db=[8.0], trials=10, master_seed=77,
        sweep_axis="n", sweep_values=[48, 64, 80],
        channel_mode="planted", normalize_user_energy=True,
        gamp=GampConfig(t_max=40, t_mrf=4),
    )
    from urasim.pipeline import run_sweep

    cells, _ = run_sweep(config, workers=2)
    means = [cell.means["p_e"] for cell in cells]
    ok = all(a >= b for a, b in zip(means, means[1:]))
    report("block-length trend", ok, f"mean p_e {np.round(means, 4).tolist()} over n {config.sweep_values}")
    assert ok, f"mean p_e not non-increasing in n: {means}"


@pytest.mark.full_scale
def test_full_scale_spot_check():
    """Full-size configuration at 12 dB; excluded from the default gate."""
    start = time.perf_counter()
    config = SimConfig(
        m_v=4,
        m_h=25,
        n=100,
        j_bits=12,
        payload_bits=96,
        k_active=100,
        snr_db=[12.0],
        trials=10,
        master_seed=31,
        channel_mode="planted",
        normalize_user_energy=True,
        gamp=GampConfig(t_max=50, t_mrf=10),
    )
    seeds = trial_seeds(config, 1)[0]
    jobs = [(config, 12.0, int(seed)) for seed in seeds]
    with ProcessPoolExecutor(max_workers=2) as pool:
        outcomes = list(pool.map(_sweep_cell, jobs))
    p_es = [record.p_e for _, record, error in outcomes if error is None]
    mean_pe = float(np.mean(p_es))
    elapsed = time.perf_counter() - start
    ok = len(p_es) == 10 and mean_pe <= 0.1
    report(
        "full-size spot check",
        ok,
        f"mean p_e {mean_pe:.4f} over {len(p_es)} trials, {elapsed:.0f}s",
    )
    assert len(p_es) == 10
    assert mean_pe <= 0.1, f"mean p_e {mean_pe}"
