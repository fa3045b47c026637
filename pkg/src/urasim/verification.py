"""Oracle-equivalence checks for the numerical core.

Each check pits a closed-form production path against an independent
reference route (adaptive quadrature, exhaustive enumeration, factorial
search, or Monte-Carlo sampling) at a fixed tolerance.  The ``oracle``
CLI subcommand prints one line per check; the acceptance test suite
asserts on the same results.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import gamp, metrics, mrf, oracles
from .channel import UpaGeometry, angular_transform_matrix, peak_support_predicate
from .clustering import hungarian_solve


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    runtime_s: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"[{status}] {self.name}: worst {self.worst:.3e} vs tol {self.tolerance:.1e}"
            f" ({self.runtime_s:.2f}s){' ' + self.detail if self.detail else ''}"
        )


def check_denoiser_oracle() -> CheckResult:
    """Closed-form posterior moments vs quadrature over a 351-point grid."""
    start = time.perf_counter()
    tol = 1e-6
    worst = 0.0
    grid_r = np.linspace(-3, 3, 13)
    count = 0
    for r in grid_r:
        for mu in (0.1, 1.0, 10.0):
            for rho in (0.1, 0.5, 0.9):
                for lam in (0.5, 1.0, 2.0):
                    mom = gamp.denoise_laplacian(
                        np.array([r]), np.array([mu]), np.array([rho]), lam
                    )
                    mean_q, var_q, _ = oracles.denoiser_moments_quadrature(r, mu, rho, lam)
                    worst = max(
                        worst,
                        abs(mom.mean[0] - mean_q) / max(abs(mean_q), 1e-12),
                        abs(mom.var[0] - var_q) / max(abs(var_q), 1e-12),
                    )
                    count += 1
    return CheckResult(
        "denoiser moments vs quadrature",
        worst <= tol,
        worst,
        tol,
        time.perf_counter() - start,
        detail=f"{count} grid points",
    )


def check_varpi_oracle() -> CheckResult:
    """Log-domain activity evidence vs quadrature, including huge rate*variance."""
    start = time.perf_counter()
    tol = 1e-8
    worst = 0.0
    cases = [
        (r, mu, lam)
        for r in (-5.0, -2.0, -0.5, 0.0, 0.5, 2.0, 5.0)
        for mu in (0.1, 1.0, 10.0)
        for lam in (0.5, 1.0, 2.0, 10.0)
    ]
    for r, mu, lam in cases:
        value = float(gamp.compute_varpi(np.array([r]), np.array([mu]), lam)[0])
        # float64 rounds the extreme points to exactly 0 or 1; only a
        # non-finite value or a range violation indicates overflow
        if not np.isfinite(value) or not (0 <= value <= 1):
            return CheckResult(
                "activity evidence vs quadrature",
                False,
                math.inf,
                tol,
                time.perf_counter() - start,
                detail=f"non-finite at {(r, mu, lam)}",
            )
        worst = max(worst, abs(value - oracles.varpi_quadrature(r, mu, lam)))
    stress = float(gamp.compute_varpi(np.array([0.0]), np.array([10.0]), 10.0)[0])
    if not (0 < stress < 1):
        return CheckResult(
            "activity evidence vs quadrature",
            False,
            math.inf,
            tol,
            time.perf_counter() - start,
            detail="rate^2*var = 1e3 stress point not interior",
        )
    return CheckResult(
        "activity evidence vs quadrature",
        worst <= tol,
        worst,
        tol,
        time.perf_counter() - start,
        detail=f"{len(cases)} points, rate^2*var up to 1e3",
    )


def check_em_stationarity() -> CheckResult:
    """Both parameter updates zero their surrogate derivatives on random data."""
    start = time.perf_counter()
    tol = 1e-6
    argmax_tol = 1e-4
    rng = np.random.default_rng(7)
    worst = 0.0
    worst_argmax = 0.0
    for _ in range(20):
        # noise-variance update
        y = rng.standard_normal((6, 4))
        z_hat = y + 0.3 * rng.standard_normal((6, 4))
        z_var = rng.uniform(0.05, 0.5, (6, 4))
        s2 = gamp.em_update_sigma2(y, z_hat, z_var)
        expected_sq = (y - z_hat) ** 2 + z_var
        worst = max(worst, abs(expected_sq.sum() - y.size * s2) / (y.size * s2))
        argmax = oracles.golden_section_maximize(
            lambda s: oracles.noise_surrogate_objective(s, y, z_hat, z_var),
            s2 / 20,
            s2 * 20,
        )
        worst_argmax = max(worst_argmax, abs(argmax - s2) / s2)

        # rate update
        r_hat = rng.normal(0, 1.5, 24)
        r_var = rng.uniform(0.2, 2.0, 24)
        rho = rng.uniform(0.05, 0.95, 24)
        lam_old = rng.uniform(0.5, 2.0)
        mom = gamp.denoise_laplacian(r_hat, r_var, rho, lam_old)
        lam_new = gamp.em_update_lambda(rho, mom, lam_old)
        slab_abs = sum(
            oracles.slab_abs_moment_quadrature(r, v, p, lam_old)
            for r, v, p in zip(r_hat, r_var, rho)
        )
        derivative = rho.sum() / lam_new - slab_abs
        worst = max(worst, abs(derivative) / (rho.sum() / lam_new))
    passed = worst <= tol and worst_argmax <= argmax_tol
    return CheckResult(
        "parameter updates are stationary points",
        passed,
        worst,
        tol,
        time.perf_counter() - start,
        detail=f"20 random instances each; argmax worst {worst_argmax:.2e} (tol {argmax_tol:.0e})",
    )


def check_mrf_exactness() -> CheckResult:
    """Grid pass vs exact chain marginals and an independent 2x2 reference."""
    start = time.perf_counter()
    rng = np.random.default_rng(11)
    chain_tol, grid_tol = 1e-8, 1e-6
    worst_chain = 0.0
    for m in range(2, 11):
        geom = UpaGeometry(1, m)
        w_re = rng.uniform(0.05, 0.95, m)
        w_im = rng.uniform(0.05, 0.95, m)
        rho, _ = mrf.mrf_pass(np.vstack([w_re, w_im]), geom, 0.4, 0.4, t_mrf=m + 10)
        exact = oracles.ising_exact_beliefs(w_re, w_im, geom, 0.4, 0.4)
        worst_chain = max(worst_chain, float(np.abs(rho - exact).max()))
    worst_grid = 0.0
    geom = UpaGeometry(2, 2)
    for beta in (0.2, 0.4, 0.8):
        w_re = rng.uniform(0.05, 0.95, 4)
        w_im = rng.uniform(0.05, 0.95, 4)
        rho, _ = mrf.mrf_pass(np.vstack([w_re, w_im]), geom, 0.4, beta, t_mrf=300)
        ref = oracles.ising_sum_product_reference(w_re, w_im, geom, 0.4, beta, rounds=300)
        worst_grid = max(worst_grid, float(np.abs(rho - ref).max()))
    passed = worst_chain <= chain_tol and worst_grid <= grid_tol
    return CheckResult(
        "grid support pass vs enumeration references",
        passed,
        max(worst_chain, worst_grid),
        grid_tol,
        time.perf_counter() - start,
        detail=f"chains worst {worst_chain:.2e} (tol {chain_tol:.0e}), 2x2 worst {worst_grid:.2e}",
    )


def check_hungarian_exactness() -> CheckResult:
    """Assignment solver vs factorial search on 500 random matrices."""
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    worst = 0.0
    for trial in range(500):
        k = 2 + trial % 6
        cost = rng.uniform(0, 10, (k, k))
        perm, _ = hungarian_solve(cost)
        solver_cost = float(sum(cost[i, perm[i]] for i in range(k)))
        brute_cost, _ = oracles.brute_force_assignment(cost)
        worst = max(worst, abs(solver_cost - brute_cost))
    return CheckResult(
        "assignment solver vs factorial search",
        worst == 0.0,
        worst,
        0.0,
        time.perf_counter() - start,
        detail="500 matrices, sizes 2..7",
    )


def check_channel_oracle() -> CheckResult:
    """Basis unitarity up to 256 antennas and peak-bin predicate vs scan."""
    start = time.perf_counter()
    unitary_tol = 1e-10
    worst_unitary = 0.0
    for mv, mh in ((1, 1), (2, 1), (2, 2), (3, 5), (4, 25), (16, 16)):
        u = angular_transform_matrix(UpaGeometry(mv, mh))
        gram = u.conj().T @ u
        worst_unitary = max(
            worst_unitary, float(np.abs(gram - np.eye(mv * mh)).max())
        )
    rng = np.random.default_rng(3)
    geom = UpaGeometry(4, 25)
    mismatches = 0
    for _ in range(1000):
        el = rng.uniform(-np.pi / 2, np.pi / 2)
        az = rng.uniform(-np.pi / 2, np.pi / 2)
        mv, mh = peak_support_predicate(el, az, geom)
        flat = (mh - 1) * geom.m_v + (mv - 1)
        if flat != oracles.steering_peak_scan(el, az, geom):
            mismatches += 1
    passed = worst_unitary <= unitary_tol and mismatches == 0
    return CheckResult(
        "angular basis unitarity and peak predicate",
        passed,
        worst_unitary,
        unitary_tol,
        time.perf_counter() - start,
        detail=f"{mismatches} predicate mismatches over 1000 angles",
    )


def check_pupe_oracle() -> CheckResult:
    """Analytic detection tail vs chi-square Monte Carlo, decreasing in M."""
    start = time.perf_counter()
    rng = np.random.default_rng(17)
    varrho2 = 1.7
    samples = 10**6
    values = []
    worst_sigma = 0.0
    for m in (8, 16, 32, 64, 128):
        upsilon = 2 * m * varrho2
        analytic = metrics.pupe_analytic(m, upsilon, varrho2)
        mc, _ = oracles.chi_square_tail_monte_carlo(m, upsilon, varrho2, samples, rng)
        # standard error under the analytic probability; the empirical one
        # degenerates when the tail catches no samples
        se = math.sqrt(max(analytic * (1 - analytic), 1e-300) / samples)
        worst_sigma = max(worst_sigma, abs(analytic - mc) / se)
        values.append(analytic)
    decreasing = all(a > b for a, b in zip(values, values[1:]))
    return CheckResult(
        "analytic detection tail vs Monte Carlo",
        worst_sigma <= 3.0 and decreasing,
        worst_sigma,
        3.0,
        time.perf_counter() - start,
        detail=f"worst deviation {worst_sigma:.2f} standard errors; decreasing={decreasing}",
    )


ALL_CHECKS = {
    "denoiser": check_denoiser_oracle,
    "varpi": check_varpi_oracle,
    "em": check_em_stationarity,
    "mrf": check_mrf_exactness,
    "hungarian": check_hungarian_exactness,
    "channel": check_channel_oracle,
    "pupe": check_pupe_oracle,
}


def run_checks(names: list[str] | None = None) -> list[CheckResult]:
    selected = names or list(ALL_CHECKS)
    return [ALL_CHECKS[name]() for name in selected]
