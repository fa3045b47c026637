"""Independent reference computations for validating the fast paths.

Everything here deliberately avoids the closed forms used by the
production code: posterior moments come from adaptive quadrature,
grid-field beliefs from exhaustive enumeration or a dictionary-based
message-passing reference, assignments from factorial search, and tail
probabilities from Monte-Carlo sampling.  The test suite and the
``oracle`` CLI subcommand both run against these routes.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import integrate

from .channel import UpaGeometry


# ---------------------------------------------------------------------------
# scalar posterior (spike + Laplacian slab) by quadrature


def _slab_density(x, r_hat, r_var, lam):
    gauss = math.exp(-((x - r_hat) ** 2) / (2 * r_var)) / math.sqrt(2 * math.pi * r_var)
    return 0.5 * lam * math.exp(-lam * abs(x)) * gauss


def _half_line_moment(power, lo, hi, r_hat, r_var, lam):
    # integration nodes near the shifted slab centres keep quad honest
    pts = sorted(
        p for p in (r_hat - lam * r_var, r_hat + lam * r_var, r_hat, 0.0) if lo < p < hi
    )
    value, _ = integrate.quad(
        lambda x: x**power * _slab_density(x, r_hat, r_var, lam),
        lo,
        hi,
        points=pts or None,
        limit=400,
        epsabs=1e-14,
        epsrel=1e-11,
    )
    return value


def slab_mass_quadrature(r_hat: float, r_var: float, lam: float) -> float:
    """Integral of the Laplacian-slab times Gaussian product over the real line."""
    big = max(10 * math.sqrt(r_var), abs(r_hat) * 4 + 10, 50 * math.sqrt(r_var))
    return _half_line_moment(0, -big, 0.0, r_hat, r_var, lam) + _half_line_moment(
        0, 0.0, big, r_hat, r_var, lam
    )


def varpi_quadrature(r_hat: float, r_var: float, lam: float) -> float:
    """Activity evidence via direct integration of the two half-line masses."""
    slab = slab_mass_quadrature(r_hat, r_var, lam)
    null = math.exp(-(r_hat**2) / (2 * r_var)) / math.sqrt(2 * math.pi * r_var)
    return slab / (null + slab)


def denoiser_moments_quadrature(
    r_hat: float, r_var: float, rho: float, lam: float
) -> tuple[float, float, float]:
    """Posterior mean, variance, and normalization of the spike/slab mixture."""
    big = max(10 * math.sqrt(r_var), abs(r_hat) * 4 + 10, 50 * math.sqrt(r_var))
    m0 = m1 = m2 = 0.0
    for lo, hi in ((-big, 0.0), (0.0, big)):
        m0 += _half_line_moment(0, lo, hi, r_hat, r_var, lam)
        m1 += _half_line_moment(1, lo, hi, r_hat, r_var, lam)
        m2 += _half_line_moment(2, lo, hi, r_hat, r_var, lam)
    null = math.exp(-(r_hat**2) / (2 * r_var)) / math.sqrt(2 * math.pi * r_var)
    norm = (1 - rho) * null + rho * m0
    mean = rho * m1 / norm
    var = rho * m2 / norm - mean**2
    return mean, var, norm


def slab_abs_moment_quadrature(r_hat: float, r_var: float, rho: float, lam: float) -> float:
    """Posterior expectation of |x| restricted to the slab component."""
    big = max(10 * math.sqrt(r_var), abs(r_hat) * 4 + 10, 50 * math.sqrt(r_var))
    neg = _half_line_moment(1, -big, 0.0, r_hat, r_var, lam)
    pos = _half_line_moment(1, 0.0, big, r_hat, r_var, lam)
    m0 = _half_line_moment(0, -big, 0.0, r_hat, r_var, lam) + _half_line_moment(
        0, 0.0, big, r_hat, r_var, lam
    )
    null = math.exp(-(r_hat**2) / (2 * r_var)) / math.sqrt(2 * math.pi * r_var)
    norm = (1 - rho) * null + rho * m0
    return rho * (pos - neg) / norm


def noise_surrogate_objective(sigma2: float, y: np.ndarray, z_hat: np.ndarray, z_var: np.ndarray) -> float:
    """Expected Gaussian log-likelihood of the observations under N(z_hat, z_var)."""
    expected_sq = (y - z_hat) ** 2 + z_var
    return float(np.sum(-0.5 * np.log(2 * np.pi * sigma2) - expected_sq / (2 * sigma2)))


def golden_section_maximize(fn, lo: float, hi: float, tol: float = 1e-10, iters: int = 200) -> float:
    """Argmax of a unimodal scalar function on [lo, hi]."""
    phi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iters):
        if b - a < tol * (abs(a) + abs(b)):
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


# ---------------------------------------------------------------------------
# grid-field references


def _node_grid(geom: UpaGeometry):
    """Column-major node ids and the undirected neighbour lists of the grid."""
    neighbors: list[list[int]] = [[] for _ in range(geom.m)]
    for m in range(geom.m):
        row, col = m % geom.m_v, m // geom.m_v
        if col > 0:
            neighbors[m].append(m - geom.m_v)
        if col < geom.m_h - 1:
            neighbors[m].append(m + geom.m_v)
        if row > 0:
            neighbors[m].append(m - 1)
        if row < geom.m_v - 1:
            neighbors[m].append(m + 1)
    return neighbors


def ising_exact_beliefs(
    w_re: np.ndarray, w_im: np.ndarray, geom: UpaGeometry, alpha: float, beta: float
) -> np.ndarray:
    """Exact cavity marginals of the evidence-weighted grid Ising field.

    Enumerates all 2^M support configurations.  Entry (0, m) is the
    probability that bin m is active when node m carries only the
    imaginary-half evidence (the real half's own factor is excluded);
    entry (1, m) swaps the roles.  Feasible for M <= ~16.
    """
    m_total = geom.m
    if m_total > 16:
        raise ValueError("exhaustive enumeration limited to 16 grid nodes")
    neighbors = _node_grid(geom)
    edges = [(m, k) for m in range(m_total) for k in neighbors[m] if k > m]
    out = np.zeros((2, m_total))
    for half, partner in ((0, w_im), (1, w_re)):
        for target in range(m_total):
            num = den = 0.0
            for cfg in itertools.product((1, -1), repeat=m_total):
                weight = 1.0
                for m in range(m_total):
                    if m == target:
                        ev = partner[m] if cfg[m] == 1 else 1 - partner[m]
                    else:
                        ev = w_re[m] * w_im[m] if cfg[m] == 1 else (1 - w_re[m]) * (1 - w_im[m])
                    weight *= ev * math.exp(-alpha * cfg[m])
                for a, b in edges:
                    weight *= math.exp(beta * cfg[a] * cfg[b])
                den += weight
                if cfg[target] == 1:
                    num += weight
            out[half, target] = num / den
    return out


def ising_sum_product_reference(
    w_re: np.ndarray,
    w_im: np.ndarray,
    geom: UpaGeometry,
    alpha: float,
    beta: float,
    rounds: int,
) -> np.ndarray:
    """Plain dictionary-based synchronous sum-product on the grid field.

    Messages are explicit two-state tables updated by summing the pairwise
    coupling over both neighbour states; no algebraic simplification of
    the update is used, so this is an independent check of the closed-form
    production pass.  Returns the same (2, M) cavity-belief layout as
    :func:`ising_exact_beliefs`.
    """
    neighbors = _node_grid(geom)
    msgs = {(n, m): np.array([0.5, 0.5]) for m in range(geom.m) for n in neighbors[m]}
    node_pot = {
        m: np.array(
            [
                w_re[m] * w_im[m] * math.exp(-alpha),
                (1 - w_re[m]) * (1 - w_im[m]) * math.exp(alpha),
            ]
        )
        for m in range(geom.m)
    }
    pair = np.array([[math.exp(beta), math.exp(-beta)], [math.exp(-beta), math.exp(beta)]])
    for _ in range(rounds):
        new = {}
        for (n, m) in msgs:
            incoming = node_pot[n].copy()
            for k in neighbors[n]:
                if k != m:
                    incoming = incoming * msgs[(k, n)]
            outgoing = pair @ incoming
            new[(n, m)] = outgoing / outgoing.sum()
        msgs = new
    out = np.zeros((2, geom.m))
    for half, partner in ((0, w_im), (1, w_re)):
        for m in range(geom.m):
            belief = np.array(
                [partner[m] * math.exp(-alpha), (1 - partner[m]) * math.exp(alpha)]
            )
            for n in neighbors[m]:
                belief = belief * msgs[(n, m)]
            out[half, m] = belief[0] / belief.sum()
    return out


# ---------------------------------------------------------------------------
# assignment and tail references


def brute_force_assignment(cost: np.ndarray) -> tuple[float, tuple[int, ...]]:
    """Minimum-cost perfect matching by factorial enumeration (K <= ~8)."""
    cost = np.asarray(cost, dtype=float)
    k = cost.shape[0]
    best_cost, best_perm = math.inf, None
    for perm in itertools.permutations(range(k)):
        value = sum(cost[i, perm[i]] for i in range(k))
        if value < best_cost:
            best_cost, best_perm = value, perm
    return best_cost, best_perm


def chi_square_tail_monte_carlo(
    m: int, threshold: float, varrho2: float, samples: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Empirical P(||x||^2 > threshold) for x ~ CN(0, varrho2 I_m).

    The squared norm is varrho2/2 times a chi-square with 2m degrees of
    freedom.  Returns the estimate and its standard error.
    """
    draws = rng.chisquare(2 * m, size=samples) * (varrho2 / 2)
    hits = draws > threshold
    p = float(np.mean(hits))
    se = math.sqrt(max(p * (1 - p), 1e-12) / samples)
    return p, se


def _beam_magnitudes(omega: float, m: int) -> np.ndarray:
    """|inner product| of a plane wave with every DFT beam, by direct summation."""
    i = np.arange(m)
    wave = np.exp(-2j * np.pi * omega * i) / math.sqrt(m)
    beams = np.exp(-2j * np.pi * np.outer(i, i / m)) / math.sqrt(m)
    return np.abs(beams.conj().T @ wave)


def steering_peak_scan(elevation: float, azimuth: float, geom: UpaGeometry) -> int:
    """0-based argmax of a single ray's angular response, by exhaustive scan.

    Rebuilt from the plane-wave definition (independent of the channel
    module): the separable response peaks where the per-axis beam inner
    products both peak, and the column-major flat index combines them.
    """
    omega_v = geom.delta * math.cos(elevation)
    omega_h = geom.delta * math.sin(elevation) * math.cos(azimuth)
    mag_v = _beam_magnitudes(omega_v, geom.m_v)
    mag_h = _beam_magnitudes(omega_h, geom.m_h)
    magnitudes = np.kron(mag_h, mag_v)  # |a x b| factorizes for rank-1 responses
    return int(np.argmax(magnitudes))
