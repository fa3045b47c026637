"""Angular-domain channel synthesis for a uniform planar array (UPA).

Spatial channels are sums of plane-wave rays impinging on an M_v x M_h
half-wavelength array.  The angular representation is obtained with the
2-D DFT beamforming basis, under which few-scatterer channels become
clustered-sparse.  All randomness flows through explicit numpy
Generators so realizations are reproducible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError

DEG = np.pi / 180.0

# defaults for the parametric scatterer model
DEFAULT_AZIMUTH_SPREAD = 7.0 * DEG
DEFAULT_ELEVATION_SPREAD = 19.0 * DEG
DEFAULT_ACTIVATION_PROB = 0.5
DEFAULT_SUBPATHS = 10


@dataclass(frozen=True)
class UpaGeometry:
    """Uniform planar array with m_v vertical and m_h horizontal elements.

    ``delta`` is the element spacing over the carrier wavelength; the
    usual half-wavelength array has delta = 0.5.
    """

    m_v: int
    m_h: int
    delta: float = 0.5

    def __post_init__(self):
        if self.m_v < 1 or self.m_h < 1:
            raise ParameterError(f"antenna counts must be >= 1, got {self.m_v}x{self.m_h}")
        if self.delta <= 0:
            raise ParameterError(f"antenna spacing ratio must be positive, got {self.delta}")

    @property
    def m(self) -> int:
        return self.m_v * self.m_h


@dataclass(frozen=True)
class Scatterer:
    """One scattering cluster: mean arrival angles plus per-axis spreads."""

    elevation_mean: float
    azimuth_mean: float
    elevation_spread: float = DEFAULT_ELEVATION_SPREAD
    azimuth_spread: float = DEFAULT_AZIMUTH_SPREAD
    mean_power: float = 1.0

    def __post_init__(self):
        if self.elevation_spread <= 0 or self.azimuth_spread <= 0:
            raise ParameterError("angular spreads must be positive")
        if self.mean_power <= 0:
            raise ParameterError("mean_power must be positive")


@dataclass
class UserChannel:
    """Spatial and angular channel vectors of one user plus ray ground truth."""

    spatial: np.ndarray          # complex, length M
    angular: np.ndarray          # complex, length M
    path_gains: np.ndarray       # complex, length L
    path_angles: np.ndarray      # float, L x 2 rows of (elevation, azimuth)
    effective_scatterers: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))

    @property
    def path_count(self) -> int:
        return len(self.path_gains)


def steering_vector(omega: float, m: int) -> np.ndarray:
    """Unit-norm array response at normalized spatial frequency ``omega``.

    Element i carries phase exp(-j 2 pi i omega); the vector is scaled by
    1/sqrt(m) so its Euclidean norm is exactly one.
    """
    if m < 1:
        raise DimensionError(f"antenna count must be >= 1, got {m}")
    phases = -2j * np.pi * omega * np.arange(m)
    return np.exp(phases) / np.sqrt(m)


def dft_steering_matrix(m: int) -> np.ndarray:
    """m x m matrix whose columns are steering vectors on the DFT grid k/m."""
    if m < 1:
        raise DimensionError(f"antenna count must be >= 1, got {m}")
    grid = np.arange(m) / m
    return np.exp(-2j * np.pi * np.outer(np.arange(m), grid)) / np.sqrt(m)


def angular_transform_matrix(geom: UpaGeometry) -> np.ndarray:
    """Unitary spatial-to-angular basis: Kronecker of the two DFT matrices.

    The horizontal factor comes first so the column-major antenna index
    m = col*m_v + row matches the steering Kronecker order used in
    :func:`synthesize_user_channel`.
    """
    u_v = dft_steering_matrix(geom.m_v)
    u_h = dft_steering_matrix(geom.m_h)
    return np.kron(u_h, u_v)


def generate_scatterers(
    count: int,
    rng: np.random.Generator,
    elevation_spread: float = DEFAULT_ELEVATION_SPREAD,
    azimuth_spread: float = DEFAULT_AZIMUTH_SPREAD,
    sector: tuple[float, float] = (-np.pi / 2, np.pi / 2),
) -> list[Scatterer]:
    """Draw ``count`` scatterers with mean angles uniform over the sector."""
    if count < 1:
        raise ParameterError(f"scatterer count must be >= 1, got {count}")
    lo, hi = sector
    elevations = rng.uniform(lo, hi, size=count)
    azimuths = rng.uniform(lo, hi, size=count)
    return [
        Scatterer(
            elevation_mean=float(el),
            azimuth_mean=float(az),
            elevation_spread=elevation_spread,
            azimuth_spread=azimuth_spread,
        )
        for el, az in zip(elevations, azimuths)
    ]


def spatial_frequencies(elevation: float, azimuth: float, geom: UpaGeometry) -> tuple[float, float]:
    """Vertical/horizontal normalized frequencies for one arrival direction."""
    omega_v = geom.delta * np.cos(elevation)
    omega_h = geom.delta * np.sin(elevation) * np.cos(azimuth)
    return omega_v, omega_h


def ray_response(elevation: float, azimuth: float, geom: UpaGeometry) -> np.ndarray:
    """Spatial response of a single ray: e_h(omega_h) kron e_v(omega_v)."""
    omega_v, omega_h = spatial_frequencies(elevation, azimuth, geom)
    return np.kron(steering_vector(omega_h, geom.m_h), steering_vector(omega_v, geom.m_v))


def synthesize_user_channel(
    scatterers: list[Scatterer],
    geom: UpaGeometry,
    rng: np.random.Generator,
    activation_probability: float = DEFAULT_ACTIVATION_PROB,
    subpaths_per_scatterer: int = DEFAULT_SUBPATHS,
    transform: np.ndarray | None = None,
) -> UserChannel:
    """Draw one user's channel from the parametric scatterer model.

    Each scatterer is effective with ``activation_probability`` (resampled
    until at least one is).  An effective scatterer contributes
    ``subpaths_per_scatterer`` rays whose angles are the scatterer mean
    plus Laplacian perturbations scaled so the standard deviation equals
    the configured spread; ray gains are i.i.d. complex Gaussian with the
    scatterer power split evenly across its rays.

    Passing a precomputed ``transform`` (the angular basis) avoids
    rebuilding the M x M matrix per user.
    """
    if not scatterers:
        raise ParameterError("at least one scatterer is required")
    if subpaths_per_scatterer < 1:
        raise ParameterError("subpaths_per_scatterer must be >= 1")

    active = np.zeros(len(scatterers), dtype=bool)
    while not active.any():
        active = rng.random(len(scatterers)) < activation_probability

    gains = []
    angles = []
    spatial = np.zeros(geom.m, dtype=complex)
    for idx in np.flatnonzero(active):
        sc = scatterers[idx]
        # Laplace scale b gives std b*sqrt(2); divide by sqrt(2) to hit the spread.
        els = sc.elevation_mean + rng.laplace(0.0, sc.elevation_spread / np.sqrt(2), subpaths_per_scatterer)
        azs = sc.azimuth_mean + rng.laplace(0.0, sc.azimuth_spread / np.sqrt(2), subpaths_per_scatterer)
        els = np.clip(els, -np.pi / 2, np.pi / 2)
        azs = np.clip(azs, -np.pi / 2, np.pi / 2)
        sigma = np.sqrt(sc.mean_power / subpaths_per_scatterer)
        g = sigma * (rng.standard_normal(subpaths_per_scatterer)
                     + 1j * rng.standard_normal(subpaths_per_scatterer)) / np.sqrt(2)
        for ray in range(subpaths_per_scatterer):
            spatial += g[ray] * ray_response(els[ray], azs[ray], geom)
            gains.append(g[ray])
            angles.append((els[ray], azs[ray]))

    if transform is None:
        transform = angular_transform_matrix(geom)
    angular = transform.conj().T @ spatial
    return UserChannel(
        spatial=spatial,
        angular=angular,
        path_gains=np.asarray(gains),
        path_angles=np.asarray(angles),
        effective_scatterers=np.flatnonzero(active),
    )


def peak_support_predicate(elevation: float, azimuth: float, geom: UpaGeometry) -> tuple[int, int]:
    """1-based angular-grid bin pair where a single ray's energy peaks.

    The vertical frequency delta*cos(elevation) and horizontal frequency
    delta*sin(elevation)*cos(azimuth) are snapped to the nearest DFT bin
    on the unit frequency circle (bins are periodic mod 1).
    """
    half = np.pi / 2
    if not (-half <= elevation <= half) or not (-half <= azimuth <= half):
        raise ParameterError("arrival angles must lie in [-pi/2, pi/2]")
    omega_v, omega_h = spatial_frequencies(elevation, azimuth, geom)

    def nearest_bin(omega: float, m: int) -> int:
        grid = np.arange(m) / m
        resid = np.abs((omega - grid + 0.5) % 1.0 - 0.5)
        return int(np.argmin(resid)) + 1

    return nearest_bin(omega_v, geom.m_v), nearest_bin(omega_h, geom.m_h)


def peak_flat_index(elevation: float, azimuth: float, geom: UpaGeometry) -> int:
    """0-based index into the vectorized angular channel for the peak bin."""
    mv, mh = peak_support_predicate(elevation, azimuth, geom)
    return (mh - 1) * geom.m_v + (mv - 1)


def export_channels_csv(path, channels: list[UserChannel]) -> None:
    """Dump channel realizations (ids, vectors, ray table) for cross-checks."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user", "kind", "values"])
        for uid, ch in enumerate(channels):
            spatial = " ".join(repr(float(v)) for v in ch.spatial.view(float))
            angular = " ".join(repr(float(v)) for v in ch.angular.view(float))
            writer.writerow([uid, "spatial_re_im", spatial])
            writer.writerow([uid, "angular_re_im", angular])
            for (el, az), g in zip(ch.path_angles, ch.path_gains):
                writer.writerow(
                    [uid, "ray", f"{float(el)!r} {float(az)!r} {float(g.real)!r} {float(g.imag)!r}"]
                )


def load_channels_csv(path) -> list[UserChannel]:
    """Inverse of :func:`export_channels_csv` (vectors and ray table only)."""
    by_user: dict[int, dict] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for uid_s, kind, values in reader:
            entry = by_user.setdefault(int(uid_s), {"rays": []})
            if kind == "ray":
                entry["rays"].append([float(v) for v in values.split()])
            else:
                flat = np.array([float(v) for v in values.split()])
                entry[kind] = flat.view(complex)
    channels = []
    for uid in sorted(by_user):
        entry = by_user[uid]
        rays = np.asarray(entry["rays"])
        channels.append(
            UserChannel(
                spatial=entry["spatial_re_im"],
                angular=entry["angular_re_im"],
                path_gains=rays[:, 2] + 1j * rays[:, 3],
                path_angles=rays[:, :2],
            )
        )
    return channels
