"""End-to-end trial and sweep orchestration.

One trial: draw user channels and payloads, encode every slot with the
shared codebook, pass each noisy slot through the message-passing
detector, stitch the recovered per-slot channels back into messages with
the balanced clustering decoder, and score the list.  Everything is a
pure function of (config, seed); per-purpose random streams are spawned
from one seed sequence so slot decoding order cannot change results.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import channel as chan
from . import clustering, codec, gamp, metrics
from .errors import ClusteringError, ParameterError

DEG = chan.DEG


@dataclass
class SimConfig:
    """Full experiment description (defaults mirror the reference setup)."""

    # array and code
    m_v: int = 4
    m_h: int = 25
    n: int = 100
    j_bits: int = 12
    payload_bits: int = 96
    k_active: int = 100
    # experiment axes
    snr_db: list = field(default_factory=lambda: [10.0])
    trials: int = 1
    master_seed: int = 0
    redraw_codebook: bool = True
    sweep_axis: str = "snr_db"            # snr_db | n | m_h
    sweep_values: list | None = None
    # detector
    gamp: gamp.GampConfig = field(default_factory=gamp.GampConfig)
    # clustering decoder
    t_c: int = 50
    zeta: float = 0.95
    cluster_init: str = "first-full"
    # channel model
    channel_mode: str = "shared"          # shared | planted
    scatterer_count: int = 16
    activation_probability: float = 0.5
    subpaths_per_scatterer: int = 10
    elevation_spread_deg: float = 19.0
    azimuth_spread_deg: float = 7.0
    planted_scatterers_per_user: int = 1
    normalize_user_energy: bool = False
    collect_trace: bool = False

    def __post_init__(self):
        if isinstance(self.gamp, dict):
            self.gamp = gamp.GampConfig(**self.gamp)
        for name in ("m_v", "m_h", "n", "j_bits", "payload_bits", "k_active", "trials", "t_c"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1")
        if not (0 < self.zeta < 1):
            raise ParameterError("zeta must lie in (0, 1)")
        if self.gamp.tol <= 0:
            raise ParameterError("gamp.tol must be positive")
        if self.channel_mode not in ("shared", "planted"):
            raise ParameterError(f"unknown channel_mode {self.channel_mode!r}")
        if self.sweep_axis not in ("snr_db", "n", "m_h"):
            raise ParameterError(f"unknown sweep_axis {self.sweep_axis!r}")

    @property
    def geometry(self) -> chan.UpaGeometry:
        return chan.UpaGeometry(self.m_v, self.m_h)

    @property
    def num_slots(self) -> int:
        return -(-self.payload_bits // self.j_bits)

    @property
    def spectral_efficiency(self) -> float:
        return self.payload_bits * self.k_active / (self.num_slots * self.n)

    def snapshot(self) -> dict:
        return asdict(self)


@dataclass
class TrialDetail:
    """Side artefacts of one trial for forensics and tests."""

    channels: list
    message_set: codec.MessageSet
    observations: list
    detections: list
    slot_channels: list
    partition: clustering.Partition | None
    recovered_bits: np.ndarray | None
    traces: list


def _planted_targets(k_users: int, geom: chan.UpaGeometry) -> np.ndarray:
    """k well-spread (vertical, horizontal) frequency targets on the array disc.

    A single arrival direction reaches normalized frequencies on the
    quarter disc omega_v^2 + omega_h^2 <= delta^2 with omega_v >= 0.
    Candidates are laid on a half-bin grid inside that region and picked
    greedily to maximize the minimum pairwise distance (horizontal wrap
    respected), so users occupy the most separated resolvable beams.
    """
    delta = geom.delta
    cands = []
    for iv in range(2 * geom.m_v):
        ov = iv / (2 * geom.m_v)
        if ov > delta:
            continue
        for ih in range(2 * geom.m_h):
            oh = ih / (2 * geom.m_h)
            if oh >= 0.5:
                oh -= 1.0
            if ov**2 + oh**2 <= delta**2:
                cands.append((ov, oh))
    cands = np.array(cands)

    def dist(a, b):
        dv = a[0] - b[0]
        dh = (a[1] - b[1] + 0.5) % 1.0 - 0.5
        return math.hypot(dv, dh)

    center = cands.mean(axis=0)
    first = int(np.argmax([dist(c, center) for c in cands]))
    chosen = [first]
    min_d = np.array([dist(c, cands[first]) for c in cands])
    while len(chosen) < min(k_users, len(cands)):
        nxt = int(np.argmax(min_d))
        chosen.append(nxt)
        min_d = np.minimum(min_d, [dist(c, cands[nxt]) for c in cands])
    targets = [cands[i] for i in chosen]
    while len(targets) < k_users:  # more users than resolvable cells: reuse
        targets.append(targets[len(targets) % len(chosen)])
    return np.array(targets[:k_users])


def planted_scatterers(
    k_users: int,
    geom: chan.UpaGeometry,
    rng: np.random.Generator,
    elevation_spread: float,
    azimuth_spread: float,
    per_user: int = 1,
) -> list[list[chan.Scatterer]]:
    """Per-user private scatterers with well-separated angular signatures."""
    targets = _planted_targets(k_users, geom)
    delta = geom.delta
    jit_v = 1.0 / (8 * geom.m_v)
    jit_h = 1.0 / (8 * geom.m_h)
    out = []
    for ov, oh in targets:
        group = []
        for _ in range(per_user):
            c = (ov + rng.uniform(-jit_v, jit_v)) / delta
            c = float(np.clip(c, 0.02, 0.98))
            h = (oh + rng.uniform(-jit_h, jit_h)) / delta
            sin_el = math.sqrt(1 - c * c)
            h = float(np.clip(h, -0.99 * sin_el, 0.99 * sin_el))
            elevation = math.copysign(math.acos(c), h if h != 0 else 1.0)
            azimuth = math.acos(abs(h) / sin_el)
            group.append(
                chan.Scatterer(
                    elevation_mean=elevation,
                    azimuth_mean=azimuth,
                    elevation_spread=elevation_spread,
                    azimuth_spread=azimuth_spread,
                )
            )
        out.append(group)
    return out


def draw_user_channels(
    config: SimConfig, rng: np.random.Generator
) -> list[chan.UserChannel]:
    """All users' angular channels for one frame (constant across slots)."""
    geom = config.geometry
    transform = chan.angular_transform_matrix(geom)
    el_spread = config.elevation_spread_deg * DEG
    az_spread = config.azimuth_spread_deg * DEG
    users = []
    if config.channel_mode == "shared":
        scatterers = chan.generate_scatterers(
            config.scatterer_count, rng, elevation_spread=el_spread, azimuth_spread=az_spread
        )
        for _ in range(config.k_active):
            users.append(
                chan.synthesize_user_channel(
                    scatterers,
                    geom,
                    rng,
                    activation_probability=config.activation_probability,
                    subpaths_per_scatterer=config.subpaths_per_scatterer,
                    transform=transform,
                )
            )
    else:
        groups = planted_scatterers(
            config.k_active,
            geom,
            rng,
            elevation_spread=el_spread,
            azimuth_spread=az_spread,
            per_user=config.planted_scatterers_per_user,
        )
        for group in groups:
            users.append(
                chan.synthesize_user_channel(
                    group,
                    geom,
                    rng,
                    activation_probability=1.0,
                    subpaths_per_scatterer=config.subpaths_per_scatterer,
                    transform=transform,
                )
            )
    if config.normalize_user_energy:
        # pinned per-user energy: keeps collision row sums dominant and
        # removes small-scale energy fading from planted scenarios
        for user in users:
            scale = np.linalg.norm(user.spatial)
            if scale > 0:
                user.spatial = user.spatial / scale
                user.angular = user.angular / scale
                user.path_gains = user.path_gains / scale
    return users


def run_trial(
    config: SimConfig, snr_db: float, trial_seed: int, detail: bool = False
) -> metrics.TrialRecord | tuple[metrics.TrialRecord, TrialDetail]:
    """One seeded end-to-end trial at a fixed SNR point."""
    start = time.perf_counter()
    seq = np.random.SeedSequence(trial_seed)
    ss_channel, ss_payload, ss_codebook, ss_noise = seq.spawn(4)
    rng_channel = np.random.default_rng(ss_channel)
    rng_payload = np.random.default_rng(ss_payload)

    geom = config.geometry
    users = draw_user_channels(config, rng_channel)
    message_set = codec.random_message_set(
        config.k_active, config.payload_bits, config.j_bits, rng_payload
    )

    if config.redraw_codebook:
        cb_seed = int(ss_codebook.generate_state(1)[0])
    else:
        cb_seed = int(np.random.SeedSequence(config.master_seed).generate_state(1)[0])
    codebook = codec.build_codebook(config.n, config.j_bits, cb_seed)

    num_slots = config.num_slots
    slot_users = [
        [(int(message_set.codeword_indices[k, s]), users[k].angular) for k in range(config.k_active)]
        for s in range(num_slots)
    ]
    true_rows = [codec.signal_rows(codebook, slot_users[s]) for s in range(num_slots)]
    signal_energy = float(np.mean([np.sum(np.abs(x) ** 2) for x in true_rows]))
    snr_linear = 10 ** (snr_db / 10)
    sigma2 = codec.solve_noise_variance(signal_energy, config.n, geom.m, snr_linear)

    noise_rngs = [np.random.default_rng(s) for s in ss_noise.spawn(num_slots)]
    observations = []
    detections = []
    slot_channels = []
    nmse_slots = []
    traces = []
    for s in range(num_slots):
        obs = codec.synthesize_slot(codebook, slot_users[s], sigma2, noise_rngs[s])
        result = gamp.run_estimator(
            obs,
            codebook,
            geom=geom,
            config=config.gamp,
            truth=true_rows[s] if config.collect_trace else None,
            collect_trace=config.collect_trace,
        )
        det = result.detection
        active = det.active_set
        if active.size:
            truth_sel = true_rows[s][active - 1]
            est_sel = det.estimate[active - 1]
            if np.any(truth_sel):
                nmse_slots.append(metrics.nmse(truth_sel, est_sel))
            else:
                nmse_slots.append(float("nan"))
            slot_channels.append(
                clustering.SlotChannels(
                    codeword_indices=active, magnitudes=np.abs(est_sel)
                )
            )
        else:
            nmse_slots.append(float("nan"))
            slot_channels.append(
                clustering.SlotChannels(
                    codeword_indices=np.array([], dtype=np.int64),
                    magnitudes=np.zeros((0, geom.m)),
                )
            )
        observations.append(obs)
        detections.append(det)
        traces.append(result.trace)

    partition = None
    recovered_bits = None
    try:
        _, partition = clustering.run_clustering(
            slot_channels, t_c=config.t_c, zeta=config.zeta, init=config.cluster_init
        )
        recovered_bits = clustering.stitch_messages(
            partition, config.j_bits, config.payload_bits
        )
        recovered = [metrics.pack_bits(row) for row in recovered_bits]
    except ClusteringError:
        recovered = []

    transmitted = message_set.payload_ints()
    p_md, p_fa, p_e = metrics.error_rates(transmitted, recovered)
    nmse_arr = np.asarray(nmse_slots, dtype=float)
    nmse_mean = float(np.nanmean(nmse_arr)) if np.any(np.isfinite(nmse_arr)) else float("nan")
    record = metrics.TrialRecord(
        seed=trial_seed,
        snr_db=snr_db,
        p_md=p_md,
        p_fa=p_fa,
        p_e=p_e,
        nmse_db_mean=nmse_mean,
        nmse_db_slots=[float(v) for v in nmse_slots],
        detected_counts=[int(sc.count) for sc in slot_channels],
        runtime_ms=(time.perf_counter() - start) * 1e3,
        config={
            "snapshot": config.snapshot(),
            "codebook_seed": cb_seed,
            "sigma2": sigma2,
            "spectral_efficiency": config.spectral_efficiency,
        },
    )
    if not detail:
        return record
    return record, TrialDetail(
        channels=users,
        message_set=message_set,
        observations=observations,
        detections=detections,
        slot_channels=slot_channels,
        partition=partition,
        recovered_bits=recovered_bits,
        traces=traces,
    )


def trial_seeds(config: SimConfig, num_points: int) -> np.ndarray:
    """Deterministic (points x trials) seed table derived from the master seed."""
    state = np.random.SeedSequence(config.master_seed).generate_state(
        num_points * config.trials, dtype=np.uint64
    )
    return state.reshape(num_points, config.trials)


def axis_points(config: SimConfig) -> list:
    values = config.sweep_values
    if values is None:
        values = config.snr_db if config.sweep_axis == "snr_db" else [config.n]
    return list(values)


def _point_config(config: SimConfig, value) -> tuple[SimConfig, float]:
    """Config and SNR for one axis point."""
    if config.sweep_axis == "snr_db":
        return config, float(value)
    snr = float(config.snr_db[0])
    if config.sweep_axis == "n":
        return replace(config, n=int(value)), snr
    return replace(config, m_h=int(value)), snr


def _sweep_cell(args):
    config, value, seed = args
    point_cfg, snr = _point_config(config, value)
    try:
        record = run_trial(point_cfg, snr, int(seed))
        return value, record, None
    except Exception as exc:  # noqa: BLE001 - cell failures must not kill the sweep
        return value, None, repr(exc)


@dataclass
class SweepCell:
    """Aggregated metrics of one axis point."""

    axis_value: float
    trials: int
    failures: int
    means: dict
    standard_errors: dict


def aggregate_records(records: list[metrics.TrialRecord]) -> tuple[dict, dict]:
    fields = ("p_md", "p_fa", "p_e", "nmse_db_mean", "runtime_ms")
    means, ses = {}, {}
    for name in fields:
        values = np.asarray([getattr(r, name) for r in records], dtype=float)
        finite = values[np.isfinite(values)]
        if finite.size == 0:
            means[name] = float("nan")
            ses[name] = float("nan")
            continue
        means[name] = float(np.mean(finite))
        ses[name] = float(np.std(finite, ddof=1) / np.sqrt(finite.size)) if finite.size > 1 else 0.0
    return means, ses


def run_sweep(
    config: SimConfig,
    workers: int = 1,
    completed: set | None = None,
    on_record=None,
) -> tuple[list[SweepCell], list[tuple[float, metrics.TrialRecord]]]:
    """Run every (axis point, trial) cell and aggregate per point.

    ``completed`` holds (axis_value, seed) pairs to skip (resume support);
    ``on_record`` is called with (axis_value, record) as each trial
    finishes so callers can persist incrementally.  Cell failures are
    counted per point and do not abort the sweep.
    """
    points = axis_points(config)
    if not points:
        raise ParameterError("sweep needs at least one axis value")
    seeds = trial_seeds(config, len(points))
    completed = completed or set()
    jobs = []
    for p_idx, value in enumerate(points):
        for t_idx in range(config.trials):
            seed = int(seeds[p_idx, t_idx])
            if (float(value), seed) not in completed:
                jobs.append((config, value, seed))

    outcomes = []
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_sweep_cell, jobs))
    else:
        outcomes = [_sweep_cell(job) for job in jobs]

    per_point: dict[float, list[metrics.TrialRecord]] = {float(v): [] for v in points}
    failures: dict[float, int] = {float(v): 0 for v in points}
    all_records = []
    for value, record, error in outcomes:
        if record is None:
            failures[float(value)] += 1
            continue
        per_point[float(value)].append(record)
        all_records.append((float(value), record))
        if on_record is not None:
            on_record(float(value), record)

    cells = []
    for value in points:
        records = per_point[float(value)]
        means, ses = aggregate_records(records)
        cells.append(
            SweepCell(
                axis_value=float(value),
                trials=len(records),
                failures=failures[float(value)],
                means=means,
                standard_errors=ses,
            )
        )
    return cells, all_records


def write_sweep_csv(path, config: SimConfig, cells: list[SweepCell]) -> None:
    """Atomic CSV write of the aggregate table (tmp file + rename)."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(f"#schema_version={metrics.RECORD_SCHEMA_VERSION}\n")
        header = [config.sweep_axis, "trials", "failures"]
        for name in ("p_md", "p_fa", "p_e", "nmse_db_mean", "runtime_ms"):
            header += [f"{name}_mean", f"{name}_se"]
        fh.write(",".join(header) + "\n")
        for cell in cells:
            row = [repr(cell.axis_value), str(cell.trials), str(cell.failures)]
            for name in ("p_md", "p_fa", "p_e", "nmse_db_mean", "runtime_ms"):
                row += [repr(cell.means[name]), repr(cell.standard_errors[name])]
            fh.write(",".join(row) + "\n")
    os.replace(tmp, path)
