"""Slot-balanced K-means message stitching.

Every slot contributes the magnitude vectors of its detected channels.
One clustering round assigns each slot's vectors to the K_a groups with
a minimum-cost perfect matching (so two channels from one slot never
share a group) and refreshes the running per-group centroid after every
slot.  Slots with fewer detections than K_a indicate codeword reuse:
the shared (superposed) vector is assigned to several groups, but only
its entries inside each group's dominant energy mask feed the centroid
update, which keeps conflicting users from contaminating each other.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .codec import assemble_message
from .errors import ClusteringError, ParameterError


@dataclass
class SlotChannels:
    """Detected channels of one slot: 1-based codeword indices and magnitudes."""

    codeword_indices: np.ndarray     # K_s ints
    magnitudes: np.ndarray           # K_s x M, non-negative

    def __post_init__(self):
        self.codeword_indices = np.asarray(self.codeword_indices, dtype=np.int64)
        self.magnitudes = np.asarray(self.magnitudes, dtype=float)
        if self.magnitudes.ndim != 2 or len(self.codeword_indices) != self.magnitudes.shape[0]:
            raise ParameterError("codeword_indices and magnitudes disagree on K_s")
        if np.any(self.magnitudes < 0):
            raise ParameterError("magnitudes must be non-negative")

    @property
    def count(self) -> int:
        return self.magnitudes.shape[0]


@dataclass
class ClusterState:
    """Centroids, per-slot channel->group maps, and bookkeeping counters."""

    centroids: np.ndarray                    # K_a x M
    assignments: list[np.ndarray]            # per slot: group id of each duplicated row
    source_rows: list[np.ndarray]            # per slot: original channel behind each row
    rounds: int = 0
    hungarian_calls: int = 0
    converged: bool = False


@dataclass
class Partition:
    """Final grouping: per group and slot, the codeword index and channel row."""

    groups: list[list[tuple[int, int, int]]]  # (slot, codeword index, channel row)
    distances: list[list[float]] = field(default_factory=list)


def hungarian_solve(cost: np.ndarray) -> tuple[np.ndarray, float]:
    """Column assignment per row minimizing total cost on a square matrix.

    Returns (perm, total) where perm[k] is the column given to row k.
    Backed by the Jonker-Volgenant solver in scipy, which matches the
    classical O(K^3) Hungarian bound.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ParameterError(f"cost matrix must be square, got {cost.shape}")
    if not np.isfinite(cost).all():
        raise ParameterError("cost matrix must be finite")
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(cost.shape[0], dtype=np.int64)
    perm[rows] = cols
    return perm, float(cost[rows, cols].sum())


def assignment_step(
    magnitudes: np.ndarray, centroids: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Match one slot's channels to groups under the balance constraints.

    Euclidean distances form the cost matrix; when the slot detected
    fewer channels than there are groups, the rows with the largest cost
    sums are duplicated until the matrix is square, so the superposed
    collision vector can serve several groups.

    Returns (groups, sources): for each (possibly duplicated) row, the
    group it lands in and the original channel index it came from.
    """
    magnitudes = np.asarray(magnitudes, dtype=float)
    centroids = np.asarray(centroids, dtype=float)
    k_s, k_a = magnitudes.shape[0], centroids.shape[0]
    if k_s > k_a:
        raise ClusteringError(f"slot has {k_s} channels but only {k_a} groups exist")
    cost = np.linalg.norm(magnitudes[:, None, :] - centroids[None, :, :], axis=2)
    sources = np.arange(k_s, dtype=np.int64)
    if k_s < k_a:
        order = np.argsort(-cost.sum(axis=1), kind="stable")
        extra = np.resize(order, k_a - k_s)
        cost = np.vstack([cost, cost[extra]])
        sources = np.concatenate([sources, extra])
    perm, _ = hungarian_solve(cost)
    return perm, sources


def energy_mask(centroid: np.ndarray, zeta: float) -> np.ndarray:
    """Boolean mask of the smallest entry set holding > zeta of the energy.

    Entries are taken in decreasing energy order until their cumulative
    squared magnitude exceeds zeta times the centroid's squared norm.
    """
    if not (0 < zeta < 1):
        raise ParameterError("zeta must lie in (0, 1)")
    energy = centroid**2
    total = energy.sum()
    mask = np.zeros(centroid.shape, dtype=bool)
    if total == 0:
        return mask
    order = np.argsort(-energy, kind="stable")
    cum = np.cumsum(energy[order])
    keep = int(np.searchsorted(cum, zeta * total, side="right")) + 1
    mask[order[:keep]] = True
    return mask


def centroid_update(
    centroids: np.ndarray,
    groups: np.ndarray,
    sources: np.ndarray,
    magnitudes: np.ndarray,
    step: int,
    collision: bool,
    zeta: float = 0.95,
) -> np.ndarray:
    """Running within-round mean of assigned vectors, masked on collision slots.

    ``step`` is the 1-based position of this slot in the round, so the
    new centroid weighs the previous one by (step-1)/step.  On collision
    slots every incoming vector is first projected onto the group's
    current dominant-energy mask.
    """
    if step < 1:
        raise ParameterError("step must be >= 1")
    updated = centroids.copy()
    for row, group in enumerate(groups):
        incoming = magnitudes[sources[row]]
        if collision:
            incoming = incoming * energy_mask(centroids[group], zeta)
        updated[group] = ((step - 1) * centroids[group] + incoming) / step
    return updated


def run_clustering(
    slots: list[SlotChannels],
    t_c: int = 50,
    zeta: float = 0.95,
    init: str = "first-full",
    rng: np.random.Generator | None = None,
) -> tuple[ClusterState, Partition]:
    """Cluster slot-distributed channels into per-user groups.

    The group count is the largest per-slot detection count.  Centroids
    start from the first slot reaching that count ("first-full") or a
    random such slot ("random").  Rounds stop when every slot's
    assignment map repeats the previous round exactly, which implies the
    end-of-round centroids repeat as well.
    """
    if t_c < 1:
        raise ParameterError("t_c must be >= 1")
    if not slots or all(s.count == 0 for s in slots):
        raise ClusteringError("no detected channels in any slot")
    counts = [s.count for s in slots]
    k_a = max(counts)
    full = [i for i, c in enumerate(counts) if c == k_a]
    if init == "first-full":
        seed_slot = full[0]
    elif init == "random":
        seed_slot = full[int((rng or np.random.default_rng()).integers(len(full)))]
    else:
        raise ParameterError(f"unknown init rule {init!r}")

    centroids = slots[seed_slot].magnitudes.copy()
    state = ClusterState(centroids=centroids, assignments=[], source_rows=[])
    previous: list[tuple] | None = None
    for round_idx in range(1, t_c + 1):
        assignments: list[np.ndarray] = []
        sources_all: list[np.ndarray] = []
        for step, slot in enumerate(slots, start=1):
            if slot.count == 0:
                raise ClusteringError("every slot must contribute at least one channel")
            groups, sources = assignment_step(slot.magnitudes, centroids)
            state.hungarian_calls += 1
            centroids = centroid_update(
                centroids,
                groups,
                sources,
                slot.magnitudes,
                step,
                collision=slot.count < k_a,
                zeta=zeta,
            )
            assignments.append(groups)
            sources_all.append(sources)
        state.rounds = round_idx
        state.assignments = assignments
        state.source_rows = sources_all
        signature = [tuple(a) for a in assignments]
        if signature == previous:
            state.converged = True
            break
        previous = signature
    state.centroids = centroids

    collected: list[list[tuple[tuple[int, int, int], float]]] = [[] for _ in range(k_a)]
    for slot_idx, (slot, assign, sources) in enumerate(
        zip(slots, state.assignments, state.source_rows)
    ):
        for row, group in enumerate(assign):
            channel_row = int(sources[row])
            member = (slot_idx, int(slot.codeword_indices[channel_row]), channel_row)
            dist = float(np.linalg.norm(slot.magnitudes[channel_row] - centroids[group]))
            collected[group].append((member, dist))
    for entries in collected:
        entries.sort()
    groups = [[member for member, _ in entries] for entries in collected]
    distances = [[dist for _, dist in entries] for entries in collected]
    return state, Partition(groups=groups, distances=distances)


def stitch_messages(partition: Partition, j_bits: int, payload_bits: int) -> np.ndarray:
    """Concatenate each group's slot-ordered codeword indices into payload bits."""
    num_slots = -(-payload_bits // j_bits)
    messages = []
    for members in partition.groups:
        slots_seen = [slot for slot, _, _ in members]
        if slots_seen != list(range(num_slots)):
            raise ClusteringError(
                f"group covers slots {slots_seen}, expected exactly 0..{num_slots - 1}"
            )
        indices = np.array([idx for _, idx, _ in members], dtype=np.int64)
        messages.append(assemble_message(indices, j_bits, payload_bits))
    return np.asarray(messages, dtype=np.uint8)


def export_partition_csv(path, partition: Partition) -> None:
    """Forensics dump: group id, slot, codeword index, distance to centroid."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "slot", "codeword_index", "distance"])
        for gid, members in enumerate(partition.groups):
            for (slot, index, _), dist in zip(members, partition.distances[gid]):
                writer.writerow([gid, slot, index, repr(dist)])
