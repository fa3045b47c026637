"""Evaluation quantities: estimation error, list error rates, detection tails.

The per-user error rates treat transmitted payloads as a multiset but
test list membership set-wise, so two users sending identical payloads
count as recovered once the payload appears in the list.  The analytic
detection-error tail is the regularized upper incomplete gamma ratio of
the null row-energy distribution.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import gammaincc

from .errors import MetricError, ParameterError

NMSE_FLOOR_DB = -150.0
RECORD_SCHEMA_VERSION = 1


@dataclass
class TrialRecord:
    """Outcome of one Monte-Carlo trial."""

    seed: int
    snr_db: float
    p_md: float
    p_fa: float
    p_e: float
    nmse_db_mean: float
    nmse_db_slots: list[float]
    detected_counts: list[int]
    runtime_ms: float
    config: dict = field(default_factory=dict)


def nmse(truth: np.ndarray, estimate: np.ndarray) -> float:
    """Normalized squared estimation error in dB, floored at -150.

    Both arguments must hold the same row arrangement; callers select
    rows by the detected index set before calling.
    """
    truth = np.asarray(truth)
    estimate = np.asarray(estimate)
    if truth.shape != estimate.shape:
        raise MetricError(f"shape mismatch {truth.shape} vs {estimate.shape}")
    ref = float(np.sum(np.abs(truth) ** 2))
    if ref == 0:
        raise MetricError("reference matrix has zero energy")
    err = float(np.sum(np.abs(truth - estimate) ** 2))
    if err == 0:
        return NMSE_FLOOR_DB
    return max(10 * np.log10(err / ref), NMSE_FLOOR_DB)


def error_rates(
    transmitted: list[int] | np.ndarray, recovered: list[int] | np.ndarray
) -> tuple[float, float, float]:
    """(misdetection, false-alarm, total) rates of the recovered message list.

    ``transmitted`` has one entry per active user; ``recovered`` is the
    decoder's list.  Messages are compared as opaque integers (callers
    pack payload bit rows beforehand).
    """
    transmitted = list(transmitted)
    recovered = list(recovered)
    if not transmitted:
        raise ParameterError("at least one transmitted message is required")
    sent_set = set(transmitted)
    recovered_set = set(recovered)
    p_md = sum(1 for m in transmitted if m not in recovered_set) / len(transmitted)
    if recovered:
        p_fa = sum(1 for m in recovered if m not in sent_set) / len(recovered)
    else:
        p_fa = 0.0
    return p_md, p_fa, p_md + p_fa


def pack_bits(bits: np.ndarray) -> int:
    """Payload bit row -> integer key (MSB first)."""
    return int("".join(str(int(b)) for b in np.asarray(bits).ravel()), 2)


def pupe_analytic(m: int, upsilon: float, varrho2: float) -> float:
    """Probability that a pure-noise row's energy exceeds the threshold.

    Under the null model the complex row is CN(0, varrho2 I_m), so the
    tail is the regularized upper incomplete gamma ratio at m degrees,
    stable up to m ~ 1e4 and beyond.
    """
    if m < 1:
        raise ParameterError("antenna count must be >= 1")
    if upsilon < 0 or varrho2 <= 0:
        raise ParameterError("upsilon must be >= 0 and varrho2 > 0")
    return float(gammaincc(m, upsilon / varrho2))


def records_to_csv(path, records: list[TrialRecord]) -> None:
    """CSV dump with a version header row; floats use shortest round-trip form."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"#schema_version={RECORD_SCHEMA_VERSION}"])
        writer.writerow(
            ["seed", "snr_db", "p_md", "p_fa", "p_e", "nmse_db_mean", "runtime_ms"]
        )
        for rec in records:
            writer.writerow(
                [
                    rec.seed,
                    repr(rec.snr_db),
                    repr(rec.p_md),
                    repr(rec.p_fa),
                    repr(rec.p_e),
                    repr(rec.nmse_db_mean),
                    repr(rec.runtime_ms),
                ]
            )


def records_to_jsonl(path, records: list[TrialRecord]) -> None:
    """JSON-lines dump carrying every field including the config snapshot."""
    with open(path, "w") as fh:
        fh.write(json.dumps({"schema_version": RECORD_SCHEMA_VERSION}) + "\n")
        for rec in records:
            payload = asdict(rec)
            fh.write(json.dumps(payload) + "\n")


def load_records_jsonl(path) -> list[TrialRecord]:
    """Inverse of :func:`records_to_jsonl`."""
    records = []
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("schema_version") != RECORD_SCHEMA_VERSION:
            raise ParameterError(f"unsupported record schema: {header}")
        for line in fh:
            records.append(TrialRecord(**json.loads(line)))
    return records
