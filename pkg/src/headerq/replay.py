"""Discrete-event replay of a labeled corpus through a lagging baseline filter
plus classifier-driven quarantine.

Each message is checked by the baseline filter on arrival. Messages the
filter passes are scored; those at or above the threshold are held for the
quarantine duration and re-checked by the baseline filter when released.
A spam message is *recovered* when it slipped past the filter on arrival
but was held and then caught at release.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import heapq
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import MessageRecord, SpamCampaignProfile, check_sorted

SPAM = "spam"
CLEAN = "clean"


class BaselineFilter:
    """Signature-based filter that learns each campaign after a fixed lag.

    Ham is flagged with probability ``ham_fp_rate``, decided by a hash of the
    record so the verdict stays a pure function of ``(record, time)``.
    """

    def __init__(self, campaigns: Sequence[SpamCampaignProfile], ham_fp_rate: float = 0.0,
                 seed: int = 0):
        if not 0.0 <= ham_fp_rate <= 1.0:
            raise ValueError("ham_fp_rate must be in [0, 1]")
        self.available_at = {c.campaign_id: c.signature_time for c in campaigns}
        self.ham_fp_rate = ham_fp_rate
        self.seed = seed

    def _ham_flagged(self, r: MessageRecord) -> bool:
        if self.ham_fp_rate == 0.0:
            return False
        digest = hashlib.sha256(f"{self.seed}:{r.to_json()}".encode()).digest()
        return int.from_bytes(digest[:8], "little") / 2.0**64 < self.ham_fp_rate

    def verdict(self, r: MessageRecord, t: float) -> str:
        if r.campaign_id is None:
            return SPAM if self._ham_flagged(r) else CLEAN
        avail = self.available_at.get(r.campaign_id)
        if avail is None:
            raise KeyError(f"unknown campaign {r.campaign_id!r}")
        return SPAM if avail <= t else CLEAN


@dataclass
class SimConfig:
    quarantine_duration: float = 3600.0
    threshold: float | None = None  # None: use the model's calibrated threshold
    corpus_path: str | None = None
    model_path: str | None = None
    campaigns_path: str | None = None
    ham_fp_rate: float = 0.0

    def __post_init__(self):
        if self.quarantine_duration < 0:
            raise ValueError("quarantine_duration must be >= 0")


@dataclass
class SimReport:
    total_spam: int = 0
    baseline_caught: int = 0
    baseline_missed: int = 0
    dq_quarantined_of_missed: int = 0
    recovered: int = 0
    recovered_fraction: float = 0.0
    ham_total: int = 0
    ham_delayed: int = 0
    ham_delay_rate: float = 0.0

    def summary(self) -> str:
        return (
            f"spam messages:              {self.total_spam}\n"
            f"caught by baseline:         {self.baseline_caught}\n"
            f"missed by baseline:         {self.baseline_missed}\n"
            f"missed spam quarantined:    {self.dq_quarantined_of_missed}\n"
            f"recovered at re-scan:       {self.recovered}\n"
            f"recovered_fraction:         {self.recovered_fraction:.3f}\n"
            f"ham messages:               {self.ham_total}\n"
            f"ham delayed:                {self.ham_delayed}\n"
            f"ham_delay_rate:             {self.ham_delay_rate:.3f}\n"
        )


FIELDS = [f.name for f in dataclasses.fields(SimReport)]

# event kinds; releases sort before arrivals at equal times
_RELEASE, _ARRIVAL = 0, 1


def simulate_records(
    records: Sequence[MessageRecord],
    scores: Sequence[float],
    threshold: float,
    baseline: BaselineFilter,
    quarantine_duration: float,
) -> SimReport:
    """Core event loop over precomputed classifier scores."""
    if len(records) != len(scores):
        raise ValueError("one score per record required")
    if quarantine_duration < 0:
        raise ValueError("quarantine_duration must be >= 0")
    check_sorted(records)
    rep = SimReport()
    events: list[tuple[float, int, int]] = [
        (float(r.ts), _ARRIVAL, i) for i, r in enumerate(records)
    ]
    heapq.heapify(events)
    missed = np.zeros(len(records), dtype=bool)
    disposed = np.zeros(len(records), dtype=np.int64)
    held = 0
    while events:
        t, kind, i = heapq.heappop(events)
        r = records[i]
        if kind == _RELEASE:
            held -= 1
            disposed[i] += 1
            if baseline.verdict(r, t) == SPAM and missed[i]:
                rep.recovered += 1
            continue
        is_spam = r.label == 1
        if is_spam:
            rep.total_spam += 1
        else:
            rep.ham_total += 1
        if baseline.verdict(r, t) == SPAM:
            if is_spam:
                rep.baseline_caught += 1
            disposed[i] += 1
            continue
        if is_spam:
            rep.baseline_missed += 1
            missed[i] = True
        if scores[i] >= threshold:
            if is_spam:
                rep.dq_quarantined_of_missed += 1
            else:
                rep.ham_delayed += 1
            held += 1
            heapq.heappush(events, (t + quarantine_duration, _RELEASE, i))
        else:
            disposed[i] += 1
    if held != 0 or not (disposed == 1).all():
        raise AssertionError("every message must be disposed of exactly once")
    rep.recovered_fraction = rep.recovered / rep.baseline_missed if rep.baseline_missed else 0.0
    rep.ham_delay_rate = rep.ham_delayed / rep.ham_total if rep.ham_total else 0.0
    return rep


def simulate(cfg: SimConfig) -> SimReport:
    from .corpus import campaigns_path_for, read_campaigns, read_corpus
    from .features import encode_records
    from .model import load_model, predict_batch

    if cfg.corpus_path is None or cfg.model_path is None:
        raise ValueError("corpus_path and model_path are required")
    records = read_corpus(cfg.corpus_path)
    check_sorted(records)
    campaigns = read_campaigns(cfg.campaigns_path or campaigns_path_for(cfg.corpus_path))
    model = load_model(cfg.model_path)
    threshold = cfg.threshold if cfg.threshold is not None else model.threshold
    if threshold is None:
        raise ValueError("model is not calibrated and no threshold was given")
    scores = predict_batch(model, encode_records(records, model.vocabs))
    baseline = BaselineFilter(campaigns, cfg.ham_fp_rate)
    return simulate_records(records, scores, threshold, baseline, cfg.quarantine_duration)


def report_write(rep: SimReport, path) -> None:
    """Write the CSV to ``path`` and the readable summary next to it."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIELDS)
        w.writerow(
            [f"{v:.3f}" if isinstance(v, float) else v for v in dataclasses.astuple(rep)]
        )
    path.with_suffix(".txt").write_text(rep.summary(), encoding="utf-8")


def report_read(path) -> SimReport:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != 1:
        raise ValueError(f"{path}: expected exactly one report row")
    row = rows[0]
    kwargs = {}
    for f in dataclasses.fields(SimReport):
        kwargs[f.name] = float(row[f.name]) if f.type in (float, "float") else int(row[f.name])
    return SimReport(**kwargs)
