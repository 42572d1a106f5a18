"""End-to-end training run shared by the CLI and the acceptance suite."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .corpus import MessageRecord, corpus_fingerprint, split_by_time
from .features import build_vocabs, encode_records
from .metrics import CalibrationResult, calibrate_threshold
from .model import ModelConfig, TrainConfig, TrainedModel, build_model, predict_batch, train

log = logging.getLogger(__name__)

# a score can round to exactly 1.0; thresholds must stay inside (0, 1)
_MAX_THRESHOLD = float(np.nextafter(1.0, 0.0))
_MIN_THRESHOLD = float(np.nextafter(0.0, 1.0))


@dataclass(frozen=True)
class FeatureConfig:
    msgid_len: int = 64
    header_vocab_size: int = 255
    mua_table_size: int = 64


@dataclass
class TrainRun:
    model: TrainedModel
    history: list[dict]
    calibration: CalibrationResult
    train: list[MessageRecord] = field(repr=False, default_factory=list)
    holdout: list[MessageRecord] = field(repr=False, default_factory=list)
    test: list[MessageRecord] = field(repr=False, default_factory=list)


def clamp_threshold(t: float) -> float:
    return min(max(float(t), _MIN_THRESHOLD), _MAX_THRESHOLD)


def split_three(corpus, split: float = 0.75, holdout: float = 0.1):
    """(fit, holdout, test): time split, then the last ``holdout`` of the training period."""
    train_part, test = split_by_time(corpus, split)
    if not train_part:
        raise ValueError("empty training split")
    fit, hold = split_by_time(train_part, 1.0 - holdout)
    if not fit or not hold:
        raise ValueError("training split too small to hold out a calibration slice")
    return fit, hold, test


def calibrate_on(model: TrainedModel, records, target_precision: float) -> CalibrationResult:
    batch = encode_records(records, model.vocabs)
    scores = predict_batch(model, batch)
    return calibrate_threshold(scores, batch.labels, target_precision)


def train_from_corpus(
    corpus: list[MessageRecord],
    model_cfg: ModelConfig = ModelConfig(),
    train_cfg: TrainConfig = TrainConfig(),
    feature_cfg: FeatureConfig = FeatureConfig(),
    split: float = 0.75,
    holdout: float = 0.1,
    target_precision: float = 0.99,
) -> TrainRun:
    fit, hold, test = split_three(corpus, split, holdout)
    vocabs = build_vocabs(
        fit, k=feature_cfg.header_vocab_size, n=feature_cfg.mua_table_size,
        msgid_len=feature_cfg.msgid_len,
    )
    data = encode_records(fit, vocabs)
    model = build_model(model_cfg, vocabs, seed=train_cfg.seed)
    model, history = train(model, data, train_cfg, fingerprint=corpus_fingerprint(corpus))
    cal = calibrate_on(model, hold, target_precision)
    if not cal.feasible:
        log.warning(
            "target precision %.4f not reachable on the calibration slice; using "
            "the most precise threshold (precision %.4f)",
            target_precision, cal.achieved_precision,
        )
    model = model.with_threshold(clamp_threshold(cal.threshold))
    return TrainRun(model, history, cal, fit, hold, test)
