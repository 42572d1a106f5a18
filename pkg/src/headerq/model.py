"""Two-branch header classifier: assembly, training, scoring, persistence.

Message-ID branch::

    embed -> [conv -> relu (-> maxpool)] x len(msgid_kernel_sizes) -> flatten

Header-sequence branch::

    embed -> conv -> relu -> global maxpool

Head::

    concat(msgid, headers, mua one-hot) -> dense -> relu -> dropout -> dense -> sigmoid
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .features import EncodedBatch, EncodedExample, FeatureVocabs, vocab_from_text
from .nn import serialize

log = logging.getLogger(__name__)

MODEL_FORMAT = "headerq-model"
MODEL_FORMAT_VERSION = 1


class ConfigError(ValueError):
    pass


class ModelFileError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    char_embed_dim: int = 16
    header_embed_dim: int = 16
    msgid_filters: int = 64
    msgid_kernel_sizes: tuple[int, ...] = (7, 5, 3, 3)
    # zero-based conv layer indices followed by a max-pool
    msgid_pool_after: tuple[int, ...] = (0, 3)
    msgid_pool_window: int = 3
    msgid_pool_stride: int = 3
    header_filters: int = 64
    header_kernel_size: int = 3
    dense_hidden: int = 128
    dropout_rate: float = 0.5
    init_std: float = 0.05

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("msgid_kernel_sizes", "msgid_pool_after"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 9
    lr_initial: float = 0.01
    lr_halving_period: int = 3
    momentum: float = 0.9
    batch_size: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not self.lr_initial > 0:
            raise ConfigError("lr_initial must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must be in [0, 1)")
        if self.batch_size < 1 or self.lr_halving_period < 1:
            raise ConfigError("batch_size and lr_halving_period must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)

    def lr_at(self, epoch: int) -> float:
        return self.lr_initial * 0.5 ** (epoch // self.lr_halving_period)


def shape_plan(cfg: ModelConfig, msgid_len: int, header_len: int, mua_dim: int) -> dict:
    """Walk the layer stack and return the sequence lengths at each stage.

    Raises :class:`ConfigError` naming the first layer whose geometry fails.
    """
    dims = [
        ("char_embed_dim", cfg.char_embed_dim),
        ("header_embed_dim", cfg.header_embed_dim),
        ("msgid_filters", cfg.msgid_filters),
        ("header_filters", cfg.header_filters),
        ("dense_hidden", cfg.dense_hidden),
        ("msgid_pool_window", cfg.msgid_pool_window),
        ("msgid_pool_stride", cfg.msgid_pool_stride),
        ("header_kernel_size", cfg.header_kernel_size),
        ("mua_dim", mua_dim),
    ]
    for name, val in dims:
        if val < 1:
            raise ConfigError(f"{name} must be positive, got {val}")
    if not cfg.msgid_kernel_sizes:
        raise ConfigError("msgid branch needs at least one conv layer")
    if min(cfg.msgid_kernel_sizes) < 1:
        raise ConfigError("msgid kernel sizes must be positive")
    if cfg.msgid_kernel_sizes[0] != max(cfg.msgid_kernel_sizes):
        raise ConfigError("msgid_kernel_sizes must start with the largest kernel")
    if not 0.0 <= cfg.dropout_rate < 1.0:
        raise ConfigError("dropout_rate must be in [0, 1)")
    for i in cfg.msgid_pool_after:
        if not 0 <= i < len(cfg.msgid_kernel_sizes):
            raise ConfigError(f"msgid_pool_after index {i} has no conv layer")

    lengths = [("msgid_input", msgid_len)]
    t = msgid_len
    for i, k in enumerate(cfg.msgid_kernel_sizes):
        if t < k:
            raise ConfigError(f"msgid_conv{i}: length {t} < kernel {k}")
        t = t - k + 1
        lengths.append((f"msgid_conv{i}", t))
        if i in cfg.msgid_pool_after:
            if t < cfg.msgid_pool_window:
                raise ConfigError(
                    f"msgid_pool{i}: length {t} < window {cfg.msgid_pool_window}"
                )
            t = nn.pool_out_len(t, cfg.msgid_pool_window, cfg.msgid_pool_stride)
            lengths.append((f"msgid_pool{i}", t))
    if header_len < cfg.header_kernel_size:
        raise ConfigError(
            f"header_conv: length {header_len} < kernel {cfg.header_kernel_size}"
        )
    msgid_flat = t * cfg.msgid_filters
    return {
        "msgid_lengths": lengths,
        "msgid_flat": msgid_flat,
        "header_conv_len": header_len - cfg.header_kernel_size + 1,
        "concat_width": msgid_flat + cfg.header_filters + mua_dim,
    }


def _digest(params: dict, cfg: ModelConfig, threshold: float | None) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(dataclasses.asdict(cfg), sort_keys=True).encode())
    h.update(repr(threshold).encode())
    for name, arr in params.items():
        h.update(name.encode())
        h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return "hq-" + h.hexdigest()[:12]


@dataclass(frozen=True)
class TrainedModel:
    config: ModelConfig
    vocabs: FeatureVocabs
    params: dict[str, np.ndarray]
    threshold: float | None = None
    version: str = ""
    fingerprint: str = ""

    def __post_init__(self):
        if self.threshold is not None and not 0.0 < self.threshold < 1.0:
            raise ConfigError(f"threshold must be in (0, 1), got {self.threshold}")
        if not self.version:
            object.__setattr__(
                self, "version", _digest(self.params, self.config, self.threshold)
            )

    @property
    def plan(self) -> dict:
        return shape_plan(
            self.config, self.vocabs.msgid_len, self.vocabs.headers.seq_len,
            self.vocabs.mua_dim,
        )

    def with_threshold(self, threshold: float) -> "TrainedModel":
        return dataclasses.replace(self, threshold=float(threshold), version="")

    def score(self, x: EncodedExample) -> float:
        return forward(self, x)


def build_model(cfg: ModelConfig, vocabs: FeatureVocabs, seed: int = 0) -> TrainedModel:
    plan = shape_plan(cfg, vocabs.msgid_len, vocabs.headers.seq_len, vocabs.mua_dim)
    ss = np.random.SeedSequence(seed)
    seeds = iter(ss.generate_state(64))
    std = cfg.init_std

    def init(*shape):
        return nn.gaussian_init(shape, std, int(next(seeds)))

    params: dict[str, np.ndarray] = {}
    params["char_embed"] = init(len(vocabs.chars), cfg.char_embed_dim)
    width = cfg.char_embed_dim
    for i, k in enumerate(cfg.msgid_kernel_sizes):
        params[f"msgid_conv{i}_w"] = init(cfg.msgid_filters, k, width)
        params[f"msgid_conv{i}_b"] = np.zeros(cfg.msgid_filters)
        width = cfg.msgid_filters
    params["header_embed"] = init(len(vocabs.headers), cfg.header_embed_dim)
    params["header_conv_w"] = init(
        cfg.header_filters, cfg.header_kernel_size, cfg.header_embed_dim
    )
    params["header_conv_b"] = np.zeros(cfg.header_filters)
    params["fc1_w"] = init(cfg.dense_hidden, plan["concat_width"])
    params["fc1_b"] = np.zeros(cfg.dense_hidden)
    params["fc2_w"] = init(1, cfg.dense_hidden)
    params["fc2_b"] = np.zeros(1)
    return TrainedModel(config=cfg, vocabs=vocabs, params=params)


# -- forward / backward ----------------------------------------------------


def _check_batch(m: TrainedModel, x: EncodedBatch):
    v = m.vocabs
    if x.msgid_ids.shape[1:] != (v.msgid_len,):
        raise nn.ShapeError(f"msgid ids shape {x.msgid_ids.shape[1:]} != ({v.msgid_len},)")
    if x.header_ids.shape[1:] != (v.headers.seq_len,):
        raise nn.ShapeError(
            f"header ids shape {x.header_ids.shape[1:]} != ({v.headers.seq_len},)"
        )
    if x.mua_onehot.shape[1:] != (v.mua_dim,):
        raise nn.ShapeError(f"mua one-hot shape {x.mua_onehot.shape[1:]} != ({v.mua_dim},)")


def forward_logits(
    params: dict,
    cfg: ModelConfig,
    x: EncodedBatch,
    train: bool = False,
    rng: np.random.Generator | None = None,
):
    """Batch forward pass. Returns ``(logits[B], cache)``."""
    cache: dict = {}
    h = nn.embedding_forward(x.msgid_ids, params["char_embed"])
    for i in range(len(cfg.msgid_kernel_sizes)):
        z, conv_cache = nn.conv1d_forward(
            h, params[f"msgid_conv{i}_w"], params[f"msgid_conv{i}_b"]
        )
        cache[f"msgid_conv{i}"] = (conv_cache, z)
        h = nn.relu(z)
        if i in cfg.msgid_pool_after:
            t = h.shape[1]
            h, arg = nn.maxpool1d(h, cfg.msgid_pool_window, cfg.msgid_pool_stride)
            cache[f"msgid_pool{i}"] = (arg, t)
    cache["msgid_out_shape"] = h.shape
    msgid_flat = h.reshape(h.shape[0], -1)

    g = nn.embedding_forward(x.header_ids, params["header_embed"])
    zh, hconv_cache = nn.conv1d_forward(g, params["header_conv_w"], params["header_conv_b"])
    cache["header_conv"] = (hconv_cache, zh)
    hdr, harg = nn.global_maxpool(nn.relu(zh))
    cache["header_pool"] = (harg, zh.shape[1])

    feats = np.concatenate([msgid_flat, hdr, x.mua_onehot], axis=1)
    z1 = nn.dense(feats, params["fc1_w"], params["fc1_b"])
    a1 = nn.relu(z1)
    d1, mask = nn.dropout(a1, cfg.dropout_rate, train, rng)
    logits = nn.dense(d1, params["fc2_w"], params["fc2_b"])[:, 0]
    cache.update(feats=feats, z1=z1, d1=d1, mask=mask, x=x,
                 msgid_width=msgid_flat.shape[1], hdr_width=hdr.shape[1])
    return logits, cache


def backward(params: dict, cfg: ModelConfig, cache: dict, dlogits: np.ndarray) -> dict:
    """Gradients of ``sum(dlogits * logits)`` w.r.t. every parameter."""
    grads: dict[str, np.ndarray] = {}
    x: EncodedBatch = cache["x"]
    dout = dlogits[:, None]
    dd1, grads["fc2_w"], grads["fc2_b"] = nn.dense_backward(dout, cache["d1"], params["fc2_w"])
    da1 = nn.dropout_backward(dd1, cache["mask"])
    dz1 = nn.relu_backward(da1, cache["z1"])
    dfeats, grads["fc1_w"], grads["fc1_b"] = nn.dense_backward(
        dz1, cache["feats"], params["fc1_w"]
    )
    mw, hw = cache["msgid_width"], cache["hdr_width"]
    dmsgid = dfeats[:, :mw].reshape(cache["msgid_out_shape"])
    dhdr = dfeats[:, mw : mw + hw]

    harg, ht = cache["header_pool"]
    dzh = nn.relu_backward(nn.global_maxpool_backward(dhdr, harg, ht), cache["header_conv"][1])
    dg, grads["header_conv_w"], grads["header_conv_b"] = nn.conv1d_backward(
        dzh, cache["header_conv"][0], params["header_conv_w"]
    )
    grads["header_embed"] = nn.embedding_backward(
        x.header_ids, dg, params["header_embed"].shape[0]
    )

    dh = dmsgid
    for i in reversed(range(len(cfg.msgid_kernel_sizes))):
        if i in cfg.msgid_pool_after:
            arg, t = cache[f"msgid_pool{i}"]
            dh = nn.maxpool1d_backward(dh, arg, t)
        conv_cache, z = cache[f"msgid_conv{i}"]
        dz = nn.relu_backward(dh, z)
        dh, grads[f"msgid_conv{i}_w"], grads[f"msgid_conv{i}_b"] = nn.conv1d_backward(
            dz, conv_cache, params[f"msgid_conv{i}_w"]
        )
    grads["char_embed"] = nn.embedding_backward(
        x.msgid_ids, dh, params["char_embed"].shape[0]
    )
    return {name: grads[name] for name in params}


def forward(
    m: TrainedModel, x: EncodedExample, train: bool = False, seed: int | None = None
) -> float:
    """Spam probability of one example. ``train=True`` applies dropout seeded by ``seed``."""
    batch = EncodedBatch.stack([x])
    _check_batch(m, batch)
    rng = np.random.default_rng(seed) if train else None
    logits, _ = forward_logits(m.params, m.config, batch, train=train, rng=rng)
    return float(nn.sigmoid(logits[0]))


def predict_batch(m: TrainedModel, xs: EncodedBatch, chunk: int = 1024) -> np.ndarray:
    if len(xs) == 0:
        return np.zeros(0)
    _check_batch(m, xs)
    out = np.empty(len(xs))
    t0 = time.perf_counter()
    for start in range(0, len(xs), chunk):
        part = xs.take(slice(start, start + chunk))
        logits, _ = forward_logits(m.params, m.config, part)
        out[start : start + len(part)] = nn.sigmoid(logits)
    dt = time.perf_counter() - t0
    log.debug("scored %d examples in %.3fs (%.0f/s)", len(xs), dt, len(xs) / max(dt, 1e-9))
    return out


# -- training --------------------------------------------------------------


def train(
    m: TrainedModel,
    data: EncodedBatch,
    tc: TrainConfig = TrainConfig(),
    fingerprint: str = "",
) -> tuple[TrainedModel, list[dict]]:
    """Mini-batch SGD with momentum on mean binary cross-entropy.

    The learning rate is halved every ``tc.lr_halving_period`` epochs. Shuffling
    and dropout draw from generators derived from ``tc.seed``.
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    if data.labels is None:
        raise ValueError("training data needs labels")
    _check_batch(m, data)
    params = {k: v.copy() for k, v in m.params.items()}
    state = nn.OptimizerState(lr=tc.lr_initial, momentum=tc.momentum)
    shuffle_seed, dropout_seed = np.random.SeedSequence(tc.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seed)
    dropout_rng = np.random.default_rng(dropout_seed)
    y_all = data.labels.astype(np.float64)
    n = len(data)
    history = []
    for epoch in range(tc.epochs):
        state.lr = tc.lr_at(epoch)
        order = shuffle_rng.permutation(n)
        total_loss = 0.0
        correct = 0
        t0 = time.perf_counter()
        for start in range(0, n, tc.batch_size):
            idx = order[start : start + tc.batch_size]
            batch = data.take(idx)
            y = y_all[idx]
            logits, cache = forward_logits(
                params, m.config, batch, train=True, rng=dropout_rng
            )
            loss, dlogit = nn.bce_loss(logits, y)
            total_loss += float(loss.sum())
            correct += int(((logits >= 0) == (y > 0.5)).sum())
            grads = backward(params, m.config, cache, dlogit / len(idx))
            nn.sgd_momentum_step(params, grads, state)
        rec = {
            "epoch": epoch,
            "lr": state.lr,
            "loss": total_loss / n,
            "accuracy": correct / n,
        }
        history.append(rec)
        log.info(
            "epoch %d lr=%.5g loss=%.5f acc=%.4f (%.1fs)",
            epoch, state.lr, rec["loss"], rec["accuracy"], time.perf_counter() - t0,
        )
    trained = TrainedModel(
        config=m.config, vocabs=m.vocabs, params=params, threshold=None,
        fingerprint=fingerprint or m.fingerprint,
    )
    return trained, history


# -- persistence -----------------------------------------------------------


def save_model(m: TrainedModel, path) -> None:
    manifest = {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "model_version": m.version,
        "config": dataclasses.asdict(m.config),
        "msgid_len": m.vocabs.msgid_len,
        "vocabs": {
            "char": m.vocabs.chars.to_text(),
            "header": m.vocabs.headers.to_text(),
            "mua": m.vocabs.mua.to_text(),
        },
        "threshold": m.threshold,
        "training_fingerprint": m.fingerprint,
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(serialize.dumps(m.params, manifest))
    tmp.replace(path)


def load_model(path) -> TrainedModel:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise ModelFileError(f"cannot read model file {path}: {exc}") from None
    try:
        params, meta = serialize.loads(blob)
    except serialize.FormatError as exc:
        raise ModelFileError(f"{path}: {exc}") from None
    if meta.get("format") != MODEL_FORMAT:
        raise ModelFileError(f"{path}: not a {MODEL_FORMAT} file")
    if meta.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFileError(
            f"{path}: unsupported model version {meta.get('format_version')!r}"
        )
    try:
        cfg = ModelConfig.from_dict(meta["config"])
        vocabs = FeatureVocabs(
            chars=vocab_from_text(meta["vocabs"]["char"]),
            headers=vocab_from_text(meta["vocabs"]["header"]),
            mua=vocab_from_text(meta["vocabs"]["mua"]),
            msgid_len=int(meta["msgid_len"]),
        )
        m = TrainedModel(
            config=cfg, vocabs=vocabs, params=params, threshold=meta["threshold"],
            version=meta["model_version"], fingerprint=meta["training_fingerprint"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"{path}: corrupt manifest: {exc}") from None
    expected = build_model(cfg, vocabs).params
    for name, arr in expected.items():
        if name not in params or params[name].shape != arr.shape:
            raise ModelFileError(f"{path}: parameter {name!r} missing or misshaped")
    return m
