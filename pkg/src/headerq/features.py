"""Fixed-shape encodings of Message-ID, header sequence and X-Mailer.

Every vocabulary keeps its learned/enumerated tokens first and its reserved
symbols last, so for a MUA table of ``N`` tokens the one-hot coordinate ``N``
is the unknown-program category and ``N + 1`` the missing-header category.
"""

from __future__ import annotations

import math
import string
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

import numpy as np

from .headers import clean_message_id

__all__ = [
    "EOS",
    "UNK",
    "UNKNOWN_MUA",
    "MISSING_MUA",
    "MSGID_ALPHABET",
    "Vocab",
    "CharVocab",
    "HeaderVocab",
    "MuaTable",
    "FeatureVocabs",
    "EncodedExample",
    "EncodedBatch",
    "build_char_vocab",
    "build_header_vocab",
    "build_mua_table",
    "build_vocabs",
    "encode_message_id",
    "encode_header_seq",
    "normalize_x_mailer",
    "encode_x_mailer",
    "encode_example",
    "encode_records",
    "nearest_rank_percentile",
]

EOS = "<EOS>"
UNK = "<UNK>"
UNKNOWN_MUA = "<UNKNOWN_MUA>"
MISSING_MUA = "<MISSING_MUA>"

MSGID_ALPHABET = (
    string.ascii_lowercase + string.ascii_uppercase + string.digits + "@.-_$+="
)

VOCAB_FORMAT = "headerq-vocab v1"


class RecordLike(Protocol):
    message_id: str | None
    header_seq: Sequence[str]
    x_mailer: str | None


@dataclass(frozen=True)
class Vocab:
    """Dense token -> index map; ``tokens[i]`` is the token at index ``i``."""

    kind: str
    tokens: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError(f"{self.kind} vocabulary has duplicate tokens")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def index(self, token: str) -> int:
        return self._index[token]

    def get(self, token: str, default: int) -> int:
        return self._index.get(token, default)

    def _meta(self) -> dict[str, str]:
        return {}

    def to_text(self) -> str:
        meta = " ".join(f"{k}={v}" for k, v in self._meta().items())
        head = f"# {VOCAB_FORMAT} kind={self.kind}" + (f" {meta}" if meta else "")
        lines = [head] + [f"{i}\t{tok}" for i, tok in enumerate(self.tokens)]
        return "\n".join(lines) + "\n"


class CharVocab(Vocab):
    @property
    def eos(self) -> int:
        return self.index(EOS)

    @property
    def unk(self) -> int:
        return self.index(UNK)

    @property
    def ascii_lut(self) -> np.ndarray:
        lut = getattr(self, "_lut", None)
        if lut is None:
            lut = np.full(128, self.unk, dtype=np.int64)
            for i, tok in enumerate(self.tokens):
                if len(tok) == 1 and ord(tok) < 128:
                    lut[ord(tok)] = i
            object.__setattr__(self, "_lut", lut)
        return lut


@dataclass(frozen=True)
class HeaderVocab(Vocab):
    seq_len: int = 1

    def __post_init__(self):
        super().__post_init__()
        if self.seq_len < 1:
            raise ValueError("seq_len must be >= 1")

    @property
    def eos(self) -> int:
        return self.index(EOS)

    @property
    def unk(self) -> int:
        return self.index(UNK)

    def _meta(self):
        return {"seq_len": str(self.seq_len)}


class MuaTable(Vocab):
    @property
    def unknown(self) -> int:
        return self.index(UNKNOWN_MUA)

    @property
    def missing(self) -> int:
        return self.index(MISSING_MUA)


def vocab_from_text(text: str) -> Vocab:
    """Inverse of :meth:`Vocab.to_text`."""
    lines = text.split("\n")
    head = lines[0]
    if not head.startswith(f"# {VOCAB_FORMAT} "):
        raise ValueError(f"unsupported vocabulary header: {head!r}")
    meta = dict(part.split("=", 1) for part in head[len(VOCAB_FORMAT) + 3 :].split())
    tokens = []
    for n, line in enumerate(lines[1:], start=2):
        if line == "":
            continue
        idx, sep, tok = line.partition("\t")
        if not sep or not idx.isdigit() or int(idx) != len(tokens):
            raise ValueError(f"vocabulary line {n}: expected '{len(tokens)}<TAB>token'")
        tokens.append(tok)
    kind = meta.get("kind")
    if kind == "char":
        return CharVocab("char", tuple(tokens))
    if kind == "header":
        return HeaderVocab("header", tuple(tokens), seq_len=int(meta["seq_len"]))
    if kind == "mua":
        return MuaTable("mua", tuple(tokens))
    raise ValueError(f"unknown vocabulary kind {kind!r}")


def build_char_vocab() -> CharVocab:
    return CharVocab("char", tuple(MSGID_ALPHABET) + (EOS, UNK))


def nearest_rank_percentile(values: Sequence[int], q: float) -> int:
    if not values:
        raise ValueError("empty corpus")
    ordered = sorted(values)
    rank = max(1, math.ceil(q / 100.0 * len(ordered)))
    return ordered[rank - 1]


def _top_k(counts: Counter, k: int) -> list[str]:
    return [tok for tok, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:k]]


def build_header_vocab(corpus: Iterable[RecordLike], k: int = 255) -> HeaderVocab:
    """Top-``k`` header names plus EOS/UNK; row count is the 95th percentile length."""
    if k < 1:
        raise ValueError("k must be positive")
    counts: Counter = Counter()
    lengths: list[int] = []
    for rec in corpus:
        counts.update(rec.header_seq)
        lengths.append(len(rec.header_seq))
    if not lengths:
        raise ValueError("empty corpus")
    seq_len = max(1, nearest_rank_percentile(lengths, 95))
    return HeaderVocab("header", tuple(_top_k(counts, k)) + (EOS, UNK), seq_len=seq_len)


def normalize_x_mailer(raw: str | None) -> str | None:
    """Reduce an X-Mailer value to its lowercased program family.

    Returns ``None`` (the missing category) for an absent or blank header.
    """
    if raw is None:
        return None
    parts = raw.split()
    return parts[0].lower() if parts else None


def build_mua_table(corpus: Iterable[RecordLike], n: int = 64) -> MuaTable:
    if n < 1:
        raise ValueError("n must be positive")
    counts: Counter = Counter()
    seen = False
    for rec in corpus:
        seen = True
        token = normalize_x_mailer(rec.x_mailer)
        if token is not None:
            counts[token] += 1
    if not seen:
        raise ValueError("empty corpus")
    return MuaTable("mua", tuple(_top_k(counts, n)) + (UNKNOWN_MUA, MISSING_MUA))


@dataclass(frozen=True)
class FeatureVocabs:
    chars: CharVocab
    headers: HeaderVocab
    mua: MuaTable
    msgid_len: int = 64

    @property
    def mua_dim(self) -> int:
        return len(self.mua)


def build_vocabs(
    corpus: Sequence[RecordLike], k: int = 255, n: int = 64, msgid_len: int = 64
) -> FeatureVocabs:
    if msgid_len < 1:
        raise ValueError("msgid_len must be >= 1")
    return FeatureVocabs(
        chars=build_char_vocab(),
        headers=build_header_vocab(corpus, k),
        mua=build_mua_table(corpus, n),
        msgid_len=msgid_len,
    )


def encode_message_id(raw: str | None, v: CharVocab, length: int = 64) -> np.ndarray:
    if length < 1:
        raise ValueError("length must be >= 1")
    out = np.full(length, v.eos, dtype=np.int64)
    raw = clean_message_id(raw)
    if not raw:
        return out
    raw = raw[:length]
    if raw.isascii():
        codes = np.frombuffer(raw.encode("ascii"), dtype=np.uint8)
        out[: len(raw)] = v.ascii_lut[codes]
    else:
        unk = v.unk
        out[: len(raw)] = [v.get(ch, unk) for ch in raw]
    return out


def encode_header_seq(names: Sequence[str], v: HeaderVocab) -> np.ndarray:
    out = np.full(v.seq_len, v.eos, dtype=np.int64)
    unk = v.unk
    for i, name in enumerate(names[: v.seq_len]):
        out[i] = v.get(name, unk)
    return out


def encode_x_mailer(token: str | None, t: MuaTable) -> np.ndarray:
    out = np.zeros(len(t), dtype=np.float64)
    out[t.missing if token is None else t.get(token, t.unknown)] = 1.0
    return out


@dataclass(frozen=True)
class EncodedExample:
    msgid_ids: np.ndarray
    header_ids: np.ndarray
    mua_onehot: np.ndarray
    label: int | None = None


@dataclass(frozen=True)
class EncodedBatch:
    """Row-stacked :class:`EncodedExample` arrays; ``labels`` may be None."""

    msgid_ids: np.ndarray
    header_ids: np.ndarray
    mua_onehot: np.ndarray
    labels: np.ndarray | None = None

    def __len__(self) -> int:
        return self.msgid_ids.shape[0]

    def take(self, idx) -> "EncodedBatch":
        return EncodedBatch(
            self.msgid_ids[idx],
            self.header_ids[idx],
            self.mua_onehot[idx],
            None if self.labels is None else self.labels[idx],
        )

    def example(self, i: int) -> EncodedExample:
        label = None if self.labels is None else int(self.labels[i])
        return EncodedExample(
            self.msgid_ids[i], self.header_ids[i], self.mua_onehot[i], label
        )

    @classmethod
    def stack(cls, examples: Sequence[EncodedExample]) -> "EncodedBatch":
        labels = [e.label for e in examples]
        return cls(
            np.array([e.msgid_ids for e in examples], dtype=np.int64),
            np.array([e.header_ids for e in examples], dtype=np.int64),
            np.array([e.mua_onehot for e in examples], dtype=np.float64),
            None if any(y is None for y in labels) else np.array(labels, dtype=np.int64),
        )


def encode_example(
    message_id: str | None,
    header_seq: Sequence[str],
    x_mailer: str | None,
    vocabs: FeatureVocabs,
    label: int | None = None,
) -> EncodedExample:
    return EncodedExample(
        msgid_ids=encode_message_id(message_id, vocabs.chars, vocabs.msgid_len),
        header_ids=encode_header_seq(header_seq, vocabs.headers),
        mua_onehot=encode_x_mailer(normalize_x_mailer(x_mailer), vocabs.mua),
        label=label,
    )


def encode_records(records: Sequence[RecordLike], vocabs: FeatureVocabs) -> EncodedBatch:
    n = len(records)
    msgid = np.empty((n, vocabs.msgid_len), dtype=np.int64)
    hdr = np.empty((n, vocabs.headers.seq_len), dtype=np.int64)
    mua = np.zeros((n, vocabs.mua_dim), dtype=np.float64)
    labels = np.empty(n, dtype=np.int64)
    have_labels = True
    table = vocabs.mua
    for i, rec in enumerate(records):
        msgid[i] = encode_message_id(rec.message_id, vocabs.chars, vocabs.msgid_len)
        hdr[i] = encode_header_seq(rec.header_seq, vocabs.headers)
        token = normalize_x_mailer(rec.x_mailer)
        mua[i, table.missing if token is None else table.get(token, table.unknown)] = 1.0
        label = getattr(rec, "label", None)
        if label is None:
            have_labels = False
        else:
            labels[i] = label
    return EncodedBatch(msgid, hdr, mua, labels if have_labels else None)
