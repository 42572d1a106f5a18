"""Seeded synthetic mail-metadata corpora.

Legitimate traffic comes from a handful of mail-client families, each with
its own Message-ID shape, header order and X-Mailer string. Spam comes from
time-bounded campaigns whose sending software either produces random
identifiers or imitates one of the legitimate families imperfectly.

Arrivals are homogeneous Poisson processes conditioned on their totals: the
number of messages per source is fixed first (multinomial over source
weights), then each message gets a uniform timestamp inside its source's
active window.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import random
import re
import string
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

log = logging.getLogger(__name__)

CORPUS_FIELDS = ("ts", "message_id", "header_seq", "x_mailer", "label", "campaign_id")
BEHAVIORS = ("random_id", "truncated_mimicry", "wrong_header_order", "missing_x_mailer")
DEFAULT_START_TS = 1561939200  # 2019-07-01T00:00:00Z

HOUR = 3600
DAY = 24 * HOUR


class CorpusConfigError(ValueError):
    pass


class CorpusFormatError(ValueError):
    pass


@dataclass(frozen=True)
class MessageRecord:
    ts: int
    message_id: str | None
    header_seq: tuple[str, ...]
    x_mailer: str | None
    label: int
    campaign_id: str | None = None

    @property
    def timestamp(self) -> int:
        return self.ts

    def to_json(self) -> str:
        return json.dumps(
            {
                "ts": self.ts,
                "message_id": self.message_id,
                "header_seq": list(self.header_seq),
                "x_mailer": self.x_mailer,
                "label": self.label,
                "campaign_id": self.campaign_id,
            },
            ensure_ascii=False,
            separators=(",", ":"),
        )


# -- client families -------------------------------------------------------

_HEX = "0123456789abcdef"
_UHEX = _HEX.upper()
_ALNUM = string.ascii_letters + string.digits
_B64ISH = _ALNUM + "_+=-"
_DOMAIN_RE = r"[a-z0-9\-]+(?:\.[a-z0-9\-]+)+"


def _rand(rng: random.Random, alphabet: str, n: int) -> str:
    return "".join(rng.choice(alphabet) for _ in range(n))


def _uuid(rng, alphabet):
    return "-".join(_rand(rng, alphabet, n) for n in (8, 4, 4, 4, 12))


def _outlook_local(rng):
    server = (
        _rand(rng, string.ascii_uppercase, 2) + str(rng.randint(1, 9))
        + _rand(rng, string.ascii_uppercase, 2) + f"{rng.randint(0, 99):02d}MB"
        + f"{rng.randint(0, 9999):04d}"
    )
    return server, server + _rand(rng, _UHEX, 24)


def _msgid_outlook(rng, domain):
    server, local = _outlook_local(rng)
    return f"{local}@{server.lower()}.eurprd{rng.randint(1, 9):02d}.prod.outlook.com"


def _msgid_thunderbird(rng, domain):
    return f"{_uuid(rng, _HEX)}@{domain}"


def _msgid_gmail(rng, domain):
    return "CA" + _rand(rng, _B64ISH, 46) + "@mail.gmail.com"


def _msgid_apple(rng, domain):
    return f"{_uuid(rng, _UHEX)}@{domain}"


def _msgid_phpmailer(rng, domain):
    return f"{_rand(rng, _HEX, 32)}@{domain}"


def _msgid_mutt(rng, domain):
    stamp = f"2019{rng.randint(1, 12):02d}{rng.randint(1, 28):02d}" + _rand(rng, string.digits, 6)
    host = rng.choice(("mail", "host", "box", "ws", "srv")) + str(rng.randint(1, 40))
    return f"{stamp}.G{rng.choice(string.ascii_uppercase)}{rng.randint(1000, 99999)}@{host}.{domain}"


_MSGID_GENERATORS = {
    "outlook": _msgid_outlook,
    "thunderbird": _msgid_thunderbird,
    "gmail": _msgid_gmail,
    "apple": _msgid_apple,
    "phpmailer": _msgid_phpmailer,
    "mutt": _msgid_mutt,
}


@dataclass(frozen=True)
class MuaProfile:
    """A legitimate mail-client family.

    ``header_order`` lists the canonical header names; ``drop_prob`` holds
    one omission probability per position. ``x_mailer_strings`` are picked
    uniformly when the header is emitted (with probability ``x_mailer_prob``).
    """

    name: str
    msgid_template: str  # regex matching every identifier the family produces
    header_order: tuple[str, ...]
    drop_prob: tuple[float, ...]
    x_mailer_strings: tuple[str, ...] = ()
    x_mailer_prob: float = 0.0
    legit_weight: float = 1.0

    def __post_init__(self):
        if not self.header_order:
            raise CorpusConfigError(f"profile {self.name}: empty header_order")
        if len(self.drop_prob) != len(self.header_order):
            raise CorpusConfigError(f"profile {self.name}: drop_prob length mismatch")
        if not all(0.0 <= p <= 1.0 for p in self.drop_prob + (self.x_mailer_prob,)):
            raise CorpusConfigError(f"profile {self.name}: probabilities outside [0, 1]")
        if self.name not in _MSGID_GENERATORS:
            raise CorpusConfigError(f"profile {self.name}: no Message-ID generator")

    def matches(self, message_id: str | None) -> bool:
        return message_id is not None and _compiled(self.msgid_template).fullmatch(message_id) is not None

    def make_message_id(self, rng: random.Random, domain: str) -> str:
        return _MSGID_GENERATORS[self.name](rng, domain)


_REGEX_CACHE: dict[str, re.Pattern] = {}


def _compiled(pattern: str) -> re.Pattern:
    rx = _REGEX_CACHE.get(pattern)
    if rx is None:
        rx = _REGEX_CACHE[pattern] = re.compile(pattern)
    return rx


def _profile(name, template, order, x_mailers=(), x_prob=0.0, weight=1.0, optional=()):
    drops = tuple(
        0.35 if h in optional else (0.0 if h in ("from", "message-id", "x-mailer") else 0.02)
        for h in order
    )
    return MuaProfile(name, template, tuple(order), drops, tuple(x_mailers), x_prob, weight)


def default_profiles() -> tuple[MuaProfile, ...]:
    uuid_lower = r"[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}"
    return (
        _profile(
            "outlook",
            r"[A-Z]{2}\d[A-Z]{2}\d{2}MB\d{4}[0-9A-F]{24}@[a-z]{2}\d[a-z]{2}\d{2}mb\d{4}"
            r"\.eurprd\d{2}\.prod\.outlook\.com",
            ["received", "received", "from", "to", "cc", "subject", "thread-topic",
             "thread-index", "date", "message-id", "references", "in-reply-to",
             "accept-language", "content-language", "x-ms-has-attach",
             "x-ms-tnef-correlator", "x-mailer", "content-type", "mime-version"],
            ("Microsoft Outlook 16.0", "Microsoft Outlook 15.0",
             "Microsoft Windows Live Mail 14.0.8117.416", "Microsoft Office Outlook 12.0"),
            1.0, 3.0, optional=("cc", "references", "in-reply-to"),
        ),
        _profile(
            "thunderbird", uuid_lower + "@" + _DOMAIN_RE,
            ["received", "to", "cc", "from", "subject", "message-id", "date",
             "user-agent", "mime-version", "in-reply-to", "content-type",
             "content-language", "content-transfer-encoding"],
            weight=1.5, optional=("cc", "in-reply-to", "content-language"),
        ),
        _profile(
            "gmail", r"CA[A-Za-z0-9_+=\-]{46}@mail\.gmail\.com",
            ["received", "dkim-signature", "x-google-dkim-signature",
             "x-gm-message-state", "x-google-smtp-source", "mime-version",
             "references", "in-reply-to", "from", "date", "message-id", "subject",
             "to", "cc", "content-type"],
            weight=3.0, optional=("references", "in-reply-to", "cc"),
        ),
        _profile(
            "apple", uuid_lower.replace("a-f", "A-F") + "@" + _DOMAIN_RE,
            ["received", "from", "content-type", "mime-version", "subject",
             "message-id", "date", "cc", "to", "in-reply-to", "x-mailer"],
            ("Apple Mail (2.3445.104.11)", "Apple Mail (2.3608.120.23.2.4)",
             "iPhone Mail (16F203)"),
            1.0, 1.5, optional=("cc", "in-reply-to"),
        ),
        _profile(
            "phpmailer", r"[0-9a-f]{32}@" + _DOMAIN_RE,
            ["received", "date", "to", "from", "reply-to", "subject", "message-id",
             "x-mailer", "list-unsubscribe", "mime-version", "content-type"],
            ("PHPMailer 6.0.7 (https://github.com/PHPMailer/PHPMailer)",
             "PHPMailer 5.2.22 (https://github.com/PHPMailer/PHPMailer)"),
            1.0, 2.0, optional=("reply-to", "list-unsubscribe"),
        ),
        _profile(
            "mutt", r"\d{14}\.G[A-Z]\d{4,5}@[a-z]+\d+\." + _DOMAIN_RE,
            ["received", "date", "from", "to", "cc", "subject", "message-id",
             "references", "mime-version", "content-type", "content-disposition",
             "in-reply-to", "user-agent"],
            weight=0.8, optional=("cc", "references", "in-reply-to", "content-disposition"),
        ),
    )


_SYLLABLES = ("ka", "lo", "mi", "ne", "ro", "ta", "vi", "sa", "tor", "lan", "ber",
              "com", "net", "dex", "ville", "ford", "ston", "mar", "pol", "tek")
_HAM_TLDS = ("com", "org", "net", "de", "co.uk", "io", "edu", "fr")
_SPAM_TLDS = ("ru", "info", "top", "xyz", "biz", "cn", "club", "win")
_NOISE_HEADERS = ("x-originating-ip", "x-priority", "x-spam-score", "organization",
                  "x-virus-scanned", "importance", "x-antivirus", "return-path",
                  "disposition-notification-to")


def _ham_domain(rng: random.Random) -> str:
    name = "".join(rng.choice(_SYLLABLES) for _ in range(rng.randint(2, 3)))
    if rng.random() < 0.2:
        name += "-" + rng.choice(("mail", "group", "corp", "labs"))
    return f"{name}.{rng.choice(_HAM_TLDS)}"


def _spam_domain(rng: random.Random) -> str:
    name = _rand(rng, string.ascii_lowercase + string.digits, rng.randint(5, 12))
    return f"{name}.{rng.choice(_SPAM_TLDS)}"


# -- campaigns -------------------------------------------------------------


@dataclass(frozen=True)
class SpamCampaignProfile:
    """One spam campaign.

    ``behavior`` is one of :data:`BEHAVIORS`. Mimicking behaviors copy the
    legitimate family ``target``; ``mutation_rate`` scales how badly. The
    baseline filter learns the campaign ``signature_detect_delay`` seconds
    after ``start_time``.
    """

    campaign_id: str
    start_time: int
    end_time: int
    behavior: str
    mutation_rate: float
    volume_rate: float
    signature_detect_delay: int
    target: str | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.start_time < self.end_time:
            raise CorpusConfigError(f"campaign {self.campaign_id}: start >= end")
        if not 0.0 < self.mutation_rate <= 1.0:
            raise CorpusConfigError(f"campaign {self.campaign_id}: mutation_rate not in (0, 1]")
        if self.signature_detect_delay < 0:
            raise CorpusConfigError(f"campaign {self.campaign_id}: negative detect delay")
        if self.behavior not in BEHAVIORS:
            raise CorpusConfigError(f"campaign {self.campaign_id}: unknown behavior {self.behavior!r}")
        if self.volume_rate <= 0:
            raise CorpusConfigError(f"campaign {self.campaign_id}: volume_rate must be positive")

    @property
    def signature_time(self) -> int:
        return self.start_time + self.signature_detect_delay

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True, separators=(",", ":"))


def campaign_kinds(profiles: Sequence[MuaProfile]) -> list[tuple[str, str | None]]:
    """Every (behavior, mimicked family) pair the default generator can emit."""
    kinds: list[tuple[str, str | None]] = [("random_id", None)]
    for p in profiles:
        kinds.append(("truncated_mimicry", p.name))
        kinds.append(("wrong_header_order", p.name))
        if p.x_mailer_strings:
            kinds.append(("missing_x_mailer", p.name))
    return kinds


def default_campaigns(
    seed: int,
    start_ts: int = DEFAULT_START_TS,
    span_days: float = 28.0,
    n_campaigns: int = 96,
    profiles: Sequence[MuaProfile] | None = None,
) -> list[SpamCampaignProfile]:
    """Campaigns with uniform start times over the span.

    Kinds are dealt from repeatedly shuffled decks of :func:`campaign_kinds`,
    so spam tooling recurs over time the way reused kits do.
    """
    profiles = tuple(profiles or default_profiles())
    rng = random.Random(f"campaigns:{seed}")
    end_ts = start_ts + int(span_days * DAY)
    kinds = campaign_kinds(profiles)
    deck: list[tuple[str, str | None]] = []
    out = []
    for i in range(n_campaigns):
        if not deck:
            deck = list(kinds)
            rng.shuffle(deck)
        behavior, target = deck.pop()
        duration = int(rng.uniform(6 * HOUR, 72 * HOUR))
        start = int(rng.uniform(start_ts - DAY, end_ts - 6 * HOUR))
        out.append(
            SpamCampaignProfile(
                campaign_id=f"c{i:03d}",
                start_time=start,
                end_time=start + duration,
                behavior=behavior,
                mutation_rate=round(rng.uniform(0.15, 0.6), 3),
                volume_rate=round(math.exp(rng.gauss(math.log(30.0), 0.5)), 3),
                signature_detect_delay=int(rng.uniform(0.5 * HOUR, 6 * HOUR)),
                target=target,
                seed=rng.getrandbits(32),
            )
        )
    return out


class _CampaignStyle:
    """Per-campaign fixed choices, so a campaign keeps a consistent fingerprint."""

    def __init__(self, c: SpamCampaignProfile, profiles: dict[str, MuaProfile]):
        rng = random.Random(c.seed)
        self.c = c
        self.target = profiles.get(c.target) if c.target else None
        self.domains = [_spam_domain(rng) for _ in range(rng.randint(1, 4))]
        # borrowed-looking domains only where another tell remains
        if c.behavior in ("truncated_mimicry", "wrong_header_order") and rng.random() < 0.35:
            self.domains = [_ham_domain(rng) for _ in range(rng.randint(1, 3))]
        common = ["received", "from", "to", "subject", "date", "message-id",
                  "mime-version", "content-type", "reply-to", "x-priority",
                  "content-transfer-encoding", "list-unsubscribe"]
        rng.shuffle(common)
        self.random_order = common[: rng.randint(5, len(common))]
        charset = _ALNUM
        if rng.random() < 0.5:
            charset += rng.choice(("#%", "!&", "._", "$$==", "--"))
        self.charset = charset
        lo = rng.randint(6, 24)
        self.id_len = (lo, lo + rng.randint(0, 16))
        self.random_mailer = rng.choice(
            (None, None, f"{_rand(rng, string.ascii_letters, rng.randint(4, 9))} {rng.randint(1, 9)}.{rng.randint(0, 9)}")
        )
        if self.target is not None:
            order = list(self.target.header_order)
            swaps = max(1, round(c.mutation_rate * len(order) / 2))
            for _ in range(swaps):
                # two distinct names, so every swap really changes the order
                a = rng.randrange(len(order))
                b = rng.choice([j for j in range(len(order)) if order[j] != order[a]])
                order[a], order[b] = order[b], order[a]
            self.shuffled_order = order
            self.keep_frac = rng.uniform(0.45, 0.9)

    def record(self, rng: random.Random, ts: int) -> MessageRecord:
        c, target = self.c, self.target
        domain = rng.choice(self.domains)
        if c.behavior == "random_id":
            local = _rand(rng, self.charset, rng.randint(*self.id_len))
            mid = f"{local}@{domain}"
            headers = [h for h in self.random_order if rng.random() > 0.05]
            mailer = self.random_mailer
        else:
            mid = target.make_message_id(rng, domain)
            mailer = rng.choice(target.x_mailer_strings) if target.x_mailer_strings else None
            order = target.header_order
            if c.behavior == "truncated_mimicry":
                local, _, dom = mid.partition("@")
                local = "".join(
                    rng.choice(_ALNUM) if rng.random() < c.mutation_rate / 3 else ch
                    for ch in local[: max(4, int(len(local) * self.keep_frac))]
                )
                mid = f"{local}@{dom if rng.random() < 0.5 else domain}"
            elif c.behavior == "wrong_header_order":
                order = self.shuffled_order
            else:
                mailer = None
            headers = [
                h for h, p in zip(order, target.drop_prob)
                if h != "x-mailer" and rng.random() >= p
            ]
            if mailer is not None:
                if "x-mailer" in order:
                    headers.insert(min(order.index("x-mailer"), len(headers)), "x-mailer")
                else:
                    headers.append("x-mailer")
        if mailer is not None and "x-mailer" not in headers:
            headers.append("x-mailer")
        if mailer is None:
            headers = [h for h in headers if h != "x-mailer"]
        return MessageRecord(ts, mid, tuple(headers), mailer, 1, c.campaign_id)


def _ham_record(rng: random.Random, p: MuaProfile, domains: Sequence[str], ts: int) -> MessageRecord:
    mid = p.make_message_id(rng, rng.choice(domains))
    mailer = None
    if p.x_mailer_strings and rng.random() < p.x_mailer_prob:
        mailer = rng.choice(p.x_mailer_strings)
    headers = []
    for h, drop in zip(p.header_order, p.drop_prob):
        if h == "x-mailer":
            if mailer is not None:
                headers.append(h)
        elif rng.random() >= drop:
            headers.append(h)
    extra_received = rng.randint(0, 2)
    headers[:0] = ["received"] * extra_received
    if rng.random() < 0.15:
        headers.insert(rng.randint(0, len(headers)), rng.choice(_NOISE_HEADERS))
    return MessageRecord(ts, mid, tuple(headers), mailer, 0, None)


# -- generation ------------------------------------------------------------


@dataclass
class GenConfig:
    n_messages: int = 60000
    spam_fraction: float = 0.4
    seed: int = 0
    start_ts: int = DEFAULT_START_TS
    span_days: float = 28.0
    n_campaigns: int = 96
    n_ham_domains: int = 60
    # robustness experiments only: each label flips with this probability and
    # the record keeps its true campaign_id
    label_flip_rate: float = 0.0
    profiles: tuple[MuaProfile, ...] | None = None
    campaigns: list[SpamCampaignProfile] | None = None

    def __post_init__(self):
        if self.n_messages < 1:
            raise CorpusConfigError("n_messages must be >= 1")
        if not 0.0 <= self.spam_fraction < 1.0:
            raise CorpusConfigError("spam_fraction must be in [0, 1)")
        if self.span_days <= 0:
            raise CorpusConfigError("span_days must be positive")
        if not 0.0 <= self.label_flip_rate <= 1.0:
            raise CorpusConfigError("label_flip_rate must be in [0, 1]")

    @property
    def end_ts(self) -> int:
        return self.start_ts + int(self.span_days * DAY)

    def resolved_profiles(self) -> tuple[MuaProfile, ...]:
        return tuple(self.profiles) if self.profiles else default_profiles()

    def resolved_campaigns(self) -> list[SpamCampaignProfile]:
        if self.campaigns is not None:
            return list(self.campaigns)
        return default_campaigns(
            self.seed, self.start_ts, self.span_days, self.n_campaigns,
            self.resolved_profiles(),
        )

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        allowed = {"n_messages", "spam_fraction", "seed", "start_ts", "span_days",
                   "n_campaigns", "n_ham_domains", "label_flip_rate"}
        unknown = set(d) - allowed
        if unknown:
            raise CorpusConfigError(f"unknown generator config keys: {sorted(unknown)}")
        return cls(**d)


def _multinomial(rng: random.Random, n: int, weights: Sequence[float]) -> list[int]:
    total = sum(weights)
    counts = [0] * len(weights)
    for i in rng.choices(range(len(weights)), weights=[w / total for w in weights], k=n):
        counts[i] += 1
    return counts


def generate_corpus(g: GenConfig) -> list[MessageRecord]:
    """Generate a timestamp-sorted corpus; identical for identical configs."""
    profiles = g.resolved_profiles()
    by_name = {p.name: p for p in profiles}
    campaigns = g.resolved_campaigns()
    rng = random.Random(f"corpus:{g.seed}")
    n_spam = round(g.n_messages * g.spam_fraction)
    n_ham = g.n_messages - n_spam
    start, end = g.start_ts, g.end_ts

    windows = []
    for c in campaigns:
        lo, hi = max(c.start_time, start), min(c.end_time, end)
        if hi > lo:
            windows.append((c, lo, hi))
    if n_spam and not windows:
        raise CorpusConfigError("spam_fraction > 0 but no campaign overlaps the time span")

    domains = sorted({_ham_domain(rng) for _ in range(g.n_ham_domains)})
    records: list[MessageRecord] = []
    ham_counts = _multinomial(rng, n_ham, [p.legit_weight for p in profiles])
    for p, count in zip(profiles, ham_counts):
        for _ in range(count):
            records.append(_ham_record(rng, p, domains, rng.randrange(start, end)))

    if n_spam:
        spam_counts = _multinomial(rng, n_spam, [c.volume_rate * (hi - lo) for c, lo, hi in windows])
        for (c, lo, hi), count in zip(windows, spam_counts):
            style = _CampaignStyle(c, by_name)
            for _ in range(count):
                records.append(style.record(rng, rng.randrange(lo, hi)))

    order = sorted(range(len(records)), key=lambda i: (records[i].ts, i))
    records = [records[i] for i in order]
    if g.label_flip_rate:
        flip = random.Random(f"flip:{g.seed}")
        records = [
            dataclasses.replace(r, label=1 - r.label) if flip.random() < g.label_flip_rate else r
            for r in records
        ]
    return records


def split_by_time(
    corpus: Sequence[MessageRecord], train_fraction: float
) -> tuple[list[MessageRecord], list[MessageRecord]]:
    """Split a time-sorted corpus at the ``train_fraction`` timestamp quantile.

    Every record sharing the boundary timestamp goes to the training side.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    if not corpus:
        return [], []
    cut = max(1, math.ceil(train_fraction * len(corpus)))
    boundary = corpus[cut - 1].ts
    while cut < len(corpus) and corpus[cut].ts <= boundary:
        cut += 1
    train, test = list(corpus[:cut]), list(corpus[cut:])
    if not test:
        warnings.warn("time split produced an empty test set", RuntimeWarning, stacklevel=2)
    return train, test


def check_sorted(corpus: Sequence[MessageRecord]) -> None:
    for i in range(1, len(corpus)):
        if corpus[i].ts < corpus[i - 1].ts:
            raise ValueError(f"corpus not sorted by timestamp at record {i}")


# -- files -----------------------------------------------------------------


def write_corpus(records: Iterable[MessageRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(rec.to_json())
            fh.write("\n")


def _parse_record(obj, lineno: int) -> MessageRecord:
    if not isinstance(obj, dict):
        raise CorpusFormatError(f"line {lineno}: expected a JSON object")
    missing = [f for f in CORPUS_FIELDS if f not in obj]
    if missing:
        raise CorpusFormatError(f"line {lineno}: missing field(s) {', '.join(missing)}")
    ts, mid, seq, mailer, label, cid = (obj[f] for f in CORPUS_FIELDS)
    if not isinstance(ts, int) or isinstance(ts, bool):
        raise CorpusFormatError(f"line {lineno}: ts must be an integer")
    if not isinstance(seq, list) or not all(isinstance(h, str) for h in seq):
        raise CorpusFormatError(f"line {lineno}: header_seq must be a list of strings")
    if label not in (0, 1) or isinstance(label, bool):
        raise CorpusFormatError(f"line {lineno}: label must be 0 or 1")
    for name, val in (("message_id", mid), ("x_mailer", mailer), ("campaign_id", cid)):
        if val is not None and not isinstance(val, str):
            raise CorpusFormatError(f"line {lineno}: {name} must be a string or null")
    return MessageRecord(ts, mid, tuple(seq), mailer, label, cid)


def iter_corpus(path) -> Iterable[MessageRecord]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            yield _parse_record(obj, lineno)


def read_corpus(path) -> list[MessageRecord]:
    return list(iter_corpus(path))


def campaigns_path_for(corpus_path) -> Path:
    p = Path(corpus_path)
    return p.with_name(p.stem + ".campaigns.jsonl")


def write_campaigns(campaigns: Iterable[SpamCampaignProfile], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for c in campaigns:
            fh.write(c.to_json() + "\n")


def read_campaigns(path) -> list[SpamCampaignProfile]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(SpamCampaignProfile(**json.loads(line)))
            except (json.JSONDecodeError, TypeError) as exc:
                raise CorpusFormatError(f"campaign line {lineno}: {exc}") from None
    return out


def corpus_fingerprint(records: Iterable[MessageRecord]) -> str:
    import hashlib

    h = hashlib.sha256()
    for rec in records:
        h.update(rec.to_json().encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()[:16]
