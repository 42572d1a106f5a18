"""Header block parsing and extraction of the fields the classifier consumes."""

from __future__ import annotations

from dataclasses import dataclass

__all__ = [
    "ParsedHeaders",
    "parse_header_block",
    "clean_message_id",
    "extract_message_id",
    "header_sequence",
    "extract_x_mailer",
    "serialize_headers",
]


@dataclass(frozen=True)
class ParsedHeaders:
    """Ordered ``(name, value)`` entries of one header block.

    ``skipped`` counts lines that could not be attributed to any header
    (no colon, empty or whitespace-bearing name, or a continuation line
    with nothing to continue).
    """

    entries: tuple[tuple[str, str], ...] = ()
    skipped: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    def first(self, name: str) -> str | None:
        for key, value in self.entries:
            if key == name:
                return value
        return None


def _decode(raw: bytes | str) -> str:
    if isinstance(raw, bytes):
        # surrogateescape keeps arbitrary bytes round-trippable
        return raw.decode("utf-8", errors="surrogateescape")
    return raw


def _valid_name(name: str) -> bool:
    return bool(name) and not any(ch.isspace() for ch in name)


def parse_header_block(raw: bytes | str) -> ParsedHeaders:
    """Parse ``Name: value`` lines up to the first empty line.

    Lines are split on LF with one trailing CR removed, so both LF and CRLF
    input work. Folded continuation lines (leading space or tab) are joined
    to the previous value with the fold's line break removed and its
    whitespace kept. Parsing never fails: unusable lines are skipped and
    tallied in :attr:`ParsedHeaders.skipped`.
    """
    text = _decode(raw)
    names: list[str] = []
    values: list[list[str]] = []
    skipped = 0
    for line in text.split("\n"):
        if line.endswith("\r"):
            line = line[:-1]
        if line == "":
            break
        if line[0] in " \t":
            if values:
                values[-1].append(line)
            else:
                skipped += 1
            continue
        name, sep, value = line.partition(":")
        name = name.strip().lower()
        if not sep or not _valid_name(name):
            skipped += 1
            continue
        names.append(name)
        values.append([value])
    entries = tuple(
        (name, "".join(parts).lstrip(" \t")) for name, parts in zip(names, values)
    )
    return ParsedHeaders(entries=entries, skipped=skipped)


def serialize_headers(h: ParsedHeaders) -> str:
    """Render entries as CRLF-terminated ``name: value`` lines."""
    return "".join(f"{name}: {value}\r\n" for name, value in h.entries)


def clean_message_id(value: str | None) -> str | None:
    """Strip surrounding whitespace and the angle-bracket pair, if any."""
    if value is None:
        return None
    value = value.strip()
    start = value.find("<")
    end = value.rfind(">")
    if start != -1 and end > start:
        value = value[start + 1 : end].strip()
    return value.replace("<", "").replace(">", "")


def extract_message_id(h: ParsedHeaders) -> str | None:
    return clean_message_id(h.first("message-id"))


def header_sequence(h: ParsedHeaders) -> list[str]:
    return [name for name, _ in h.entries]


def extract_x_mailer(h: ParsedHeaders) -> str | None:
    value = h.first("x-mailer")
    return None if value is None else value.strip()
