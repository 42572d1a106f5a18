import random
from dataclasses import dataclass

import pytest

from headerq.features import build_vocabs


@dataclass(frozen=True)
class Rec:
    message_id: str | None
    header_seq: tuple
    x_mailer: str | None
    label: int = 0


def random_records(n: int, seed: int = 0) -> list[Rec]:
    rng = random.Random(seed)
    names = ["from", "to", "subject", "date", "message-id", "x-mailer", "mime-version"]
    mailers = [None, "Outlook 16.0", "Thunderbird 91", "mutt/2.0", ""]
    out = []
    for _ in range(n):
        mid = "".join(rng.choice("abcXYZ0189.@-_$") for _ in range(rng.randint(0, 80)))
        seq = tuple(rng.choice(names) for _ in range(rng.randint(0, 9)))
        out.append(Rec(f"<{mid}>", seq, rng.choice(mailers), rng.randint(0, 1)))
    return out


@pytest.fixture
def small_records():
    return random_records(64, seed=11)


@pytest.fixture
def small_vocabs(small_records):
    return build_vocabs(small_records)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
