import random
import sys
from pathlib import Path

import pytest
from hypothesis import strategies as st

from stvmargin import Election, load_election, run_count

DATA = Path(__file__).parent / "data"


def with_count(election: Election) -> Election:
    return election.with_winners(run_count(election).elected)


@pytest.fixture
def example_a() -> Election:
    return with_count(load_election(str(DATA / "example_a.stv")))


@pytest.fixture
def example_b() -> Election:
    return with_count(load_election(str(DATA / "example_b.stv")))


def random_election(rng: random.Random, candidates=(3, 4), seats=(1, 2), ballots=(5, 20)) -> Election:
    n = rng.choice(candidates)
    total = rng.randint(*ballots)
    counts: dict = {}
    for _ in range(total):
        sig = tuple(rng.sample(range(n), rng.randint(1, n)))
        counts[sig] = counts.get(sig, 0) + 1
    names = [f"c{i + 1}" for i in range(n)]
    ranked = {tuple(names[c] for c in s): k for s, k in counts.items()}
    return with_count(Election.from_names(names, ranked, rng.choice(seats)))


@st.composite
def elections(draw, max_candidates: int = 4, max_ballots: int = 20):
    n = draw(st.integers(3, max_candidates))
    seats = draw(st.integers(1, min(2, n - 1)))
    ranking = st.permutations(range(n)).flatmap(
        lambda p: st.integers(1, n).map(lambda k: tuple(p[:k])))
    ballots = draw(st.lists(ranking, min_size=3, max_size=max_ballots))
    counts: dict = {}
    for sig in ballots:
        counts[sig] = counts.get(sig, 0) + 1
    names = [f"c{i + 1}" for i in range(n)]
    return with_count(Election.from_names(names, {tuple(names[c] for c in s): k
                                                  for s, k in counts.items()}, seats))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results, key=lambda k: int(k)):
        terminalreporter.write_line(results[key])
