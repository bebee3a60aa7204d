import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from dime.netcore import HeterogeneousNetwork  # noqa: E402

WORDS = [f"w{i}" for i in range(6)]
LOCATIONS = [f"l{i}" for i in range(4)]
# a few stamps that collide in hour-of-week buckets
STAMPS = [0, 1800, 3600, 7200, 604800, 608400, 86400 * 3]


def random_network(rng, max_users=20, max_posts=30, edge_p=None):
    """A random attributed network drawn with a numpy generator."""
    n = int(rng.integers(1, max_users + 1))
    p = edge_p if edge_p is not None else float(rng.uniform(0.0, 0.4))
    hit = rng.random((n, n)) < p
    np.fill_diagonal(hit, False)
    follow = np.argwhere(hit)
    n_posts = int(rng.integers(0, max_posts + 1))

    def pick(pool, hi):
        k = int(rng.integers(0, hi + 1))
        return {pool[i] for i in rng.choice(len(pool), size=k, replace=False)} if k else set()

    return HeterogeneousNetwork(
        user_ids=[f"u{i}" for i in range(n)],
        post_ids=[f"p{i}" for i in range(n_posts)],
        post_author=rng.integers(0, n, size=n_posts),
        follow=follow,
        post_words=[pick(WORDS, 3) for _ in range(n_posts)],
        post_timestamps=[{int(t) for t in pick(STAMPS, 2)} for _ in range(n_posts)],
        post_locations=[pick(LOCATIONS, 1) for _ in range(n_posts)],
    )


@st.composite
def networks(draw, max_users=12, max_posts=15):
    """Hypothesis strategy for small attributed networks."""
    seed = draw(st.integers(0, 2**32 - 1))
    return random_network(np.random.default_rng(seed), max_users, max_posts)


@pytest.fixture
def four_node_net():
    # u1->u2, u1->u3, u4->u2
    return HeterogeneousNetwork(
        user_ids=["u1", "u2", "u3", "u4"], follow=[(0, 1), (0, 2), (3, 1)]
    )


# acceptance reporting -------------------------------------------------------

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    """Record one ``PASS``/``FAIL`` line per acceptance criterion."""
    def record(criterion, ok, detail):
        line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
