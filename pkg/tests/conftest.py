import numpy as np
from hypothesis import strategies as st


def preorder_offspring(parents):
    """Child counts in depth-first order for a tree given by ``parents[i] < i + 1``."""
    n = len(parents) + 1
    kids = [[] for _ in range(n)]
    for child, p in enumerate(parents, start=1):
        kids[p].append(child)
    out, stack = [], [0]
    while stack:
        v = stack.pop()
        out.append(len(kids[v]))
        stack.extend(reversed(kids[v]))
    return np.array(out, dtype=np.int64)


@st.composite
def random_offspring(draw, max_size=60):
    """Preorder child counts of a random tree with 1..max_size vertices."""
    n = draw(st.integers(1, max_size))
    parents = [draw(st.integers(0, i)) for i in range(n - 1)]
    return preorder_offspring(parents)


def path_offspring(n):
    return np.array([1] * (n - 1) + [0], dtype=np.int64)


STAR = np.array([3, 0, 0, 0])
# root -> {a, b}, a -> {c}; preorder root, a, c, b
SMALL = np.array([2, 1, 0, 0])


# lines "ACn PASS|FAIL ..." collected by the acceptance tests
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
