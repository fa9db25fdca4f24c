"""Shared exact oracles.

The doubling and baker maps are piecewise linear with dyadic breakpoints, so
on a dyadic box fine enough for the depth of interest every point shares
one itinerary. Evaluating the map with exact rationals at box centres gives
the true measure of every refined cell.
"""

from fractions import Fraction
from itertools import product

import pytest


def doubling_exact(x: Fraction) -> Fraction:
    y = 2 * x
    return y - int(y)


def baker_exact(q: Fraction, p: Fraction):
    b = int(2 * q)
    return 2 * q - b, (p + b) / 2


def _cell(q, p, cells_q, cells_p):
    return int(p * cells_p) * cells_q + int(q * cells_q)


def exact_itinerary_measures(name, cells_q, cells_p, n, bits_q, bits_p=0):
    """Exact measures of the depth-n refined cells for a dyadic map."""
    out = {}
    w = Fraction(1, 2 ** (bits_q + bits_p))
    for i, j in product(range(2**bits_q), range(2**bits_p)):
        q = Fraction(2 * i + 1, 2 ** (bits_q + 1))
        p = Fraction(2 * j + 1, 2 ** (bits_p + 1))
        syms = []
        for k in range(n + 1):
            syms.append(_cell(q, p, cells_q, cells_p))
            if name == "doubling":
                q = doubling_exact(q)
            else:
                q, p = baker_exact(q, p)
        key = tuple(syms)
        out[key] = out.get(key, 0) + w
    return out


@pytest.fixture
def exact_measures():
    return exact_itinerary_measures


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line for an acceptance criterion, then assert it."""
    log = request.config.stash[_ACCEPTANCE]

    def check(number, title, ok, detail=""):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
        log.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
