from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

from nctorus.torus import Element, TorusParams

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

GOLDEN = (3 - math.sqrt(5)) / 2
TAU = complex(-0.3, -1.1)


@pytest.fixture
def params() -> TorusParams:
    return TorusParams(GOLDEN, TAU)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


small_ints = st.integers(min_value=-3, max_value=3)
lattice = st.tuples(small_ints, small_ints)
coeff = st.complex_numbers(max_magnitude=2.0, allow_nan=False, allow_infinity=False)


@st.composite
def elements(draw, max_size: int = 4, trace_zero: bool = False) -> Element:
    terms = draw(st.dictionaries(lattice, coeff, max_size=max_size))
    if trace_zero:
        terms.pop((0, 0), None)
    return Element(terms)


thetas = st.floats(min_value=-1.0, max_value=1.0, allow_nan=False)
taus = st.builds(
    complex,
    st.floats(min_value=-1.5, max_value=1.5),
    st.floats(min_value=-2.0, max_value=-0.3),
)


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance

    if test_acceptance.VERDICTS:
        terminalreporter.section("acceptance")
        for k in sorted(test_acceptance.VERDICTS):
            terminalreporter.write_line(test_acceptance.VERDICTS[k])
