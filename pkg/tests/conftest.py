import numpy as np
import pytest

from irrigate.core import Branch, MultiplicityProfile, Network


@pytest.fixture
def rng():
    return np.random.default_rng(20260821)


@pytest.fixture
def five_branch_tree() -> Network:
    """Two-generation tree: 1 feeds 2 and 3, 3 feeds 4 and 5."""
    up = 1.0
    b1 = Branch(1, None, (0.0, 0.0), (0.0, up), MultiplicityProfile.constant(3.0))
    b2 = Branch(2, 1, (0.0, up), (-1.0, 2.0), MultiplicityProfile.constant(1.0))
    b3 = Branch(3, 1, (0.0, up), (1.0, 2.0), MultiplicityProfile.constant(2.0))
    b4 = Branch(4, 3, (1.0, 2.0), (0.5, 3.0), MultiplicityProfile.constant(1.0))
    b5 = Branch(5, 3, (1.0, 2.0), (1.5, 3.0), MultiplicityProfile.constant(1.0))
    return Network.from_branches((0.0, 0.0), [b1, b2, b3, b4, b5])


@pytest.fixture
def unit_branch() -> Branch:
    return Branch(0, None, (0.0, 0.0), (1.0, 0.0), MultiplicityProfile.constant(1.0))
