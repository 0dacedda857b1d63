import os

import numpy as np
import pytest
from hypothesis import settings

from skewtransfer.branch_maps import make_dyadic_slopes, make_luroth
from skewtransfer.fiber import make_lipschitz_coeff, make_stepwise_alpha
from skewtransfer.skew import SkewSystem, compute_invariant

# fixed example streams so a run can be reproduced; HYPOTHESIS_PROFILE=explore searches afresh
settings.register_profile("repro", derandomize=True, database=None)
settings.register_profile("explore")
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repro"))


def odd_offset(i):
    return 0.5 * (np.asarray(i) % 2)


def dyadic_system():
    base = make_dyadic_slopes()
    return SkewSystem(base, make_stepwise_alpha(base, 0.5, odd_offset), 1, "dyadic")


def luroth_system():
    base = make_luroth()

    def coeffs(i, x):
        return 0.25 + 0.1 * (x - base.left(i))

    return SkewSystem(base, make_lipschitz_coeff(base, coeffs, 0.1, odd_offset), 1, "luroth_lip")


@pytest.fixture(scope="session")
def dyadic():
    return dyadic_system()


@pytest.fixture(scope="session")
def luroth_lip():
    return luroth_system()


@pytest.fixture(scope="session")
def dyadic_invariant(dyadic):
    return compute_invariant(dyadic, 256, 50)


@pytest.fixture(scope="session")
def luroth_invariant(luroth_lip):
    return compute_invariant(luroth_lip, 128, 30)
