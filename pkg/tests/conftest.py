import math

import numpy as np
import pytest

from gfbm_lab import validate
from gfbm_lab.smallball import SmallBallEstimate, wilson_interval


@pytest.fixture
def std_params():
    """Workhorse parameter set: gamma=0.5, alpha=0.2, theta=0.5 (beta=1.2)."""
    return validate(0.5, 0.2, 0.5)


@pytest.fixture
def bm_params():
    """Brownian base case: the kernel degenerates to an indicator."""
    return validate(0.0, 0.0, 1.0)


def make_estimates(eps_values, psi_fn, n=10**6):
    """Synthetic SmallBallEstimate list with exact phat = exp(-psi_fn(eps)).

    Hit counts are nominal (rounded) but phat/psi carry the exact model so
    structure tests see the model, not rounding; CI widths use the nominal
    counts, giving realistic weights.
    """
    out = []
    for eps in eps_values:
        psi = psi_fn(eps)
        phat = math.exp(-psi)
        hits = max(1, int(round(phat * n)))
        ci = wilson_interval(hits, n)
        psi_ci = (-math.log(ci[1]), -math.log(ci[0]) if ci[0] > 0 else math.inf)
        out.append(SmallBallEstimate(epsilon=float(eps), n=n, hits=hits,
                                     phat=phat, ci=ci, psi=psi, psi_ci=psi_ci))
    return out
