"""Log-linear fits of geometrically decaying sequences."""

from typing import NamedTuple

import numpy as np

from .errors import FitError


class ExpFit(NamedTuple):
    amplitude: float
    rate: float
    residual: float


def fit_exponential(values, skip_below: float = 1e-13, min_points: int = 4) -> ExpFit:
    """Least-squares fit of ``log v_n = log A + n log rate`` over the tail half.

    Entries below ``skip_below`` (and non-finite ones) are dropped before the
    tail half of the remaining indices is taken.  The residual is the RMS of
    the log-space misfit.
    """
    v = np.asarray(values, dtype=float)
    n = np.arange(v.size)
    ok = np.isfinite(v) & (v >= skip_below)
    n, v = n[ok], v[ok]
    if n.size < min_points:
        raise FitError(f"only {n.size} usable points (need {min_points})")
    half = n.size // 2
    if n.size - half < min_points:
        half = n.size - min_points
    n, v = n[half:], v[half:]
    A = np.vstack([np.ones(n.size), n.astype(float)]).T
    coef, *_ = np.linalg.lstsq(A, np.log(v), rcond=None)
    misfit = np.log(v) - A @ coef
    return ExpFit(float(np.exp(coef[0])), float(np.exp(coef[1])), float(np.sqrt(np.mean(misfit**2))))
