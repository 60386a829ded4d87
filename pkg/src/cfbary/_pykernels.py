"""Pure numpy versions of the compiled kernels in ``_ckernels.pyx``."""
import numpy as np


def w2_steps(ga, qa, gb, qb):
    """Integral of squared difference of two left-continuous step quantiles.

    ``ga``/``gb`` are the right ends of the probability pieces (strictly
    increasing, last entry 1.0), ``qa``/``qb`` the values on each piece.
    """
    ga = np.asarray(ga, dtype=np.float64)
    gb = np.asarray(gb, dtype=np.float64)
    end = min(ga[-1], gb[-1])
    knots = np.union1d(ga, gb)
    knots = knots[knots <= end]
    ia = np.searchsorted(ga, knots, side="left")
    ib = np.searchsorted(gb, knots, side="left")
    widths = np.diff(knots, prepend=0.0)
    d = np.asarray(qa, dtype=np.float64)[ia] - np.asarray(qb, dtype=np.float64)[ib]
    return float(np.sum(widths * d * d))


def transport(cdf_sorted, grid, q, z):
    """Map scores through the fold CDF, then through the step quantile table."""
    cdf_sorted = np.asarray(cdf_sorted, dtype=np.float64)
    c = np.searchsorted(cdf_sorted, z, side="right")
    u = c / cdf_sorted.shape[0]
    idx = np.searchsorted(grid, u, side="left")
    np.minimum(idx, len(grid) - 1, out=idx)
    return np.asarray(q, dtype=np.float64)[idx]
