"""Independent reference computations used by several test modules."""
import numpy as np

from drocal.ksstat import empirical_cdf, weighted_ks_distance


def compositions(total, parts):
    """All nonnegative integer vectors of length ``parts`` summing to ``total``."""
    rows = np.zeros((1, 0), dtype=np.int16)
    left = np.array([total])
    for p in range(parts - 1):
        counts = left + 1
        rows = np.repeat(rows, counts, axis=0)
        take = np.concatenate([np.arange(c) for c in counts])
        left = np.repeat(left, counts) - take
        rows = np.column_stack([rows, take])
    return np.column_stack([rows, left])


def grid_q_star(data, sims, step=0.02):
    """Brute-force ``q*`` for ``m = 1`` over a weight grid.

    Sim points in the same cell relative to the data atoms (below, at or
    between them) are interchangeable, so the grid runs over cell masses.
    Each candidate is scored as ``sqrt(n1)`` times the sup-norm KS distance,
    evaluated at the data atoms' left and right limits.
    """
    data = np.asarray(data, dtype=float)
    sims = np.asarray(sims, dtype=float)
    atoms = np.unique(data)
    cell = 2 * np.searchsorted(atoms, sims, side="left") + np.isin(sims, atoms)
    used = np.unique(cell)
    grid = compositions(int(round(1 / step)), used.size) * step
    mass = np.zeros((grid.shape[0], 2 * atoms.size + 1))
    mass[:, used] = grid
    cum = np.cumsum(mass, axis=1)
    F = np.array([np.mean(data <= s) for s in atoms])
    F_left = np.array([np.mean(data < s) for s in atoms])
    at = cum[:, 1::2]  # P(S <= s)
    below = cum[:, 0:-1:2]  # P(S < s)
    dev = np.maximum(np.max(F - at, axis=1), np.max(below - F_left, axis=1))
    best = int(np.argmin(dev))
    return float(np.sqrt(data.size) * max(dev[best], 0.0)), mass[best], cell


def ks_required_q(data, sims, w):
    """``sqrt(n1) * max_v`` weighted KS distance, the exact-ties feasibility oracle."""
    data = np.atleast_2d(data)
    sims = np.atleast_2d(sims)
    return np.sqrt(data.shape[0]) * max(
        weighted_ks_distance(sims[:, v], w, empirical_cdf(data[:, v])) for v in range(data.shape[1])
    )
