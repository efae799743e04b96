"""Slow reference implementations used as test oracles.

They share no code with the package: lines are walked with exact fractions and
every boundary cell is scored independently.
"""

from fractions import Fraction
import math


def round_half_away(q: Fraction) -> int:
    if q >= 0:
        return math.floor(q + Fraction(1, 2))
    return -math.floor(-q + Fraction(1, 2))


def line_cells(c0, c1):
    """Cells of the line c0 -> c1, stepping along the major axis, walked from the smaller end."""
    a, b = (c0, c1) if tuple(c0) <= tuple(c1) else (c1, c0)
    dx, dy = b[0] - a[0], b[1] - a[1]
    n = max(abs(dx), abs(dy))
    if n == 0:
        return [tuple(a)]
    out = [(a[0] + round_half_away(Fraction(t * dx, n)), a[1] + round_half_away(Fraction(t * dy, n)))
           for t in range(n + 1)]
    return out if tuple(c0) <= tuple(c1) else out[::-1]


def exhaustive_waypoint(values, base, res, mode="mean"):
    """Best boundary cell by brute force; ties go to the smallest |heading|, then row-major index."""
    H, W = len(values), len(values[0])
    bx, by = base
    cands = []
    for iy in range(H):
        for ix in range(W):
            if not (ix in (0, W - 1) or iy in (0, H - 1)) or (ix, iy) == (bx, by):
                continue
            cells = line_cells((bx, by), (ix, iy))
            total = math.fsum(values[cy][cx] for cx, cy in cells)
            fwd, lat = (ix - bx) * res, (iy - by) * res
            cost = total / len(cells) if mode == "mean" else total / math.hypot(fwd, lat)
            cands.append((cost, abs(math.atan2(lat, fwd)), iy * W + ix, (ix, iy)))
    best = min(c[0] for c in cands)
    tied = [c for c in cands if c[0] <= best + 1e-12 * max(1.0, abs(best))]
    return min(tied, key=lambda c: (c[1], c[2]))[3]
