"""Midpoint quadrature on the dyadic partition of (0, ∞).

The partition is anchored at the dyadic points ``2^k`` and each segment
``[2^(k-1), 2^k]`` is split into ``panels`` equal sub-panels.  Because the
lattice does not depend on the integration limits, integrals ``∫_a^b`` of a
nonnegative integrand are exactly non-decreasing in ``b``: the panel holding
``b`` contributes ``(b - left) * f(panel midpoint)``.
"""
from __future__ import annotations

import math

import numpy as np


def _panel_edges(a: float, b: float, panels: int) -> np.ndarray:
    k_lo = math.floor(math.log2(a))
    k_hi = math.ceil(math.log2(b))
    edges = []
    for k in range(k_lo, k_hi):
        lo = 2.0**k
        edges.append(lo + lo * np.arange(panels) / panels)
    edges.append(np.array([2.0**k_hi]))
    return np.concatenate(edges)


def dyadic_nodes(a: float, b: float, panels: int = 8,
                 floor: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for ``∫_a^b f(ρ) dρ``.

    With ``a = 0`` the partition stops at ``floor`` and the remaining interval
    ``[0, floor]`` is one midpoint panel.
    """
    if b < a or a < 0:
        raise ValueError("need 0 <= a <= b")
    if b == a:
        return np.zeros(0), np.zeros(0)
    tail_nodes, tail_w = np.zeros(0), np.zeros(0)
    if a == 0:
        if floor is None or floor <= 0:
            raise ValueError("integrals from 0 need a positive floor")
        a = 2.0 ** math.floor(math.log2(min(floor, b)))
        tail_nodes, tail_w = np.array([0.5 * a]), np.array([a])
        if a >= b:
            return np.array([0.5 * b]), np.array([b])
    edges = _panel_edges(a, b, panels)
    left, right = edges[:-1], edges[1:]
    keep = (right > a) & (left < b)
    left, right = left[keep], right[keep]
    mids = 0.5 * (left + right)
    lo = np.maximum(left, a)
    # lower partial panel: midpoint of the clipped piece
    mids = np.where(left < a, 0.5 * (lo + right), mids)
    hi = np.minimum(right, b)
    weights = hi - lo
    return np.concatenate([tail_nodes, mids]), np.concatenate([tail_w, weights])


def dyadic_midpoint(fn, a: float, b: float, panels: int = 8,
                    floor: float | None = None) -> float:
    """``∫_a^b fn(ρ) dρ`` with ``fn`` vectorised over ρ."""
    nodes, weights = dyadic_nodes(a, b, panels, floor)
    if nodes.size == 0:
        return 0.0
    return float(np.dot(np.asarray(fn(nodes), float), weights))
