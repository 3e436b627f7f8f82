"""Vectorised numpy stencil assembly (fallback for the compiled kernel).

Both implementations take the same flattened arrays and return identical
COO triplets:

kind    (N,)        node classification codes
theta   (N, n, 2)   cut fractions towards -e_k (0) and +e_k (1)
cutval  (N, n, 2)   boundary values at those cut points
bval    (N,)        known values on Dirichlet and data nodes
B       (M, n, n)   coefficient matrices at the unknowns
g       (M,)        right-hand side at the unknowns
nodes   (M,)        flat indices of the unknowns
unk     (N,)        flat index -> unknown number, -1 if known
strides (n,)        flat index strides
h                   grid spacing

Exterior diagonal neighbours of the mixed stencil are read as zero.
"""
from __future__ import annotations

import numpy as np

INTERIOR = 1
EXTERIOR = 0


def _add(nb, coef, kind, unk, bval, rows, cols, vals, rhs, m_idx, cut=None):
    k_nb = kind[nb]
    is_unknown = k_nb == INTERIOR
    rows.append(m_idx[is_unknown])
    cols.append(unk[nb[is_unknown]])
    vals.append(coef[is_unknown])
    known = (k_nb != INTERIOR) & (k_nb != EXTERIOR)
    np.subtract.at(rhs, m_idx[known], coef[known] * bval[nb[known]])
    if cut is not None:
        ext = k_nb == EXTERIOR
        np.subtract.at(rhs, m_idx[ext], coef[ext] * cut[ext])


def assemble_stencil(kind, theta, cutval, bval, B, g, nodes, unk, strides, h):
    kind = np.asarray(kind)
    nodes = np.asarray(nodes, np.int64)
    M = nodes.size
    n = len(strides)
    m_idx = np.arange(M, dtype=np.int64)
    rhs = np.array(g, float, copy=True)
    diag = np.zeros(M)
    rows, cols, vals = [], [], []
    for k in range(n):
        hm = theta[nodes, k, 0] * h
        hp = theta[nodes, k, 1] * h
        bkk = B[:, k, k]
        diag += 2.0 * bkk / (hm * hp)
        for side, sign, hs in ((0, -1, hm), (1, 1, hp)):
            coef = -2.0 * bkk / ((hm + hp) * hs)
            nb = nodes + sign * strides[k]
            _add(nb, coef, kind, unk, bval, rows, cols, vals, rhs, m_idx,
                 cutval[nodes, k, side])
    for k in range(n):
        for l in range(k + 1, n):
            base = -B[:, k, l] / (2.0 * h * h)
            for sk in (-1, 1):
                for sl in (-1, 1):
                    nb = nodes + sk * strides[k] + sl * strides[l]
                    _add(nb, base * (sk * sl), kind, unk, bval, rows, cols, vals, rhs, m_idx)
    rows.insert(0, m_idx)
    cols.insert(0, m_idx)
    vals.insert(0, diag)
    return (np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), rhs)
