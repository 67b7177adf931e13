"""Deterministic composite Gauss-Legendre quadrature on polyhedral regions.

The region is described by a membership test plus the finite list of
hyperplanes on which membership can change. The bounding box is cut into a
tensor grid of boxes that is geometrically graded from the lower corner
(integrands here behave like ``prod 1/a_j^2``). Boxes that no hyperplane
crosses are classified by their centre and integrated with a tensor rule.
Crossed boxes are split into convex cells, each cell is classified by its
centroid, triangulated from its centroid, and integrated with a collapsed
(Duffy) tensor rule on every simplex.

The error estimate is the difference between the rules of order ``p`` and
``2p``; the returned value is the order-``2p`` result. Summation order is
fixed, so repeated runs are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations, product
from typing import Callable, Sequence

import numpy as np

TOL = 1e-12


@lru_cache(maxsize=None)
def gauss_legendre01(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def _tensor_rule(order: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = gauss_legendre01(order)
    nodes = np.stack(np.meshgrid(*([x] * n), indexing="ij"), -1).reshape(-1, n)
    weights = np.prod(np.stack(np.meshgrid(*([w] * n), indexing="ij"), -1).reshape(-1, n), axis=1)
    return nodes, weights


@lru_cache(maxsize=None)
def simplex_rule(order: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed-cube rule on the unit simplex ``{x >= 0, sum x <= 1}``.

    ``x_1 = u_1``, ``x_k = u_k prod_{i<k} (1 - u_i)`` with Jacobian
    ``prod_i (1 - u_i)^{n - i}``.
    """
    u, w = _tensor_rule(order, n)
    x = np.empty_like(u)
    rest = np.ones(len(u))
    jac = np.ones(len(u))
    for i in range(n):
        x[:, i] = u[:, i] * rest
        jac *= (1.0 - u[:, i]) ** (n - 1 - i)
        rest = rest * (1.0 - u[:, i])
    return x, w * jac


def geometric_edges(lo: float, hi: float, ratio: float = 2.0) -> np.ndarray:
    """Breakpoints ``lo, ratio*lo, ...`` capped at ``hi`` (``lo > 0``)."""
    if not 0 < lo < hi:
        raise ValueError("need 0 < lo < hi")
    edges = [lo]
    while edges[-1] * ratio < hi * (1 - 1e-12):
        edges.append(edges[-1] * ratio)
    edges.append(hi)
    return np.array(edges)


@dataclass
class Region:
    """Polyhedral region for :func:`integrate_region`.

    Attributes
    ----------
    lower, upper : per-axis bounds of the bounding box
    hyperplanes : list of ``(c, d)`` with ``c . x + d = 0``
    inside : vectorized membership test ``(k, n) -> (k,) bool``
    ratio : grading ratio of the box grid
    """

    lower: np.ndarray
    upper: np.ndarray
    hyperplanes: list
    inside: Callable
    ratio: float = 2.0

    @property
    def dim(self) -> int:
        return len(self.lower)


@dataclass
class QuadResult:
    value: np.ndarray | float
    error: np.ndarray | float
    boxes: int
    cells: int


class NonFiniteIntegrand(ArithmeticError):
    pass


def _check(vals, pts):
    bad = ~np.isfinite(vals)
    if bad.any():
        idx = np.flatnonzero(bad.reshape(len(pts), -1).any(axis=1))[0]
        raise NonFiniteIntegrand(f"non-finite integrand at node {pts[idx].tolist()}")


# -- convex cells -----------------------------------------------------------


def _vertices(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vertices of ``{x : A x <= b}`` (bounded) by brute force."""
    n = A.shape[1]
    out = []
    scale = np.max(np.abs(b)) + 1.0
    for sub in combinations(range(len(A)), n):
        M = A[list(sub)]
        if abs(np.linalg.det(M)) < 1e-14:
            continue
        x = np.linalg.solve(M, b[list(sub)])
        if np.all(A @ x <= b + 1e-10 * scale):
            if not any(np.allclose(x, y, rtol=1e-12, atol=1e-10 * scale) for y in out):
                out.append(x)
    return np.array(out)


def _split(cell, c, d):
    """Split a cell ``(A, b, V)`` by ``c.x + d = 0`` if the plane crosses it."""
    A, b, V = cell
    vals = V @ c + d
    scale = np.max(np.abs(V)) * np.max(np.abs(c)) + abs(d) + 1.0
    if vals.min() >= -TOL * scale or vals.max() <= TOL * scale:
        return [cell]
    out = []
    for sgn in (1.0, -1.0):
        A2 = np.vstack([A, sgn * c])
        b2 = np.append(b, -sgn * d)
        V2 = _vertices(A2, b2)
        if len(V2) > len(c):
            out.append((A2, b2, V2))
    return out


def _triangulate(A, b, V) -> list[np.ndarray]:
    """Simplices (vertex arrays) covering a convex cell, coned from its centroid."""
    n = V.shape[1]
    if n == 1:
        return [np.array([[V.min()], [V.max()]])]
    centre = V.mean(axis=0)
    scale = np.max(np.abs(V)) + 1.0
    simplices = []
    seen = set()
    for k in range(len(A)):
        on = np.flatnonzero(np.abs(V @ A[k] - b[k]) <= 1e-9 * scale * (np.abs(A[k]).max() + 1))
        key = tuple(on)
        if len(on) < n or key in seen:
            continue
        seen.add(key)
        F = V[on]
        fc = F.mean(axis=0)
        if n == 2:
            if len(F) == 2:
                simplices.append(np.array([centre, F[0], F[1]]))
            continue
        # n == 3: order the facet polygon by angle in its plane
        normal = A[k] / np.linalg.norm(A[k])
        e1 = F[0] - fc
        if np.linalg.norm(e1) < 1e-14 * scale:
            e1 = F[1] - fc
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(normal, e1)
        ang = np.arctan2((F - fc) @ e2, (F - fc) @ e1)
        F = F[np.argsort(ang)]
        for i in range(len(F)):
            simplices.append(np.array([centre, fc, F[i], F[(i + 1) % len(F)]]))
    if n > 3:
        raise NotImplementedError("cell triangulation implemented for n <= 3")
    return simplices


def _simplex_volume(S):
    E = (S[1:] - S[0]).T
    return abs(np.linalg.det(E))


# -- driver -----------------------------------------------------------------


def _integrate_boxes(boxes_lo, boxes_hi, f, order, n):
    u, w = _tensor_rule(order, n)
    total = None
    chunk = max(1, 200000 // len(w))
    for s in range(0, len(boxes_lo), chunk):
        lo, hi = boxes_lo[s:s + chunk], boxes_hi[s:s + chunk]
        width = hi - lo
        pts = lo[:, None, :] + u[None, :, :] * width[:, None, :]
        flat = pts.reshape(-1, n)
        vals = np.asarray(f(flat), dtype=float)
        _check(vals, flat)
        vals = vals.reshape(len(lo), len(w), -1)
        part = np.einsum("bkr,k,b->r", vals, w, np.prod(width, axis=1))
        total = part if total is None else total + part
    return total


def _integrate_simplices(simplices, f, order, n):
    if not simplices:
        return None
    x, w = simplex_rule(order, n)
    S = np.array(simplices)
    E = S[:, 1:, :] - S[:, :1, :]  # (s, n, n) rows are edge vectors
    vol = np.abs(np.linalg.det(E))
    pts = S[:, 0, None, :] + np.einsum("kn,snd->skd", x, E)
    flat = pts.reshape(-1, n)
    vals = np.asarray(f(flat), dtype=float)
    _check(vals, flat)
    vals = vals.reshape(len(S), len(w), -1)
    return np.einsum("skr,k,s->r", vals, w, vol)


def integrate_region(region: Region, integrand: Callable, order: int = 8) -> QuadResult:
    """Integrate ``integrand`` over ``region``.

    Parameters
    ----------
    integrand : callable
        Maps ``(k, n)`` points to ``(k,)`` or ``(k, r)`` values.
    order : int
        Base Gauss-Legendre order ``p``; the result uses ``2p`` and the
        error estimate is ``|I_2p - I_p|``.
    """
    n = region.dim
    edges = [geometric_edges(lo, hi, region.ratio) for lo, hi in zip(region.lower, region.upper)]
    planes = [(np.asarray(c, dtype=float), float(d)) for c, d in region.hyperplanes]
    lows, highs = [], []
    for idx in product(*[range(len(e) - 1) for e in edges]):
        lows.append([edges[k][i] for k, i in enumerate(idx)])
        highs.append([edges[k][i + 1] for k, i in enumerate(idx)])
    lows, highs = np.array(lows), np.array(highs)
    corners = np.array(list(product((0, 1), repeat=n)))
    crossed = np.zeros(len(lows), dtype=bool)
    for c, d in planes:
        # extreme values of c.x + d over each box
        vmin = d + np.sum(np.where(c > 0, c * lows, c * highs), axis=1)
        vmax = d + np.sum(np.where(c > 0, c * highs, c * lows), axis=1)
        scale = np.max(np.abs(highs), axis=1) * np.max(np.abs(c)) + abs(d) + 1
        crossed |= (vmin < -TOL * scale) & (vmax > TOL * scale)
    plain = ~crossed
    centres = 0.5 * (lows + highs)
    keep = plain & np.asarray(region.inside(centres), dtype=bool)
    simplices = []
    ncells = 0
    for i in np.flatnonzero(crossed):
        lo, hi = lows[i], highs[i]
        A = np.vstack([np.eye(n), -np.eye(n)])
        b = np.concatenate([hi, -lo])
        V = lo + corners * (hi - lo)
        cells = [(A, b, V)]
        for c, d in planes:
            nxt = []
            for cell in cells:
                nxt.extend(_split(cell, c, d))
            cells = nxt
        for A_, b_, V_ in cells:
            ncells += 1
            if region.inside(V_.mean(axis=0)[None, :])[0]:
                simplices.extend(s for s in _triangulate(A_, b_, V_) if _simplex_volume(s) > 0)
    results = []
    for p in (order, 2 * order):
        parts = []
        if keep.any():
            parts.append(_integrate_boxes(lows[keep], highs[keep], integrand, p, n))
        sp = _integrate_simplices(simplices, integrand, p, n)
        if sp is not None:
            parts.append(sp)
        tot = parts[0] if parts else np.zeros(1)
        for q in parts[1:]:
            tot = tot + q
        results.append(tot)
    val, coarse = results[1], results[0]
    err = np.abs(val - coarse)
    if val.shape == (1,):
        val, err = float(val[0]), float(err[0])
    return QuadResult(val, err, int(keep.sum()), ncells)


def box_region(lower: Sequence[float], upper: Sequence[float], ratio: float = 2.0) -> Region:
    lower, upper = np.asarray(lower, float), np.asarray(upper, float)
    return Region(lower, upper, [], lambda x: np.ones(len(x), dtype=bool), ratio)
