"""Numeric kernels with optional numba acceleration.

The hot inner loops of the package live here: point-to-polygon distance
queries (called several times per robot per simulation step), batched
distance fields for costmap construction, point-to-polyline distance
(path-deviation trigger), and the exhaustive pushing-configuration
enumeration.

Every kernel has a plain numpy implementation. When numba is importable
and the environment flag ``CONPOSE_NUMBA`` is not set to ``0``/``false``/
``off``, the loop kernels are JIT-compiled. Both paths perform the same
floating-point operations in the same order (no fastmath), so results are
bit-identical regardless of which path is active.
"""

from __future__ import annotations

import math
import os
from itertools import combinations

import numpy as np


def _flag_enabled() -> bool:
    val = os.environ.get("CONPOSE_NUMBA", "1").strip().lower()
    return val not in ("0", "false", "off", "no")


try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

NUMBA_ENABLED = _HAVE_NUMBA and _flag_enabled()


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _edge_closest_params(verts: np.ndarray, px: float, py: float):
    """Per-edge squared distance and closest-point parameter, vectorized."""
    ax, ay = verts[:, 0], verts[:, 1]
    bx, by = np.roll(ax, -1), np.roll(ay, -1)
    ex, ey = bx - ax, by - ay
    len2 = ex * ex + ey * ey
    # degenerate zero-length edges collapse to vertex a
    safe = np.where(len2 > 0.0, len2, 1.0)
    t = np.clip(((px - ax) * ex + (py - ay) * ey) / safe, 0.0, 1.0)
    cx, cy = ax + t * ex, ay + t * ey
    dx, dy = px - cx, py - cy
    return dx * dx + dy * dy, cx, cy


def _point_in_polygon_np(verts: np.ndarray, px: float, py: float) -> bool:
    """Even-odd rule; boundary points may land on either side."""
    x, y = verts[:, 0], verts[:, 1]
    xj, yj = np.roll(x, -1), np.roll(y, -1)
    cond = (y > py) != (yj > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x + (py - y) * (xj - x) / (yj - y)
    hits = cond & (px < xint)
    return bool(np.count_nonzero(hits) % 2)


def _poly_signed_distance_np(verts: np.ndarray, px: float, py: float) -> float:
    d2, _, _ = _edge_closest_params(verts, px, py)
    d = math.sqrt(float(np.min(d2)))
    if _point_in_polygon_np(verts, px, py):
        return -d
    return d


def _poly_closest_point_np(verts: np.ndarray, px: float, py: float):
    """Closest boundary point and the index of the edge that contains it."""
    d2, cx, cy = _edge_closest_params(verts, px, py)
    i = int(np.argmin(d2))
    return float(cx[i]), float(cy[i]), i


def _poly_signed_distance_batch_np(
    verts: np.ndarray, pxs: np.ndarray, pys: np.ndarray
) -> np.ndarray:
    ax, ay = verts[:, 0], verts[:, 1]
    bx, by = np.roll(ax, -1), np.roll(ay, -1)
    ex, ey = bx - ax, by - ay
    len2 = ex * ex + ey * ey
    safe = np.where(len2 > 0.0, len2, 1.0)
    px = pxs[:, None]
    py = pys[:, None]
    t = np.clip(((px - ax) * ex + (py - ay) * ey) / safe, 0.0, 1.0)
    dx = px - (ax + t * ex)
    dy = py - (ay + t * ey)
    d = np.sqrt(np.min(dx * dx + dy * dy, axis=1))
    cond = (ay > py) != (by > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = ax + (py - ay) * (bx - ax) / (by - ay)
    inside = (np.count_nonzero(cond & (px < xint), axis=1) % 2).astype(bool)
    return np.where(inside, -d, d)


def _polyline_min_distance_np(pts: np.ndarray, px: float, py: float) -> float:
    if len(pts) == 1:
        return math.hypot(px - pts[0, 0], py - pts[0, 1])
    ax, ay = pts[:-1, 0], pts[:-1, 1]
    bx, by = pts[1:, 0], pts[1:, 1]
    ex, ey = bx - ax, by - ay
    len2 = ex * ex + ey * ey
    safe = np.where(len2 > 0.0, len2, 1.0)
    t = np.clip(((px - ax) * ex + (py - ay) * ey) / safe, 0.0, 1.0)
    dx = px - (ax + t * ex)
    dy = py - (ay + t * ey)
    return math.sqrt(float(np.min(dx * dx + dy * dy)))


def _best_combination_py(
    ux: np.ndarray,
    uy: np.ndarray,
    tq: np.ndarray,
    n: int,
    fx: float,
    fy: float,
    force_threshold: float,
    tie_tol: float,
):
    """Exhaustive lexicographic scan over all C(M, n) index combinations.

    Returns (best_indices, best_dphi, best_abs_torque, found). Candidates are
    summed in ascending index order so results match the jitted kernel and
    the single-configuration evaluator bit for bit.
    """
    uxl = ux.tolist()
    uyl = uy.tolist()
    tql = tq.tolist()
    best = None
    best_dphi = math.inf
    best_tau = math.inf
    m = len(uxl)
    for combo in combinations(range(m), n):
        sx = 0.0
        sy = 0.0
        st = 0.0
        for i in combo:
            sx += uxl[i]
            sy += uyl[i]
            st += tql[i]
        norm = math.sqrt(sx * sx + sy * sy)
        if norm <= force_threshold:
            continue
        dot = (fx * sx + fy * sy) / norm
        if dot > 1.0:
            dot = 1.0
        elif dot < -1.0:
            dot = -1.0
        dphi = math.acos(dot)
        tau = abs(st)
        if best is None or dphi < best_dphi - tie_tol or (
            abs(dphi - best_dphi) <= tie_tol and tau < best_tau
        ):
            best = combo
            best_dphi = dphi
            best_tau = tau
    if best is None:
        return np.empty(0, dtype=np.int64), math.pi, 0.0, False
    return np.asarray(best, dtype=np.int64), best_dphi, best_tau, True


# ---------------------------------------------------------------------------
# loop kernels (jitted when enabled)
# ---------------------------------------------------------------------------

def _poly_signed_distance_loop(verts, px, py):
    nv = verts.shape[0]
    best = 1e300
    inside = False
    for i in range(nv):
        ax = verts[i, 0]
        ay = verts[i, 1]
        j = i + 1
        if j == nv:
            j = 0
        bx = verts[j, 0]
        by = verts[j, 1]
        ex = bx - ax
        ey = by - ay
        len2 = ex * ex + ey * ey
        if len2 > 0.0:
            t = ((px - ax) * ex + (py - ay) * ey) / len2
        else:
            t = 0.0
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        dx = px - (ax + t * ex)
        dy = py - (ay + t * ey)
        d2 = dx * dx + dy * dy
        if d2 < best:
            best = d2
        if (ay > py) != (by > py):
            xint = ax + (py - ay) * (bx - ax) / (by - ay)
            if px < xint:
                inside = not inside
    d = math.sqrt(best)
    if inside:
        return -d
    return d


def _poly_closest_point_loop(verts, px, py):
    nv = verts.shape[0]
    best = 1e300
    bi = 0
    bcx = verts[0, 0]
    bcy = verts[0, 1]
    for i in range(nv):
        ax = verts[i, 0]
        ay = verts[i, 1]
        j = i + 1
        if j == nv:
            j = 0
        bx = verts[j, 0]
        by = verts[j, 1]
        ex = bx - ax
        ey = by - ay
        len2 = ex * ex + ey * ey
        if len2 > 0.0:
            t = ((px - ax) * ex + (py - ay) * ey) / len2
        else:
            t = 0.0
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        cx = ax + t * ex
        cy = ay + t * ey
        dx = px - cx
        dy = py - cy
        d2 = dx * dx + dy * dy
        if d2 < best:
            best = d2
            bi = i
            bcx = cx
            bcy = cy
    return bcx, bcy, bi


def _polyline_min_distance_loop(pts, px, py):
    npnt = pts.shape[0]
    if npnt == 1:
        dx = px - pts[0, 0]
        dy = py - pts[0, 1]
        return math.sqrt(dx * dx + dy * dy)
    best = 1e300
    for i in range(npnt - 1):
        ax = pts[i, 0]
        ay = pts[i, 1]
        ex = pts[i + 1, 0] - ax
        ey = pts[i + 1, 1] - ay
        len2 = ex * ex + ey * ey
        if len2 > 0.0:
            t = ((px - ax) * ex + (py - ay) * ey) / len2
        else:
            t = 0.0
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        dx = px - (ax + t * ex)
        dy = py - (ay + t * ey)
        d2 = dx * dx + dy * dy
        if d2 < best:
            best = d2
    return math.sqrt(best)


def _best_combination_loop(ux, uy, tq, n, fx, fy, force_threshold, tie_tol):
    m = ux.shape[0]
    idx = np.arange(n, dtype=np.int64)
    best_idx = np.empty(n, dtype=np.int64)
    best_dphi = math.pi
    best_tau = 0.0
    found = False
    running = True
    while running:
        sx = 0.0
        sy = 0.0
        st = 0.0
        for k in range(n):
            i = idx[k]
            sx += ux[i]
            sy += uy[i]
            st += tq[i]
        norm = math.sqrt(sx * sx + sy * sy)
        if norm > force_threshold:
            dot = (fx * sx + fy * sy) / norm
            if dot > 1.0:
                dot = 1.0
            elif dot < -1.0:
                dot = -1.0
            dphi = math.acos(dot)
            tau = abs(st)
            if (not found) or dphi < best_dphi - tie_tol or (
                abs(dphi - best_dphi) <= tie_tol and tau < best_tau
            ):
                for k in range(n):
                    best_idx[k] = idx[k]
                best_dphi = dphi
                best_tau = tau
                found = True
        # lexicographic successor
        pos = n - 1
        while pos >= 0 and idx[pos] == m - n + pos:
            pos -= 1
        if pos < 0:
            running = False
        else:
            idx[pos] += 1
            for k in range(pos + 1, n):
                idx[k] = idx[k - 1] + 1
    if not found:
        return np.empty(0, dtype=np.int64), math.pi, 0.0, False
    return best_idx, best_dphi, best_tau, True


if NUMBA_ENABLED:
    _poly_signed_distance_jit = njit(cache=True)(_poly_signed_distance_loop)
    _poly_closest_point_jit = njit(cache=True)(_poly_closest_point_loop)
    _polyline_min_distance_jit = njit(cache=True)(_polyline_min_distance_loop)
    _best_combination_jit = njit(cache=True)(_best_combination_loop)

    @njit(cache=True)
    def _poly_signed_distance_batch_jit(verts, pxs, pys):
        out = np.empty(pxs.shape[0], dtype=np.float64)
        for k in range(pxs.shape[0]):
            out[k] = _poly_signed_distance_jit(verts, pxs[k], pys[k])
        return out


def poly_signed_distance(verts: np.ndarray, px: float, py: float) -> float:
    """Signed distance from a point to a polygon boundary (negative inside)."""
    if NUMBA_ENABLED:
        return _poly_signed_distance_jit(verts, px, py)
    return _poly_signed_distance_np(verts, px, py)


def poly_closest_point(verts: np.ndarray, px: float, py: float):
    """Closest boundary point and containing edge index for a polygon."""
    if NUMBA_ENABLED:
        return _poly_closest_point_jit(verts, px, py)
    return _poly_closest_point_np(verts, px, py)


def poly_signed_distance_batch(
    verts: np.ndarray, pxs: np.ndarray, pys: np.ndarray
) -> np.ndarray:
    """Signed distances for many query points against one polygon."""
    if NUMBA_ENABLED:
        return _poly_signed_distance_batch_jit(verts, pxs, pys)
    return _poly_signed_distance_batch_np(verts, pxs, pys)


def polyline_min_distance(pts: np.ndarray, px: float, py: float) -> float:
    """Minimum distance from a point to an open polyline."""
    if NUMBA_ENABLED:
        return _polyline_min_distance_jit(pts, px, py)
    return _polyline_min_distance_np(pts, px, py)


def best_combination(
    ux: np.ndarray,
    uy: np.ndarray,
    tq: np.ndarray,
    n: int,
    fx: float,
    fy: float,
    force_threshold: float,
    tie_tol: float = 1e-12,
):
    """Best configuration over every C(M, n) combination.

    Minimizes the angle between the summed unit push vectors and the target
    direction (fx, fy) among combinations whose net force magnitude exceeds
    ``force_threshold``; ties within ``tie_tol`` break on smaller net-torque
    magnitude, then on lexicographically smallest index set (enumeration
    order guarantees the latter).
    """
    if NUMBA_ENABLED:
        return _best_combination_jit(
            ux, uy, tq, np.int64(n), fx, fy, force_threshold, tie_tol
        )
    return _best_combination_py(ux, uy, tq, n, fx, fy, force_threshold, tie_tol)
