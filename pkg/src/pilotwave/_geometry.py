"""Planar polygon helpers for the two-dimensional conservative remap.

Polygons are ``(k, 2)`` arrays, counter-clockwise for positive area.  Clipping
is Sutherland-Hodgman against axis-aligned half-planes; a non-convex subject
may come back with zero-width bridges along the clip line, which carry no area
and contribute nothing to the signed integrals used here.
"""
import numpy as np


def clip_halfplane(P, axis, value, keep_above):
    """Part of polygon ``P`` with ``P[:, axis] >= value`` (or ``<=``)."""
    if len(P) == 0:
        return P
    d = P[:, axis] - value
    if not keep_above:
        d = -d
    inside = d >= 0
    if inside.all():
        return P
    if not inside.any():
        return P[:0]
    Q = np.roll(P, -1, axis=0)
    dq = np.roll(d, -1)
    in_q = np.roll(inside, -1)
    cross = inside != in_q
    with np.errstate(invalid="ignore", divide="ignore"):
        s = d / (d - dq)
        X = P + s[:, None] * (Q - P)
    X[:, axis] = value
    # per edge P->Q emit: crossing point (if the edge crosses), then Q (if inside)
    emit_x = cross
    emit_q = in_q
    count = emit_x.astype(int) + emit_q.astype(int)
    out = np.empty((int(count.sum()), 2))
    pos = np.cumsum(count) - count
    out[pos[emit_x]] = X[emit_x]
    out[(pos + emit_x)[emit_q]] = Q[emit_q]
    return out


def clip_rect(P, lo, hi):
    for axis in (0, 1):
        P = clip_halfplane(P, axis, lo[axis], True)
        P = clip_halfplane(P, axis, hi[axis], False)
        if len(P) < 3:
            return P[:0]
    return P


def signed_area(P):
    if len(P) < 3:
        return 0.0
    x, y = P[:, 0], P[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _duffy_rule(q):
    """Collapsed Gauss rule on the reference triangle (0,0), (1,0), (0,1)."""
    x, w = np.polynomial.legendre.leggauss(q)
    u, wu = 0.5 * (x + 1.0), 0.5 * w
    U, V = np.meshgrid(u, u, indexing="ij")
    WU, WV = np.meshgrid(wu, wu, indexing="ij")
    # (u, v) in the square -> (s, t) = (u, v (1 - u)), Jacobian 1 - u
    s = U.ravel()
    t = (V * (1.0 - U)).ravel()
    wt = (WU * WV * (1.0 - U)).ravel()
    return s, t, wt


_RULES = {}


def triangle_rule(q):
    if q not in _RULES:
        _RULES[q] = _duffy_rule(q)
    return _RULES[q]


def triangles_quadrature(A, B, C, q):
    """Nodes ``(m, q*q, 2)`` and signed weights ``(m, q*q)`` for triangles ABC."""
    s, t, w = triangle_rule(q)
    E1 = B - A
    E2 = C - A
    pts = A[:, None, :] + s[None, :, None] * E1[:, None, :] + t[None, :, None] * E2[:, None, :]
    det = E1[:, 0] * E2[:, 1] - E1[:, 1] * E2[:, 0]
    return pts, det[:, None] * w[None, :]


def fan_quadrature(P, q):
    """Signed quadrature over polygon ``P`` by a fan from its first vertex."""
    if len(P) < 3:
        return np.empty((0, 2)), np.empty(0)
    A = np.repeat(P[:1], len(P) - 2, axis=0)
    pts, wts = triangles_quadrature(A, P[1:-1], P[2:], q)
    return pts.reshape(-1, 2), wts.ravel()
