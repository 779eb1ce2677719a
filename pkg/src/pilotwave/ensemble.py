"""Configuration densities, their transport and relative-entropy H-functions.

Densities live on a uniform box split into coarse cells, each refined into
``subsample**N`` fine cells.  Inside every fine cell the density is sampled at
tensor Gauss-Legendre nodes, so that

* fine-cell values are cell averages (coarse averages are their means);
* integrals are node quadratures with the same weights everywhere.

Densities that start on a support box are transported by a conservative
remap: the corners of every fine cell are integrated back to ``t = 0`` and the
cell receives the initial mass of its preimage (an interval in 1D, a
quadrilateral clipped to the box in 2D).  Preimages tile the initial support,
so mass is conserved to quadrature accuracy.  The transported support
``Omega_t`` is found independently by carrying its boundary forward in time;
the equilibrium normaliser is integrated over ``Omega_t`` directly.

Densities without a support box fall back to pointwise transport with the
constancy of ``rho / |psi|^2`` along trajectories:

    log rho(y, t) = log rho0(y0) + log|psi(y, t)|^2 - log|psi(y0, 0)|^2.
"""
import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.special import erf, logsumexp

from ._geometry import clip_rect, fan_quadrature, signed_area
from .errors import EmptySupportError, SupportViolation
from .kernels import STATUS_OK, IntegratorOptions, get_backend
from .states import log_abs_sq

MIN_SUBSAMPLE = 2
MIN_MARGIN_CELLS = 2
SUPPORT_VIOLATION_FRACTION = 1e-3
FAILED_POINT_FRACTION = 1e-3
DEFAULT_QUAD_ORDER = {1: 4, 2: 3}
BOUNDARY_MAX_POINTS = 200_000
REMAP_QUAD_ORDER = 6


# ---------------------------------------------------------------------------
# grid and node layout


@dataclass(frozen=True)
class GridSpec:
    """Uniform box ``[lo_r, hi_r]`` with ``n_cells_r`` coarse cells per axis."""

    lo: tuple
    hi: tuple
    n_cells: tuple
    subsample: int = 4
    quad_order: int = 0  # 0 picks 4 nodes per axis in 1D, 3 in 2D

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        n = tuple(int(v) for v in np.atleast_1d(self.n_cells))
        if len(n) == 1 and len(lo) > 1:
            n = n * len(lo)
        if not len(lo) == len(hi) == len(n):
            raise ValueError("lo, hi and n_cells need one entry per axis")
        if any(h <= l for l, h in zip(lo, hi)):
            raise ValueError("each axis needs hi > lo")
        if any(c < 1 for c in n):
            raise ValueError("n_cells must be positive")
        if self.subsample < MIN_SUBSAMPLE:
            raise ValueError(f"subsample must be >= {MIN_SUBSAMPLE}")
        q = self.quad_order or DEFAULT_QUAD_ORDER.get(len(lo), 2)
        if q < 1:
            raise ValueError("quad_order must be positive")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "n_cells", n)
        object.__setattr__(self, "quad_order", int(q))

    @property
    def ndim(self):
        return len(self.lo)

    @property
    def cell_width(self):
        return tuple((h - l) / c for l, h, c in zip(self.lo, self.hi, self.n_cells))

    @property
    def fine_width(self):
        return tuple(d / self.subsample for d in self.cell_width)

    @property
    def cell_volume(self):
        return float(np.prod(self.cell_width))

    @property
    def fine_volume(self):
        return float(np.prod(self.fine_width))

    @property
    def fine_shape(self):
        return tuple(c * self.subsample for c in self.n_cells)

    def fine_edges(self, axis):
        return np.linspace(self.lo[axis], self.hi[axis], self.fine_shape[axis] + 1)

    def fine_centers(self, axis):
        e = self.fine_edges(axis)
        return 0.5 * (e[:-1] + e[1:])

    def coarse_centers(self, axis):
        e = np.linspace(self.lo[axis], self.hi[axis], self.n_cells[axis] + 1)
        return 0.5 * (e[:-1] + e[1:])


@dataclass(frozen=True)
class Box:
    """Axis-aligned support ``[lo_r, hi_r]``."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi) or any(h <= l for l, h in zip(lo, hi)):
            raise EmptySupportError("support box needs hi > lo on every axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def volume(self):
        return float(np.prod(np.subtract(self.hi, self.lo)))

    def contains(self, Y):
        Y = np.atleast_2d(Y)
        return np.all((Y >= np.array(self.lo)) & (Y <= np.array(self.hi)), axis=1)


def check_support(grid, box, require_aligned=True):
    """Support must sit >= 2 coarse cells inside the box and, optionally, on cell edges."""
    if len(box.lo) != grid.ndim:
        raise ValueError("support and grid dimensions differ")
    for r in range(grid.ndim):
        d = grid.cell_width[r]
        margin = min(box.lo[r] - grid.lo[r], grid.hi[r] - box.hi[r]) / d
        if margin < MIN_MARGIN_CELLS - 1e-9:
            raise ValueError(f"support must stay {MIN_MARGIN_CELLS} coarse cells inside the grid "
                             f"on axis {r}")
        if require_aligned:
            for edge in (box.lo[r], box.hi[r]):
                k = (edge - grid.lo[r]) / d
                if abs(k - round(k)) > 1e-9:
                    raise ValueError(f"support edge {edge} is not on a coarse cell boundary")


def _gauss_unit(q):
    x, w = np.polynomial.legendre.leggauss(q)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass
class NodeSet:
    """Quadrature nodes grouped by fine cell (C order over ``grid.fine_shape``).

    ``points`` (cells, nodes, N), ``weights`` (cells, nodes), ``inside``
    (cells, nodes) flags support membership.  Weights of nodes on clipped
    2D cells come from signed triangle fans and may be negative; padding
    nodes carry weight 0.
    """

    grid: GridSpec
    points: np.ndarray
    weights: np.ndarray
    inside: np.ndarray

    def same_layout(self, other):
        return (self.grid == other.grid and self.points.shape == other.points.shape
                and np.array_equal(self.points, other.points))


def full_nodes(grid):
    """Tensor Gauss nodes in every fine cell; nothing marked inside."""
    if grid.ndim > 2:
        raise ValueError("ensemble operations support at most 2 dimensions")
    q = grid.quad_order
    xu, wu = _gauss_unit(q)
    per_axis = []
    for r in range(grid.ndim):
        e = grid.fine_edges(r)
        h = grid.fine_width[r]
        per_axis.append((e[:-1, None] + h * xu[None, :], h * wu[None, :].repeat(e.size - 1, 0)))
    N = grid.ndim
    if N == 1:
        pts = per_axis[0][0][:, :, None]
        wts = per_axis[0][1]
    else:
        (x1, w1), (x2, w2) = per_axis
        n1, n2 = x1.shape[0], x2.shape[0]
        P1 = np.broadcast_to(x1[:, None, :, None], (n1, n2, q, q))
        P2 = np.broadcast_to(x2[None, :, None, :], (n1, n2, q, q))
        pts = np.stack([P1, P2], axis=-1).reshape(n1 * n2, q * q, 2)
        wts = (w1[:, None, :, None] * w2[None, :, None, :]).reshape(n1 * n2, q * q)
    return NodeSet(grid, np.ascontiguousarray(pts), np.ascontiguousarray(wts),
                   np.zeros(wts.shape, dtype=bool))


def interval_nodes(grid, a, b):
    """1D nodes: cells overlapping ``[a, b]`` get Gauss nodes on the overlap only."""
    if grid.ndim != 1:
        raise ValueError("interval_nodes is one-dimensional")
    ns = full_nodes(grid)
    a = max(a, grid.lo[0])
    b = min(b, grid.hi[0])
    e = grid.fine_edges(0)
    lo = np.maximum(e[:-1], a)
    hi = np.minimum(e[1:], b)
    cover = hi > lo
    xu, wu = _gauss_unit(grid.quad_order)
    length = np.where(cover, hi - lo, 0.0)
    pts = ns.points.copy()
    wts = ns.weights.copy()
    pts[cover, :, 0] = lo[cover, None] + length[cover, None] * xu[None, :]
    wts[cover] = length[cover, None] * wu[None, :]
    inside = np.repeat(cover[:, None], grid.quad_order, axis=1)
    return NodeSet(grid, pts, wts, inside)


def box_nodes(grid, box):
    if grid.ndim == 1:
        return interval_nodes(grid, box.lo[0], box.hi[0])
    ns = full_nodes(grid)
    ns.inside = box.contains(ns.points.reshape(-1, grid.ndim)).reshape(ns.inside.shape)
    return ns


# ---------------------------------------------------------------------------
# densities


@dataclass
class DensityField:
    """Normalised density on the fine grid.

    ``values`` are fine-cell averages (0 where ``support_mask`` is false).
    Node samples (``nodes``/``node_values``) are present when the field was
    sampled pointwise; they feed the node quadrature of :func:`h_exact`.
    """

    grid: GridSpec
    values: np.ndarray
    support_mask: np.ndarray
    nodes: NodeSet = None
    node_values: np.ndarray = None
    failed_points: int = 0
    t: float = 0.0

    @classmethod
    def from_nodes(cls, nodes, node_values, failed_points=0, t=0.0):
        g = nodes.grid
        avg = np.sum(node_values * nodes.weights, axis=1) / g.fine_volume
        mask = np.any(nodes.inside, axis=1).reshape(g.fine_shape)
        return cls(g, avg.reshape(g.fine_shape), mask, nodes, node_values, failed_points, t)

    def mass(self):
        return float(np.sum(self.values) * self.grid.fine_volume)


@dataclass
class EquilibriumDensity:
    """``|psi|^2 / norm`` on a support, with ``norm = int_support |psi|^2``."""

    field: DensityField
    log_norm: float
    log_psi_sq: np.ndarray = field(default=None, repr=False)

    @property
    def norm(self):
        return math.exp(self.log_norm)

    @property
    def values(self):
        return self.field.values


def equilibrium_on(state, nodes, t=0.0, backend=None):
    """Equilibrium density on the support flagged in ``nodes``."""
    inside = nodes.inside
    if not inside.any():
        raise EmptySupportError("support contains no quadrature nodes")
    pts = nodes.points[inside]
    lp = log_abs_sq(state, pts, t, backend)
    if not np.all(np.isfinite(lp)):
        raise ValueError("|psi|^2 is not finite on the support")
    log_norm, sign = logsumexp(lp, b=nodes.weights[inside], return_sign=True)
    if not sign > 0:
        raise EmptySupportError("support has no positive measure")
    log_norm = float(log_norm)
    full_lp = np.full(inside.shape, -np.inf)
    full_lp[inside] = lp
    vals = np.zeros(inside.shape)
    vals[inside] = np.exp(lp - log_norm)
    field_ = DensityField.from_nodes(nodes, vals, 0, float(t))
    np.maximum(field_.values, 0.0, out=field_.values)  # signed fans: round-off only
    return EquilibriumDensity(field_, log_norm, full_lp)


def make_equilibrium(state, support, grid, t=0.0, backend=None):
    """Equilibrium density for ``state`` at time ``t`` on a support box or node set."""
    nodes = support if isinstance(support, NodeSet) else box_nodes(grid, support)
    return equilibrium_on(state, nodes, t, backend)


class UniformDensity:
    """``1 / vol`` on a box."""

    kind = "uniform"

    def __init__(self, support):
        self.support = support

    def log_density(self, Y):
        return np.full(np.atleast_2d(Y).shape[0], -math.log(self.support.volume))

    def interval_mass(self, a, b):
        return (np.asarray(b) - np.asarray(a)) / self.support.volume


class GaussianDensity:
    """Product Gaussian truncated to the support box and renormalised."""

    kind = "gaussian"

    def __init__(self, support, mu, sigma):
        self.support = support
        self.mu = np.atleast_1d(np.asarray(mu, dtype=float))
        self.sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
        if np.any(self.sigma <= 0):
            raise ValueError("sigma must be positive")
        lo, hi = np.array(support.lo), np.array(support.hi)
        self._mass = 0.5 * (erf(self._z(hi)) - erf(self._z(lo)))
        self._log_c = float(np.sum(-np.log(self.sigma * math.sqrt(2 * math.pi) * self._mass)))

    def _z(self, v):
        return (v - self.mu) / (self.sigma * math.sqrt(2.0))

    def log_density(self, Y):
        Y = np.atleast_2d(Y)
        return self._log_c - 0.5 * np.sum(((Y - self.mu) / self.sigma) ** 2, axis=1)

    def interval_mass(self, a, b):
        a = np.asarray(a, dtype=float)[..., None]
        b = np.asarray(b, dtype=float)[..., None]
        return (0.5 * (erf(self._z(b)) - erf(self._z(a))) / self._mass)[..., 0]


class EquilibriumInitial:
    """Equilibrium density of ``state`` at t = 0 on the support box."""

    kind = "equilibrium"
    interval_nodes = 8

    def __init__(self, state, support, grid, backend=None):
        self.state = state
        self.support = support
        self.log_norm = make_equilibrium(state, support, grid, 0.0, backend).log_norm
        self._backend = backend

    def log_density(self, Y):
        return log_abs_sq(self.state, np.atleast_2d(Y), 0.0, self._backend) - self.log_norm

    def interval_mass(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        xu, wu = _gauss_unit(self.interval_nodes)
        pts = a[:, None] + (b - a)[:, None] * xu[None, :]
        lp = self.log_density(pts.reshape(-1, 1)).reshape(pts.shape)
        return np.sum(np.exp(lp) * wu[None, :], axis=1) * (b - a)


class GridDensity:
    """Density known only through a node-sampled :class:`DensityField`.

    Values come from multilinear interpolation of the fine-cell averages; a
    point belongs to the support only if the interpolated support indicator
    is 1, i.e. every surrounding cell is in the support.
    """

    kind = "grid"
    support = None

    def __init__(self, field):
        g = field.grid
        axes = tuple(g.fine_centers(r) for r in range(g.ndim))
        self.field = field
        self._rho = RegularGridInterpolator(axes, field.values, bounds_error=False, fill_value=0.0)
        self._mask = RegularGridInterpolator(axes, field.support_mask.astype(float),
                                             bounds_error=False, fill_value=0.0)

    def log_density(self, Y):
        Y = np.atleast_2d(Y)
        rho = self._rho(Y)
        ok = (self._mask(Y) >= 1.0 - 1e-12) & (rho > 0)
        with np.errstate(divide="ignore"):
            return np.where(ok, np.log(np.where(ok, rho, 1.0)), -np.inf)


def sample_initial(rho0, grid):
    """Node sampling of an initial density at t = 0."""
    if rho0.support is None:
        nodes = full_nodes(grid)
        lr = rho0.log_density(nodes.points.reshape(-1, grid.ndim)).reshape(nodes.inside.shape)
        nodes.inside = np.isfinite(lr)
    else:
        nodes = box_nodes(grid, rho0.support)
        lr = np.full(nodes.inside.shape, -np.inf)
        lr[nodes.inside] = rho0.log_density(nodes.points[nodes.inside])
    vals = np.where(nodes.inside, np.exp(lr), 0.0)
    return DensityField.from_nodes(nodes, vals, 0, 0.0)


# ---------------------------------------------------------------------------
# transport


def flow_interval(state, a, b, t, opts=None, backend=None):
    """Ends of the 1D interval ``[a, b]`` carried by the flow from 0 to ``t``."""
    opts = opts or IntegratorOptions()
    pts = np.array([[a], [b]], dtype=float)
    out, status, *_ = get_backend(backend).integrate_batch(pts, 0.0, t, state.packed, opts)
    if np.any(status != STATUS_OK):
        raise SupportViolation(f"support endpoints could not be transported to t={t}")
    return float(out[0, 0]), float(out[1, 0])


def _backtrack(state, pts, t, opts, backend):
    Y0, status, *_ = get_backend(backend).integrate_batch(pts, t, 0.0, state.packed, opts)
    return Y0, status == STATUS_OK


def transport_density(rho0, state, grid, t, opts=None, backend=None):
    """Density at time ``t`` from an initial density.

    For a 1D initial density on an interval the flow is monotone, so the
    preimage of every fine cell is an interval: its cell edges are integrated
    back to t = 0 and the cell receives the initial mass of that preimage
    (a conservative remap that also captures structure finer than a cell).
    Otherwise every quadrature node is backtracked and the density follows
    from the constancy of ``rho / |psi|^2``.  Points whose backward
    trajectory fails are dropped and counted in ``failed_points``.
    """
    opts = opts or IntegratorOptions()
    t = float(t)
    if t == 0.0:
        return sample_initial(rho0, grid)
    if grid.ndim == 1 and hasattr(rho0, "interval_mass") and rho0.support is not None:
        return _remap_interval(rho0, state, grid, t, opts, backend)
    if grid.ndim == 2 and rho0.support is not None:
        return _remap_box(rho0, state, grid, t, opts, backend)
    return _transport_nodes(rho0, state, grid, t, opts, backend)


def _remap_interval(rho0, state, grid, t, opts, backend):
    a0, b0 = rho0.support.lo[0], rho0.support.hi[0]
    a_t, b_t = flow_interval(state, a0, b0, t, opts, backend)
    e = grid.fine_edges(0)
    lo = np.maximum(e[:-1], a_t)
    hi = np.minimum(e[1:], b_t)
    cover = hi > lo
    inner = (e > a_t) & (e < b_t)
    pre = np.full(e.size, np.nan)
    failed = 0
    if inner.any():
        Y0, ok = _backtrack(state, e[inner][:, None], t, opts, backend)
        pre[inner] = np.where(ok, np.clip(Y0[:, 0], a0, b0), np.nan)
        failed = int(np.sum(~ok))
    p_lo = np.where(e[:-1] > a_t, pre[:-1], a0)
    p_hi = np.where(e[1:] < b_t, pre[1:], b0)
    good = cover & np.isfinite(p_lo) & np.isfinite(p_hi)
    mass = np.zeros(cover.size)
    if good.any():
        mass[good] = np.maximum(rho0.interval_mass(p_lo[good], p_hi[good]), 0.0)
    values = mass / grid.fine_volume
    return DensityField(grid, values, good.copy(), interval_nodes(grid, a_t, b_t), None, failed, t)


def _box_perimeter(box, s):
    """Points at arclength ``s`` along the boundary of a 2D box, counter-clockwise."""
    (x0, y0), (x1, y1) = box.lo, box.hi
    w, h = x1 - x0, y1 - y0
    s = np.mod(s, 2 * (w + h))
    out = np.empty((s.size, 2))
    for k, (start, direction, length) in enumerate((
            ((x0, y0), (1, 0), w), ((x1, y0), (0, 1), h),
            ((x1, y1), (-1, 0), w), ((x0, y1), (0, -1), h))):
        offset = [0.0, w, w + h, 2 * w + h][k]
        sel = (s >= offset) & (s < offset + length)
        d = s[sel] - offset
        out[sel, 0] = start[0] + direction[0] * d
        out[sel, 1] = start[1] + direction[1] * d
    return out


def flow_box_boundary(state, box, t, spacing, opts=None, backend=None):
    """Image of a 2D box boundary under the flow from 0 to ``t``.

    Returns ``(polygon, failed)``: boundary points are refined until
    consecutive images are at most ``spacing`` apart; points whose forward
    trajectory fails are dropped and counted.
    """
    opts = opts or IntegratorOptions()
    be = get_backend(backend)
    perim = 2.0 * (box.hi[0] - box.lo[0] + box.hi[1] - box.lo[1])
    n0 = max(64, int(math.ceil(perim / spacing)))
    s = np.linspace(0.0, perim, n0, endpoint=False)
    corners = np.cumsum([0.0, box.hi[0] - box.lo[0], box.hi[1] - box.lo[1], box.hi[0] - box.lo[0]])
    s = np.unique(np.concatenate([s, corners]))
    img, status, *_ = be.integrate_batch(_box_perimeter(box, s), 0.0, t, state.packed, opts)
    ok = status == STATUS_OK
    for _ in range(40):
        good_img = img[ok]
        good_s = s[ok]
        if good_s.size < 3:
            raise SupportViolation(f"support boundary could not be transported to t={t}")
        gap = np.linalg.norm(np.roll(good_img, -1, axis=0) - good_img, axis=1)
        ds = np.mod(np.roll(good_s, -1) - good_s, perim)
        split = (gap > spacing) & (ds > 1e-12 * perim)
        if not split.any() or s.size >= BOUNDARY_MAX_POINTS:
            break
        new_s = np.mod(good_s[split] + 0.5 * ds[split], perim)
        new_img, new_status, *_ = be.integrate_batch(_box_perimeter(box, new_s), 0.0, t,
                                                     state.packed, opts)
        s = np.concatenate([s, new_s])
        img = np.concatenate([img, new_img])
        ok = np.concatenate([ok, new_status == STATUS_OK])
        order = np.argsort(s, kind="stable")
        s, img, ok = s[order], img[order], ok[order]
    return img[ok], int(np.sum(~ok))


def polygon_nodes(grid, poly):
    """Nodes on ``cell & polygon`` for every fine cell of a 2D grid.

    Cells covered entirely keep the tensor Gauss nodes of :func:`full_nodes`;
    partly covered cells get a signed triangle-fan rule on the clipped piece.
    """
    full = full_nodes(grid)
    q = grid.quad_order
    n1, n2 = grid.fine_shape
    e1, e2 = grid.fine_edges(0), grid.fine_edges(1)
    fv = grid.fine_volume
    is_full = np.zeros(n1 * n2, dtype=bool)
    pieces = {}
    j_lo = max(0, int(np.searchsorted(e2, poly[:, 1].min(), side="right")) - 1)
    j_hi = min(n2, int(np.searchsorted(e2, poly[:, 1].max(), side="left")))
    for j in range(j_lo, j_hi):
        band = clip_rect(poly, (-np.inf, e2[j]), (np.inf, e2[j + 1]))
        if len(band) < 3 or signed_area(band) <= 0:
            continue
        i_lo = max(0, int(np.searchsorted(e1, band[:, 0].min(), side="right")) - 1)
        i_hi = min(n1, int(np.searchsorted(e1, band[:, 0].max(), side="left")))
        for i in range(i_lo, i_hi):
            piece = clip_rect(band, (e1[i], e2[j]), (e1[i + 1], e2[j + 1]))
            a = signed_area(piece)
            if a <= 1e-14 * fv:
                continue
            idx = i * n2 + j
            if abs(a - fv) <= 1e-12 * fv:
                is_full[idx] = True
            else:
                pieces[idx] = fan_quadrature(piece, q)
    m = max([full.points.shape[1]] + [len(w) for _, w in pieces.values()])
    pts = np.zeros((n1 * n2, m, 2))
    pts[:, :full.points.shape[1]] = full.points
    wts = np.zeros((n1 * n2, m))
    inside = np.zeros((n1 * n2, m), dtype=bool)
    k = full.points.shape[1]
    wts[is_full, :k] = full.weights[is_full]
    inside[is_full, :k] = True
    for idx, (p, w) in pieces.items():
        pts[idx, :len(w)] = p
        wts[idx, :len(w)] = w
        inside[idx, :len(w)] = True
    return NodeSet(grid, pts, wts, inside)


def _edge_preimages(state, grid, active, t, opts, backend, tol, max_depth=10):
    """Backtracked points along every fine-grid edge bordering an active cell.

    Each edge starts as its two end vertices and is bisected until consecutive
    preimages are within ``tol`` (or ``max_depth`` bisections).  Returns
    ``(h_edges, v_edges, failed)`` where the dicts map an edge ``(i, j)`` to
    its preimage points ordered from start to end; horizontal edges run from
    vertex (i, j) to (i+1, j), vertical ones from (i, j) to (i, j+1).  Edges
    with a failed trajectory map to None.
    """
    n1, n2 = grid.fine_shape
    e1, e2 = grid.fine_edges(0), grid.fine_edges(1)
    ii, jj = np.nonzero(active)
    h_keys = np.unique(np.concatenate([ii * (n2 + 1) + jj, ii * (n2 + 1) + jj + 1]))
    v_keys = np.unique(np.concatenate([ii * n2 + jj, (ii + 1) * n2 + jj]))
    hi_, hj = np.divmod(h_keys, n2 + 1)
    vi, vj = np.divmod(v_keys, n2)
    A = np.concatenate([np.stack([e1[hi_], e2[hj]], 1), np.stack([e1[vi], e2[vj]], 1)])
    B = np.concatenate([np.stack([e1[hi_ + 1], e2[hj]], 1), np.stack([e1[vi], e2[vj + 1]], 1)])
    n_edges = A.shape[0]

    # backtrack each distinct vertex once
    verts, inv = np.unique(np.concatenate([A, B]), axis=0, return_inverse=True)
    V0, ok = _backtrack(state, verts, t, opts, backend)
    V0[~ok] = np.nan
    failed = int(np.sum(~ok))
    eid = np.arange(n_edges)
    sa, sb = np.zeros(n_edges), np.ones(n_edges)
    Pa, Pb = V0[inv[:n_edges]], V0[inv[n_edges:]]
    done = []
    for depth in range(max_depth + 1):
        finite = np.all(np.isfinite(Pa), axis=1) & np.all(np.isfinite(Pb), axis=1)
        split = finite & (np.linalg.norm(Pb - Pa, axis=1) > tol) & (depth < max_depth)
        done.append((eid[~split], sa[~split], sb[~split], Pa[~split], Pb[~split]))
        if not split.any():
            break
        eid, sa, sb, Pa, Pb = eid[split], sa[split], sb[split], Pa[split], Pb[split]
        sm = 0.5 * (sa + sb)
        mid_pts = A[eid] + sm[:, None] * (B[eid] - A[eid])
        M0, ok = _backtrack(state, mid_pts, t, opts, backend)
        M0[~ok] = np.nan
        failed += int(np.sum(~ok))
        eid = np.concatenate([eid, eid])
        sa, sb = np.concatenate([sa, sm]), np.concatenate([sm, sb])
        Pa, Pb = np.concatenate([Pa, M0]), np.concatenate([M0, Pb])
    eid, sa, sb, Pa, Pb = (np.concatenate(c) for c in zip(*done))
    order = np.lexsort((sa, eid))
    eid, Pa, Pb = eid[order], Pa[order], Pb[order]
    cuts = np.flatnonzero(np.diff(eid)) + 1
    edges = []
    for a_, b_ in zip(np.split(Pa, cuts), np.split(Pb, cuts)):
        pts = np.vstack([a_, b_[-1:]])
        edges.append(pts if np.all(np.isfinite(pts)) else None)
    nh = h_keys.size
    h_edges = {(int(i), int(j)): edges[k] for k, (i, j) in enumerate(zip(hi_, hj))}
    v_edges = {(int(i), int(j)): edges[nh + k] for k, (i, j) in enumerate(zip(vi, vj))}
    return h_edges, v_edges, failed


def _remap_box(rho0, state, grid, t, opts, backend):
    box = rho0.support
    n1, n2 = grid.fine_shape
    spacing = 0.5 * min(grid.fine_width)
    poly, failed = flow_box_boundary(state, box, t, spacing, opts, backend)
    nodes = polygon_nodes(grid, poly)
    hit = np.any(nodes.inside, axis=1).reshape(n1, n2)
    # one-cell halo: the discrete preimages may reach slightly past Omega_t
    active = hit.copy()
    active[1:] |= hit[:-1]
    active[:-1] |= hit[1:]
    active[:, 1:] |= active[:, :-1].copy()
    active[:, :-1] |= active[:, 1:].copy()
    h_edges, v_edges, f_edges = _edge_preimages(state, grid, active, t, opts, backend,
                                                0.5 * spacing)
    failed += f_edges
    lo, hi = np.array(box.lo), np.array(box.hi)
    q = max(grid.quad_order, REMAP_QUAD_ORDER)  # fan triangles of twisted preimages are long
    values = np.zeros((n1, n2))
    for i, j in zip(*np.nonzero(active)):
        sides = (h_edges[i, j], v_edges[i + 1, j], h_edges[i, j + 1], v_edges[i, j])
        if any(side is None for side in sides):
            continue
        bottom, right, top, left = sides
        P = np.vstack([bottom[:-1], right[:-1], top[::-1][:-1], left[::-1][:-1]])
        if np.any(P.max(axis=0) < lo) or np.any(P.min(axis=0) > hi):
            continue
        if not (np.all(P >= lo) and np.all(P <= hi)):
            P = clip_rect(P, lo, hi)
        pts, w = fan_quadrature(P, q)
        if w.size:
            values[i, j] = max(float(np.sum(np.exp(rho0.log_density(pts)) * w)), 0.0)
    values /= grid.fine_volume
    return DensityField(grid, values, values > 0, nodes, None, failed, t)


def _transport_nodes(rho0, state, grid, t, opts, backend):
    nodes = full_nodes(grid)
    idx = np.arange(nodes.inside.size)
    pts = nodes.points.reshape(-1, grid.ndim)
    Y0, ok = _backtrack(state, pts, t, opts, backend)
    lr0 = np.full(idx.size, -np.inf)
    if ok.any():
        lr0[ok] = rho0.log_density(Y0[ok])
        if rho0.support is not None:
            lr0[ok & ~rho0.support.contains(Y0)] = -np.inf
    keep = np.isfinite(lr0)
    lp_t = np.full(idx.size, -np.inf)
    lp_0 = np.full(idx.size, -np.inf)
    if keep.any():
        lp_t[keep] = log_abs_sq(state, pts[keep], t, backend)
        lp_0[keep] = log_abs_sq(state, Y0[keep], 0.0, backend)
    with np.errstate(invalid="ignore"):  # -inf - -inf where y0 sits on a node of psi_0
        logv = lr0 + lp_t - lp_0
    good = keep & np.isfinite(logv)
    vals = np.zeros(idx.size)
    vals[good] = np.exp(logv[good])
    nodes.inside = good.reshape(nodes.inside.shape)
    return DensityField.from_nodes(nodes, vals.reshape(nodes.inside.shape), int(np.sum(~ok)), t)


# ---------------------------------------------------------------------------
# H-functions


def _xlogy_ratio(x, y):
    """``x ln(x/y)`` with ``0 ln 0 = 0``; requires y > 0 where x > 0."""
    pos = x > 0
    out = np.zeros_like(x)
    out[pos] = x[pos] * (np.log(x[pos]) - np.log(y[pos]))
    return out


def _check_violation(rho, rho_pw, w, where):
    bad = (rho > 0) & (rho_pw <= 0)
    if not bad.any():
        return bad
    total = float(np.sum(rho * w))
    frac = float(np.sum(rho[bad] * w[bad])) / total if total > 0 else 1.0
    if frac > SUPPORT_VIOLATION_FRACTION:
        raise SupportViolation(f"{where}: {frac:.3g} of the mass lies where the equilibrium "
                               f"density vanishes")
    return bad


def _require_nodes(rho, eq):
    if rho.node_values is None or eq.field.node_values is None:
        raise ValueError("exact H-functions need node-sampled densities")
    if not rho.nodes.same_layout(eq.field.nodes):
        raise ValueError("densities are sampled at different nodes")


def h_exact(rho, eq):
    """Node quadrature of ``rho ln(rho / rho_pw) - rho + rho_pw``."""
    _require_nodes(rho, eq)
    r, p, w = rho.node_values, eq.field.node_values, rho.nodes.weights
    bad = _check_violation(r, p, w, "h_exact")
    r = np.where(bad, 0.0, r)
    return float(np.sum((_xlogy_ratio(r, p) - r + p) * w))


def h_q_exact(rho, eq):
    """Node quadrature of ``rho ln(rho / |psi|^2)``."""
    _require_nodes(rho, eq)
    r, w = rho.node_values, rho.nodes.weights
    bad = _check_violation(r, eq.field.node_values, w, "h_q_exact")
    pos = (r > 0) & ~bad
    return float(np.sum(r[pos] * (np.log(r[pos]) - eq.log_psi_sq[pos]) * w[pos]))


def coarse_grain(fine, grid):
    """Mean of the ``subsample**N`` fine values inside each coarse cell."""
    fine = np.asarray(fine, dtype=float)
    s = grid.subsample
    if fine.shape != grid.fine_shape:
        raise ValueError(f"expected fine shape {grid.fine_shape}, got {fine.shape}")
    shape = []
    for c in grid.n_cells:
        shape += [c, s]
    return fine.reshape(shape).mean(axis=tuple(range(1, 2 * grid.ndim, 2)))


def h_coarse(rho, eq):
    """Coarse-cell sum of ``rb ln(rb / pb) - rb + pb`` times the cell volume."""
    grid = rho.grid
    rb = coarse_grain(rho.values, grid)
    pb = coarse_grain(eq.values, grid)
    bad = _check_violation(rb, pb, np.full(rb.shape, grid.cell_volume), "h_coarse")
    rb = np.where(bad, 0.0, rb)
    return float(np.sum(_xlogy_ratio(rb, pb) - rb + pb) * grid.cell_volume)


def h_q_coarse(rho, eq):
    """Coarse ``sum rb ln(rb / psib) dV``; ``psib`` is the cell mean of |psi|^2 over the support."""
    grid = rho.grid
    rb = coarse_grain(rho.values, grid)
    pb = coarse_grain(eq.values, grid)
    bad = _check_violation(rb, pb, np.full(rb.shape, grid.cell_volume), "h_q_coarse")
    pos = (rb > 0) & ~bad
    terms = rb[pos] * (np.log(rb[pos]) - np.log(pb[pos]) - eq.log_norm)
    return float(np.sum(terms) * grid.cell_volume)


# ---------------------------------------------------------------------------
# relaxation experiment


REPORT_COLUMNS = ("t", "N_t", "H_pw", "H_pw_coarse", "H_q_coarse", "mass", "failed_points")


@dataclass
class RelaxationRow:
    t: float
    N_t: float
    H_pw: float
    H_pw_coarse: float
    H_q_coarse: float
    mass: float
    failed_points: int
    n_points: int = 0


@dataclass
class RelaxationReport:
    rows: list
    failed: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def times(self):
        return np.array([r.t for r in self.rows])

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])

    def failed_fraction(self):
        return max((r.failed_points / max(r.n_points, 1) for r in self.rows), default=0.0)

    def identity_residuals(self):
        """``H_pw_coarse - H_q_coarse - ln N_t`` per row."""
        return np.array([r.H_pw_coarse - r.H_q_coarse - math.log(r.N_t) for r in self.rows])


def run_relaxation(state, rho0, grid, times, opts=None, backend=None):
    """Transport ``rho0`` to each time and evaluate normaliser and H-functions.

    The fine-grained H-function is computed after the change of variables
    ``y -> y0`` along trajectories: the ratio ``rho / rho_pw`` is carried
    unchanged apart from the normaliser, so ``H_pw(t) = H_pw(0) + ln N(t) -
    ln N(0)`` with ``N(t)`` integrated afresh over the transported support.
    """
    times = [float(t) for t in times]
    if not times or times[0] != 0.0:
        raise ValueError("times must start at 0")
    if rho0.support is not None:
        check_support(grid, rho0.support)
    rho_init = sample_initial(rho0, grid)
    eq_init = equilibrium_on(state, rho_init.nodes, 0.0, backend)
    h0 = h_exact(rho_init, eq_init)
    rows = []
    failed = False
    for t in times:
        rho = rho_init if t == 0.0 else transport_density(rho0, state, grid, t, opts, backend)
        eq = equilibrium_on(state, rho.nodes, t, backend)
        n_pts = int(rho.support_mask.sum()) + rho.failed_points
        if rho.failed_points > FAILED_POINT_FRACTION * max(n_pts, 1):
            failed = True
        rows.append(RelaxationRow(
            t=t,
            N_t=eq.norm,
            H_pw=h0 + eq.log_norm - eq_init.log_norm,
            H_pw_coarse=h_coarse(rho, eq),
            H_q_coarse=h_q_coarse(rho, eq),
            mass=rho.mass(),
            failed_points=rho.failed_points,
            n_points=n_pts,
        ))
    return RelaxationReport(rows, failed)



def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_report_csv(report, path, meta=None):
    """One row per time; ``#``-prefixed ``key: value`` lines precede the header."""
    with open(path, "w", newline="") as fh:
        for k, v in (meta or report.meta).items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in report.rows:
            w.writerow([_fmt(getattr(r, c)) for c in REPORT_COLUMNS])


def write_density_csv(rho, path, meta=None):
    """Fine-cell snapshot: cell indices, centre coordinates, cell mean, support flag."""
    g = rho.grid
    vals = rho.values
    mask = rho.support_mask
    centers = [g.fine_centers(r) for r in range(g.ndim)]
    with open(path, "w", newline="") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        idx_cols = [f"i{r + 1}" for r in range(g.ndim)]
        y_cols = [f"y{r + 1}" for r in range(g.ndim)] if g.ndim > 1 else ["y"]
        w.writerow(idx_cols + y_cols + ["value", "mask"])
        for index in np.ndindex(*g.fine_shape):
            ys = [_fmt(centers[r][index[r]]) for r in range(g.ndim)]
            w.writerow(list(index) + ys + [_fmt(vals[index]), int(mask[index])])
