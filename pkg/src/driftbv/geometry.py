"""Uniform box grids, boundary labelling, distance functions and the
interior cutoff ``omega_h = eta_h(d(., Gamma))``.

Cell fields are flat numpy arrays of length ``grid.size`` in C order over
``grid.shape`` (axis 0 is x, axis 1 is y).  Vector cell fields have shape
``(grid.size, grid.dim)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import BadBoundarySpec, BadEtaConstants, CutoffDoesNotFit, GridMismatch, InvalidInput

SIDES = {1: ("left", "right"), 2: ("left", "right", "bottom", "top")}
# side name -> (axis, end) with end 0 at the lower wall, 1 at the upper wall
SIDE_AXIS = {"left": (0, 0), "right": (0, 1), "bottom": (1, 0), "top": (1, 1)}


@dataclass(frozen=True)
class BoundaryPartition:
    """Dirichlet/Neumann label of every boundary side.

    ``labels`` is a tuple of ``(side, "D" | "N")`` pairs covering each side of
    the box exactly once.
    """

    labels: tuple

    def label(self, side):
        return dict(self.labels)[side]

    @property
    def dirichlet(self):
        return tuple(s for s, lab in self.labels if lab == "D")

    @property
    def neumann(self):
        return tuple(s for s, lab in self.labels if lab == "N")

    @property
    def poincare_unavailable(self):
        # no Dirichlet part: constants are in the kernel of the stiffness matrix
        return not self.dirichlet


@dataclass(frozen=True)
class Grid:
    extents: tuple
    cells: tuple
    bc: BoundaryPartition

    @property
    def dim(self):
        return len(self.cells)

    @property
    def shape(self):
        return tuple(self.cells)

    @property
    def size(self):
        return int(np.prod(self.cells))

    @cached_property
    def spacing(self):
        return tuple((b - a) / n for (a, b), n in zip(self.extents, self.cells))

    @property
    def vol(self):
        return float(np.prod(self.spacing))

    def face_area(self, axis):
        """Measure of a face normal to ``axis`` (1 in 1D)."""
        return float(np.prod([h for k, h in enumerate(self.spacing) if k != axis]))

    @cached_property
    def axes_centers(self):
        return tuple(a + (np.arange(n) + 0.5) * h for (a, _), n, h in zip(self.extents, self.cells, self.spacing))

    @cached_property
    def centers(self):
        """Cell-center coordinates, shape ``(size, dim)``."""
        mesh = np.meshgrid(*self.axes_centers, indexing="ij")
        return np.stack([c.ravel() for c in mesh], axis=-1)

    def face_centers(self, axis):
        """Centers of all faces normal to ``axis``; array shape ``(*face_shape, dim)``."""
        a, b = self.extents[axis]
        nodes = np.linspace(a, b, self.cells[axis] + 1)
        axes = [nodes if k == axis else c for k, c in enumerate(self.axes_centers)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def same_as(self, other):
        return self.extents == other.extents and self.cells == other.cells

    def check_field(self, arr, vector=False, name="field"):
        arr = np.asarray(arr, dtype=float)
        expected = (self.size, self.dim) if vector else (self.size,)
        if arr.shape != expected:
            raise GridMismatch(f"{name} has shape {arr.shape}, grid expects {expected}")
        return arr


def _normalize_selectors(selectors, dim):
    if selectors is None:
        return []
    if isinstance(selectors, str):
        selectors = [selectors]
    out = []
    for s in selectors:
        if s == "all":
            out.extend(SIDES[dim])
        elif s in SIDES[dim]:
            out.append(s)
        else:
            raise BadBoundarySpec(f"unknown boundary side {s!r} for a {dim}D box; use {SIDES[dim]} or 'all'")
    return out


def build_grid(extents, cells, dirichlet=(), neumann=()):
    """Build a uniform box grid with a complete Dirichlet/Neumann partition."""
    if np.ndim(extents) == 1:
        extents = [extents]
    extents = tuple((float(a), float(b)) for a, b in extents)
    cells = (int(cells),) if np.ndim(cells) == 0 else tuple(int(n) for n in cells)
    dim = len(extents)
    if dim not in (1, 2) or len(cells) != dim:
        raise InvalidInput(f"need matching 1D or 2D extents/cells, got {extents} / {cells}")
    for (a, b), n in zip(extents, cells):
        if not (np.isfinite(a) and np.isfinite(b) and b > a):
            raise InvalidInput(f"bad extent ({a}, {b})")
        if n < 4:
            raise InvalidInput(f"need at least 4 cells per axis, got {n}")
    d_sides = _normalize_selectors(dirichlet, dim)
    n_sides = _normalize_selectors(neumann, dim)
    overlap = set(d_sides) & set(n_sides)
    if overlap:
        raise BadBoundarySpec(f"sides labelled both Dirichlet and Neumann: {sorted(overlap)}")
    missing = [s for s in SIDES[dim] if s not in d_sides and s not in n_sides]
    if missing:
        raise BadBoundarySpec(f"unlabelled boundary sides: {missing}")
    labels = tuple((s, "D" if s in d_sides else "N") for s in SIDES[dim])
    return Grid(extents, cells, BoundaryPartition(labels))


def wall_distances(grid, points):
    """Distances of ``points`` (``(n, dim)``) to each wall, shape ``(n, 2*dim)``.

    Column ``2*k + end`` holds the distance to the wall ``(axis k, end)``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    cols = []
    for k, (a, b) in enumerate(grid.extents):
        cols.append(pts[:, k] - a)
        cols.append(b - pts[:, k])
    return np.stack(cols, axis=-1)


def distance_to_boundary(grid, points=None):
    """Exact distance to the box boundary at cell centers (or at ``points``)."""
    pts = grid.centers if points is None else points
    return wall_distances(grid, pts).min(axis=1)


def boundary_projection(grid, points=None):
    """Nearest wall of each point: returns ``(d, pi_x, nu)``.

    ``pi_x`` is the projection onto the boundary and ``nu`` the outward unit
    normal there.  Ties (box diagonals) go to the first wall in axis order.
    """
    pts = np.atleast_2d(grid.centers if points is None else np.asarray(points, dtype=float))
    dist = wall_distances(grid, pts)
    idx = dist.argmin(axis=1)
    d = dist[np.arange(len(pts)), idx]
    axis, end = idx // 2, idx % 2
    nu = np.zeros_like(pts)
    nu[np.arange(len(pts)), axis] = np.where(end == 1, 1.0, -1.0)
    proj = pts.copy()
    walls = np.array([grid.extents[k][e] for k in range(grid.dim) for e in (0, 1)])
    proj[np.arange(len(pts)), axis] = walls[idx]
    return d, proj, nu


@dataclass(frozen=True)
class EtaProfile:
    h: float
    c1: float
    c2: float
    C_h: float
    M_h: float


def build_eta(h, c1=0.5, c2=None):
    """Radial cutoff profile; ``c2`` defaults to the value forced by ``2 c2^2 - c1^2 = 1``."""
    if not h > 0:
        raise BadEtaConstants(f"h must be positive, got {h}")
    if c2 is None:
        c2 = math.sqrt((1.0 + c1 * c1) / 2.0)
    if not (0 < c1 < c2 < 1):
        raise BadEtaConstants(f"need 0 < c1 < c2 < 1, got c1={c1}, c2={c2}")
    if abs(2 * c2 * c2 - c1 * c1 - 1) > 1e-12:
        raise BadEtaConstants(f"2 c2^2 - c1^2 = {2 * c2 * c2 - c1 * c1!r}, must equal 1")
    M_h = (c2 * c2 - c1 * c1) * h * h
    return EtaProfile(h=float(h), c1=float(c1), c2=float(c2), C_h=M_h * math.log(2.0), M_h=M_h)


def eta_eval(profile, r):
    """Return ``(eta_h(r), eta_h'(r))`` for ``r >= 0`` (array or scalar)."""
    r_arr = np.asarray(r, dtype=float)
    h, c1, c2, C = profile.h, profile.c1, profile.c2, profile.C_h
    eta = np.zeros_like(r_arr)
    deta = np.zeros_like(r_arr)
    lo = (r_arr > c1 * h) & (r_arr <= c2 * h)
    hi = (r_arr > c2 * h) & (r_arr < h)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        q = r_arr**2 - (c1 * h) ** 2
        e = np.exp(-C / q)
        eta = np.where(lo, e, eta)
        deta = np.where(lo, 2 * r_arr * C / q**2 * e, deta)
        q2 = h * h - r_arr**2
        e2 = np.exp(-C / q2)
        eta = np.where(hi, 1.0 - e2, eta)
        deta = np.where(hi, 2 * r_arr * C / q2**2 * e2, deta)
    eta = np.where(r_arr >= h, 1.0, eta)
    if r_arr.ndim == 0:
        return float(eta), float(deta)
    return eta, deta


@dataclass(frozen=True)
class Cutoff:
    """Sampled cutoff ``omega_h`` and its discrete Laplacian on ``grid``."""

    grid: Grid
    eta: EtaProfile
    values: np.ndarray
    laplacian: np.ndarray
    gradient: np.ndarray  # eta'(d) * grad d, shape (size, dim)
    distance: np.ndarray
    interior_mask: np.ndarray  # Omega_h = {d > h}

    @property
    def laplacian_pos(self):
        return np.maximum(self.laplacian, 0.0)

    @property
    def shell_mask(self):
        return ~self.interior_mask


def discrete_laplacian(grid, field):
    """Standard second-order Laplacian with zero values outside the box."""
    u = np.asarray(field, dtype=float).reshape(grid.shape)
    out = np.zeros_like(u)
    for k, h in enumerate(grid.spacing):
        pad = [(0, 0)] * grid.dim
        pad[k] = (1, 1)
        up = np.pad(u, pad)
        sl_lo = [slice(None)] * grid.dim
        sl_hi = [slice(None)] * grid.dim
        sl_lo[k] = slice(0, -2)
        sl_hi[k] = slice(2, None)
        out += (up[tuple(sl_lo)] - 2 * u + up[tuple(sl_hi)]) / (h * h)
    return out.ravel()


def build_cutoff(grid, eta):
    half_widths = [(b - a) / 2 for a, b in grid.extents]
    if eta.h >= 0.5 * min(half_widths):
        raise CutoffDoesNotFit(f"h = {eta.h} must be below half the smallest box half-width ({0.5 * min(half_widths)})")
    d, _, nu = boundary_projection(grid)
    w, dw = eta_eval(eta, d)
    grad = dw[:, None] * (-nu)  # grad d = -nu(pi(x))
    lap = discrete_laplacian(grid, w)
    return Cutoff(grid=grid, eta=eta, values=w, laplacian=lap, gradient=grad, distance=d, interior_mask=d > eta.h)


def default_cutoff_h(grid):
    return 8.0 * max(grid.spacing)


@dataclass(frozen=True)
class CutoffSignCheck:
    integral: float
    passed: bool
    worst_cell: int
    worst_value: float


def check_cutoff_sign(cutoff, V, phi=None, tol=1e-10):
    """Check ``V . grad omega_h <= 0`` on the boundary shell.

    The hypothesis must hold for every nonnegative weight, so the verdict is
    pointwise; ``integral`` is the quadrature of ``phi V . grad omega_h`` over
    the shell for the supplied ``phi`` (ones by default).
    """
    grid = cutoff.grid
    V = grid.check_field(V, vector=True, name="V")
    phi = np.ones(grid.size) if phi is None else grid.check_field(phi, name="phi")
    if np.any(phi < 0):
        raise InvalidInput("phi must be nonnegative")
    dot = np.einsum("ij,ij->i", V, cutoff.gradient)
    shell = cutoff.shell_mask
    integral = float(np.sum(grid.vol * phi[shell] * dot[shell]))
    masked = np.where(shell, dot, -np.inf)
    worst = int(np.argmax(masked))
    worst_value = float(masked[worst]) if shell.any() else 0.0
    return CutoffSignCheck(integral=integral, passed=worst_value <= tol, worst_cell=worst, worst_value=worst_value)
