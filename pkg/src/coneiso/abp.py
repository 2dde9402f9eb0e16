"""Numerical re-enactment of the ABP argument.

Solves the weighted Neumann problem div(w grad u) = b w in Omega with flux
data w du/dnu = w g(nu), extracts the lower contact set of u, and checks the
gradient-image inclusion and the arithmetic-geometric mean chain at contact
nodes.

Discretization: conservative cut-cell finite volumes on a uniform Cartesian
grid.  Cells keep their lattice centers as unknowns; cut geometry (wet face
lengths, boundary chords with level-set normals, clipped-cell masses) comes
from the region's level function, so the scheme sees the smooth boundary and
not a staircase.  Cones are handled by aligning the bounding box with the
cone's coordinate planes; flux data on those planes is w g(-e_k), which
vanishes for the mixed problem's restricted gauge.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cones import ConvexCone
from .errors import IncompatibleData, InvalidParameters, NonConvergence
from .measure import QuadratureSpec, weighted_perimeter, weighted_volume

CHAIN_SLACK_COEFF = 4.0  # eps_chain = coeff * h, calibrated on the model case


@dataclass
class MaskedGrid:
    n: int
    lo: np.ndarray
    h: float
    shape: tuple
    index: np.ndarray          # lattice -> row, -1 outside
    centers: np.ndarray        # (M, n)
    center_inside: np.ndarray  # (M,) level(center) <= 0
    masses: np.ndarray         # (M,) integral of w over cell ∩ Omega
    boundary_flux: np.ndarray  # (M,) integral of w g(nu) over the cell's boundary part
    mixed: bool                # Omega touches the cone boundary
    region: object = field(repr=False, default=None)
    cone: object = field(repr=False, default=None)
    segments: list = field(repr=False, default_factory=list)  # (row, mid, nu, length)

    @property
    def size(self) -> int:
        return self.centers.shape[0]


@dataclass
class ScalarField:
    u: np.ndarray
    grad: np.ndarray
    grad_ok: np.ndarray
    hess: np.ndarray
    hess_ok: np.ndarray


@dataclass
class NeumannSolution:
    grid: MaskedGrid
    field: ScalarField
    b: float                 # from quadrature: P_{w,g}(Omega; cone) / w(Omega)
    b_discrete: float        # from the discrete compatibility sum
    residual: float
    compat_defect: float     # relative defect after projection


@dataclass
class ContactSet:
    rows: np.ndarray     # indices into grid rows
    slack: np.ndarray    # per-node contact slack (>= -eps on members)
    eps: float
    member: np.ndarray   # boolean over all grid rows


# ---------------------------------------------------------------------------
# grid construction
# ---------------------------------------------------------------------------

def build_masked_grid(region, cone: ConvexCone, w, g, ncells: int,
                      pad: float = 0.0) -> MaskedGrid:
    """Cut-cell grid for Omega = region ∩ cone with flux data g on the boundary.

    Edge crossings of the level set are root-refined and shared between the
    face-flux and cell-mass geometry; boundary chords become short projected
    polylines so masses and Neumann fluxes see the curved boundary at second
    order.
    """
    if region.n != 2:
        return _build_masked_grid_3d(region, cone, w, g, ncells)
    lo, hi = region.bounding_box()
    lo = lo - pad
    hi = hi + pad
    lo, hi, mixed = _clamp_box_to_cone(lo, hi, cone)
    h = float(np.max(hi - lo)) / ncells
    nx = max(int(np.ceil((hi[0] - lo[0]) / h - 1e-12)), 1)
    ny = max(int(np.ceil((hi[1] - lo[1]) / h - 1e-12)), 1)

    xc = lo[0] + h * np.arange(nx + 1)
    yc = lo[1] + h * np.arange(ny + 1)
    phi = region.level(np.stack(np.meshgrid(xc, yc, indexing="ij"), axis=-1))
    inside = phi <= 0.0
    count = (inside[:-1, :-1].astype(int) + inside[1:, :-1] +
             inside[1:, 1:] + inside[:-1, 1:])
    cx = lo[0] + h * (np.arange(nx) + 0.5)
    cy = lo[1] + h * (np.arange(ny) + 0.5)
    centers_grid = np.stack(np.meshgrid(cx, cy, indexing="ij"), axis=-1)
    phic = region.level(centers_grid)
    active = (count > 0) | (phic <= 0.0)
    full = count == 4

    index = -np.ones((nx, ny), dtype=int)
    rows = np.flatnonzero(active.ravel())
    index.ravel()[rows] = np.arange(rows.size)
    m = rows.size
    centers = centers_grid.reshape(-1, 2)[rows]
    center_inside = (phic.ravel()[rows] <= 0.0)

    # root-refined crossing parameters on vertical and horizontal lattice edges
    tv = _edge_crossings(region, phi, xc, yc, h, vertical=True)
    th = _edge_crossings(region, phi, xc, yc, h, vertical=False)

    masses = np.zeros(m)
    fullmask = full.ravel()[rows]
    masses[fullmask] = w(centers[fullmask]) * h * h

    boundary_flux = np.zeros(m)
    segments = []
    proj = _make_projector(region, h)

    cut_idx = np.argwhere(active & ~full)
    for (i, j) in cut_idx:
        row = index[i, j]
        poly, polylines = _cut_cell_geometry(region, i, j, xc, yc, phi, tv, th, proj)
        mass = _polygon_weight_integral(poly, w)
        for pl in polylines:
            for a, b in zip(pl[:-1], pl[1:]):
                chord = float(np.linalg.norm(b - a))
                if chord <= 1e-14 * h:
                    continue
                midp = 0.5 * (a + b)
                mid_arc = proj(midp)[0]
                sag = float(np.linalg.norm(mid_arc - midp))
                length = chord + 8.0 * sag**2 / (3.0 * chord)  # parabolic arc length
                nu = _level_normal(region, mid_arc, h)
                boundary_flux[row] += float(w(mid_arc)) * float(g(nu)) * length
                segments.append((row, mid_arc, nu, length))
                # parabolic segment between chord and curve, signed by convexity
                bulge = 2.0 * chord * sag / 3.0
                outward = float((mid_arc - midp) @ nu)
                mass += np.sign(outward) * bulge * float(w(mid_arc))
        masses[row] = mass

    # box-wall faces: the domain may end on the box (cone walls or the region
    # itself); flux data evaluated with the outward box normal
    for side, nu in (("west", (-1.0, 0.0)), ("east", (1.0, 0.0)),
                     ("south", (0.0, -1.0)), ("north", (0.0, 1.0))):
        cells, mids, lens = _box_wall_faces(side, nx, ny, xc, yc, phi, tv, th, h)
        if cells.size == 0:
            continue
        rws = index[cells[:, 0], cells[:, 1]]
        ok = (rws >= 0) & (lens > 1e-14 * h)
        if not ok.any():
            continue
        nu_arr = np.array(nu)
        gval = float(g(nu_arr))
        vals = w(mids[ok]) * gval * lens[ok]
        np.add.at(boundary_flux, rws[ok], vals)
        for r, midp, ln in zip(rws[ok], mids[ok], lens[ok]):
            segments.append((int(r), midp, nu_arr, float(ln)))

    grid = MaskedGrid(n=2, lo=lo, h=h, shape=(nx, ny), index=index,
                      centers=centers, center_inside=center_inside,
                      masses=masses, boundary_flux=boundary_flux, mixed=mixed,
                      region=region, cone=cone, segments=segments)
    grid._phi_corners = phi
    grid._xc, grid._yc = xc, yc
    grid._tv, grid._th = tv, th
    return grid


def _edge_crossings(region, phi, xc, yc, h, vertical: bool):
    """Bisection-refined crossing parameter in [0,1] per lattice edge (nan if none)."""
    if vertical:
        pa, pb = phi[:, :-1], phi[:, 1:]
    else:
        pa, pb = phi[:-1, :], phi[1:, :]
    t = np.full(pa.shape, np.nan)
    change = (pa <= 0.0) != (pb <= 0.0)
    idx = np.argwhere(change)
    if idx.size == 0:
        return t
    if vertical:
        p0 = np.column_stack([xc[idx[:, 0]], yc[idx[:, 1]]])
        dvec = np.array([0.0, h])
    else:
        p0 = np.column_stack([xc[idx[:, 0]], yc[idx[:, 1]]])
        dvec = np.array([h, 0.0])
    a = np.zeros(idx.shape[0])
    b = np.ones(idx.shape[0])
    fa = pa[change]
    for _ in range(50):
        mid = 0.5 * (a + b)
        fm = region.level(p0 + mid[:, None] * dvec[None, :])
        same = (fa <= 0.0) == (fm <= 0.0)
        a = np.where(same, mid, a)
        fa = np.where(same, fm, fa)
        b = np.where(same, b, mid)
    t[change] = 0.5 * (a + b)
    return t


def _make_projector(region, h):
    delta = 1e-6 * h

    def project(pts):
        pts = np.atleast_2d(np.array(pts, dtype=float))
        for _ in range(3):
            lv = region.level(pts)
            gx = (region.level(pts + [delta, 0.0]) - region.level(pts - [delta, 0.0])) / (2 * delta)
            gy = (region.level(pts + [0.0, delta]) - region.level(pts - [0.0, delta])) / (2 * delta)
            gn2 = gx**2 + gy**2
            pts = pts - (lv / np.maximum(gn2, 1e-300))[:, None] * np.column_stack([gx, gy])
        return pts

    return project


def _level_normal(region, pt, h):
    delta = 1e-6 * h
    gx = float(region.level(np.array([[pt[0] + delta, pt[1]]]))
               - region.level(np.array([[pt[0] - delta, pt[1]]]))) / (2 * delta)
    gy = float(region.level(np.array([[pt[0], pt[1] + delta]]))
               - region.level(np.array([[pt[0], pt[1] - delta]]))) / (2 * delta)
    nrm = np.hypot(gx, gy)
    return np.array([gx, gy]) / max(nrm, 1e-300)


def _clamp_box_to_cone(lo, hi, cone):
    """Align the box with the cone's coordinate walls; detect the mixed case."""
    mixed = False
    if cone.is_full:
        return lo, hi, False
    if not cone.grid_aligned():
        # pure-Neumann domains well inside a general cone need no clamping
        return lo, hi, False
    eye = np.eye(lo.size)
    for a in cone.normals:
        k = int(np.argmax(np.abs(a)))
        if a[k] > 0 and lo[k] < 0.0:
            lo = lo.copy()
            lo[k] = 0.0
            mixed = True
        elif a[k] < 0 and hi[k] > 0.0:
            hi = hi.copy()
            hi[k] = 0.0
            mixed = True
    del eye
    return lo, hi, mixed


def _cut_cell_geometry(region, i, j, xc, yc, phi, tv, th, proj, subdiv: int = 4):
    """Clipped polygon (ccw) and boundary polylines of one cut cell.

    Walks the cell perimeter counterclockwise collecting inside corners and
    refined edge crossings; between a leave-crossing and the next
    enter-crossing the boundary is filled with a level-set-projected polyline.
    """
    h = xc[1] - xc[0]
    corners = [np.array([xc[i], yc[j]]), np.array([xc[i + 1], yc[j]]),
               np.array([xc[i + 1], yc[j + 1]]), np.array([xc[i], yc[j + 1]])]
    vals = [phi[i, j], phi[i + 1, j], phi[i + 1, j + 1], phi[i, j + 1]]
    edge_t = [th[i, j], tv[i + 1, j], th[i, j + 1], tv[i, j]]

    # crossing points in lattice coordinates (params run from the lattice
    # edge start: left corner for horizontal edges, bottom for vertical)
    def lattice_point(e, t):
        if e == 0:
            return np.array([xc[i] + t * h, yc[j]])
        if e == 1:
            return np.array([xc[i + 1], yc[j] + t * h])
        if e == 2:
            return np.array([xc[i] + t * h, yc[j + 1]])
        return np.array([xc[i], yc[j] + t * h])

    items = []  # (kind, point); kind: 0 corner, 1 leave, -1 enter
    for e in range(4):
        if vals[e] <= 0.0:
            items.append((0, corners[e]))
        t = edge_t[e]
        if np.isnan(t):
            continue
        pt = lattice_point(e, t)
        kind = 1 if vals[e] <= 0.0 else -1
        items.append((kind, pt))

    crossings = [k for k, (kind, _) in enumerate(items) if kind != 0]
    polylines = []
    if crossings:
        poly_points = []
        inserts = {}
        for pos_idx, k in enumerate(crossings):
            kind, p = items[k]
            if kind != 1:
                continue
            k_next = crossings[(pos_idx + 1) % len(crossings)]
            q = items[k_next][1]
            seg = np.linspace(0.0, 1.0, subdiv + 1)[1:-1]
            interior = p[None, :] + seg[:, None] * (q - p)[None, :]
            interior = proj(interior)
            # reject projections that drifted outside the cell
            okx = (interior[:, 0] >= xc[i] - 1e-9 * h) & (interior[:, 0] <= xc[i + 1] + 1e-9 * h)
            oky = (interior[:, 1] >= yc[j] - 1e-9 * h) & (interior[:, 1] <= yc[j + 1] + 1e-9 * h)
            interior = interior[okx & oky]
            polylines.append(np.vstack([p, interior, q]))
            inserts[k] = interior
        for k, (kind, p) in enumerate(items):
            poly_points.append(p)
            if k in inserts:
                poly_points.extend(inserts[k])
        return poly_points, polylines
    poly_points = [p for kind, p in items if kind == 0]
    return poly_points, polylines


def _polygon_weight_integral(poly, w):
    """Integral of w over a convex-ish polygon by centroid fan + midedge rule."""
    if len(poly) < 3:
        return 0.0
    pts = np.asarray(poly)
    c = pts.mean(axis=0)
    total = 0.0
    for k in range(len(pts)):
        a, b = pts[k], pts[(k + 1) % len(pts)]
        area = 0.5 * abs((a[0] - c[0]) * (b[1] - c[1]) - (a[1] - c[1]) * (b[0] - c[0]))
        if area == 0.0:
            continue
        mids = np.array([(a + b) / 2.0, (b + c) / 2.0, (a + c) / 2.0])
        total += area * float(np.sum(w(mids))) / 3.0
    return total


def _box_wall_faces(side, nx, ny, xc, yc, phi, tv, th, h):
    """Wet face data on one wall of the bounding box."""
    if side in ("west", "east"):
        i = 0 if side == "west" else nx
        wet, frac_mid = _face_wet(phi[i, :-1], phi[i, 1:], tv[i, :])
        cells = np.column_stack([np.full(ny, 0 if side == "west" else nx - 1),
                                 np.arange(ny)])
        mids = np.column_stack([np.full(ny, xc[i]), yc[:-1] + frac_mid * h])
    else:
        j = 0 if side == "south" else ny
        wet, frac_mid = _face_wet(phi[:-1, j], phi[1:, j], th[:, j])
        cells = np.column_stack([np.arange(nx),
                                 np.full(nx, 0 if side == "south" else ny - 1)])
        mids = np.column_stack([xc[:-1] + frac_mid * h, np.full(nx, yc[j])])
    return cells, mids, wet * h


def _face_wet(pa, pb, t):
    """Wet fraction and wet-midpoint fraction of a face from endpoint levels
    and the refined crossing parameter t (nan when no crossing)."""
    ina, inb = pa <= 0.0, pb <= 0.0
    both = ina & inb
    neither = ~ina & ~inb
    tt = np.where(np.isnan(t), 0.5, t)
    wet = np.where(both, 1.0, np.where(neither, 0.0, np.where(ina, tt, 1.0 - tt)))
    mid = np.where(both, 0.5, np.where(ina, 0.5 * tt, 0.5 * (1.0 + tt)))
    return wet, mid


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def solve_neumann(region, w, g, cone: ConvexCone, ncells: int = 128,
                  q: QuadratureSpec = QuadratureSpec(),
                  compat_tol: float = 1e-8) -> NeumannSolution:
    """Solve div(w grad u) = b w in Omega = region ∩ cone, w du/dnu = w g(nu).

    b comes from the compatibility identity b = P_{w,g}(Omega; cone)/w(Omega)
    evaluated by quadrature; the right-hand side is then projected onto the
    range of the singular discrete operator and the mean of u pinned to zero.
    """
    per = weighted_perimeter(region, w, g, cone, q)
    vol = weighted_volume(region, w, cone, q)
    if vol.value <= 0.0:
        raise InvalidParameters("domain has nonpositive weighted volume")
    b = per.value / vol.value

    grid = build_masked_grid(region, cone, w, g, ncells)
    K = grid._K3 if grid.n == 3 else _stiffness(grid, w)
    F = grid.boundary_flux - b * grid.masses
    total_scale = float(np.sum(np.abs(grid.boundary_flux))) + abs(b) * float(np.sum(grid.masses))
    defect_before = abs(float(F.sum())) / max(total_scale, 1e-300)
    F = F - F.mean()
    defect_after = abs(float(F.sum())) / max(total_scale, 1e-300)
    if defect_after > compat_tol:
        raise IncompatibleData(
            f"compatibility defect {defect_after:.3e} exceeds {compat_tol:g} after projection")

    m = grid.size
    ones = np.ones((m, 1))
    A = sp.bmat([[K, sp.csr_matrix(ones)], [sp.csr_matrix(ones.T), None]], format="csc")
    try:
        sol = spla.spsolve(A, np.concatenate([F, [0.0]]))
    except RuntimeError as exc:
        raise NonConvergence(f"sparse solve failed: {exc}") from exc
    u = sol[:m]
    if not np.all(np.isfinite(u)):
        raise NonConvergence("linear solve returned non-finite values")
    residual = float(np.linalg.norm(K @ u - F) / max(np.linalg.norm(F), 1e-300))
    u = u - u[grid.center_inside].mean()

    b_disc = float(np.sum(grid.boundary_flux) / np.sum(grid.masses))
    field = _differentiate(grid, u) if grid.n == 2 else _differentiate_3d(grid, u)
    return NeumannSolution(grid=grid, field=field, b=b, b_discrete=b_disc,
                           residual=residual, compat_defect=defect_after)


def _stiffness(grid: MaskedGrid, w) -> sp.csr_matrix:
    nx, ny = grid.shape
    h = grid.h
    phi = grid._phi_corners
    xc, yc = grid._xc, grid._yc
    rows, cols, vals = [], [], []

    def add_faces(ra, rb, coef):
        ok = (ra >= 0) & (rb >= 0) & (coef > 0.0)
        ra, rb, coef = ra[ok], rb[ok], coef[ok]
        rows.extend([ra, rb, ra, rb])
        cols.extend([ra, rb, rb, ra])
        vals.extend([coef, coef, -coef, -coef])

    tv, th = grid._tv, grid._th

    # vertical interior faces between (i, j) and (i+1, j)
    wet, fmid = _face_wet(phi[1:-1, :-1], phi[1:-1, 1:], tv[1:-1, :])
    II, JJ = np.meshgrid(np.arange(nx - 1), np.arange(ny), indexing="ij")
    mids = np.stack([np.broadcast_to(xc[1:-1][:, None], II.shape),
                     yc[:-1][None, :] + fmid * h], axis=-1)
    coef = np.where(wet > 0, w(mids.reshape(-1, 2)).reshape(II.shape), 0.0) * wet * h / h
    add_faces(grid.index[II, JJ].ravel(), grid.index[II + 1, JJ].ravel(), coef.ravel())

    # horizontal interior faces between (i, j) and (i, j+1)
    wet, fmid = _face_wet(phi[:-1, 1:-1], phi[1:, 1:-1], th[:, 1:-1])
    II, JJ = np.meshgrid(np.arange(nx), np.arange(ny - 1), indexing="ij")
    mids = np.stack([xc[:-1][:, None] + fmid * h,
                     np.broadcast_to(yc[1:-1][None, :], II.shape)], axis=-1)
    coef = np.where(wet > 0, w(mids.reshape(-1, 2)).reshape(II.shape), 0.0) * wet * h / h
    add_faces(grid.index[II, JJ].ravel(), grid.index[II, JJ + 1].ravel(), coef.ravel())

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return sp.csr_matrix((vals, (rows, cols)), shape=(grid.size, grid.size))


def _differentiate(grid: MaskedGrid, u_active: np.ndarray) -> ScalarField:
    nx, ny = grid.shape
    h = grid.h
    ug = np.full((nx + 2, ny + 2), np.nan)
    act = grid.index >= 0
    ug[1:-1, 1:-1][act] = u_active[grid.index[act]]

    uc = ug[1:-1, 1:-1]
    ue, uw = ug[2:, 1:-1], ug[:-2, 1:-1]
    un, us = ug[1:-1, 2:], ug[1:-1, :-2]
    une, unw = ug[2:, 2:], ug[:-2, 2:]
    use_, usw = ug[2:, :-2], ug[:-2, :-2]

    gx = np.where(~np.isnan(ue) & ~np.isnan(uw), (ue - uw) / (2 * h),
                  np.where(~np.isnan(ue), (ue - uc) / h,
                           np.where(~np.isnan(uw), (uc - uw) / h, np.nan)))
    gy = np.where(~np.isnan(un) & ~np.isnan(us), (un - us) / (2 * h),
                  np.where(~np.isnan(un), (un - uc) / h,
                           np.where(~np.isnan(us), (uc - us) / h, np.nan)))
    grad_ok = ~np.isnan(ue) & ~np.isnan(uw) & ~np.isnan(un) & ~np.isnan(us)

    hxx = (ue - 2 * uc + uw) / h**2
    hyy = (un - 2 * uc + us) / h**2
    hxy = (une - use_ - unw + usw) / (4 * h**2)
    hess_ok = grad_ok & ~np.isnan(une) & ~np.isnan(unw) & ~np.isnan(use_) & ~np.isnan(usw)

    rowsel = act
    grad = np.stack([gx[rowsel], gy[rowsel]], axis=-1)
    hess = np.stack([np.stack([hxx[rowsel], hxy[rowsel]], axis=-1),
                     np.stack([hxy[rowsel], hyy[rowsel]], axis=-1)], axis=-2)
    order = grid.index[rowsel]
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    return ScalarField(u=u_active, grad=grad[inv], grad_ok=grad_ok[rowsel][inv],
                       hess=np.nan_to_num(hess[inv], nan=0.0),
                       hess_ok=hess_ok[rowsel][inv])


def _differentiate_3d(grid: MaskedGrid, u_active: np.ndarray) -> ScalarField:
    dims = grid.shape
    h = grid.h
    ug = np.full(tuple(d + 2 for d in dims), np.nan)
    act = grid.index >= 0
    ug[1:-1, 1:-1, 1:-1][act] = u_active[grid.index[act]]
    core = ug[1:-1, 1:-1, 1:-1]

    grad = np.full((grid.size, 3), np.nan)
    grad_ok = np.ones(grid.size, dtype=bool)
    hess = np.zeros((grid.size, 3, 3))
    hess_ok = np.ones(grid.size, dtype=bool)
    order = grid.index[act]
    for k in range(3):
        up = np.roll(ug, -1, axis=k)[1:-1, 1:-1, 1:-1]
        dn = np.roll(ug, 1, axis=k)[1:-1, 1:-1, 1:-1]
        cen = ~np.isnan(up) & ~np.isnan(dn)
        gk = np.where(cen, (up - dn) / (2 * h),
                      np.where(~np.isnan(up), (up - core) / h, (core - dn) / h))
        grad[order, k] = gk[act]
        grad_ok[order] &= cen[act]
        hess[order, k, k] = np.nan_to_num(((up - 2 * core + dn) / h**2)[act], nan=0.0)
        hess_ok[order] &= cen[act]
    for k in range(3):
        for l in range(k + 1, 3):
            pp = np.roll(np.roll(ug, -1, axis=k), -1, axis=l)[1:-1, 1:-1, 1:-1]
            pm = np.roll(np.roll(ug, -1, axis=k), 1, axis=l)[1:-1, 1:-1, 1:-1]
            mp = np.roll(np.roll(ug, 1, axis=k), -1, axis=l)[1:-1, 1:-1, 1:-1]
            mm = np.roll(np.roll(ug, 1, axis=k), 1, axis=l)[1:-1, 1:-1, 1:-1]
            good = ~(np.isnan(pp) | np.isnan(pm) | np.isnan(mp) | np.isnan(mm))
            val = np.where(good, (pp - pm - mp + mm) / (4 * h**2), 0.0)
            hess[order, k, l] = val[act]
            hess[order, l, k] = val[act]
            hess_ok[order] &= good[act]
    grad = np.nan_to_num(grad, nan=0.0)
    return ScalarField(u=u_active, grad=grad, grad_ok=grad_ok,
                       hess=hess, hess_ok=hess_ok)


# ---------------------------------------------------------------------------
# contact set, inclusion, chain
# ---------------------------------------------------------------------------

def contact_set(sol: NeumannSolution, eps: float | None = None) -> ContactSet:
    """Lower contact set: nodes whose tangent plane stays below u on Omega.

    Exhaustive over node pairs via the concave-conjugate trick
    min_y [u(y) - p.y] computed for every candidate slope p = grad u(x).
    """
    grid, field = sol.grid, sol.field
    cand = grid.center_inside & field.grad_ok
    ys = grid.centers[grid.center_inside]
    uy = field.u[grid.center_inside]
    rows = np.flatnonzero(cand)
    if eps is None:
        hmax = float(np.max(np.abs(field.hess[field.hess_ok]))) if field.hess_ok.any() else 1.0
        eps = 10.0 * grid.h**2 * hmax
    slack = np.empty(rows.size)
    chunk = max(1, int(2e7 // max(ys.shape[0], 1)))
    for s in range(0, rows.size, chunk):
        sel = rows[s:s + chunk]
        p = field.grad[sel]
        scores = uy[None, :] - p @ ys.T       # (chunk, Ny)
        mins = scores.min(axis=1)
        slack[s:s + chunk] = mins - (field.u[sel] - np.einsum("ij,ij->i", p, grid.centers[sel]))
    member = np.zeros(grid.size, dtype=bool)
    member[rows] = slack >= -eps
    return ContactSet(rows=rows[slack >= -eps], slack=slack, eps=eps, member=member)


def inclusion_check(sol: NeumannSolution, contact: ContactSet, targets,
                    miss_coeff: float = 2.0) -> dict:
    """For each p in the target slopes, verify the Legendre minimizer lies in
    the contact set with |grad u - p| <= miss_coeff * h."""
    grid, field = sol.grid, sol.field
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    ys = grid.centers[grid.center_inside]
    uy = field.u[grid.center_inside]
    rowmap = np.flatnonzero(grid.center_inside)
    covered = 0
    misses = np.zeros(targets.shape[0])
    claimed = np.zeros(targets.shape[0], dtype=bool)
    for k, p in enumerate(targets):
        j = int(np.argmin(uy - ys @ p))
        row = rowmap[j]
        in_gamma = bool(contact.member[row]) and bool(field.grad_ok[row])
        miss = float(np.linalg.norm(field.grad[row] - p)) if field.grad_ok[row] else np.inf
        misses[k] = miss
        ok = in_gamma and miss <= miss_coeff * grid.h
        claimed[k] = in_gamma
        covered += ok
    return {"count": targets.shape[0], "covered": covered,
            "coverage": covered / targets.shape[0],
            "worst_miss": float(misses.max(initial=0.0)),
            "claimed": claimed, "misses": misses}


def interior_slope_targets(region, cone: ConvexCone, h: float,
                           margin_cells: float = 2.0, spacing: float | None = None):
    """Deterministic lattice of slopes strictly inside W0 = region ∩ cone."""
    lo, hi = region.bounding_box()
    spacing = spacing or max(4.0 * h, float(np.max(hi - lo)) / 24.0)
    axes = [np.arange(lo[k] + spacing / 2.0, hi[k], spacing) for k in range(region.n)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, region.n)
    margin = margin_cells * h
    keep = region.level(pts) <= -margin
    if not cone.is_full:
        keep &= cone.boundary_distance(pts) >= margin
    return pts[keep]


def amgm_chain_check(sol: NeumannSolution, contact: ContactSet, w, D: float,
                     eps: float | None = None) -> dict:
    """The three chain links at contact nodes with grad u in the cone:

    (a) det D2u >= -eps,
    (b) det D2u <= (tr D2u / n)^n + eps (plain AM-GM),
    (c) w(grad u)/w(x) det D2u <= (b/D)^D + eps (weighted AM-GM + tangency).
    """
    grid, field = sol.grid, sol.field
    n = grid.n
    if eps is None:
        eps = CHAIN_SLACK_COEFF * grid.h
    rows = contact.rows[field.hess_ok[contact.rows]]
    grads = field.grad[rows]
    in_cone = grid.cone.contains(grads) if not grid.cone.is_full \
        else np.ones(rows.size, dtype=bool)
    rows = rows[in_cone]
    hess = field.hess[rows]
    det = np.linalg.det(hess)
    trace = np.trace(hess, axis1=-2, axis2=-1)
    ratio = w(field.grad[rows]) / w(grid.centers[rows])
    bound = (sol.b_discrete / D) ** D

    viol_a = np.maximum(-det - eps, 0.0)
    viol_b = np.maximum(det - (trace / n) ** n - eps, 0.0)
    viol_c = np.maximum(ratio * det - bound - eps, 0.0)
    return {
        "nodes_checked": int(rows.size),
        "eps": eps,
        "max_violation_a": float(viol_a.max(initial=0.0)),
        "max_violation_b": float(viol_b.max(initial=0.0)),
        "max_violation_c": float(viol_c.max(initial=0.0)),
        "violations": int(np.sum((viol_a > 0) | (viol_b > 0) | (viol_c > 0))),
        "bound": bound,
        "rows": rows,
    }


def contact_region_weight(sol: NeumannSolution, contact: ContactSet) -> float:
    """Discrete w-measure of the contact region (sum of member cell masses)."""
    return float(np.sum(sol.grid.masses[contact.member]))


def linf_error(sol: NeumannSolution, exact_fn) -> float:
    """Max-norm distance between u and an exact profile, both mean-centered."""
    grid, field = sol.grid, sol.field
    sel = grid.center_inside
    ue = exact_fn(grid.centers[sel])
    ue = ue - ue.mean()
    return float(np.max(np.abs(field.u[sel] - field.u[sel].mean() - ue)))


# ---------------------------------------------------------------------------
# 3-D variant (subsampled cut geometry; used for well-contained domains)
# ---------------------------------------------------------------------------

def _build_masked_grid_3d(region, cone, w, g, ncells):
    if not (cone.is_full or cone.grid_aligned()):
        raise InvalidParameters("3-D solver needs a full or axis-aligned cone")
    lo, hi = region.bounding_box()
    lo, hi, mixed = _clamp_box_to_cone(np.asarray(lo, float), np.asarray(hi, float), cone)
    h = float(np.max(hi - lo)) / ncells
    dims = [max(int(np.ceil((hi[k] - lo[k]) / h - 1e-12)), 1) for k in range(3)]
    axes_c = [lo[k] + h * np.arange(dims[k] + 1) for k in range(3)]
    grids = np.meshgrid(*axes_c, indexing="ij")
    phi = region.level(np.stack(grids, axis=-1))
    inside = phi <= 0.0
    count = np.zeros(dims, dtype=int)
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                count += inside[dx:dims[0] + dx, dy:dims[1] + dy, dz:dims[2] + dz]
    ctr_axes = [lo[k] + h * (np.arange(dims[k]) + 0.5) for k in range(3)]
    centers_grid = np.stack(np.meshgrid(*ctr_axes, indexing="ij"), axis=-1)
    phic = region.level(centers_grid)
    active = (count > 0) | (phic <= 0.0)
    full = count == 8

    index = -np.ones(dims, dtype=int)
    flat = np.flatnonzero(active.ravel())
    index.ravel()[flat] = np.arange(flat.size)
    centers = centers_grid.reshape(-1, 3)[flat]
    center_inside = phic.ravel()[flat] <= 0.0

    masses = np.zeros(flat.size)
    fullmask = full.ravel()[flat]
    masses[fullmask] = w(centers[fullmask]) * h**3
    cut_rows = np.flatnonzero(~fullmask)
    if cut_rows.size:
        sub = (np.arange(4) + 0.5) / 4.0 - 0.5
        offs = np.stack(np.meshgrid(sub, sub, sub, indexing="ij"), axis=-1).reshape(-1, 3) * h
        pts = centers[cut_rows][:, None, :] + offs[None, :, :]
        ins = (region.level(pts.reshape(-1, 3)).reshape(len(cut_rows), -1) <= 0.0)
        wv = w(pts.reshape(-1, 3)).reshape(len(cut_rows), -1)
        masses[cut_rows] = (wv * ins).mean(axis=1) * h**3

    # fluxes: aperture-divergence boundary vector per cut cell
    boundary_flux = np.zeros(flat.size)
    segments = []
    apertures = []
    for axis in range(3):
        sl = [slice(None)] * 3
        fdims = dims.copy()
        fdims[axis] += 1
        ap = np.zeros(fdims)
        # face apertures by 4x4 subsampling of the face level values
        face_axes = [axes_c[k] if k == axis else ctr_axes[k] for k in range(3)]
        sub = (np.arange(4) + 0.5) / 4.0 - 0.5
        offsets = []
        for k in range(3):
            if k == axis:
                continue
            offsets.append(k)
        FA = np.stack(np.meshgrid(*face_axes, indexing="ij"), axis=-1)
        base = FA.reshape(-1, 3)
        accum = np.zeros(base.shape[0])
        for s1 in sub:
            for s2 in sub:
                p = base.copy()
                p[:, offsets[0]] += s1 * h
                p[:, offsets[1]] += s2 * h
                accum += (region.level(p) <= 0.0)
        ap.ravel()[:] = accum / 16.0
        apertures.append(ap)

    rowsK, colsK, valsK = [], [], []
    for axis in range(3):
        ap = apertures[axis]
        sl_lo = [slice(None)] * 3
        sl_hi = [slice(None)] * 3
        sl_lo[axis] = slice(0, dims[axis] - 0)  # faces internal: 1..dims-1
        inner = [slice(None)] * 3
        inner[axis] = slice(1, dims[axis])
        ap_in = ap[tuple(inner)]
        idx_a = [slice(None)] * 3
        idx_b = [slice(None)] * 3
        idx_a[axis] = slice(0, dims[axis] - 1)
        idx_b[axis] = slice(1, dims[axis])
        ra = index[tuple(idx_a)].ravel()
        rb = index[tuple(idx_b)].ravel()
        face_axes = [axes_c[k] if k == axis else ctr_axes[k] for k in range(3)]
        FA = np.stack(np.meshgrid(*face_axes, indexing="ij"), axis=-1)
        inner_mid = [slice(None)] * 3
        inner_mid[axis] = slice(1, dims[axis])
        mids = FA[tuple(inner_mid)].reshape(-1, 3)
        coef = w(mids) * ap_in.ravel() * h**2 / h
        ok = (ra >= 0) & (rb >= 0) & (coef > 0)
        rowsK.extend([ra[ok], rb[ok], ra[ok], rb[ok]])
        colsK.extend([ra[ok], rb[ok], rb[ok], ra[ok]])
        valsK.extend([coef[ok], coef[ok], -coef[ok], -coef[ok]])

    K = sp.csr_matrix((np.concatenate(valsK),
                       (np.concatenate(rowsK), np.concatenate(colsK))),
                      shape=(flat.size, flat.size))

    # boundary vector area per cell: -(sum of wet face area * outward normal)
    avec = np.zeros((flat.size, 3))
    for axis in range(3):
        ap = apertures[axis]
        lo_face = [slice(None)] * 3
        lo_face[axis] = slice(0, dims[axis])
        hi_face = [slice(None)] * 3
        hi_face[axis] = slice(1, dims[axis] + 1)
        diff = (ap[tuple(lo_face)] - ap[tuple(hi_face)]) * h**2
        avec[:, axis] = diff.ravel()[np.flatnonzero(active.ravel())] * (-1.0)
    anorm = np.linalg.norm(avec, axis=1)
    for r in np.flatnonzero(anorm > 1e-14 * h**2):
        nu = avec[r] / anorm[r]
        lv = float(region.level(centers[r][None, :]))
        gn = np.zeros(3)
        d = 1e-6 * h
        for k in range(3):
            e = np.zeros(3)
            e[k] = d
            gn[k] = float(region.level((centers[r] + e)[None, :])
                          - region.level((centers[r] - e)[None, :])) / (2 * d)
        gnn = np.linalg.norm(gn)
        xb = centers[r] - lv * gn / max(gnn**2, 1e-300)
        flux = float(w(xb)) * float(g(nu)) * anorm[r]
        boundary_flux[r] += flux
        segments.append((int(r), xb, nu, float(anorm[r])))

    grid = MaskedGrid(n=3, lo=lo, h=h, shape=tuple(dims), index=index,
                      centers=centers, center_inside=center_inside,
                      masses=masses, boundary_flux=boundary_flux, mixed=mixed,
                      region=region, cone=cone, segments=segments)
    grid._K3 = K
    return grid
