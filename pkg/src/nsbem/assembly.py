"""Collocation assembly of the non-singular boundary integral equation.

Every boundary node contributes one row of
    sum_j cphi[i,j] phi_j + sum_j cq[i,j] q_j = 0
obtained by integrating the bracketed differences [phi - psi] against dG/dn
and [q - dpsi/dn] against G with standard Gauss quadrature (the integrands
are finite everywhere, including the self element). The unknown q0 appears
inside both brackets; its two contributions are gathered into the single q0
column. The solid angle never appears: the phi0 term is integrated with the
same quadrature as everything else.

Boundary conditions turn the (cphi, cq) pair into a square system with one
unknown per node (q at Dirichlet nodes, phi at Neumann nodes). 2D corner
double nodes contribute one integral row (both one-sided q0 unknowns) plus
one compatibility row.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _core3d
from .errors import AssemblyError, FieldError
from .fields import corner_linear_pair, corner_log_pair, corner_pair_linear, \
    corner_pair_log, place_corner_exterior_points
from .geometry import Mesh, corner_pairs
from .kernels import ring_kernels
from .quadrature import MeshQuadrature, gauss_segment, gauss_triangle, \
    mesh_quadrature, subdivide_segment, subdivide_triangle

DIRICHLET, NEUMANN = 0, 1
NEAR_FACTOR = 1.5          # elements within this many sizes of x0 use the refined rule
REFINE_PANELS = 4

_FD4 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0


# ---------------------------------------------------------------------------
# Boundary conditions

@dataclass
class BoundaryCondition:
    """Per-node condition kind (DIRICHLET | NEUMANN) and given value."""

    kind: np.ndarray
    value: np.ndarray

    def validate(self, mesh: Mesh) -> None:
        if self.kind.shape != (mesh.n_nodes,) or self.value.shape != (mesh.n_nodes,):
            raise AssemblyError("boundary condition arrays do not match the mesh")
        if not np.all((self.kind == DIRICHLET) | (self.kind == NEUMANN)):
            raise AssemblyError("every node needs exactly one condition kind")


def _values(mesh: Mesh, values) -> np.ndarray:
    if callable(values):
        return np.asarray(values(mesh.coords), dtype=float).reshape(mesh.n_nodes)
    return np.broadcast_to(np.asarray(values, dtype=float), (mesh.n_nodes,)).copy()


def dirichlet(mesh: Mesh, values) -> BoundaryCondition:
    return BoundaryCondition(np.full(mesh.n_nodes, DIRICHLET, dtype=np.uint8),
                             _values(mesh, values))


def neumann(mesh: Mesh, values) -> BoundaryCondition:
    return BoundaryCondition(np.full(mesh.n_nodes, NEUMANN, dtype=np.uint8),
                             _values(mesh, values))


def mixed(mesh: Mesh, per_part: dict) -> BoundaryCondition:
    """per_part maps part name -> ("dirichlet"|"neumann", values)."""
    kind = np.full(mesh.n_nodes, 255, dtype=np.uint8)
    value = np.zeros(mesh.n_nodes)
    for name, (kname, values) in per_part.items():
        sel = mesh.part_nodes(name)
        kind[sel] = DIRICHLET if kname.startswith("d") else NEUMANN
        value[sel] = _values(mesh, values)[sel]
    if np.any(kind == 255):
        missing = int(np.flatnonzero(kind == 255)[0])
        raise AssemblyError(f"node {missing} has no boundary condition")
    return BoundaryCondition(kind, value)


# ---------------------------------------------------------------------------
# Field policy: which f(x) each collocation node uses

@dataclass(frozen=True)
class FieldEntry:
    kind: str                       # "linear" | "inverse-point"
    xd: Optional[tuple] = None      # fixed exterior point
    offset: Optional[tuple] = None  # (dx, dy, zd): xd = (x0+dx, y0+dy, zd)


@dataclass
class FieldPolicy:
    """Per-part choice of desingularizing field; default is the linear f."""

    entries: dict
    default: FieldEntry = FieldEntry("linear")

    @classmethod
    def all_linear(cls) -> "FieldPolicy":
        return cls(entries={})

    def node_arrays(self, mesh: Mesh):
        """(use_inverse (N,), xd (N, dim), f_infinity (N,)) for the assembly core."""
        n = mesh.n_nodes
        use_inverse = np.zeros(n, dtype=bool)
        xd = np.zeros_like(mesh.coords)
        for k, name in enumerate(mesh.part_names):
            entry = self.entries.get(name, self.default)
            sel = mesh.node_part == k
            if entry.kind == "linear":
                continue
            if entry.kind != "inverse-point":
                raise FieldError(f"unknown field kind {entry.kind!r} for part {name!r}")
            use_inverse[sel] = True
            if entry.xd is not None:
                xd[sel] = np.asarray(entry.xd, dtype=float)
            elif entry.offset is not None:
                dx, dy, zd = entry.offset
                xd[sel, 0] = mesh.coords[sel, 0] + dx
                xd[sel, 1] = mesh.coords[sel, 1] + dy
                xd[sel, 2] = zd
            else:
                raise FieldError(f"inverse-point entry for part {name!r} needs xd or offset")
        d = np.einsum("ij,ij->i", mesh.node_normals, mesh.coords - xd)
        if np.any(use_inverse & (d == 0.0)):
            bad = int(np.flatnonzero(use_inverse & (d == 0.0))[0])
            raise FieldError(f"node {bad}: n0.(x0 - xD) = 0, move xD")
        rho0 = np.linalg.norm(mesh.coords - xd, axis=1)
        f_inf = np.full(n, np.nan)
        with np.errstate(divide="ignore", invalid="ignore"):
            f_inf[use_inverse] = (rho0[use_inverse] ** 2) / d[use_inverse]
        return use_inverse, xd, f_inf


# ---------------------------------------------------------------------------
# Dense system

@dataclass
class DenseSystem:
    """Square collocation system plus the per-node unknown map."""

    matrix: np.ndarray
    rhs: np.ndarray
    unknown_q: np.ndarray        # True: column j holds q_j, else phi_j
    mesh: Mesh
    bcs: BoundaryCondition
    f_infinity: np.ndarray       # psi limit at infinity per node (nan for linear f)
    row_is_bie: np.ndarray
    gauge: Optional[str] = None
    xd: Optional[np.ndarray] = None   # per-node exterior points of inverse-point fields

    @property
    def n(self) -> int:
        return self.rhs.shape[0]


def _finalize(mesh, bcs, cphi, cq, f_infinity, row_is_bie=None) -> DenseSystem:
    if not (np.all(np.isfinite(cphi)) and np.all(np.isfinite(cq))):
        bad = np.argwhere(~np.isfinite(cphi) | ~np.isfinite(cq))[0]
        raise AssemblyError(f"non-finite coefficient at row {bad[0]}, column {bad[1]}; "
                            "geometry is corrupt or a quadrature point hit a node")
    unknown_q = bcs.kind == DIRICHLET
    matrix = np.where(unknown_q[None, :], cq, cphi)
    known_phi = np.where(unknown_q, bcs.value, 0.0)
    known_q = np.where(unknown_q, 0.0, bcs.value)
    rhs = -(cphi @ known_phi + cq @ known_q)
    if row_is_bie is None:
        row_is_bie = np.ones(mesh.n_nodes, dtype=bool)
    return DenseSystem(matrix, rhs, unknown_q, mesh, bcs, f_infinity, row_is_bie)


def _element_sizes(mesh: Mesh) -> np.ndarray:
    if mesh.conn.shape[1] == 2:
        return mesh.measures.copy()
    edges = [np.linalg.norm(mesh.coords[mesh.conn[:, a]] - mesh.coords[mesh.conn[:, b]], axis=1)
             for a, b in ((0, 1), (1, 2), (2, 0))]
    return np.max(edges, axis=0)


def _has_boundary_edges(mesh: Mesh) -> bool:
    conn = mesh.conn
    if conn.shape[1] == 2:
        counts = np.bincount(conn.ravel(), minlength=mesh.n_nodes)
        return bool(np.any(counts < 2))
    edges = np.sort(np.vstack([conn[:, [0, 1]], conn[:, [1, 2]], conn[:, [2, 0]]]), axis=1)
    _, cnt = np.unique(edges, axis=0, return_counts=True)
    return bool(np.any(cnt == 1))


# ---------------------------------------------------------------------------
# 3D assembly

def assemble_3d(mesh: Mesh, bcs: BoundaryCondition, policy: FieldPolicy,
                allow_open: bool = False, engine: str = "numba") -> DenseSystem:
    """Collocation rows of the non-singular equation on a triangle mesh.

    Mesh normals must point out of the fluid domain. Open meshes are only
    accepted with allow_open=True, for the semi-infinite setup whose caller
    adds the far-field closure terms afterwards.
    """
    if mesh.regime != "3d":
        raise AssemblyError(f"assemble_3d needs a 3d mesh, got {mesh.regime}")
    bcs.validate(mesh)
    if not allow_open and _has_boundary_edges(mesh):
        raise AssemblyError("mesh is open; add the far-field closure "
                            "(allow_open=True) or close the surface")
    use_inverse, xd, f_inf = policy.node_arrays(mesh)
    base = mesh_quadrature(mesh, gauss_triangle())
    refined = mesh_quadrature(mesh, subdivide_triangle(gauss_triangle()))
    centroids = mesh.coords[mesh.conn].mean(axis=1)
    sizes = _element_sizes(mesh)
    n = mesh.n_nodes
    cphi = np.zeros((n, n))
    cq = np.zeros((n, n))
    if engine == "numba":
        _core3d.assemble_rows(
            mesh.coords, mesh.node_normals, use_inverse, xd,
            base.points, base.weights, base.normals, base.conn, base.shape, base.offsets,
            refined.points, refined.weights, refined.normals, refined.conn,
            refined.shape, refined.offsets,
            centroids, sizes, NEAR_FACTOR, cphi, cq)
    elif engine == "numpy":
        for i in range(n):
            fld = _NodeField3D(mesh.coords[i], mesh.node_normals[i],
                               xd[i] if use_inverse[i] else None)
            _accumulate_row(cphi[i], cq[i], i, mesh.coords[i], base, refined,
                            centroids, sizes, _weights_3d, [(i, fld)])
    else:
        raise AssemblyError(f"unknown engine {engine!r}")
    system = _finalize(mesh, bcs, cphi, cq, f_inf)
    system.xd = np.where(use_inverse[:, None], xd, np.nan)
    return system


class _NodeField3D:
    """Vectorized f and grad f.n of the linear / inverse-point kinds."""

    def __init__(self, x0, n0, xd):
        self.x0, self.n0, self.xd = x0, n0, xd
        if xd is not None:
            self.rho0 = float(np.linalg.norm(x0 - xd))
            self.d = float(n0 @ (x0 - xd))

    def __call__(self, pts, nrms):
        if self.xd is None:
            return (pts - self.x0) @ self.n0, nrms @ self.n0
        w = pts - self.xd
        s = np.linalg.norm(w, axis=1)
        f = (self.rho0 ** 2 / self.d) * (1.0 - self.rho0 / s)
        gdn = (self.rho0 ** 3 / self.d) * np.einsum("ij,ij->i", w, nrms) / s ** 3
        return f, gdn


def _weights_3d(pts, nrms, target):
    dx = pts - target
    r2 = np.einsum("ij,ij->i", dx, dx)
    r = np.sqrt(r2)
    return 1.0 / r, -np.einsum("ij,ij->i", dx, nrms) / (r2 * r)


def _weights_2d(pts, nrms, target):
    dx = pts - target
    r2 = np.einsum("ij,ij->i", dx, dx)
    return -0.5 * np.log(r2), -np.einsum("ij,ij->i", dx, nrms) / r2


def _weights_axisym(pts, nrms, target):
    return ring_kernels(pts[:, 0], pts[:, 1], nrms[:, 0], nrms[:, 1],
                        target[0], target[1])


def _near_mask(centroids, sizes, x0):
    d = np.linalg.norm(centroids - x0, axis=1)
    return d <= NEAR_FACTOR * sizes


def _gauss_subset(quad: MeshQuadrature, elems: np.ndarray):
    q = quad.offsets[1] - quad.offsets[0]
    idx = (elems[:, None] * q + np.arange(q)[None, :]).ravel()
    return idx


def _accumulate_row(cphi_row, cq_row, phi0_col, target, base, refined,
                    centroids, sizes, weights_fn, q0_fields):
    """Add one collocation row: far elements by the base rule, near by the refined.

    q0_fields lists (column, field) pairs; regular rows have one, corner rows
    two. field(pts, nrms) -> (f, grad f.n) arrays.
    """
    near = _near_mask(centroids, sizes, target)
    parts = []
    if not np.all(near):
        parts.append((base, _gauss_subset(base, np.flatnonzero(~near))))
    if np.any(near):
        parts.append((refined, _gauss_subset(refined, np.flatnonzero(near))))
    for quad, idx in parts:
        pts = quad.points[idx]
        nrms = quad.normals[idx]
        wts = quad.weights[idx]
        conn = quad.conn[idx]
        shape = quad.shape[idx]
        wg, wdg = weights_fn(pts, nrms, target)
        for k in range(conn.shape[1]):
            np.add.at(cphi_row, conn[:, k], wts * shape[:, k] * wdg)
            np.add.at(cq_row, conn[:, k], -wts * shape[:, k] * wg)
        cphi_row[phi0_col] -= np.sum(wts * wdg)
        for col, fld in q0_fields:
            f, gdn = fld(pts, nrms)
            cq_row[col] += np.sum(wts * (gdn * wg - f * wdg))


# ---------------------------------------------------------------------------
# Axisymmetric assembly

def assemble_axisym(mesh: Mesh, bcs: BoundaryCondition, zd_by_part: dict,
                    segment_order: int = 8) -> DenseSystem:
    """Collocation rows of the azimuthally reduced equation on a meridian mesh.

    zd_by_part places the exterior axis point of each part's field (outside
    the solution domain, e.g. the sphere centre). Axis nodes (r0 = 0)
    assemble through the same path as every other node.
    """
    if mesh.regime != "axisym":
        raise AssemblyError(f"assemble_axisym needs an axisym mesh, got {mesh.regime}")
    bcs.validate(mesh)
    if np.any(mesh.coords[:, 0] < 0.0):
        raise AssemblyError("meridian mesh has nodes with r < 0")
    zd = np.empty(mesh.n_nodes)
    for k, name in enumerate(mesh.part_names):
        if name not in zd_by_part:
            raise AssemblyError(f"zd_by_part is missing part {name!r}")
        zd[mesh.node_part == k] = float(zd_by_part[name])
    r0 = mesh.coords[:, 0]
    z0 = mesh.coords[:, 1]
    rho0 = np.hypot(r0, z0 - zd)
    s0 = r0 * mesh.node_normals[:, 0] + (z0 - zd) * mesh.node_normals[:, 1]
    if np.any(s0 == 0.0):
        bad = int(np.flatnonzero(s0 == 0.0)[0])
        raise AssemblyError(f"node {bad}: s0 = 0, move zD off the tangent plane")
    f_inf = rho0 ** 2 / s0
    rule = gauss_segment(segment_order)
    base = mesh_quadrature(mesh, rule)
    refined = mesh_quadrature(mesh, subdivide_segment(rule, REFINE_PANELS))
    centroids = mesh.coords[mesh.conn].mean(axis=1)
    sizes = _element_sizes(mesh)
    n = mesh.n_nodes
    cphi = np.zeros((n, n))
    cq = np.zeros((n, n))
    for i in range(n):
        fld = _NodeFieldAxisym(rho0[i], s0[i], zd[i])
        _accumulate_row(cphi[i], cq[i], i, mesh.coords[i], base, refined,
                        centroids, sizes, _weights_axisym, [(i, fld)])
    system = _finalize(mesh, bcs, cphi, cq, f_inf)
    system.xd = np.stack([np.zeros(n), zd], axis=1)
    return system


class _NodeFieldAxisym:
    """Meridian f and dpsi/dn (per unit q0) of the axisymmetric field."""

    def __init__(self, rho0, s0, zd):
        self.rho0, self.s0, self.zd = rho0, s0, zd

    def __call__(self, pts, nrms):
        rho = np.hypot(pts[:, 0], pts[:, 1] - self.zd)
        f = (rho - self.rho0) / rho * (self.rho0 ** 2 / self.s0)
        s = pts[:, 0] * nrms[:, 0] + (pts[:, 1] - self.zd) * nrms[:, 1]
        gdn = (self.rho0 / rho) ** 3 * (s / self.s0)
        return f, gdn


# ---------------------------------------------------------------------------
# 2D assembly with corner double nodes

def assemble_2d_corners(mesh: Mesh, bcs: BoundaryCondition,
                        corner_field_kind: str = "linear",
                        corner_closure: str = "compatibility-pair",
                        segment_order: int = 8) -> DenseSystem:
    """Collocation rows on a closed 2D boundary with double corner nodes.

    Regular nodes use the linear f. Each corner double node carries two
    one-sided q0 unknowns closed by the corner-gradient compatibility
        grad phi = qL nL + (dphi/dt)L tL = qR nR + (dphi/dt)R tR,
    with tangential derivatives taken from the Dirichlet data by one-sided
    fourth-order differences along each edge.

    corner_closure picks the bookkeeping:
      "compatibility-pair" (default): the compatibility condition is
        projected onto both normals, which determines the corner pair from
        the tangential data; no integral row is collocated at the corner.
      "bie-row": one integral row collocated at the corner with the
        two-sided corner field (linear or log pair per corner_field_kind)
        plus the single projection onto nR. This arrangement reproduces the
        right-angle benchmarks but loses accuracy at acute corners; the
        default closure is the one that reproduces the oblique benchmark
        errors.
    """
    if mesh.regime != "2d":
        raise AssemblyError(f"assemble_2d_corners needs a 2d mesh, got {mesh.regime}")
    if corner_closure not in ("compatibility-pair", "bie-row"):
        raise AssemblyError(f"unknown corner closure {corner_closure!r}")
    bcs.validate(mesh)
    pairs = corner_pairs(mesh)
    chain_end = {int(ch[-1]): ch for ch in mesh.chains}
    chain_start = {int(ch[0]): ch for ch in mesh.chains}
    rule = gauss_segment(segment_order)
    base = mesh_quadrature(mesh, rule)
    refined = mesh_quadrature(mesh, subdivide_segment(rule, REFINE_PANELS))
    centroids = mesh.coords[mesh.conn].mean(axis=1)
    sizes = _element_sizes(mesh)
    n = mesh.n_nodes
    cphi = np.zeros((n, n))
    cq = np.zeros((n, n))
    row_is_bie = np.ones(n, dtype=bool)
    corner_nodes = {l for l, _ in pairs} | {r for _, r in pairs}
    for i in range(n):
        if i in corner_nodes:
            continue
        fld = _NodeField2D(mesh.coords[i], mesh.node_normals[i])
        _accumulate_row(cphi[i], cq[i], i, mesh.coords[i], base, refined,
                        centroids, sizes, _weights_2d, [(i, fld)])
    closures = []
    for l, r in pairs:
        x0 = mesh.coords[l]
        nl, nr = mesh.node_normals[l], mesh.node_normals[r]
        if bcs.kind[l] != DIRICHLET or bcs.kind[r] != DIRICHLET:
            raise AssemblyError(f"corner at node {l} needs Dirichlet data on both edges")
        if abs(bcs.value[l] - bcs.value[r]) > 1e-12 * max(1.0, abs(bcs.value[l])):
            raise AssemblyError(f"corner at node {l}: copies carry different phi values")
        tl, tr, dphi_l, dphi_r = _corner_tangents(mesh, bcs, chain_end[l], chain_start[r])
        if corner_closure == "bie-row":
            if corner_field_kind == "linear":
                pair_field = corner_linear_pair(x0, nl, nr)
                _, _, gl, gr = corner_pair_linear(pair_field, x0)
                f_l = _ConstGradField(x0, gl)
                f_r = _ConstGradField(x0, gr)
            elif corner_field_kind == "log":
                scale = np.linalg.norm(mesh.coords[chain_end[l][0]] - x0)
                xdl, xdr = place_corner_exterior_points(x0, nl, nr, tl, tr, scale)
                corner_log_pair(x0, nl, nr, xdl, xdr)   # validates the conditions
                f_l = _LogField(x0, nl, xdl)
                f_r = _LogField(x0, nr, xdr)
            else:
                raise AssemblyError(f"unknown corner field kind {corner_field_kind!r}")
            _accumulate_row(cphi[l], cq[l], l, x0, base, refined, centroids, sizes,
                            _weights_2d, [(l, f_l), (r, f_r)])
        else:
            row_is_bie[l] = False
        closures.append((l, r, nl, nr, tl, tr, dphi_l, dphi_r))
        row_is_bie[r] = False
    system = _finalize(mesh, bcs, cphi, cq, np.full(n, np.nan), row_is_bie)
    for l, r, nl, nr, tl, tr, dphi_l, dphi_r in closures:
        # form L projected onto nR: qL (nL.nR) + dphiL (tL.nR) = qR
        system.matrix[r, :] = 0.0
        system.matrix[r, l] = float(nl @ nr)
        system.matrix[r, r] = -1.0
        system.rhs[r] = -dphi_l * float(tl @ nr)
        if corner_closure == "compatibility-pair":
            # form R projected onto nL: qR (nR.nL) + dphiR (tR.nL) = qL
            system.matrix[l, :] = 0.0
            system.matrix[l, r] = float(nr @ nl)
            system.matrix[l, l] = -1.0
            system.rhs[l] = -dphi_r * float(tr @ nl)
    return system


def _corner_tangents(mesh, bcs, chain_l, chain_r):
    """Away-from-corner unit tangents and both one-sided tangential derivatives."""
    if len(chain_l) < 5 or len(chain_r) < 5:
        raise AssemblyError("fourth-order tangential stencil needs >= 5 nodes per edge")
    ids_l = chain_l[-5:][::-1]
    ids_r = chain_r[:5]
    if np.any(bcs.kind[ids_l] != DIRICHLET) or np.any(bcs.kind[ids_r] != DIRICHLET):
        raise AssemblyError("corner stencil nodes must carry Dirichlet data")
    x0 = mesh.coords[ids_l[0]]
    h_l = np.linalg.norm(mesh.coords[ids_l[1]] - x0)
    h_r = np.linalg.norm(mesh.coords[ids_r[1]] - x0)
    tl = (mesh.coords[ids_l[1]] - x0) / h_l
    tr = (mesh.coords[ids_r[1]] - x0) / h_r
    dphi_l = float(_FD4 @ bcs.value[ids_l]) / h_l
    dphi_r = float(_FD4 @ bcs.value[ids_r]) / h_r
    return tl, tr, dphi_l, dphi_r


class _NodeField2D:
    def __init__(self, x0, n0):
        self.x0, self.n0 = x0, n0

    def __call__(self, pts, nrms):
        return (pts - self.x0) @ self.n0, nrms @ self.n0


class _ConstGradField:
    """Linear corner f with a fixed gradient vector."""

    def __init__(self, x0, grad):
        self.x0, self.grad = x0, grad

    def __call__(self, pts, nrms):
        return (pts - self.x0) @ self.grad, nrms @ self.grad


class _LogField:
    """One side of the logarithmic corner pair."""

    def __init__(self, x0, n_side, xd):
        self.xd = xd
        self.rho0 = float(np.linalg.norm(x0 - xd))
        self.d = float(n_side @ (x0 - xd))

    def __call__(self, pts, nrms):
        w = pts - self.xd
        s2 = np.einsum("ij,ij->i", w, w)
        f = (self.rho0 ** 2 / self.d) * 0.5 * np.log(s2 / self.rho0 ** 2)
        gdn = (self.rho0 ** 2 / self.d) * np.einsum("ij,ij->i", w, nrms) / s2
        return f, gdn


# ---------------------------------------------------------------------------
# Far-field closure and gauge

def _apply_diag_terms(system: DenseSystem, phi0_coef: np.ndarray, q0_coef: np.ndarray) -> None:
    """Add per-row phi0/q0 terms to the diagonal columns, respecting the BCs."""
    for i in np.flatnonzero(system.row_is_bie):
        if system.unknown_q[i]:
            system.rhs[i] -= phi0_coef[i] * system.bcs.value[i]
            system.matrix[i, i] += q0_coef[i]
        else:
            system.matrix[i, i] += phi0_coef[i]
            system.rhs[i] -= q0_coef[i] * system.bcs.value[i]


def add_far_field_closure(system: DenseSystem, solid_angle: float) -> DenseSystem:
    """Add the far-boundary terms solid_angle * (phi0 + q0 rho0^2/d) per row.

    solid_angle is 4*pi for an unbounded exterior domain (sphere at
    infinity) and 2*pi for the hemisphere closing a half space. Requires
    every collocation node to use the inverse-point field (psi must be
    bounded at infinity for the closure to hold).
    """
    rows = np.flatnonzero(system.row_is_bie)
    if np.any(~np.isfinite(system.f_infinity[rows])):
        raise AssemblyError("far-field closure needs the inverse-point field "
                            "on every collocation node")
    n = system.n
    _apply_diag_terms(system, np.full(n, solid_angle), solid_angle * system.f_infinity)
    return system


def add_semi_infinite_closure(system: DenseSystem, truncation_radius: Optional[float] = None,
                              include_annulus: bool = True,
                              n_radial: int = 24, n_theta: int = 48) -> DenseSystem:
    """Close a half-space domain truncated at a flat far surface.

    The hemisphere at infinity contributes 2*pi (phi0 + q0 rho0^2/d) per
    row. The unmeshed flat annulus between the truncation radius and
    infinity still carries the non-decaying psi terms (phi and q themselves
    are taken as decayed there); those integrals are evaluated numerically
    in inverted radial coordinates. For collocation points on the free
    surface they are negligible, but for submerged bodies they scale like
    the solid angle the annulus subtends and cannot be dropped.
    """
    add_far_field_closure(system, 2.0 * np.pi)
    if not include_annulus:
        return system
    if truncation_radius is None:
        raise AssemblyError("annulus closure needs the truncation radius")
    if system.xd is None or np.any(~np.isfinite(system.xd[system.row_is_bie])):
        raise AssemblyError("annulus closure needs per-node exterior points")
    # quadrature over r in [R_t, inf) via u = R_t/r, theta periodic-uniform
    from numpy.polynomial.legendre import leggauss
    xu, wu = leggauss(n_radial)
    u = 0.5 * (xu + 1.0)
    wu = 0.5 * wu
    th = 2.0 * np.pi * np.arange(n_theta) / n_theta
    rr = truncation_radius / u
    wts = (wu * truncation_radius ** 2 / u ** 3)[:, None] * (2.0 * np.pi / n_theta)
    px = (rr[:, None] * np.cos(th)[None, :]).ravel()
    py = (rr[:, None] * np.sin(th)[None, :]).ravel()
    wts = np.broadcast_to(wts, (n_radial, n_theta)).ravel()
    n = system.n
    phi0_coef = np.zeros(n)
    q0_coef = np.zeros(n)
    coords = system.mesh.coords
    for i in np.flatnonzero(system.row_is_bie):
        x0 = coords[i]
        dx, dy, dz = px - x0[0], py - x0[1], -x0[2]
        r2 = dx * dx + dy * dy + dz * dz
        d3 = r2 * np.sqrt(r2)
        wdg = -dz / d3                      # (x - x0).z_hat = -z0, n = +z_hat
        wg = 1.0 / np.sqrt(r2)
        xd = system.xd[i]
        vx, vy, vz = px - xd[0], py - xd[1], -xd[2]
        s2 = vx * vx + vy * vy + vz * vz
        s = np.sqrt(s2)
        rho0 = float(np.linalg.norm(x0 - xd))
        d = float(system.mesh.node_normals[i] @ (x0 - xd))
        f = (rho0 * rho0 / d) * (1.0 - rho0 / s)
        gdn = (rho0 ** 3 / d) * vz / (s2 * s)
        phi0_coef[i] = -np.sum(wts * wdg)
        q0_coef[i] = np.sum(wts * (gdn * wg - f * wdg))
    _apply_diag_terms(system, phi0_coef, q0_coef)
    return system


def pin_phi_gauge(system: DenseSystem, node: int = 0, value: float = 0.0) -> DenseSystem:
    """Fix the additive phi constant of a pure-Neumann interior problem."""
    if system.unknown_q[node]:
        raise AssemblyError(f"node {node} carries Dirichlet data; nothing to pin")
    system.matrix[node, :] = 0.0
    system.matrix[node, node] = 1.0
    system.rhs[node] = value
    system.row_is_bie[node] = False
    system.gauge = f"phi pinned to {value} at node {node}"
    return system


# ---------------------------------------------------------------------------
# Single-element reference integrator

def integrate_element(mesh: Mesh, elem: int, row_field, target, rule=None):
    """Row contributions of one element (reference path used by the tests).

    row_field is a (column, field) list as in _accumulate_row; target is the
    collocation point. Returns (cphi_row, cq_row) dense vectors holding only
    this element's contributions (the phi0 column is taken from the first
    row_field entry).
    """
    if rule is None:
        rule = gauss_segment(8) if mesh.conn.shape[1] == 2 else gauss_triangle()
    quad = mesh_quadrature(mesh, rule)
    idx = np.arange(quad.offsets[elem], quad.offsets[elem + 1])
    pts, nrms = quad.points[idx], quad.normals[idx]
    wts, conn, shape = quad.weights[idx], quad.conn[idx], quad.shape[idx]
    weights_fn = {"2d": _weights_2d, "axisym": _weights_axisym, "3d": _weights_3d}[mesh.regime]
    wg, wdg = weights_fn(pts, nrms, np.asarray(target, float))
    if not (np.all(np.isfinite(wg)) and np.all(np.isfinite(wdg))):
        raise AssemblyError(f"non-finite kernel on element {elem} "
                            f"(nodes {list(map(int, mesh.conn[elem]))})")
    cphi_row = np.zeros(mesh.n_nodes)
    cq_row = np.zeros(mesh.n_nodes)
    for k in range(conn.shape[1]):
        np.add.at(cphi_row, conn[:, k], wts * shape[:, k] * wdg)
        np.add.at(cq_row, conn[:, k], -wts * shape[:, k] * wg)
    cphi_row[row_field[0][0]] -= np.sum(wts * wdg)
    for col, fld in row_field:
        f, gdn = fld(pts, nrms)
        cq_row[col] += np.sum(wts * (gdn * wg - f * wdg))
    return cphi_row, cq_row
