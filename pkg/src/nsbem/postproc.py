"""Field evaluation off the boundary, surface velocity and pressure forces."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .assembly import _accumulate_row  # noqa: F401  (re-exported for tests)
from .assembly import _element_sizes, _gauss_subset, _near_mask, _weights_2d, \
    _weights_3d, _weights_axisym
from .errors import NearBoundaryError, NsbemError
from .geometry import Mesh
from .linsolve import Solution
from .quadrature import gauss_segment, gauss_triangle, mesh_quadrature, \
    subdivide_segment, subdivide_triangle

_SOLID_ANGLE = {"2d": 2.0 * np.pi, "axisym": 4.0 * np.pi, "3d": 4.0 * np.pi}
_WEIGHTS = {"2d": _weights_2d, "axisym": _weights_axisym, "3d": _weights_3d}


@dataclass(frozen=True)
class FieldProbe:
    """Evaluation point anchored to a boundary node: x_p = x0 - eps * n0."""

    point: np.ndarray
    anchor: int
    eps: float

    @classmethod
    def from_offset(cls, mesh: Mesh, anchor: int, eps: float) -> "FieldProbe":
        if eps <= 0.0:
            raise NsbemError("probe offset eps must be positive")
        point = mesh.coords[anchor] - eps * mesh.node_normals[anchor]
        return cls(point=point, anchor=int(anchor), eps=float(eps))


def _quadratures(mesh: Mesh):
    if mesh.conn.shape[1] == 2:
        rule = gauss_segment(8)
        return mesh_quadrature(mesh, rule), mesh_quadrature(mesh, subdivide_segment(rule, 4))
    rule = gauss_triangle()
    return mesh_quadrature(mesh, rule), mesh_quadrature(mesh, subdivide_triangle(rule))


def _nearest_node(mesh: Mesh, x) -> tuple:
    d = np.linalg.norm(mesh.coords - np.asarray(x, float), axis=1)
    i = int(np.argmin(d))
    return i, float(d[i])


def _local_size(mesh: Mesh, node: int) -> float:
    sizes = _element_sizes(mesh)
    return float(np.max(sizes[mesh.node_elements()[node]]))


def eval_interior(x_p, solution: Solution, mesh: Mesh) -> float:
    """Potential at an interior point by the conventional representation.

    Valid only away from the boundary (distance greater than the local
    element size); closer points must use eval_near_boundary, whose kernel
    differences stay benign as the boundary is approached.
    """
    x_p = np.asarray(x_p, float)
    node, dist = _nearest_node(mesh, x_p)
    if dist <= _local_size(mesh, node):
        raise NearBoundaryError(
            f"probe is {dist:.3g} from node {node} (local element size "
            f"{_local_size(mesh, node):.3g}); use eval_near_boundary")
    base, _ = _quadratures(mesh)
    wg, wdg = _WEIGHTS[mesh.regime](base.points, base.normals, x_p)
    phi_g = np.einsum("gk,gk->g", base.shape, solution.phi[base.conn])
    q_g = np.einsum("gk,gk->g", base.shape, solution.q[base.conn])
    return float(np.sum(base.weights * (q_g * wg - phi_g * wdg)) / _SOLID_ANGLE[mesh.regime])


def eval_near_boundary(probe: FieldProbe, solution: Solution, mesh: Mesh) -> float:
    """Potential near the boundary via the subtracted-kernel representation.

    phi(x_p) = phi0 + q0 f(x_p)
             - (1/c0) int [phi - phi0 - q0 f] [dG/dn(x, x_p) - dG/dn(x, x0)]
             + (1/c0) int [q - q0 grad f.n] [G(x, x_p) - G(x, x0)],
    with the linear f anchored at the probe's boundary node. The accuracy
    does not degrade as eps -> 0.
    """
    i = probe.anchor
    x0 = mesh.coords[i]
    n0 = mesh.node_normals[i]
    phi0 = float(solution.phi[i])
    q0 = float(solution.q[i])
    x_p = np.asarray(probe.point, float)
    base, refined = _quadratures(mesh)
    centroids = mesh.coords[mesh.conn].mean(axis=1)
    sizes = _element_sizes(mesh)
    near = _near_mask(centroids, sizes, x0)
    acc = 0.0
    weights_fn = _WEIGHTS[mesh.regime]
    for quad, elems in ((base, np.flatnonzero(~near)), (refined, np.flatnonzero(near))):
        if elems.size == 0:
            continue
        idx = _gauss_subset(quad, elems)
        pts, nrms, wts = quad.points[idx], quad.normals[idx], quad.weights[idx]
        phi_g = np.einsum("gk,gk->g", quad.shape[idx], solution.phi[quad.conn[idx]])
        q_g = np.einsum("gk,gk->g", quad.shape[idx], solution.q[quad.conn[idx]])
        f_g = (pts - x0) @ n0
        gdn_g = nrms @ n0
        wg_p, wdg_p = weights_fn(pts, nrms, x_p)
        wg_0, wdg_0 = weights_fn(pts, nrms, x0)
        chi = phi_g - phi0 - q0 * f_g
        dchi = q_g - q0 * gdn_g
        acc += np.sum(wts * (dchi * (wg_p - wg_0) - chi * (wdg_p - wdg_0)))
    f_p = float((x_p - x0) @ n0)
    return phi0 + q0 * f_p + acc / _SOLID_ANGLE[mesh.regime]


def evaluate_potential(x_p, solution: Solution, mesh: Mesh) -> float:
    """Interior evaluation that switches to the near-boundary form when needed."""
    try:
        return eval_interior(x_p, solution, mesh)
    except NearBoundaryError:
        node, dist = _nearest_node(mesh, np.asarray(x_p, float))
        return eval_near_boundary(FieldProbe(np.asarray(x_p, float), node, max(dist, 1e-30)),
                                  solution, mesh)


# ---------------------------------------------------------------------------
# Surface velocity reconstruction

def surface_velocity(solution: Solution, mesh: Mesh) -> np.ndarray:
    """Nodal velocity u = q n + tangential gradient of phi.

    The tangential part comes from a least-squares fit of phi over the
    1-ring, with the known normal slope removed from the data first; the fit
    is exact for linear fields on curved meshes, and u.n - q = 0 holds by
    construction.
    """
    n_nodes = mesh.n_nodes
    dim = mesh.dim
    u = np.zeros((n_nodes, dim))
    for i in range(n_nodes):
        n0 = mesh.node_normals[i]
        nbrs = mesh.node_neighbors(i)
        if nbrs.size == 0:
            raise NsbemError(f"node {i} has no neighbors for the tangential fit")
        dx = mesh.coords[nbrs] - mesh.coords[i]
        b = solution.phi[nbrs] - solution.phi[i] - solution.q[i] * (dx @ n0)
        tangents = _tangent_basis(n0)
        a = dx @ tangents.T
        ata = a.T @ a
        atb = a.T @ b
        coef = np.linalg.lstsq(ata, atb, rcond=None)[0]
        u[i] = solution.q[i] * n0 + coef @ tangents
    return u


def _tangent_basis(n0: np.ndarray) -> np.ndarray:
    dim = n0.shape[0]
    if dim == 2:
        return np.array([[n0[1], -n0[0]]])
    seed = np.array([1.0, 0.0, 0.0]) if abs(n0[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    t1 = np.cross(n0, seed)
    t1 /= np.linalg.norm(t1)
    return np.stack([t1, np.cross(n0, t1)])


# ---------------------------------------------------------------------------
# Pressure and force

@dataclass
class FlowState:
    """Inputs of the unsteady Bernoulli pressure on a rigid translating part."""

    rho: float
    gravity: float
    body_velocity: np.ndarray
    dt: float
    phi_prev: Optional[np.ndarray] = None


def pressure_and_force(mesh: Mesh, part: str, phi: np.ndarray,
                       velocity: np.ndarray, state: FlowState) -> np.ndarray:
    """Integrate p = -rho (dphi/dt + |u|^2/2 + g z) over one closed part.

    Nodal phi histories follow the rigid body, so the fixed-frame rate is the
    backward difference minus the convective correction u_body.u. Mesh
    normals point out of the fluid (into the body), which makes
    F = sum p_bar n A the force exerted by the fluid on the body.
    """
    if state.phi_prev is None:
        raise NsbemError("pressure needs at least 2 time samples of phi")
    nodes = mesh.part_nodes(part)
    mask = np.zeros(mesh.n_nodes, dtype=bool)
    mask[nodes] = True
    dphidt = (phi - state.phi_prev) / state.dt - velocity @ np.asarray(state.body_velocity, float)
    z = mesh.coords[:, 2] if mesh.dim == 3 else mesh.coords[:, 1]
    p = -state.rho * (dphidt + 0.5 * np.einsum("ij,ij->i", velocity, velocity)
                      + state.gravity * z)
    elems = mesh.part_elems(part)
    p_bar = p[mesh.conn[elems]].mean(axis=1)
    return np.einsum("e,ed->d", p_bar * mesh.measures[elems], mesh.elem_normals[elems])


def write_probe_csv(path, points, solution: Solution, mesh: Mesh, header_lines=()) -> None:
    """CSV of (x, y, z, phi, ux, uy, uz) at interior probe points (3D)."""
    if mesh.regime != "3d":
        raise NsbemError("probe CSV output is defined for the 3d regime")
    base, _ = _quadratures(mesh)
    phi_g = np.einsum("gk,gk->g", base.shape, solution.phi[base.conn])
    q_g = np.einsum("gk,gk->g", base.shape, solution.q[base.conn])
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("x,y,z,phi,ux,uy,uz\n")
        for x_p in np.atleast_2d(np.asarray(points, float)):
            phi_p = evaluate_potential(x_p, solution, mesh)
            u_p = _interior_velocity(x_p, phi_g, q_g, base)
            fh.write(",".join(f"{v:.12g}" for v in (*x_p, phi_p, *u_p)) + "\n")


def _interior_velocity(x_p, phi_g, q_g, quad):
    dx = quad.points - x_p
    r2 = np.einsum("ij,ij->i", dx, dx)
    r = np.sqrt(r2)
    grad_g = dx / (r2 * r)[:, None]
    rn = np.einsum("ij,ij->i", dx, quad.normals)
    grad_dgdn = quad.normals / (r2 * r)[:, None] - 3.0 * rn[:, None] * dx / (r2 * r2 * r)[:, None]
    w = quad.weights[:, None]
    return np.sum(w * (q_g[:, None] * grad_g - phi_g[:, None] * grad_dgdn), axis=0) / (4 * np.pi)
