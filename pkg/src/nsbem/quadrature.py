"""Gauss rules on reference segments and triangles, and their mesh pullbacks.

All rules keep their points strictly inside the reference element so that
quadrature points can never coincide with a collocation node. Elements close
to the collocation node are integrated with a 4-panel subdivision of the base
rule (the integrands are continuous there but have a curvature spike).
"""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import AssemblyError


@dataclass(frozen=True)
class QuadratureRule:
    """Points (Q, d) on the reference element and weights summing to its measure."""

    points: np.ndarray
    weights: np.ndarray


def gauss_segment(n: int = 8) -> QuadratureRule:
    """n-point Gauss-Legendre on the reference segment [0, 1]."""
    x, w = leggauss(n)
    return QuadratureRule(points=(0.5 * (x + 1.0))[:, None], weights=0.5 * w)


# Seven-point degree-5 symmetric rule on the unit triangle (barycentric data).
_TRI7_W = np.array([0.225,
                    0.13239415278850618, 0.13239415278850618, 0.13239415278850618,
                    0.12593918054482715, 0.12593918054482715, 0.12593918054482715]) * 0.5
_TRI7_A = 0.059715871789769820
_TRI7_B = 0.797426985353087322
_TRI7_P = np.array([
    [1 / 3, 1 / 3],
    [_TRI7_A, (1 - _TRI7_A) / 2], [(1 - _TRI7_A) / 2, _TRI7_A], [(1 - _TRI7_A) / 2, (1 - _TRI7_A) / 2],
    [_TRI7_B, (1 - _TRI7_B) / 2], [(1 - _TRI7_B) / 2, _TRI7_B], [(1 - _TRI7_B) / 2, (1 - _TRI7_B) / 2],
])


def gauss_triangle() -> QuadratureRule:
    """7-point symmetric rule on the unit triangle {xi, eta >= 0, xi+eta <= 1}."""
    return QuadratureRule(points=_TRI7_P.copy(), weights=_TRI7_W.copy())


def subdivide_segment(rule: QuadratureRule, panels: int = 4) -> QuadratureRule:
    """Apply the segment rule on `panels` equal sub-intervals of [0, 1]."""
    pts, wts = [], []
    for k in range(panels):
        a = k / panels
        pts.append(a + rule.points / panels)
        wts.append(rule.weights / panels)
    return QuadratureRule(points=np.vstack(pts), weights=np.concatenate(wts))


def subdivide_triangle(rule: QuadratureRule) -> QuadratureRule:
    """Apply the triangle rule on the 4 congruent children of the unit triangle."""
    p = rule.points
    corners = [
        (np.array([0.0, 0.0]), np.array([0.5, 0.0]), np.array([0.0, 0.5])),
        (np.array([0.5, 0.0]), np.array([1.0, 0.0]), np.array([0.5, 0.5])),
        (np.array([0.0, 0.5]), np.array([0.5, 0.5]), np.array([0.0, 1.0])),
        (np.array([0.5, 0.5]), np.array([0.0, 0.5]), np.array([0.5, 0.0])),
    ]
    pts, wts = [], []
    for v0, v1, v2 in corners:
        pts.append(v0 + np.outer(p[:, 0], v1 - v0) + np.outer(p[:, 1], v2 - v0))
        wts.append(rule.weights / 4.0)
    return QuadratureRule(points=np.vstack(pts), weights=np.concatenate(wts))


@dataclass(frozen=True)
class MeshQuadrature:
    """Flattened per-element Gauss data for a whole mesh.

    points   (G, dim)  physical coordinates
    weights  (G,)      Gauss weight times element jacobian (sums to measure)
    normals  (G, dim)  element normal at each point
    conn     (G, k)    node ids receiving shape-function contributions
    shape    (G, k)    linear shape values at each point
    offsets  (E + 1,)  slice of element e is offsets[e]:offsets[e+1]
    """

    points: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    conn: np.ndarray
    shape: np.ndarray
    offsets: np.ndarray


def mesh_quadrature(mesh, rule: QuadratureRule) -> MeshQuadrature:
    """Pull the reference rule back onto every element of the mesh."""
    coords = mesh.coords
    conn = mesh.conn
    n_elem, k = conn.shape
    q = rule.points.shape[0]
    if k == 2:
        t = rule.points[:, 0]
        shp = np.stack([1.0 - t, t], axis=1)                      # (q, 2)
    elif k == 3:
        xi, eta = rule.points[:, 0], rule.points[:, 1]
        shp = np.stack([1.0 - xi - eta, xi, eta], axis=1)         # (q, 3)
    else:
        raise AssemblyError(f"unsupported element arity {k}")
    # physical points: (E, q, dim) = shape @ element corner coords
    corner = coords[conn]                                         # (E, k, dim)
    pts = np.einsum("qk,ekd->eqd", shp, corner)
    meas = mesh.measures
    if np.any(meas <= 0.0):
        bad = int(np.argmin(meas))
        raise AssemblyError(f"element {bad} has non-positive measure")
    wts = np.outer(meas, rule.weights / rule.weights.sum())       # (E, q)
    nrm = np.repeat(mesh.elem_normals[:, None, :], q, axis=1)
    g = n_elem * q
    return MeshQuadrature(
        points=pts.reshape(g, -1),
        weights=wts.reshape(g),
        normals=nrm.reshape(g, -1),
        conn=np.repeat(conn[:, None, :], q, axis=1).reshape(g, k),
        shape=np.tile(shp, (n_elem, 1)),
        offsets=np.arange(n_elem + 1) * q,
    )
