"""Boundary discretizations: 2D polygons with double corner nodes, meridian
arcs, icospheres and graded free-surface discs.

Conventions fixed here and relied on everywhere else:
  * 2D boundaries are ordered counterclockwise for interior problems; the
    outward normal is the element tangent rotated by -90 degrees.
  * Meridian arcs run from the bottom pole to the top pole, which makes the
    same -90 degree rotation point radially out of the body.
  * Generators attach the body-natural outward normal (radial on spheres,
    +z on the flat disc). Exterior/semi-infinite solves flip the orientation
    so normals point out of the fluid; see flip_orientation().
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import MeshError

REGIMES = ("2d", "axisym", "3d")


@dataclass
class Mesh:
    """Nodes, linear elements and part labels for one boundary discretization.

    coords/node_normals are (N, 2) for the 2d/axisym regimes and (N, 3) for 3d.
    corner_id tags double-node duplicates (-1 for regular nodes); the two
    copies of a corner share the position but carry distinct normals.
    chains lists ordered node ids along each edge/meridian (used for
    finite-difference stencils and profile output); empty for 3d meshes.
    """

    regime: str
    coords: np.ndarray
    node_normals: np.ndarray
    corner_id: np.ndarray
    conn: np.ndarray
    elem_normals: np.ndarray
    measures: np.ndarray
    node_part: np.ndarray
    elem_part: np.ndarray
    part_names: list
    chains: list = field(default_factory=list)
    _node_elems: Optional[list] = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def n_elems(self) -> int:
        return self.conn.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    def part_nodes(self, name: str) -> np.ndarray:
        return np.flatnonzero(self.node_part == self.part_names.index(name))

    def part_elems(self, name: str) -> np.ndarray:
        return np.flatnonzero(self.elem_part == self.part_names.index(name))

    def node_elements(self) -> list:
        """Elements incident to each node (topology-cached)."""
        if self._node_elems is None:
            lst = [[] for _ in range(self.n_nodes)]
            for e, nodes in enumerate(self.conn):
                for j in nodes:
                    lst[int(j)].append(e)
            self._node_elems = [np.asarray(v, dtype=np.int64) for v in lst]
        return self._node_elems

    def node_neighbors(self, i: int) -> np.ndarray:
        """1-ring node ids around node i."""
        nbrs = set()
        for e in self.node_elements()[int(i)]:
            for j in self.conn[e]:
                if int(j) != int(i):
                    nbrs.add(int(j))
        return np.asarray(sorted(nbrs), dtype=np.int64)

    def copy(self) -> "Mesh":
        return Mesh(self.regime, self.coords.copy(), self.node_normals.copy(),
                    self.corner_id.copy(), self.conn.copy(), self.elem_normals.copy(),
                    self.measures.copy(), self.node_part.copy(), self.elem_part.copy(),
                    list(self.part_names), [c.copy() for c in self.chains])


def _element_geometry(regime: str, coords: np.ndarray, conn: np.ndarray):
    """Element normals and measures from current node positions."""
    if conn.shape[1] == 2:
        t = coords[conn[:, 1]] - coords[conn[:, 0]]
        length = np.linalg.norm(t, axis=1)
        if np.any(length <= 0.0):
            raise MeshError(f"degenerate element {int(np.argmin(length))} (zero length)")
        t = t / length[:, None]
        normals = np.stack([t[:, 1], -t[:, 0]], axis=1)
        return normals, length
    cr = np.cross(coords[conn[:, 1]] - coords[conn[:, 0]],
                  coords[conn[:, 2]] - coords[conn[:, 0]])
    area2 = np.linalg.norm(cr, axis=1)
    if np.any(area2 <= 0.0):
        raise MeshError(f"degenerate element {int(np.argmin(area2))} (zero area)")
    return cr / area2[:, None], 0.5 * area2


def recompute_geometry(mesh: Mesh) -> Mesh:
    """Refresh element normals/measures and node normals from positions.

    Node normals become the area-weighted average of incident element
    normals, renormalized; corner duplicates average only over the elements
    that reference that copy, so the two sides keep distinct normals.
    Idempotent. Mutates and returns the mesh.
    """
    mesh.elem_normals, mesh.measures = _element_geometry(mesh.regime, mesh.coords, mesh.conn)
    nn = np.zeros_like(mesh.node_normals)
    contrib = mesh.elem_normals * mesh.measures[:, None]
    for k in range(mesh.conn.shape[1]):
        np.add.at(nn, mesh.conn[:, k], contrib)
    norms = np.linalg.norm(nn, axis=1)
    if np.any(norms == 0.0):
        raise MeshError(f"isolated node {int(np.argmin(norms))} has no incident elements")
    mesh.node_normals = nn / norms[:, None]
    return mesh


def flip_orientation(mesh: Mesh) -> Mesh:
    """Reverse element winding and negate all normals (exterior problems)."""
    mesh.conn = mesh.conn[:, ::-1].copy()
    mesh.elem_normals = -mesh.elem_normals
    mesh.node_normals = -mesh.node_normals
    mesh._node_elems = None
    return mesh


def merge_meshes(meshes: list) -> Mesh:
    """Concatenate meshes of one regime into a single multi-part mesh."""
    regime = meshes[0].regime
    if any(m.regime != regime for m in meshes):
        raise MeshError("cannot merge meshes of different regimes")
    part_names, node_parts, elem_parts, chains = [], [], [], []
    coords, normals, corner, conns = [], [], [], []
    node_off = 0
    for im, m in enumerate(meshes):
        part_off = len(part_names)
        for name in m.part_names:
            uniq = name
            n = 2
            while uniq in part_names:
                uniq = f"{name}-{n}"
                n += 1
            part_names.append(uniq)
        coords.append(m.coords)
        normals.append(m.node_normals)
        corner.append(np.where(m.corner_id >= 0, m.corner_id + 10_000 * im, -1))
        conns.append(m.conn + node_off)
        node_parts.append(m.node_part + part_off)
        elem_parts.append(m.elem_part + part_off)
        chains.extend(c + node_off for c in m.chains)
        node_off += m.n_nodes
    out = Mesh(regime, np.vstack(coords), np.vstack(normals),
               np.concatenate(corner), np.vstack(conns),
               np.vstack([m.elem_normals for m in meshes]),
               np.concatenate([m.measures for m in meshes]),
               np.concatenate(node_parts).astype(np.int64),
               np.concatenate(elem_parts).astype(np.int64),
               part_names, chains)
    return out


# ---------------------------------------------------------------------------
# 2D parallelogram with double corner nodes

def make_parallelogram_boundary(beta: float, nodes_per_edge: int) -> Mesh:
    """Unit-edge parallelogram boundary with corner double nodes.

    Vertices (0,0), (1,0), (1+cos b, sin b), (cos b, sin b) with b = beta in
    degrees; each edge carries nodes_per_edge nodes including both endpoints,
    and every corner is duplicated (one copy per adjacent edge). Elements are
    uniform segments ordered counterclockwise.
    """
    if not 0.0 < beta < 180.0:
        raise MeshError(f"beta must lie in (0, 180) degrees, got {beta}")
    if nodes_per_edge < 3:
        raise MeshError(f"nodes_per_edge must be >= 3, got {nodes_per_edge}")
    b = np.deg2rad(beta)
    verts = np.array([[0.0, 0.0], [1.0, 0.0],
                      [1.0 + np.cos(b), np.sin(b)], [np.cos(b), np.sin(b)]])
    n = nodes_per_edge
    coords, normals, corner, parts, chains, conns = [], [], [], [], [], []
    for e in range(4):
        p0, p1 = verts[e], verts[(e + 1) % 4]
        t = (p1 - p0) / np.linalg.norm(p1 - p0)
        nrm = np.array([t[1], -t[0]])
        s = np.linspace(0.0, 1.0, n)
        ids = np.arange(e * n, (e + 1) * n)
        coords.append(p0 + s[:, None] * (p1 - p0))
        normals.append(np.tile(nrm, (n, 1)))
        c = -np.ones(n, dtype=np.int64)
        c[0] = e
        c[-1] = (e + 1) % 4
        corner.append(c)
        parts.append(np.full(n, e, dtype=np.int64))
        chains.append(ids)
        conns.append(np.stack([ids[:-1], ids[1:]], axis=1))
    coords = np.vstack(coords)
    conn = np.vstack(conns)
    elem_normals, measures = _element_geometry("2d", coords, conn)
    elem_part = np.repeat(np.arange(4), n - 1)
    return Mesh("2d", coords, np.vstack(normals), np.concatenate(corner), conn,
                elem_normals, measures, np.concatenate(parts), elem_part,
                [f"edge-{e}" for e in range(4)], chains)


def corner_pairs(mesh: Mesh) -> list:
    """(left_copy, right_copy) node ids per corner tag.

    The left copy ends a chain (its edge arrives at the corner), the right
    copy starts one. Raises if a tag does not have exactly two copies.
    """
    ends = {}
    starts = {}
    for ch in mesh.chains:
        for i, bag in ((ch[-1], ends), (ch[0], starts)):
            cid = int(mesh.corner_id[int(i)])
            if cid >= 0:
                bag[cid] = int(i)
    if set(ends) != set(starts):
        raise MeshError("corner tags are not paired across chains")
    pairs = []
    for cid in sorted(ends):
        l, r = ends[cid], starts[cid]
        if not np.allclose(mesh.coords[l], mesh.coords[r], rtol=0, atol=1e-14):
            raise MeshError(f"corner {cid} copies do not coincide")
        pairs.append((l, r))
    return pairs


# ---------------------------------------------------------------------------
# Icosphere

_ICO_T = (1.0 + np.sqrt(5.0)) / 2.0
_ICO_VERTS = np.array([
    [-1, _ICO_T, 0], [1, _ICO_T, 0], [-1, -_ICO_T, 0], [1, -_ICO_T, 0],
    [0, -1, _ICO_T], [0, 1, _ICO_T], [0, -1, -_ICO_T], [0, 1, -_ICO_T],
    [_ICO_T, 0, -1], [_ICO_T, 0, 1], [-_ICO_T, 0, -1], [-_ICO_T, 0, 1],
], dtype=float)
_ICO_FACES = np.array([
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
])


def make_tri_sphere(center, radius: float, subdivision: int) -> Mesh:
    """Icosphere: icosahedron subdivided and projected onto the sphere.

    20*4^s faces and 10*4^s + 2 vertices; node normals are the exact radial
    directions, faces wind outward.
    """
    if radius <= 0.0:
        raise MeshError(f"radius must be positive, got {radius}")
    if subdivision < 0:
        raise MeshError("subdivision must be >= 0")
    verts = _ICO_VERTS / np.linalg.norm(_ICO_VERTS[0])
    faces = _ICO_FACES.copy()
    for _ in range(subdivision):
        verts, faces = _subdivide_once(verts, faces)
    # outward winding
    centroid = verts[faces].mean(axis=1)
    nrm = np.cross(verts[faces[:, 1]] - verts[faces[:, 0]],
                   verts[faces[:, 2]] - verts[faces[:, 0]])
    flip = np.einsum("ij,ij->i", nrm, centroid) < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    center = np.asarray(center, dtype=float)
    coords = center + radius * verts
    elem_normals, measures = _element_geometry("3d", coords, faces)
    n = coords.shape[0]
    return Mesh("3d", coords, verts.copy(), -np.ones(n, dtype=np.int64), faces,
                elem_normals, measures, np.zeros(n, dtype=np.int64),
                np.zeros(faces.shape[0], dtype=np.int64), ["sphere"])


def _subdivide_once(verts: np.ndarray, faces: np.ndarray):
    verts = list(verts)
    cache = {}

    def midpoint(a: int, b: int) -> int:
        key = (a, b) if a < b else (b, a)
        if key not in cache:
            v = verts[a] + verts[b]
            verts.append(v / np.linalg.norm(v))
            cache[key] = len(verts) - 1
        return cache[key]

    out = []
    for a, b, c in faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        out.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
    return np.asarray(verts), np.asarray(out, dtype=np.int64)


# ---------------------------------------------------------------------------
# Meridian spheres (axisymmetric)

def make_meridian_spheres(configs: list, nodes_per_sphere: int) -> Mesh:
    """Meridian semicircles of spheres centred on the z-axis.

    configs is a list of (radius, z_center). Each sphere contributes
    nodes_per_sphere nodes from the bottom pole to the top pole (poles at
    r = 0 included); normals point radially out of each sphere.
    """
    if nodes_per_sphere < 5:
        raise MeshError(f"nodes_per_sphere must be >= 5, got {nodes_per_sphere}")
    for radius, _ in configs:
        if radius <= 0.0:
            raise MeshError(f"sphere radius must be positive, got {radius}")
    for (r1, z1), (r2, z2) in zip(configs[:-1], configs[1:]):
        if abs(z2 - z1) < r1 + r2:
            raise MeshError("spheres overlap along the axis")
    coords, normals, parts, chains, conns = [], [], [], [], []
    off = 0
    for k, (radius, zc) in enumerate(configs):
        s = np.linspace(0.0, np.pi, nodes_per_sphere)   # bottom pole -> top pole
        r = radius * np.sin(s)
        r[0] = r[-1] = 0.0                              # poles exactly on axis
        z = zc - radius * np.cos(s)
        coords.append(np.stack([r, z], axis=1))
        normals.append(np.stack([np.sin(s), -np.cos(s)], axis=1))
        ids = np.arange(off, off + nodes_per_sphere)
        chains.append(ids)
        conns.append(np.stack([ids[:-1], ids[1:]], axis=1))
        parts.append(np.full(nodes_per_sphere, k, dtype=np.int64))
        off += nodes_per_sphere
    coords = np.vstack(coords)
    conn = np.vstack(conns)
    elem_normals, measures = _element_geometry("axisym", coords, conn)
    n_el = nodes_per_sphere - 1
    return Mesh("axisym", coords, np.vstack(normals),
                -np.ones(off, dtype=np.int64), conn, elem_normals, measures,
                np.concatenate(parts), np.repeat(np.arange(len(configs)), n_el),
                [f"sphere-{k + 1}" for k in range(len(configs))], chains)


# ---------------------------------------------------------------------------
# Free-surface disc

def make_free_surface_disc(truncation_radius: float, target_elements: int,
                           growth: float = 1.15) -> Mesh:
    """Triangulated flat disc at z = 0, graded finer near the centre.

    Ring spacings grow geometrically (ratio <= 1.2); the element count is
    calibrated to land within 20% of target_elements. Normals are (0,0,+1),
    out of the fluid occupying z < 0.
    """
    if truncation_radius <= 0.0:
        raise MeshError("truncation_radius must be positive")
    if target_elements < 8:
        raise MeshError(f"target_elements must be >= 8, got {target_elements}")
    growth = min(growth, 1.2)
    h_cap = truncation_radius * np.sqrt(4.2 / max(target_elements, 8))
    best = None
    for _ in range(20):
        mesh = _build_disc(truncation_radius, h_cap, growth)
        ratio = mesh.n_elems / target_elements
        if best is None or abs(ratio - 1.0) < abs(best.n_elems / target_elements - 1.0):
            best = mesh
        if 0.95 < ratio < 1.05:
            break
        h_cap *= ratio ** 0.45
    if not 0.8 * target_elements <= best.n_elems <= 1.2 * target_elements:
        raise MeshError(f"disc calibration failed: {best.n_elems} elements "
                        f"for target {target_elements}")
    return best


def _build_disc(radius: float, h_cap: float, growth: float) -> Mesh:
    # spacing grows geometrically from a 4x finer centre up to h_cap
    radii = []
    r, dr = 0.0, 0.25 * h_cap
    while r < radius - 1e-12:
        r = min(r + dr, radius)
        radii.append(r)
        dr = min(dr * growth, h_cap)
    radii = np.asarray(radii) * (radius / radii[-1])
    pts = [np.zeros((1, 3))]
    rings = [np.array([0])]
    off = 1
    spacing = np.diff(np.concatenate([[0.0], radii]))
    for k, rk in enumerate(radii):
        n_k = max(6, int(round(2 * np.pi * rk / spacing[k])))
        ang = 2 * np.pi * np.arange(n_k) / n_k + (k % 2) * np.pi / n_k
        pts.append(np.stack([rk * np.cos(ang), rk * np.sin(ang), np.zeros(n_k)], axis=1))
        rings.append(np.arange(off, off + n_k))
        off += n_k
    coords = np.vstack(pts)
    tris = [[0, int(a), int(b)] for a, b in
            zip(rings[1], np.roll(rings[1], -1))]
    for inner, outer in zip(rings[1:-1], rings[2:]):
        tris.extend(_triangulate_annulus(coords, inner, outer))
    conn = np.asarray(tris, dtype=np.int64)
    elem_normals, measures = _element_geometry("3d", coords, conn)
    n = coords.shape[0]
    normals = np.tile([0.0, 0.0, 1.0], (n, 1))
    return Mesh("3d", coords, normals, -np.ones(n, dtype=np.int64), conn,
                elem_normals, measures, np.zeros(n, dtype=np.int64),
                np.zeros(conn.shape[0], dtype=np.int64), ["free-surface"])


def _triangulate_annulus(coords: np.ndarray, inner: np.ndarray, outer: np.ndarray) -> list:
    """March two concentric node rings by angle, emitting CCW (+z) triangles."""
    ai = np.arctan2(coords[inner, 1], coords[inner, 0]) % (2 * np.pi)
    ao = np.arctan2(coords[outer, 1], coords[outer, 0]) % (2 * np.pi)
    oi, oo = np.argsort(ai), np.argsort(ao)
    inner, ai = inner[oi], ai[oi]
    outer, ao = outer[oo], ao[oo]
    ni, no = len(inner), len(outer)

    def ang(arr, idx, n):
        return arr[idx % n] + 2 * np.pi * (idx // n)

    tris = []
    i = j = 0
    while i < ni or j < no:
        adv_inner = j >= no or (i < ni and ang(ai, i + 1, ni) <= ang(ao, j + 1, no))
        if adv_inner:
            tris.append([int(inner[i % ni]), int(outer[j % no]), int(inner[(i + 1) % ni])])
            i += 1
        else:
            tris.append([int(inner[i % ni]), int(outer[j % no]), int(outer[(j + 1) % no])])
            j += 1
    return tris


# ---------------------------------------------------------------------------
# Snapshot format

def write_snapshot(mesh: Mesh, path, extra: Optional[dict] = None) -> None:
    """ASCII mesh snapshot: header, one node per line, one element per line.

    Node lines carry (id, x, y, z, nx, ny, nz, corner_id) plus any extra
    per-node columns (name -> array) declared in the header; 2D/axisymmetric
    coordinates are padded with z = 0. Ordering is deterministic.
    """
    extra = extra or {}
    names = sorted(extra)
    with open(path, "w") as fh:
        fh.write(f"# nsbem-mesh regime={mesh.regime} nodes={mesh.n_nodes} "
                 f"elements={mesh.n_elems} extra={','.join(names)}\n")
        for k, name in enumerate(mesh.part_names):
            nsel = np.flatnonzero(mesh.node_part == k)
            esel = np.flatnonzero(mesh.elem_part == k)
            fh.write(f"# part {name} nodes {nsel[0]}:{nsel[-1] + 1} "
                     f"elements {esel[0]}:{esel[-1] + 1}\n")
        pad = 3 - mesh.dim
        for i in range(mesh.n_nodes):
            x = list(mesh.coords[i]) + [0.0] * pad
            n = list(mesh.node_normals[i]) + [0.0] * pad
            cols = [f"{v:.17g}" for v in x + n]
            cols += [str(int(mesh.corner_id[i]))]
            cols += [f"{float(extra[name][i]):.17g}" for name in names]
            fh.write(f"{i} " + " ".join(cols) + "\n")
        for e in range(mesh.n_elems):
            fh.write(f"{e} " + " ".join(str(int(j)) for j in mesh.conn[e]) + "\n")


def read_snapshot(path):
    """Read a snapshot written by write_snapshot.

    Returns (mesh, extra) where extra maps the declared per-node column names
    to arrays. Chains are not stored in snapshots.
    """
    with open(path) as fh:
        header = fh.readline().split()
        meta = dict(kv.split("=") for kv in header[2:])
        n_nodes, n_elems = int(meta["nodes"]), int(meta["elements"])
        names = [s for s in meta.get("extra", "").split(",") if s]
        parts = []
        pos = fh.tell()
        line = fh.readline()
        while line.startswith("# part"):
            toks = line.split()
            nr = tuple(int(v) for v in toks[4].split(":"))
            er = tuple(int(v) for v in toks[6].split(":"))
            parts.append((toks[2], nr, er))
            pos = fh.tell()
            line = fh.readline()
        fh.seek(pos)
        node_rows = [fh.readline().split() for _ in range(n_nodes)]
        elem_rows = [fh.readline().split() for _ in range(n_elems)]
    regime = meta["regime"]
    dim = 2 if regime in ("2d", "axisym") else 3
    coords = np.array([[float(v) for v in row[1:4]] for row in node_rows])[:, :dim]
    normals = np.array([[float(v) for v in row[4:7]] for row in node_rows])[:, :dim]
    corner = np.array([int(row[7]) for row in node_rows], dtype=np.int64)
    extra = {name: np.array([float(row[8 + k]) for row in node_rows])
             for k, name in enumerate(names)}
    conn = np.array([[int(v) for v in row[1:]] for row in elem_rows], dtype=np.int64)
    elem_normals, measures = _element_geometry(regime, coords, conn)
    node_part = np.zeros(n_nodes, dtype=np.int64)
    elem_part = np.zeros(n_elems, dtype=np.int64)
    part_names = []
    if not parts:
        parts = [("part-0", (0, n_nodes), (0, n_elems))]
    for k, (name, nr, er) in enumerate(parts):
        part_names.append(name)
        node_part[nr[0]:nr[1]] = k
        elem_part[er[0]:er[1]] = k
    mesh = Mesh(regime, coords, normals, corner, conn, elem_normals, measures,
                node_part, elem_part, part_names)
    return mesh, extra
