"""Desingularizing fields psi(x) = phi0 + q0 f(x).

Each field kind supplies a harmonic f with f(x0) = 0 and grad f(x0).n0 = 1
(per side for corner kinds). Subtracting psi from phi inside the boundary
integrals removes the kernel singularities at the collocation node, so the
assembled integrands stay finite everywhere.

Kinds:
  linear          f = n0.(x - x0)                      (bounded domains)
  inverse-point   f = (rho0^2/d)(1 - rho0/|x - xD|)    (bounded at infinity)
  axisymmetric    the inverse-point field with xD on the symmetry axis,
                  reduced to meridian coordinates
  corner pairs    fL, fR satisfying the one-sided slope conditions at a 2D
                  corner (a linear pair and a log pair)
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import FieldError

FIELD_KINDS = ("linear", "inverse-point", "axisymmetric",
               "corner-linear-pair", "corner-log-pair")


@dataclass(frozen=True)
class DesingularizingField:
    kind: str
    x0: np.ndarray
    n0: Optional[np.ndarray] = None
    xd: Optional[np.ndarray] = None
    # corner kinds
    nl: Optional[np.ndarray] = None
    nr: Optional[np.ndarray] = None
    xdl: Optional[np.ndarray] = None
    xdr: Optional[np.ndarray] = None


def linear_field(x0, n0) -> DesingularizingField:
    return DesingularizingField("linear", np.asarray(x0, float), np.asarray(n0, float))


def inverse_point_field(x0, n0, xd) -> DesingularizingField:
    """Field bounded at infinity, anchored at x0 with exterior point xd."""
    x0 = np.asarray(x0, float)
    n0 = np.asarray(n0, float)
    xd = np.asarray(xd, float)
    d = float(n0 @ (x0 - xd))
    if d == 0.0:
        raise FieldError("inverse-point field needs n0.(x0 - xD) != 0")
    return DesingularizingField("inverse-point", x0, n0, xd)


def axisym_field(r0: float, z0: float, nr0: float, nz0: float, zd: float) -> DesingularizingField:
    """Inverse-point field with xD = (0, 0, zD) in meridian coordinates."""
    s0 = r0 * nr0 + (z0 - zd) * nz0
    if s0 == 0.0:
        raise FieldError("axisymmetric field needs s0 = r0*nr0 + (z0-zD)*nz0 != 0")
    return DesingularizingField("axisymmetric", np.array([r0, z0]),
                                np.array([nr0, nz0]), np.array([0.0, zd]))


def f_linear(field: DesingularizingField, x, n=None):
    """f = n0.(x - x0); grad f.n = n0.n (None if n not given)."""
    if field.kind != "linear":
        raise FieldError(f"f_linear called on a {field.kind} field")
    x = np.asarray(x, float)
    f = (x - field.x0) @ field.n0
    gdn = None if n is None else np.asarray(n, float) @ field.n0
    return f, gdn


def f_inverse(field: DesingularizingField, x, n=None):
    """Inverse-point f and its normal derivative at x."""
    if field.kind not in ("inverse-point", "axisymmetric"):
        raise FieldError(f"f_inverse called on a {field.kind} field")
    x = np.asarray(x, float)
    rho0 = float(np.linalg.norm(field.x0 - field.xd))
    d = float(field.n0 @ (field.x0 - field.xd))
    w = x - field.xd
    s = np.linalg.norm(w, axis=-1)
    if np.any(s == 0.0):
        raise FieldError("inverse-point f evaluated at xD; xD must lie outside the domain")
    f = (rho0 * rho0 / d) * (1.0 - rho0 / s)
    gdn = None
    if n is not None:
        n = np.asarray(n, float)
        gdn = (rho0 ** 3 / d) * np.sum(w * n, axis=-1) / s ** 3
    return f, gdn


def psi_axisym(field: DesingularizingField, r, z, nr=None, nz=None):
    """Meridian-plane f and normal derivative of the axisymmetric field.

    Returns ((rho - rho0)/rho * rho0^2/s0, (rho0/rho)^3 * s/s0); the second
    entry is None when the normal is not supplied. Both are per unit q0.
    """
    if field.kind != "axisymmetric":
        raise FieldError(f"psi_axisym called on a {field.kind} field")
    r = np.asarray(r, float)
    z = np.asarray(z, float)
    r0, z0 = field.x0
    nr0, nz0 = field.n0
    zd = field.xd[1]
    rho0 = np.hypot(r0, z0 - zd)
    s0 = r0 * nr0 + (z0 - zd) * nz0
    rho = np.hypot(r, z - zd)
    f = (rho - rho0) / rho * (rho0 * rho0 / s0)
    dpsi = None
    if nr is not None:
        s = r * np.asarray(nr, float) + (z - zd) * np.asarray(nz, float)
        dpsi = (rho0 / rho) ** 3 * (s / s0)
    return f, dpsi


# ---------------------------------------------------------------------------
# Corner pairs (2D)

def corner_linear_pair(x0, nl, nr) -> DesingularizingField:
    """Linear fL, fR built from the two corner normals."""
    nl = np.asarray(nl, float)
    nr = np.asarray(nr, float)
    if abs(nl @ nr) >= 1.0 - 1e-10:
        raise FieldError("corner normals are parallel; not a corner")
    return DesingularizingField("corner-linear-pair", np.asarray(x0, float), nl=nl, nr=nr)


def corner_pair_linear(field: DesingularizingField, x):
    """(fL, fR, gradL, gradR) of the linear corner pair at x.

    gradL.nL = 1, gradL.nR = 0 (and symmetrically) by construction.
    """
    if field.kind != "corner-linear-pair":
        raise FieldError(f"corner_pair_linear called on a {field.kind} field")
    nl, nr = field.nl, field.nr
    c = float(nl @ nr)
    gl = (-c * nr + nl) / (1.0 - c * c)
    gr = (-c * nl + nr) / (1.0 - c * c)
    dx = np.asarray(x, float) - field.x0
    return dx @ gl, dx @ gr, gl, gr


def corner_log_pair(x0, nl, nr, xdl, xdr) -> DesingularizingField:
    """Logarithmic fL, fR anchored at exterior points xdl, xdr.

    The four orthogonality/obliqueness conditions (nL.(x0-xdl) != 0,
    nR.(x0-xdl) = 0 and the mirrored pair) are verified to 1e-10.
    """
    x0 = np.asarray(x0, float)
    nl = np.asarray(nl, float)
    nr = np.asarray(nr, float)
    xdl = np.asarray(xdl, float)
    xdr = np.asarray(xdr, float)
    scale = max(np.linalg.norm(x0 - xdl), np.linalg.norm(x0 - xdr))
    if abs(nr @ (x0 - xdl)) > 1e-10 * scale or abs(nl @ (x0 - xdr)) > 1e-10 * scale:
        raise FieldError("corner-log exterior points violate the orthogonality conditions")
    if abs(nl @ (x0 - xdl)) <= 1e-10 * scale or abs(nr @ (x0 - xdr)) <= 1e-10 * scale:
        raise FieldError("corner-log exterior points give a vanishing slope denominator")
    return DesingularizingField("corner-log-pair", x0, nl=nl, nr=nr, xdl=xdl, xdr=xdr)


def corner_pair_log(field: DesingularizingField, x, n=None):
    """(fL, fR, gradL.n, gradR.n) of the log corner pair at x."""
    if field.kind != "corner-log-pair":
        raise FieldError(f"corner_pair_log called on a {field.kind} field")
    x = np.asarray(x, float)
    out = []
    for nrm, xd in ((field.nl, field.xdl), (field.nr, field.xdr)):
        rho0 = float(np.linalg.norm(field.x0 - xd))
        d = float(nrm @ (field.x0 - xd))
        w = x - xd
        s2 = np.sum(w * w, axis=-1)
        f = (rho0 * rho0 / d) * 0.5 * np.log(s2 / rho0 ** 2)
        gdn = None
        if n is not None:
            gdn = (rho0 * rho0 / d) * np.sum(w * np.asarray(n, float), axis=-1) / s2
        out.extend([f, gdn])
    return out[0], out[2], out[1], out[3]


def place_corner_exterior_points(x0, nl, nr, tl, tr, scale: float):
    """Exterior anchor points for the log corner pair.

    xDL sits on the extension of the R edge beyond the corner (so
    nR.(x0 - xDL) = 0 automatically) on the side that is locally outside the
    domain, and symmetrically for xDR. Raises for reflex corners, where both
    extensions fall inside; the linear pair handles those.
    """
    x0 = np.asarray(x0, float)
    nl = np.asarray(nl, float)
    nr = np.asarray(nr, float)
    tl = np.asarray(tl, float)
    tr = np.asarray(tr, float)
    # convex corner test: the boundary turns left (CCW interior) at x0
    turn = (-tl[0]) * tr[1] - (-tl[1]) * tr[0]
    if turn <= 1e-12:
        raise FieldError("reflex or flat corner: both edge extensions lie inside "
                         "the domain, use corner_pair_linear instead")
    out = []
    for nrm_other, t in ((nl, tr), (nr, tl)):
        sgn = float(nrm_other @ t)
        xd = x0 + np.sign(sgn) * scale * t
        if nrm_other @ (xd - x0) <= 0.0:
            raise FieldError("cannot place exterior point for this corner geometry")
        out.append(xd)
    return out[0], out[1]
