"""Free-space Laplace kernels and the complete elliptic integrals.

The 3D kernel is G = 1/|x - x0|, the 2D kernel G = -ln|x - x0| (the 1/2pi
prefactor cancels on both sides of the boundary equation, so the bare log is
used). The axisymmetric helpers return the azimuthal integrals of the 3D
kernels over a ring, expressed through K(m) and E(m); they are written in a
combined form in which the 2*r*r0/m factors are eliminated analytically
(2*r*r0/m == Rbar^2/2), so points on the symmetry axis need no branch.
"""

from typing import NamedTuple

import numpy as np

from .errors import NsbemError

_AGM_TOL = 1e-16
_AGM_MAX_ITER = 40


class KernelPair(NamedTuple):
    g: float
    dg_dn: float


class EllipticPair(NamedTuple):
    k: float
    e: float


def kernel_3d(x, x0, n) -> KernelPair:
    """G and dG/dn at integration point x, source x0, unit normal n at x."""
    dx = np.asarray(x, dtype=float) - np.asarray(x0, dtype=float)
    r2 = float(dx @ dx)
    if r2 == 0.0:
        raise NsbemError("kernel_3d evaluated at coincident points; "
                         "quadrature points must never hit the collocation node")
    r = np.sqrt(r2)
    return KernelPair(1.0 / r, -float(dx @ np.asarray(n, dtype=float)) / (r2 * r))


def kernel_2d(x, x0, n) -> KernelPair:
    """-ln|x-x0| and its normal derivative at x."""
    dx = np.asarray(x, dtype=float) - np.asarray(x0, dtype=float)
    r2 = float(dx @ dx)
    if r2 == 0.0:
        raise NsbemError("kernel_2d evaluated at coincident points; "
                         "quadrature points must never hit the collocation node")
    return KernelPair(-0.5 * np.log(r2), -float(dx @ np.asarray(n, dtype=float)) / r2)


def _agm_ke(m):
    """K(m), E(m) by the arithmetic-geometric mean, vectorized over m."""
    m = np.asarray(m, dtype=float)
    a = np.ones_like(m)
    b = np.sqrt(1.0 - m)
    c2_sum = m.copy()          # sum of 2^(n-1) c_n^2, starting with c_0^2 = m
    pow2 = 0.5
    for _ in range(_AGM_MAX_ITER):
        c = 0.5 * (a - b)
        a, b = 0.5 * (a + b), np.sqrt(a * b)
        pow2 *= 2.0
        c2_sum = c2_sum + pow2 * c * c
        if np.all(np.abs(c) <= _AGM_TOL * a):
            break
    k = 0.5 * np.pi / a
    e = k * (1.0 - 0.5 * c2_sum)
    return k, e


def elliptic_ke(m) -> EllipticPair:
    """Complete elliptic integrals K(m), E(m) of the parameter m in [0, 1).

    Scalar or array input. Relative accuracy ~1e-14 (AGM iterates to machine
    precision). m outside [0, 1) is a domain error: m = 1 only arises at the
    collocation node itself, where the caller's chi-difference factor has
    already vanished and this function must not be reached.
    """
    m_arr = np.asarray(m, dtype=float)
    if np.any(m_arr < 0.0) or np.any(m_arr >= 1.0):
        raise NsbemError("elliptic parameter m must satisfy 0 <= m < 1")
    k, e = _agm_ke(m_arr)
    if np.isscalar(m) or m_arr.ndim == 0:
        return EllipticPair(float(k), float(e))
    return EllipticPair(k, e)


def axisym_m(r, z, r0, z0):
    """Elliptic parameter m = 4 r r0 / Rbar^2 and Rbar for ring kernels.

    Rbar^2 = (r + r0)^2 + (z - z0)^2. Total on r, r0 >= 0; m = 1 exactly iff
    (r, z) == (r0, z0) with r0 > 0, m = 0 on the axis.
    """
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    rbar2 = (r + r0) ** 2 + (z - z0) ** 2
    with np.errstate(invalid="ignore"):
        m = np.where(rbar2 > 0.0, 4.0 * r * r0 / np.where(rbar2 > 0.0, rbar2, 1.0), 0.0)
    return m, np.sqrt(rbar2)


def ring_kernels(r, z, nr, nz, r0, z0):
    """Azimuthal integrals of the 3D kernels over the ring through (r, z).

    Returns (w_g, w_dgdn) with
        w_g    = r * int_0^2pi G dtheta           = 4 r K(m) / Rbar,
        w_dgdn = r * int_0^2pi dG/dn dtheta
               = -[ 4 E(m) / ((1-m) Rbar^3) * B + 2 n_r K(m) / Rbar ],
        B      = n_r (r^2 - r0^2 - (z-z0)^2)/2 + r (z-z0) n_z.

    The (r, z) arguments are ring coordinates with normal (nr, nz) in the
    meridian plane; (r0, z0) is the target point. Vectorized over rings.
    Multiplying by the arc element dGamma gives surface integrals of Eq-type
    boundary rows at full 3D scale (solid angle 4pi conventions).
    """
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    nr = np.asarray(nr, dtype=float)
    nz = np.asarray(nz, dtype=float)
    m, rbar = axisym_m(r, z, r0, z0)
    if np.any(m >= 1.0 - 1e-12):
        raise NsbemError("ring kernel evaluated too close to the target point "
                         "(m -> 1); collocation layout is broken")
    k, e = _agm_ke(m)
    w_g = 4.0 * r * k / rbar
    b = nr * (r * r - r0 * r0 - (z - z0) ** 2) * 0.5 + r * (z - z0) * nz
    w_dgdn = -(4.0 * e / ((1.0 - m) * rbar ** 3) * b + 2.0 * nr * k / rbar)
    return w_g, w_dgdn
