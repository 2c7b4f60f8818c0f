"""Numba inner loop for 3D collocation assembly.

One prange iteration owns one matrix row, so results are bit-identical for
any thread count. Elements within `near_factor` sizes of the collocation
node are integrated with the refined rule, the rest with the base rule.
"""

import numpy as np
from numba import njit, prange


@njit(parallel=True, cache=True)
def assemble_rows(x0, n0, use_inverse, xd,
                  bq_pts, bq_w, bq_n, bq_conn, bq_shape, bq_off,
                  rq_pts, rq_w, rq_n, rq_conn, rq_shape, rq_off,
                  centroids, sizes, near_factor,
                  cphi, cq):
    n_nodes = x0.shape[0]
    n_elems = centroids.shape[0]
    for i in prange(n_nodes):
        xi0, xi1, xi2 = x0[i, 0], x0[i, 1], x0[i, 2]
        nn0, nn1, nn2 = n0[i, 0], n0[i, 1], n0[i, 2]
        inv = use_inverse[i]
        rho0 = 0.0
        c_f = 0.0
        c_g = 0.0
        if inv:
            w0 = xi0 - xd[i, 0]
            w1 = xi1 - xd[i, 1]
            w2 = xi2 - xd[i, 2]
            rho0 = np.sqrt(w0 * w0 + w1 * w1 + w2 * w2)
            d = nn0 * w0 + nn1 * w1 + nn2 * w2
            c_f = rho0 * rho0 / d
            c_g = rho0 ** 3 / d
        diag_phi = 0.0
        diag_q = 0.0
        for e in range(n_elems):
            dc0 = centroids[e, 0] - xi0
            dc1 = centroids[e, 1] - xi1
            dc2 = centroids[e, 2] - xi2
            near = dc0 * dc0 + dc1 * dc1 + dc2 * dc2 <= (near_factor * sizes[e]) ** 2
            if near:
                g0, g1 = rq_off[e], rq_off[e + 1]
                pts, wts, nrm, conn, shp = rq_pts, rq_w, rq_n, rq_conn, rq_shape
            else:
                g0, g1 = bq_off[e], bq_off[e + 1]
                pts, wts, nrm, conn, shp = bq_pts, bq_w, bq_n, bq_conn, bq_shape
            for g in range(g0, g1):
                dx0 = pts[g, 0] - xi0
                dx1 = pts[g, 1] - xi1
                dx2 = pts[g, 2] - xi2
                r2 = dx0 * dx0 + dx1 * dx1 + dx2 * dx2
                r = np.sqrt(r2)
                gk = 1.0 / r
                dgdn = -(dx0 * nrm[g, 0] + dx1 * nrm[g, 1] + dx2 * nrm[g, 2]) / (r2 * r)
                if inv:
                    v0 = pts[g, 0] - xd[i, 0]
                    v1 = pts[g, 1] - xd[i, 1]
                    v2 = pts[g, 2] - xd[i, 2]
                    s2 = v0 * v0 + v1 * v1 + v2 * v2
                    s = np.sqrt(s2)
                    f = c_f * (1.0 - rho0 / s)
                    gdn = c_g * (v0 * nrm[g, 0] + v1 * nrm[g, 1] + v2 * nrm[g, 2]) / (s2 * s)
                else:
                    f = nn0 * dx0 + nn1 * dx1 + nn2 * dx2
                    gdn = nn0 * nrm[g, 0] + nn1 * nrm[g, 1] + nn2 * nrm[g, 2]
                w = wts[g]
                for k in range(conn.shape[1]):
                    j = conn[g, k]
                    cphi[i, j] += w * shp[g, k] * dgdn
                    cq[i, j] -= w * shp[g, k] * gk
                diag_phi -= w * dgdn
                diag_q += w * (gdn * gk - f * dgdn)
        cphi[i, i] += diag_phi
        cq[i, i] += diag_q
