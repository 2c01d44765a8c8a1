"""Point-to-face proximity predicates and the exact-distance referee.

A point counts as near a triangle when it falls in the union of three balls
centered on the vertices, three finite cylinders along the edges (clipped by
the planes through the edge endpoints), and the triangular prism of
half-thickness equal to the near-wall radius along the face normal. In 2D
this degenerates to two disks plus an edge-aligned rectangle.

Predicate arithmetic runs in single precision throughout (scalar and batch
variants share the exact same operation sequence, so their results are
bitwise identical). The referee ``exact_point_triangle_distance`` is an
independent double-precision closest-point computation over the triangle's
vertex/edge/interior regions and never touches the predicate code.
"""

import math

import numpy as np

from .errors import InvalidParameterError

F32 = np.float32

# relative tolerance band (vs. max(1, coordinate scale)) inside which the
# single-precision predicate may legitimately disagree with the referee
BOUNDARY_BAND = 1e-4

_DEGEN_REL = 1e-12


def _f32(p, dim):
    a = np.asarray(p, dtype=np.float32).reshape(-1)
    if a.shape[0] != dim:
        raise InvalidParameterError(f"expected {dim} components, got {a.shape[0]}")
    return a


def check_near_triangle(x_p, v1, v2, v3, d_spec):
    """True iff ``x_p`` lies within ``d_spec`` of the closed triangle (3D).

    Sub-regions are tested in order: vertex balls and clipped edge cylinders
    per edge, then the prism slab bounded by the two planes offset from the
    face along the unit normal. Squared lengths are compared against
    ``d_spec**2``; the normal offset uses ``d_spec`` itself.
    """
    if d_spec <= 0:
        raise InvalidParameterError(f"near-wall distance must be positive, got {d_spec}")
    p = _f32(x_p, 3)
    v = [_f32(v1, 3), _f32(v2, 3), _f32(v3, 3)]
    _reject_degenerate_triangle(v[0], v[1], v[2])

    d = F32(d_spec)
    r_sq = d * d
    px, py, pz = p

    ehat = []
    for k in range(3):
        ax, ay, az = v[k]
        bx, by, bz = v[(k + 1) % 3]
        # vertex ball
        wx, wy, wz = ax - px, ay - py, az - pz
        if wx * wx + wy * wy + wz * wz <= r_sq:
            return True
        ex, ey, ez = bx - ax, by - ay, bz - az
        el2 = ex * ex + ey * ey + ez * ez
        elen = np.sqrt(el2)
        ehx, ehy, ehz = ex / elen, ey / elen, ez / elen
        ehat.append((ehx, ehy, ehz))
        # squared point-line distance via the cross-product formula
        cx = ey * wz - ez * wy
        cy = ez * wx - ex * wz
        cz = ex * wy - ey * wx
        d2 = (cx * cx + cy * cy + cz * cz) / el2
        # clip between the endpoint planes
        de1 = -(wx * ehx + wy * ehy + wz * ehz)
        de2 = (bx - px) * ehx + (by - py) * ehy + (bz - pz) * ehz
        if d2 <= r_sq and de1 >= 0 and de2 >= 0:
            return True

    nx, ny, nz, _ = _unit_normal_f32(v[0], v[1], v[2])
    # prism interior: inward edge-plane half-spaces (n x e points into the
    # triangle for either winding, since n derives from the same vertex order)
    inside = True
    for k in range(3):
        ehx, ehy, ehz = ehat[k]
        wkx = ny * ehz - nz * ehy
        wky = nz * ehx - nx * ehz
        wkz = nx * ehy - ny * ehx
        ax, ay, az = v[k]
        if (px - ax) * wkx + (py - ay) * wky + (pz - az) * wkz < 0:
            inside = False
            break
    if not inside:
        return False
    # slab between the two planes offset by d_spec along the normal
    ax, ay, az = v[0]
    lo = -((ax - d * nx - px) * nx + (ay - d * ny - py) * ny + (az - d * nz - pz) * nz)
    hi = (ax + d * nx - px) * nx + (ay + d * ny - py) * ny + (az + d * nz - pz) * nz
    return bool(lo >= 0 and hi >= 0)


def check_near_edge(x_p, v1, v2, d_spec):
    """True iff ``x_p`` lies within ``d_spec`` of the closed segment (2D).

    Union of two disks centered on the endpoints and the rectangle aligned
    length-wise with the edge.
    """
    if d_spec <= 0:
        raise InvalidParameterError(f"near-wall distance must be positive, got {d_spec}")
    p = _f32(x_p, 2)
    a = _f32(v1, 2)
    b = _f32(v2, 2)
    if np.array_equal(a, b):
        raise InvalidParameterError("degenerate edge: identical endpoints")

    d = F32(d_spec)
    r_sq = d * d
    px, py = p
    ax, ay = a
    bx, by = b
    for cx, cy in ((ax, ay), (bx, by)):
        dx, dy = cx - px, cy - py
        if dx * dx + dy * dy <= r_sq:
            return True
    ex, ey = bx - ax, by - ay
    el2 = ex * ex + ey * ey
    elen = np.sqrt(el2)
    ehx, ehy = ex / elen, ey / elen
    wx, wy = ax - px, ay - py
    cross = ex * wy - ey * wx
    d2 = (cross * cross) / el2
    de1 = -(wx * ehx + wy * ehy)
    de2 = (bx - px) * ehx + (by - py) * ehy
    return bool(d2 <= r_sq and de1 >= 0 and de2 >= 0)


def _unit_normal_f32(a, b, c):
    ux, uy, uz = b[0] - a[0], b[1] - a[1], b[2] - a[2]
    vx, vy, vz = c[0] - a[0], c[1] - a[1], c[2] - a[2]
    nx = uy * vz - uz * vy
    ny = uz * vx - ux * vz
    nz = ux * vy - uy * vx
    nlen = np.sqrt(nx * nx + ny * ny + nz * nz)
    return nx / nlen, ny / nlen, nz / nlen, nlen


def _reject_degenerate_triangle(a, b, c):
    u = np.asarray(b, np.float64) - np.asarray(a, np.float64)
    v = np.asarray(c, np.float64) - np.asarray(a, np.float64)
    w = np.asarray(c, np.float64) - np.asarray(b, np.float64)
    scale_sq = max(u @ u, v @ v, w @ w)
    cr = np.cross(u, v)
    if scale_sq == 0.0 or math.sqrt(cr @ cr) < _DEGEN_REL * scale_sq:
        raise InvalidParameterError("degenerate triangle (zero area within working precision)")


# ---------------------------------------------------------------------------
# Batch kernels (single precision, broadcastable)
#
# The operation sequence mirrors the scalar predicates exactly so that the
# serial and data-parallel execution paths cannot diverge, not even in the
# last bit. Faces come in as structure-of-arrays slices of a
# CoordListGeometry ``coords`` array.
# ---------------------------------------------------------------------------


def near_triangle_mask(px, py, pz, tri, d_spec):
    """Vectorized triangle predicate.

    px/py/pz: point components, broadcastable against the face axis.
    tri: float32 array (3 vertex slots, 3 components, n_faces).
    d_spec may be a scalar or an array broadcastable likewise.
    Returns a boolean array over the broadcast shape.
    """
    d = np.asarray(d_spec, dtype=np.float32)
    r_sq = d * d
    hit = None
    ehat = []
    for k in range(3):
        ax, ay, az = tri[k, 0], tri[k, 1], tri[k, 2]
        bx, by, bz = tri[(k + 1) % 3, 0], tri[(k + 1) % 3, 1], tri[(k + 1) % 3, 2]
        wx, wy, wz = ax - px, ay - py, az - pz
        sphere = wx * wx + wy * wy + wz * wz <= r_sq
        ex, ey, ez = bx - ax, by - ay, bz - az
        el2 = ex * ex + ey * ey + ez * ez
        elen = np.sqrt(el2)
        ehx, ehy, ehz = ex / elen, ey / elen, ez / elen
        ehat.append((ehx, ehy, ehz))
        cx = ey * wz - ez * wy
        cy = ez * wx - ex * wz
        cz = ex * wy - ey * wx
        d2 = (cx * cx + cy * cy + cz * cz) / el2
        de1 = -(wx * ehx + wy * ehy + wz * ehz)
        de2 = (bx - px) * ehx + (by - py) * ehy + (bz - pz) * ehz
        cyl = (d2 <= r_sq) & (de1 >= 0) & (de2 >= 0)
        part = sphere | cyl
        hit = part if hit is None else (hit | part)

    nx, ny, nz = _unit_normals_batch(tri)
    inside = None
    for k in range(3):
        ehx, ehy, ehz = ehat[k]
        wkx = ny * ehz - nz * ehy
        wky = nz * ehx - nx * ehz
        wkz = nx * ehy - ny * ehx
        ax, ay, az = tri[k, 0], tri[k, 1], tri[k, 2]
        half = (px - ax) * wkx + (py - ay) * wky + (pz - az) * wkz >= 0
        inside = half if inside is None else (inside & half)
    ax, ay, az = tri[0, 0], tri[0, 1], tri[0, 2]
    lo = -((ax - d * nx - px) * nx + (ay - d * ny - py) * ny + (az - d * nz - pz) * nz)
    hi = (ax + d * nx - px) * nx + (ay + d * ny - py) * ny + (az + d * nz - pz) * nz
    prism = inside & (lo >= 0) & (hi >= 0)
    return hit | prism


def near_edge_mask(px, py, edges, d_spec):
    """Vectorized 2D edge predicate; edges: float32 (2, 2, n_faces)."""
    d = np.asarray(d_spec, dtype=np.float32)
    r_sq = d * d
    ax, ay = edges[0, 0], edges[0, 1]
    bx, by = edges[1, 0], edges[1, 1]
    d1x, d1y = ax - px, ay - py
    d2x, d2y = bx - px, by - py
    disks = (d1x * d1x + d1y * d1y <= r_sq) | (d2x * d2x + d2y * d2y <= r_sq)
    ex, ey = bx - ax, by - ay
    el2 = ex * ex + ey * ey
    elen = np.sqrt(el2)
    ehx, ehy = ex / elen, ey / elen
    wx, wy = ax - px, ay - py
    cross = ex * wy - ey * wx
    d2 = (cross * cross) / el2
    de1 = -(wx * ehx + wy * ehy)
    de2 = (bx - px) * ehx + (by - py) * ehy
    rect = (d2 <= r_sq) & (de1 >= 0) & (de2 >= 0)
    return disks | rect


def _unit_normals_batch(tri):
    ux, uy, uz = tri[1, 0] - tri[0, 0], tri[1, 1] - tri[0, 1], tri[1, 2] - tri[0, 2]
    vx, vy, vz = tri[2, 0] - tri[0, 0], tri[2, 1] - tri[0, 1], tri[2, 2] - tri[0, 2]
    nx = uy * vz - uz * vy
    ny = uz * vx - ux * vz
    nz = ux * vy - uy * vx
    nlen = np.sqrt(nx * nx + ny * ny + nz * nz)
    return nx / nlen, ny / nlen, nz / nlen


def near_faces_mask(px, py, pz, coords, d_spec):
    """Dimension dispatcher for the batch predicates (pz ignored in 2D)."""
    if coords.shape[0] == 2:
        return near_edge_mask(px, py, coords, d_spec)
    return near_triangle_mask(px, py, pz, coords, d_spec)


# ---------------------------------------------------------------------------
# Exact-distance referee (double precision, independent code path)
# ---------------------------------------------------------------------------


def point_segment_distance_sq(x_p, a, b):
    """Squared distance from a point to the closed segment [a, b], float64."""
    p = np.asarray(x_p, dtype=np.float64).reshape(-1)
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    e = b - a
    el2 = float(e @ e)
    if el2 == 0.0:
        raise InvalidParameterError("degenerate segment: identical endpoints")
    t = float((p - a) @ e) / el2
    t = min(1.0, max(0.0, t))
    d = p - (a + t * e)
    return float(d @ d)


def exact_point_triangle_distance(x_p, v1, v2, v3):
    """Distance from a point to the closed triangle, double precision.

    Classifies the closest-point region (vertex, edge, or interior) from the
    barycentric sign pattern and evaluates the distance to that region
    directly. Pure Python float arithmetic; serves as the brute-force
    referee for ``check_near_triangle``.
    """
    px, py, pz = (float(c) for c in np.asarray(x_p, dtype=np.float64).reshape(3))
    ax, ay, az = (float(c) for c in np.asarray(v1, dtype=np.float64).reshape(3))
    bx, by, bz = (float(c) for c in np.asarray(v2, dtype=np.float64).reshape(3))
    cx, cy, cz = (float(c) for c in np.asarray(v3, dtype=np.float64).reshape(3))

    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    bcx, bcy, bcz = cx - bx, cy - by, cz - bz
    scale_sq = max(
        abx * abx + aby * aby + abz * abz,
        acx * acx + acy * acy + acz * acz,
        bcx * bcx + bcy * bcy + bcz * bcz,
    )
    crx = aby * acz - abz * acy
    cry = abz * acx - abx * acz
    crz = abx * acy - aby * acx
    if scale_sq == 0.0 or math.sqrt(crx * crx + cry * cry + crz * crz) < _DEGEN_REL * scale_sq:
        raise InvalidParameterError("degenerate triangle (zero area within working precision)")

    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return math.sqrt(apx * apx + apy * apy + apz * apz)

    bpx, bpy, bpz = px - bx, py - by, pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return math.sqrt(bpx * bpx + bpy * bpy + bpz * bpz)

    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        t = d1 / (d1 - d3)
        qx, qy, qz = apx - t * abx, apy - t * aby, apz - t * abz
        return math.sqrt(qx * qx + qy * qy + qz * qz)

    cpx, cpy, cpz = px - cx, py - cy, pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return math.sqrt(cpx * cpx + cpy * cpy + cpz * cpz)

    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        t = d2 / (d2 - d6)
        qx, qy, qz = apx - t * acx, apy - t * acy, apz - t * acz
        return math.sqrt(qx * qx + qy * qy + qz * qz)

    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        qx, qy, qz = bpx - t * bcx, bpy - t * bcy, bpz - t * bcz
        return math.sqrt(qx * qx + qy * qy + qz * qz)

    # interior: distance along the plane normal
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    qx = apx - (v * abx + w * acx)
    qy = apy - (v * aby + w * acy)
    qz = apz - (v * abz + w * acz)
    return math.sqrt(qx * qx + qy * qy + qz * qz)


def min_distance_sq_to_edges(points, coords):
    """Min squared distance from each point to any edge, float64, vectorized.

    points: (n, 2) array; coords: (2, 2, n_faces) float32 edge list.
    Brute-force oracle used by the validation suite; independent of the
    single-precision predicates.
    """
    p = np.asarray(points, dtype=np.float64)
    a = coords[0].astype(np.float64).T  # (F, 2)
    b = coords[1].astype(np.float64).T
    e = b - a
    el2 = np.einsum("fd,fd->f", e, e)
    if np.any(el2 == 0.0):
        raise InvalidParameterError("degenerate segment: identical endpoints")
    best = np.full(len(p), np.inf)
    chunk = max(1, int(4e6 // max(1, len(a))))
    for s in range(0, len(p), chunk):
        q = p[s : s + chunk]  # (c, 2)
        ap = q[:, None, :] - a[None, :, :]  # (c, F, 2)
        t = np.clip(np.einsum("cfd,fd->cf", ap, e) / el2, 0.0, 1.0)
        diff = ap - t[:, :, None] * e[None, :, :]
        dist = np.einsum("cfd,cfd->cf", diff, diff)
        best[s : s + chunk] = dist.min(axis=1)
    return best


def boundary_band(d_spec, coords_scale):
    """Half-width of the referee exemption band: 1e-4 * max(1, scale)."""
    return BOUNDARY_BAND * max(1.0, float(coords_scale))
