"""Numba kernels for ray casting and closest-point queries over a flat BVH.

The BVH is a deterministic median-split tree stored as struct-of-arrays so
the traversal kernels compile once and stay allocation-free. Construction
happens in numpy (it runs once per scene); the per-ray work is JIT compiled.
"""

import numpy as np
from numba import njit

# Minimum ray parameter accepted as a hit: avoids self-hits when casting
# from points that lie on scene geometry.
INTERSECT_EPS = 1e-6

# Möller-Trumbore determinant cutoff: below this the ray is treated as
# parallel to the triangle plane.
PARALLEL_EPS = 1e-12

LEAF_SIZE = 4


def build_bvh_arrays(v0: np.ndarray, v1: np.ndarray, v2: np.ndarray):
    """Build a median-split BVH over triangles given by corner arrays (T,3).

    Returns (node_bbox_min, node_bbox_max, node_left, node_right,
    node_start, node_count, prim_order). Internal nodes have left/right >= 0
    and start == -1; leaves index a contiguous slice of prim_order.
    Construction is deterministic for identical input.
    """
    n = v0.shape[0]
    tri_min = np.minimum(np.minimum(v0, v1), v2)
    tri_max = np.maximum(np.maximum(v0, v1), v2)
    centroid = (v0 + v1 + v2) / 3.0

    order = np.arange(n, dtype=np.int32)
    max_nodes = max(1, 2 * n)
    node_bbox_min = np.empty((max_nodes, 3), dtype=np.float64)
    node_bbox_max = np.empty((max_nodes, 3), dtype=np.float64)
    node_left = np.full(max_nodes, -1, dtype=np.int32)
    node_right = np.full(max_nodes, -1, dtype=np.int32)
    node_start = np.full(max_nodes, -1, dtype=np.int32)
    node_count = np.zeros(max_nodes, dtype=np.int32)

    cursor = 1
    stack = [(0, 0, n)]
    while stack:
        node, lo, hi = stack.pop()
        idx = order[lo:hi]
        node_bbox_min[node] = tri_min[idx].min(axis=0)
        node_bbox_max[node] = tri_max[idx].max(axis=0)
        if hi - lo <= LEAF_SIZE:
            node_start[node] = lo
            node_count[node] = hi - lo
            continue
        c = centroid[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        key = np.argsort(c[:, axis], kind="stable")
        order[lo:hi] = idx[key]
        mid = lo + (hi - lo) // 2
        left, right = cursor, cursor + 1
        cursor += 2
        node_left[node] = left
        node_right[node] = right
        stack.append((right, mid, hi))
        stack.append((left, lo, mid))

    return (
        np.ascontiguousarray(node_bbox_min[:cursor]),
        np.ascontiguousarray(node_bbox_max[:cursor]),
        node_left[:cursor].copy(),
        node_right[:cursor].copy(),
        node_start[:cursor].copy(),
        node_count[:cursor].copy(),
        order,
    )


@njit(cache=True, inline="always")
def _aabb_hit(bmin, bmax, ox, oy, oz, dx, dy, dz, t_max):
    tmin = 0.0
    tmax = t_max
    if dx != 0.0:
        inv = 1.0 / dx
        t1 = (bmin[0] - ox) * inv
        t2 = (bmax[0] - ox) * inv
        if t1 > t2:
            t1, t2 = t2, t1
        if t1 > tmin:
            tmin = t1
        if t2 < tmax:
            tmax = t2
        if tmin > tmax:
            return False
    elif ox < bmin[0] or ox > bmax[0]:
        return False
    if dy != 0.0:
        inv = 1.0 / dy
        t1 = (bmin[1] - oy) * inv
        t2 = (bmax[1] - oy) * inv
        if t1 > t2:
            t1, t2 = t2, t1
        if t1 > tmin:
            tmin = t1
        if t2 < tmax:
            tmax = t2
        if tmin > tmax:
            return False
    elif oy < bmin[1] or oy > bmax[1]:
        return False
    if dz != 0.0:
        inv = 1.0 / dz
        t1 = (bmin[2] - oz) * inv
        t2 = (bmax[2] - oz) * inv
        if t1 > t2:
            t1, t2 = t2, t1
        if t1 > tmin:
            tmin = t1
        if t2 < tmax:
            tmax = t2
        if tmin > tmax:
            return False
    elif oz < bmin[2] or oz > bmax[2]:
        return False
    return True


@njit(cache=True)
def raycast_kernel(
    node_bbox_min,
    node_bbox_max,
    node_left,
    node_right,
    node_start,
    node_count,
    prim_order,
    tri_v0,
    tri_e1,
    tri_e2,
    tri_mesh,
    tri_local,
    origins,
    dirs,
    t_mins,
    out_t,
    out_tri,
    out_u,
    out_v,
):
    """Nearest-hit cast for a batch of rays.

    out_tri receives the global triangle index or -1 on miss; out_u/out_v
    are the Möller-Trumbore barycentric parameters (weights of corners 1
    and 2). Ties on t break by (mesh id, local triangle id).
    """
    stack = np.empty(128, dtype=np.int32)
    for r in range(origins.shape[0]):
        ox = origins[r, 0]
        oy = origins[r, 1]
        oz = origins[r, 2]
        dx = dirs[r, 0]
        dy = dirs[r, 1]
        dz = dirs[r, 2]
        t_min = t_mins[r]

        best_t = np.inf
        best_tri = -1
        best_mesh = 2147483647
        best_local = 2147483647
        best_u = 0.0
        best_v = 0.0

        stack[0] = 0
        sp = 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            if not _aabb_hit(
                node_bbox_min[node], node_bbox_max[node], ox, oy, oz, dx, dy, dz, best_t
            ):
                continue
            left = node_left[node]
            if left < 0:
                start = node_start[node]
                for k in range(start, start + node_count[node]):
                    ti = prim_order[k]
                    e1x = tri_e1[ti, 0]
                    e1y = tri_e1[ti, 1]
                    e1z = tri_e1[ti, 2]
                    e2x = tri_e2[ti, 0]
                    e2y = tri_e2[ti, 1]
                    e2z = tri_e2[ti, 2]
                    px = dy * e2z - dz * e2y
                    py = dz * e2x - dx * e2z
                    pz = dx * e2y - dy * e2x
                    det = e1x * px + e1y * py + e1z * pz
                    if det > -PARALLEL_EPS and det < PARALLEL_EPS:
                        continue
                    inv_det = 1.0 / det
                    tx = ox - tri_v0[ti, 0]
                    ty = oy - tri_v0[ti, 1]
                    tz = oz - tri_v0[ti, 2]
                    u = (tx * px + ty * py + tz * pz) * inv_det
                    if u < 0.0 or u > 1.0:
                        continue
                    qx = ty * e1z - tz * e1y
                    qy = tz * e1x - tx * e1z
                    qz = tx * e1y - ty * e1x
                    v = (dx * qx + dy * qy + dz * qz) * inv_det
                    if v < 0.0 or u + v > 1.0:
                        continue
                    t = (e2x * qx + e2y * qy + e2z * qz) * inv_det
                    if t < t_min:
                        continue
                    m = tri_mesh[ti]
                    l = tri_local[ti]
                    if t < best_t or (
                        t == best_t
                        and (m < best_mesh or (m == best_mesh and l < best_local))
                    ):
                        best_t = t
                        best_tri = ti
                        best_mesh = m
                        best_local = l
                        best_u = u
                        best_v = v
            else:
                stack[sp] = node_right[node]
                sp += 1
                stack[sp] = left
                sp += 1

        out_t[r] = best_t
        out_tri[r] = best_tri
        out_u[r] = best_u
        out_v[r] = best_v


@njit(cache=True, inline="always")
def _point_bbox_dist_sq(bmin, bmax, qx, qy, qz):
    d = 0.0
    if qx < bmin[0]:
        e = bmin[0] - qx
        d += e * e
    elif qx > bmax[0]:
        e = qx - bmax[0]
        d += e * e
    if qy < bmin[1]:
        e = bmin[1] - qy
        d += e * e
    elif qy > bmax[1]:
        e = qy - bmax[1]
        d += e * e
    if qz < bmin[2]:
        e = bmin[2] - qz
        d += e * e
    elif qz > bmax[2]:
        e = qz - bmax[2]
        d += e * e
    return d


@njit(cache=True)
def _closest_on_triangle(ax, ay, az, bx, by, bz, cx, cy, cz, px, py, pz):
    """Closest point on triangle ABC to P (Ericson's region method)."""
    abx = bx - ax
    aby = by - ay
    abz = bz - az
    acx = cx - ax
    acy = cy - ay
    acz = cz - az
    apx = px - ax
    apy = py - ay
    apz = pz - az

    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az

    bpx = px - bx
    bpy = py - by
    bpz = pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz

    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        denom = d1 - d3
        w = d1 / denom if denom != 0.0 else 0.0
        return ax + w * abx, ay + w * aby, az + w * abz

    cpx = px - cx
    cpy = py - cy
    cpz = pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz

    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        denom = d2 - d6
        w = d2 / denom if denom != 0.0 else 0.0
        return ax + w * acx, ay + w * acy, az + w * acz

    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        denom = (d4 - d3) + (d5 - d6)
        w = (d4 - d3) / denom if denom != 0.0 else 0.0
        return bx + w * (cx - bx), by + w * (cy - by), bz + w * (cz - bz)

    denom = va + vb + vc
    if denom == 0.0:
        return ax, ay, az
    v = vb / denom
    w = vc / denom
    return (
        ax + v * abx + w * acx,
        ay + v * aby + w * acy,
        az + v * abz + w * acz,
    )


@njit(cache=True)
def closest_point_kernel(
    node_bbox_min,
    node_bbox_max,
    node_left,
    node_right,
    node_start,
    node_count,
    prim_order,
    tri_v0,
    tri_e1,
    tri_e2,
    queries,
    max_dist,
    out_point,
    out_dist,
    out_tri,
):
    """Closest surface point within max_dist for each query point.

    out_tri is -1 when nothing lies within max_dist.
    """
    stack = np.empty(128, dtype=np.int32)
    for r in range(queries.shape[0]):
        qx = queries[r, 0]
        qy = queries[r, 1]
        qz = queries[r, 2]
        best_sq = max_dist * max_dist
        best_tri = -1
        bpx = 0.0
        bpy = 0.0
        bpz = 0.0

        stack[0] = 0
        sp = 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            if (
                _point_bbox_dist_sq(node_bbox_min[node], node_bbox_max[node], qx, qy, qz)
                > best_sq
            ):
                continue
            left = node_left[node]
            if left < 0:
                start = node_start[node]
                for k in range(start, start + node_count[node]):
                    ti = prim_order[k]
                    ax = tri_v0[ti, 0]
                    ay = tri_v0[ti, 1]
                    az = tri_v0[ti, 2]
                    px, py, pz = _closest_on_triangle(
                        ax,
                        ay,
                        az,
                        ax + tri_e1[ti, 0],
                        ay + tri_e1[ti, 1],
                        az + tri_e1[ti, 2],
                        ax + tri_e2[ti, 0],
                        ay + tri_e2[ti, 1],
                        az + tri_e2[ti, 2],
                        qx,
                        qy,
                        qz,
                    )
                    dx = qx - px
                    dy = qy - py
                    dz = qz - pz
                    d_sq = dx * dx + dy * dy + dz * dz
                    if d_sq < best_sq or (d_sq == best_sq and best_tri >= 0 and ti < best_tri):
                        best_sq = d_sq
                        best_tri = ti
                        bpx = px
                        bpy = py
                        bpz = pz
            else:
                right = node_right[node]
                dl = _point_bbox_dist_sq(node_bbox_min[left], node_bbox_max[left], qx, qy, qz)
                dr = _point_bbox_dist_sq(node_bbox_min[right], node_bbox_max[right], qx, qy, qz)
                if dl < dr:
                    stack[sp] = right
                    sp += 1
                    stack[sp] = left
                    sp += 1
                else:
                    stack[sp] = left
                    sp += 1
                    stack[sp] = right
                    sp += 1

        out_point[r, 0] = bpx
        out_point[r, 1] = bpy
        out_point[r, 2] = bpz
        out_dist[r] = np.sqrt(best_sq)
        out_tri[r] = best_tri
