"""Body mesh generators: test primitives and the shipped mannequin.

The mannequin is a union of 12 capsules at average-female proportions,
surfaced with marching cubes so the result is watertight. Axes are y-up,
units centimeters, feet near y=0.
"""

from __future__ import annotations

import math

import numpy as np

# (ax, ay, az, bx, by, bz, radius) per capsule
MANNEQUIN_CAPSULES: tuple[tuple[float, ...], ...] = (
    (0, 149, 0, 0, 157, 0, 8.5),  # head
    (0, 138, 0, 0, 149, 0, 5.0),  # neck
    (-16, 130, 0, 16, 130, 0, 6.5),  # shoulder bar
    (0, 119, 0, 0, 133, 0, 14.0),  # chest
    (0, 90, 0, 0, 101, 0, 14.5),  # pelvis
    (-4.5, 93, 0, 4.5, 93, 0, 14.5),  # hip widener
    (-20, 131, 0, -47, 129, 0, 4.2),  # left arm (T pose)
    (20, 131, 0, 47, 129, 0, 4.2),  # right arm
    (-12, 92, 0, -12, 50, 0, 6.5),  # left thigh
    (12, 92, 0, 12, 50, 0, 6.5),  # right thigh
    (-12, 50, 0, -12, 7, 0, 4.75),  # left shin
    (12, 50, 0, 12, 7, 0, 4.75),  # right shin
)


def capsule_sdf(points: np.ndarray, a, b, radius: float) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ab = b - a
    denom = float(ab @ ab)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0) if denom > 0 else np.zeros(len(points))
    closest = a + t[:, None] * ab
    return np.linalg.norm(points - closest, axis=1) - radius


def mannequin_sdf(points: np.ndarray) -> np.ndarray:
    d = np.full(len(points), np.inf)
    for ax, ay, az, bx, by, bz, r in MANNEQUIN_CAPSULES:
        d = np.minimum(d, capsule_sdf(points, (ax, ay, az), (bx, by, bz), r))
    return d


def _signed_volume(vertices: np.ndarray, triangles: np.ndarray) -> float:
    p = vertices[triangles]
    return float(np.sum(np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2]))) / 6.0)


def make_mannequin(grid: float = 1.25) -> tuple[np.ndarray, np.ndarray]:
    """Marching-cubes surface of the capsule union; outward CCW orientation."""
    from skimage import measure

    pad = 3.0
    lo = np.array([-52.0, 0.0 - pad, -18.0])
    hi = np.array([52.0, 166.0 + pad, 18.0])
    nx, ny, nz = (np.ceil((hi - lo) / grid).astype(int) + 1)
    xs = lo[0] + grid * np.arange(nx)
    ys = lo[1] + grid * np.arange(ny)
    zs = lo[2] + grid * np.arange(nz)
    pts = np.stack(np.meshgrid(xs, ys, zs, indexing="ij"), axis=-1).reshape(-1, 3)
    volume = mannequin_sdf(pts).reshape(nx, ny, nz)
    verts, faces, _, _ = measure.marching_cubes(volume, level=0.0, spacing=(grid, grid, grid))
    verts = verts + lo
    if _signed_volume(verts, faces) < 0:
        faces = faces[:, [0, 2, 1]]
    return verts.astype(np.float64), faces.astype(np.int64)


def make_sphere(center, radius: float, n_lat: int = 64, n_lon: int = 128) -> tuple[np.ndarray, np.ndarray]:
    """Watertight UV sphere with outward normals."""
    center = np.asarray(center, dtype=np.float64)
    verts = [center + (0.0, radius, 0.0)]
    for i in range(1, n_lat):
        theta = math.pi * i / n_lat
        y = radius * math.cos(theta)
        r = radius * math.sin(theta)
        for j in range(n_lon):
            phi = 2.0 * math.pi * j / n_lon
            verts.append(center + (r * math.cos(phi), y, r * math.sin(phi)))
    verts.append(center + (0.0, -radius, 0.0))
    south = len(verts) - 1

    def ring(i: int, j: int) -> int:
        return 1 + (i - 1) * n_lon + (j % n_lon)

    faces = []
    for j in range(n_lon):
        faces.append((0, ring(1, j + 1), ring(1, j)))
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            faces.append((a, b, d))
            faces.append((a, d, c))
    for j in range(n_lon):
        faces.append((south, ring(n_lat - 1, j), ring(n_lat - 1, j + 1)))
    v = np.asarray(verts, dtype=np.float64)
    f = np.asarray(faces, dtype=np.int64)
    if _signed_volume(v, f) < 0:
        f = f[:, [0, 2, 1]]
    return v, f


def make_capped_cylinder(
    base_center,
    radius: float,
    height: float,
    n_around: int = 128,
    n_height: int = 32,
    n_cap_rings: int = 8,
) -> tuple[np.ndarray, np.ndarray]:
    """Watertight vertical cylinder: lateral wall plus flat top/bottom caps."""
    cx, cy, cz = (float(c) for c in base_center)
    verts: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []

    def lateral(i: int, j: int) -> int:
        return i * n_around + (j % n_around)

    for i in range(n_height + 1):
        y = cy + height * i / n_height
        for j in range(n_around):
            phi = 2.0 * math.pi * j / n_around
            verts.append((cx + radius * math.cos(phi), y, cz + radius * math.sin(phi)))
    for i in range(n_height):
        for j in range(n_around):
            a, b = lateral(i, j), lateral(i, j + 1)
            c, d = lateral(i + 1, j), lateral(i + 1, j + 1)
            faces.append((a, b, d))
            faces.append((a, d, c))

    for top in (False, True):
        y = cy + (height if top else 0.0)
        rim_row = n_height if top else 0
        prev_ring = [lateral(rim_row, j) for j in range(n_around)]
        for k in range(n_cap_rings - 1, 0, -1):
            r = radius * k / n_cap_rings
            start = len(verts)
            for j in range(n_around):
                phi = 2.0 * math.pi * j / n_around
                verts.append((cx + r * math.cos(phi), y, cz + r * math.sin(phi)))
            ring_ids = [start + j for j in range(n_around)]
            for j in range(n_around):
                a, b = prev_ring[j], prev_ring[(j + 1) % n_around]
                c, d = ring_ids[j], ring_ids[(j + 1) % n_around]
                if top:
                    faces.append((a, b, d))
                    faces.append((a, d, c))
                else:
                    faces.append((a, d, b))
                    faces.append((a, c, d))
            prev_ring = ring_ids
        center_id = len(verts)
        verts.append((cx, y, cz))
        for j in range(n_around):
            a, b = prev_ring[j], prev_ring[(j + 1) % n_around]
            if top:
                faces.append((a, b, center_id))
            else:
                faces.append((a, center_id, b))

    v = np.asarray(verts, dtype=np.float64)
    f = np.asarray(faces, dtype=np.int64)
    if _signed_volume(v, f) < 0:
        f = f[:, [0, 2, 1]]
    return v, f


def make_tube(center, radius: float, y_min: float, y_max: float, n_around: int = 96, n_height: int = 24):
    """Open cylinder surface (no caps), outward normals; a scan fixture."""
    cx, _, cz = (float(c) for c in center)
    verts = []
    for i in range(n_height + 1):
        y = y_min + (y_max - y_min) * i / n_height
        for j in range(n_around):
            phi = 2.0 * math.pi * j / n_around
            verts.append((cx + radius * math.cos(phi), y, cz + radius * math.sin(phi)))
    faces = []
    for i in range(n_height):
        for j in range(n_around):
            a = i * n_around + j
            b = i * n_around + (j + 1) % n_around
            c = (i + 1) * n_around + j
            d = (i + 1) * n_around + (j + 1) % n_around
            faces.append((a, b, d))
            faces.append((a, d, c))
    v = np.asarray(verts, dtype=np.float64)
    f = np.asarray(faces, dtype=np.int64)
    # outward check: first face normal should point away from the axis
    p = v[f[0]]
    n = np.cross(p[1] - p[0], p[2] - p[0])
    mid = p.mean(axis=0) - (cx, p.mean(axis=0)[1], cz)
    if float(n @ mid) < 0:
        f = f[:, [0, 2, 1]]
    return v, f


def sphere_signed_distance(points: np.ndarray, center, radius: float) -> np.ndarray:
    """Analytic oracle for the sphere fixture."""
    return np.linalg.norm(points - np.asarray(center, dtype=np.float64), axis=1) - radius


def capped_cylinder_signed_distance(points: np.ndarray, base_center, radius: float, height: float) -> np.ndarray:
    """Analytic oracle for the capped-cylinder fixture."""
    p = points - np.asarray(base_center, dtype=np.float64)
    radial = np.linalg.norm(p[:, [0, 2]], axis=1) - radius
    axial = np.maximum(-p[:, 1], p[:, 1] - height)
    outside = np.linalg.norm(
        np.stack([np.maximum(radial, 0.0), np.maximum(axial, 0.0)], axis=1), axis=1
    )
    inside = np.minimum(np.maximum(radial, axial), 0.0)
    return outside + inside
