"""Garment assembly and position-based cloth draping.

The solver is a deterministic position-based scheme: per frame it predicts
positions under gravity, then for a fixed number of iterations projects
stretch, bending, and stitch distance constraints (averaged Jacobi
accumulation, so the result is independent of constraint order) and pushes
vertices outside the body by the collision offset. Stitch rest lengths
anneal linearly to zero over the first fifth of the frame budget, which
draws the panels together without popping.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from numba import njit
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from . import geometry, meshio
from .model import PatternSpec

STITCH_LABEL = "stitch"

_EMPTY_PAIRS = np.empty((0, 2), dtype=np.int64)


class DrapeError(Exception):
    pass


@dataclass
class BodyModel:
    """Collision target: triangle mesh plus a centroid KD-tree."""

    vertices: np.ndarray
    triangles: np.ndarray
    _tree: cKDTree = field(init=False, repr=False)
    _tri_pts: np.ndarray = field(init=False, repr=False)
    _normals: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self._tri_pts = self.vertices[self.triangles]
        n = np.cross(
            self._tri_pts[:, 1] - self._tri_pts[:, 0],
            self._tri_pts[:, 2] - self._tri_pts[:, 0],
        )
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        norm[norm == 0] = 1.0
        self._normals = n / norm
        centroids = self._tri_pts.mean(axis=1)
        self._tree = cKDTree(centroids) if len(centroids) else cKDTree(np.zeros((1, 3)))
        if len(centroids):
            self._max_tri_radius = float(
                np.linalg.norm(self._tri_pts - centroids[:, None, :], axis=2).max()
            )
        else:
            self._max_tri_radius = 0.0
        self._warn_if_open()

    def _warn_if_open(self) -> None:
        if len(self.triangles) == 0:
            return
        edges = np.concatenate(
            [self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]]
        )
        und = np.sort(edges, axis=1)
        _, counts = np.unique(und, axis=0, return_counts=True)
        if np.any(counts != 2):
            warnings.warn("body mesh is not watertight; collision sign may be unreliable", stacklevel=3)

    @classmethod
    def load_obj(cls, path: str | Path) -> "BodyModel":
        vertices, triangles = meshio.read_obj(path)
        return cls(vertices, triangles)

    @property
    def empty(self) -> bool:
        return len(self.triangles) == 0

    def nearest(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Closest surface point, its face normal, and signed distance.

        Sign is positive outside (along the nearest face normal). The
        candidate set is every triangle whose centroid lies within the
        nearest-centroid distance plus the largest triangle radius, which
        provably contains the closest triangle; ties on exact distance are
        broken by triangle index. Both rules depend only on distances and
        indices, never on tree traversal order, so mirrored inputs give
        exactly mirrored results.
        """
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if self.empty or len(pts) == 0:
            inf = np.full(len(pts), np.inf)
            return pts.copy(), np.zeros_like(pts), inf
        k = min(16, len(self.triangles))
        _, idx = self._tree.query(pts, k=k, workers=-1)
        idx = idx.reshape(len(pts), k)
        cand = self._tri_pts[idx]
        flat = cand.reshape(-1, 3, 3)
        q = _closest_point_on_triangle(np.repeat(pts, k, axis=0), flat[:, 0], flat[:, 1], flat[:, 2])
        q = q.reshape(len(pts), k, 3)
        d2 = np.sum((q - pts[:, None, :]) ** 2, axis=2)
        mn = d2.min(axis=1, keepdims=True)
        masked = np.where(d2 == mn, idx, np.iinfo(np.int64).max)
        best_tri = masked.min(axis=1)
        best = np.argmax(masked == best_tri[:, None], axis=1)
        rows = np.arange(len(pts))
        closest = q[rows, best]
        face_normal = self._normals[best_tri]
        delta = pts - closest
        dist = np.sqrt(d2[rows, best])
        sign = np.where(np.einsum("ij,ij->i", delta, face_normal) >= 0.0, 1.0, -1.0)
        # Outward direction from the distance-field gradient: continuous
        # across faces sharing the closest edge or vertex, unlike the face
        # normal, so nearby queries cannot jump between projection targets.
        with np.errstate(invalid="ignore", divide="ignore"):
            grad = delta * (sign / np.where(dist > 1e-9, dist, 1.0))[:, None]
        on_surface = dist <= 1e-9
        if np.any(on_surface):
            grad[on_surface] = face_normal[on_surface]
        return closest, grad, sign * dist


def _closest_point_on_triangle(p, a, b, c):
    """Vectorized closest point on triangle (Ericson's region method)."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    result = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    def assign(mask, value):
        nonlocal done
        mask = mask & ~done
        if np.any(mask):
            result[mask] = value[mask]
            done = done | mask

    assign((d1 <= 0) & (d2 <= 0), a)
    assign((d3 >= 0) & (d4 <= d3), b)
    assign((d6 >= 0) & (d5 <= d6), c)

    vc = d1 * d4 - d3 * d2
    mask = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    denom = d1 - d3
    safe = np.where(denom != 0, denom, 1.0)
    assign(mask, a + ab * (d1 / safe)[:, None])

    vb = d5 * d2 - d1 * d6
    mask = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    denom = d2 - d6
    safe = np.where(denom != 0, denom, 1.0)
    assign(mask, a + ac * (d2 / safe)[:, None])

    va = d3 * d6 - d5 * d4
    mask = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
    denom = (d4 - d3) + (d5 - d6)
    safe = np.where(denom != 0, denom, 1.0)
    w = ((d4 - d3) / safe)[:, None]
    assign(mask, b + (c - b) * w)

    denom = va + vb + vc
    safe = np.where(denom != 0, denom, 1.0)
    v = (vb / safe)[:, None]
    w = (vc / safe)[:, None]
    assign(np.ones(len(p), dtype=bool), a + ab * v + ac * w)
    return result


@dataclass
class GarmentMesh:
    """Triangulated garment surface with per-vertex panel/stitch labels."""

    vertices: np.ndarray
    triangles: np.ndarray
    labels: list[str]

    def __post_init__(self) -> None:
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.labels) != len(self.vertices):
            raise ValueError("labels must cover every vertex")

    def copy_with(self, vertices: np.ndarray) -> "GarmentMesh":
        return GarmentMesh(vertices, self.triangles.copy(), list(self.labels))


@dataclass
class SimConfig:
    gravity: tuple[float, float, float] = (0.0, -981.0, 0.0)
    time_step: float = 1.0 / 60.0
    solver_iterations: int = 16
    stretch_stiffness: float = 1.0
    bend_stiffness: float = 0.35
    stitch_stiffness: float = 1.0
    collision_offset: float = 0.4
    max_frames: int = 360
    rest_threshold: float = 0.2
    damping: float = 0.12
    contact_friction: float = 1.0  # Coulomb factor for resting contacts
    strain_limit: float = 1.04  # hard cap on edge elongation; <=1 disables
    max_speed: float = 150.0  # cm/s cap against tunneling; <=0 disables
    cloth_thickness: float = 1.0  # self-separation radius, cm; <=0 disables

    def __post_init__(self) -> None:
        if self.time_step <= 0:
            raise ValueError("time_step must be positive")
        if self.solver_iterations < 1:
            raise ValueError("solver_iterations must be at least 1")
        if self.collision_offset <= 0:
            raise ValueError("collision_offset must be positive")


@dataclass
class SimReport:
    frames_run: int = 0
    converged: bool = False
    body_penetration_count: int = 0
    self_intersection_count: int = 0
    failed: bool = False
    diverged: bool = False
    mean_speed: float = 0.0


def _panel_to_3d(points2d: np.ndarray, rotation_deg, translation) -> np.ndarray:
    pts = np.column_stack([points2d, np.zeros(len(points2d))])
    rot = Rotation.from_euler("XYZ", rotation_deg, degrees=True)
    return rot.apply(pts) + np.asarray(translation, dtype=np.float64)


def assemble_garment(
    pattern: PatternSpec, resolution: float
) -> tuple[GarmentMesh, np.ndarray]:
    """Triangulate each panel, place it in 3D, and pair stitched vertices.

    Returns the merged mesh and an (n, 2) array of stitch vertex pairs.
    Pairing matches arc-length parameters; if the stored edge directions
    would join opposite corners (rotated panels), the second side is
    traversed backwards so that nearest endpoints meet.
    """
    meshes = {}
    offsets = {}
    all_vertices = []
    all_triangles = []
    labels: list[str] = []
    offset = 0
    for panel in pattern.panels:
        mesh2d = geometry.triangulate_panel(panel, resolution)
        pts3 = _panel_to_3d(mesh2d.vertices, panel.rotation, panel.translation)
        meshes[panel.name] = mesh2d
        offsets[panel.name] = offset
        all_vertices.append(pts3)
        all_triangles.append(mesh2d.triangles + offset)
        labels.extend([panel.name] * len(pts3))
        offset += len(pts3)
    vertices = np.concatenate(all_vertices, axis=0)
    triangles = np.concatenate(all_triangles, axis=0)

    pairs: list[tuple[int, int]] = []
    for stitch in pattern.stitches:
        side_a, side_b = stitch.sides
        len_a = geometry.edge_length(pattern.panel(side_a.panel), side_a.edge)
        len_b = geometry.edge_length(pattern.panel(side_b.panel), side_b.edge)
        if abs(len_a - len_b) > 0.2 * max(len_a, len_b):
            warnings.warn(
                f"stitched edges {side_a} and {side_b} differ in length by more than 20%"
                f" ({len_a:.2f} vs {len_b:.2f} cm); pairing by normalized arc length",
                stacklevel=2,
            )
        chain_a = [(offsets[side_a.panel] + vid, s) for vid, s in meshes[side_a.panel].edge_vertices[side_a.edge]]
        chain_b = [(offsets[side_b.panel] + vid, s) for vid, s in meshes[side_b.panel].edge_vertices[side_b.edge]]
        d_same = np.linalg.norm(vertices[chain_a[0][0]] - vertices[chain_b[0][0]]) + np.linalg.norm(
            vertices[chain_a[-1][0]] - vertices[chain_b[-1][0]]
        )
        d_flip = np.linalg.norm(vertices[chain_a[0][0]] - vertices[chain_b[-1][0]]) + np.linalg.norm(
            vertices[chain_a[-1][0]] - vertices[chain_b[0][0]]
        )
        if d_flip < d_same:
            chain_b = [(vid, 1.0 - s) for vid, s in reversed(chain_b)]
        if len(chain_a) == len(chain_b):
            matched = list(zip(chain_a, chain_b))
        else:
            short, long_ = (chain_a, chain_b) if len(chain_a) <= len(chain_b) else (chain_b, chain_a)
            long_s = np.array([s for _, s in long_])
            matched = []
            for vid, s in short:
                j = int(np.argmin(np.abs(long_s - s)))
                pair = ((vid, s), long_[j]) if short is chain_a else (long_[j], (vid, s))
                matched.append(pair)
        for (ia, _), (ib, _) in matched:
            pairs.append((ia, ib))
            labels[ia] = STITCH_LABEL
            labels[ib] = STITCH_LABEL

    pair_array = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return GarmentMesh(vertices, triangles, labels), pair_array


def _unique_edges(triangles: np.ndarray) -> np.ndarray:
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    return np.unique(np.sort(e, axis=1), axis=0)


def _bend_pairs(triangles: np.ndarray) -> np.ndarray:
    """Opposite-vertex pairs across every interior edge."""
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    opposite = np.concatenate([triangles[:, 2], triangles[:, 0], triangles[:, 1]])
    und = np.sort(e, axis=1)
    _, inverse, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)
    order = np.argsort(inverse, kind="stable")
    sorted_opp = opposite[order]
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    interior = counts == 2
    return np.stack(
        [sorted_opp[starts[interior]], sorted_opp[starts[interior] + 1]], axis=1
    ).astype(np.int64).reshape(-1, 2)


@njit(cache=True)
def _project_distance_gs(p, pairs, rest, stiffness):
    """Sequential Gauss-Seidel distance projection, in place.

    Fixed constraint order keeps results bitwise deterministic.
    """
    half = 0.5 * stiffness
    for c in range(pairs.shape[0]):
        i = pairs[c, 0]
        j = pairs[c, 1]
        dx = p[i, 0] - p[j, 0]
        dy = p[i, 1] - p[j, 1]
        dz = p[i, 2] - p[j, 2]
        dist = math.sqrt(dx * dx + dy * dy + dz * dz)
        if dist > 1e-12:
            s = half * (dist - rest[c]) / dist
            p[i, 0] -= s * dx
            p[i, 1] -= s * dy
            p[i, 2] -= s * dz
            p[j, 0] += s * dx
            p[j, 1] += s * dy
            p[j, 2] += s * dz


@njit(cache=True)
def _project_separation_gs(p, pairs, radius):
    """One-sided repulsion pushing closer-than-radius pairs apart."""
    for c in range(pairs.shape[0]):
        i = pairs[c, 0]
        j = pairs[c, 1]
        dx = p[i, 0] - p[j, 0]
        dy = p[i, 1] - p[j, 1]
        dz = p[i, 2] - p[j, 2]
        dist = math.sqrt(dx * dx + dy * dy + dz * dz)
        if 1e-12 < dist < radius:
            s = 0.5 * (dist - radius) / dist
            p[i, 0] -= s * dx
            p[i, 1] -= s * dy
            p[i, 2] -= s * dz
            p[j, 0] += s * dx
            p[j, 1] += s * dy
            p[j, 2] += s * dz


def _dress_phase_contacts(
    p: np.ndarray,
    rep: np.ndarray,
    rep_rows: np.ndarray,
    tri_rep: np.ndarray,
    radius: float,
) -> tuple[np.ndarray, np.ndarray]:
    """(vertex, triangle) candidates closer than radius, skipping triangles
    that share a welded vertex with the candidate."""
    tp = p[tri_rep]
    centroids = tp.mean(axis=1)
    tree = cKDTree(centroids)
    reach = radius + float(np.linalg.norm(tp - centroids[:, None, :], axis=2).max())
    k = min(6, len(tri_rep))
    dist, idx = tree.query(p[rep_rows], k=k, workers=-1)
    idx = idx.reshape(len(rep_rows), k)
    dist = dist.reshape(len(rep_rows), k)
    v_idx = np.repeat(rep_rows, k)
    t_idx = idx.ravel()
    near = dist.ravel() <= reach
    shares = (tri_rep[t_idx] == rep[v_idx][:, None]).any(axis=1)
    keep = near & ~shares
    return v_idx[keep], t_idx[keep]


def _project_vertex_face(p, v_idx, t_idx, tri_rep, radius) -> None:
    """Push vertices out to radius on whichever side of the face they are."""
    if len(v_idx) == 0:
        return
    tp = p[tri_rep[t_idx]]
    v = p[v_idx]
    q = _closest_point_on_triangle(v, tp[:, 0], tp[:, 1], tp[:, 2])
    delta = v - q
    dist = np.linalg.norm(delta, axis=1)
    inside = (dist < radius) & (dist > 1e-9)
    if np.any(inside):
        rows = v_idx[inside]
        p[rows] = q[inside] + delta[inside] * (radius / dist[inside])[:, None]


@njit(cache=True)
def _limit_strain_gs(p, pairs, rest, limit, max_passes):
    """Clamp edge elongation to rest * limit; returns passes used.

    Keeps the cloth effectively inextensible under sustained load, which
    ordinary stiffness projection cannot guarantee.
    """
    for sweep in range(max_passes):
        violated = False
        for c in range(pairs.shape[0]):
            i = pairs[c, 0]
            j = pairs[c, 1]
            dx = p[i, 0] - p[j, 0]
            dy = p[i, 1] - p[j, 1]
            dz = p[i, 2] - p[j, 2]
            dist = math.sqrt(dx * dx + dy * dy + dz * dz)
            cap = rest[c] * limit
            if dist > cap and dist > 1e-12:
                violated = True
                s = 0.5 * (dist - cap) / dist
                p[i, 0] -= s * dx
                p[i, 1] -= s * dy
                p[i, 2] -= s * dz
                p[j, 0] += s * dx
                p[j, 1] += s * dy
                p[j, 2] += s * dz
        if not violated:
            return sweep
    return max_passes


def simulate(
    garment: GarmentMesh,
    pairs: np.ndarray,
    body: Optional[BodyModel],
    cfg: SimConfig,
    initial_positions: Optional[np.ndarray] = None,
) -> tuple[GarmentMesh, SimReport]:
    """Drape the assembled garment; labels pass through untouched.

    Rest lengths are measured on the assembled 3D mesh (identical to the 2D
    pattern lengths under the rigid lift), so a flat garment under zero
    gravity is bitwise stationary. `initial_positions` warm-starts the solve
    from a different state while keeping the assembled rest shape.
    """
    x = garment.vertices.copy() if initial_positions is None else np.array(initial_positions, dtype=np.float64)
    v = np.zeros_like(x)
    n = len(x)

    rest_state = garment.vertices
    edges = _unique_edges(garment.triangles)
    stretch_rest = np.linalg.norm(rest_state[edges[:, 0]] - rest_state[edges[:, 1]], axis=1)
    bends = _bend_pairs(garment.triangles)
    bend_rest = (
        np.linalg.norm(rest_state[bends[:, 0]] - rest_state[bends[:, 1]], axis=1)
        if len(bends)
        else np.zeros(0)
    )
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    stitch_rest0 = (
        np.linalg.norm(x[pairs[:, 0]] - x[pairs[:, 1]], axis=1) if len(pairs) else np.zeros(0)
    )
    anneal_frames = max(1, math.ceil(0.2 * cfg.max_frames)) if len(pairs) else 0
    # After annealing, paired vertices are welded into one degree of freedom,
    # exactly as a sewn seam behaves; a residual distance constraint would
    # leave a slit that limbs can poke through while the garment settles.
    rep = _vertex_representatives(n, pairs)
    welded = False
    rep_rows = np.nonzero(rep == np.arange(n))[0]
    tri_rep = rep[garment.triangles]
    # mesh-connected pairs are governed by stretch/bend, not separation
    connected = set(map(tuple, np.sort(rep[edges], axis=1).tolist()))
    if len(bends):
        connected |= set(map(tuple, np.sort(rep[bends], axis=1).tolist()))

    gravity = np.asarray(cfg.gravity, dtype=np.float64)
    dt = cfg.time_step
    report = SimReport()
    use_body = body is not None and not body.empty

    # Signed body distance is 1-Lipschitz in the vertex position, so a
    # cached value minus the distance moved since it was measured is a valid
    # lower bound; only vertices whose bound dips below the offset need a
    # fresh nearest-surface query.
    sd_bound = np.full(n, -np.inf)
    p_ref = x.copy()

    # gravity fades in after the dress phase so the release cannot jolt the
    # freshly sewn layers past each other
    ramp_frames = max(1, anneal_frames // 2)

    frame = 0
    for frame in range(1, cfg.max_frames + 1):
        # dress first, then release: gravity waits for the seams to close
        if frame > anneal_frames:
            v += gravity * min(1.0, (frame - anneal_frames) / ramp_frames) * dt
        v *= 1.0 - cfg.damping
        if cfg.max_speed > 0.0:
            speed = np.linalg.norm(v, axis=1)
            fast = speed > cfg.max_speed
            if np.any(fast):
                v[fast] *= (cfg.max_speed / speed[fast])[:, None]
        p = x + v * dt
        if not np.all(np.isfinite(p)) or float(np.abs(p).max(initial=0.0)) > 1e30:
            report.diverged = True
            report.failed = True
            report.frames_run = frame
            x = np.nan_to_num(x, nan=0.0, posinf=0.0, neginf=0.0)
            return garment.copy_with(x), report
        if len(pairs) and not welded and frame > anneal_frames:
            welded = True
            slaves = np.nonzero(rep != np.arange(n))[0]
            group_counts = np.bincount(rep, minlength=n).astype(np.float64)
            group_counts[group_counts == 0] = 1.0
            for arr in (p, v, x):
                for axis in range(3):
                    sums = np.bincount(rep, weights=arr[:, axis], minlength=n)
                    arr[:, axis] = (sums / group_counts)[rep]
            sd_bound = np.full(n, -np.inf)
            p_ref = p.copy()
            edges = rep[edges]
            keep = edges[:, 0] != edges[:, 1]
            edges, stretch_rest = edges[keep], stretch_rest[keep]
            if len(bends):
                bends = rep[bends]
                bkeep = bends[:, 0] != bends[:, 1]
                bends, bend_rest = bends[bkeep], bend_rest[bkeep]
        anneal = max(0.0, 1.0 - frame / anneal_frames) if anneal_frames else 0.0
        stitch_rest = stitch_rest0 * anneal
        near_pairs = _EMPTY_PAIRS
        sep_radius = cfg.cloth_thickness
        if sep_radius > 0.0:
            tree = cKDTree(p[rep_rows])
            raw = tree.query_pairs(sep_radius, output_type="ndarray")
            if len(raw):
                cand = np.sort(rep_rows[raw], axis=1)
                keep = [
                    k
                    for k, (a, b) in enumerate(map(tuple, np.sort(rep[cand], axis=1).tolist()))
                    if a != b and (a, b) not in connected
                ]
                if keep:
                    cand = cand[keep]
                    order = np.lexsort((cand[:, 1], cand[:, 0]))
                    near_pairs = cand[order]
        dressing = bool(len(pairs)) and not welded
        if dressing and sep_radius > 0.0:
            # while panels approach face-on, vertex-face contact stops the
            # sheets interleaving before they are sewn; afterwards the free
            # dynamics would only be disturbed by it
            face_v, face_t = _dress_phase_contacts(p, rep, rep_rows, tri_rep, sep_radius)
        else:
            face_v = np.empty(0, dtype=np.int64)
            face_t = np.empty(0, dtype=np.int64)
        for it in range(cfg.solver_iterations):
            _project_distance_gs(p, edges, stretch_rest, cfg.stretch_stiffness)
            if len(bends):
                _project_distance_gs(p, bends, bend_rest, cfg.bend_stiffness)
            if dressing:
                _project_distance_gs(p, pairs, stitch_rest, cfg.stitch_stiffness)
            if len(near_pairs):
                _project_separation_gs(p, near_pairs, sep_radius)
            if len(face_v):
                _project_vertex_face(p, face_v, face_t, tri_rep, sep_radius)
            if cfg.strain_limit > 1.0:
                _limit_strain_gs(p, edges, stretch_rest, cfg.strain_limit, 4)
            if use_body:
                moved = np.linalg.norm(p - p_ref, axis=1)
                active = np.nonzero(sd_bound - moved < cfg.collision_offset)[0]
                if len(active):
                    closest, normals, signed = body.nearest(p[active])
                    sd_bound[active] = signed
                    p_ref[active] = p[active]
                    inside = signed < cfg.collision_offset
                    if np.any(inside):
                        rows = active[inside]
                        nrm = normals[inside]
                        normal_push = cfg.collision_offset - signed[inside]
                        p[rows] = closest[inside] + nrm * cfg.collision_offset
                        pullback_len = np.zeros(len(rows))
                        if cfg.contact_friction > 0.0:
                            # Coulomb-clamped position friction: tangential
                            # motion since frame start is cancelled up to
                            # contact_friction times the normal correction,
                            # so resting contacts stick but a strong pull
                            # (stitch annealing) still slides.
                            rel = p[rows] - x[rows]
                            tang = rel - np.einsum("ij,ij->i", rel, nrm)[:, None] * nrm
                            tlen = np.linalg.norm(tang, axis=1)
                            limit = cfg.contact_friction * normal_push
                            scale = np.where(tlen > 1e-12, np.minimum(1.0, limit / np.where(tlen > 1e-12, tlen, 1.0)), 0.0)
                            pullback = tang * scale[:, None]
                            pullback_len = tlen * scale
                            p[rows] -= pullback
                        sd_bound[rows] = cfg.collision_offset - pullback_len
                        p_ref[rows] = p[rows]
        if welded:
            p[slaves] = p[rep[slaves]]
        v = (p - x) / dt
        x = p
        if not np.all(np.isfinite(x)):
            report.diverged = True
            report.failed = True
            report.frames_run = frame
            x = np.nan_to_num(x, nan=0.0, posinf=0.0, neginf=0.0)
            return garment.copy_with(x), report
        report.mean_speed = float(np.mean(np.linalg.norm(v, axis=1)))
        if report.mean_speed < cfg.rest_threshold and frame >= anneal_frames:
            report.converged = True
            break

    report.frames_run = frame
    out = garment.copy_with(x)
    pen, self_count = quality_check(out, body, cfg.collision_offset, stitch_pairs=pairs)
    report.body_penetration_count = pen
    report.self_intersection_count = self_count
    report.failed = report.diverged or pen > 0 or self_count > 0
    return out, report


# ---------------------------------------------------------------------------
# Quality checks


def quality_check(
    garment: GarmentMesh,
    body: Optional[BodyModel],
    collision_offset: float = 0.4,
    stitch_pairs: Optional[np.ndarray] = None,
) -> tuple[int, int]:
    """Count body-penetrating vertices and crossing triangle pairs.

    Triangles joined through a stitch pair count as adjacent: seam vertices
    are spatially merged by design, not a quality defect.
    """
    pen = 0
    if body is not None and not body.empty and len(garment.vertices):
        _, _, signed = body.nearest(garment.vertices)
        pen = int(np.sum(signed < -0.5 * collision_offset))
    crossings = count_self_intersections(
        garment.vertices, garment.triangles, stitch_pairs=stitch_pairs
    )
    return pen, crossings


def _vertex_representatives(n: int, stitch_pairs: Optional[np.ndarray]) -> np.ndarray:
    rep = np.arange(n)
    if stitch_pairs is None or len(stitch_pairs) == 0:
        return rep

    def find(a: int) -> int:
        while rep[a] != a:
            rep[a] = rep[rep[a]]
            a = rep[a]
        return a

    for a, b in np.asarray(stitch_pairs, dtype=np.int64).reshape(-1, 2):
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            rep[max(ra, rb)] = min(ra, rb)
    for i in range(n):
        rep[i] = find(i)
    return rep


def count_self_intersections(
    vertices: np.ndarray, triangles: np.ndarray, stitch_pairs: Optional[np.ndarray] = None
) -> int:
    """Crossing (not merely touching or coplanar-overlapping) triangle pairs."""
    m = len(triangles)
    if m < 2:
        return 0
    rep = _vertex_representatives(len(vertices), stitch_pairs)
    tri_adj = rep[triangles]  # only for the adjacency test, not geometry
    tp = vertices[triangles]
    lo = tp.min(axis=1)
    hi = tp.max(axis=1)
    order = np.argsort(lo[:, 0], kind="stable")
    lo_s, hi_s = lo[order], hi[order]
    tri_s = triangles[order]
    tri_adj_s = tri_adj[order]
    pairs_i: list[np.ndarray] = []
    pairs_j: list[np.ndarray] = []
    ends = np.searchsorted(lo_s[:, 0], hi_s[:, 0], side="right")
    for a in range(m):
        b = ends[a]
        if b <= a + 1:
            continue
        js = np.arange(a + 1, b)
        overlap = (
            (lo_s[js, 1] <= hi_s[a, 1])
            & (hi_s[js, 1] >= lo_s[a, 1])
            & (lo_s[js, 2] <= hi_s[a, 2])
            & (hi_s[js, 2] >= lo_s[a, 2])
        )
        js = js[overlap]
        if len(js):
            shared = (tri_adj_s[js][:, :, None] == tri_adj_s[a][None, None, :]).any(axis=(1, 2))
            js = js[~shared]
        if len(js):
            pairs_i.append(np.full(len(js), a))
            pairs_j.append(js)
    if not pairs_i:
        return 0
    ii = np.concatenate(pairs_i)
    jj = np.concatenate(pairs_j)
    t1 = vertices[tri_s[ii]]
    t2 = vertices[tri_s[jj]]
    crossing = _tri_pairs_cross(t1, t2)
    return int(np.sum(crossing))


_PIERCE_DEPTH = 1e-3  # cm; contact closer than this is touching, not piercing


def _segments_pierce_triangle(seg_a, seg_b, tri, depth: float = _PIERCE_DEPTH) -> np.ndarray:
    """Segment-through-triangle-interior predicate, vectorized.

    Requires the segment endpoints to clear the triangle plane by `depth` on
    both sides and the crossing point to sit at least `depth` inside every
    edge, so resting contact between pressed sheets never counts as a
    piercing while any real pass-through does.
    """
    p0, p1, p2 = tri[:, 0], tri[:, 1], tri[:, 2]
    n = np.cross(p1 - p0, p2 - p0)
    nlen = np.linalg.norm(n, axis=1)
    safe_n = np.where(nlen > 1e-30, nlen, 1.0)
    da = np.einsum("ij,ij->i", seg_a - p0, n) / safe_n
    db = np.einsum("ij,ij->i", seg_b - p0, n) / safe_n
    crosses = ((da > depth) & (db < -depth)) | ((da < -depth) & (db > depth))
    denom = np.where(da - db != 0, da - db, 1.0)
    t = da / denom
    point = seg_a + (seg_b - seg_a) * t[:, None]

    def edge_margin(a, b):
        e = b - a
        elen = np.linalg.norm(e, axis=1)
        safe_e = np.where(elen > 1e-30, elen, 1.0)
        return np.einsum("ij,ij->i", np.cross(e, point - a), n) / (safe_e * safe_n)

    s0 = edge_margin(p0, p1)
    s1 = edge_margin(p1, p2)
    s2 = edge_margin(p2, p0)
    inside = ((s0 > depth) & (s1 > depth) & (s2 > depth)) | (
        (s0 < -depth) & (s1 < -depth) & (s2 < -depth)
    )
    return crosses & inside


def _tri_pairs_cross(t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
    result = np.zeros(len(t1), dtype=bool)
    for a, b in ((0, 1), (1, 2), (2, 0)):
        result |= _segments_pierce_triangle(t1[:, a], t1[:, b], t2)
        result |= _segments_pierce_triangle(t2[:, a], t2[:, b], t1)
    return result


def write_garment(garment: GarmentMesh, obj_path: str | Path, labels_path: str | Path) -> None:
    meshio.write_obj(obj_path, garment.vertices, garment.triangles)
    meshio.write_labels(labels_path, garment.labels)


def load_garment(obj_path: str | Path, labels_path: str | Path) -> GarmentMesh:
    vertices, triangles = meshio.read_obj(obj_path)
    labels = meshio.read_labels(labels_path)
    return GarmentMesh(vertices, triangles, labels)
