"""OBJ mesh and segmentation-label file I/O.

OBJ files carry `v` and `f` records only, CCW winding, centimeter units.
Segmentation files hold one label per line; line i belongs to vertex i.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def obj_dumps(vertices: np.ndarray, triangles: np.ndarray) -> str:
    lines = [
        f"v {float(x)!r} {float(y)!r} {float(z)!r}"
        for x, y, z in np.asarray(vertices, dtype=np.float64)
    ]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in np.asarray(triangles, dtype=np.int64)]
    return "\n".join(lines) + "\n"


def write_obj(path: str | Path, vertices: np.ndarray, triangles: np.ndarray) -> None:
    Path(path).write_text(obj_dumps(vertices, triangles))


def obj_loads(text: str) -> tuple[np.ndarray, np.ndarray]:
    vertices: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("v "):
            parts = line.split()
            vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
        elif line.startswith("f "):
            ids = []
            for field in line.split()[1:]:
                idx = int(field.split("/")[0])
                ids.append(idx - 1 if idx > 0 else len(vertices) + idx)
            for k in range(1, len(ids) - 1):  # fan for polygon faces
                faces.append((ids[0], ids[k], ids[k + 1]))
    return (
        np.asarray(vertices, dtype=np.float64).reshape(-1, 3),
        np.asarray(faces, dtype=np.int64).reshape(-1, 3),
    )


def read_obj(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    return obj_loads(Path(path).read_text())


def write_labels(path: str | Path, labels: list[str]) -> None:
    Path(path).write_text("\n".join(labels) + ("\n" if labels else ""))


def read_labels(path: str | Path) -> list[str]:
    text = Path(path).read_text()
    return [line for line in text.splitlines() if line]
