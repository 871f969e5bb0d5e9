"""Triangulated 2-D domains with tagged inflow, wall and outflow boundaries.

A :class:`Mesh` stores vertices, counterclockwise triangles and the tagged
boundary edges.  The edge midpoints used by quadratic velocity elements are
derived here so that the numbering of all velocity nodes is a property of the
mesh alone: vertex ``i`` keeps index ``i`` and the midpoint of edge ``e``
(in :attr:`Mesh.edges` order) gets index ``n_vertices + e``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np


class BoundaryTag(str, enum.Enum):
    IN = "in"
    WALL = "wall"
    OUT = "out"


class MeshFormatError(ValueError):
    """Malformed mesh file; ``line`` is the 1-based line number (or None)."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Violation:
    rule: str
    entity: str

    def __str__(self) -> str:
        return f"{self.rule}: {self.entity}"


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangle mesh with tagged boundary edges.

    Parameters
    ----------
    nodes : (N, 2) float array
    triangles : (M, 3) int array, counterclockwise vertex indices
    boundary_edges : (K, 2) int array of vertex pairs
    boundary_tags : tuple of K :class:`BoundaryTag`
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: tuple

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float).reshape(-1, 2)
        tris = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        bedges = np.array(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        tags = tuple(BoundaryTag(t) for t in self.boundary_tags)
        if len(tags) != len(bedges):
            raise ValueError("one tag per boundary edge required")
        for arr in (nodes, tris, bedges):
            arr.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "boundary_edges", bedges)
        object.__setattr__(self, "boundary_tags", tags)

    @property
    def n_vertices(self) -> int:
        return len(self.nodes)

    @cached_property
    def _edge_data(self):
        local = self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 3, 2)
        keys = np.sort(local, axis=2).reshape(-1, 2)
        edges, inverse, counts = np.unique(
            keys, axis=0, return_inverse=True, return_counts=True
        )
        return edges, inverse.reshape(-1, 3), counts

    @property
    def edges(self) -> np.ndarray:
        """Unique edges as sorted vertex pairs, shape (E, 2)."""
        return self._edge_data[0]

    @property
    def triangle_edges(self) -> np.ndarray:
        """Edge index of local edges (0,1), (1,2), (2,0) per triangle."""
        return self._edge_data[1]

    @property
    def edge_midpoints(self) -> np.ndarray:
        """Node index of each edge midpoint (quadratic-element nodes)."""
        return self.n_vertices + np.arange(len(self.edges))

    @cached_property
    def edge_index(self) -> dict:
        return {(int(a), int(b)): k for k, (a, b) in enumerate(self.edges)}

    def midpoint_of(self, i: int, j: int) -> int:
        a, b = (i, j) if i < j else (j, i)
        return self.n_vertices + self.edge_index[(int(a), int(b))]

    @cached_property
    def p2_nodes(self) -> np.ndarray:
        """Coordinates of vertices followed by edge midpoints."""
        mids = 0.5 * (self.nodes[self.edges[:, 0]] + self.nodes[self.edges[:, 1]])
        out = np.vstack([self.nodes, mids])
        out.setflags(write=False)
        return out

    @cached_property
    def p2_cells(self) -> np.ndarray:
        """Per-triangle quadratic node indices: 3 vertices, then the midpoints
        of local edges (0,1), (1,2), (2,0)."""
        out = np.hstack([self.triangles, self.edge_midpoints[self.triangle_edges]])
        out.setflags(write=False)
        return out

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edges_with_tag(self, tag) -> np.ndarray:
        tag = BoundaryTag(tag)
        mask = np.array([t is tag for t in self.boundary_tags], dtype=bool)
        return self.boundary_edges[mask] if len(mask) else self.boundary_edges[:0]

    def tag_counts(self) -> dict:
        return {t: sum(1 for s in self.boundary_tags if s is t) for t in BoundaryTag}


def build_channel_mesh(length: float, height: float, nx: int, ny: int) -> Mesh:
    """Structured triangulation of ``[0, length] x [0, height]``.

    Each of the ``nx * ny`` cells is split along its lower-left to upper-right
    diagonal.  The left side is tagged inflow, the right side outflow and the
    top and bottom walls.
    """
    if not (length > 0 and height > 0):
        raise ValueError(f"channel dimensions must be positive, got {length}, {height}")
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"subdivision counts must be positive integers, got {nx}, {ny}")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(0.0, length, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def idx(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))

    edges, tags = [], []
    for i in range(nx):
        edges.append((idx(i, 0), idx(i + 1, 0)))
        tags.append(BoundaryTag.WALL)
    for j in range(ny):
        edges.append((idx(nx, j), idx(nx, j + 1)))
        tags.append(BoundaryTag.OUT)
    for i in range(nx, 0, -1):
        edges.append((idx(i, ny), idx(i - 1, ny)))
        tags.append(BoundaryTag.WALL)
    for j in range(ny, 0, -1):
        edges.append((idx(0, j), idx(0, j - 1)))
        tags.append(BoundaryTag.IN)
    return Mesh(nodes, np.array(tris), np.array(edges), tuple(tags))


def validate_mesh(mesh: Mesh) -> list[Violation]:
    """Return all violated mesh invariants (empty list when the mesh is valid)."""
    out: list[Violation] = []
    n = mesh.n_vertices
    tris = mesh.triangles
    bad = np.nonzero((tris < 0) | (tris >= n))[0]
    for k in np.unique(bad):
        out.append(Violation("index out of range", f"triangle {k}"))
    bad_edges = np.nonzero((mesh.boundary_edges < 0) | (mesh.boundary_edges >= n))[0]
    for k in np.unique(bad_edges):
        out.append(Violation("index out of range", f"boundary edge {k}"))
    if out:
        return out

    for k in np.nonzero(mesh.signed_areas() <= 0)[0]:
        out.append(Violation("nonpositive area", f"triangle {k}"))

    edges, _, counts = mesh._edge_data
    topo_boundary = set()
    for (a, b), cnt in zip(edges, counts):
        if cnt > 2:
            out.append(Violation("non-manifold edge", f"edge ({a}, {b})"))
        elif cnt == 1:
            topo_boundary.add((int(a), int(b)))

    tagged: dict[tuple, BoundaryTag] = {}
    for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        key = (int(min(a, b)), int(max(a, b)))
        if key in tagged and tagged[key] is not tag:
            out.append(Violation("conflicting tags", f"edge {key}"))
        tagged[key] = tag
        if key not in topo_boundary:
            out.append(Violation("tag on non-boundary edge", f"edge {key}"))
    for key in sorted(topo_boundary - set(tagged)):
        out.append(Violation("uncovered boundary", f"edge {key}"))

    in_vertices = {v for k, t in tagged.items() if t is BoundaryTag.IN for v in k}
    out_vertices = {v for k, t in tagged.items() if t is BoundaryTag.OUT for v in k}
    for v in sorted(in_vertices & out_vertices):
        out.append(Violation("in/out touch", f"vertex {v}"))
    if not in_vertices:
        out.append(Violation("empty in", "no edge tagged in"))
    if not out_vertices:
        out.append(Violation("empty out", "no edge tagged out"))

    used = np.unique(tris)
    if len(used) < n:
        out.append(Violation("unused vertex", f"{n - len(used)} vertices"))
    # a triangulated disc has Euler characteristic 1
    if len(used) - len(edges) + len(tris) != 1:
        out.append(Violation("not simply connected", "Euler characteristic != 1"))
    return out


def dump_mesh(mesh: Mesh) -> str:
    """Serialise to the line-oriented ASCII mesh format (lossless for floats)."""
    lines = [f"nodes {mesh.n_vertices}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.nodes.tolist()]
    lines.append(f"triangles {len(mesh.triangles)}")
    lines += [" ".join(map(str, t)) for t in mesh.triangles.tolist()]
    lines.append(f"boundary_edges {len(mesh.boundary_edges)}")
    lines += [
        f"{a} {b} {t.value}" for (a, b), t in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags)
    ]
    return "\n".join(lines) + "\n"


def save_mesh(mesh: Mesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(dump_mesh(mesh))


def load_mesh(text: str) -> Mesh:
    """Parse mesh-file content.  Raises :class:`MeshFormatError`."""
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not s or s.startswith("#"):
            continue
        rows.append((lineno, s.split()))
    pos = 0

    def section(name):
        nonlocal pos
        if pos >= len(rows):
            raise MeshFormatError(f"missing '{name}' section")
        lineno, tok = rows[pos]
        if len(tok) != 2 or tok[0] != name:
            raise MeshFormatError(f"expected '{name} <count>'", lineno)
        try:
            count = int(tok[1])
        except ValueError:
            raise MeshFormatError(f"bad count {tok[1]!r}", lineno) from None
        if count < 0:
            raise MeshFormatError("negative count", lineno)
        if pos + 1 + count > len(rows):
            raise MeshFormatError(f"'{name}' section truncated", lineno)
        body = rows[pos + 1 : pos + 1 + count]
        pos += 1 + count
        return body

    nodes = []
    for lineno, tok in section("nodes"):
        if len(tok) != 2:
            raise MeshFormatError("node line needs 'x y'", lineno)
        try:
            nodes.append((float(tok[0]), float(tok[1])))
        except ValueError:
            raise MeshFormatError(f"bad coordinate in {' '.join(tok)!r}", lineno) from None
    n = len(nodes)

    def indices(tok, count, lineno):
        try:
            vals = [int(t) for t in tok[:count]]
        except ValueError:
            raise MeshFormatError(f"bad index in {' '.join(tok)!r}", lineno) from None
        for v in vals:
            if not 0 <= v < n:
                raise MeshFormatError(f"index {v} out of range (node count {n})", lineno)
        return vals

    tris = []
    for lineno, tok in section("triangles"):
        if len(tok) != 3:
            raise MeshFormatError("triangle line needs 'i j k'", lineno)
        tris.append(indices(tok, 3, lineno))

    edges, tags = [], []
    for lineno, tok in section("boundary_edges"):
        if len(tok) != 3:
            raise MeshFormatError("boundary edge line needs 'i j tag'", lineno)
        edges.append(indices(tok, 2, lineno))
        try:
            tags.append(BoundaryTag(tok[2]))
        except ValueError:
            raise MeshFormatError(f"unknown tag {tok[2]!r}", lineno) from None
    if pos != len(rows):
        raise MeshFormatError("trailing content", rows[pos][0])
    return Mesh(
        np.array(nodes, dtype=float).reshape(-1, 2),
        np.array(tris, dtype=np.int64).reshape(-1, 3),
        np.array(edges, dtype=np.int64).reshape(-1, 2),
        tuple(tags),
    )


def read_mesh(path) -> Mesh:
    with open(path) as fh:
        return load_mesh(fh.read())
