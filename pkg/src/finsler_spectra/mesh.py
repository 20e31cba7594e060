"""Simplicial meshes for the model manifolds.

Meshes are 1D (segments) or 2D (triangles).  Periodic models (circle,
torus) are built directly on the quotient: elements that wrap around store
unwrapped corner coordinates in ``element_corners`` so every element has the
correct geometry while the vertex list stays free of duplicates.  Imported
meshes may instead carry duplicated seam vertices together with
``identifications``; identified vertices are merged into one degree of
freedom.

The plain-text exchange format (one record per line) is::

    dimension <d> <coord_dim>
    vertices <nv>
    <coords...>                  # nv lines
    elements <ne>
    <vertex indices...>          # ne lines
    boundary <nb>
    <vertex index>               # nb lines
    identifications <ni>
    <duplicate> <primary>        # ni lines
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


@dataclass
class Mesh:
    """A simplicial mesh with optional periodic identifications."""

    dimension: int
    vertices: np.ndarray
    elements: np.ndarray
    boundary_vertices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    identifications: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=int))
    element_corners: np.ndarray = None  # type: ignore[assignment]
    name: str = "mesh"

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        if self.vertices.ndim == 1:
            self.vertices = self.vertices.reshape(-1, 1)
        self.elements = np.asarray(self.elements, dtype=int)
        self.boundary_vertices = np.asarray(self.boundary_vertices, dtype=int).ravel()
        self.identifications = np.asarray(self.identifications, dtype=int).reshape(-1, 2)
        if self.element_corners is None:
            self.element_corners = self.vertices[self.elements]
        else:
            self.element_corners = np.asarray(self.element_corners, dtype=float)
        self.validate()

    # -- basic shape --------------------------------------------------------

    @property
    def coord_dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def is_embedded(self) -> bool:
        return self.coord_dim > self.dimension

    @property
    def is_closed(self) -> bool:
        return self.boundary_vertices.size == 0

    # -- degrees of freedom --------------------------------------------------

    @cached_property
    def vertex_dof(self) -> np.ndarray:
        """Map vertex index -> merged degree-of-freedom index."""
        parent = np.arange(self.n_vertices)

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for dup, primary in self.identifications:
            a, b = find(dup), find(primary)
            if a != b:
                parent[max(a, b)] = min(a, b)
        roots = np.array([find(i) for i in range(self.n_vertices)])
        uniq, dof = np.unique(roots, return_inverse=True)
        return dof

    @cached_property
    def n_dofs(self) -> int:
        return int(self.vertex_dof.max()) + 1

    @cached_property
    def boundary_dofs(self) -> np.ndarray:
        return np.unique(self.vertex_dof[self.boundary_vertices]) if self.boundary_vertices.size else np.zeros(0, dtype=int)

    @cached_property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.boundary_dofs] = False
        return np.nonzero(mask)[0]

    @cached_property
    def dof_positions(self) -> np.ndarray:
        """Representative coordinates per merged degree of freedom."""
        pos = np.zeros((self.n_dofs, self.coord_dim))
        # later vertices overwrite; primaries come first so use first-wins
        seen = np.zeros(self.n_dofs, dtype=bool)
        for v in range(self.n_vertices):
            d = self.vertex_dof[v]
            if not seen[d]:
                pos[d] = self.vertices[v]
                seen[d] = True
        return pos

    def expand(self, free_values: np.ndarray) -> np.ndarray:
        """Free-dof values -> all-dof values with zeros on the boundary."""
        full = np.zeros(self.n_dofs)
        full[self.free_dofs] = free_values
        return full

    # -- element geometry ----------------------------------------------------

    @cached_property
    def element_volumes(self) -> np.ndarray:
        return np.array([_simplex_volume(c, self.dimension) for c in self.element_corners])

    @cached_property
    def element_centroids(self) -> np.ndarray:
        return self.element_corners.mean(axis=1)

    @cached_property
    def edge_list(self) -> np.ndarray:
        """Unique (dof_a, dof_b, length-slot) edges of the element graph.

        Lengths are filled by callers that know the metric; this property
        returns the unique dof index pairs with representative geometric
        endpoints taken from the first element that realizes the edge.
        """
        pairs = {}
        d = self.dimension
        for e, simplex in enumerate(self.elements):
            dofs = self.vertex_dof[simplex]
            corners = self.element_corners[e]
            for i in range(d + 1):
                for j in range(i + 1, d + 1):
                    key = (min(dofs[i], dofs[j]), max(dofs[i], dofs[j]))
                    if key not in pairs:
                        pairs[key] = (corners[i], corners[j])
        out = []
        for (a, b), (pa, pb) in sorted(pairs.items()):
            out.append((a, b, pa, pb))
        return out  # type: ignore[return-value]

    def validate(self) -> None:
        d = self.dimension
        if d not in (1, 2):
            raise ValueError("only 1D and 2D meshes are supported")
        if self.elements.shape[1] != d + 1:
            raise ValueError(f"elements must have {d + 1} vertices each")
        if self.elements.size and (self.elements.min() < 0 or self.elements.max() >= self.n_vertices):
            raise ValueError("element indices out of range")
        if self.element_corners.shape != (self.n_elements, d + 1, self.coord_dim):
            raise ValueError("element_corners shape mismatch")
        vols = self.element_volumes
        if np.any(vols <= 0):
            raise ValueError("every element must have positive chart volume")
        if self.identifications.size:
            dup, primary = self.identifications[:, 0], self.identifications[:, 1]
            if len(np.unique(dup)) != len(dup):
                raise ValueError("identification duplicates must be unique")
            if np.intersect1d(dup, primary).size:
                raise ValueError("identification pairs must not chain")
            if np.intersect1d(self.identifications.ravel(), self.boundary_vertices).size:
                raise ValueError("identified and boundary vertex sets must be disjoint")
        # connectivity of the element adjacency (via shared dofs)
        if self.n_elements:
            rows, cols = [], []
            for simplex in self.elements:
                dofs = self.vertex_dof[simplex]
                for i in range(d + 1):
                    for j in range(i + 1, d + 1):
                        rows.append(dofs[i])
                        cols.append(dofs[j])
            graph = coo_matrix(
                (np.ones(len(rows)), (rows, cols)), shape=(self.n_dofs, self.n_dofs)
            )
            n_comp, _ = connected_components(graph, directed=False)
            if n_comp != 1:
                raise ValueError("mesh must be connected")


def _simplex_volume(corners: np.ndarray, dim: int) -> float:
    edges = corners[1:] - corners[0]
    if edges.shape == (dim, dim):
        return abs(float(np.linalg.det(edges))) / math.factorial(dim)
    gram = edges @ edges.T
    return math.sqrt(max(float(np.linalg.det(gram)), 0.0)) / math.factorial(dim)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def circle(n: int) -> Mesh:
    """Closed circle of circumference ``2*pi`` with ``n`` segments.

    The chart coordinate is arclength ``theta`` in ``[0, 2*pi)``; the wrap
    element stores the unwrapped corner ``2*pi``.
    """
    if n < 3:
        raise ValueError("circle needs at least 3 segments")
    theta = 2.0 * math.pi * np.arange(n) / n
    vertices = theta.reshape(-1, 1)
    elements = np.stack([np.arange(n), (np.arange(n) + 1) % n], axis=-1)
    corners = vertices[elements].copy()
    corners[-1, 1, 0] = 2.0 * math.pi
    return Mesh(1, vertices, elements, element_corners=corners, name=f"circle({n})")


def interval(n: int, length: float = 1.0) -> Mesh:
    """Interval ``[0, length]`` with ``n`` segments and Dirichlet endpoints."""
    if n < 3:
        raise ValueError("interval needs at least 3 segments")
    x = np.linspace(0.0, length, n + 1).reshape(-1, 1)
    elements = np.stack([np.arange(n), np.arange(n) + 1], axis=-1)
    return Mesh(1, x, elements, boundary_vertices=np.array([0, n]), name=f"interval({n})")


def torus(nx: int, ny: int, lx: float = 1.0, ly: float = 1.0) -> Mesh:
    """Flat torus ``[0, lx] x [0, ly]`` with periodic wrap in both axes."""
    if nx < 3 or ny < 3:
        raise ValueError("torus needs at least 3 cells per axis")
    xs = lx * np.arange(nx) / nx
    ys = ly * np.arange(ny) / ny
    vid = lambda i, j: (i % nx) + nx * (j % ny)
    vertices = np.array([[xs[i % nx], ys[j % ny]] for j in range(ny) for i in range(nx)])
    # unwrapped corner helper: grid position (i, j) may step one cell past the seam
    pos = lambda i, j: np.array([lx * i / nx, ly * j / ny])
    elements, corners = [], []
    for j in range(ny):
        for i in range(nx):
            quad = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
            for tri in ((0, 1, 2), (0, 2, 3)):
                elements.append([vid(*quad[t]) for t in tri])
                corners.append([pos(*quad[t]) for t in tri])
    return Mesh(
        2,
        vertices,
        np.array(elements),
        element_corners=np.array(corners),
        name=f"torus({nx}x{ny})",
    )


def disk(n_rings: int) -> Mesh:
    """Unit disk in Cartesian coordinates with a hexagonal ring layout.

    Ring ``k`` has ``6*k`` vertices at radius ``k / n_rings``; the outermost
    ring is the Dirichlet boundary.
    """
    if n_rings < 3:
        raise ValueError("disk needs at least 3 rings")
    verts = [np.zeros(2)]
    ring_start = [None]  # 1-indexed by ring
    for k in range(1, n_rings + 1):
        ring_start.append(len(verts))
        r = k / n_rings
        for j in range(6 * k):
            ang = 2.0 * math.pi * j / (6 * k)
            verts.append(np.array([r * math.cos(ang), r * math.sin(ang)]))
    elements = []
    for s in range(6):
        elements.append([0, ring_start[1] + s, ring_start[1] + (s + 1) % 6])
    for k in range(2, n_rings + 1):
        outer, inner = ring_start[k], ring_start[k - 1]
        n_out, n_in = 6 * k, 6 * (k - 1)
        for s in range(6):
            o = [outer + (s * k + t) % n_out for t in range(k + 1)]
            i = [inner + (s * (k - 1) + t) % n_in for t in range(k)]
            for t in range(k):
                elements.append([o[t], o[t + 1], i[t]])
            for t in range(k - 1):
                elements.append([i[t], o[t + 1], i[t + 1]])
    boundary = np.arange(ring_start[n_rings], ring_start[n_rings] + 6 * n_rings)
    return Mesh(2, np.array(verts), np.array(elements), boundary_vertices=boundary,
                name=f"disk({n_rings})")


def icosphere(level: int) -> Mesh:
    """Unit sphere triangulated by subdividing the icosahedron ``level`` times.

    Vertices live in the 3D embedding; every element carries the flat metric
    of its own triangle plane, which converges to the round metric under
    refinement.
    """
    if level < 0:
        raise ValueError("subdivision level must be nonnegative")
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    raw = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=float,
    )
    verts = [v / np.linalg.norm(v) for v in raw]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    for _ in range(level):
        cache: dict = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return Mesh(2, np.array(verts), np.array(faces), name=f"icosphere({level})")


def build_mesh(model: str, **params) -> Mesh:
    """Build a mesh by model name; see the individual builders."""
    builders = {
        "circle": lambda: circle(int(params["n"])),
        "interval": lambda: interval(int(params["n"]), float(params.get("length", 1.0))),
        "torus": lambda: torus(int(params["nx"]), int(params["ny"]),
                               float(params.get("lx", 1.0)), float(params.get("ly", 1.0))),
        "disk": lambda: disk(int(params["n_rings"])),
        "icosphere": lambda: icosphere(int(params["level"])),
    }
    if model not in builders:
        raise ValueError(f"unknown mesh model {model!r}")
    return builders[model]()


# ---------------------------------------------------------------------------
# plain-text exchange format
# ---------------------------------------------------------------------------

def save_mesh(mesh: Mesh, path) -> None:
    lines = [f"dimension {mesh.dimension} {mesh.coord_dim}"]
    lines.append(f"vertices {mesh.n_vertices}")
    for v in mesh.vertices:
        lines.append(" ".join(f"{c:.17g}" for c in v))
    lines.append(f"elements {mesh.n_elements}")
    for e in mesh.elements:
        lines.append(" ".join(str(i) for i in e))
    lines.append(f"boundary {mesh.boundary_vertices.size}")
    for b in mesh.boundary_vertices:
        lines.append(str(int(b)))
    lines.append(f"identifications {mesh.identifications.shape[0]}")
    for dup, primary in mesh.identifications:
        lines.append(f"{int(dup)} {int(primary)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mesh(path) -> Mesh:
    with open(path) as fh:
        tokens = [line.split() for line in fh if line.strip()]
    it = iter(tokens)

    def expect(tag):
        row = next(it)
        if row[0] != tag:
            raise ValueError(f"expected {tag!r} record, got {row[0]!r}")
        return [int(t) for t in row[1:]]

    dim, coord_dim = expect("dimension")
    (nv,) = expect("vertices")
    vertices = np.array([[float(c) for c in next(it)] for _ in range(nv)])
    if nv and vertices.shape[1] != coord_dim:
        raise ValueError("vertex coordinate count mismatch")
    (ne,) = expect("elements")
    elements = np.array([[int(c) for c in next(it)] for _ in range(ne)], dtype=int)
    (nb,) = expect("boundary")
    boundary = np.array([int(next(it)[0]) for _ in range(nb)], dtype=int)
    (ni,) = expect("identifications")
    ident = np.array([[int(c) for c in next(it)] for _ in range(ni)], dtype=int).reshape(-1, 2)
    return Mesh(dim, vertices, elements, boundary_vertices=boundary, identifications=ident)
