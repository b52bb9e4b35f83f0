"""Quadratic (six-noded) triangle meshes with material regions and boundary tags.

A :class:`TriMesh` is built from corner vertices and connectivity; edge
midnodes are always generated.  Node numbering is vertices first, then one
midnode per unique edge.  Local node order inside an element is the three
corners followed by the midnodes of edges (0,1), (1,2), (2,0), which is also
the VTK quadratic-triangle order.
"""
from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .reduction import Strength
from .tensors import Elasticity

MIN_ANGLE_DEG = 5.0


class MeshError(ValueError):
    pass


class ParseError(MeshError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class TopologyError(MeshError):
    pass


class QualityError(MeshError):
    pass


class BoundaryTag(enum.IntEnum):
    BOTTOM = 0      # both velocity components fixed
    LEFT = 1        # horizontal component fixed
    RIGHT = 2       # horizontal component fixed
    TRACTION = 3
    FREE = 4

    @classmethod
    def parse(cls, name: str) -> "BoundaryTag":
        key = name.strip().lower()
        aliases = {"leftside": "left", "rightside": "right"}
        key = aliases.get(key, key)
        try:
            return cls[key.upper()]
        except KeyError:
            raise ValueError(f"unknown boundary tag {name!r}") from None


@dataclass(frozen=True)
class Material:
    """One soil layer; ``E`` of the elasticity in kPa, unit weights in kN/m^3."""

    strength: Strength
    elasticity: Elasticity
    gamma_unsat: float
    gamma_sat: float | None = None

    def __post_init__(self):
        if self.gamma_sat is None:
            object.__setattr__(self, "gamma_sat", self.gamma_unsat)
        if not self.gamma_unsat > 0.0:
            raise ValueError("unit weight must be positive")
        if self.gamma_sat < self.gamma_unsat:
            raise ValueError("saturated unit weight must not be below the unsaturated one")


@dataclass(frozen=True)
class WaterTable:
    points: np.ndarray
    gamma_w: float = 9.81

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if len(pts) < 1:
            raise ValueError("water table needs at least one point")
        if np.any(np.diff(pts[:, 0]) <= 0.0):
            raise ValueError("water table x coordinates must be strictly increasing")
        object.__setattr__(self, "points", pts)

    def level(self, x):
        return np.interp(x, self.points[:, 0], self.points[:, 1])


def _edge_key(a, b):
    return (a, b) if a < b else (b, a)


@dataclass
class TriMesh:
    vertices: np.ndarray
    elements: np.ndarray
    material: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    parent: np.ndarray | None = None
    # derived, filled in __post_init__
    edges: np.ndarray = field(init=False, repr=False)
    element_edges: np.ndarray = field(init=False, repr=False)
    nodes: np.ndarray = field(init=False, repr=False)
    element_nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        self.elements = np.asarray(self.elements, dtype=np.int64).reshape(-1, 3)
        self.material = np.asarray(self.material, dtype=np.int64).reshape(-1)
        self.boundary_edges = np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        self.boundary_tags = np.asarray(self.boundary_tags, dtype=np.int64).reshape(-1)
        nv = len(self.vertices)
        if len(self.material) != len(self.elements):
            raise TopologyError("one material id per element required")
        if len(self.elements) and (self.elements.min() < 0 or self.elements.max() >= nv):
            raise TopologyError("element references a missing vertex")
        area = self._signed_area()
        if np.any(np.abs(area) <= 1e-14 * max(1.0, np.abs(area).max(initial=0.0))):
            raise TopologyError("degenerate (zero-area) element")
        flip = area < 0.0
        self.elements[flip] = self.elements[flip][:, [0, 2, 1]]
        self._build_edges()
        self._check_boundary()

    def _signed_area(self):
        p = self.vertices[self.elements]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def _build_edges(self):
        loc = self.elements[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 3, 2)
        keys = np.sort(loc.reshape(-1, 2), axis=1)
        uniq, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        if np.any(counts > 2):
            raise TopologyError("non-conforming mesh: an edge is shared by more than two elements")
        self.edges = uniq
        self.element_edges = inverse.reshape(-1, 3)
        self._edge_count = counts
        nv = len(self.vertices)
        mid = 0.5 * (self.vertices[uniq[:, 0]] + self.vertices[uniq[:, 1]])
        self.nodes = np.vstack([self.vertices, mid])
        self.element_nodes = np.hstack([self.elements, nv + self.element_edges])

    def _check_boundary(self):
        boundary = {tuple(e) for e in self.edges[self._edge_count == 1]}
        tagged = {}
        for (a, b), tag in zip(self.boundary_edges, self.boundary_tags):
            key = _edge_key(int(a), int(b))
            if key not in boundary:
                raise TopologyError(f"tagged edge {key} is not a boundary edge")
            tagged[key] = tag
        missing = boundary - tagged.keys()
        if missing:
            raise TopologyError(f"{len(missing)} boundary edges are untagged, e.g. {sorted(missing)[0]}")

    # --- basic geometry -------------------------------------------------
    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def areas(self) -> np.ndarray:
        return self._signed_area()

    def centroids(self) -> np.ndarray:
        return self.vertices[self.elements].mean(axis=1)

    def min_angles(self) -> np.ndarray:
        """Smallest interior angle of every element, in degrees."""
        p = self.vertices[self.elements]
        out = np.full(len(p), 180.0)
        for k in range(3):
            u = p[:, (k + 1) % 3] - p[:, k]
            v = p[:, (k + 2) % 3] - p[:, k]
            cosang = np.einsum("ij,ij->i", u, v) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            out = np.minimum(out, np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))))
        return out

    def boundary_node_tags(self) -> dict[int, set]:
        """Tags touching every node on a tagged boundary edge (P2 nodes)."""
        edge_index = {tuple(e): i for i, e in enumerate(self.edges)}
        nv = len(self.vertices)
        out: dict[int, set] = {}
        for (a, b), tag in zip(self.boundary_edges, self.boundary_tags):
            mid = nv + edge_index[_edge_key(int(a), int(b))]
            for node in (int(a), int(b), mid):
                out.setdefault(node, set()).add(BoundaryTag(int(tag)))
        return out

    def edge_hash_audit(self) -> bool:
        """True if every interior edge is shared by exactly two elements."""
        return bool(np.all(self._edge_count <= 2)) and len(self.boundary_edges) == int(np.sum(self._edge_count == 1))

    def summary(self) -> dict:
        tags = {t.name.lower(): int(np.sum(self.boundary_tags == t)) for t in BoundaryTag}
        return {"vertices": len(self.vertices), "elements": self.n_elements, "nodes": self.n_nodes,
                "area": float(self.areas().sum()), "min_angle_deg": float(self.min_angles().min()),
                "materials": sorted(int(m) for m in np.unique(self.material)),
                "boundary_edges": tags}


# --- construction -------------------------------------------------------

def _structured_block(corners, nx, ny, offset):
    """Bilinear grid of a quadrilateral (ccw corners) split into triangles."""
    c = np.asarray(corners, dtype=float)
    s, t = np.meshgrid(np.linspace(0, 1, nx + 1), np.linspace(0, 1, ny + 1), indexing="ij")
    pts = ((1 - s) * (1 - t))[..., None] * c[0] + (s * (1 - t))[..., None] * c[1] \
        + (s * t)[..., None] * c[2] + ((1 - s) * t)[..., None] * c[3]
    ids = offset + np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    tris = []
    for i in range(nx):
        for j in range(ny):
            a, b, cc, d = ids[i, j], ids[i + 1, j], ids[i + 1, j + 1], ids[i, j + 1]
            if (i + j) % 2 == 0:
                tris += [(a, b, cc), (a, cc, d)]
            else:
                tris += [(a, b, d), (b, cc, d)]
    return pts.reshape(-1, 2), np.array(tris)


def _merge_vertices(points, elements, decimals=9):
    keys = np.round(points, decimals)
    uniq, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    return points[first], inverse.reshape(-1)[elements]


def _tag_boundary(vertices, elements, classify):
    """Tag all boundary edges of a freshly built mesh with ``classify(p, q)``."""
    loc = np.sort(elements[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    uniq, counts = np.unique(loc, axis=0, return_counts=True)
    bnd = uniq[counts == 1]
    tags = [classify(vertices[a], vertices[b]) for a, b in bnd]
    return bnd, np.array(tags, dtype=np.int64)


def box_classifier(xmin, xmax, ymin, tol=1e-9):
    def classify(p, q):
        if abs(p[1] - ymin) < tol and abs(q[1] - ymin) < tol:
            return BoundaryTag.BOTTOM
        if abs(p[0] - xmin) < tol and abs(q[0] - xmin) < tol:
            return BoundaryTag.LEFT
        if abs(p[0] - xmax) < tol and abs(q[0] - xmax) < tol:
            return BoundaryTag.RIGHT
        return BoundaryTag.FREE
    return classify


def build_homogeneous_slope(size: float = 2.0, material_id: int = 0) -> TriMesh:
    """Mesh of the 45-degree benchmark slope (40 m wide, 20 m high crest).

    The domain is the union of the base block ``[0, 40] x [0, 10]`` and the
    trapezoid below the crest and slope face; both are meshed with a mapped
    grid whose spacing is ``5/k`` m, ``k = ceil(5 / size)``.
    """
    if not size > 0.0:
        raise ValueError("mesh size must be positive")
    k = max(1, math.ceil(5.0 / size - 1e-9))
    p1, t1 = _structured_block([(0, 0), (40, 0), (40, 10), (0, 10)], 8 * k, 2 * k, 0)
    p2, t2 = _structured_block([(0, 10), (25, 10), (15, 20), (0, 20)], 5 * k, 2 * k, len(p1))
    verts, elems = _merge_vertices(np.vstack([p1, p2]), np.vstack([t1, t2]))
    bnd, tags = _tag_boundary(verts, elems, box_classifier(0.0, 40.0, 0.0))
    return TriMesh(verts, elems, np.full(len(elems), material_id), bnd, tags)


def rectangle_mesh(width: float, height: float, nx: int, ny: int, material_id: int = 0) -> TriMesh:
    pts, tris = _structured_block([(0, 0), (width, 0), (width, height), (0, height)], nx, ny, 0)
    bnd, tags = _tag_boundary(pts, tris, box_classifier(0.0, width, 0.0))
    return TriMesh(pts, tris, np.full(len(tris), material_id), bnd, tags)


# --- file import --------------------------------------------------------

MESH_HEADER = "opt-ssr-mesh 1"


def import_mesh(path: str | os.PathLike) -> TriMesh:
    """Read the plain-text mesh format (corner nodes only)."""
    try:
        raw = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    lines = [(i + 1, ln.split("#", 1)[0].strip()) for i, ln in enumerate(raw)]
    lines = [(i, ln) for i, ln in lines if ln]
    pos = 0

    def next_line():
        nonlocal pos
        if pos >= len(lines):
            last = lines[-1][0] if lines else 1
            raise ParseError("unexpected end of file", last)
        item = lines[pos]
        pos += 1
        return item

    lineno, text = next_line()
    if text.split() != MESH_HEADER.split():
        raise ParseError(f"expected header {MESH_HEADER!r}", lineno)

    def section(name, width, conv):
        lineno, text = next_line()
        parts = text.split()
        if len(parts) != 2 or parts[0] != name:
            raise ParseError(f"expected '{name} <count>'", lineno)
        try:
            count = int(parts[1])
        except ValueError:
            raise ParseError(f"invalid count {parts[1]!r}", lineno) from None
        rows = []
        for _ in range(count):
            lineno, text = next_line()
            parts = text.split()
            if len(parts) != width:
                raise ParseError(f"{name}: expected {width} fields, got {len(parts)}", lineno)
            try:
                rows.append(conv(parts))
            except ValueError as exc:
                raise ParseError(f"{name}: {exc}", lineno) from None
        return rows

    verts = section("vertices", 2, lambda p: (float(p[0]), float(p[1])))
    elems = section("elements", 4, lambda p: tuple(int(x) for x in p))
    bnd = section("boundary", 3, lambda p: (int(p[0]), int(p[1]), int(BoundaryTag.parse(p[2]))))
    if pos != len(lines):
        raise ParseError("trailing content after boundary section", lines[pos][0])
    elems = np.array(elems, dtype=np.int64).reshape(-1, 4)
    bnd = np.array(bnd, dtype=np.int64).reshape(-1, 3)
    return TriMesh(np.array(verts, dtype=float), elems[:, :3], elems[:, 3], bnd[:, :2], bnd[:, 2])


def write_mesh(mesh: TriMesh, path: str | os.PathLike) -> None:
    out = [MESH_HEADER, f"vertices {len(mesh.vertices)}"]
    out += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    out.append(f"elements {mesh.n_elements}")
    out += [f"{a} {b} {c} {m}" for (a, b, c), m in zip(mesh.elements, mesh.material)]
    out.append(f"boundary {len(mesh.boundary_edges)}")
    out += [f"{a} {b} {BoundaryTag(int(t)).name.lower()}" for (a, b), t in zip(mesh.boundary_edges, mesh.boundary_tags)]
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


# --- refinement ---------------------------------------------------------

def dorfler_mark(indicator: np.ndarray, fraction: float) -> np.ndarray:
    """Smallest set of elements carrying ``fraction`` of the indicator mass."""
    ind = np.asarray(indicator, dtype=float)
    if np.any(ind < 0.0) or not np.all(np.isfinite(ind)):
        raise ValueError("indicator must be finite and non-negative")
    if not 0.0 < fraction <= 1.0:
        raise ValueError("marking fraction must lie in (0, 1]")
    total = ind.sum()
    marked = np.zeros(len(ind), dtype=bool)
    if total <= 0.0:
        return marked
    order = np.argsort(-ind, kind="stable")
    csum = np.cumsum(ind[order])
    count = int(np.searchsorted(csum, fraction * total * (1.0 - 1e-12))) + 1
    marked[order[:min(count, len(ind))]] = True
    return marked


def _longest_local_edge(p):
    """Index k of the longest edge (v_k, v_k+1) per element, ties broken by k."""
    lens = np.stack([np.sum((p[:, (k + 1) % 3] - p[:, k]) ** 2, axis=1) for k in range(3)], axis=1)
    return np.argmax(lens * (1.0 + 1e-12 * np.array([2.0, 1.0, 0.0])), axis=1)


def refine(mesh: TriMesh, indicator, fraction: float = 0.2,
           min_angle: float = MIN_ANGLE_DEG) -> TriMesh:
    """Red refinement of Dorfler-marked elements, closed by longest-edge bisection.

    Every element with a split edge gets its longest edge split too; elements
    end up red (three split edges), blue (two) or green (one).  The returned
    mesh carries ``parent`` indices into ``mesh.elements``.
    """
    ind = np.asarray(indicator, dtype=float).reshape(-1)
    if len(ind) != mesh.n_elements:
        raise ValueError("indicator length must equal the element count")
    marked = dorfler_mark(ind, fraction)
    return refine_marked(mesh, marked, min_angle)


def refine_marked(mesh: TriMesh, marked, min_angle: float = MIN_ANGLE_DEG) -> TriMesh:
    marked = np.asarray(marked, dtype=bool)
    el_edges = mesh.element_edges           # edge k of element: (v_k, v_k+1)
    local = np.stack([np.array([0, 1, 2]), np.array([1, 2, 0]), np.array([2, 0, 1])], axis=0)
    # local edge index k <-> global edge id; element_edges columns follow (01, 12, 20)
    longest = _longest_local_edge(mesh.vertices[mesh.elements])
    longest_edge = el_edges[np.arange(mesh.n_elements), longest]
    split = np.zeros(len(mesh.edges), dtype=bool)
    split[el_edges[marked].ravel()] = True
    while True:
        has = split[el_edges].any(axis=1)
        need = has & ~split[longest_edge]
        if not need.any():
            break
        split[longest_edge[need]] = True

    nv = len(mesh.vertices)
    new_id = np.full(len(mesh.edges), -1, dtype=np.int64)
    new_id[split] = nv + np.arange(split.sum())
    verts = np.vstack([mesh.vertices, mesh.nodes[nv:][split]])

    tris, parents = [], []
    for e in range(mesh.n_elements):
        v = mesh.elements[e]
        ge = el_edges[e]
        s = split[ge]
        m = new_id[ge]
        count = int(s.sum())
        if count == 0:
            kids = [tuple(v)]
        elif count == 3:
            kids = [(v[0], m[0], m[2]), (m[0], v[1], m[1]), (m[2], m[1], v[2]), (m[0], m[1], m[2])]
        else:
            k = int(longest[e])
            a, b, c = v[local[0][k]], v[local[1][k]], v[local[2][k]]
            mk = m[k]
            left, right = [(a, mk, c)], [(mk, b, c)]
            # edge (c, a) is local k+2, edge (b, c) is local k+1
            k_ca, k_bc = (k + 2) % 3, (k + 1) % 3
            if s[k_ca]:
                p = m[k_ca]
                left = [(a, mk, p), (mk, c, p)]
            if s[k_bc]:
                p = m[k_bc]
                right = [(mk, b, p), (mk, p, c)]
            kids = left + right
        tris += kids
        parents += [e] * len(kids)

    edge_index = {tuple(ed): i for i, ed in enumerate(mesh.edges)}
    bnd, tags = [], []
    for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        gid = edge_index[_edge_key(int(a), int(b))]
        if split[gid]:
            bnd += [(a, new_id[gid]), (new_id[gid], b)]
            tags += [tag, tag]
        else:
            bnd.append((a, b))
            tags.append(tag)
    parents = np.array(parents, dtype=np.int64)
    new = TriMesh(verts, np.array(tris, dtype=np.int64), mesh.material[parents],
                  np.array(bnd, dtype=np.int64), np.array(tags, dtype=np.int64), parent=parents)
    worst = new.min_angles().min()
    if worst < min_angle:
        raise QualityError(f"refinement produced a {worst:.2f} degree angle (limit {min_angle})")
    return new


def refine_uniform(mesh: TriMesh) -> TriMesh:
    return refine_marked(mesh, np.ones(mesh.n_elements, dtype=bool))


def p2_shape(bary: np.ndarray) -> np.ndarray:
    """Quadratic shape functions at barycentric points ``(..., 3)`` -> ``(..., 6)``."""
    l0, l1, l2 = bary[..., 0], bary[..., 1], bary[..., 2]
    return np.stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
                     4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0], axis=-1)


def barycentric(tri: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of ``pts (n, k, 2)`` in triangles ``tri (n, 3, 2)``."""
    t = np.asarray(tri, dtype=float)
    m = np.stack([t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]], axis=-1)
    rhs = np.asarray(pts, dtype=float) - t[:, None, 0]
    lam12 = np.linalg.solve(m[:, None], rhs[..., None])[..., 0]
    return np.concatenate([1.0 - lam12.sum(axis=-1, keepdims=True), lam12], axis=-1)


def prolongate(old: TriMesh, new: TriMesh, values: np.ndarray) -> np.ndarray:
    """Interpolate a P2 nodal field onto a mesh refined from ``old``.

    Exact for nested meshes: quadratic fields are reproduced.
    """
    if new.parent is None:
        raise ValueError("target mesh carries no parent map")
    vals = np.asarray(values, dtype=float)
    par = new.parent
    bary = barycentric(old.vertices[old.elements[par]], new.nodes[new.element_nodes])
    shape = p2_shape(bary)                                  # (ne, 6 new nodes, 6 old nodes)
    local = vals[old.element_nodes[par]]                    # (ne, 6, ...)
    interp = np.einsum("eij,ej...->ei...", shape, local)
    out = np.zeros((new.n_nodes,) + vals.shape[1:])
    out[new.element_nodes.ravel()] = interp.reshape((-1,) + vals.shape[1:])
    return out


# --- loads and export ---------------------------------------------------

def body_load(mesh: TriMesh, materials: Mapping[int, Material] | Sequence[Material],
              water: WaterTable | None = None) -> np.ndarray:
    """Element-wise gravity force density ``(0, -gamma_eff)`` in kN/m^3.

    Elements whose centroid lies below the water table carry the buoyant
    weight ``gamma_sat - gamma_w``.
    """
    ids = np.unique(mesh.material)
    lookup = materials if isinstance(materials, Mapping) else dict(enumerate(materials))
    missing = [int(i) for i in ids if int(i) not in lookup]
    if missing:
        raise KeyError(f"material ids {missing} are not defined")
    gamma = np.array([lookup[int(m)].gamma_unsat for m in mesh.material])
    if water is not None:
        cen = mesh.centroids()
        below = cen[:, 1] < water.level(cen[:, 0])
        sat = np.array([lookup[int(m)].gamma_sat for m in mesh.material])
        gamma = np.where(below, sat - water.gamma_w, gamma)
    force = np.zeros((mesh.n_elements, 2))
    force[:, 1] = -gamma
    return force


VTK_QUADRATIC_TRIANGLE = 22


def export_vtk(mesh: TriMesh, fields: Mapping[str, np.ndarray] | None, path: str | os.PathLike) -> None:
    """Write a legacy ASCII VTK unstructured grid with quadratic triangles.

    Arrays of length ``n_elements`` become cell data, arrays of length
    ``n_nodes`` point data; ``(n, 2)`` arrays are written as 3-vectors.
    """
    fields = dict(fields or {})
    point, cell = {}, {}
    for name, arr in fields.items():
        arr = np.asarray(arr, dtype=float)
        if len(arr) == mesh.n_nodes:
            point[name] = arr
        elif len(arr) == mesh.n_elements:
            cell[name] = arr
        else:
            raise ValueError(f"field {name!r} has length {len(arr)}; expected "
                             f"{mesh.n_nodes} nodes or {mesh.n_elements} elements")
    out = ["# vtk DataFile Version 3.0", "opt-ssr field export", "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {mesh.n_nodes} double"]
    out += [f"{x:.12g} {y:.12g} 0" for x, y in mesh.nodes]
    out.append(f"CELLS {mesh.n_elements} {7 * mesh.n_elements}")
    out += ["6 " + " ".join(str(int(i)) for i in row) for row in mesh.element_nodes]
    out.append(f"CELL_TYPES {mesh.n_elements}")
    out += [str(VTK_QUADRATIC_TRIANGLE)] * mesh.n_elements

    def block(kind, count, data):
        if not data:
            return []
        lines = [f"{kind} {count}"]
        for name, arr in data.items():
            safe = name.replace(" ", "_")
            if arr.ndim == 1:
                lines += [f"SCALARS {safe} double 1", "LOOKUP_TABLE default"]
                lines += [f"{v:.12g}" for v in arr]
            else:
                vec = np.zeros((len(arr), 3))
                vec[:, :arr.shape[1]] = arr
                lines.append(f"VECTORS {safe} double")
                lines += [f"{a:.12g} {b:.12g} {c:.12g}" for a, b, c in vec]
        return lines

    out += block("POINT_DATA", mesh.n_nodes, point)
    out += block("CELL_DATA", mesh.n_elements, cell)
    try:
        Path(path).write_text("\n".join(out) + "\n", encoding="ascii")
    except OSError as exc:
        raise IOError(f"cannot write VTK file {path}: {exc}") from exc
