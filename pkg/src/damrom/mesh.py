"""Triangulated dam cross-sections with tagged boundary parts.

Boundary tags follow the dam layout:

``UD``  upstream face above the reservoir level (dry)
``UW``  upstream face at or below the reservoir level (wet)
``B``   foundation
``D``   downstream face
``T``   crest
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TAGS = ("UD", "UW", "B", "D", "T")


class MeshError(ValueError):
    """Invalid mesh data or unreadable mesh file."""


@dataclass(frozen=True)
class DamGeometry:
    """Trapezoidal embankment, upstream face on the left (x = 0 at the toe).

    Slopes are run:rise. Zero slopes give a rectangle, which is handy for
    verification problems.
    """

    H: float = 10.0
    WL: float = 7.0
    crest_width: float = 4.0
    upstream_slope: float = 2.0
    downstream_slope: float = 2.0

    def __post_init__(self):
        if not self.H > 0:
            raise MeshError(f"dam height must be positive, got {self.H}")
        if not 0 < self.WL < self.H:
            raise MeshError(f"water level must lie in (0, H), got {self.WL}")
        if not self.crest_width > 0:
            raise MeshError(f"crest width must be positive, got {self.crest_width}")
        if self.upstream_slope < 0 or self.downstream_slope < 0:
            raise MeshError("slopes must be non-negative")

    @property
    def base_width(self) -> float:
        return self.crest_width + (self.upstream_slope + self.downstream_slope) * self.H

    def x_left(self, y):
        return self.upstream_slope * np.asarray(y, dtype=float)

    def x_right(self, y):
        return self.base_width - self.downstream_slope * np.asarray(y, dtype=float)

    def area(self) -> float:
        return 0.5 * (self.base_width + self.crest_width) * self.H

    def polygon(self) -> np.ndarray:
        return np.array([[0.0, 0.0], [self.base_width, 0.0],
                         [self.x_right(self.H), self.H], [self.x_left(self.H), self.H]])


class Mesh:
    """Linear triangle mesh with tagged boundary edges.

    Arrays are made read-only on construction; treat instances as immutable.
    """

    def __init__(self, nodes, triangles, edges, edge_tags, validate: bool = True):
        self.nodes = np.ascontiguousarray(nodes, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.edges = np.ascontiguousarray(edges, dtype=np.int64).reshape(-1, 2)
        self.edge_tags = np.asarray(edge_tags, dtype=object)
        for a in (self.nodes, self.triangles, self.edges, self.edge_tags):
            a.setflags(write=False)
        if validate:
            self.validate()

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def tags(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.edge_tags.tolist())))

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def topological_boundary(self) -> np.ndarray:
        """Edges (sorted node pairs) that belong to exactly one triangle."""
        t = self.triangles
        all_edges = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        uniq, counts = np.unique(all_edges, axis=0, return_counts=True)
        return uniq[counts == 1]

    def validate(self) -> None:
        n = self.n_nodes
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= n):
            raise MeshError("triangle node index out of range")
        if self.edges.size and (self.edges.min() < 0 or self.edges.max() >= n):
            raise MeshError("boundary edge node index out of range")
        areas = self.signed_areas()
        bad = np.flatnonzero(areas <= 0)
        if bad.size:
            raise MeshError(f"triangle {bad[0]} has non-positive area {areas[bad[0]]:.3e}")
        if len(self.edge_tags) != len(self.edges):
            raise MeshError("one tag per boundary edge required")
        unknown = set(self.edge_tags.tolist()) - set(TAGS)
        if unknown:
            raise MeshError(f"unknown boundary tags {sorted(unknown)}")
        tagged = np.sort(self.edges, axis=1)
        uniq, counts = np.unique(tagged, axis=0, return_counts=True)
        if np.any(counts > 1):
            raise MeshError(f"boundary edge {uniq[counts > 1][0].tolist()} carries more than one tag")
        boundary = self.topological_boundary()
        b_keys = set(map(tuple, boundary.tolist()))
        t_keys = set(map(tuple, uniq.tolist()))
        missing = b_keys - t_keys
        if missing:
            raise MeshError(f"untagged boundary edge {sorted(missing)[0]}")
        extra = t_keys - b_keys
        if extra:
            raise MeshError(f"tagged edge {sorted(extra)[0]} is not on the boundary")

    def edges_with_tag(self, tag: str) -> np.ndarray:
        return self.edges[self.edge_tags == tag]

    def nodes_with_tag(self, tag: str) -> np.ndarray:
        return np.unique(self.edges_with_tag(tag))

    def fingerprint(self) -> str:
        """Content hash of geometry, connectivity and tags."""
        h = hashlib.sha256()
        h.update(self.nodes.tobytes())
        h.update(self.triangles.tobytes())
        h.update(self.edges.tobytes())
        h.update("|".join(self.edge_tags.tolist()).encode())
        return h.hexdigest()


def boundary_measure(mesh: Mesh, tag: str) -> float:
    """Total length (m) of the edges carrying ``tag``."""
    if tag not in TAGS:
        raise MeshError(f"unknown tag {tag!r}")
    e = mesh.edges_with_tag(tag)
    if len(e) == 0:
        return 0.0
    d = mesh.nodes[e[:, 1]] - mesh.nodes[e[:, 0]]
    return float(np.sum(np.hypot(d[:, 0], d[:, 1])))


def _row_levels(geom: DamGeometry, n_rows: int) -> np.ndarray:
    """y coordinates of the grid rows, with the water level on a row line."""
    n_below = int(np.clip(round(n_rows * geom.WL / geom.H), 1, n_rows - 1))
    below = np.linspace(0.0, geom.WL, n_below + 1)
    above = np.linspace(geom.WL, geom.H, n_rows - n_below + 1)[1:]
    return np.concatenate([below, above])


def _structured(x_of, ys: np.ndarray, nx: int):
    """Mapped grid: row j spans x_of(y_j) with nx equal divisions."""
    ny = len(ys) - 1
    s = np.linspace(0.0, 1.0, nx + 1)
    xl, xr = x_of(ys)
    X = xl[:, None] + (xr - xl)[:, None] * s[None, :]
    Y = np.repeat(ys[:, None], nx + 1, axis=1)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((ny + 1) * (nx + 1)).reshape(ny + 1, nx + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[1:, :-1].ravel()
    tris = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    # interleave so that the two halves of a cell are adjacent
    tris = tris.reshape(2, -1, 3).transpose(1, 0, 2).reshape(-1, 3)
    return nodes, tris, idx


def generate_dam_mesh(geom: DamGeometry, n_levels: int) -> Mesh:
    """Structured triangulation of the dam cross-section.

    ``n_levels`` rows are used vertically; the horizontal division count is
    ``n_levels`` times the rounded mean width-to-height ratio (at least 1), so
    the element count grows quadratically with ``n_levels``.
    """
    if n_levels < 2:
        raise MeshError(f"n_levels must be >= 2, got {n_levels}")
    if geom.area() <= 0 or geom.x_right(geom.H) - geom.x_left(geom.H) <= 0:
        raise MeshError("degenerate dam geometry")
    aspect = 0.5 * (geom.base_width + geom.crest_width) / geom.H
    nx = n_levels * max(1, int(round(aspect)))
    ys = _row_levels(geom, n_levels)
    nodes, tris, idx = _structured(lambda y: (geom.x_left(y), geom.x_right(y)), ys, nx)

    tol = 1e-9 * geom.H
    edges, tags = [], []
    bottom = idx[0]
    for i in range(nx):
        edges.append((bottom[i], bottom[i + 1])); tags.append("B")
    right = idx[:, -1]
    for j in range(len(ys) - 1):
        edges.append((right[j], right[j + 1])); tags.append("D")
    top = idx[-1]
    for i in range(nx, 0, -1):
        edges.append((top[i], top[i - 1])); tags.append("T")
    left = idx[:, 0]
    for j in range(len(ys) - 1, 0, -1):
        ya, yb = ys[j], ys[j - 1]
        wet = max(ya, yb) <= geom.WL + tol
        edges.append((left[j], left[j - 1])); tags.append("UW" if wet else "UD")
    return Mesh(nodes, tris, np.array(edges), tags)


def rectangle_mesh(width: float, height: float, nx: int, ny: int) -> Mesh:
    """Rectangle [0, width] x [0, height]; left side tagged UD, right side D."""
    if width <= 0 or height <= 0 or nx < 1 or ny < 1:
        raise MeshError("degenerate rectangle")
    ys = np.linspace(0.0, height, ny + 1)
    nodes, tris, idx = _structured(
        lambda y: (np.zeros_like(y), np.full_like(y, width)), ys, nx)
    edges, tags = [], []
    for i in range(nx):
        edges.append((idx[0, i], idx[0, i + 1])); tags.append("B")
        edges.append((idx[-1, i + 1], idx[-1, i])); tags.append("T")
    for j in range(ny):
        edges.append((idx[j, -1], idx[j + 1, -1])); tags.append("D")
        edges.append((idx[j + 1, 0], idx[j, 0])); tags.append("UD")
    return Mesh(nodes, tris, np.array(edges), tags)


# --- Gmsh MSH ASCII -------------------------------------------------------

class _Lines:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.i = 0

    def next(self) -> str:
        while self.i < len(self.lines):
            line = self.lines[self.i].strip()
            self.i += 1
            if line:
                return line
        raise MeshError(f"line {self.i}: unexpected end of file")

    @property
    def lineno(self) -> int:
        return self.i

    def fail(self, msg: str):
        raise MeshError(f"line {self.lineno}: {msg}")

    def ints(self) -> list[int]:
        line = self.next()
        try:
            return [int(v) for v in line.split()]
        except ValueError:
            self.fail(f"expected integers, got {line!r}")

    def floats(self) -> list[float]:
        line = self.next()
        try:
            return [float(v) for v in line.split()]
        except ValueError:
            self.fail(f"expected numbers, got {line!r}")

    def expect(self, token: str):
        line = self.next()
        if line != token:
            self.fail(f"expected {token}, got {line!r}")


def _skip_section(src: _Lines, name: str):
    end = "$End" + name[1:]
    while src.next() != end:
        pass


def read_msh(path) -> Mesh:
    """Read a 2D triangle mesh from a Gmsh ASCII file (format 2.2 or 4.1).

    Boundary lines must belong to physical groups named UD, UW, B, D or T.
    """
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError:
        raise MeshError("line 2: unsupported format (binary MSH)") from None
    src = _Lines(text)
    version = None
    names: dict[int, str] = {}
    node_ids: list[int] = []
    coords: list[list[float]] = []
    tri_raw: list[tuple[int, int, int, int]] = []   # (line, a, b, c)
    line_raw: list[tuple[int, int, int, int]] = []  # (line, physical, a, b)
    entity_phys: dict[tuple[int, int], list[int]] = {}

    while True:
        try:
            head = src.next()
        except MeshError:
            break
        if head == "$MeshFormat":
            parts = src.next().split()
            if len(parts) < 3:
                src.fail("malformed $MeshFormat")
            version, ftype = parts[0], parts[1]
            if ftype != "0":
                src.fail("unsupported format (binary MSH)")
            if version not in ("2.2", "4.1"):
                src.fail(f"unsupported MSH version {version}")
            src.expect("$EndMeshFormat")
        elif head == "$PhysicalNames":
            (n,) = src.ints()
            for _ in range(n):
                line = src.next().split(maxsplit=2)
                if len(line) != 3:
                    src.fail("malformed physical name")
                names[int(line[1])] = line[2].strip('"')
                if int(line[0]) == 1 and line[2].strip('"') not in TAGS:
                    src.fail(f"unknown boundary group {line[2]}")
            src.expect("$EndPhysicalNames")
        elif head == "$Entities":
            if version != "4.1":
                src.fail("$Entities outside MSH 4.1")
            counts = src.ints()
            for dim, cnt in enumerate(counts):
                for _ in range(cnt):
                    vals = src.next().split()
                    tag = int(vals[0])
                    off = 4 if dim == 0 else 7
                    nphys = int(vals[off])
                    entity_phys[(dim, tag)] = [int(v) for v in vals[off + 1: off + 1 + nphys]]
            src.expect("$EndEntities")
        elif head == "$Nodes":
            if version == "2.2":
                (n,) = src.ints()
                for _ in range(n):
                    v = src.floats()
                    node_ids.append(int(v[0])); coords.append(v[1:3])
            elif version == "4.1":
                nblocks, _, _, _ = src.ints()
                for _ in range(nblocks):
                    _, _, parametric, nb = src.ints()
                    tags = [src.ints()[0] for _ in range(nb)]
                    for t in tags:
                        v = src.floats()
                        node_ids.append(t); coords.append(v[0:2])
            else:
                src.fail("$Nodes before $MeshFormat")
            src.expect("$EndNodes")
        elif head == "$Elements":
            if version == "2.2":
                (n,) = src.ints()
                for _ in range(n):
                    v = src.ints()
                    etype, ntags = v[1], v[2]
                    phys = v[3] if ntags > 0 else 0
                    conn = v[3 + ntags:]
                    if len(conn) < {1: 2, 2: 3}.get(etype, 0):
                        src.fail("truncated element record")
                    if etype == 1:
                        line_raw.append((src.lineno, phys, conn[0], conn[1]))
                    elif etype == 2:
                        tri_raw.append((src.lineno, *conn[:3]))
                    elif etype == 15:
                        pass
                    else:
                        src.fail(f"unsupported element type {etype} (only lines and triangles)")
            elif version == "4.1":
                nblocks, _, _, _ = src.ints()
                for _ in range(nblocks):
                    dim, etag, etype, nb = src.ints()
                    phys_list = entity_phys.get((dim, etag), [])
                    phys = phys_list[0] if phys_list else 0
                    for _ in range(nb):
                        v = src.ints()
                        if len(v) < 1 + {1: 2, 2: 3}.get(etype, 0):
                            src.fail("truncated element record")
                        if etype == 1:
                            line_raw.append((src.lineno, phys, v[1], v[2]))
                        elif etype == 2:
                            tri_raw.append((src.lineno, v[1], v[2], v[3]))
                        elif etype == 15:
                            pass
                        else:
                            src.fail(f"unsupported element type {etype} (only lines and triangles)")
            else:
                src.fail("$Elements before $MeshFormat")
            src.expect("$EndElements")
        elif head.startswith("$"):
            _skip_section(src, head)
        else:
            src.fail(f"unexpected content {head!r}")

    if version is None:
        raise MeshError("line 1: missing $MeshFormat")
    if not tri_raw:
        raise MeshError("no triangles found")
    if not names:
        raise MeshError("missing physical groups (UD/UW/B/D/T)")
    index = {nid: k for k, nid in enumerate(node_ids)}

    def lookup(lineno, nid):
        try:
            return index[nid]
        except KeyError:
            raise MeshError(f"line {lineno}: unknown node {nid}") from None

    tris = np.array([[lookup(t[0], v) for v in t[1:]] for t in tri_raw], dtype=np.int64)
    edges, tags = [], []
    for lineno, phys, a, b in line_raw:
        if phys not in names:
            raise MeshError(f"line {lineno}: boundary line without a named physical group")
        edges.append((lookup(lineno, a), lookup(lineno, b)))
        tags.append(names[phys])
    nodes = np.array(coords, dtype=float)
    p = nodes[tris]
    area = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    flip = area < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return Mesh(nodes, tris, np.array(edges, dtype=np.int64).reshape(-1, 2), tags)


def write_msh(mesh: Mesh, path) -> None:
    """Write ``mesh`` as Gmsh ASCII 2.2 with one physical group per tag."""
    phys = {tag: k + 1 for k, tag in enumerate(TAGS)}
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$PhysicalNames", str(len(TAGS) + 1)]
    out += [f'1 {phys[t]} "{t}"' for t in TAGS]
    out += ['2 100 "domain"', "$EndPhysicalNames", "$Nodes", str(mesh.n_nodes)]
    out += [f"{i + 1} {x:.17g} {y:.17g} 0" for i, (x, y) in enumerate(mesh.nodes)]
    out += ["$EndNodes", "$Elements", str(len(mesh.edges) + mesh.n_triangles)]
    k = 1
    for (a, b), tag in zip(mesh.edges, mesh.edge_tags):
        out.append(f"{k} 1 2 {phys[tag]} {phys[tag]} {a + 1} {b + 1}")
        k += 1
    for a, b, c in mesh.triangles:
        out.append(f"{k} 2 2 100 1 {a + 1} {b + 1} {c + 1}")
        k += 1
    out.append("$EndElements")
    Path(path).write_text("\n".join(out) + "\n")
