"""Two-level structured meshes on the unit square.

The fine grid is a uniform N x N quadrilateral grid (N = nH * refine) obtained
by refining each cell of a coarse nH x nH grid `refine` times.  The coarse
skeleton carries the multiscale construction: interior coarse nodes, the
coarse edges that are not contained in the outer boundary, and for every such
edge a small union of surrounding elements (the oversampling domain) on which
local problems are posed.

Fine nodes are indexed row-major, node (ix, iy) -> iy * (N + 1) + ix, fine
cells likewise (cx, cy) -> cy * N + cx.  All local subdomains used by the
solver (single coarse elements, oversampling blocks, the whole domain) are
axis-aligned rectangles of fine cells, represented by CellRect.
"""

from dataclasses import dataclass

import numpy as np

# node / segment kinds
INTERIOR = 0
DIRICHLET = 1
NEUMANN = 2
ROBIN = 3

KIND_BY_NAME = {"dirichlet": DIRICHLET, "neumann": NEUMANN, "robin": ROBIN}
NAME_BY_KIND = {v: k for k, v in KIND_BY_NAME.items()}

# order in which side arrays are stored; (0,0) corner is bottom-left
SIDES = ("bottom", "right", "top", "left")

# tag precedence at corners: dirichlet wins over robin wins over neumann
_PRECEDENCE = {DIRICHLET: 3, ROBIN: 2, NEUMANN: 1}


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Coarse grid resolution and refinement factor (H = 1/nH, h = H/refine)."""

    nH: int
    refine: int

    def __post_init__(self):
        if self.nH < 2:
            raise MeshError(f"nH must be >= 2, got {self.nH}")
        if self.refine < 2:
            raise MeshError(f"refine must be >= 2, got {self.refine}")

    @property
    def H(self):
        return 1.0 / self.nH

    @property
    def h(self):
        return 1.0 / (self.nH * self.refine)

    @property
    def n_fine(self):
        return self.nH * self.refine


class BoundaryClassification:
    """Partition of the four boundary sides into dirichlet/neumann/robin segments.

    segments: dict side -> list of (a, b, kind_name) covering [0, 1] without
    overlap.  The parametrisation runs along x for bottom/top and along y
    for left/right.  Segment endpoints must be aligned with the fine grid.
    """

    def __init__(self, segments):
        self.segments = {}
        for side in SIDES:
            if side not in segments:
                raise MeshError(f"missing boundary side {side!r}")
            segs = []
            for a, b, kind in segments[side]:
                if kind not in KIND_BY_NAME:
                    raise MeshError(f"unknown boundary kind {kind!r}")
                if not (0.0 <= a < b <= 1.0):
                    raise MeshError(f"bad segment ({a}, {b}) on side {side!r}")
                segs.append((float(a), float(b), kind))
            segs.sort()
            cursor = 0.0
            for a, b, _ in segs:
                if abs(a - cursor) > 1e-12:
                    raise MeshError(
                        f"segments on side {side!r} leave a gap or overlap at {a}"
                    )
                cursor = b
            if abs(cursor - 1.0) > 1e-12:
                raise MeshError(f"segments on side {side!r} do not reach 1.0")
            self.segments[side] = segs

    @classmethod
    def uniform(cls, kind):
        return cls({side: [(0.0, 1.0, kind)] for side in SIDES})

    @classmethod
    def all_robin(cls):
        return cls.uniform("robin")

    @classmethod
    def all_dirichlet(cls):
        return cls.uniform("dirichlet")

    @classmethod
    def from_dict(cls, d):
        """Accepts per side either a kind name or a list of (a, b, kind)."""
        segments = {}
        for side in SIDES:
            spec = d.get(side)
            if isinstance(spec, str):
                segments[side] = [(0.0, 1.0, spec)]
            elif spec is not None:
                segments[side] = [tuple(seg) for seg in spec]
        return cls(segments)

    def check_aligned(self, h):
        """Segment endpoints must be integer multiples of the fine mesh size."""
        for side, segs in self.segments.items():
            for a, b, _ in segs:
                for t in (a, b):
                    if abs(t / h - round(t / h)) > 1e-9:
                        raise MeshError(
                            f"segment endpoint {t} on side {side!r} is not aligned "
                            f"with h = {h}"
                        )

    def segment_kinds(self, n):
        """Per-side int8 arrays of length n: kind of each fine boundary segment."""
        h = 1.0 / n
        out = {}
        for side in SIDES:
            kinds = np.empty(n, dtype=np.int8)
            mids = (np.arange(n) + 0.5) * h
            for s, t in enumerate(mids):
                for a, b, kind in self.segments[side]:
                    if a <= t <= b:
                        kinds[s] = KIND_BY_NAME[kind]
                        break
                else:  # pragma: no cover - prevented by constructor
                    raise MeshError(f"no segment covers {t} on side {side!r}")
            out[side] = kinds
        return out


@dataclass(frozen=True)
class CellRect:
    """Half-open rectangle of fine cells [x0, x1) x [y0, y1)."""

    x0: int
    x1: int
    y0: int
    y1: int

    def __post_init__(self):
        if self.x0 >= self.x1 or self.y0 >= self.y1:
            raise MeshError(f"empty cell rectangle {self}")

    @property
    def nx(self):
        return self.x1 - self.x0

    @property
    def ny(self):
        return self.y1 - self.y0

    @property
    def n_cells(self):
        return self.nx * self.ny

    @property
    def n_nodes(self):
        return (self.nx + 1) * (self.ny + 1)


@dataclass(frozen=True)
class Edge:
    """Coarse edge between two coarse nodes; `horizontal` edges run along x.

    (i, j) are the coarse coordinates of the first endpoint; the second
    endpoint is (i+1, j) for horizontal and (i, j+1) for vertical edges.
    """

    id: int
    horizontal: bool
    i: int
    j: int

    @property
    def endpoints(self):
        if self.horizontal:
            return (self.i, self.j), (self.i + 1, self.j)
        return (self.i, self.j), (self.i, self.j + 1)


@dataclass(frozen=True)
class OversamplingDomain:
    """Union of the coarse elements whose closure touches a coarse edge.

    nodes are the global fine-node ids of the covering rectangle (row-major),
    partitioned by local index into interior nodes, dirichlet nodes (the part
    of the rectangle boundary where traces are prescribed) and natural nodes
    (on the outer boundary with neumann or robin data).
    """

    edge_id: int
    element_ids: tuple
    rect: CellRect
    nodes: np.ndarray
    interior_loc: np.ndarray
    dirichlet_loc: np.ndarray
    natural_loc: np.ndarray


class TwoLevelMesh:
    """Coarse/fine grid pair with boundary tags and the coarse skeleton."""

    def __init__(self, grid, bc):
        self.grid = grid
        self.bc = bc
        bc.check_aligned(grid.h)
        n = grid.n_fine
        self.n_fine = n
        self.n_nodes = (n + 1) * (n + 1)
        self.side_segment_kinds = bc.segment_kinds(n)
        self.node_tag = self._tag_nodes()
        self.coarse_nodes = [
            (i, j) for j in range(1, grid.nH) for i in range(1, grid.nH)
        ]
        self.coarse_node_index = {ij: a for a, ij in enumerate(self.coarse_nodes)}
        self.edges = self._build_edges()
        self.n_elements = grid.nH * grid.nH

    # -- construction -----------------------------------------------------

    def _tag_nodes(self):
        n = self.n_fine
        tags = np.zeros(self.n_nodes, dtype=np.int8)
        kinds = self.side_segment_kinds
        for side in SIDES:
            side_kinds = kinds[side]
            for s in range(n + 1):
                adjacent = []
                if s > 0:
                    adjacent.append(side_kinds[s - 1])
                if s < n:
                    adjacent.append(side_kinds[s])
                kind = max(adjacent, key=lambda k: _PRECEDENCE[k])
                node = self._side_node(side, s)
                if tags[node] == INTERIOR:
                    tags[node] = kind
                elif _PRECEDENCE[kind] > _PRECEDENCE[tags[node]]:
                    tags[node] = kind
        return tags

    def _side_node(self, side, s):
        n = self.n_fine
        if side == "bottom":
            return self.node_id(s, 0)
        if side == "top":
            return self.node_id(s, n)
        if side == "left":
            return self.node_id(0, s)
        return self.node_id(n, s)

    def _build_edges(self):
        nH = self.grid.nH
        edges = []
        for j in range(1, nH):
            for i in range(nH):
                edges.append(Edge(len(edges), True, i, j))
        for j in range(nH):
            for i in range(1, nH):
                edges.append(Edge(len(edges), False, i, j))
        return edges

    # -- indexing ---------------------------------------------------------

    def node_id(self, ix, iy):
        return iy * (self.n_fine + 1) + ix

    def node_xy(self, ids):
        """Coordinates of fine nodes (vectorised)."""
        ids = np.asarray(ids)
        h = self.grid.h
        return (ids % (self.n_fine + 1)) * h, (ids // (self.n_fine + 1)) * h

    def coarse_node_interior(self, ij):
        i, j = ij
        return 1 <= i <= self.grid.nH - 1 and 1 <= j <= self.grid.nH - 1

    def coarse_node_fine_id(self, ij):
        r = self.grid.refine
        return self.node_id(ij[0] * r, ij[1] * r)

    # -- elements ---------------------------------------------------------

    def element_rect(self, t):
        nH, r = self.grid.nH, self.grid.refine
        ic, jc = t % nH, t // nH
        return CellRect(ic * r, (ic + 1) * r, jc * r, (jc + 1) * r)

    def element_edges(self, t):
        """Edge ids of the four element sides (bottom, right, top, left);
        -1 where the side lies in the outer boundary."""
        nH = self.grid.nH
        ic, jc = t % nH, t // nH
        out = []
        for hor, i, j in (
            (True, ic, jc),
            (False, ic + 1, jc),
            (True, ic, jc + 1),
            (False, ic, jc),
        ):
            out.append(self._edge_id(hor, i, j))
        return out

    def _edge_id(self, horizontal, i, j):
        nH = self.grid.nH
        if horizontal:
            if j < 1 or j > nH - 1:
                return -1
            return (j - 1) * nH + i
        if i < 1 or i > nH - 1:
            return -1
        return nH * (nH - 1) + j * (nH - 1) + (i - 1)

    def whole_domain(self):
        return CellRect(0, self.n_fine, 0, self.n_fine)

    # -- edges ------------------------------------------------------------

    def edge_elements(self, e):
        """The two coarse elements sharing edge e."""
        nH = self.grid.nH
        if e.horizontal:
            return ((e.j - 1) * nH + e.i, e.j * nH + e.i)
        return (e.j * nH + e.i - 1, e.j * nH + e.i)

    def edge_fine_nodes(self, e):
        """Global ids of the refine+1 fine nodes along e, first endpoint first."""
        r = self.grid.refine
        s = np.arange(r + 1)
        if e.horizontal:
            return self.node_id(e.i * r + s, e.j * r)
        return self.node_id(e.i * r, e.j * r + s)

    def edge_endpoint_interior(self, e):
        p0, p1 = e.endpoints
        return self.coarse_node_interior(p0), self.coarse_node_interior(p1)

    def edge_residue_slots(self, e):
        """Positions s along e (0..refine) where interpolation residues live.

        Interior fine nodes always; an endpoint is included when it lies on
        the natural (neumann/robin) part of the outer boundary, where no tent
        function pins the value.  Interior endpoints and dirichlet endpoints
        carry residue zero.
        """
        r = self.grid.refine
        nodes = self.edge_fine_nodes(e)
        first_int, second_int = self.edge_endpoint_interior(e)
        slots = []
        if not first_int and self.node_tag[nodes[0]] in (NEUMANN, ROBIN):
            slots.append(0)
        slots.extend(range(1, r))
        if not second_int and self.node_tag[nodes[r]] in (NEUMANN, ROBIN):
            slots.append(r)
        return np.array(slots, dtype=np.intp)

    def edge_interpolation_weights(self, e):
        """(refine+1, 2) weights of the linear interpolant along e.

        Column 0/1 multiply the values at the first/second endpoint; the
        column of an endpoint that is not an interior coarse node is zero
        (no tent function is attached there).
        """
        r = self.grid.refine
        s = np.arange(r + 1) / r
        w = np.stack([1.0 - s, s], axis=1)
        first_int, second_int = self.edge_endpoint_interior(e)
        if not first_int:
            w[:, 0] = 0.0
        if not second_int:
            w[:, 1] = 0.0
        return w

    def node_patch(self, ij):
        """Element ids and edge ids around an interior coarse node."""
        i, j = ij
        nH = self.grid.nH
        elements = [
            (j - 1) * nH + (i - 1),
            (j - 1) * nH + i,
            j * nH + (i - 1),
            j * nH + i,
        ]
        edges = [
            self._edge_id(True, i - 1, j),
            self._edge_id(True, i, j),
            self._edge_id(False, i, j - 1),
            self._edge_id(False, i, j),
        ]
        return elements, edges

    # -- rectangles of cells ----------------------------------------------

    def rect_nodes(self, rect):
        """Global ids of the rect's fine nodes, row-major local ordering."""
        xs = np.arange(rect.x0, rect.x1 + 1)
        ys = np.arange(rect.y0, rect.y1 + 1)
        return (ys[:, None] * (self.n_fine + 1) + xs[None, :]).ravel()

    def rect_cells(self, rect):
        xs = np.arange(rect.x0, rect.x1)
        ys = np.arange(rect.y0, rect.y1)
        return (ys[:, None] * self.n_fine + xs[None, :]).ravel()

    def classify_rect_nodes(self, rect):
        """Split the rect's nodes into interior / dirichlet / natural.

        Nodes on a rect side interior to the domain are dirichlet (their
        values are prescribed by traces in local problems); nodes on a rect
        side lying in the outer boundary inherit the global tag.  A node on
        several rect sides is dirichlet as soon as one side says so.
        """
        n = self.n_fine
        nx, ny = rect.nx + 1, rect.ny + 1
        ix = np.tile(np.arange(rect.x0, rect.x1 + 1), ny)
        iy = np.repeat(np.arange(rect.y0, rect.y1 + 1), nx)
        nodes = iy * (n + 1) + ix
        tags = self.node_tag[nodes]

        on_left = ix == rect.x0
        on_right = ix == rect.x1
        on_bottom = iy == rect.y0
        on_top = iy == rect.y1

        dirichlet = np.zeros(nodes.shape, dtype=bool)
        natural = np.zeros(nodes.shape, dtype=bool)
        for on_side, outer in (
            (on_left, rect.x0 == 0),
            (on_right, rect.x1 == n),
            (on_bottom, rect.y0 == 0),
            (on_top, rect.y1 == n),
        ):
            if outer:
                dirichlet |= on_side & (tags == DIRICHLET)
                natural |= on_side & ((tags == NEUMANN) | (tags == ROBIN))
            else:
                dirichlet |= on_side
        natural &= ~dirichlet

        interior_loc = np.flatnonzero(~(dirichlet | natural))
        return nodes, interior_loc, np.flatnonzero(dirichlet), np.flatnonzero(natural)

    def rect_boundary_segments(self, rect):
        """Fine boundary segments of the rect lying in the outer boundary.

        Returns a list of (side, s, a, b, kind): side name, segment index
        along that side, the two global node ids, and the segment kind.
        """
        n = self.n_fine
        out = []
        if rect.y0 == 0:
            for s in range(rect.x0, rect.x1):
                out.append(
                    ("bottom", s, self.node_id(s, 0), self.node_id(s + 1, 0),
                     self.side_segment_kinds["bottom"][s])
                )
        if rect.x1 == n:
            for s in range(rect.y0, rect.y1):
                out.append(
                    ("right", s, self.node_id(n, s), self.node_id(n, s + 1),
                     self.side_segment_kinds["right"][s])
                )
        if rect.y1 == n:
            for s in range(rect.x0, rect.x1):
                out.append(
                    ("top", s, self.node_id(s, n), self.node_id(s + 1, n),
                     self.side_segment_kinds["top"][s])
                )
        if rect.x0 == 0:
            for s in range(rect.y0, rect.y1):
                out.append(
                    ("left", s, self.node_id(0, s), self.node_id(0, s + 1),
                     self.side_segment_kinds["left"][s])
                )
        return out


def build_mesh(grid, bc):
    """Construct the two-level mesh for a grid spec and boundary classification."""
    return TwoLevelMesh(grid, bc)


def oversampling_domain(mesh, e):
    """Oversampling domain of edge e: all elements whose closure touches e."""
    nH, r = mesh.grid.nH, mesh.grid.refine
    if e.horizontal:
        c0, c1 = max(e.i - 1, 0), min(e.i + 1, nH - 1)
        r0, r1 = e.j - 1, e.j
    else:
        c0, c1 = e.i - 1, e.i
        r0, r1 = max(e.j - 1, 0), min(e.j + 1, nH - 1)
    element_ids = tuple(
        jc * nH + ic for jc in range(r0, r1 + 1) for ic in range(c0, c1 + 1)
    )
    rect = CellRect(c0 * r, (c1 + 1) * r, r0 * r, (r1 + 1) * r)
    nodes, interior_loc, dirichlet_loc, natural_loc = mesh.classify_rect_nodes(rect)
    return OversamplingDomain(
        e.id, element_ids, rect, nodes, interior_loc, dirichlet_loc, natural_loc
    )
