"""
Structured quadrilateral meshes for the bilayer scenarios.

Elements are stored as counter-clockwise node 4-tuples.  Local node ``a`` of
an element sits at the reference corner ``(-1,-1), (1,-1), (1,1), (-1,1)``
and the four local edges follow the ordering of the RT0 basis:

    edge 1: top    (xi2 = +1), nodes 2 -> 3
    edge 2: right  (xi1 = +1), nodes 1 -> 2
    edge 3: bottom (xi2 = -1), nodes 0 -> 1
    edge 4: left   (xi1 = -1), nodes 3 -> 0

An edge carries sign +1 for an element when the global node number increases
along that element's counter-clockwise traversal, -1 otherwise.
"""

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FILM = 1
SUBSTRATE = 0
REGION_NAMES = {FILM: "film", SUBSTRATE: "substrate"}

TAGS = ("dirichlet_u_x", "dirichlet_u_y", "impermeable", "chem_loaded")

# (start, end) local nodes of local edges 1..4 along the CCW traversal
LOCAL_EDGE_NODES = ((2, 3), (1, 2), (0, 1), (3, 0))


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class EdgeTable:
    """Unique edges with element incidence and orientation signs.

    ``edges[k] = (a, b)`` with ``a < b``.  ``elem_edges[e, j]`` and
    ``elem_signs[e, j]`` give the global edge id and sign of local edge
    ``j + 1`` of element ``e``.
    """

    edges: np.ndarray
    elem_edges: np.ndarray
    elem_signs: np.ndarray

    @property
    def n_edges(self):
        return len(self.edges)

    def incidence(self, edge_id):
        """List of (element id, local edge index 1..4, sign) for one edge."""
        hits = np.argwhere(self.elem_edges == edge_id)
        return [(int(e), int(j) + 1, int(self.elem_signs[e, j])) for e, j in hits]

    def edge_counts(self):
        return np.bincount(self.elem_edges.ravel(), minlength=self.n_edges)

    def boundary_edges(self):
        return np.flatnonzero(self.edge_counts() == 1)

    def interior_edges(self):
        return np.flatnonzero(self.edge_counts() == 2)


def extract_edges(elements):
    """Build the :class:`EdgeTable` for CCW connectivity ``elements`` (n, 4)."""
    elements = np.asarray(elements, dtype=np.int64)
    if elements.ndim != 2 or elements.shape[1] != 4:
        raise MeshError("elements must have shape (n, 4)")
    start = elements[:, [p[0] for p in LOCAL_EDGE_NODES]]
    end = elements[:, [p[1] for p in LOCAL_EDGE_NODES]]
    lo = np.minimum(start, end)
    hi = np.maximum(start, end)
    if np.any(lo == hi):
        raise MeshError("degenerate edge with repeated node")
    keys = np.stack([lo.ravel(), hi.ravel()], axis=1)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(elements.shape)
    counts = np.bincount(inverse.ravel(), minlength=len(uniq))
    if np.any(counts > 2):
        bad = uniq[np.argmax(counts)]
        raise MeshError(f"non-manifold edge {tuple(bad)} shared by {counts.max()} elements")
    signs = np.where(end > start, 1, -1).astype(np.int8)
    return EdgeTable(edges=uniq, elem_edges=inverse, elem_signs=signs)


@dataclass(frozen=True)
class Mesh:
    """Quadrilateral mesh with regions, edge topology and boundary tags.

    ``boundary_tags`` maps each tag name to a sorted array of edge ids.
    ``surface_nodes`` is the ordered node path along the chemically loaded
    film surface (left to right, or counter-clockwise around a passage).
    """

    nodes: np.ndarray
    elements: np.ndarray
    regions: np.ndarray
    edges: EdgeTable
    boundary_tags: dict
    surface_nodes: np.ndarray
    kind: str
    periodic: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.elements)

    def tagged(self, tag):
        return self.boundary_tags.get(tag, np.zeros(0, dtype=np.int64))

    def edge_tags(self, edge_id):
        return {t for t, ids in self.boundary_tags.items() if edge_id in set(ids.tolist())}

    def signed_areas(self):
        x = self.nodes[self.elements, 0]
        y = self.nodes[self.elements, 1]
        return 0.5 * np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1)


def _check_ccw(nodes, elements):
    x = nodes[elements, 0]
    y = nodes[elements, 1]
    area = 0.5 * np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1)
    if np.any(area <= 0.0):
        raise MeshError(f"{np.sum(area <= 0)} elements are inverted or degenerate")


def _edges_between(edge_table, node_set):
    node_set = np.asarray(sorted(node_set))
    a, b = edge_table.edges[:, 0], edge_table.edges[:, 1]
    on = np.isin(a, node_set) & np.isin(b, node_set)
    boundary = edge_table.edge_counts() == 1
    return np.flatnonzero(on & boundary)


def _positive(**kw):
    for k, v in kw.items():
        if not np.isfinite(v) or v <= 0:
            raise MeshError(f"{k} must be > 0, got {v}")


def _graded(n, ratio):
    """n+1 points on [0,1] whose spacing shrinks geometrically toward 1."""
    if ratio == 1.0:
        return np.linspace(0.0, 1.0, n + 1)
    # spacing_k = q^k * h0 with q = ratio^(-1/(n-1)), first/last = ratio
    q = ratio ** (-1.0 / max(n - 1, 1))
    h = q ** np.arange(n)
    return np.concatenate([[0.0], np.cumsum(h) / h.sum()])


def build_rectangle_bilayer(L, H, w, nx, ny_sub, ny_film, grading=1.0, bottom_fix_ux=False):
    """Flat film/substrate bilayer on [0, L] x [0, H + w].

    The film occupies the top ``ny_film`` element rows.  ``grading`` > 1
    refines the substrate toward the film: the first substrate row is
    ``grading`` times thicker than the row below the interface.

    Boundary conditions: bottom has u_y fixed, left/right have u_x fixed,
    all three are impermeable; the top film surface is chemically loaded.
    With ``bottom_fix_ux`` the bottom is clamped (u_x fixed as well).
    """
    _positive(L=L, H=H, w=w, grading=grading)
    for name, n in (("nx", nx), ("ny_sub", ny_sub), ("ny_film", ny_film)):
        if int(n) != n or n <= 0:
            raise MeshError(f"{name} must be a positive integer, got {n}")
    if ny_film < 2:
        raise MeshError("ny_film must be >= 2 to resolve film bending")
    if nx % 2:
        raise MeshError("nx must be even")
    if w >= H:
        raise MeshError(f"film thickness w={w} must be smaller than substrate H={H}")

    xs = np.linspace(0.0, L, nx + 1)
    ys = np.concatenate([H * _graded(ny_sub, grading), H + w * np.linspace(0, 1, ny_film + 1)[1:]])
    ny = ny_sub + ny_film
    X, Y = np.meshgrid(xs, ys)  # row j = y level
    nodes = np.stack([X.ravel(), Y.ravel()], axis=1)

    def nid(i, j):
        return j * (nx + 1) + i

    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny))
    ii, jj = ii.ravel(), jj.ravel()
    elements = np.stack([nid(ii, jj), nid(ii + 1, jj), nid(ii + 1, jj + 1), nid(ii, jj + 1)], axis=1)
    regions = np.where(jj >= ny_sub, FILM, SUBSTRATE).astype(np.int8)
    _check_ccw(nodes, elements)
    et = extract_edges(elements)

    bottom = {nid(i, 0) for i in range(nx + 1)}
    top = [nid(i, ny) for i in range(nx + 1)]
    left = {nid(0, j) for j in range(ny + 1)}
    right = {nid(nx, j) for j in range(ny + 1)}
    e_bottom = _edges_between(et, bottom)
    e_top = _edges_between(et, set(top))
    e_sides = np.union1d(_edges_between(et, left), _edges_between(et, right))
    tags = {
        "dirichlet_u_x": np.union1d(e_sides, e_bottom) if bottom_fix_ux else e_sides,
        "dirichlet_u_y": e_bottom,
        "impermeable": np.union1d(e_bottom, e_sides),
        "chem_loaded": e_top,
    }
    return Mesh(
        nodes=nodes,
        elements=elements,
        regions=regions,
        edges=et,
        boundary_tags=tags,
        surface_nodes=np.asarray(top),
        kind="flat",
        meta=dict(L=L, H=H, w=w, nx=nx, ny_sub=ny_sub, ny_film=ny_film, grading=grading,
                  bottom_fix_ux=bool(bottom_fix_ux)),
    )


def ellipse_axes(r_ref, aspect):
    """Semi-axes (a, b) with a/b = aspect and a*b = r_ref**2."""
    _positive(r_ref=r_ref, aspect=aspect)
    if aspect < 1.0:
        raise MeshError("aspect ratio a/b must be >= 1")
    root = np.sqrt(aspect)
    return r_ref * root, r_ref / root


def build_ellipse_annulus(a, b, w, r_out, ntheta, nr_sub, nr_film, r_ref=None, grading=1.0):
    """Tube cross-section with an elliptical passage lined by a film.

    The passage is the ellipse with semi-minor axis ``b`` along x and
    semi-major axis ``a`` along y.  The film has uniform normal thickness
    ``w`` (offset along the ellipse normal); the substrate fills the rest up
    to the rigid circle of radius ``r_out``.  Nodes on ring ``j`` and ray
    ``i`` use the ellipse parameter ``t_i = 2 pi i / ntheta`` so the minor
    axis passes through nodes ``i = 0`` and ``i = ntheta / 2``.
    """
    _positive(a=a, b=b, w=w, r_out=r_out, grading=grading)
    if a < b:
        raise MeshError("semi-major axis a must be >= semi-minor axis b")
    if r_ref is not None and abs(a * b - r_ref**2) / r_ref**2 >= 1e-12:
        raise MeshError(f"a*b={a * b!r} must equal r_ref^2={r_ref**2!r} (constant passage area)")
    for name, n in (("ntheta", ntheta), ("nr_sub", nr_sub), ("nr_film", nr_film)):
        if int(n) != n or n <= 0:
            raise MeshError(f"{name} must be a positive integer, got {n}")
    if ntheta < 16 or ntheta % 2:
        raise MeshError("ntheta must be even and >= 16")

    t = 2.0 * np.pi * np.arange(ntheta) / ntheta
    ct, st = np.cos(t), np.sin(t)
    P = np.stack([b * ct, a * st], axis=1)
    normal = np.stack([a * ct, b * st], axis=1)
    normal /= np.linalg.norm(normal, axis=1)[:, None]
    Q = P + w * normal
    if np.any(np.linalg.norm(Q, axis=1) >= r_out):
        raise MeshError("film offset reaches the outer wall; w + passage too large for r_out")
    outer = r_out * np.stack([ct, st], axis=1)

    film_frac = np.linspace(0.0, 1.0, nr_film + 1)
    # substrate refined toward the film when grading > 1
    sub_frac = 1.0 - _graded(nr_sub, grading)[::-1]
    rings = [P + f * (Q - P) for f in film_frac]
    rings += [Q + f * (outer - Q) for f in sub_frac[1:]]
    nr = nr_film + nr_sub
    nodes = np.concatenate(rings, axis=0)

    def nid(i, j):
        return j * ntheta + (i % ntheta)

    ii, jj = np.meshgrid(np.arange(ntheta), np.arange(nr))
    ii, jj = ii.ravel(), jj.ravel()
    # radial direction first, then angular: counter-clockwise in (x, y)
    elements = np.stack([nid(ii, jj), nid(ii, jj + 1), nid(ii + 1, jj + 1), nid(ii + 1, jj)], axis=1)
    regions = np.where(jj < nr_film, FILM, SUBSTRATE).astype(np.int8)
    _check_ccw(nodes, elements)
    et = extract_edges(elements)

    inner = [nid(i, 0) for i in range(ntheta)]
    outer_nodes = {nid(i, nr) for i in range(ntheta)}
    e_inner = _edges_between(et, set(inner))
    e_outer = _edges_between(et, outer_nodes)
    tags = {
        "dirichlet_u_x": e_outer,
        "dirichlet_u_y": e_outer,
        "impermeable": e_outer,
        "chem_loaded": e_inner,
    }
    kind = "tube" if a == b else "ellipse"
    return Mesh(
        nodes=nodes,
        elements=elements,
        regions=regions,
        edges=et,
        boundary_tags=tags,
        surface_nodes=np.asarray(inner),
        kind=kind,
        periodic=True,
        meta=dict(a=a, b=b, w=w, r_out=r_out, ntheta=ntheta, nr_sub=nr_sub,
                  nr_film=nr_film, grading=grading),
    )


def build_annulus_bilayer(r_out, H, w, ntheta, nr_sub, nr_film, grading=1.0):
    """Circular tube cross-section: film of thickness w inside a substrate of thickness H."""
    _positive(r_out=r_out, H=H, w=w)
    if w + H >= r_out:
        raise MeshError(f"w + H = {w + H} must be smaller than r_out = {r_out}")
    r_in = r_out - H - w
    mesh = build_ellipse_annulus(r_in, r_in, w, r_out, ntheta, nr_sub, nr_film, grading=grading)
    mesh.meta.update(H=H)
    return mesh


def surface_normals(mesh):
    """Outward unit normals of the body at the loaded-surface nodes."""
    if mesh.kind == "flat":
        return np.tile([0.0, 1.0], (len(mesh.surface_nodes), 1))
    a, b = mesh.meta["a"], mesh.meta["b"]
    X = mesh.nodes[mesh.surface_nodes]
    # body lies outside the passage: outward normal of the body points into the passage
    n = -np.stack([X[:, 0] / b**2, X[:, 1] / a**2], axis=1)
    return n / np.linalg.norm(n, axis=1)[:, None]


def config_hash(kind, **params):
    payload = json.dumps({"kind": kind, **params}, sort_keys=True, default=float)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


_BUILDERS = {
    "flat": build_rectangle_bilayer,
    "tube": build_annulus_bilayer,
    "ellipse": build_ellipse_annulus,
}


def cached_mesh(kind, cache_dir=None, **params):
    """Build a mesh, reusing a binary cache keyed by the generating configuration."""
    builder = _BUILDERS[kind]
    if cache_dir is None:
        return builder(**params)
    path = Path(cache_dir) / f"mesh-{kind}-{config_hash(kind, **params)}.npz"
    if path.exists():
        with np.load(path, allow_pickle=False) as z:
            tags = {t: z[f"tag_{t}"] for t in TAGS}
            meta = json.loads(str(z["meta"]))
            et = EdgeTable(z["edges"], z["elem_edges"], z["elem_signs"])
            return Mesh(z["nodes"], z["elements"], z["regions"], et, tags,
                        z["surface_nodes"], str(z["kind"]), bool(z["periodic"]), meta)
    mesh = builder(**params)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(
        path,
        nodes=mesh.nodes, elements=mesh.elements, regions=mesh.regions,
        edges=mesh.edges.edges, elem_edges=mesh.edges.elem_edges,
        elem_signs=mesh.edges.elem_signs, surface_nodes=mesh.surface_nodes,
        kind=mesh.kind, periodic=mesh.periodic, meta=json.dumps(mesh.meta),
        **{f"tag_{t}": mesh.tagged(t) for t in TAGS},
    )
    return mesh
