"""Two-dimensional bilinear quadrilateral meshes.

A :class:`Mesh` carries node coordinates (mm), 4-node connectivity in
counter-clockwise order, Dirichlet tagging and Neumann edges. Dirichlet
entries hold a per-component mask and a scale factor: the prescribed value
of a masked component at time ``t`` is ``scale * u_D(t)``. Neumann edges hold
a reference traction (MPa) that is multiplied by the normalized load factor.

Text format (0-based ids, ``#`` starts a comment)::

    nodes <count>
    x y
    elements <count>
    n0 n1 n2 n3
    dirichlet <count>
    node mask_x mask_y scale_x scale_y
    neumann <count>
    n0 n1 tx ty
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError, GeometryError, ShapeError

GAUSS_1D = np.array([-1.0, 1.0]) / np.sqrt(3.0)
# 2x2 rule, counter-clockwise: (-,-), (+,-), (+,+), (-,+); all weights are 1
GAUSS_XI = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]) / np.sqrt(3.0)
NODE_XI = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
POINTS_PER_ELEMENT = 4


def shape_functions(xi, eta):
    """Bilinear shape functions and their reference derivatives.

    Returns
    -------
    N : (..., 4) ndarray
    dN : (..., 2, 4) ndarray
        ``dN[..., 0, :]`` is d/dxi, ``dN[..., 1, :]`` is d/deta.
    """
    xi = np.asarray(xi, dtype=float)[..., None]
    eta = np.asarray(eta, dtype=float)[..., None]
    sx, sy = NODE_XI[:, 0], NODE_XI[:, 1]
    N = 0.25 * (1 + sx * xi) * (1 + sy * eta)
    dN = np.stack([0.25 * sx * (1 + sy * eta), 0.25 * sy * (1 + sx * xi)], axis=-2)
    return N, dN


@dataclass(eq=False)
class Mesh:
    """Bilinear quadrilateral mesh with boundary tagging.

    Parameters
    ----------
    nodes : (n_nodes, 2) array_like
        Node coordinates in mm.
    elements : (n_elements, 4) array_like of int
        Counter-clockwise connectivity.
    dirichlet_nodes : (n_d,) array_like of int, optional
    dirichlet_mask : (n_d, 2) array_like of bool, optional
        Which displacement components are prescribed at each node.
    dirichlet_scale : (n_d, 2) array_like, optional
        Prescribed value per unit Dirichlet amplitude. Defaults to zero.
    neumann_edges : (n_n, 2) array_like of int, optional
    neumann_traction : (n_n, 2) array_like, optional
        Reference traction on each edge (MPa, unit thickness).
    """

    nodes: np.ndarray
    elements: np.ndarray
    dirichlet_nodes: np.ndarray = None
    dirichlet_mask: np.ndarray = None
    dirichlet_scale: np.ndarray = None
    neumann_edges: np.ndarray = None
    neumann_traction: np.ndarray = None
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float).reshape(-1, 2)
        self.elements = np.asarray(self.elements, dtype=np.int64).reshape(-1, 4)
        nd = 0 if self.dirichlet_nodes is None else len(self.dirichlet_nodes)
        self.dirichlet_nodes = np.asarray(
            [] if self.dirichlet_nodes is None else self.dirichlet_nodes, dtype=np.int64
        )
        if self.dirichlet_mask is None:
            self.dirichlet_mask = np.ones((nd, 2), dtype=bool)
        self.dirichlet_mask = np.asarray(self.dirichlet_mask, dtype=bool).reshape(nd, 2)
        if self.dirichlet_scale is None:
            self.dirichlet_scale = np.zeros((nd, 2))
        self.dirichlet_scale = np.asarray(self.dirichlet_scale, dtype=float).reshape(nd, 2)
        nn = 0 if self.neumann_edges is None else len(self.neumann_edges)
        self.neumann_edges = np.asarray(
            [] if self.neumann_edges is None else self.neumann_edges, dtype=np.int64
        ).reshape(nn, 2)
        if self.neumann_traction is None:
            self.neumann_traction = np.zeros((nn, 2))
        self.neumann_traction = np.asarray(self.neumann_traction, dtype=float).reshape(nn, 2)
        self.validate()

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_dofs(self):
        return 2 * len(self.nodes)

    @property
    def n_points(self):
        """Number of quadrature points (4 per element)."""
        return POINTS_PER_ELEMENT * len(self.elements)

    def validate(self):
        n = self.n_nodes
        for name, ids in (
            ("element", self.elements),
            ("dirichlet", self.dirichlet_nodes),
            ("neumann", self.neumann_edges),
        ):
            if ids.size and (ids.min() < 0 or ids.max() >= n):
                raise ShapeError(f"{name} node index out of range [0, {n})")
        if len(np.unique(self.dirichlet_nodes)) != len(self.dirichlet_nodes):
            raise ArgumentError("duplicate Dirichlet node entries")
        if self.n_elements:
            detj = self.jacobian_determinants()
            bad = np.nonzero(detj <= 0.0)[0]
            if bad.size:
                raise GeometryError(
                    f"non-positive Jacobian in element(s) {sorted(set(bad // 4))[:10]}"
                )
        # a traction component must not act on a node where it is prescribed
        if self.neumann_edges.size and self.dirichlet_nodes.size:
            fixed = np.zeros((n, 2), dtype=bool)
            fixed[self.dirichlet_nodes] = self.dirichlet_mask
            loaded = self.neumann_traction != 0.0
            for c in range(2):
                clash = fixed[self.neumann_edges, c] & loaded[:, c, None]
                if clash.any():
                    raise ArgumentError(
                        f"component {c} is both prescribed and loaded on a Neumann edge"
                    )

    def jacobian_determinants(self):
        """det J at every quadrature point, shape ``(n_elements * 4,)``."""
        _, dN = shape_functions(GAUSS_XI[:, 0], GAUSS_XI[:, 1])
        xe = self.nodes[self.elements]  # (ne, 4, 2)
        J = np.einsum("gan,enb->egab", dN, xe)
        return (J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]).ravel()

    def point_coordinates(self):
        """Physical coordinates of the quadrature points, ``(n_points, 2)``."""
        N, _ = shape_functions(GAUSS_XI[:, 0], GAUSS_XI[:, 1])
        return np.einsum("gn,enb->egb", N, self.nodes[self.elements]).reshape(-1, 2)

    def element_points(self, elements):
        """Quadrature point indices belonging to the given elements."""
        elements = np.asarray(elements, dtype=np.int64)
        return (POINTS_PER_ELEMENT * elements[:, None] + np.arange(POINTS_PER_ELEMENT)).ravel()

    def dirichlet_dofs(self):
        """Prescribed dofs and their values per unit Dirichlet amplitude."""
        dofs = (2 * self.dirichlet_nodes[:, None] + np.arange(2)).ravel()
        mask = self.dirichlet_mask.ravel()
        return dofs[mask], self.dirichlet_scale.ravel()[mask]


def rectangular_bar(length=100.0, width=20.0, nx=10, ny=5, clamp=True):
    """Structured bar centred at the origin, pulled at both ends.

    The left end moves by ``-u_D`` and the right end by ``+u_D`` along x.
    With ``clamp=True`` the ends are also fixed in y (grips); otherwise only
    the mid-height end nodes are held in y.
    """
    if nx < 1 or ny < 1:
        raise ArgumentError("nx and ny must be positive")
    x = np.linspace(-length / 2, length / 2, nx + 1)
    y = np.linspace(-width / 2, width / 2, ny + 1)
    return _structured(x, np.broadcast_to(y, (nx + 1, ny + 1)), clamp)


def dog_bone(
    length=100.0,
    grip_width=20.0,
    gauge_width=10.0,
    gauge_length=40.0,
    nx=50,
    ny=10,
    clamp=True,
):
    """Structured dog-bone specimen with cosine fillets between grip and gauge.

    The default 50 x 10 grid has 500 elements and 561 nodes.
    """
    if not (0 < gauge_width <= grip_width and 0 < gauge_length < length):
        raise ArgumentError("inconsistent dog-bone dimensions")
    x = np.linspace(-length / 2, length / 2, nx + 1)
    half_gauge, half_len = gauge_length / 2, length / 2
    grip_len = 0.2 * length
    s = np.clip((np.abs(x) - half_gauge) / max(half_len - grip_len - half_gauge, 1e-12), 0, 1)
    w = gauge_width + (grip_width - gauge_width) * 0.5 * (1 - np.cos(np.pi * s))
    eta = np.linspace(-0.5, 0.5, ny + 1)
    return _structured(x, w[:, None] * eta[None, :], clamp)


def _structured(x, y, clamp):
    nx, ny = len(x) - 1, y.shape[1] - 1
    X = np.broadcast_to(x[:, None], y.shape)
    nodes = np.column_stack([X.ravel(), y.ravel()])  # node id = i * (ny + 1) + j

    def nid(i, j):
        return i * (ny + 1) + j

    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    i, j = i.ravel(), j.ravel()
    elements = np.column_stack([nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)])
    order = np.lexsort((i, j))  # element rows run along x
    elements = elements[order]

    left = nid(0, np.arange(ny + 1))
    right = nid(nx, np.arange(ny + 1))
    dn = np.concatenate([left, right])
    scale = np.zeros((len(dn), 2))
    scale[: ny + 1, 0] = -1.0
    scale[ny + 1 :, 0] = 1.0
    mask = np.ones((len(dn), 2), dtype=bool)
    if not clamp:
        mid = ny // 2
        mask[:, 1] = False
        mask[mid, 1] = True
        mask[ny + 1 + mid, 1] = True
    return Mesh(nodes, elements, dn, mask, scale)


def read_mesh(path):
    """Parse the plain-text mesh format."""
    lines = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line.split())
    blocks = {}
    k = 0
    while k < len(lines):
        head = lines[k]
        if len(head) != 2 or head[0] not in ("nodes", "elements", "dirichlet", "neumann"):
            raise ArgumentError(f"{path}: expected a block header, got {' '.join(head)!r}")
        count = int(head[1])
        body = lines[k + 1 : k + 1 + count]
        if len(body) != count:
            raise ArgumentError(f"{path}: block {head[0]!r} truncated")
        blocks[head[0]] = np.array(body, dtype=float).reshape(count, -1)
        k += 1 + count
    if "nodes" not in blocks or "elements" not in blocks:
        raise ArgumentError(f"{path}: nodes and elements blocks are required")
    d = blocks.get("dirichlet", np.zeros((0, 5)))
    n = blocks.get("neumann", np.zeros((0, 4)))
    return Mesh(
        blocks["nodes"],
        blocks["elements"].astype(np.int64),
        d[:, 0].astype(np.int64),
        d[:, 1:3] != 0,
        d[:, 3:5],
        n[:, 0:2].astype(np.int64),
        n[:, 2:4],
    )


def write_mesh(mesh, path):
    out = [f"nodes {mesh.n_nodes}"]
    out += [f"{x:.17g} {y:.17g}" for x, y in mesh.nodes]
    out.append(f"elements {mesh.n_elements}")
    out += [" ".join(str(v) for v in e) for e in mesh.elements]
    out.append(f"dirichlet {len(mesh.dirichlet_nodes)}")
    for node, m, s in zip(mesh.dirichlet_nodes, mesh.dirichlet_mask, mesh.dirichlet_scale):
        out.append(f"{node} {int(m[0])} {int(m[1])} {s[0]:.17g} {s[1]:.17g}")
    if len(mesh.neumann_edges):
        out.append(f"neumann {len(mesh.neumann_edges)}")
        for (a, b), (tx, ty) in zip(mesh.neumann_edges, mesh.neumann_traction):
            out.append(f"{a} {b} {tx:.17g} {ty:.17g}")
    Path(path).write_text("\n".join(out) + "\n")
