"""Plane-strain bilinear finite elements: assembly, Dirichlet solves, strains.

Strains use the engineering Voigt layout ``(eps_11, eps_22, gamma_12)``.
Plastic strains use tensor components ``(eps_11, eps_22, eps_12)`` with the
out-of-plane component implied by plastic incompressibility, so that
``C : eps_p = 2 mu eps_p`` in the plane.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ArgumentError, NumericError, RigidBodyError, ShapeError
from .mesh import GAUSS_XI, POINTS_PER_ELEMENT, shape_functions


@dataclass(frozen=True)
class Material:
    """Isotropic elasticity with linear isotropic hardening (MPa)."""

    young_modulus: float
    poisson_ratio: float
    yield_stress: float
    hardening_modulus: float = 0.0

    def __post_init__(self):
        if not self.young_modulus > 0:
            raise ArgumentError("young_modulus must be positive")
        if not 0.0 <= self.poisson_ratio < 0.5:
            raise ArgumentError("poisson_ratio must lie in [0, 0.5)")
        if not self.yield_stress > 0:
            raise ArgumentError("yield_stress must be positive")
        if not self.hardening_modulus >= 0:
            raise ArgumentError("hardening_modulus must be nonnegative")

    @property
    def shear_modulus(self):
        return self.young_modulus / (2.0 * (1.0 + self.poisson_ratio))

    @property
    def lame_lambda(self):
        E, nu = self.young_modulus, self.poisson_ratio
        return E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))

    def plane_strain_matrix(self):
        lam, mu = self.lame_lambda, self.shear_modulus
        return np.array(
            [[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]]
        )


STEEL = Material(210e3, 0.3, 205.0, 2e3)


def _geometry(mesh):
    """Cached B matrices, quadrature weights (det J) and element dof maps."""
    cached = mesh._cache.get("geometry")
    if cached is not None:
        return cached
    _, dN = shape_functions(GAUSS_XI[:, 0], GAUSS_XI[:, 1])  # (4, 2, 4)
    xe = mesh.nodes[mesh.elements]
    J = np.einsum("gan,enb->egab", dN, xe)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    Jinv = np.stack(
        [
            np.stack([J[..., 1, 1], -J[..., 0, 1]], axis=-1),
            np.stack([-J[..., 1, 0], J[..., 0, 0]], axis=-1),
        ],
        axis=-2,
    ) / det[..., None, None]
    dNdx = np.einsum("egab,gbn->egan", Jinv, dN)  # (ne, 4, 2, 4)
    ne = mesh.n_elements
    B = np.zeros((ne, POINTS_PER_ELEMENT, 3, 8))
    B[:, :, 0, 0::2] = dNdx[:, :, 0]
    B[:, :, 1, 1::2] = dNdx[:, :, 1]
    B[:, :, 2, 0::2] = dNdx[:, :, 1]
    B[:, :, 2, 1::2] = dNdx[:, :, 0]
    dofs = (2 * mesh.elements[:, :, None] + np.arange(2)).reshape(ne, 8)
    geo = (B, det, dofs)
    mesh._cache["geometry"] = geo
    return geo


def point_weights(mesh):
    """Quadrature weight (area, mm^2 per unit thickness) of every point."""
    return _geometry(mesh)[1].ravel().copy()


def _scatter_matrix(mesh, Ke):
    _, _, dofs = _geometry(mesh)
    rows = np.repeat(dofs, 8, axis=1).ravel()
    cols = np.tile(dofs, (1, 8)).ravel()
    n = mesh.n_dofs
    return sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def check_rigid_body(mesh):
    """Raise :class:`RigidBodyError` if the Dirichlet set leaves a rigid mode free."""
    dofs, _ = mesh.dirichlet_dofs()
    if dofs.size == 0:
        raise RigidBodyError("empty Dirichlet set: rigid-body motion is unconstrained")
    modes = rigid_body_modes(mesh)
    if np.linalg.matrix_rank(modes[dofs], tol=1e-10 * np.abs(mesh.nodes).max()) < 3:
        raise RigidBodyError("Dirichlet set does not suppress all rigid-body modes")


def rigid_body_modes(mesh):
    """Two translations and the infinitesimal rotation, ``(n_dofs, 3)``."""
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    R = np.zeros((mesh.n_dofs, 3))
    R[0::2, 0] = 1.0
    R[1::2, 1] = 1.0
    R[0::2, 2] = -y
    R[1::2, 2] = x
    return R


def assemble_stiffness(mesh, material, allow_unconstrained=False):
    """Global stiffness ``k(u, v) = int eps(v) : C : eps(u)`` (CSR).

    Raises :class:`RigidBodyError` unless the Dirichlet set removes all
    rigid-body modes or ``allow_unconstrained`` is set.
    """
    if not allow_unconstrained:
        check_rigid_body(mesh)
    B, det, _ = _geometry(mesh)
    D = material.plane_strain_matrix()
    Ke = np.einsum("egia,ij,egjb,eg->eab", B, D, B, det)
    Ke = 0.5 * (Ke + Ke.transpose(0, 2, 1))
    K = _scatter_matrix(mesh, Ke)
    return ((K + K.T) * 0.5).tocsr()


def plastic_force_operator(mesh, material):
    """Sparse map from stacked plastic strain to nodal forces.

    The input vector is component-major: ``[eps11 (all points), eps22, eps12]``.
    """
    B, det, dofs = _geometry(mesh)
    mu2 = 2.0 * material.shear_modulus
    npts = mesh.n_points
    # f_e = sum_g B^T (2 mu eps_p) det; engineering shear row takes eps12 directly
    vals = mu2 * B * det[:, :, None, None]  # (ne, 4, 3, 8)
    rows = np.broadcast_to(dofs[:, None, None, :], vals.shape)
    pts = np.arange(npts).reshape(-1, POINTS_PER_ELEMENT)
    cols = pts[:, :, None, None] + npts * np.arange(3)[None, None, :, None]
    cols = np.broadcast_to(cols, vals.shape)
    return sp.coo_matrix(
        (vals.ravel(), (rows.ravel(), cols.ravel())), shape=(mesh.n_dofs, 3 * npts)
    ).tocsr()


def assemble_plastic_force(mesh, material, eps_p):
    """``int eps(v) : C : eps_p dx`` for a plastic strain field at one instant.

    ``eps_p`` has shape ``(n_points, 3)`` in tensor components.
    """
    eps_p = np.asarray(eps_p, dtype=float)
    if eps_p.shape != (mesh.n_points, 3):
        raise ShapeError(f"eps_p must have shape ({mesh.n_points}, 3), got {eps_p.shape}")
    B, det, dofs = _geometry(mesh)
    sig = 2.0 * material.shear_modulus * eps_p.reshape(-1, POINTS_PER_ELEMENT, 3)
    fe = np.einsum("egia,egi,eg->ea", B, sig, det)
    f = np.zeros(mesh.n_dofs)
    np.add.at(f, dofs.ravel(), fe.ravel())
    return f


def external_force(mesh, body_force=(0.0, 0.0)):
    """Reference external load vector: Neumann tractions plus body force.

    Tractions are constant per edge, so each end node takes half the edge
    resultant. The vector is scaled in time by the load program's factor.
    """
    f = np.zeros(mesh.n_dofs)
    if len(mesh.neumann_edges):
        a, b = mesh.neumann_edges[:, 0], mesh.neumann_edges[:, 1]
        length = np.linalg.norm(mesh.nodes[b] - mesh.nodes[a], axis=1)
        half = 0.5 * length[:, None] * mesh.neumann_traction
        for c in range(2):
            np.add.at(f, 2 * a + c, half[:, c])
            np.add.at(f, 2 * b + c, half[:, c])
    body = np.asarray(body_force, dtype=float)
    if np.any(body):
        _, det, dofs = _geometry(mesh)
        N, _ = shape_functions(GAUSS_XI[:, 0], GAUSS_XI[:, 1])
        fe = np.einsum("eg,gn,c->enc", det, N, body).reshape(mesh.n_elements, 8)
        np.add.at(f, dofs.ravel(), fe.ravel())
    return f


class ElasticSolver:
    """Factorized Dirichlet-eliminated stiffness for repeated solves.

    Parameters
    ----------
    K : sparse matrix
        Full stiffness matrix.
    fixed_dofs : array_like of int
        Prescribed degrees of freedom.
    method : {"direct", "cg"}
        Sparse LU factorization, or conjugate gradients as a fallback.
    tol : float
        Relative residual tolerance checked after every solve.
    """

    def __init__(self, K, fixed_dofs, method="direct", tol=1e-10):
        K = sp.csr_matrix(K)
        n = K.shape[0]
        fixed = np.asarray(fixed_dofs, dtype=np.int64)
        if fixed.size == 0:
            raise RigidBodyError("empty Dirichlet set")
        if len(np.unique(fixed)) != len(fixed):
            raise ArgumentError("duplicate prescribed dofs")
        free = np.setdiff1d(np.arange(n), fixed)
        self.n = n
        self.fixed, self.free = fixed, free
        self.K = K
        self.Kff = K[free][:, free].tocsc()
        self.Kfd = K[free][:, fixed].tocsc()
        self.method = method
        self.tol = tol
        if method == "direct":
            try:
                self._lu = spla.splu(self.Kff)
            except RuntimeError as exc:
                raise NumericError(f"stiffness factorization failed: {exc}") from exc
        elif method != "cg":
            raise ArgumentError(f"unknown solver method {method!r}")

    def solve_free(self, rhs_f):
        """Solve ``K_ff x = rhs_f`` for one or several right-hand sides."""
        rhs_f = np.asarray(rhs_f, dtype=float)
        if self.method == "direct":
            x = self._lu.solve(rhs_f)
        else:
            cols = rhs_f.reshape(len(self.free), -1)
            x = np.empty_like(cols)
            for j in range(cols.shape[1]):
                x[:, j], info = spla.cg(self.Kff, cols[:, j], rtol=self.tol * 1e-2, maxiter=10 * self.n)
                if info != 0:
                    raise NumericError(f"CG did not converge (info={info})")
            x = x.reshape(rhs_f.shape)
        return x

    def solve(self, rhs, values):
        """Full displacement for load ``rhs`` and prescribed ``values``.

        ``rhs`` is ``(n_dofs,)`` or ``(n_dofs, n_cases)``; ``values`` matches
        the fixed dofs in the same way.
        """
        rhs = np.asarray(rhs, dtype=float)
        values = np.asarray(values, dtype=float)
        if rhs.shape[0] != self.n:
            raise ShapeError(f"rhs has {rhs.shape[0]} rows, expected {self.n}")
        if values.shape[0] != len(self.fixed):
            raise ShapeError(f"values has {values.shape[0]} rows, expected {len(self.fixed)}")
        b = rhs[self.free] - self.Kfd @ values
        if not np.all(np.isfinite(b)):
            raise NumericError("non-finite right-hand side")
        x = self.solve_free(b)
        res = np.linalg.norm(self.Kff @ x - b)
        scale = np.linalg.norm(b)
        if scale > 0 and res > max(self.tol, 1e-12) * scale * 10:
            raise NumericError(f"linear solve residual {res / scale:.3e} above tolerance")
        u = np.empty(rhs.shape)
        u[self.free] = x
        u[self.fixed] = values
        return u


def solve_elastic(K, rhs, bc, method="direct", tol=1e-10):
    """Solve the Dirichlet-constrained elastic problem.

    ``bc`` is a pair ``(dofs, values)`` of prescribed dofs and their values.
    """
    dofs, values = bc
    return ElasticSolver(K, dofs, method=method, tol=tol).solve(rhs, values)


def evaluate_strain(mesh, u):
    """Strain at every quadrature point.

    ``u`` of shape ``(n_dofs,)`` gives ``(n_points, 3)``; ``(n_dofs, n_t)``
    gives ``(n_points, 3, n_t)``.
    """
    u = np.asarray(u, dtype=float)
    if u.shape[0] != mesh.n_dofs:
        raise ShapeError(f"u has {u.shape[0]} rows, expected {mesh.n_dofs}")
    B, _, dofs = _geometry(mesh)
    ue = u[dofs]  # (ne, 8, ...)
    eps = np.einsum("egia,ea...->egi...", B, ue)
    return eps.reshape((mesh.n_points, 3) + u.shape[1:])


def element_strain_operator(mesh, elements):
    """B matrices and dofs of selected elements, for strains at a point subset."""
    B, _, dofs = _geometry(mesh)
    elements = np.asarray(elements, dtype=np.int64)
    return B[elements], dofs[elements]
