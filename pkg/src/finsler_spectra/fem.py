"""First-order finite elements: mass form and the nonlinear Dirichlet energy.

P1 elements with one-point centroid quadrature for the energy: the
differential of a piecewise-linear field is constant per element, so the
squared dual norm of it is integrated exactly once the density is frozen at
the centroid.  The mass matrix uses exact P1 integration scaled by the
centroid density.

:class:`EnergyModel` precomputes per-element geometry and metric data and
provides vectorized energy/gradient evaluation plus the frozen-coefficient
stiffness used by the nonlinear eigensolver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix

from .exceptions import NumericError
from .mesh import Mesh
from .metric import (
    RANDERS,
    MeasureDensity,
    MetricSpec,
    randers_dual_gradient,
    randers_dual_value,
    randers_metric_tensor,
)

_LOCAL_MASS = {
    1: np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0,
    2: np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0,
}


@dataclass
class ScalarField:
    """Per-free-vertex values of a scalar field on a mesh.

    Boundary vertices carry implicit zeros (Dirichlet membership); identified
    vertices share one value.  ``l2_normalized`` records whether the field
    currently has unit norm in ``L^2(dm)`` for the owning problem's mass.
    """

    values: np.ndarray
    mesh: Mesh
    l2_normalized: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.free_dofs.size,):
            raise ValueError(
                f"field needs {self.mesh.free_dofs.size} values, got {self.values.shape}"
            )

    def full(self) -> np.ndarray:
        """Values on all merged degrees of freedom, zeros on the boundary."""
        return self.mesh.expand(self.values)

    def copy(self) -> "ScalarField":
        return ScalarField(self.values.copy(), self.mesh, self.l2_normalized)


@dataclass
class AssembledForms:
    """Sparse forms on the free degrees of freedom."""

    mass: csr_matrix
    stiffness_riemannian: Optional[csr_matrix]
    mesh: Mesh


def _element_frames(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Per-element gradient operators and centroid positions.

    Returns ``grads`` with shape (ne, d, d+1) mapping corner values to the
    constant chart differential, and centroids (ne, coord_dim).  Embedded
    triangles use an orthonormal basis of their own plane, so differentials
    come out in per-element orthonormal frames.
    """
    d = mesh.dimension
    corners = mesh.element_corners
    edges = corners[:, 1:, :] - corners[:, :1, :]  # (ne, d, cd)
    if mesh.is_embedded:
        # orthonormal frame per triangle plane
        e1 = edges[:, 0, :]
        e1 = e1 / np.linalg.norm(e1, axis=1, keepdims=True)
        e2 = edges[:, 1, :] - np.einsum("ei,ei->e", edges[:, 1, :], e1)[:, None] * e1
        e2 = e2 / np.linalg.norm(e2, axis=1, keepdims=True)
        frame = np.stack([e1, e2], axis=1)  # (ne, d, cd)
        local_edges = np.einsum("ekc,edc->ekd", edges, frame)  # (ne, d, d)
    else:
        local_edges = edges  # (ne, d, d)
    # du solves edge_k . du = u_{k+1} - u_0, so du = E^{-1} delta_u
    inv = np.linalg.inv(local_edges)
    grads = np.zeros((mesh.n_elements, d, d + 1))
    grads[:, :, 1:] = inv
    grads[:, :, 0] = -grads[:, :, 1:].sum(axis=2)
    return grads, mesh.element_centroids


class EnergyModel:
    """Vectorized evaluation of the Dirichlet energy on one mesh/metric/measure.

    Parameters
    ----------
    mesh, spec, measure
        The discretized manifold, the norm field, and the measure density.

    Notes
    -----
    Supported per-element norms are riemannian matrices (including the
    symmetrized Randers family, whose reversible average is the quadratic
    part) and raw Randers data, both frozen at element centroids.  Embedded
    meshes require an isotropic norm because per-element frames carry no
    global axes.
    """

    def __init__(self, mesh: Mesh, spec: MetricSpec, measure: MeasureDensity):
        self.mesh = mesh
        self.spec = spec
        self.measure = measure
        d = mesh.dimension
        self.grads, self.centroids = _element_frames(mesh)
        self.volumes = mesh.element_volumes
        self.sigma = np.array([measure(x) for x in self.centroids])
        if np.any(~np.isfinite(self.sigma)) or np.any(self.sigma <= 0):
            raise NumericError("measure density must be positive on all quadrature nodes")
        self.element_dofs = mesh.vertex_dof[mesh.elements]

        norms = [spec.norm_at(x) for x in self.centroids]
        kinds = {nm.kind for nm in norms}
        self.quadratic = all(nm.is_quadratic() for nm in norms)
        if mesh.is_embedded:
            for nm in norms:
                if not nm.is_quadratic() or not np.allclose(nm.a, nm.a[0, 0] * np.eye(d)):
                    raise ValueError("embedded meshes support isotropic riemannian norms only")
            self.A = np.stack([nm.a for nm in norms])
        elif self.quadratic:
            self.A = np.stack([nm.a for nm in norms])
        else:
            if kinds != {RANDERS}:
                raise ValueError(f"unsupported norm kinds for assembly: {kinds}")
            self.A = np.stack([nm.a for nm in norms])
            self.drift = np.stack([nm.b for nm in norms])
        self.A_inv = np.linalg.inv(self.A)
        self._mass: Optional[csr_matrix] = None

    # -- fields ---------------------------------------------------------------

    def field(self, free_values) -> ScalarField:
        return ScalarField(np.asarray(free_values, dtype=float), self.mesh)

    def _corner_values(self, full: np.ndarray) -> np.ndarray:
        return full[self.element_dofs]  # (ne, d+1)

    def differentials(self, full: np.ndarray) -> np.ndarray:
        """Constant per-element chart differential of a P1 field."""
        return np.einsum("edk,ek->ed", self.grads, self._corner_values(full))

    # -- energy and gradient ----------------------------------------------------

    def dual_square(self, du: np.ndarray) -> np.ndarray:
        """``F*^2`` of per-element covectors, vectorized."""
        if self.quadratic:
            return np.einsum("ei,eij,ej->e", du, self.A_inv, du)
        return randers_dual_value(self.A_inv, self.drift, du) ** 2

    def dual_square_gradient(self, du: np.ndarray) -> np.ndarray:
        """Gradient of ``F*^2`` in the covector argument, vectorized."""
        if self.quadratic:
            return 2.0 * np.einsum("eij,ej->ei", self.A_inv, du)
        return 2.0 * randers_dual_gradient(self.A_inv, self.drift, du)

    def dual_tensors(self, du: np.ndarray) -> np.ndarray:
        """Half-Hessian of ``F*^2`` at the element differentials.

        For Randers data this uses the exact identity that the dual tensor at
        the image of the Legendre transform is the inverse of the primal
        tensor there; zero differentials fall back to the tensor of the
        quadratic part.
        """
        if self.quadratic:
            return self.A_inv
        Y = randers_dual_gradient(self.A_inv, self.drift, du)
        zero = ~np.any(Y, axis=1)
        safe_Y = np.where(zero[:, None], 1.0, Y)
        g = randers_metric_tensor(self.A, self.drift, safe_Y)
        g_inv = np.linalg.inv(g)
        return np.where(zero[:, None, None], self.A_inv, g_inv)

    def energy(self, full: np.ndarray) -> float:
        du = self.differentials(full)
        return float(np.sum(self.dual_square(du) * self.sigma * self.volumes))

    def gradient(self, full: np.ndarray) -> np.ndarray:
        """Derivative of the energy numerator w.r.t. merged dof values."""
        du = self.differentials(full)
        p = self.dual_square_gradient(du) * (self.sigma * self.volumes)[:, None]
        contrib = np.einsum("edk,ed->ek", self.grads, p)  # (ne, d+1)
        out = np.zeros(self.mesh.n_dofs)
        np.add.at(out, self.element_dofs, contrib)
        return out

    # -- assembled matrices -------------------------------------------------------

    def _assemble(self, local: np.ndarray) -> csr_matrix:
        ne, k, _ = local.shape
        rows = np.repeat(self.element_dofs, k, axis=1).ravel()
        cols = np.tile(self.element_dofs, (1, k)).ravel()
        mat = coo_matrix(
            (local.ravel(), (rows, cols)), shape=(self.mesh.n_dofs, self.mesh.n_dofs)
        )
        return mat.tocsr()

    def mass_matrix(self) -> csr_matrix:
        if self._mass is None:
            d = self.mesh.dimension
            local = _LOCAL_MASS[d][None, :, :] * (self.sigma * self.volumes)[:, None, None]
            self._mass = self._assemble(local)
        return self._mass

    def stiffness_matrix(self, tensors: Optional[np.ndarray] = None) -> csr_matrix:
        """Assemble ``sum_e vol sigma G^T T G`` for per-element tensors ``T``.

        With no argument this is the Riemannian stiffness (dual quadratic
        form), valid only when the model is quadratic.
        """
        if tensors is None:
            if not self.quadratic:
                raise ValueError("riemannian stiffness requires a quadratic norm field")
            tensors = self.A_inv
        local = np.einsum(
            "edk,edc,ecl,e->ekl", self.grads, tensors, self.grads, self.sigma * self.volumes
        )
        return self._assemble(local)

    def frozen_stiffness(self, full: np.ndarray) -> csr_matrix:
        """Stiffness with the dual tensor frozen at the field's differentials.

        Satisfies ``gradient(u) = 2 * frozen_stiffness(u) @ u`` exactly, which
        turns the eigen-equation into a quasi-linear pencil.
        """
        return self.stiffness_matrix(self.dual_tensors(self.differentials(full)))

    def forms(self) -> AssembledForms:
        free = self.mesh.free_dofs
        mass = self.mass_matrix()[np.ix_(free, free)].tocsr()
        stiff = None
        if self.quadratic:
            stiff = self.stiffness_matrix()[np.ix_(free, free)].tocsr()
        return AssembledForms(mass=mass, stiffness_riemannian=stiff, mesh=self.mesh)


# ---------------------------------------------------------------------------
# module-level operations on (mesh, spec, measure, field)
# ---------------------------------------------------------------------------

def assemble_mass(mesh: Mesh, measure: MeasureDensity) -> csr_matrix:
    """Mass matrix on all merged dofs; total mass equals the measure of M."""
    from .metric import euclidean_spec

    model = EnergyModel(mesh, euclidean_spec(mesh.dimension), measure)
    return model.mass_matrix()


def energy_numerator(mesh: Mesh, spec: MetricSpec, measure: MeasureDensity,
                     u: ScalarField) -> float:
    """``sum_e F*^2(x_c, du) sigma(x_c) vol(e)``; zero iff du vanishes everywhere."""
    if not np.all(np.isfinite(u.values)):
        raise ValueError("field values must be finite")
    return EnergyModel(mesh, spec, measure).energy(u.full())


def energy_gradient(mesh: Mesh, spec: MetricSpec, measure: MeasureDensity,
                    u: ScalarField) -> np.ndarray:
    """Gradient of the energy numerator w.r.t. the free dof values."""
    model = EnergyModel(mesh, spec, measure)
    return model.gradient(u.full())[mesh.free_dofs]
