"""Eigenvalues of the nonlinear problem ``-div(grad u) = lambda u``.

Eigenvalues are critical values of the Rayleigh quotient ``E`` on the
``L^2(dm)`` unit sphere.  Quadratic norm fields (Riemannian, weighted,
symmetrized Randers) take the linear fast path through a symmetric-definite
sparse pencil.  The generic path minimizes ``E`` by projected
Barzilai-Borwein descent with Armijo backtracking and polishes candidates by
Rayleigh-quotient iteration on the frozen-coefficient pencil, which matches
the exact energy gradient at the freezing point.

Higher nonlinear eigenvalues are reported as minimax upper-bound candidates:
each level carries a stationarity certificate (the weak residual) and the
supremum of ``E`` over the span of the collected eigenfields, which bounds
the corresponding minimax value from above.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field as dataclass_field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import eigh
from scipy.sparse.linalg import eigsh, splu

from .exceptions import ConvergenceError
from .fem import EnergyModel, ScalarField
from .mesh import Mesh
from .metric import MeasureDensity, MetricSpec

LINEAR = "linear"
NONLINEAR_DESCENT = "nonlinear_descent"
ZERO_MEAN_MIN = "zero_mean_min"


@dataclass
class SolverConfig:
    """Tolerances and budgets for the descent-based solvers."""

    descent_tolerance: float = 1e-9
    max_iterations: int = 600
    restarts: int = 3
    deflation_count: int = 6
    multiplicity_gap: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.descent_tolerance <= 0 or self.multiplicity_gap <= 0:
            raise ValueError("tolerances must be positive")
        if self.restarts < 1:
            raise ValueError("need at least one restart")


@dataclass
class SpectrumEntry:
    k: int
    value: float
    field: Optional[ScalarField]
    residual: float
    method: str
    upper_bound: Optional[float] = None
    upper_bound_candidate: bool = False


@dataclass
class SpectrumReport:
    """Ordered eigenvalue records with provenance."""

    entries: list
    metric_id: str = ""
    measure_kind: str = ""
    mesh_id: str = ""
    multiplicity_gap: float = 1e-6

    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.entries])

    def multiplicity_clusters(self) -> list:
        """Cluster index per entry; values within the gap share a cluster."""
        clusters, current = [], 0
        prev = None
        for e in self.entries:
            if prev is not None and abs(e.value - prev) > self.multiplicity_gap * (1.0 + abs(e.value)):
                current += 1
            clusters.append(current)
            prev = e.value
        return clusters

    def to_csv(self) -> str:
        clusters = self.multiplicity_clusters()
        out = io.StringIO()
        out.write("k,lambda,residual,multiplicity_cluster,method\n")
        for e, c in zip(self.entries, clusters):
            out.write(f"{e.k},{e.value:.17g},{e.residual:.17g},{c},{e.method}\n")
        return out.getvalue()

    def to_json(self, embed_fields: bool = False) -> str:
        clusters = self.multiplicity_clusters()
        entries = []
        for e, c in zip(self.entries, clusters):
            row = {
                "k": e.k,
                "lambda": e.value,
                "residual": e.residual,
                "multiplicity_cluster": c,
                "method": e.method,
                "upper_bound": e.upper_bound,
                "upper_bound_candidate": e.upper_bound_candidate,
            }
            if embed_fields and e.field is not None:
                row["eigenfield"] = [float(v) for v in e.field.values]
            entries.append(row)
        doc = {
            "mesh_id": self.mesh_id,
            "metric_id": self.metric_id,
            "measure_kind": self.measure_kind,
            "entries": entries,
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def counting_function(report: SpectrumReport, lam: float) -> int:
    """Number of reported eigenvalues strictly below ``lam``."""
    return int(np.sum(report.values() < lam))


# ---------------------------------------------------------------------------
# solver engine
# ---------------------------------------------------------------------------

class _Engine:
    """Shared state for one (mesh, spec, measure) eigenproblem."""

    def __init__(self, mesh: Mesh, spec: MetricSpec, measure: MeasureDensity,
                 config: Optional[SolverConfig] = None):
        self.mesh = mesh
        self.spec = spec
        self.measure = measure
        self.config = config or SolverConfig()
        self.model = EnergyModel(mesh, spec, measure)
        free = mesh.free_dofs
        self.free = free
        self.M = self.model.mass_matrix()[np.ix_(free, free)].tocsr()
        self._mass_lu = splu(self.M.tocsc())
        self.K = None
        if self.model.quadratic:
            self.K = self.model.stiffness_matrix()[np.ix_(free, free)].tocsr()

    # -- basic linear algebra over free dofs --

    def mnorm(self, u: np.ndarray) -> float:
        return math.sqrt(max(float(u @ (self.M @ u)), 0.0))

    def normalize(self, u: np.ndarray) -> np.ndarray:
        nrm = self.mnorm(u)
        if nrm == 0.0:
            raise ValueError("cannot normalize the zero field")
        return u / nrm

    def minv(self, v: np.ndarray) -> np.ndarray:
        return self._mass_lu.solve(v)

    def project_out(self, u: np.ndarray, basis: Sequence[np.ndarray]) -> np.ndarray:
        for c in basis:
            u = u - float(c @ (self.M @ u)) * c
        return u

    def energy_parts(self, u: np.ndarray):
        full = self.mesh.expand(u)
        num = self.model.energy(full)
        grad = self.model.gradient(full)[self.free]
        return num, grad

    def rayleigh(self, u: np.ndarray) -> float:
        full = self.mesh.expand(u)
        den = float(u @ (self.M @ u))
        if den <= 0.0:
            raise ValueError("Rayleigh quotient requires a nonzero field")
        return self.model.energy(full) / den

    def residual(self, u: np.ndarray, lam: float) -> float:
        """Dual-norm defect ``|grad/2 - lam M u|_{M^-1}`` of the weak equation."""
        _, grad = self.energy_parts(u)
        r = 0.5 * grad - lam * (self.M @ u)
        return math.sqrt(max(float(r @ self.minv(r)), 0.0))

    def constant_field(self) -> np.ndarray:
        return self.normalize(np.ones(self.free.size))

    # -- descent -----------------------------------------------------------

    def descend(self, u0: np.ndarray, basis: Sequence[np.ndarray]):
        """Projected BB descent of E on the M-sphere, M-orthogonal to ``basis``.

        Returns ``(u, lam, residual)`` at the best iterate found.
        """
        cfg = self.config
        u = self.normalize(self.project_out(u0, basis))
        num, grad = self.energy_parts(u)
        lam = num  # unit sphere
        t = 1.0 / max(1.0, abs(lam))
        prev_u = prev_r = None
        for _ in range(cfg.max_iterations):
            r = self.minv(grad) - 2.0 * lam * u
            r = self.project_out(r, basis)
            r = r - float(u @ (self.M @ r)) * u
            rn2 = float(r @ (self.M @ r))
            if math.sqrt(max(rn2, 0.0)) <= cfg.descent_tolerance * (1.0 + abs(lam)):
                break
            if prev_u is not None:
                s = u - prev_u
                y = r - prev_r
                sy = float(s @ (self.M @ y))
                ss = float(s @ (self.M @ s))
                if sy > 1e-16 * ss:
                    t = ss / sy
            t = min(max(t, 1e-12), 1e12)
            prev_u, prev_r = u, r
            step = t
            accepted = False
            for _ in range(40):
                cand = u - step * r
                cand = self.project_out(cand, basis)
                nrm = self.mnorm(cand)
                if nrm > 1e-14:
                    cand = cand / nrm
                    cnum, cgrad = self.energy_parts(cand)
                    if cnum <= lam - 1e-4 * step * rn2:
                        u, lam, grad = cand, cnum, cgrad
                        accepted = True
                        break
                step *= 0.5
            if not accepted:
                break
        lam = self.rayleigh(u)
        res = self.residual(u, lam)
        return u, lam, res

    # -- frozen-pencil polish ------------------------------------------------

    def polish(self, u: np.ndarray, basis: Sequence[np.ndarray], steps: int = 12):
        """Rayleigh-quotient iteration on the frozen dual-tensor pencil.

        At a point ``u`` the energy gradient equals ``2 K_u u`` with ``K_u``
        the stiffness frozen at the differentials of ``u``, so discrete
        eigenpairs are fixed points.  For quadratic norm fields ``K_u`` is the
        exact stiffness and the iteration is plain RQI.
        """
        u = self.normalize(self.project_out(u, basis))
        lam = self.rayleigh(u)
        res = self.residual(u, lam)
        best = (u, lam, res)
        for _ in range(steps):
            if res <= self.config.descent_tolerance * (1.0 + abs(lam)):
                break
            if self.K is not None:
                K = self.K
            else:
                K = self.model.frozen_stiffness(self.mesh.expand(u))[np.ix_(self.free, self.free)].tocsr()
            offset = max(0.5 * res, 1e-10 * (1.0 + abs(lam)))
            shifted = (K - (lam - offset) * self.M).tocsc()
            try:
                w = splu(shifted).solve(self.M @ u)
            except RuntimeError:
                offset *= 100.0
                shifted = (K - (lam - offset) * self.M).tocsc()
                w = splu(shifted).solve(self.M @ u)
            w = self.project_out(w, basis)
            nrm = self.mnorm(w)
            if nrm <= 1e-300 or not np.all(np.isfinite(w)):
                break
            u = w / nrm
            lam = self.rayleigh(u)
            res = self.residual(u, lam)
            if res < best[2]:
                best = (u, lam, res)
        return best

    def minimize(self, basis: Sequence[np.ndarray], rng: np.random.Generator):
        """Best stationary point of E orthogonal to ``basis`` over restarts."""
        cfg = self.config
        best = None
        for restart in range(cfg.restarts):
            u0 = rng.standard_normal(self.free.size)
            u, lam, res = self.descend(u0, basis)
            u, lam, res = self.polish(u, basis)
            if best is None or (lam < best[1] - 1e-10 * (1.0 + abs(best[1]))) or (
                abs(lam - best[1]) <= 1e-10 * (1.0 + abs(best[1])) and res < best[2]
            ):
                best = (u, lam, res)
        u, lam, res = best
        tol = 100.0 * self.config.descent_tolerance * (1.0 + abs(lam))
        if res > max(tol, 1e-6 * (1.0 + abs(lam))):
            raise ConvergenceError(
                f"no restart reached stationarity (best residual {res:.3e})",
                best=self._field(u), residual=res,
            )
        return self._sign_fix(u), lam, res

    def subspace_sup(self, basis: Sequence[np.ndarray], rng: np.random.Generator) -> float:
        """Supremum of E over the unit sphere of ``span(basis)``.

        Exact generalized-eigenvalue computation for quadratic models, BB
        ascent over the coefficient sphere otherwise; either way this is a
        certified value of ``sup E`` over a subspace of dimension
        ``len(basis)``, hence a minimax upper bound for that index.
        """
        V = np.stack(basis, axis=1)
        Mv = V.T @ (self.M @ V)
        if self.K is not None:
            Kv = V.T @ (self.K @ V)
            return float(eigh(Kv, Mv, eigvals_only=True)[-1])
        k = V.shape[1]
        best = -np.inf
        for _ in range(4):
            c = rng.standard_normal(k)
            c /= math.sqrt(float(c @ (Mv @ c)))
            for _ in range(200):
                u = V @ c
                num, grad = self.energy_parts(u)
                gc = V.T @ grad - 2.0 * num * (Mv @ c)
                gc_norm = float(np.linalg.norm(gc))
                if gc_norm <= 1e-10 * (1.0 + abs(num)):
                    break
                c = c + (0.1 / (1.0 + abs(num))) * gc
                c /= math.sqrt(float(c @ (Mv @ c)))
            best = max(best, num)
        return best

    def _sign_fix(self, u: np.ndarray) -> np.ndarray:
        i = int(np.argmax(np.abs(u)))
        return u if u[i] >= 0 else -u

    def _field(self, u: np.ndarray) -> ScalarField:
        return ScalarField(u, self.mesh, l2_normalized=True)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def rayleigh(mesh: Mesh, spec: MetricSpec, measure: MeasureDensity, u: ScalarField) -> float:
    """Energy numerator over the squared ``L^2(dm)`` norm; scale invariant."""
    return _Engine(mesh, spec, measure).rayleigh(u.values)


def weak_residual(mesh: Mesh, spec: MetricSpec, measure: MeasureDensity,
                  u: ScalarField, lam: float) -> float:
    """Dual norm of the weak-form defect; zero for exact discrete eigenpairs."""
    return _Engine(mesh, spec, measure).residual(u.values, lam)


def _report(engine: _Engine, entries: list) -> SpectrumReport:
    gap = engine.config.multiplicity_gap
    return SpectrumReport(
        entries=entries,
        metric_id=engine.spec.name,
        measure_kind=engine.measure.name,
        mesh_id=engine.mesh.name,
        multiplicity_gap=gap,
    )


def solve_linear_spectrum(mesh: Mesh, spec: MetricSpec, measure: MeasureDensity,
                          k_max: int, config: Optional[SolverConfig] = None) -> SpectrumReport:
    """Lowest ``k_max`` eigenpairs of the symmetric-definite pencil.

    Requires a quadratic (Riemannian-effective) norm field, possibly with a
    weighted measure.  Dense solve below a size threshold; sparse
    shift-inverted Lanczos above it, with a deterministic start vector.
    """
    engine = _Engine(mesh, spec, measure, config)
    if engine.K is None:
        raise ValueError("linear spectrum requires a riemannian-effective norm field")
    K, M = engine.K, engine.M
    n = K.shape[0]
    k_max = min(k_max, n)
    if n <= max(300, 3 * k_max + 10):
        vals, vecs = eigh(K.toarray(), M.toarray())
        vals, vecs = vals[:k_max], vecs[:, :k_max]
    else:
        scale = K.diagonal().sum() / max(M.diagonal().sum(), 1e-300)
        rng = np.random.default_rng(engine.config.seed)
        v0 = rng.standard_normal(n)
        vals, vecs = eigsh(K, k=k_max, M=M, sigma=-1e-3 * scale, which="LM", v0=v0)
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    entries = []
    for k in range(k_max):
        u = engine.normalize(vecs[:, k])
        u = engine._sign_fix(u)
        lam = float(vals[k])
        if lam < 0 and lam > -1e-9:
            lam = abs(lam)
        res_vec = K @ u - lam * (M @ u)
        res = float(np.linalg.norm(res_vec) / max(np.linalg.norm(M @ u), 1e-300))
        entries.append(SpectrumEntry(k + 1, lam, engine._field(u), res, LINEAR))
    return _report(engine, entries)


def solve_ground(mesh: Mesh, spec: MetricSpec, measure: MeasureDensity,
                 boundary: str = "closed", config: Optional[SolverConfig] = None):
    """Ground state: exact constants on closed meshes, descent for Dirichlet.

    Returns ``(lam, eigenfield, residual)``.
    """
    engine = _Engine(mesh, spec, measure, config)
    if boundary not in ("closed", "dirichlet"):
        raise ValueError("boundary must be 'closed' or 'dirichlet'")
    if boundary == "closed":
        if not mesh.is_closed:
            raise ValueError("mesh carries boundary vertices but boundary='closed'")
        u = engine.constant_field()
        return 0.0, engine._field(u), 0.0
    if mesh.is_closed:
        raise ValueError("mesh has no boundary but boundary='dirichlet'")
    rng = np.random.default_rng(engine.config.seed)
    u, lam, res = engine.minimize([], rng)
    return lam, engine._field(u), res


def solve_first_positive(mesh: Mesh, spec: MetricSpec, measure: MeasureDensity,
                         config: Optional[SolverConfig] = None):
    """First positive eigenvalue on a closed mesh: minimize E at zero dm-mean.

    Returns ``(lam, eigenfield, residual)``; the eigenfield satisfies the
    zero-mean constraint to projection accuracy.
    """
    engine = _Engine(mesh, spec, measure, config)
    if not mesh.is_closed:
        raise ValueError("first-positive characterization needs a closed mesh")
    rng = np.random.default_rng(engine.config.seed)
    const = engine.constant_field()
    u, lam, res = engine.minimize([const], rng)
    u = engine.normalize(engine.project_out(u, [const]))
    return lam, engine._field(u), res


def solve_nonlinear_higher(mesh: Mesh, spec: MetricSpec, measure: MeasureDensity,
                           k_max: int, config: Optional[SolverConfig] = None) -> SpectrumReport:
    """Deflation sweep producing ``k_max`` stationary candidates.

    Level ``k`` minimizes E M-orthogonally to the previous eigenfields and
    records both a stationarity certificate (weak residual) and the supremum
    of E over the span of the first ``k`` fields, which is a minimax upper
    bound for index ``k``.  For quadratic norm fields the values coincide
    with the linear pencil spectrum; otherwise entries are flagged as
    upper-bound candidates.  Partial reports are returned when a level fails
    to converge.
    """
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    engine = _Engine(mesh, spec, measure, config)
    rng = np.random.default_rng(engine.config.seed)
    candidate_flag = not engine.model.quadratic
    entries: list = []
    fields: list = []
    if mesh.is_closed:
        u = engine.constant_field()
        entries.append(SpectrumEntry(1, 0.0, engine._field(u), 0.0, NONLINEAR_DESCENT,
                                     upper_bound=0.0, upper_bound_candidate=candidate_flag))
        fields.append(u)
    while len(entries) < k_max:
        try:
            u, lam, res = engine.minimize(fields, rng)
        except ConvergenceError:
            break
        fields.append(u)
        ub = engine.subspace_sup(fields, rng)
        method = ZERO_MEAN_MIN if (mesh.is_closed and len(entries) == 1) else NONLINEAR_DESCENT
        entries.append(SpectrumEntry(len(entries) + 1, lam, engine._field(u), res, method,
                                     upper_bound=ub, upper_bound_candidate=candidate_flag))
    entries.sort(key=lambda e: e.value)
    for i, e in enumerate(entries):
        e.k = i + 1
    return _report(engine, entries)
