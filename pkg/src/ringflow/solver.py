"""Discrete p-harmonic potentials by energy minimization.

The P1 p-Dirichlet energy ``sum_T area(T) |grad u|_T^p / p`` is minimized with
``u = 0`` on the outer and ``u = 1`` on the inner boundary.  Large exponents
are reached by continuation (p = 2, 4, 8, ...) with damped Newton steps and a
warm start from the previous exponent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from . import kernels
from .errors import ConvergenceError, DomainError
from .mesh import INNER, TriangleMesh

EPS_REG = 1e-12
P_MAX = 128.0
#: relative energy increase tolerated as floating-point noise in the line search
_ENERGY_RTOL = 8 * np.finfo(float).eps
#: Levenberg shift of the Jacobi-scaled Newton matrix
_LM_SHIFT = 1e-10
_TINY = 1e-300
_MAX_ROUNDS = 20


@dataclass
class StageReport:
    p: float
    iterations: int
    residuals: list[float]
    energies: list[float]
    relax_sweeps: int = 0
    max_change: float = 0.0


@dataclass
class SolveReport:
    """Convergence record of a (continuation) solve."""

    p: float
    tol: float
    stages: list[StageReport] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return sum(s.iterations for s in self.stages)

    @property
    def final_residual(self) -> float:
        return self.stages[-1].residuals[-1] if self.stages else math.nan

    @property
    def converged(self) -> bool:
        return bool(self.stages) and self.final_residual <= self.tol

    def to_text(self) -> str:
        lines = [f"p = {self.p:g}", f"tol = {self.tol:g}", f"iterations = {self.iterations}"]
        for s in self.stages:
            lines.append(
                f"stage p={s.p:g} iterations={s.iterations} residual={s.residuals[-1]:.3e} "
                f"energy={s.energies[-1]:.17g}"
            )
        return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Nodal values of a P1 function on ``mesh``."""

    mesh: TriangleMesh
    values: np.ndarray
    p: float
    report: SolveReport | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def triangle_gradients(self) -> np.ndarray:
        return np.einsum("tk,tkd->td", self.values[self.mesh.triangles], self.mesh.basis_gradients)

    def __call__(self, points) -> np.ndarray:
        return self.mesh.interpolate(self.values, points)


def dirichlet_values(mesh: TriangleMesh) -> np.ndarray:
    """Boundary data: 0 on the outer, 1 on the inner boundary, 0 elsewhere."""
    return (mesh.boundary_tags == INNER).astype(float)


class _Assembler:
    """Sparse pattern of the free-free Hessian, built once per mesh."""

    def __init__(self, mesh: TriangleMesh):
        self.mesh = mesh
        free = mesh.free
        self.free_idx = np.nonzero(free)[0]
        num = -np.ones(mesh.n_vertices, dtype=np.int64)
        num[self.free_idx] = np.arange(len(self.free_idx))
        t = mesh.triangles
        rows = np.repeat(num[t], 3, axis=1).ravel()
        cols = np.tile(num[t], (1, 3)).ravel()
        self.keep = (rows >= 0) & (cols >= 0)
        n = len(self.free_idx)
        pat = sp.coo_matrix(
            (np.arange(self.keep.sum(), dtype=float) + 1, (rows[self.keep], cols[self.keep])), shape=(n, n)
        ).tocsr()
        pat.sum_duplicates()
        self.indptr, self.indices = pat.indptr, pat.indices
        # scatter map from kept block entries to csr slots
        key = rows[self.keep].astype(np.int64) * n + cols[self.keep]
        csr_rows = np.repeat(np.arange(n), np.diff(pat.indptr))
        csr_key = csr_rows.astype(np.int64) * n + pat.indices
        self.slot = np.searchsorted(csr_key, key)
        self.n = n
        # vertex -> (triangle, local index) and vertex adjacency, both CSR
        flat = t.ravel()
        order = np.argsort(flat, kind="stable")
        self.vt_ptr = np.concatenate([[0], np.cumsum(np.bincount(flat, minlength=mesh.n_vertices))])
        self.vt_tri = order // 3
        self.vt_loc = order % 3
        e = mesh.edges
        both = np.concatenate([e, e[:, ::-1]])
        both = both[np.lexsort((both[:, 1], both[:, 0]))]
        self.vv_ptr = np.concatenate([[0], np.cumsum(np.bincount(both[:, 0], minlength=mesh.n_vertices))])
        self.vv_idx = both[:, 1]
        self.is_free = free

    def neighbourhood(self, nodes: np.ndarray) -> np.ndarray:
        """Free nodes among ``nodes`` and their neighbours, sorted."""
        if len(nodes) == 0:
            return nodes
        parts = [nodes] + [self.vv_idx[self.vv_ptr[i] : self.vv_ptr[i + 1]] for i in nodes]
        out = np.unique(np.concatenate(parts))
        return out[self.is_free[out]]

    def matrix(self, hess_blocks: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self.slot, hess_blocks.reshape(-1)[self.keep], minlength=len(self.indices))
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def gross(self, u: np.ndarray, p: float) -> np.ndarray:
        """Per-node sum of absolute elementwise gradient contributions (residual scale)."""
        m = self.mesh
        g = np.einsum("tk,tkd->td", u[m.triangles], m.basis_gradients)
        s2 = np.einsum("td,td->t", g, g) + EPS_REG
        loc = np.abs((m.areas * s2 ** (0.5 * p - 1.0))[:, None] * np.einsum("tkd,td->tk", m.basis_gradients, g))
        return np.bincount(m.triangles.ravel(), loc.ravel(), minlength=m.n_vertices)


def _residual(asm: _Assembler, grad: np.ndarray, u: np.ndarray, p: float) -> float:
    """Energy-gradient norm relative to the norm of its summed absolute contributions."""
    fi = asm.free_idx
    scale = np.linalg.norm(asm.gross(u, p)[fi])
    return float(np.linalg.norm(grad[fi]) / scale) if scale > 0 else 0.0


def _newton(asm: _Assembler, u: np.ndarray, p: float, tol: float, max_iter: int, stage: StageReport) -> np.ndarray:
    mesh = asm.mesh
    fi = asm.free_idx
    args = (mesh.triangles, mesh.basis_gradients, mesh.areas, p, EPS_REG)
    energy, grad, hess = kernels.assemble_p(u, *args)

    res = _residual(asm, grad, u, p)
    stage.residuals.append(res)
    stage.energies.append(energy)
    start = stage.iterations
    while res > tol:
        if stage.iterations - start >= max_iter:
            raise ConvergenceError(
                f"Newton did not converge at p={p:g}: residual {res:.3e} > tol {tol:.1e} after {max_iter} iterations",
                stage.residuals,
            )
        H = asm.matrix(hess)
        diag = H.diagonal()
        # Jacobi scaling: p-weights differ by many orders of magnitude across the mesh
        js = 1.0 / np.sqrt(np.maximum(diag, _TINY))
        Hs = sp.diags(js) @ H @ sp.diags(js) + _LM_SHIFT * sp.identity(len(diag))
        d = js * spsolve(Hs.tocsc(), -js * grad[fi])
        if not np.all(np.isfinite(d)) or d @ grad[fi] >= 0:
            # near-singular system: scaled steepest descent
            d = -grad[fi] / np.maximum(diag, _TINY)
        alpha, accepted = 1.0, False
        # compare energies summed in one order so rounding cannot masquerade as ascent
        energy = kernels.energy_only(u, *args)
        for _ in range(40):
            trial = u.copy()
            trial[fi] += alpha * d
            e_new = kernels.energy_only(trial, *args)
            if e_new <= energy * (1.0 + _ENERGY_RTOL):
                accepted = True
                break
            alpha *= 0.5
        stage.iterations += 1
        if not accepted:
            raise ConvergenceError(
                f"line search failed at p={p:g} with residual {res:.3e}", stage.residuals
            )
        u = trial
        energy, grad, hess = kernels.assemble_p(u, *args)
        res = _residual(asm, grad, u, p)
        stage.residuals.append(res)
        stage.energies.append(energy)
    return u


def _stage(
    asm: _Assembler, u: np.ndarray, p: float, tol: float, xtol: float, max_iter: int, max_sweeps: int
) -> tuple[np.ndarray, StageReport]:
    """Alternate Newton (global) and nodal relaxation (local) until both settle."""
    stage = StageReport(p, 0, [], [])
    for _ in range(_MAX_ROUNDS):
        u = _newton(asm, u, p, tol, max_iter, stage)
        stage.max_change = 0.0
        u = _relax(asm, u, p, xtol, max_sweeps, stage)
        if stage.max_change <= xtol:
            break
    else:
        raise ConvergenceError(f"Newton and relaxation did not agree at p={p:g}", stage.residuals)
    mesh = asm.mesh
    energy, grad, _ = kernels.assemble_p(u, mesh.triangles, mesh.basis_gradients, mesh.areas, p, EPS_REG)
    stage.residuals.append(_residual(asm, grad, u, p))
    stage.energies.append(energy)
    return u, stage


def _relax(asm: _Assembler, u: np.ndarray, p: float, xtol: float, max_sweeps: int, stage: StageReport) -> np.ndarray:
    """Nodal Gauss-Seidel on an active set until no value moves by more than ``xtol / 10``.

    Newton's global residual is dominated by the steep part of the field; at
    large p the flat parts (near corners of the outer boundary) carry weights
    many orders of magnitude smaller and are settled here instead.
    """
    mesh = asm.mesh
    active = asm.free_idx
    u = u.copy()
    first = True
    while len(active):
        if stage.relax_sweeps >= max_sweeps:
            raise ConvergenceError(
                f"nodal relaxation did not settle at p={p:g} within {max_sweeps} sweeps", stage.residuals
            )
        changes = np.zeros(len(active))
        kernels.relax(
            u, active, asm.vt_ptr, asm.vt_tri, asm.vt_loc, mesh.triangles, mesh.basis_gradients,
            mesh.areas, float(p), EPS_REG, 0.01 * xtol, changes,
        )
        stage.relax_sweeps += 1
        if first:
            stage.max_change = max(stage.max_change, float(changes.max(initial=0.0)))
            first = False
        active = asm.neighbourhood(active[changes > 0.1 * xtol])
    return u


def continuation_schedule(p: float) -> list[float]:
    """Exponents visited on the way to ``p``: 2, 4, 8, ... and finally ``p``."""
    out = [2.0]
    while out[-1] * 2 < p:
        out.append(out[-1] * 2)
    if p > out[-1]:
        out.append(float(p))
    return out


def _check_p(p: float) -> float:
    p = float(p)
    if not p >= 2.0:
        raise DomainError(f"exponent p={p} must be at least 2")
    if p > P_MAX or not math.isfinite(p):
        raise DomainError(f"exponent p={p} exceeds the supported maximum {P_MAX:g}")
    return p


def solve_sweep(
    mesh: TriangleMesh,
    ps,
    tol: float = 1e-10,
    xtol: float = 1e-12,
    max_iter: int = 60,
    max_sweeps: int = 20000,
    initial: np.ndarray | None = None,
) -> dict[float, ScalarField]:
    """Solve for several exponents along one continuation path.

    Every intermediate exponent of the schedule is solved once; the result
    contains exactly the requested ``ps``.
    """
    if not 0 < tol <= 1e-4:
        raise DomainError(f"tol={tol} must lie in (0, 1e-4]")
    targets = sorted({_check_p(p) for p in ps})
    if not targets:
        raise DomainError("empty exponent list")
    schedule = sorted(set().union(*(continuation_schedule(p) for p in targets)))
    asm = _Assembler(mesh)
    u = dirichlet_values(mesh) if initial is None else np.array(initial, dtype=float)
    u[~mesh.free] = dirichlet_values(mesh)[~mesh.free]
    report = SolveReport(targets[-1], tol)
    out = {}
    for q in schedule:
        u, stage = _stage(asm, u, q, tol, xtol, max_iter, max_sweeps)
        report.stages.append(stage)
        if q in targets:
            rep = SolveReport(q, tol, list(report.stages))
            out[q] = ScalarField(mesh, u.copy(), q, rep)
    return out


def solve_p_laplace(mesh: TriangleMesh, p: float, tol: float = 1e-10, xtol: float = 1e-12) -> ScalarField:
    """Discrete p-harmonic potential (0 on the outer, 1 on the inner boundary).

    Raises
    ------
    DomainError
        If ``p`` is not in [2, 128] or ``tol`` not in (0, 1e-4].
    ConvergenceError
        If a Newton stage fails; ``history`` holds its residuals.
    """
    p = _check_p(p)
    return solve_sweep(mesh, [p], tol, xtol)[p]
