"""Finite elements, damped Newton and the factor-of-safety search.

For a reduction level ``lam`` the kinematic functional

    J(v) = sum over quadrature points of D_alpha(eps(v)) - L(v)

is minimised over velocity fields on six-noded triangles; ``G_alpha(lam) =
-min J``.  The factor of safety estimate is the maximiser of ``lam -
G_alpha(lam)``, searched by stepping ``lam`` upwards with warm starts.

Units: lengths in m, stresses in kPa, unit weights in kN/m^3.  The
regularisation parameter ``alpha`` is interpreted with stresses measured in
MPa, i.e. the energies entering ``lam - G_alpha`` are in MN m/m; internally
this is ``alpha * ALPHA_STRESS_UNIT`` applied to kPa quantities.
"""
from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import dissipation
from .mesh import (BoundaryTag, Material, TriMesh, WaterTable, body_load, prolongate,
                   refine)
from .reduction import ReductionScheme, q_eval
from .tensors import deviator

log = logging.getLogger(__name__)

# stress unit (in kPa) in which alpha is expressed
ALPHA_STRESS_UNIT = 1000.0


class LinearSolveError(RuntimeError):
    pass


class SearchFailure(RuntimeError):
    """No reduction level in the search window admits a bounded solution."""


class SolveStatus(enum.Enum):
    CONVERGED = "converged"
    UNBOUNDED = "unbounded"
    MAX_ITER = "max_iter"


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray   # barycentric, (n, 3)
    weights: np.ndarray  # sum to one


def gauss7() -> QuadratureRule:
    """Seven-point degree-5 rule on the triangle."""
    a1, b1 = 0.059715871789770, 0.470142064105115
    a2, b2 = 0.797426985353087, 0.101286507323456
    pts = [(1 / 3, 1 / 3, 1 / 3),
           (a1, b1, b1), (b1, a1, b1), (b1, b1, a1),
           (a2, b2, b2), (b2, a2, b2), (b2, b2, a2)]
    w = [0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3
    return QuadratureRule(np.array(pts), np.array(w))


def p2_shape_and_grad(bary: np.ndarray):
    """Values ``(q, 6)`` and barycentric derivatives ``(q, 6, 3)`` of P2 shapes."""
    l = bary
    n = np.stack([l[:, 0] * (2 * l[:, 0] - 1), l[:, 1] * (2 * l[:, 1] - 1), l[:, 2] * (2 * l[:, 2] - 1),
                  4 * l[:, 0] * l[:, 1], 4 * l[:, 1] * l[:, 2], 4 * l[:, 2] * l[:, 0]], axis=1)
    d = np.zeros((len(l), 6, 3))
    for i in range(3):
        d[:, i, i] = 4 * l[:, i] - 1
    for k, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
        d[:, 3 + k, i] = 4 * l[:, j]
        d[:, 3 + k, j] = 4 * l[:, i]
    return n, d


@dataclass
class InnerSolveResult:
    v: np.ndarray
    J: float
    G_alpha: float
    status: SolveStatus
    iterations: int
    history: list = field(default_factory=list)   # (iter, residual, J, step)

    @property
    def converged(self) -> bool:
        return self.status is SolveStatus.CONVERGED


@dataclass
class NewtonSettings:
    rtol: float = 1e-8
    max_iter: int = 60
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_halvings: int = 40
    # energy level below which a solve is declared unbounded; None means
    # max(lam, divergence_factor * |J| after the first accepted step)
    divergence_level: float | None = None
    divergence_factor: float = 1e4
    growth_steps: int = 5


@dataclass
class SearchConfig:
    lambda_start: float = 0.5
    step: float = 0.1
    tol: float = 1e-3
    window: tuple = (0.1, 10.0)


class SlopeProblem:
    """Discretised kinematic problem on one mesh: geometry, loads, constraints."""

    def __init__(self, mesh: TriMesh, materials: Mapping[int, Material] | Sequence[Material],
                 water: WaterTable | None = None, quadrature: QuadratureRule | None = None,
                 newton: NewtonSettings | None = None):
        self.mesh = mesh
        self.materials = materials if isinstance(materials, Mapping) else dict(enumerate(materials))
        self.water = water
        self.quad = quadrature or gauss7()
        self.newton = newton or NewtonSettings()
        self._precompute()

    # --- setup ------------------------------------------------------------
    def _precompute(self):
        mesh, quad = self.mesh, self.quad
        ne, nq = mesh.n_elements, len(quad.weights)
        p = mesh.vertices[mesh.elements]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)   # dx/d(l1,l2)
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        inv = np.linalg.inv(jac)                                          # d(l1,l2)/dx
        grad_l = np.zeros((ne, 3, 2))
        grad_l[:, 1:, :] = inv
        grad_l[:, 0, :] = -inv.sum(axis=1)
        shape, dshape = p2_shape_and_grad(quad.points)
        grads = np.einsum("qak,ekx->eqax", dshape, grad_l)                # (ne, nq, 6, 2)
        self.shape = shape
        self.grads = grads
        self.wdet = 0.5 * det[:, None] * quad.weights[None, :]           # (ne, nq)
        b = np.zeros((ne, nq, 3, 12))
        b[:, :, 0, 0::2] = grads[..., 0]
        b[:, :, 1, 1::2] = grads[..., 1]
        b[:, :, 2, 0::2] = grads[..., 1]
        b[:, :, 2, 1::2] = grads[..., 0]
        self.B = b
        nodes = mesh.element_nodes
        self.element_dofs = np.stack([2 * nodes, 2 * nodes + 1], axis=2).reshape(ne, 12)
        self.ndof = 2 * mesh.n_nodes

        fixed = np.zeros(self.ndof, dtype=bool)
        for node, tags in mesh.boundary_node_tags().items():
            if BoundaryTag.BOTTOM in tags:
                fixed[2 * node:2 * node + 2] = True
            if BoundaryTag.LEFT in tags or BoundaryTag.RIGHT in tags:
                fixed[2 * node] = True
        self.fixed = fixed
        self.free = np.flatnonzero(~fixed)
        fmap = np.full(self.ndof, -1)
        fmap[self.free] = np.arange(len(self.free))
        loc = fmap[self.element_dofs]
        rows = np.repeat(loc[:, :, None], 12, axis=2)
        cols = np.repeat(loc[:, None, :], 12, axis=1)
        keep = (rows >= 0) & (cols >= 0)
        self._keep = keep.reshape(ne, -1)
        self._rows = rows.reshape(ne, -1)[self._keep]
        self._cols = cols.reshape(ne, -1)[self._keep]

        force = body_load(mesh, self.materials, self.water)               # (ne, 2)
        fe = np.einsum("eq,qa,ec->eac", self.wdet, shape, force).reshape(ne, 12)
        load = np.zeros(self.ndof)
        np.add.at(load, self.element_dofs, fe)
        self.load = load

        mats = [self.materials[int(m)] for m in mesh.material]
        self._K = np.repeat([m.elasticity.K for m in mats], nq)
        self._G = np.repeat([m.elasticity.G for m in mats], nq)
        self._mat_of_point = np.repeat(mesh.material, nq)

    def point_params(self, lam: float, scheme) -> dissipation.ConstitutiveParams:
        """Reduced constitutive parameters at every quadrature point."""
        scheme = ReductionScheme.parse(scheme)
        c = np.empty(len(self._K))
        tan = np.empty(len(self._K))
        for mid, mat in self.materials.items():
            sel = self._mat_of_point == mid
            if not sel.any():
                continue
            q = q_eval(scheme, mat.strength, lam)
            if not q > 0.0:
                raise ValueError(f"reduction factor vanishes at lambda={lam}")
            c[sel] = mat.strength.c / q
            tan[sel] = mat.strength.tan_phi / q
        return dissipation.ConstitutiveParams.from_arrays(c, tan, self._K, self._G)

    # --- kinematics -------------------------------------------------------
    def strains(self, v: np.ndarray) -> np.ndarray:
        """Plane-strain tensors ``(ne, nq, 3, 3)`` of a nodal field (dof vector)."""
        ue = v[self.element_dofs]
        ev = np.einsum("eqij,ej->eqi", self.B, ue)
        eps = np.zeros(ev.shape[:2] + (3, 3))
        eps[..., 0, 0] = ev[..., 0]
        eps[..., 1, 1] = ev[..., 1]
        eps[..., 0, 1] = eps[..., 1, 0] = 0.5 * ev[..., 2]
        return eps

    def energy(self, v, params, alpha_int, with_scale=False):
        """Value of ``J``; optionally also the sum of absolute contributions."""
        eps = self.strains(v).reshape(-1, 3, 3)
        res = dissipation.t_alpha(eps, alpha_int, params, with_tangent=False)
        dw = res.d1 * self.wdet.ravel()
        work = float(self.load @ v)
        J = float(np.sum(dw) - work)
        if with_scale:
            return J, float(np.sum(np.abs(dw)) + abs(work))
        return J

    def assemble(self, v, params, alpha_int, with_tangent=True):
        """Energy, free-dof residual, free-dof tangent and energy magnitude at ``v``.

        The magnitude (sum of absolute contributions to ``J``) sets the
        rounding level used by the line search.
        """
        ne, nq = self.wdet.shape
        eps = self.strains(v).reshape(-1, 3, 3)
        res = dissipation.t_alpha(eps, alpha_int, params, with_tangent)
        w = self.wdet.ravel()
        dw = res.d1 * w
        work = float(self.load @ v)
        J = float(np.sum(dw) - work)
        scale = float(np.sum(np.abs(dw)) + abs(work))
        sig = np.stack([res.t1[:, 0, 0], res.t1[:, 1, 1], res.t1[:, 0, 1]], axis=1).reshape(ne, nq, 3)
        fe = np.einsum("eqij,eqi->ej", self.B, sig * self.wdet[..., None])
        grad = np.zeros(self.ndof)
        np.add.at(grad, self.element_dofs, fe)
        grad -= self.load
        K = None
        if with_tangent:
            idx = [0, 1, 5]
            f = np.array([1.0, 1.0, 1.0 / np.sqrt(2.0)])
            dv = res.tangent[:, idx][:, :, idx] * f[None, :, None] * f[None, None, :]
            dv = dv.reshape(ne, nq, 3, 3)
            bt = np.swapaxes(self.B, -1, -2) * self.wdet[..., None, None]
            ke = np.matmul(np.matmul(bt, dv), self.B).sum(axis=1)
            data = ke.reshape(ne, -1)[self._keep]
            nf = len(self.free)
            K = sp.coo_matrix((data, (self._rows, self._cols)), shape=(nf, nf)).tocsc()
            K = 0.5 * (K + K.T)
        return J, grad[self.free], K, scale

    def element_dissipation(self, v, params, alpha_int) -> np.ndarray:
        """Element integrals of the regularised dissipation density."""
        eps = self.strains(v).reshape(-1, 3, 3)
        d = dissipation.t_alpha(eps, alpha_int, params, with_tangent=False).d1
        return np.sum(d.reshape(self.wdet.shape) * self.wdet, axis=1)

    # --- solvers ----------------------------------------------------------
    def _newton_direction(self, K, r):
        diag_scale = float(np.abs(K.diagonal()).mean()) or 1.0
        tau = 0.0
        for attempt in range(12):
            A = K if tau == 0.0 else K + tau * diag_scale * sp.identity(K.shape[0], format="csc")
            try:
                with np.errstate(all="ignore"):
                    # the tangent is symmetric positive semidefinite: keep the
                    # fill-reducing ordering and skip partial pivoting
                    lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                                   options=dict(SymmetricMode=True))
                    d = lu.solve(-r)
            except RuntimeError:
                d = None
            if d is not None and np.all(np.isfinite(d)) and r @ d < 0.0:
                return d
            tau = 1e-8 if tau == 0.0 else tau * 100.0
        raise LinearSolveError("tangent could not be factorised after diagonal regularisation")

    def inner_solve(self, lam: float, alpha: float, scheme, warm_start=None,
                    j_div: float | None = None) -> InnerSolveResult:
        """Damped Newton minimisation of ``J`` for reduction level ``lam``.

        ``alpha`` is the user-facing regularisation parameter; ``j_div``
        overrides the energy level below which the problem is declared
        unbounded.
        """
        if not alpha > 0.0:
            raise ValueError("alpha must be positive")
        if lam < 0.0:
            raise ValueError("lambda must be non-negative")
        cfg = self.newton
        alpha_int = alpha * ALPHA_STRESS_UNIT
        params = self.point_params(lam, scheme)
        v = np.zeros(self.ndof) if warm_start is None else np.array(warm_start, dtype=float)
        v[self.fixed] = 0.0
        load_norm = float(np.abs(self.load[self.free]).max()) or 1.0
        history = []
        J, r, K, mag = self.assemble(v, params, alpha_int)
        j_limit = j_div if j_div is not None else cfg.divergence_level
        growth, last_drop = 0, 0.0
        # backtracking starts from a few times the previous accepted step, so
        # runs of tiny steps (typical when J is unbounded) stay cheap
        step0 = 1.0
        status = SolveStatus.MAX_ITER
        it = 0
        for it in range(1, cfg.max_iter + 1):
            res_norm = float(np.abs(r).max())
            if res_norm <= cfg.rtol * load_norm:
                status = SolveStatus.CONVERGED
                history.append((it - 1, res_norm, J, 0.0))
                it -= 1
                break
            d = self._newton_direction(K, r)
            slope = float(r @ d)
            # close to the minimiser the predicted decrease drops below the
            # rounding level of J; the step is then judged by the residual
            rounding = -slope <= 1e-12 * mag
            step, trial, accepted = step0, np.zeros(self.ndof), False
            for _ in range(cfg.max_halvings):
                trial[self.free] = v[self.free] + step * d
                if rounding:
                    J_new, r_new, K_new, mag_new = self.assemble(trial, params, alpha_int)
                    accepted = (float(np.abs(r_new).max()) < res_norm
                                and J_new <= J + 1e-12 * mag)
                else:
                    J_new, mag_new = self.energy(trial, params, alpha_int, with_scale=True)
                    accepted = J_new <= J + cfg.armijo * step * slope
                if accepted:
                    break
                step *= cfg.backtrack
            if not accepted:
                history.append((it, res_norm, J, 0.0))
                break
            drop = J - J_new
            step0 = min(1.0, 4.0 * step)
            v = trial
            history.append((it, res_norm, J_new, step))
            if j_limit is None:
                j_limit = max(lam, cfg.divergence_factor * abs(J_new))
            if J_new < -j_limit:
                J = J_new
                status = SolveStatus.UNBOUNDED
                break
            growth = growth + 1 if (step == 1.0 and drop > last_drop > 0.0) else 0
            last_drop = drop
            if growth >= cfg.growth_steps:
                J = J_new
                status = SolveStatus.UNBOUNDED
                break
            if rounding:
                J, r, K, mag = J_new, r_new, K_new, mag_new
                continue
            J, r, K, mag = self.assemble(v, params, alpha_int)
        if status is SolveStatus.UNBOUNDED:
            g = np.inf
        else:
            g = -J
        return InnerSolveResult(v, J, g, status, it, history)

    def failure_field(self, v: np.ndarray) -> np.ndarray:
        """Element-averaged deviatoric strain-rate norm, scaled to max 1."""
        eps = self.strains(v)
        dev = deviator(eps)
        norm = np.sqrt(np.einsum("eqij,eqij->eq", dev, dev))
        avg = np.sum(norm * self.wdet, axis=1) / self.wdet.sum(axis=1)
        top = avg.max(initial=0.0)
        # rigid motions leave only rounding noise, which must not be normalised up
        noise = 1e-12 * float(np.abs(v).max(initial=0.0)) / np.sqrt(self.mesh.areas().min())
        return avg / top if top > noise else np.zeros_like(avg)


# --- outer loops -------------------------------------------------------------

@dataclass
class SearchResult:
    lambda_star: float
    omega_star: float
    v: np.ndarray
    g_alpha: float
    solves: int
    newton_iterations: int
    log: list


def fos_search(problem: SlopeProblem, alpha: float, scheme, cfg: SearchConfig | None = None,
               warm_start=None) -> SearchResult:
    """Maximise ``lam - G_alpha(lam)`` by stepping ``lam`` up and halving the step.

    A trial level is rejected once its energy shows ``G_alpha`` exceeding
    ``lam - best``, which covers both unbounded problems and levels that
    cannot improve on the incumbent.
    """
    cfg = cfg or SearchConfig()
    lo, hi = cfg.window
    lam = min(max(cfg.lambda_start, lo), hi)
    rows, solves, newton_its = [], 0, 0

    def run(l, warm, j_div=None):
        nonlocal solves, newton_its
        r = problem.inner_solve(l, alpha, scheme, warm, j_div)
        solves += 1
        newton_its += r.iterations
        rows.extend((l, alpha) + h for h in r.history)
        log.debug("lambda=%.5f status=%s G=%.6g its=%d", l, r.status.value, r.G_alpha, r.iterations)
        return r

    res = run(lam, warm_start)
    back = cfg.step
    while not res.converged:
        if lam <= lo:
            raise SearchFailure(f"no bounded solution for lambda >= {lo} (scheme {ReductionScheme.parse(scheme).value})")
        lam = max(lo, lam - back)
        back *= 2.0
        res = run(lam, None)
    best_l, best_f, best_v, best_g = lam, lam - res.G_alpha, res.v, res.G_alpha
    h = cfg.step
    while h >= cfg.tol:
        trial = best_l + h
        if trial > hi:
            h *= 0.5
            continue
        r = run(trial, best_v, j_div=trial - best_f)
        f = trial - r.G_alpha
        if r.converged and f > best_f:
            best_l, best_f, best_v, best_g = trial, f, r.v, r.G_alpha
        else:
            h *= 0.5
    return SearchResult(best_l, best_f, best_v, best_g, solves, newton_its, rows)


@dataclass
class LevelRecord:
    level: int
    elements: int
    lambda_star: float
    omega_star: float
    g_alpha: float
    solves: int
    newton_iterations: int
    seconds: float


@dataclass
class FosReport:
    scheme: str
    alpha: float
    levels: list
    fos: float
    seconds: float
    convergence: list = field(default_factory=list)  # (level, lambda, alpha, iter, residual, J, step)
    meshes: list = field(default_factory=list)
    velocities: list = field(default_factory=list)
    failure_fields: list = field(default_factory=list)

    @property
    def final_mesh(self) -> TriMesh:
        return self.meshes[-1]

    @property
    def final_velocity(self) -> np.ndarray:
        return self.velocities[-1]

    def as_dict(self) -> dict:
        return {"scheme": self.scheme, "alpha": self.alpha, "fos": self.fos,
                "levels": [vars(r).copy() for r in self.levels]}


def alpha_continuation(problem: SlopeProblem, scheme, schedule=(10.0, 100.0, 1000.0),
                       cfg: SearchConfig | None = None, tol: float = 0.01, cap: float = 1000.0):
    """Run the search for increasing ``alpha`` on one (coarse) mesh.

    Returns the first ``alpha`` whose estimate moved by at most ``tol`` from
    the previous one (capped at ``cap``) and the per-alpha results.
    """
    schedule = [a for a in schedule if a <= cap] or [cap]
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("alpha schedule must be increasing")
    cfg = cfg or SearchConfig()
    results, prev, chosen = [], None, schedule[-1]
    warm = None
    for a in schedule:
        start = cfg if prev is None else replace(cfg, lambda_start=max(cfg.window[0], prev.lambda_star - cfg.step))
        r = fos_search(problem, a, scheme, start, warm)
        results.append((a, r))
        if prev is not None and abs(r.lambda_star - prev.lambda_star) <= tol:
            chosen = a
            break
        prev = r
        warm = None
    return chosen, results


def adaptive_fos(mesh0: TriMesh | None, materials, scheme, levels: int = 15, alpha: float = 1000.0,
                 water: WaterTable | None = None, cfg: SearchConfig | None = None,
                 fraction: float = 0.2, indicator: str = "dissipation",
                 refine_step: float = 0.02, newton: NewtonSettings | None = None,
                 trajectory: Sequence[TriMesh] | None = None) -> FosReport:
    """Search, mark, refine; repeated ``levels`` times.

    From the second level on the search restarts slightly below the previous
    estimate with step ``refine_step``, warm-started from the prolonged field.
    Passing ``trajectory`` (meshes of an earlier adaptive run) replaces the
    marking and refinement, so several schemes can share one mesh sequence.
    """
    if trajectory is not None:
        trajectory = list(trajectory)
        levels = len(trajectory)
        mesh0 = trajectory[0]
    if levels < 1:
        raise ValueError("levels must be at least 1")
    cfg = cfg or SearchConfig()
    t0 = time.perf_counter()
    mesh = mesh0
    warm = None
    records, conv, meshes, vels, fields = [], [], [], [], []
    search = cfg
    result = None
    for level in range(1, levels + 1):
        tl = time.perf_counter()
        problem = SlopeProblem(mesh, materials, water, newton=newton)
        result = fos_search(problem, alpha, scheme, search, warm)
        conv.extend((level,) + row for row in result.log)
        records.append(LevelRecord(level, mesh.n_elements, result.lambda_star, result.omega_star,
                                   result.g_alpha, result.solves, result.newton_iterations,
                                   time.perf_counter() - tl))
        log.info("level %d: %d elements, lambda*=%.4f omega*=%.4f (%d solves, %.1fs)", level,
                 mesh.n_elements, result.lambda_star, result.omega_star, result.solves,
                 records[-1].seconds)
        meshes.append(mesh)
        vels.append(result.v)
        fields.append(problem.failure_field(result.v))
        if level == levels:
            break
        if trajectory is not None:
            new_mesh = trajectory[level]
        else:
            if indicator == "dissipation":
                params = problem.point_params(result.lambda_star, scheme)
                ind = problem.element_dissipation(result.v, params, alpha * ALPHA_STRESS_UNIT)
                ind = np.maximum(ind, 0.0)
            elif indicator == "deviatoric":
                ind = problem.failure_field(result.v) * mesh.areas()
            else:
                raise ValueError(f"unknown indicator {indicator!r}")
            new_mesh = refine(mesh, ind, fraction)
        warm = prolongate(mesh, new_mesh, result.v.reshape(-1, 2)).reshape(-1)
        mesh = new_mesh
        search = replace(cfg, lambda_start=max(cfg.window[0], result.lambda_star - 2 * refine_step),
                         step=refine_step)
    return FosReport(ReductionScheme.parse(scheme).value, alpha, records, records[-1].lambda_star,
                     time.perf_counter() - t0, conv, meshes, vels, fields)


def failure_field(problem: SlopeProblem, v: np.ndarray) -> np.ndarray:
    return problem.failure_field(v)
