"""Regularised Mohr-Coulomb dissipation in closed form.

``d1(eps) = sup {sig : eps - 0.5 C^-1 sig : sig  |  sig plastically admissible}``
is evaluated through the five return cases of the associated Mohr-Coulomb
model (elastic, smooth face, left edge, right edge, apex).  The maximiser is
the return-mapped stress and its derivative the consistent tangent.
:func:`brute_force_d1` solves the same supremum numerically and is used to
audit the closed form.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .reduction import ReducedStrength
from .tensors import (Elasticity, SymTensor3, as_tensor_array, spectral_decompose,
                      to_mandel)


class ClassificationGap(RuntimeError):
    """No return case matched a principal strain triple."""


class OracleNoConvergence(RuntimeError):
    pass


class ReturnBranch(enum.IntEnum):
    ELASTIC = 0
    SMOOTH = 1
    LEFT_EDGE = 2
    RIGHT_EDGE = 3
    APEX = 4


@dataclass(frozen=True)
class ConstitutiveParams:
    """Reduced strength and elastic moduli; fields may be per-point arrays."""

    c_q: float
    sin_phi: float
    cos_phi: float
    K: float
    G: float

    @classmethod
    def from_reduced(cls, reduced: ReducedStrength, el: Elasticity) -> "ConstitutiveParams":
        return cls(reduced.c_q, reduced.sin_phi_q, reduced.cos_phi_q, el.K, el.G)

    @classmethod
    def from_arrays(cls, c_q, tan_phi_q, K, G) -> "ConstitutiveParams":
        tan_phi_q = np.asarray(tan_phi_q, dtype=float)
        sec = np.hypot(1.0, tan_phi_q)
        return cls(np.asarray(c_q, dtype=float), tan_phi_q / sec, 1.0 / sec,
                   np.asarray(K, dtype=float), np.asarray(G, dtype=float))

    @property
    def lame(self):
        return self.K - 2.0 * self.G / 3.0

    @property
    def tan_phi(self):
        return self.sin_phi / self.cos_phi

    @property
    def c_cos(self):
        return self.c_q * self.cos_phi

    def take(self, idx) -> "ConstitutiveParams":
        def pick(x):
            x = np.asarray(x, dtype=float)
            return x[idx] if x.ndim else x
        return ConstitutiveParams(pick(self.c_q), pick(self.sin_phi), pick(self.cos_phi),
                                  pick(self.K), pick(self.G))


class ConstitutiveResult(NamedTuple):
    d1: np.ndarray       # energy density
    t1: np.ndarray       # stress, (..., 3, 3)
    tangent: np.ndarray  # (..., 6, 6) Mandel operator
    branch: np.ndarray   # ReturnBranch codes


def _broadcast(p: ConstitutiveParams, n: int):
    return [np.broadcast_to(np.asarray(x, dtype=float), (n,)) for x in
            (p.c_cos, p.sin_phi, p.K, p.G)]


def _branch_quantities(e, p: ConstitutiveParams):
    n = len(e)
    cc, s, K, G = _broadcast(p, n)
    lame = K - 2.0 * G / 3.0
    e1, e2, e3 = e[:, 0], e[:, 1], e[:, 2]
    tr = e1 + e2 + e3
    vol = 2.0 * lame * tr * s
    qs = vol + 2.0 * G * (1 + s) * e1 - 2.0 * G * (1 - s) * e3 - 2.0 * cc
    ql = vol + G * (1 + s) * (e1 + e2) - 2.0 * G * (1 - s) * e3 - 2.0 * cc
    qr = vol + 2.0 * G * (1 + s) * e1 - G * (1 - s) * (e2 + e3) - 2.0 * cc
    qa = 2.0 * K * tr * s - 2.0 * cc
    S = 4.0 * lame * s**2 + 4.0 * G * (1 + s**2)
    L = 4.0 * lame * s**2 + G * (1 + s) ** 2 + 2.0 * G * (1 - s) ** 2
    R = 4.0 * lame * s**2 + 2.0 * G * (1 + s) ** 2 + G * (1 - s) ** 2
    A = 4.0 * K * s**2
    g_sl = (e1 - e2) / (1 + s)
    g_sr = (e2 - e3) / (1 - s)
    g_la = (e1 + e2 - 2.0 * e3) / (3 - s)
    # printed with 2*eps_2 in the leading term; 2*eps_1 is the consistent form
    g_ra = (2.0 * e1 - e2 - e3) / (3 + s)
    scale = (K + G) * np.abs(e).max(axis=1) + cc
    return dict(scale=scale, cc=cc, s=s, K=K, G=G, lame=lame, tr=tr, qs=qs, ql=ql, qr=qr, qa=qa,
                S=S, L=L, R=R, A=A, g_sl=g_sl, g_sr=g_sr, g_la=g_la, g_ra=g_ra)


def _classify(q, slack: float = 1e-12) -> np.ndarray:
    # inequalities are widened by a rounding-level slack so that states on a
    # case boundary are never lost; neighbouring formulas agree there anyway
    t = slack * (q["scale"])
    elastic = q["qs"] <= t
    plastic = ~elastic
    smooth = plastic & (q["qs"] < q["S"] * np.minimum(q["g_sl"], q["g_sr"]) + t)
    left = (plastic & (q["g_sl"] < q["g_la"] + t / q["L"]) & (q["L"] * q["g_sl"] <= q["ql"] + t)
            & (q["ql"] < q["L"] * q["g_la"] + t))
    right = (plastic & (q["g_sr"] < q["g_ra"] + t / q["R"]) & (q["R"] * q["g_sr"] <= q["qr"] + t)
             & (q["qr"] < q["R"] * q["g_ra"] + t))
    apex = plastic & (q["s"] > 0.0) & (q["qa"] + t >= q["A"] * np.maximum(q["g_la"], q["g_ra"]))
    branch = np.full(len(elastic), -1, dtype=np.int8)
    # first matching case wins; at ties neighbouring formulas agree
    for code, mask in ((ReturnBranch.APEX, apex), (ReturnBranch.RIGHT_EDGE, right),
                       (ReturnBranch.LEFT_EDGE, left), (ReturnBranch.SMOOTH, smooth),
                       (ReturnBranch.ELASTIC, elastic)):
        branch[mask] = code
    return branch


def classify_principal(e, p: ConstitutiveParams) -> np.ndarray:
    """Return-case codes for principal strains sorted descending, shape (N, 3)."""
    e = np.atleast_2d(np.asarray(e, dtype=float))
    branch = _classify(_branch_quantities(e, p))
    if np.any(branch < 0):
        bad = e[branch < 0][0]
        raise ClassificationGap(f"no return case matches principal strains {bad}")
    return branch


def classify(eps_principal, p: ConstitutiveParams) -> ReturnBranch:
    e = np.asarray(eps_principal, dtype=float)
    if not (e[0] >= e[1] >= e[2]):
        raise ValueError("principal strains must be sorted in descending order")
    return ReturnBranch(int(classify_principal(e[None], p)[0]))


def principal_response(e, p: ConstitutiveParams):
    """Energy, principal stresses and their 3x3 Jacobian for sorted strains."""
    q = _branch_quantities(e, p)
    branch = _classify(q)
    if np.any(branch < 0):
        raise ClassificationGap(f"no return case matches principal strains {e[branch < 0][0]}")
    n = len(e)
    G, lame, s, tr = q["G"], q["lame"], q["s"], q["tr"]
    one = np.ones(3)
    cp = lame[:, None, None] * np.ones((3, 3)) + 2.0 * G[:, None, None] * np.eye(3)

    d = 0.5 * lame * tr**2 + G * np.einsum("ni,ni->n", e, e)
    sig = np.einsum("nij,nj->ni", cp, e)
    jac = cp.copy()

    m = branch == ReturnBranch.SMOOTH
    if np.any(m):
        a = np.stack([1 + s[m], np.zeros(m.sum()), -(1 - s[m])], axis=1)
        ca = np.einsum("nij,nj->ni", cp[m], a)
        d[m] -= q["qs"][m] ** 2 / (2.0 * q["S"][m])
        sig[m] -= (q["qs"][m] / q["S"][m])[:, None] * ca
        jac[m] -= np.einsum("ni,nj->nij", ca, ca) / q["S"][m][:, None, None]

    for code, proj, vec, key, mod in (
            (ReturnBranch.LEFT_EDGE, np.array([[.5, .5, 0], [.5, .5, 0], [0, 0, 1.]]),
             lambda s_: np.stack([(1 + s_) / 2, (1 + s_) / 2, -(1 - s_)], axis=1), "ql", "L"),
            (ReturnBranch.RIGHT_EDGE, np.array([[1., 0, 0], [0, .5, .5], [0, .5, .5]]),
             lambda s_: np.stack([1 + s_, -(1 - s_) / 2, -(1 - s_) / 2], axis=1), "qr", "R")):
        m = branch == code
        if not np.any(m):
            continue
        eb = e[m] @ proj
        cpb = lame[m][:, None, None] * np.ones((3, 3)) + 2.0 * G[m][:, None, None] * proj
        cv = np.einsum("nij,nj->ni", cp[m], vec(s[m]))
        qv, mv = q[key][m], q[mod][m]
        d[m] = 0.5 * lame[m] * tr[m] ** 2 + G[m] * np.einsum("ni,ni->n", eb, eb) - qv**2 / (2.0 * mv)
        sig[m] = np.einsum("nij,nj->ni", cp[m], eb) - (qv / mv)[:, None] * cv
        jac[m] = cpb - np.einsum("ni,nj->nij", cv, cv) / mv[:, None, None]

    m = branch == ReturnBranch.APEX
    if np.any(m):
        cc, sm, K = q["cc"][m], s[m], q["K"][m]
        apex = cc / sm
        d[m] = apex * tr[m] - cc**2 / (2.0 * K * sm**2)
        sig[m] = apex[:, None] * one
        jac[m] = 0.0
    return d, sig, jac, branch


def _pair_coefficients(e, sig, jac, rel_gap=1e-9):
    pairs = ((1, 2), (0, 2), (0, 1))
    scale = np.maximum(np.abs(e).max(axis=1), 1e-300)
    out = np.empty((len(e), 3))
    for k, (i, j) in enumerate(pairs):
        de = e[:, i] - e[:, j]
        close = np.abs(de) <= rel_gap * scale
        limit = 0.5 * (jac[:, i, i] - jac[:, i, j] - jac[:, j, i] + jac[:, j, j])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = (sig[:, i] - sig[:, j]) / de
        out[:, k] = np.where(close, limit, ratio)
    return out


def evaluate(eps, p: ConstitutiveParams, with_tangent: bool = True) -> ConstitutiveResult:
    """Vectorised closed-form ``d1``, stress and tangent for strains ``(..., 3, 3)``."""
    eps = as_tensor_array(eps)
    shape = eps.shape[:-2]
    flat = eps.reshape(-1, 3, 3)
    spec = spectral_decompose(flat)
    e = spec.values
    d, sig_p, jac, branch = principal_response(e, p)
    stress = np.einsum("nk,nkij->nij", sig_p, spec.projections)
    tangent = None
    if with_tangent:
        vec = spec.vectors
        basis = np.empty((len(e), 6, 6))
        basis[:, :, :3] = np.swapaxes(to_mandel(spec.projections), 1, 2)
        for k, (i, j) in enumerate(((1, 2), (0, 2), (0, 1))):
            ni, nj = vec[:, :, i], vec[:, :, j]
            outer = ni[:, :, None] * nj[:, None, :]
            sym = (outer + np.swapaxes(outer, 1, 2)) / math.sqrt(2.0)
            basis[:, :, 3 + k] = to_mandel(sym)
        mid = np.zeros((len(e), 6, 6))
        mid[:, :3, :3] = jac
        coef = _pair_coefficients(e, sig_p, jac)
        mid[:, 3, 3], mid[:, 4, 4], mid[:, 5, 5] = coef[:, 0], coef[:, 1], coef[:, 2]
        tangent = np.matmul(np.matmul(basis, mid), np.swapaxes(basis, 1, 2)).reshape(shape + (6, 6))
    return ConstitutiveResult(d.reshape(shape), stress.reshape(shape + (3, 3)), tangent,
                              branch.reshape(shape))


def d1_eval(eps, p: ConstitutiveParams) -> ConstitutiveResult:
    """Closed-form ``d1`` with stress, tangent and return case.

    Scalar input (a :class:`SymTensor3` or a single 3x3 array) gives scalar
    energy and branch; batches are passed through :func:`evaluate`.
    """
    arr = as_tensor_array(eps)
    res = evaluate(arr, p)
    if arr.ndim == 2:
        return ConstitutiveResult(float(res.d1), res.t1, res.tangent, ReturnBranch(int(res.branch)))
    return res


def t_alpha(eps, alpha: float, p: ConstitutiveParams, with_tangent: bool = True) -> ConstitutiveResult:
    """Regularised response for parameter ``alpha`` via the scaling of ``d1``."""
    if not alpha > 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    arr = as_tensor_array(eps)
    res = evaluate(alpha * arr, p, with_tangent)
    tangent = None if res.tangent is None else alpha * res.tangent
    if arr.ndim == 2:
        return ConstitutiveResult(float(res.d1) / alpha, res.t1, tangent, ReturnBranch(int(res.branch)))
    return ConstitutiveResult(res.d1 / alpha, res.t1, tangent, res.branch)


def _yield_rows(s):
    rows = []
    for i in range(3):
        for j in range(3):
            if i != j:
                r = np.zeros(3)
                r[i], r[j] = 1.0 + s, -(1.0 - s)
                rows.append(r)
    return np.array(rows)


def brute_force_d1(eps, p: ConstitutiveParams, tol: float = 1e-10, max_iter: int = 100_000):
    """Numerical supremum defining ``d1``, independent of the return cases.

    The maximiser is sought among stresses coaxial with ``eps``: principal
    stresses constrained by the Mohr-Coulomb inequalities for every ordering.
    The concave problem is solved through its dual (non-negative multipliers)
    by accelerated projected gradient; iteration stops on a relative duality
    gap below ``tol``, measured against a primal point made feasible by
    pulling it towards a strictly admissible hydrostatic stress.
    """
    arr = as_tensor_array(eps)
    single = arr.ndim == 2
    e = np.linalg.eigvalsh(arr.reshape(-1, 3, 3))
    cc = float(np.asarray(p.c_cos))
    s, K, G = float(np.asarray(p.sin_phi)), float(np.asarray(p.K)), float(np.asarray(p.G))
    lame = K - 2.0 * G / 3.0
    C = lame * np.ones((3, 3)) + 2.0 * G * np.eye(3)
    A = _yield_rows(s)
    b = np.full(6, 2.0 * cc)
    step = 1.0 / np.linalg.eigvalsh(A @ C @ A.T).max()
    n = len(e)

    def stress(mu):
        return (e - mu @ A) @ C

    def dual(mu):
        r = e - mu @ A
        return 0.5 * np.einsum("ni,ij,nj->n", r, C, r) + mu @ b

    cinv = np.linalg.inv(C)

    def primal(sig):
        return np.einsum("ni,ni->n", sig, e) - 0.5 * np.einsum("ni,ij,nj->n", sig, cinv, sig)

    p_int = 0.0 if cc > 0.0 else -1.0
    sig_int = np.full(3, p_int)
    g_int = A @ sig_int - b

    def feasible(sig):
        dirn = (sig - sig_int) @ A.T
        with np.errstate(divide="ignore", invalid="ignore"):
            lim = np.where(dirn > 0.0, -g_int / dirn, np.inf)
        t = np.minimum(1.0, lim.min(axis=1))
        return sig_int + t[:, None] * (sig - sig_int)

    mu = np.zeros((n, 6))
    y = mu.copy()
    tk = np.ones(n)
    prev = dual(mu)
    done = np.zeros(n, dtype=bool)
    best = primal(feasible(stress(mu)))
    for it in range(max_iter):
        grad = b - stress(y) @ A.T
        mu_new = np.maximum(y - step * grad, 0.0)
        val = dual(mu_new)
        restart = val > prev
        tk_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk**2))
        y = np.where(restart[:, None], mu_new,
                     mu_new + ((tk - 1.0) / tk_new)[:, None] * (mu_new - mu))
        tk = np.where(restart, 1.0, tk_new)
        mu, prev = mu_new, val
        if it % 10 == 0:
            best = np.maximum(best, primal(feasible(stress(mu))))
            done = (val - best) <= tol * (1.0 + np.abs(val))
            if np.all(done):
                break
    else:
        raise OracleNoConvergence(f"duality gap above {tol} after {max_iter} iterations")
    return float(best[0]) if single else best.reshape(arr.shape[:-2])


def sample_admissible_stress(rng, n, p: ConstitutiveParams, spread: float):
    """Random principal stress triples satisfying the yield inequalities."""
    cc, s = float(np.asarray(p.c_cos)), float(np.asarray(p.sin_phi))
    A = _yield_rows(s)
    out = []
    while sum(len(x) for x in out) < n:
        cand = rng.normal(scale=spread, size=(4 * n, 3))
        if s > 0.0:
            cand += cc / s - spread
        ok = np.all(cand @ A.T - 2.0 * cc <= 0.0, axis=1)
        out.append(cand[ok])
    return np.concatenate(out)[:n]


