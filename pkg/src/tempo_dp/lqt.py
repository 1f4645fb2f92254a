"""Linear quadratic tracking: sequential Riccati recursion and a parallel
backward pass over dual-parameterized conditional value functions.

An interval k..i of the tracking problem is summarized by five parameters
(A, b, C, eta, J): the quadratic-in-the-endpoints value of the interval in
dual form, which stays well defined when C is singular. Combining two
adjacent intervals is associative, so value functions for every suffix (and
conditional values for every prefix) come out of one scan. Trajectories are
recovered either by composing closed-loop affine maps (Method 1) or from
prefix elements and the backward values (Method 2).

Also here: the generalized-cost (cross-term) reduction to standard form,
block partial condensing, a dense KKT reference solver, and file I/O.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import SolverError
from .scan import ScanDirection, par_scan, par_scan_stacked

__all__ = [
    "LqtProblem",
    "LqtElement",
    "QuadValue",
    "Gains",
    "AffineMap",
    "lqt_identity",
    "affine_identity",
    "compose_affine",
    "combine_lqt",
    "make_lqt_elements",
    "riccati_backward",
    "parallel_backward",
    "control",
    "closed_loop_rollout",
    "controls_along",
    "traj_method1",
    "traj_method2",
    "transform_general_cost",
    "GeneralCostRecovery",
    "condense",
    "CondensingRecovery",
    "solve_condensed",
    "kkt_oracle",
    "lqt_cost",
    "value_at",
    "problem_to_dict",
    "problem_from_dict",
    "save_problem",
    "load_problem",
    "write_trajectory_csv",
]

COND_LIMIT = 1e12


def _t(M: np.ndarray) -> np.ndarray:
    return np.swapaxes(M, -1, -2)


def _mv(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    return (M @ v[..., None])[..., 0]


def _sym(M: np.ndarray) -> np.ndarray:
    return (M + _t(M)) / 2


def _as_float(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


@dataclass(frozen=True)
class LqtProblem:
    """Time-varying tracking problem over steps S..T.

    Stage arrays have leading length N = T - S (step k maps to index k - S):
    dynamics x_{k+1} = F x_k + c + L u_k, stage cost
    0.5 (H x - r)' X (H x - r) + 0.5 u' U u, plus the terminal cost
    0.5 (HT x_T - rT)' XT (HT x_T - rT). Optional cross terms M (coupling
    H x - r with u - s) and control references s generalize the stage cost;
    solvers require them eliminated first (transform_general_cost).
    """

    S: int
    T: int
    x0: np.ndarray
    F: np.ndarray
    c: np.ndarray
    L: np.ndarray
    H: np.ndarray
    X: np.ndarray
    r: np.ndarray
    U: np.ndarray
    HT: np.ndarray
    XT: np.ndarray
    rT: np.ndarray
    M: np.ndarray | None = None
    s: np.ndarray | None = None

    def __post_init__(self):
        n = self.T - self.S
        if n < 0:
            raise ValueError("need T >= S")
        for name in ("x0", "F", "c", "L", "H", "X", "r", "U", "HT", "XT", "rT"):
            object.__setattr__(self, name, _as_float(getattr(self, name)))
        for name in ("M", "s"):
            if getattr(self, name) is not None:
                object.__setattr__(self, name, _as_float(getattr(self, name)))
        nx = self.x0.shape[0]
        if self.L.ndim != 3 or self.H.ndim != 3:
            raise ValueError("L and H must be stacked 3-d arrays")
        shapes = {
            "F": (n, nx, nx),
            "c": (n, nx),
            "L": (n, nx, self.n_u),
            "H": (n, self.n_r, nx),
            "X": (n, self.n_r, self.n_r),
            "r": (n, self.n_r),
            "U": (n, self.n_u, self.n_u),
        }
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if self.HT.ndim != 2 or self.HT.shape[1] != nx:
            raise ValueError("terminal output map has wrong shape")
        nrT = self.HT.shape[0]
        if self.XT.shape != (nrT, nrT) or self.rT.shape != (nrT,):
            raise ValueError("terminal cost has wrong shape")
        if self.M is not None and self.M.shape != (n, self.n_r, self.n_u):
            raise ValueError("cross-term M has wrong shape")
        if self.s is not None and self.s.shape != (n, self.n_u):
            raise ValueError("control reference s has wrong shape")
        for name in ("X", "U", "XT"):
            A = getattr(self, name)
            if A.size and not np.allclose(A, _t(A), rtol=1e-12, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")

    @property
    def N(self) -> int:
        return self.T - self.S

    @property
    def n_x(self) -> int:
        return self.x0.shape[0]

    @property
    def n_u(self) -> int:
        return self.L.shape[2]

    @property
    def n_r(self) -> int:
        return self.H.shape[1]

    @property
    def has_general_cost(self) -> bool:
        return self.M is not None or self.s is not None


@dataclass(frozen=True)
class LqtElement:
    """Dual parameters (A, b, C, eta, J) of one interval's value function."""

    A: np.ndarray
    b: np.ndarray
    C: np.ndarray
    eta: np.ndarray
    J: np.ndarray


@dataclass(frozen=True)
class QuadValue:
    """Value function 0.5 x'Sx - v'x, constant dropped."""

    S: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class Gains:
    K: np.ndarray
    Kv: np.ndarray
    Kc: np.ndarray


@dataclass(frozen=True)
class AffineMap:
    """Closed-loop transition x -> Ft x + ct."""

    Ft: np.ndarray
    ct: np.ndarray


def lqt_identity(n_x: int) -> LqtElement:
    z = np.zeros((n_x, n_x))
    return LqtElement(A=np.eye(n_x), b=np.zeros(n_x), C=z.copy(), eta=np.zeros(n_x), J=z.copy())


def affine_identity(n_x: int) -> AffineMap:
    return AffineMap(Ft=np.eye(n_x), ct=np.zeros(n_x))


def compose_affine(a: AffineMap, b: AffineMap) -> AffineMap:
    """a (x) b = f_b o f_a."""
    return AffineMap(Ft=b.Ft @ a.Ft, ct=_mv(b.Ft, a.ct) + b.ct)


def _compose_affine_arrays(a, b):
    Fa, ca = a
    Fb, cb = b
    return Fb @ Fa, _mv(Fb, ca) + cb


def _combine_element_arrays(e1, e2):
    """Interval combination, batched over any leading axes.

    e1 covers the chronologically earlier interval. C and J of both inputs
    must be symmetric (maintained by construction and re-symmetrization
    here), which makes (I + J2 C1) the transpose of (I + C1 J2) so a single
    factorization backs both solves. Conditioning of that matrix is checked
    via a 1-norm estimate (extra identity columns in the solve); beyond
    COND_LIMIT the combine errors out instead of returning garbage.
    """
    A1, b1, C1, eta1, J1 = e1
    A2, b2, C2, eta2, J2 = e2
    n = A1.shape[-1]
    eye = np.eye(n)
    Z = eye + C1 @ J2
    eye_b = np.broadcast_to(eye, Z.shape)
    rhs1 = np.concatenate([A1, (b1 + _mv(C1, eta2))[..., None], C1, eye_b], axis=-1)
    rhs2 = np.concatenate([(eta2 - _mv(J2, b1))[..., None], J2], axis=-1)
    try:
        sol1 = np.linalg.solve(Z, rhs1)
        sol2 = np.linalg.solve(_t(Z), rhs2)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"ill-conditioned combine: {exc}") from exc
    zinv_cols = sol1[..., 2 * n + 1 :]
    cond = np.abs(Z).sum(axis=-2).max(axis=-1) * np.abs(zinv_cols).sum(axis=-2).max(axis=-1)
    worst = float(np.max(cond))
    if not np.isfinite(worst) or worst > COND_LIMIT:
        raise SolverError(f"ill-conditioned combine: condition estimate {worst:.3e}")
    A = A2 @ sol1[..., :n]
    b = _mv(A2, sol1[..., n]) + b2
    C = _sym(A2 @ sol1[..., n + 1 : 2 * n + 1] @ _t(A2) + C2)
    eta = _mv(_t(A1), sol2[..., 0]) + eta1
    J = _sym(_t(A1) @ sol2[..., 1:] @ A1 + J1)
    return A, b, C, eta, J


def combine_lqt(e1: LqtElement, e2: LqtElement) -> LqtElement:
    """Combine two adjacent interval elements (e1 earlier in time)."""
    if e1.A.shape != e2.A.shape:
        raise ValueError(f"dimension mismatch: {e1.A.shape} vs {e2.A.shape}")
    out = _combine_element_arrays(
        (e1.A, e1.b, e1.C, e1.eta, e1.J), (e2.A, e2.b, e2.C, e2.eta, e2.J)
    )
    return LqtElement(*out)


def _identity_arrays(n_x: int):
    z = np.zeros((n_x, n_x))
    return (np.eye(n_x), np.zeros(n_x), z, np.zeros(n_x), z)


def _solve_batched(G: np.ndarray, rhs: np.ndarray, what: str, offset: int):
    try:
        return np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError:
        # locate the offending step for the error message
        for k in range(G.shape[0]):
            try:
                np.linalg.solve(G[k], rhs[k])
            except np.linalg.LinAlgError:
                raise SolverError(f"{what} singular at step {offset + k}") from None
        raise SolverError(f"{what} singular") from None


def _spd_solve_batched(U: np.ndarray, rhs: np.ndarray, what: str, offset: int):
    """Solve with a Cholesky factor per step; rejects non-PD weights."""
    try:
        R = np.linalg.cholesky(U)
    except np.linalg.LinAlgError:
        bad = offset
        for k in range(U.shape[0]):
            try:
                np.linalg.cholesky(U[k])
            except np.linalg.LinAlgError:
                bad = offset + k
                break
        raise SolverError(
            f"{what} factorization failed at step {bad} (not positive definite)"
        ) from None
    return np.linalg.solve(_t(R), np.linalg.solve(R, rhs))


def _element_arrays(p: LqtProblem):
    """Stacked (A, b, C, eta, J) for all N + 1 elements.

    Stage k: (F_k, c_k, L_k U_k^-1 L_k', H_k'X_k r_k, H_k'X_k H_k).
    Terminal: (0, 0, 0, HT'XT rT, HT'XT HT). The terminal eta carries the
    XT factor; see the regression test on the printed variant.
    """
    if p.has_general_cost:
        raise ValueError("eliminate cross terms first (transform_general_cost)")
    nx = p.n_x
    n = p.N
    A = np.zeros((n + 1, nx, nx))
    b = np.zeros((n + 1, nx))
    C = np.zeros((n + 1, nx, nx))
    eta = np.zeros((n + 1, nx))
    J = np.zeros((n + 1, nx, nx))
    if n:
        A[:n] = p.F
        b[:n] = p.c
        UinvLt = _spd_solve_batched(p.U, _t(p.L), "control weight U", p.S)
        C[:n] = _sym(p.L @ UinvLt)
        HtX = _t(p.H) @ p.X
        eta[:n] = _mv(HtX, p.r)
        J[:n] = _sym(HtX @ p.H)
    HtXT = p.HT.T @ p.XT
    eta[n] = HtXT @ p.rT
    J[n] = _sym(HtXT @ p.HT)
    return A, b, C, eta, J


def make_lqt_elements(p: LqtProblem) -> list[LqtElement]:
    A, b, C, eta, J = _element_arrays(p)
    return [LqtElement(A[k], b[k], C[k], eta[k], J[k]) for k in range(p.N + 1)]


def riccati_backward(p: LqtProblem) -> tuple[list[QuadValue], list[Gains]]:
    """Sequential backward recursion for (S_k, v_k) and the gain triples."""
    if p.has_general_cost:
        raise ValueError("eliminate cross terms first (transform_general_cost)")
    nx, nu, n = p.n_x, p.n_u, p.N
    Ss = np.empty((n + 1, nx, nx))
    vs = np.empty((n + 1, nx))
    HtXT = p.HT.T @ p.XT
    Ss[n] = _sym(HtXT @ p.HT)
    vs[n] = HtXT @ p.rT
    Ks = np.empty((n, nu, nx))
    Kvs = np.empty((n, nu, nx))
    Kcs = np.empty((n, nu, nx))
    for k in range(n - 1, -1, -1):
        Fk, Lk, Uk = p.F[k], p.L[k], p.U[k]
        Sn = Ss[k + 1]
        LS = Lk.T @ Sn
        G = LS @ Lk + Uk
        try:
            sol = np.linalg.solve(G, np.concatenate([LS @ Fk, Lk.T, LS], axis=1))
        except np.linalg.LinAlgError:
            raise SolverError(f"control normal matrix singular at step {p.S + k}") from None
        Ks[k] = sol[:, :nx]
        Kvs[k] = sol[:, nx : 2 * nx]
        Kcs[k] = sol[:, 2 * nx :]
        Fcl = Fk - Lk @ Ks[k]
        HtX = p.H[k].T @ p.X[k]
        vs[k] = Fcl.T @ (vs[k + 1] - Sn @ p.c[k]) + HtX @ p.r[k]
        Ss[k] = _sym(Fk.T @ Sn @ Fcl + HtX @ p.H[k])
    values = [QuadValue(Ss[k], vs[k]) for k in range(n + 1)]
    gains = [Gains(Ks[k], Kvs[k], Kcs[k]) for k in range(n)]
    return values, gains


def _gains_from_values(p: LqtProblem, Ss: np.ndarray):
    """Vectorized gain triples from the stacked S_{k+1} matrices."""
    nx = p.n_x
    if p.N == 0:
        empty = np.zeros((0, p.n_u, nx))
        return empty, empty.copy(), empty.copy()
    Sn = Ss[1:]
    Lt = _t(p.L)
    LS = Lt @ Sn
    G = LS @ p.L + p.U
    rhs = np.concatenate([LS @ p.F, Lt, LS], axis=-1)
    sol = _solve_batched(G, rhs, "control normal matrix", p.S)
    return sol[..., :nx], sol[..., nx : 2 * nx], sol[..., 2 * nx :]


def parallel_backward(
    p: LqtProblem,
    engine: str = "stacked",
    workers: int = 1,
    return_stats: bool = False,
):
    """Backward pass as a reverse scan of interval elements.

    The suffix element starting at k evaluated at a pinned terminal endpoint
    is the value function: S_k = J, v_k = eta of that suffix. Output matches
    :func:`riccati_backward`.
    """
    if engine == "stacked":
        suffix, stats = par_scan_stacked(
            _element_arrays(p),
            _combine_element_arrays,
            _identity_arrays(p.n_x),
            ScanDirection.REVERSE,
        )
        Ss, vs = _sym(suffix[4]), suffix[3]
    elif engine == "object":
        out, stats = par_scan(
            make_lqt_elements(p),
            combine_lqt,
            lqt_identity(p.n_x),
            ScanDirection.REVERSE,
            workers=workers,
        )
        Ss = np.stack([e.J for e in out])
        vs = np.stack([e.eta for e in out])
    else:
        raise ValueError(f"unknown engine {engine!r}")
    Ks, Kvs, Kcs = _gains_from_values(p, Ss)
    values = [QuadValue(Ss[k], vs[k]) for k in range(p.N + 1)]
    gains = [Gains(Ks[k], Kvs[k], Kcs[k]) for k in range(p.N)]
    if return_stats:
        return values, gains, stats
    return values, gains


def control(x: np.ndarray, k: int, gains: Sequence[Gains], v_next: np.ndarray, c_k: np.ndarray) -> np.ndarray:
    """u_k = -K_k x + K_k^v v_{k+1} - K_k^c c_k (k relative to S)."""
    g = gains[k]
    return -g.K @ x + g.Kv @ v_next - g.Kc @ c_k


def closed_loop_rollout(
    p: LqtProblem, values: Sequence[QuadValue], gains: Sequence[Gains]
) -> tuple[np.ndarray, np.ndarray]:
    """Sequential forward rollout of the optimal control law."""
    xs = np.empty((p.N + 1, p.n_x))
    us = np.empty((p.N, p.n_u))
    xs[0] = p.x0
    for k in range(p.N):
        us[k] = control(xs[k], k, gains, values[k + 1].v, p.c[k])
        xs[k + 1] = p.F[k] @ xs[k] + p.c[k] + p.L[k] @ us[k]
    return xs, us


def controls_along(
    p: LqtProblem, values: Sequence[QuadValue], gains: Sequence[Gains], xs: np.ndarray
) -> np.ndarray:
    """Control sequence along a given state trajectory, vectorized over k."""
    if p.N == 0:
        return np.zeros((0, p.n_u))
    K = np.stack([g.K for g in gains])
    Kv = np.stack([g.Kv for g in gains])
    Kc = np.stack([g.Kc for g in gains])
    v = np.stack([val.v for val in values])
    return -_mv(K, xs[:-1]) + _mv(Kv, v[1:]) - _mv(Kc, p.c)


def _closed_loop_maps(p: LqtProblem, values, gains):
    K = np.stack([g.K for g in gains])
    Kv = np.stack([g.Kv for g in gains])
    Kc = np.stack([g.Kc for g in gains])
    v = np.stack([val.v for val in values])
    Ft = p.F - p.L @ K
    ct = p.c + _mv(p.L @ Kv, v[1:]) - _mv(p.L @ Kc, p.c)
    return Ft, ct


def traj_method1(
    p: LqtProblem,
    gains: Sequence[Gains],
    values: Sequence[QuadValue],
    engine: str = "stacked",
    workers: int = 1,
) -> np.ndarray:
    """Trajectory by scanning closed-loop affine maps (Method 1).

    The first element is pinned at the initial state (zero matrix part), so
    every prefix's offset part is the trajectory state itself.
    """
    if p.N == 0:
        return p.x0[None, :].copy()
    Ft, ct = _closed_loop_maps(p, values, gains)
    Ft = Ft.copy()
    ct = ct.copy()
    ct[0] = Ft[0] @ p.x0 + ct[0]
    Ft[0] = 0.0
    if engine == "stacked":
        (_, cpre), _ = par_scan_stacked(
            (Ft, ct),
            _compose_affine_arrays,
            (np.eye(p.n_x), np.zeros(p.n_x)),
            ScanDirection.FORWARD,
        )
        tail = cpre
    elif engine == "object":
        maps = [AffineMap(Ft[k], ct[k]) for k in range(p.N)]
        prefix, _ = par_scan(
            maps, compose_affine, affine_identity(p.n_x), ScanDirection.FORWARD, workers=workers
        )
        tail = np.stack([m.ct for m in prefix])
    else:
        raise ValueError(f"unknown engine {engine!r}")
    return np.concatenate([p.x0[None, :], tail], axis=0)


def traj_method2(
    p: LqtProblem,
    values: Sequence[QuadValue],
    engine: str = "stacked",
    workers: int = 1,
) -> np.ndarray:
    """Trajectory from forward prefix elements and backward values (Method 2).

    x_k = (I + C_{S,k} S_k)^-1 (A_{S,k} x0 + b_{S,k} + C_{S,k} v_k) with the
    forward scan seeded by the pinned-start element (A=0, b=x0, C=0).
    """
    nx = p.n_x
    A, b, C, eta, J = _element_arrays(p)
    A = np.concatenate([np.zeros((1, nx, nx)), A[: p.N]])
    b = np.concatenate([p.x0[None, :], b[: p.N]])
    C = np.concatenate([np.zeros((1, nx, nx)), C[: p.N]])
    eta = np.concatenate([np.zeros((1, nx)), eta[: p.N]])
    J = np.concatenate([np.zeros((1, nx, nx)), J[: p.N]])
    if engine == "stacked":
        prefix, _ = par_scan_stacked(
            (A, b, C, eta, J),
            _combine_element_arrays,
            _identity_arrays(nx),
            ScanDirection.FORWARD,
        )
        Ap, bp, Cp = prefix[0], prefix[1], prefix[2]
    elif engine == "object":
        elems = [LqtElement(A[k], b[k], C[k], eta[k], J[k]) for k in range(p.N + 1)]
        out, _ = par_scan(
            elems, combine_lqt, lqt_identity(nx), ScanDirection.FORWARD, workers=workers
        )
        Ap = np.stack([e.A for e in out])
        bp = np.stack([e.b for e in out])
        Cp = np.stack([e.C for e in out])
    else:
        raise ValueError(f"unknown engine {engine!r}")
    Ss = np.stack([val.S for val in values])
    vs = np.stack([val.v for val in values])
    lhs = np.eye(nx) + Cp @ Ss
    rhs = _mv(Ap, p.x0) + bp + _mv(Cp, vs)
    try:
        return np.linalg.solve(lhs, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"singular (I + C S) in trajectory recovery: {exc}") from exc


@dataclass(frozen=True)
class GeneralCostRecovery:
    """Maps transformed-coordinate controls back to the original problem."""

    UinvMt: np.ndarray  # (N, n_u, n_r)
    H: np.ndarray
    r: np.ndarray
    s: np.ndarray

    def controls(self, xs: np.ndarray, u_tilde: np.ndarray) -> np.ndarray:
        if len(u_tilde) == 0:
            return np.asarray(u_tilde, dtype=np.float64).copy()
        resid = _mv(self.H, xs[:-1]) - self.r
        return u_tilde - _mv(self.UinvMt, resid) + self.s


def transform_general_cost(p: LqtProblem) -> tuple[LqtProblem, GeneralCostRecovery]:
    """Eliminate cross terms M and control references s by a Schur step.

    Returns an equivalent standard-form problem and the map recovering
    original-coordinate controls: u = u~ - U^-1 M' (H x - r) + s.
    """
    n, nu, nr = p.N, p.n_u, p.n_r
    if not p.has_general_cost:
        recovery = GeneralCostRecovery(
            UinvMt=np.zeros((n, nu, nr)), H=p.H, r=p.r, s=np.zeros((n, nu))
        )
        return p, recovery
    M = p.M if p.M is not None else np.zeros((n, nr, nu))
    s = p.s if p.s is not None else np.zeros((n, nu))
    UinvMt = _spd_solve_batched(p.U, _t(M), "control weight U", p.S)
    Xt = _sym(p.X - M @ UinvMt)
    if n:
        lo = float(np.linalg.eigvalsh(Xt).min())
        if lo < -1e-10:
            raise SolverError(
                f"cost not jointly convex after Schur complement (min eigenvalue {lo:.3e})"
            )
    F2 = p.F - p.L @ UinvMt @ p.H
    c2 = p.c + _mv(p.L @ UinvMt, p.r) + _mv(p.L, s)
    q = replace(p, F=F2, c=c2, X=Xt, M=None, s=None)
    return q, GeneralCostRecovery(UinvMt=UinvMt, H=p.H, r=p.r, s=s)


@dataclass(frozen=True)
class CondensingRecovery:
    """Reconstructs intermediate states/controls inside condensed blocks.

    Phi, Gam, d hold, per block g and in-block offset m, the unrolled maps
    x_{gB+m} = Phi[g, m] x_head + Gam[g, m] u_block + d[g, m].
    """

    B: int
    n_u: int
    Phi: np.ndarray  # (nB, B, n_x, n_x)
    Gam: np.ndarray  # (nB, B, n_x, B*n_u)
    d: np.ndarray  # (nB, B, n_x)

    def reconstruct(self, xs_cond: np.ndarray, us_cond: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        nB, B = self.Phi.shape[0], self.B
        n_x = xs_cond.shape[1]
        xs = np.empty((nB * B + 1, n_x))
        us = np.empty((nB * B, self.n_u))
        for g in range(nB):
            head = xs_cond[g]
            ub = us_cond[g]
            for m in range(B):
                xs[g * B + m] = self.Phi[g, m] @ head + self.Gam[g, m] @ ub + self.d[g, m]
            us[g * B : (g + 1) * B] = ub.reshape(B, self.n_u)
        xs[-1] = xs_cond[-1]
        return xs, us


def condense(p: LqtProblem, B: int) -> tuple[LqtProblem, CondensingRecovery]:
    """Block-eliminate intermediate states, B steps per block.

    The condensed problem has the same state dimension, input dimension
    B*n_u, and horizon (T-S)/B. Stage costs accumulated inside a block
    generally couple the head state with the stacked controls, so the
    output is in general-cost form (run transform_general_cost before
    solving).
    """
    if p.has_general_cost:
        raise ValueError("condense expects a standard-form problem")
    if B < 1:
        raise ValueError("block size must be >= 1")
    if p.N % B:
        raise ValueError(f"horizon {p.N} not divisible by block size {B} (pad with zero-cost steps)")
    nx, nu = p.n_x, p.n_u
    nB = p.N // B
    nuB = B * nu

    Fb = np.empty((nB, nx, nx))
    cb = np.empty((nB, nx))
    Lb = np.empty((nB, nx, nuB))
    Xb = np.empty((nB, nx, nx))
    rb = np.empty((nB, nx))
    Ub = np.empty((nB, nuB, nuB))
    Mb = np.empty((nB, nx, nuB))
    sb = np.empty((nB, nuB))
    Phi_all = np.empty((nB, B, nx, nx))
    Gam_all = np.empty((nB, B, nx, nuB))
    d_all = np.empty((nB, B, nx))

    for g in range(nB):
        h = g * B
        Phi = np.eye(nx)
        Gam = np.zeros((nx, nuB))
        d = np.zeros(nx)
        Qxx = np.zeros((nx, nx))
        Qxu = np.zeros((nx, nuB))
        Quu = np.zeros((nuB, nuB))
        qx = np.zeros(nx)
        qu = np.zeros(nuB)
        for m in range(B):
            k = h + m
            Phi_all[g, m] = Phi
            Gam_all[g, m] = Gam
            d_all[g, m] = d
            Hx = p.H[k] @ Phi
            Hu = p.H[k] @ Gam
            off = p.H[k] @ d - p.r[k]
            XHx = p.X[k] @ Hx
            XHu = p.X[k] @ Hu
            Qxx += Hx.T @ XHx
            Qxu += Hx.T @ XHu
            Quu += Hu.T @ XHu
            qx += XHx.T @ off
            qu += XHu.T @ off
            sl = slice(m * nu, (m + 1) * nu)
            Quu[sl, sl] += p.U[k]
            # unroll dynamics one step
            d = p.F[k] @ d + p.c[k]
            Gam = p.F[k] @ Gam
            Gam[:, sl] = p.L[k]
            Phi = p.F[k] @ Phi
        Fb[g], cb[g], Lb[g] = Phi, d, Gam
        Xb[g] = _sym(Qxx)
        Ub[g] = _sym(Quu)
        Mb[g] = Qxu
        # fit references so the linear terms match: Q [r; s] = -q
        Q = np.block([[Qxx, Qxu], [Qxu.T, Quu]])
        tvec = np.linalg.lstsq(Q, -np.concatenate([qx, qu]), rcond=None)[0]
        rb[g] = tvec[:nx]
        sb[g] = tvec[nx:]

    eyeH = np.broadcast_to(np.eye(nx), (nB, nx, nx)).copy()
    cond_p = LqtProblem(
        S=0,
        T=nB,
        x0=p.x0,
        F=Fb,
        c=cb,
        L=Lb,
        H=eyeH,
        X=Xb,
        r=rb,
        U=Ub,
        HT=p.HT,
        XT=p.XT,
        rT=p.rT,
        M=Mb,
        s=sb,
    )
    recovery = CondensingRecovery(B=B, n_u=nu, Phi=Phi_all, Gam=Gam_all, d=d_all)
    return cond_p, recovery


def solve_condensed(
    p: LqtProblem, B: int, backend: str = "parallel"
) -> tuple[np.ndarray, np.ndarray]:
    """Condense, solve, and reconstruct the full trajectory and controls."""
    cond_p, block_rec = condense(p, B)
    std, cost_rec = transform_general_cost(cond_p)
    if backend == "parallel":
        values, gains = parallel_backward(std)
    elif backend == "sequential":
        values, gains = riccati_backward(std)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    xs_c, ut = closed_loop_rollout(std, values, gains)
    us_c = cost_rec.controls(xs_c, ut)
    return block_rec.reconstruct(xs_c, us_c)


def lqt_cost(p: LqtProblem, xs: np.ndarray, us: np.ndarray) -> float:
    """Objective value of a state/control sequence (constants included)."""
    cost = 0.0
    for k in range(p.N):
        e = p.H[k] @ xs[k] - p.r[k]
        cost += 0.5 * e @ (p.X[k] @ e)
        u = us[k] - (p.s[k] if p.s is not None else 0.0)
        cost += 0.5 * u @ (p.U[k] @ u)
        if p.M is not None:
            cost += e @ (p.M[k] @ u)
    eT = p.HT @ xs[p.N] - p.rT
    return float(cost + 0.5 * eT @ (p.XT @ eT))


def value_at(val: QuadValue, x: np.ndarray) -> float:
    """0.5 x'Sx - v'x; meaningful only in differences (constant dropped)."""
    return float(0.5 * x @ (val.S @ x) - val.v @ x)


def kkt_oracle(p: LqtProblem):
    """Global optimum by one dense symmetric-indefinite KKT factorization.

    Handles the general cost form (cross terms M, references s) natively.
    Returns (cost, controls, states).
    """
    n, nx, nu, nr = p.N, p.n_x, p.n_u, p.n_r
    if n * (nx + nu) > 5000:
        raise ValueError("problem too large for the dense KKT oracle")
    if n == 0:
        eT = p.HT @ p.x0 - p.rT
        return float(0.5 * eT @ (p.XT @ eT)), np.zeros((0, nu)), p.x0[None, :].copy()

    M = p.M if p.M is not None else np.zeros((n, nr, nu))
    s = p.s if p.s is not None else np.zeros((n, nu))
    nw = n * (nu + nx)
    P = np.zeros((nw, nw))
    q = np.zeros(nw)
    const = 0.0

    def u_sl(k):
        off = k * (nu + nx)
        return slice(off, off + nu)

    def x_sl(k):  # state x_k, valid for k >= 1
        off = (k - 1) * (nu + nx) + nu
        return slice(off, off + nx)

    for k in range(n):
        Hk, Xk, rk, Uk, Mk, sk = p.H[k], p.X[k], p.r[k], p.U[k], M[k], s[k]
        iu = u_sl(k)
        P[iu, iu] += Uk
        q[iu] += -Mk.T @ rk - Uk @ sk
        const += 0.5 * rk @ (Xk @ rk) + rk @ (Mk @ sk) + 0.5 * sk @ (Uk @ sk)
        if k == 0:
            e0 = Hk @ p.x0
            q[iu] += Mk.T @ e0
            const += 0.5 * e0 @ (Xk @ e0) - e0 @ (Xk @ rk) - e0 @ (Mk @ sk)
        else:
            ix = x_sl(k)
            HtX = Hk.T @ Xk
            P[ix, ix] += HtX @ Hk
            HtM = Hk.T @ Mk
            P[ix, iu] += HtM
            P[iu, ix] += HtM.T
            q[ix] += -HtX @ rk - HtM @ sk
    ixT = x_sl(n)
    HtXT = p.HT.T @ p.XT
    P[ixT, ixT] += HtXT @ p.HT
    q[ixT] += -HtXT @ p.rT
    const += 0.5 * p.rT @ (p.XT @ p.rT)

    ncon = n * nx
    Acon = np.zeros((ncon, nw))
    bcon = np.zeros(ncon)
    for k in range(n):
        rows = slice(k * nx, (k + 1) * nx)
        Acon[rows, x_sl(k + 1)] = np.eye(nx)
        Acon[rows, u_sl(k)] = -p.L[k]
        bcon[k * nx : (k + 1) * nx] = p.c[k]
        if k == 0:
            bcon[:nx] += p.F[0] @ p.x0
        else:
            Acon[rows, x_sl(k)] = -p.F[k]

    kkt = np.zeros((nw + ncon, nw + ncon))
    kkt[:nw, :nw] = P
    kkt[:nw, nw:] = Acon.T
    kkt[nw:, :nw] = Acon
    rhs = np.concatenate([-q, bcon])
    try:
        sol = scipy.linalg.solve(kkt, rhs, assume_a="sym")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise SolverError(f"KKT matrix singular: {exc}") from exc
    w = sol[:nw]
    cost = float(0.5 * w @ (P @ w) + q @ w + const)
    blocks = w.reshape(n, nu + nx)
    us = blocks[:, :nu].copy()
    xs = np.concatenate([p.x0[None, :], blocks[:, nu:]], axis=0)
    return cost, us, xs


# --- file interchange ---


def problem_to_dict(p: LqtProblem) -> dict:
    d = {
        "S": p.S,
        "T": p.T,
        "n_x": p.n_x,
        "n_u": p.n_u,
        "n_r": p.n_r,
        "x_S": p.x0.tolist(),
        "F": p.F.tolist(),
        "c": p.c.tolist(),
        "L": p.L.tolist(),
        "H": p.H.tolist(),
        "X": p.X.tolist(),
        "r": p.r.tolist(),
        "U": p.U.tolist(),
        "H_T": p.HT.tolist(),
        "X_T": p.XT.tolist(),
        "r_T": p.rT.tolist(),
    }
    if p.M is not None:
        d["M"] = p.M.tolist()
    if p.s is not None:
        d["s"] = p.s.tolist()
    return d


def problem_from_dict(d: dict) -> LqtProblem:
    return LqtProblem(
        S=int(d["S"]),
        T=int(d["T"]),
        x0=np.asarray(d["x_S"], dtype=np.float64),
        F=np.asarray(d["F"], dtype=np.float64),
        c=np.asarray(d["c"], dtype=np.float64),
        L=np.asarray(d["L"], dtype=np.float64),
        H=np.asarray(d["H"], dtype=np.float64),
        X=np.asarray(d["X"], dtype=np.float64),
        r=np.asarray(d["r"], dtype=np.float64),
        U=np.asarray(d["U"], dtype=np.float64),
        HT=np.asarray(d["H_T"], dtype=np.float64),
        XT=np.asarray(d["X_T"], dtype=np.float64),
        rT=np.asarray(d["r_T"], dtype=np.float64),
        M=np.asarray(d["M"], dtype=np.float64) if "M" in d else None,
        s=np.asarray(d["s"], dtype=np.float64) if "s" in d else None,
    )


def save_problem(p: LqtProblem, path) -> None:
    with open(path, "w") as fh:
        json.dump(problem_to_dict(p), fh)


def load_problem(path) -> LqtProblem:
    with open(path) as fh:
        return problem_from_dict(json.load(fh))


def write_trajectory_csv(path, xs: np.ndarray, us: np.ndarray | None = None, S: int = 0) -> None:
    """CSV with header k, x_1..x_nx, u_1..u_nu; terminal controls left blank.

    1-d sequences (finite-state trajectories) are treated as single columns.
    """
    xs = np.asarray(xs)
    if xs.ndim == 1:
        xs = xs[:, None]
    if us is not None:
        us = np.asarray(us)
        if us.ndim == 1:
            us = us[:, None]
    n_x = xs.shape[1]
    n_u = 0 if us is None or len(us) == 0 else us.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k"] + [f"x_{i + 1}" for i in range(n_x)] + [f"u_{i + 1}" for i in range(n_u)])
        for k in range(xs.shape[0]):
            row = [S + k] + [repr(float(v)) for v in xs[k]]
            if n_u:
                if us is not None and k < len(us):
                    row += [repr(float(v)) for v in us[k]]
                else:
                    row += [""] * n_u
            w.writerow(row)
