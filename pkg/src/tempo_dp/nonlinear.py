"""Approximate nonlinear tracking control by iterated linearization.

Each iteration Taylor-expands the dynamics and output maps around a nominal
trajectory, solves the resulting tracking problem exactly (sequential or
parallel backend), and adopts the optimizer as the next nominal. No line
search or regularization; the per-iteration cost trace is returned so
divergence is visible rather than hidden.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import SolverError
from . import lqt

__all__ = [
    "NonlinearProblem",
    "Nominal",
    "finite_diff_jacobian",
    "linearize",
    "ilqt",
    "nonlinear_cost",
    "default_nominal",
]


@dataclass(frozen=True)
class NonlinearProblem:
    """Nonlinear dynamics/output tracking problem over N steps.

    f(k, x, u) -> next state; h(k, x) -> tracked output; g(k, u) -> control
    output (None means identity). jac_* are analytic Jacobian providers;
    those left None fall back to central finite differences.
    """

    n_x: int
    n_u: int
    n_r: int
    x0: np.ndarray
    f: Callable[[int, np.ndarray, np.ndarray], np.ndarray]
    h: Callable[[int, np.ndarray], np.ndarray]
    X: np.ndarray  # (N, n_r, n_r)
    U: np.ndarray  # (N, n_u, n_u)
    r: np.ndarray  # (N, n_r)
    s: np.ndarray  # (N, n_u)
    hT: Callable[[np.ndarray], np.ndarray]
    XT: np.ndarray
    rT: np.ndarray
    g: Callable[[int, np.ndarray], np.ndarray] | None = None
    jac_f_x: Callable | None = None
    jac_f_u: Callable | None = None
    jac_h: Callable | None = None
    jac_g: Callable | None = None
    jac_hT: Callable | None = None

    @property
    def N(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True)
class Nominal:
    """Linearization trajectory; need not be dynamically feasible."""

    xbar: np.ndarray  # (N+1, n_x)
    ubar: np.ndarray  # (N, n_u)


def default_nominal(p: NonlinearProblem, x_S: np.ndarray | None = None) -> Nominal:
    """Constant nominal: x held at the initial state, controls zero."""
    x = np.asarray(p.x0 if x_S is None else x_S, dtype=np.float64)
    return Nominal(
        xbar=np.repeat(x[None, :], p.N + 1, axis=0),
        ubar=np.zeros((p.N, p.n_u)),
    )


def finite_diff_jacobian(fn, point, step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian with per-coordinate step scaling."""
    point = np.asarray(point, dtype=np.float64)
    f0 = np.asarray(fn(point), dtype=np.float64)
    J = np.empty((f0.size, point.size))
    for i in range(point.size):
        hi = step * (1.0 + abs(point[i]))
        xp = point.copy()
        xm = point.copy()
        xp[i] += hi
        xm[i] -= hi
        J[:, i] = (np.asarray(fn(xp)) - np.asarray(fn(xm))) / (2 * hi)
    return J


def linearize(p: NonlinearProblem, nom: Nominal) -> lqt.LqtProblem:
    """First-order expansion around the nominal as a tracking problem.

    References are shifted so the linearized residuals match the Taylor
    expansion; a non-identity control output g needs a square invertible
    Jacobian (the control cost is rewritten in u directly).
    """
    N, nx, nu, nr = p.N, p.n_x, p.n_u, p.n_r
    F = np.empty((N, nx, nx))
    L = np.empty((N, nx, nu))
    c = np.empty((N, nx))
    H = np.empty((N, nr, nx))
    r2 = np.empty((N, nr))
    U2 = np.empty((N, nu, nu))
    s2 = np.empty((N, nu))
    for k in range(N):
        xb, ub = nom.xbar[k], nom.ubar[k]
        F[k] = p.jac_f_x(k, xb, ub) if p.jac_f_x else finite_diff_jacobian(
            lambda x: p.f(k, x, ub), xb
        )
        L[k] = p.jac_f_u(k, xb, ub) if p.jac_f_u else finite_diff_jacobian(
            lambda u: p.f(k, xb, u), ub
        )
        c[k] = p.f(k, xb, ub) - F[k] @ xb - L[k] @ ub
        H[k] = p.jac_h(k, xb) if p.jac_h else finite_diff_jacobian(lambda x: p.h(k, x), xb)
        r2[k] = p.r[k] - p.h(k, xb) + H[k] @ xb
        if p.g is None:
            U2[k] = p.U[k]
            s2[k] = p.s[k]
        else:
            Jg = p.jac_g(k, ub) if p.jac_g else finite_diff_jacobian(lambda u: p.g(k, u), ub)
            if Jg.shape[0] != Jg.shape[1]:
                raise SolverError("control-output Jacobian not invertible")
            U2[k] = Jg.T @ p.U[k] @ Jg
            try:
                s2[k] = ub + np.linalg.solve(Jg, p.s[k] - p.g(k, ub))
            except np.linalg.LinAlgError:
                raise SolverError("control-output Jacobian not invertible") from None
    xT = nom.xbar[N]
    HT = p.jac_hT(xT) if p.jac_hT else finite_diff_jacobian(p.hT, xT)
    rT2 = p.rT - p.hT(xT) + HT @ xT
    s_arr = None if not s2.any() else s2
    return lqt.LqtProblem(
        S=0, T=N, x0=p.x0, F=F, c=c, L=L, H=H, X=p.X.copy(), r=r2, U=U2,
        HT=HT, XT=p.XT.copy(), rT=rT2, M=None, s=s_arr,
    )


def nonlinear_cost(p: NonlinearProblem, xs: np.ndarray, us: np.ndarray) -> float:
    """Exact nonlinear objective of a state/control sequence."""
    cost = 0.0
    for k in range(p.N):
        e = p.h(k, xs[k]) - p.r[k]
        cost += 0.5 * e @ (p.X[k] @ e)
        gu = us[k] if p.g is None else p.g(k, us[k])
        w = gu - p.s[k]
        cost += 0.5 * w @ (p.U[k] @ w)
    eT = p.hT(xs[p.N]) - p.rT
    return float(cost + 0.5 * eT @ (p.XT @ eT))


def ilqt(
    p: NonlinearProblem,
    x_S: np.ndarray | None = None,
    init: Nominal | None = None,
    iters: int = 10,
    backend: str = "parallel",
    traj_method: int = 1,
    stop_tol: float | None = None,
):
    """Iterated linearization loop.

    Returns (states, controls, costs) where costs[i] is the exact nonlinear
    objective of iterate i+1. ``stop_tol`` optionally stops early once the
    max trajectory change drops below it; by default all ``iters``
    iterations run (no line search, no acceptance rule).
    """
    if iters < 1:
        raise ValueError("need iters >= 1")
    if backend not in ("sequential", "parallel"):
        raise ValueError(f"unknown backend {backend!r}")
    if x_S is not None:
        p = replace(p, x0=np.asarray(x_S, dtype=np.float64))
    nom = init if init is not None else default_nominal(p)
    costs = []
    for it in range(iters):
        try:
            lin = linearize(p, nom)
            std, recov = lqt.transform_general_cost(lin)
            if backend == "sequential":
                values, gains = lqt.riccati_backward(std)
                xs, ut = lqt.closed_loop_rollout(std, values, gains)
            else:
                values, gains = lqt.parallel_backward(std)
                if traj_method == 2:
                    xs = lqt.traj_method2(std, values)
                else:
                    xs = lqt.traj_method1(std, gains, values)
                ut = lqt.controls_along(std, values, gains, xs)
            us = recov.controls(xs, ut)
        except SolverError as exc:
            raise SolverError(f"iteration {it + 1}: {exc}") from exc
        costs.append(nonlinear_cost(p, xs, us))
        delta = max(
            float(np.max(np.abs(xs - nom.xbar))),
            float(np.max(np.abs(us - nom.ubar))) if p.N else 0.0,
        )
        nom = Nominal(xbar=xs, ubar=us)
        if stop_tol is not None and delta < stop_tol:
            break
    return nom.xbar, nom.ubar, costs
