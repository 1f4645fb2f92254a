"""Exact dynamic programming on finite state/control spaces.

Stage dynamics and costs are dense tables; conditional value functions
between two time steps are D_x x D_x extended-real matrices whose
combination is a min-plus matrix product, which is associative and lets the
whole backward pass run as a scan.

Two arithmetic modes share all code paths:

* float64 with IEEE +inf marking "no path";
* int64 with the saturating sentinel ``INT_INF`` (costs must be
  nonnegative integers), for bit-exact oracle comparisons.

States and controls are 0-based in memory. The JSON interchange format is
1-based (see :func:`problem_to_dict` / :func:`problem_from_dict`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import SolverError
from .scan import ScanDirection, par_scan, par_scan_stacked

__all__ = [
    "INT_INF",
    "FiniteProblem",
    "CondValueMatrix",
    "FinitePolicy",
    "StateMap",
    "build_elements",
    "combine_min_plus",
    "min_plus_identity",
    "solve_backward",
    "seq_bellman",
    "forward_conditional",
    "recover_traj_m1",
    "recover_traj_m2",
    "brute_force_oracle",
    "rollout_policy",
    "trajectory_cost",
    "problem_to_dict",
    "problem_from_dict",
    "save_problem",
    "load_problem",
]

# Saturating infinity for the exact integer mode. Small enough that
# INT_INF + INT_INF fits in int64 with room to spare.
INT_INF = np.int64(1) << 31

_BRUTE_FORCE_BUDGET = 10**7


def _is_int(dtype) -> bool:
    return np.issubdtype(dtype, np.integer)


def _inf_for(dtype):
    return INT_INF if _is_int(dtype) else np.inf


@dataclass(frozen=True)
class FiniteProblem:
    """Tabulated control problem over steps S..T.

    f: (T-S, D_x, D_u) next-state indices.
    ell: (T-S, D_x, D_u) stage costs, +inf (or INT_INF) for forbidden moves.
    ell_T: (D_x,) terminal costs, finite for at least one state.
    """

    D_x: int
    D_u: int
    S: int
    T: int
    f: np.ndarray
    ell: np.ndarray
    ell_T: np.ndarray
    x_S: int

    def __post_init__(self):
        n = self.T - self.S
        if n < 0:
            raise ValueError("need T >= S")
        object.__setattr__(self, "f", np.asarray(self.f, dtype=np.int64).reshape(n, self.D_x, self.D_u))
        ell = np.asarray(self.ell)
        if not _is_int(ell.dtype):
            ell = ell.astype(np.float64)
        object.__setattr__(self, "ell", ell.reshape(n, self.D_x, self.D_u))
        object.__setattr__(self, "ell_T", np.asarray(self.ell_T, dtype=ell.dtype).reshape(self.D_x))
        if n > 0 and (self.f.min() < 0 or self.f.max() >= self.D_x):
            raise ValueError("next-state table entries out of range")
        if not (0 <= self.x_S < self.D_x):
            raise ValueError("initial state out of range")
        inf = _inf_for(ell.dtype)
        if _is_int(ell.dtype):
            if (self.ell.size and self.ell.min() < 0) or self.ell_T.min() < 0:
                raise ValueError("integer mode requires nonnegative costs")
        if not (self.ell_T < inf).any():
            raise ValueError("terminal cost must be finite for at least one state")

    @property
    def N(self) -> int:
        return self.T - self.S


@dataclass(frozen=True)
class CondValueMatrix:
    """V[x, x'] = optimal cost from x at the interval start to x' at its end."""

    V: np.ndarray


@dataclass(frozen=True)
class FinitePolicy:
    """u: (T-S, D_x) control table; V: (T-S+1, D_x) value vectors."""

    u: np.ndarray
    V: np.ndarray


@dataclass(frozen=True)
class StateMap:
    """A next-state map x -> m[x], or a constant map when pinned."""

    m: np.ndarray | None = None
    pinned: int | None = None


def state_map_identity(D_x: int) -> StateMap:
    return StateMap(m=np.arange(D_x))


def compose_state_maps(a: StateMap, b: StateMap) -> StateMap:
    """a (x) b = f_b o f_a (composition order reverted)."""
    if b.pinned is not None:
        return b
    if a.pinned is not None:
        return StateMap(pinned=int(b.m[a.pinned]))
    return StateMap(m=b.m[a.m])


def min_plus_matmul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """out[.., x, y] = min_z A[.., x, z] + B[.., z, y], inf absorbing."""
    s = A[..., :, :, None] + B[..., None, :, :]
    if _is_int(A.dtype):
        s = np.minimum(s, INT_INF)
    return s.min(axis=-2)


def min_plus_identity(D_x: int, dtype=np.float64) -> CondValueMatrix:
    V = np.full((D_x, D_x), _inf_for(np.dtype(dtype)), dtype=dtype)
    np.fill_diagonal(V, 0)
    return CondValueMatrix(V)


def combine_min_plus(a: CondValueMatrix, b: CondValueMatrix) -> CondValueMatrix:
    if a.V.shape != b.V.shape:
        raise ValueError(f"dimension mismatch: {a.V.shape} vs {b.V.shape}")
    return CondValueMatrix(min_plus_matmul(a.V, b.V))


def build_elements(p: FiniteProblem) -> list[CondValueMatrix]:
    """Per-step conditional value matrices, terminal convention included.

    Element k < T: V[x, x'] = min over {u : f_k(x, u) = x'} of ell_k(x, u),
    +inf when no control reaches x'. Element T broadcasts ell_T over the
    second argument.
    """
    inf = _inf_for(p.ell.dtype)
    out = []
    for k in range(p.N):
        V = np.full((p.D_x, p.D_x), inf, dtype=p.ell.dtype)
        for x in range(p.D_x):
            np.minimum.at(V[x], p.f[k, x], p.ell[k, x])
        out.append(CondValueMatrix(V))
    term = np.repeat(p.ell_T[:, None], p.D_x, axis=1)
    out.append(CondValueMatrix(term))
    return out


def _policy_from_values(p: FiniteProblem, V: np.ndarray) -> np.ndarray:
    """Greedy control table from value vectors; ties -> smallest index."""
    u = np.zeros((p.N, p.D_x), dtype=np.int64)
    for k in range(p.N):
        Q = p.ell[k] + V[k + 1][p.f[k]]
        if _is_int(p.ell.dtype):
            Q = np.minimum(Q, INT_INF)
        u[k] = np.argmin(Q, axis=1)
    return u


def seq_bellman(p: FiniteProblem) -> FinitePolicy:
    """Classic backward value recursion; reference oracle for the scans."""
    V = np.empty((p.N + 1, p.D_x), dtype=p.ell.dtype)
    V[p.N] = p.ell_T
    for k in range(p.N - 1, -1, -1):
        Q = p.ell[k] + V[k + 1][p.f[k]]
        if _is_int(p.ell.dtype):
            Q = np.minimum(Q, INT_INF)
        V[k] = Q.min(axis=1)
    if not V[0, p.x_S] < _inf_for(p.ell.dtype):
        raise SolverError("infeasible problem")
    return FinitePolicy(u=_policy_from_values(p, V), V=V)


def solve_backward(
    p: FiniteProblem,
    engine: str = "stacked",
    workers: int = 1,
    return_stats: bool = False,
):
    """Backward pass as a reverse parallel scan of min-plus matrices.

    The suffix element starting at k has identical columns equal to the
    value vector V_k; column 0 is read out. Matches :func:`seq_bellman`
    exactly (min-plus arithmetic involves no reordering-sensitive rounding
    for integer-valued costs).
    """
    elements = build_elements(p)
    if engine == "stacked":
        stack = (np.stack([e.V for e in elements]),)
        (suffix,), stats = par_scan_stacked(
            stack,
            lambda a, b: (min_plus_matmul(a[0], b[0]),),
            (min_plus_identity(p.D_x, p.ell.dtype).V,),
            ScanDirection.REVERSE,
        )
        V = suffix[:, :, 0]
    elif engine == "object":
        out, stats = par_scan(
            elements,
            combine_min_plus,
            min_plus_identity(p.D_x, p.ell.dtype),
            ScanDirection.REVERSE,
            workers=workers,
        )
        V = np.stack([m.V[:, 0] for m in out])
    else:
        raise ValueError(f"unknown engine {engine!r}")
    if not V[0, p.x_S] < _inf_for(p.ell.dtype):
        raise SolverError("infeasible problem")
    pol = FinitePolicy(u=_policy_from_values(p, V), V=V)
    return (pol, stats) if return_stats else pol


def forward_conditional(p: FiniteProblem, workers: int = 1) -> list[np.ndarray]:
    """V_{S->k}(x_S, .) for k = S+1..T via a forward scan.

    An extra leading element pins the start state (0 at column x_S, +inf
    elsewhere); row x_S of each prefix is the conditional value vector.
    """
    inf = _inf_for(p.ell.dtype)
    pre = np.full((p.D_x, p.D_x), inf, dtype=p.ell.dtype)
    pre[:, p.x_S] = 0
    elements = [CondValueMatrix(pre)] + build_elements(p)[: p.N]
    prefix, _ = par_scan(
        elements,
        combine_min_plus,
        min_plus_identity(p.D_x, p.ell.dtype),
        ScanDirection.FORWARD,
        workers=workers,
    )
    return [prefix[i].V[p.x_S].copy() for i in range(1, p.N + 1)]


def recover_traj_m1(p: FiniteProblem, pol: FinitePolicy, workers: int = 1) -> np.ndarray:
    """Trajectory via composition of closed-loop state maps (Method 1)."""
    inf = _inf_for(p.ell.dtype)
    if not pol.V[0, p.x_S] < inf:
        raise SolverError("policy undefined on reached state")
    if p.N == 0:
        return np.array([p.x_S], dtype=np.int64)
    xs = np.arange(p.D_x)
    maps = [StateMap(m=p.f[k][xs, pol.u[k]]) for k in range(p.N)]
    maps[0] = StateMap(pinned=int(maps[0].m[p.x_S]))
    prefix, _ = par_scan(
        maps,
        compose_state_maps,
        state_map_identity(p.D_x),
        ScanDirection.FORWARD,
        workers=workers,
    )
    traj = np.array([p.x_S] + [m.pinned for m in prefix], dtype=np.int64)
    for k, x in enumerate(traj):
        if not pol.V[k, x] < inf:
            raise SolverError("policy undefined on reached state")
    return traj


def recover_traj_m2(
    p: FiniteProblem, fw: Sequence[np.ndarray], pol: FinitePolicy
) -> np.ndarray:
    """Trajectory by minimizing forward conditional + backward value sums."""
    inf = _inf_for(p.ell.dtype)
    traj = np.empty(p.N + 1, dtype=np.int64)
    traj[0] = p.x_S
    for i, k in enumerate(range(1, p.N + 1)):
        total = fw[i] + pol.V[k]
        if _is_int(p.ell.dtype):
            total = np.minimum(total, INT_INF)
        if not (total < inf).any():
            raise SolverError("infeasible")
        traj[k] = np.argmin(total)
    return traj


def rollout_policy(p: FiniteProblem, pol: FinitePolicy) -> tuple[np.ndarray, np.ndarray]:
    """Sequential closed-loop rollout; oracle for Method 1."""
    xs = np.empty(p.N + 1, dtype=np.int64)
    us = np.empty(p.N, dtype=np.int64)
    xs[0] = p.x_S
    for k in range(p.N):
        us[k] = pol.u[k, xs[k]]
        xs[k + 1] = p.f[k, xs[k], us[k]]
    return xs, us


def trajectory_cost(p: FiniteProblem, xs: np.ndarray, us: np.ndarray):
    """Accumulated cost of a control/state sequence, terminal included."""
    cost = p.ell_T[xs[p.N]]
    for k in range(p.N):
        cost = cost + p.ell[k, xs[k], us[k]]
        if _is_int(p.ell.dtype):
            cost = min(cost, INT_INF)
    return cost


def brute_force_oracle(p: FiniteProblem):
    """Exhaustive minimum over all D_u^(T-S) control sequences.

    Ties resolve to the lexicographically smallest control sequence.
    Returns (cost, controls, states).
    """
    n = p.N
    total = p.D_u**n
    if total > _BRUTE_FORCE_BUDGET:
        raise ValueError(f"brute-force budget exceeded: {total} sequences")
    inf = _inf_for(p.ell.dtype)
    if n == 0:
        return p.ell_T[p.x_S], np.empty(0, dtype=np.int64), np.array([p.x_S])

    best_cost = inf
    best_idx = -1
    chunk = 1 << 16
    weights = p.D_u ** np.arange(n - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        x = np.full(idx.shape, p.x_S, dtype=np.int64)
        cost = np.zeros(idx.shape, dtype=p.ell.dtype)
        for k in range(n):
            u = (idx // weights[k]) % p.D_u
            cost = cost + p.ell[k][x, u]
            if _is_int(p.ell.dtype):
                cost = np.minimum(cost, INT_INF)
            x = p.f[k][x, u]
        cost = cost + p.ell_T[x]
        if _is_int(p.ell.dtype):
            cost = np.minimum(cost, INT_INF)
        i = int(np.argmin(cost))
        if cost[i] < best_cost:
            best_cost = cost[i]
            best_idx = int(idx[i])
    if not best_cost < inf:
        raise SolverError("infeasible problem")

    us = (best_idx // weights) % p.D_u
    xs = np.empty(n + 1, dtype=np.int64)
    xs[0] = p.x_S
    for k in range(n):
        xs[k + 1] = p.f[k, xs[k], us[k]]
    return best_cost, us, xs


# --- JSON interchange (1-based indices on disk) ---


def _encode_costs(arr: np.ndarray):
    inf = _inf_for(arr.dtype)
    integral = _is_int(arr.dtype)

    def conv(v):
        if isinstance(v, list):
            return [conv(x) for x in v]
        if v >= inf:
            return "inf"
        return int(v) if integral else float(v)

    return conv(arr.tolist())


def _decode_costs(nested, dtype) -> np.ndarray:
    inf = _inf_for(np.dtype(dtype))

    def conv(v):
        if isinstance(v, list):
            return [conv(x) for x in v]
        if isinstance(v, str):
            if v.lower() in ("inf", "infinity", "+inf"):
                return inf
            raise ValueError(f"bad cost entry {v!r}")
        if isinstance(v, float) and np.isinf(v):
            return inf
        return v

    return np.asarray(conv(nested), dtype=dtype)


def problem_to_dict(p: FiniteProblem) -> dict:
    return {
        "D_x": p.D_x,
        "D_u": p.D_u,
        "S": p.S,
        "T": p.T,
        "f": (p.f + 1).tolist(),
        "ell": _encode_costs(p.ell),
        "ell_T": _encode_costs(p.ell_T),
        "x_S": p.x_S + 1,
    }


def problem_from_dict(d: dict, dtype=np.float64) -> FiniteProblem:
    return FiniteProblem(
        D_x=int(d["D_x"]),
        D_u=int(d["D_u"]),
        S=int(d["S"]),
        T=int(d["T"]),
        f=np.asarray(d["f"], dtype=np.int64) - 1,
        ell=_decode_costs(d["ell"], dtype),
        ell_T=_decode_costs(d["ell_T"], dtype),
        x_S=int(d["x_S"]) - 1,
    )


def save_problem(p: FiniteProblem, path) -> None:
    with open(path, "w") as fh:
        json.dump(problem_to_dict(p), fh)


def load_problem(path, dtype=np.float64) -> FiniteProblem:
    with open(path) as fh:
        return problem_from_dict(json.load(fh), dtype)
