"""Shared test fixtures: random problem generators and independent oracles.

The enumeration oracles here are deliberately written with plain Python
loops/itertools so they share no code path with the library's vectorized
implementations.
"""

import itertools

import numpy as np

from tempo_dp.finite_dp import FiniteProblem
from tempo_dp.lqt import LqtProblem


def random_finite_problem(rng, D_x=4, D_u=3, N=8, dtype=np.int64, inf_frac=0.0, cost_max=9):
    f = rng.integers(0, D_x, size=(N, D_x, D_u))
    ell = rng.integers(0, cost_max + 1, size=(N, D_x, D_u)).astype(dtype)
    ell_T = rng.integers(0, cost_max + 1, size=D_x).astype(dtype)
    if inf_frac > 0 and not np.issubdtype(np.dtype(dtype), np.integer):
        mask = rng.random(size=ell.shape) < inf_frac
        # keep at least one feasible control per state
        mask[..., 0] = False
        ell[mask] = np.inf
    return FiniteProblem(
        D_x=D_x, D_u=D_u, S=0, T=N, f=f, ell=ell, ell_T=ell_T,
        x_S=int(rng.integers(0, D_x)),
    )


def enumerate_all_sequences(p):
    """Yield (controls, states, cost) for every control sequence (itertools)."""
    for us in itertools.product(range(p.D_u), repeat=p.N):
        x = p.x_S
        cost = 0.0
        xs = [x]
        for k, u in enumerate(us):
            cost += float(p.ell[k, x, u])
            x = int(p.f[k, x, u])
            xs.append(x)
        cost += float(p.ell_T[x])
        yield us, xs, cost


def enumeration_oracle(p):
    """(best cost, best controls, best states, multiplicity of optima)."""
    best = None
    count = 0
    for us, xs, cost in enumerate_all_sequences(p):
        if best is None or cost < best[0] - 1e-12:
            best = (cost, us, xs)
            count = 1
        elif abs(cost - best[0]) <= 1e-12:
            count += 1
    return best[0], np.array(best[1]), np.array(best[2]), count


def enumerate_conditional(p, k):
    """V_{S->k}(x_S, .) by enumerating all control prefixes of length k."""
    inf = np.inf
    out = np.full(p.D_x, inf)
    for us in itertools.product(range(p.D_u), repeat=k):
        x = p.x_S
        cost = 0.0
        for step, u in enumerate(us):
            cost += float(p.ell[step, x, u])
            x = int(p.f[step, x, u])
        out[x] = min(out[x], cost)
    return out


def unique_optimal_trajectory(p):
    """All optimal trajectories coincide? (states, not just controls)."""
    best_cost, _, best_states, _ = enumeration_oracle(p)
    for us, xs, cost in enumerate_all_sequences(p):
        if abs(cost - best_cost) <= 1e-12 and list(xs) != list(best_states):
            return False
    return True


def make_psd(rng, n, scale=0.4, ridge=0.0):
    G = rng.normal(size=(n, n)) * scale
    return G @ G.T + ridge * np.eye(n)


def random_lqt_problem(rng, n_x=4, n_u=2, N=8, cross=False, n_r=None, s_ref=False):
    """Well-conditioned random tracking problem (stable-ish dynamics)."""
    n_r = n_x if n_r is None else n_r
    F = rng.normal(size=(N, n_x, n_x)) * (0.5 / np.sqrt(n_x)) + 0.4 * np.eye(n_x)
    L = rng.normal(size=(N, n_x, n_u)) * 0.7
    c = rng.normal(size=(N, n_x)) * 0.5
    H = rng.normal(size=(N, n_r, n_x)) * 0.4
    H[:, :, :n_r] += np.eye(n_r)
    X = np.stack([make_psd(rng, n_r, 0.4, 0.05) for _ in range(N)])
    r = rng.normal(size=(N, n_r))
    U = np.stack([make_psd(rng, n_u, 0.3, 1.0) for _ in range(N)])
    M = None
    s = None
    if cross:
        # keep X - M U^-1 M' comfortably PSD
        M = rng.normal(size=(N, n_r, n_u)) * 0.05
        s = rng.normal(size=(N, n_u)) * 0.5
        X = X + 0.5 * np.broadcast_to(np.eye(n_r), (N, n_r, n_r))
    elif s_ref:
        s = rng.normal(size=(N, n_u)) * 0.5
    return LqtProblem(
        S=0, T=N, x0=rng.normal(size=n_x),
        F=F, c=c, L=L, H=H, X=X, r=r, U=U,
        HT=np.eye(n_x) + 0.2 * rng.normal(size=(n_x, n_x)),
        XT=make_psd(rng, n_x, 0.4, 0.2),
        rT=rng.normal(size=n_x),
        M=M, s=s,
    )


def random_lqt_element(rng, n_x):
    """Element with PSD C, J drawn as G G'."""
    from tempo_dp.lqt import LqtElement

    return LqtElement(
        A=rng.normal(size=(n_x, n_x)) * 0.6,
        b=rng.normal(size=n_x),
        C=make_psd(rng, n_x, 0.5),
        eta=rng.normal(size=n_x),
        J=make_psd(rng, n_x, 0.5),
    )


def max_value_dev(values_a, values_b):
    """Norm-relative deviation between two backward-pass value lists."""
    dev = 0.0
    for a, b in zip(values_a, values_b):
        dev = max(dev, np.max(np.abs(a.S - b.S)) / max(1.0, np.max(np.abs(b.S))))
        dev = max(dev, np.max(np.abs(a.v - b.v)) / max(1.0, np.max(np.abs(b.v))))
    return dev
