"""Subproblem objectives and their proximal solvers.

Every solver returns

    argmin_x  phi(x) + lam . x + (rho / 2) ||x - xhat||^2

for one subproblem (``prox_*``) or for a stack of same-shaped subproblems
(``*_batch``, used by the engine).  With ``z = xhat - lam / rho`` this is the
proximal operator of ``phi / rho`` evaluated at ``z``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _slots(slots):
    s = np.asarray(slots, dtype=np.int64)
    s.setflags(write=False)
    return s


@dataclass(frozen=True, eq=False)
class QuadraticSpec:
    """phi(x) = 1/2 x'Qx + c'x with Q symmetric PSD."""

    slots: np.ndarray
    Q: np.ndarray
    c: np.ndarray
    kind: str = field(default="quad", init=False)

    def __post_init__(self):
        object.__setattr__(self, "slots", _slots(self.slots))
        n = len(self.slots)
        Q = np.atleast_2d(np.asarray(self.Q, dtype=np.float64))
        c = np.atleast_1d(np.asarray(self.c, dtype=np.float64))
        if Q.shape != (n, n) or c.shape != (n,):
            raise ValueError(f"quadratic term shapes {Q.shape}, {c.shape} do not match {n} slots")
        if not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Q).max(initial=0))):
            raise ValueError("Q must be symmetric")
        if n and np.linalg.eigvalsh(Q).min() < -1e-10 * max(1.0, np.abs(Q).max()):
            raise ValueError("Q must be positive semidefinite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "c", c)

    @property
    def n(self):
        return len(self.slots)

    def objective(self, x):
        x = np.asarray(x, dtype=np.float64)
        return float(0.5 * x @ self.Q @ x + self.c @ x)

    def permuted(self, order):
        return QuadraticSpec(self.slots[order], self.Q[np.ix_(order, order)], self.c[order])


@dataclass(frozen=True, eq=False)
class HingeSpec:
    """phi(x) = weight * max(0, a'x + b) ** power, power in {1, 2}."""

    slots: np.ndarray
    weight: float
    a: np.ndarray
    b: float
    power: int = 1
    kind: str = field(default="hinge", init=False)

    def __post_init__(self):
        object.__setattr__(self, "slots", _slots(self.slots))
        a = np.atleast_1d(np.asarray(self.a, dtype=np.float64))
        if a.shape != (len(self.slots),):
            raise ValueError("hinge coefficients do not match slots")
        if self.weight < 0:
            raise ValueError("hinge weight must be >= 0")
        if self.power not in (1, 2):
            raise ValueError("hinge power must be 1 or 2")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "weight", float(self.weight))
        object.__setattr__(self, "b", float(self.b))

    @property
    def n(self):
        return len(self.slots)

    def objective(self, x):
        return float(self.weight * max(0.0, float(self.a @ np.asarray(x)) + self.b) ** self.power)

    def permuted(self, order):
        return HingeSpec(self.slots[order], self.weight, self.a[order], self.b, self.power)


@dataclass(frozen=True, eq=False)
class SimplexSpec:
    """Indicator of the probability simplex over ``dimension`` coordinates.

    Only ``len(slots)`` coordinates are shared with consensus variables.  When
    fewer than ``dimension`` are shared, the remaining ones are private slack,
    which turns the feasible set seen by the shared part into
    ``{x >= 0, sum(x) <= 1}``.
    """

    slots: np.ndarray
    dimension: int
    kind: str = field(default="simplex", init=False)

    def __post_init__(self):
        object.__setattr__(self, "slots", _slots(self.slots))
        if self.dimension < 2:
            raise ValueError("simplex dimension must be >= 2")
        if len(self.slots) > self.dimension:
            raise ValueError("more slots than simplex dimension")

    @property
    def n(self):
        return len(self.slots)

    @property
    def capped(self) -> bool:
        return self.n < self.dimension

    def objective(self, x, tol=1e-9):
        x = np.asarray(x, dtype=np.float64)
        s = x.sum()
        ok = x.min(initial=0.0) >= -tol and (s <= 1 + tol if self.capped else abs(s - 1) <= tol)
        return 0.0 if ok else float("inf")

    def permuted(self, order):
        return SimplexSpec(self.slots[order], self.dimension)


SubproblemSpec = QuadraticSpec | HingeSpec | SimplexSpec


def canonical(spec):
    """Same subproblem with slots sorted ascending (the graph's slot order)."""
    order = np.argsort(spec.slots, kind="stable")
    if np.all(order == np.arange(len(order))):
        return spec
    return spec.permuted(order)


# ----- single-instance solvers ---------------------------------------------------


def prox_quadratic(spec: QuadraticSpec, lam, xhat, rho):
    """Solve (Q + rho I) x = rho xhat - lam - c."""
    assert rho > 0
    A = spec.Q + rho * np.eye(spec.n)
    rhs = rho * np.asarray(xhat, dtype=np.float64) - np.asarray(lam, dtype=np.float64) - spec.c
    L = np.linalg.cholesky(A)
    return np.linalg.solve(L.T, np.linalg.solve(L, rhs))


def prox_hinge(spec: HingeSpec, lam, xhat, rho):
    z = np.asarray(xhat, dtype=np.float64) - np.asarray(lam, dtype=np.float64) / rho
    a, b, w = spec.a, spec.b, spec.weight
    s = float(a @ z) + b
    aa = float(a @ a)
    if w == 0 or aa == 0 or s <= 0:
        return z
    if spec.power == 2:
        return z - (2 * w * s / (rho + 2 * w * aa)) * a
    x = z - (w / rho) * a
    if s - (w / rho) * aa >= 0:
        return x
    return z - (s / aa) * a


def project_simplex(v, capped=False):
    """Euclidean projection onto {x >= 0, sum x = 1} (or <= 1 when ``capped``)."""
    v = np.asarray(v, dtype=np.float64)
    if capped:
        p = np.maximum(v, 0.0)
        if p.sum() <= 1.0:
            return p
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, len(v) + 1)
    k = np.flatnonzero(u - css / ind > 0)[-1]
    theta = css[k] / (k + 1)
    return np.maximum(v - theta, 0.0)


def prox_simplex(spec: SimplexSpec, lam, xhat, rho):
    z = np.asarray(xhat, dtype=np.float64) - np.asarray(lam, dtype=np.float64) / rho
    return project_simplex(z, capped=spec.capped)


def prox(spec, lam, xhat, rho):
    if spec.kind == "quad":
        return prox_quadratic(spec, lam, xhat, rho)
    if spec.kind == "hinge":
        return prox_hinge(spec, lam, xhat, rho)
    return prox_simplex(spec, lam, xhat, rho)


def augmented_objective(spec, x, lam, xhat, rho):
    """The function each prox minimises, for checking solutions."""
    x = np.asarray(x, dtype=np.float64)
    d = x - np.asarray(xhat, dtype=np.float64)
    return spec.objective(x) + float(np.asarray(lam) @ x) + 0.5 * rho * float(d @ d)


# ----- batched solvers (rows are subproblems) -----------------------------------------


def quadratic_inverse_batch(Q, rho):
    """(Q + rho I)^-1 for a stack of (m, n, n) matrices."""
    n = Q.shape[-1]
    return np.linalg.inv(Q + rho * np.eye(n))


def prox_quadratic_batch(inv, c, lam, xhat, rho):
    rhs = rho * xhat - lam - c
    return np.einsum("mij,mj->mi", inv, rhs)


def prox_hinge_batch(a, b, w, power, lam, xhat, rho):
    z = xhat - lam / rho
    s = np.einsum("mi,mi->m", a, z) + b
    aa = np.einsum("mi,mi->m", a, a)
    live = (s > 0) & (w > 0) & (aa > 0)
    step = np.zeros_like(s)
    sq = live & (power == 2)
    step[sq] = 2 * w[sq] * s[sq] / (rho + 2 * w[sq] * aa[sq])
    lin = live & (power == 1)
    flat = lin & (s - (w / rho) * aa >= 0)
    step[flat] = w[flat] / rho
    proj = lin & ~flat
    step[proj] = s[proj] / aa[proj]
    return z - step[:, None] * a


def project_simplex_batch(v, capped):
    """Row-wise simplex projection; ``capped`` is a per-row bool array."""
    out = np.empty_like(v)
    if v.size == 0:
        return out
    clip = np.maximum(v, 0.0)
    done = capped & (clip.sum(axis=1) <= 1.0)
    out[done] = clip[done]
    rest = ~done
    if rest.any():
        w = v[rest]
        u = -np.sort(-w, axis=1)
        css = np.cumsum(u, axis=1) - 1.0
        ind = np.arange(1, w.shape[1] + 1)
        cond = u - css / ind > 0
        k = w.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
        theta = css[np.arange(len(w)), k] / (k + 1)
        out[rest] = np.maximum(w - theta[:, None], 0.0)
    return out


def prox_simplex_batch(capped, lam, xhat, rho):
    return project_simplex_batch(xhat - lam / rho, capped)
