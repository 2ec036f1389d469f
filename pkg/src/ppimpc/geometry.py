"""Support-function calculus for H-polytopes and ellipsoids.

Sets are never converted to vertex form.  Every operation (support, Pontryagin
difference, inclusion, redundancy removal) reduces to evaluating support
functions, which for polytopes is a small LP.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import EmptySetError, InvalidArgumentError, TighteningInfeasibleError, UnboundedSupportError
from .optim import DEFAULT_TOLERANCES, LinearProgram, Status, solve_lp

REDUNDANCY_TOL = 1e-9
SYMMETRY_TOL = 1e-10

SupportFunction = Callable[[np.ndarray], float]


@dataclass(frozen=True)
class Polytope:
    """The set ``{x : directions @ x <= offsets}``."""

    directions: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.directions, dtype=float))
        h = np.atleast_1d(np.asarray(self.offsets, dtype=float)).ravel()
        if H.shape[0] != h.shape[0]:
            raise InvalidArgumentError(f"{H.shape[0]} directions but {h.shape[0]} offsets")
        if not (np.all(np.isfinite(H)) and np.all(np.isfinite(h))):
            raise InvalidArgumentError("polytope data must be finite")
        H.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "directions", H)
        object.__setattr__(self, "offsets", h)

    @classmethod
    def from_bounds(cls, lower, upper):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        n = lower.shape[0]
        eye = np.eye(n)
        return cls(np.vstack([eye, -eye]), np.concatenate([upper, -lower]))

    @classmethod
    def normalized(cls, directions, offsets):
        """Rescale rows so every offset equals 1; offsets must be positive."""
        H = np.atleast_2d(np.asarray(directions, dtype=float))
        h = np.atleast_1d(np.asarray(offsets, dtype=float))
        if np.any(h <= 0):
            raise InvalidArgumentError("normalization needs strictly positive offsets")
        return cls(H / h[:, None], np.ones_like(h))

    @property
    def dim(self) -> int:
        return self.directions.shape[1]

    @property
    def n_rows(self) -> int:
        return self.directions.shape[0]

    @property
    def origin_interior(self) -> bool:
        return bool(np.all(self.offsets > 0))

    def contains(self, x, tol: float = 0.0):
        """Membership test; ``x`` may be a single point or an (k, n) batch."""
        x = np.asarray(x, dtype=float)
        vals = x @ self.directions.T - self.offsets
        return np.all(vals <= tol, axis=-1)

    def support(self, y) -> float:
        return polytope_support(self, y)

    def linear_preimage(self, M) -> "Polytope":
        """``{x : M x in self}``."""
        return Polytope(self.directions @ np.atleast_2d(M), self.offsets)

    def intersect(self, other: "Polytope") -> "Polytope":
        return Polytope(np.vstack([self.directions, other.directions]),
                        np.concatenate([self.offsets, other.offsets]))


@dataclass(frozen=True)
class Ellipsoid:
    """``{x : (x - center)^T shape^{-1} (x - center) <= radius_sq}``."""

    shape: np.ndarray
    center: np.ndarray
    radius_sq: float

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.shape, dtype=float))
        c = np.atleast_1d(np.asarray(self.center, dtype=float)).ravel()
        if M.shape != (c.shape[0], c.shape[0]):
            raise InvalidArgumentError("shape and center dimensions differ")
        if not (np.all(np.isfinite(M)) and np.all(np.isfinite(c)) and np.isfinite(self.radius_sq)):
            raise InvalidArgumentError("ellipsoid data must be finite")
        if np.max(np.abs(M - M.T), initial=0.0) > SYMMETRY_TOL:
            raise InvalidArgumentError("ellipsoid shape is not symmetric")
        if np.linalg.eigvalsh(M).min() <= 0:
            raise InvalidArgumentError("ellipsoid shape is not positive definite")
        if not self.radius_sq > 0:
            raise InvalidArgumentError("radius_sq must be positive")
        M.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "shape", M)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius_sq", float(self.radius_sq))

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def contains(self, x, tol: float = 0.0):
        """Membership for a point or a batch of points (rows)."""
        dx = np.atleast_1d(np.asarray(x, dtype=float)) - self.center
        sol = np.linalg.solve(self.shape, np.atleast_2d(dx).T).T
        q = np.sum(np.atleast_2d(dx) * sol, axis=-1)
        out = q <= self.radius_sq * (1.0 + tol)
        return out if np.ndim(x) > 1 else bool(out[0])

    def support(self, y) -> float:
        return ellipsoid_support(self, y)


def _direction(y, n):
    y = np.atleast_1d(np.asarray(y, dtype=float)).ravel()
    if y.shape[0] != n:
        raise InvalidArgumentError(f"direction has length {y.shape[0]}, expected {n}")
    if not np.all(np.isfinite(y)):
        raise InvalidArgumentError("direction must be finite")
    return y


def ellipsoid_support(E: Ellipsoid, y) -> float:
    """``c^T y + sqrt(radius_sq * y^T M y)``."""
    y = _direction(y, E.dim)
    quad = max(float(y @ E.shape @ y), 0.0)
    return float(E.center @ y + np.sqrt(E.radius_sq * quad))


def polytope_support(P: Polytope, y) -> float:
    """``max y^T x`` over ``P``, by LP.

    Raises ``UnboundedSupportError`` if ``P`` is unbounded along ``y`` and
    ``EmptySetError`` if ``P`` is empty.
    """
    y = _direction(y, P.dim)
    res = solve_lp(LinearProgram(y, P.directions, P.offsets))
    if res.kind is Status.OPTIMAL:
        return res.value
    if res.kind is Status.UNBOUNDED:
        raise UnboundedSupportError(f"polytope is unbounded in direction {y}")
    if res.kind is Status.INFEASIBLE:
        raise EmptySetError("polytope is empty")
    raise UnboundedSupportError(f"support LP stopped with status {res.kind.value}")


def linear_map_support(h: SupportFunction, M) -> SupportFunction:
    """Support function of ``M S`` given that of ``S``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return lambda y: h(M.T @ np.asarray(y, dtype=float))


def minkowski_support(*supports: SupportFunction) -> SupportFunction:
    return lambda y: float(sum(h(y) for h in supports))


def pontryagin_diff(X: Polytope, hsub: SupportFunction) -> Polytope:
    """Tighten a normalized polytope by a set given through its support function.

    Row ``i`` of ``X`` is ``f_i^T x <= 1``; the result keeps ``f_i`` and uses
    offset ``1 - hsub(f_i)``.  A non-positive new offset means the origin left
    the interior and raises ``TighteningInfeasibleError`` naming the row.
    """
    if not np.allclose(X.offsets, 1.0, rtol=0, atol=1e-12):
        raise InvalidArgumentError("pontryagin_diff expects offsets normalized to 1")
    new = np.array([1.0 - hsub(f) for f in X.directions])
    if not np.all(np.isfinite(new)):
        raise InvalidArgumentError("subtracted support is not finite on every row")
    bad = np.flatnonzero(new <= 0)
    if bad.size:
        i = int(bad[0])
        raise TighteningInfeasibleError(
            f"tightened offset of row {i} is {new[i]:.6g} <= 0; the tightened set loses the origin",
            row=i, offsets=new)
    return Polytope(X.directions, new)


@dataclass(frozen=True)
class Certificate:
    passed: bool
    slack: np.ndarray

    @property
    def min_slack(self) -> float:
        return float(self.slack.min()) if self.slack.size else np.inf


def inclusion_certificate(inner_support: SupportFunction, outer: Polytope, tol: float = 1e-8) -> Certificate:
    """Check ``inner ⊆ outer`` facet by facet: ``h_inner(p_i) <= q_i + tol``."""
    if tol < 0:
        raise InvalidArgumentError("tol must be nonnegative")
    slack = np.array([q - inner_support(p) for p, q in zip(outer.directions, outer.offsets)])
    return Certificate(bool(np.all(slack >= -tol)), slack)


def remove_redundancy(P: Polytope, tol: float = REDUNDANCY_TOL) -> Polytope:
    """Drop rows implied by the others.

    Row ``i`` is removed iff maximizing it over the remaining kept rows gives a
    value at most ``offset_i + tol``.  Rows are scanned in order, so among
    exact duplicates the last copy is the one retained.
    """
    if solve_lp(LinearProgram(np.zeros(P.dim), P.directions, P.offsets)).kind is Status.INFEASIBLE:
        raise EmptySetError("cannot remove redundancy from an empty polytope")
    keep = np.ones(P.n_rows, dtype=bool)
    for i in range(P.n_rows):
        others = keep.copy()
        others[i] = False
        if not others.any():
            continue
        res = solve_lp(LinearProgram(P.directions[i], P.directions[others], P.offsets[others]), DEFAULT_TOLERANCES)
        if res.kind is Status.OPTIMAL and res.value <= P.offsets[i] + tol:
            keep[i] = False
    return Polytope(P.directions[keep], P.offsets[keep])
