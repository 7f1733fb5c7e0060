"""Sieve bases (polynomial / B-spline) and logistic series functions.

Every nuisance function in the package is represented as expit{gamma' phi(x)}
for a feature vector phi built here.  Polynomial features are monomials kept
under three rules: at most ``interaction_order`` distinct covariates multiply
together, each covariate enters with power at most ``degree``, and a k-way
cross term carries total degree at most max(degree, k).  With the defaults
(degree 3, pairwise interactions) this is the total-degree-3 monomial set.
Ordering is graded lexicographic so serialized coefficient vectors are stable.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np


def expit(u):
    """Numerically stable logistic function."""
    u = np.asarray(u, dtype=np.float64)
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    eu = np.exp(u[~pos])
    out[~pos] = eu / (1.0 + eu)
    if scalar:
        return float(out[0])
    return out


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    out = np.log(p) - np.log1p(-p)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class BasisConfig:
    """Sieve family settings.

    ``interaction_order`` of None resolves to pairwise interactions for up to
    four covariates and to no interactions for wider problems, keeping the
    basis dimension well below n.  The B-spline family is univariate-additive
    (cubic, uniform knots) and is provided as an alternative; the polynomial
    family is the default used throughout.
    """

    family: str = "polynomial"
    degree: int = 3
    interaction_order: int | None = None
    include_intercept: bool = True
    knots: int = 3

    def __post_init__(self):
        if self.family not in ("polynomial", "bspline"):
            raise ValueError(f"unknown basis family {self.family!r}")
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if self.interaction_order is not None and self.interaction_order < 0:
            raise ValueError("interaction_order must be non-negative")
        if not self.include_intercept:
            raise ValueError("the constant basis function is always included")

    def resolved_interaction_order(self, d):
        if self.interaction_order is None:
            return min(2, d) if d <= 4 else 1
        return min(self.interaction_order, d)

    def to_json_dict(self):
        return {
            "family": self.family,
            "degree": self.degree,
            "interaction_order": self.interaction_order,
            "include_intercept": self.include_intercept,
            "knots": self.knots,
        }

    @classmethod
    def from_json_dict(cls, doc):
        return cls(
            family=doc.get("family", "polynomial"),
            degree=int(doc.get("degree", 3)),
            interaction_order=doc.get("interaction_order"),
            include_intercept=bool(doc.get("include_intercept", True)),
            knots=int(doc.get("knots", 3)),
        )


def monomial_exponents(d, degree, interaction_order, per_dim_degree=None):
    """Ordered exponent vectors of the retained monomials.

    ``per_dim_degree`` optionally caps individual coordinates below ``degree``
    (used to avoid duplicated columns when binary covariates enter a design).
    Ordering is graded lexicographic: by total degree, then x1-major.
    """
    caps = [degree] * d if per_dim_degree is None else [min(degree, c) for c in per_dim_degree]
    exps = [(0,) * d]
    interaction_order = min(interaction_order, d)
    for k in range(1, interaction_order + 1):
        budget = max(degree, k)
        for support in combinations(range(d), k):
            for combo in _compositions(k, budget, [caps[j] for j in support]):
                e = [0] * d
                for j, p in zip(support, combo):
                    e[j] = p
                exps.append(tuple(e))
    exps.sort(key=lambda e: (sum(e), tuple(-p for p in e)))
    return tuple(exps)


def _compositions(k, total_budget, caps):
    """All exponent tuples of length k with entries in [1, cap] summing to <= budget."""
    if k == 0:
        yield ()
        return
    for p in range(1, min(caps[0], total_budget - (k - 1)) + 1):
        for rest in _compositions(k - 1, total_budget - p, caps[1:]):
            yield (p,) + rest


def monomials_matrix(x, exponents):
    """Evaluate monomial features for a (n, d) matrix; returns (n, J)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = x.shape[0]
    cols = np.empty((n, len(exponents)))
    for j, e in enumerate(exponents):
        col = np.ones(n)
        for dim, p in enumerate(e):
            if p:
                col = col * x[:, dim] ** p
        cols[:, j] = col
    return cols


def _bspline_knots(num_interior, degree=3):
    interior = np.linspace(0.0, 1.0, num_interior + 2)[1:-1]
    return np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])


def _bspline_design(u, knots, degree=3):
    """Cox-de Boor evaluation of all B-splines of the given degree at u."""
    u = np.asarray(u, dtype=np.float64)
    nfun = len(knots) - degree - 1
    b = np.zeros((u.shape[0], len(knots) - 1))
    # degree-0 indicators; right-closed at the final knot
    for i in range(len(knots) - 1):
        b[:, i] = (knots[i] <= u) & (u < knots[i + 1])
    b[u >= knots[-1] - 1e-15, np.searchsorted(knots, 1.0, side="left") - 1] = 1.0
    for p in range(1, degree + 1):
        nb = np.zeros((u.shape[0], len(knots) - p - 1))
        for i in range(len(knots) - p - 1):
            left_den = knots[i + p] - knots[i]
            right_den = knots[i + p + 1] - knots[i + 1]
            term = 0.0
            if left_den > 0:
                term = (u - knots[i]) / left_den * b[:, i]
            if right_den > 0:
                term = term + (knots[i + p + 1] - u) / right_den * b[:, i + 1]
            nb[:, i] = term
        b = nb
    return b[:, :nfun]


def expand_matrix(x, config: BasisConfig):
    """Feature matrix phi(X) for all rows of x; first column is the constant 1."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    d = x.shape[1]
    if config.family == "polynomial":
        exps = monomial_exponents(d, config.degree, config.resolved_interaction_order(d))
        return monomials_matrix(x, exps)
    knots = _bspline_knots(config.knots, config.degree)
    blocks = [np.ones((x.shape[0], 1))]
    for dim in range(d):
        # drop the first spline per coordinate: the full set sums to one,
        # which would duplicate the intercept
        blocks.append(_bspline_design(x[:, dim], knots, config.degree)[:, 1:])
    return np.hstack(blocks)


def expand(x, config: BasisConfig):
    """Feature vector phi(x) for a single covariate vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expand takes a single covariate vector; use expand_matrix for batches")
    return expand_matrix(x[None, :], config)[0]


def basis_dimension(config: BasisConfig, d):
    if config.family == "polynomial":
        return len(monomial_exponents(d, config.degree, config.resolved_interaction_order(d)))
    knots = _bspline_knots(config.knots, config.degree)
    per_dim = len(knots) - config.degree - 1 - 1
    return 1 + d * per_dim


@dataclass(frozen=True)
class SeriesFunction:
    """A logistic series function lo + (hi - lo) * expit{gamma' phi(x)}.

    With the default range (0, 1) this is the plain logistic series; the sieve
    estimator uses (c, 1 - c) to keep fitted nuisances inside the floor.
    """

    config: BasisConfig
    gamma: np.ndarray
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=np.float64)
        gamma.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)
        if not 0.0 <= self.lo < self.hi <= 1.0:
            raise ValueError("range must satisfy 0 <= lo < hi <= 1")

    def eval_features(self, phi):
        sig = expit(phi @ self.gamma)
        sig = np.clip(sig, 1e-15, 1.0 - 1e-15)
        return self.lo + (self.hi - self.lo) * sig

    def eval_matrix(self, x):
        return self.eval_features(expand_matrix(x, self.config))

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return float(self.eval_matrix(x[None, :])[0])
        return self.eval_matrix(x)


def eval_series(f: SeriesFunction, x):
    """Evaluate a logistic series function at a covariate vector; in (0, 1)."""
    return f(x)


def intercept_only(config: BasisConfig, value, lo=0.0, hi=1.0, d=1):
    """SeriesFunction that is constant at ``value`` (handy for tests/starts)."""
    j = basis_dimension(config, d)
    gamma = np.zeros(j)
    gamma[0] = logit((value - lo) / (hi - lo))
    return SeriesFunction(config, gamma, lo, hi)
