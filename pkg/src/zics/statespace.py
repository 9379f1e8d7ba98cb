"""Truncated lattice state spaces and maximum-entropy distributions on them.

The distribution parameterised by Lagrange multipliers ``lam`` (aligned with
``basis.lower``) is ``P(X) = exp(-lam_0 - sum_i lam_i f_i(X))`` with ``f_i`` the
falling-factorial product of multi-index ``i``. All sums over the lattice go through
the compensated kernels in :mod:`zics.kernels`, and exponentials are shifted by their
maximum before exponentiation.
"""
from __future__ import annotations

import re
import sys
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from .errors import DimensionMismatch, MalformedInput, NonFiniteExponent


@dataclass(frozen=True)
class StateSpace:
    """Box ``prod_j [min_j, max_j]`` of molecule counts, enumerated row-major."""

    bounds: tuple

    def __post_init__(self):
        bounds = []
        for pair in self.bounds:
            try:
                lo, hi = pair
            except (TypeError, ValueError):
                raise MalformedInput(f"state-space bound {pair!r} is not a (min, max) pair") from None
            if int(lo) != lo or int(hi) != hi:
                raise MalformedInput(f"state-space bounds must be integers, got {pair!r}")
            lo, hi = int(lo), int(hi)
            if lo < 0 or hi <= lo:
                raise MalformedInput(f"need 0 <= min < max, got ({lo}, {hi})")
            bounds.append((lo, hi))
        if not bounds:
            raise MalformedInput("state space needs at least one dimension")
        size = 1
        for lo, hi in bounds:
            size *= hi - lo + 1
        if size > sys.maxsize // 64:
            raise MalformedInput(f"state space with {size} states exceeds addressable limits")
        object.__setattr__(self, "bounds", tuple(bounds))

    @classmethod
    def from_max(cls, *maxima):
        return cls(tuple((0, m) for m in maxima))

    @property
    def n_species(self):
        return len(self.bounds)

    @property
    def lows(self):
        return np.array([b[0] for b in self.bounds], dtype=np.int64)

    @property
    def highs(self):
        return np.array([b[1] for b in self.bounds], dtype=np.int64)

    @property
    def shape(self):
        return tuple(hi - lo + 1 for lo, hi in self.bounds)

    @property
    def size(self):
        return int(np.prod(self.shape, dtype=object))

    @cached_property
    def _lattice(self):
        grid = np.indices(self.shape).reshape(self.n_species, -1).T + self.lows
        grid.setflags(write=False)
        return grid

    def lattice(self):
        """All states, shape ``(size, N)``, last species varying fastest."""
        return self._lattice

    def offsets(self):
        return self._lattice - self.lows

    def flat_index(self, states):
        states = np.atleast_2d(np.asarray(states, dtype=np.int64))
        return np.ravel_multi_index(tuple((states - self.lows).T), self.shape)

    def contains(self, states):
        states = np.atleast_2d(np.asarray(states))
        return np.all((states >= self.lows) & (states <= self.highs), axis=1)

    def boundary_mask(self):
        """States where some coordinate sits at its upper bound."""
        return np.any(self._lattice == self.highs, axis=1)

    def enlarged(self, by):
        return StateSpace(tuple((lo, hi + by) for lo, hi in self.bounds))

    def describe(self, species):
        return ",".join(f"{s}={lo}:{hi}" for s, (lo, hi) in zip(species, self.bounds))


def parse_space(text, species):
    """Parse ``'X=0:50,Y=0:40'`` or positional ``'0:50,0:40'``."""
    parts = [p.strip() for p in text.split(",") if p.strip()]
    named = {}
    positional = []
    for p in parts:
        m = re.fullmatch(r"(?:(.+?)=)?\s*(-?\d+)\s*:\s*(-?\d+)", p)
        if not m:
            raise MalformedInput(f"cannot parse state-space entry {p!r}; expected NAME=min:max or min:max")
        name, lo, hi = m.group(1), int(m.group(2)), int(m.group(3))
        if name is None:
            positional.append((lo, hi))
        else:
            if name not in species:
                raise MalformedInput(f"state space names unknown species {name!r}")
            named[name] = (lo, hi)
    if named and positional:
        raise MalformedInput("mix of named and positional state-space entries")
    if positional:
        if len(positional) != len(species):
            raise DimensionMismatch(f"{len(positional)} bounds for {len(species)} species")
        return StateSpace(tuple(positional))
    missing = [s for s in species if s not in named]
    if missing:
        raise DimensionMismatch(f"state space missing bounds for {', '.join(missing)}")
    return StateSpace(tuple(named[s] for s in species))


# ---------------------------------------------------------------------------
# lattice features
# ---------------------------------------------------------------------------


def falling_factorial_tables(space, max_degree, pad_low=0, pad_high=0):
    """Per-species tables ``T[j, x - lo_j + pad_low, m] = x (x-1) ... (x-m+1)``.

    Built by the recurrence ``x_(m+1) = x_(m) (x - m)`` so each entry costs one multiply.
    """
    L = max(space.shape) + pad_low + pad_high
    T = np.zeros((space.n_species, L, max_degree + 1))
    for j, (lo, hi) in enumerate(space.bounds):
        x = np.arange(lo - pad_low, hi + pad_high + 1, dtype=float)
        col = np.ones_like(x)
        T[j, : x.size, 0] = col
        for m in range(max_degree):
            col = col * (x - m)
            T[j, : x.size, m + 1] = col
    return T


def factorial_features(space, indices):
    """Matrix ``F[x, k] = f_k(X_x)`` for lattice states and multi-indices ``indices``."""
    indices = np.asarray(list(indices), dtype=np.int64).reshape(-1, space.n_species)
    if indices.shape[0] == 0:
        return np.zeros((space.size, 0))
    T = falling_factorial_tables(space, int(indices.max(initial=0)))
    return kernels.product_features(space.offsets(), T, indices)


@dataclass(frozen=True, eq=False)
class DistributionTable:
    """Probabilities on every state of ``space``; array shaped like the lattice."""

    space: StateSpace
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float).reshape(self.space.shape)
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite and nonnegative")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)

    @property
    def flat(self):
        return self.probabilities.reshape(-1)

    def __getitem__(self, state):
        idx = tuple(int(x) - lo for x, (lo, _) in zip(state, self.space.bounds))
        return float(self.probabilities[idx])

    def items(self):
        for state, p in zip(self.space.lattice(), self.flat):
            yield tuple(int(v) for v in state), float(p)

    def marginal(self, j):
        axes = tuple(a for a in range(self.space.n_species) if a != j)
        return self.probabilities.sum(axis=axes) if axes else self.probabilities.copy()

    def marginal_counts(self, j):
        lo, hi = self.space.bounds[j]
        return np.arange(lo, hi + 1)

    def boundary_mass(self):
        return kernels.weighted_sum(self.flat * self.space.boundary_mask())

    def l1(self, other):
        return float(np.abs(self.flat - other.flat).sum())

    def total_variation(self, other):
        return 0.5 * self.l1(other)

    def moments(self, indices):
        return kernels.weighted_column_sums(self.flat, factorial_features(self.space, indices))


# ---------------------------------------------------------------------------
# maximum-entropy evaluation
# ---------------------------------------------------------------------------


def _check_dims(space, basis, lam):
    if space.n_species != basis.n_species:
        raise DimensionMismatch(f"state space has {space.n_species} dims, basis has {basis.n_species}")
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if lam.shape[0] != basis.psi:
        raise DimensionMismatch(f"{lam.shape[0]} multipliers for {basis.psi} lower moments")
    return lam


def log_weights(F, lam):
    """Exponent ``-F @ lam``; raises :class:`NonFiniteExponent` on NaN or inf."""
    lam = np.asarray(lam, dtype=float)
    if not np.all(np.isfinite(lam)):
        raise NonFiniteExponent("non-finite Lagrange multiplier")
    with np.errstate(over="ignore", invalid="ignore"):
        e = -(F @ lam)
    if not np.all(np.isfinite(e)):
        raise NonFiniteExponent("exponent overflowed; multipliers too large for this state space")
    return e


def normalized_weights(e):
    """Return ``(P, log_normalizer)`` from exponents ``e`` with max shifting."""
    shift = float(e.max())
    w = np.exp(e - shift)
    Z = kernels.weighted_sum(w)
    return w / Z, shift + float(np.log(Z))


class MaxEntEvaluator:
    """Caches lattice features of a basis so repeated evaluations only redo the sums."""

    def __init__(self, space, basis):
        self.space = space
        self.basis = basis
        self.F = factorial_features(space, basis.lower)
        self._extra = {}

    def features(self, indices):
        key = tuple(tuple(int(v) for v in i) for i in indices)
        if key not in self._extra:
            self._extra[key] = factorial_features(self.space, key)
        return self._extra[key]

    def evaluate(self, lam):
        """Return ``(P_flat, lambda_0)``."""
        lam = _check_dims(self.space, self.basis, lam)
        return normalized_weights(log_weights(self.F, lam))

    def moments(self, P, indices):
        out = kernels.weighted_column_sums(P, self.features(indices))
        for k, idx in enumerate(indices):
            if not any(idx):
                out[k] = 1.0
        return out

    def cross_moments(self, P, rows, cols):
        return kernels.weighted_gram(P, self.features(rows), self.features(cols))


def normalizer(space, basis, lam):
    """``lambda_0 = log sum_Omega exp(-sum_i lam_i f_i(X))``."""
    return MaxEntEvaluator(space, basis).evaluate(lam)[1]


def distribution(space, basis, lam):
    P, _ = MaxEntEvaluator(space, basis).evaluate(lam)
    return DistributionTable(space, P.reshape(space.shape))


def moments(space, basis, lam, targets):
    """Factorial moments of ``targets`` (lower, higher or zero indices) under ``lam``."""
    ev = MaxEntEvaluator(space, basis)
    P, _ = ev.evaluate(lam)
    return ev.moments(P, [tuple(t) for t in targets])


def cross_moments(space, basis, lam, rows, cols):
    """Matrix of ``sum_Omega f_i f_j P`` for ``i`` in ``rows`` and ``j`` in ``cols``."""
    ev = MaxEntEvaluator(space, basis)
    P, _ = ev.evaluate(lam)
    return ev.cross_moments(P, [tuple(r) for r in rows], [tuple(c) for c in cols])
