"""Zero-information closure: Newton-Raphson on the Lagrange multipliers.

The public quantities (multipliers ``lam`` of the falling-factorial moment functions,
the residual ``A mu + A' mu' + mu_c`` and its Jacobian) follow the usual closure
formulation. Internally the Newton iteration runs in an equivalent, well-conditioned
frame: the exponent polynomial is expanded in tensor Chebyshev polynomials scaled to the
box, and the moment equations are the generator applied to those same polynomials,
evaluated pointwise on the lattice. Both frames span the same polynomial space, so the
iterates are the same up to rounding; the exact basis change maps the result back to
``lam``.

The basis change is badly conditioned for high orders on wide boxes, so a residual
that is at rounding level in the working frame can still be visible in the original
moment equations. A short polishing phase therefore finishes with Newton steps driven
by the original residual, still parameterised in the working frame.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.linalg

from . import kernels
from .errors import (
    DimensionMismatch,
    InvalidNetwork,
    IterLimit,
    NoDescent,
    NonFiniteExponent,
    SingularJacobian,
    SolverError,
)
from .moments import build_basis, generate_equations, monomial_to_falling
from .network import grouped_propensities, change_groups, validate_over
from .statespace import DistributionTable, MaxEntEvaluator, StateSpace, factorial_features


class TruncationWarning(UserWarning):
    """Too much probability sits on the upper boundary of the state space."""


class EscalationWarning(UserWarning):
    """A higher closure order failed; the previous order's solution was kept."""


@dataclass(frozen=True)
class SolverConfig:
    max_order: int = 8
    initial_order: int = 2
    residual_tol: float = 1e-9
    max_newton_iters: int = 200
    max_backtracks: int = 30
    order_escalation_tol: float = 1e-4
    adaptive: bool = True
    initial_lambdas: tuple | None = None
    boundary_warn: float = 1e-3
    partitions: int = kernels.PARTITIONS
    #: a trial step is accepted when its residual norm is below the largest of the last
    #: ``nonmonotone_window`` norms; 1 gives the strictly monotone rule
    nonmonotone_window: int = 8

    def __post_init__(self):
        if self.max_order < 2:
            raise ValueError("max_order must be >= 2")
        if self.initial_order < 1 or self.initial_order > self.max_order:
            raise ValueError("need 1 <= initial_order <= max_order")
        for name in ("residual_tol", "order_escalation_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.max_newton_iters < 1 or self.max_backtracks < 0:
            raise ValueError("iteration limits must be positive")
        if self.nonmonotone_window < 1:
            raise ValueError("nonmonotone_window must be >= 1")
        if self.initial_lambdas is not None:
            object.__setattr__(self, "initial_lambdas", tuple(float(v) for v in self.initial_lambdas))


@dataclass(frozen=True)
class OrderRecord:
    order: int
    residual_norm: float
    l1_step: float | None
    iterations: int


@dataclass(frozen=True, eq=False)
class ClosureSolution:
    order_used: int
    basis: object
    equations: object
    lambdas: np.ndarray
    lambda0: float
    moments_lower: np.ndarray
    moments_higher: np.ndarray
    distribution: DistributionTable
    residual_norm: float
    residual_abs: float
    iterations: int
    boundary_mass: float
    residual_history: tuple = ()
    per_order_history: tuple = ()
    warnings: tuple = ()
    escalation_failed: bool = False

    @property
    def space(self):
        return self.distribution.space


# ---------------------------------------------------------------------------
# residual and Jacobian in the moment frame
# ---------------------------------------------------------------------------


def residual(eqs, mu, mu_prime):
    """``R = A mu + A' mu' + mu_c``."""
    mu = np.asarray(mu, dtype=float).reshape(-1)
    mu_prime = np.asarray(mu_prime, dtype=float).reshape(-1)
    psi, psi_p = eqs.A_prime.shape
    if mu.shape[0] != psi or mu_prime.shape[0] != psi_p:
        raise DimensionMismatch(f"expected {psi} lower and {psi_p} higher moments, got {mu.shape[0]} and {mu_prime.shape[0]}")
    out = eqs.A @ mu + eqs.mu_c
    if psi_p:
        out = out + eqs.A_prime @ mu_prime
    return out


def residual_scale(eqs, mu, mu_prime):
    """Per-row magnitude ``sum |A_ij mu_j| + sum |A'_ik mu'_k| + |c_i|`` used for relative norms."""
    scale = np.abs(eqs.A) @ np.abs(mu) + np.abs(eqs.mu_c)
    if eqs.A_prime.shape[1]:
        scale = scale + np.abs(eqs.A_prime) @ np.abs(mu_prime)
    return scale


def relative_residual_norm(eqs, mu, mu_prime):
    R = residual(eqs, mu, mu_prime)
    scale = residual_scale(eqs, mu, mu_prime)
    rel = np.divide(np.abs(R), scale, out=np.zeros_like(R), where=scale > 0)
    return float(rel.max(initial=0.0))


def jacobian(space, basis, lam, eqs):
    """``dR/dlam = A J_low + A' J_high`` with ``J_ij = -mu_ij + mu_i mu_j``."""
    ev = MaxEntEvaluator(space, basis)
    P, _ = ev.evaluate(lam)
    low = list(basis.lower)
    high = list(eqs.basis.higher)
    mu = ev.moments(P, low)
    J_low = -ev.cross_moments(P, low, low) + np.outer(mu, mu)
    J = eqs.A @ J_low
    if high:
        mu_h = ev.moments(P, high)
        J_high = -ev.cross_moments(P, high, low) + np.outer(mu_h, mu)
        J = J + eqs.A_prime @ J_high
    return J


# ---------------------------------------------------------------------------
# Chebyshev working frame
# ---------------------------------------------------------------------------


def _chebyshev_power_coeffs(m):
    """Integer power-series coefficients of T_m(t)."""
    a, b = [1], [0, 1]
    if m == 0:
        return a
    for _ in range(m - 1):
        nxt = [0] + [2 * v for v in b]
        for i, v in enumerate(a):
            nxt[i] -= v
        a, b = b, nxt
    return b


def _chebyshev_in_falling(m, lo, hi):
    """Falling-factorial coefficients of ``T_m((2x - lo - hi) / (hi - lo))``."""
    scale = Fraction(2, hi - lo)
    shift = Fraction(-(lo + hi), hi - lo)
    mono = [Fraction(0)] * (m + 1)
    for n, c in enumerate(_chebyshev_power_coeffs(m)):
        if not c:
            continue
        # (scale x + shift)^n
        for q in range(n + 1):
            mono[q] += c * math.comb(n, q) * scale**q * shift ** (n - q)
    return monomial_to_falling(mono)


class ChebyshevFrame:
    """Working coordinates for one (network, state space, basis) triple.

    ``phi[x, k]`` are tensor Chebyshev polynomials with the multi-indices of the basis,
    ``h[x, k]`` is the generator applied to ``phi_k`` at lattice state ``x``.
    ``phi_k = sum_i T[k, i] f_i + const_k`` so multipliers convert as ``lam = T.T @ theta``.
    """

    def __init__(self, net, space, basis):
        self.space = space
        self.basis = basis
        idx = np.asarray(basis.lower, dtype=np.int64).reshape(-1, space.n_species)
        changes, _ = change_groups(net)
        pad_low = np.maximum(0, -changes.min(axis=0, initial=0))
        pad_high = np.maximum(0, changes.max(axis=0, initial=0))
        lows, highs = space.lows, space.highs
        degree = int(idx.max(initial=0))
        L = max(space.shape) + int(pad_low.max()) + int(pad_high.max())
        tables = np.zeros((space.n_species, L, degree + 1))
        for j in range(space.n_species):
            x = np.arange(lows[j] - pad_low[j], highs[j] + pad_high[j] + 1, dtype=float)
            t = (2.0 * x - (lows[j] + highs[j])) / (highs[j] - lows[j])
            prev, cur = np.ones_like(t), t
            tables[j, : x.size, 0] = prev
            if degree >= 1:
                tables[j, : x.size, 1] = cur
            for m in range(2, degree + 1):
                prev, cur = cur, 2.0 * t * cur - prev
                tables[j, : x.size, m] = cur
        base = space.offsets() + pad_low
        self.phi = kernels.product_features(base, tables, idx)
        props = grouped_propensities(net, space.lattice())
        h = np.zeros_like(self.phi)
        for g, nu in enumerate(changes):
            if not nu.any():
                continue
            shifted = kernels.product_features(base + nu, tables, idx)
            h += props[:, g : g + 1] * (shifted - self.phi)
        self.h = h
        self.abs_h = np.abs(h)
        self.T = self._basis_change(basis, space)

    @staticmethod
    def _basis_change(basis, space):
        pos = {i: k for k, i in enumerate(basis.lower)}
        psi = len(basis.lower)
        T = np.zeros((psi, psi))
        one_d = {}
        for k, index in enumerate(basis.lower):
            factors = []
            for j, m in enumerate(index):
                key = (m,) + space.bounds[j]
                if key not in one_d:
                    one_d[key] = _chebyshev_in_falling(m, *space.bounds[j])
                factors.append(one_d[key])
            acc = {(): Fraction(1)}
            for coeffs in factors:
                acc = {d + (q,): c * v for d, c in acc.items() for q, v in enumerate(coeffs) if v}
            for d, c in acc.items():
                if any(d):
                    T[k, pos[d]] = float(c)
        return T

    def to_lambdas(self, theta):
        return self.T.T @ theta

    def from_lambdas(self, lam):
        return scipy.linalg.solve_triangular(self.T.T, np.asarray(lam, dtype=float), lower=False)

    def state(self, theta, partitions):
        """Return ``(P, r, rel)`` at ``theta``: distribution, residual, relative residual."""
        if not np.all(np.isfinite(theta)):
            raise NonFiniteExponent("non-finite multiplier")
        e = -(self.phi @ theta)
        if not np.all(np.isfinite(e)):
            raise NonFiniteExponent("exponent overflowed")
        shift = e.max()
        w = np.exp(e - shift)
        P = w / kernels.weighted_sum(w, partitions)
        r = kernels.weighted_column_sums(P, self.h, partitions)
        scale = kernels.weighted_column_sums(P, self.abs_h, partitions)
        rel = np.divide(np.abs(r), scale, out=np.zeros_like(r), where=scale > 0)
        return P, r, rel

    def jacobian(self, P, r, partitions):
        mean_phi = kernels.weighted_column_sums(P, self.phi, partitions)
        G = kernels.weighted_gram(P, self.h, self.phi, partitions)
        return -(G - np.outer(r, mean_phi))


def _check_resolvable(space, basis):
    for index in basis.lower:
        for m, (lo, hi) in zip(index, space.bounds):
            if m > hi - lo:
                raise SingularJacobian(
                    f"closure order {basis.closure_order} exceeds what the state space can "
                    f"constrain: degree {m} on a range of {hi - lo + 1} values"
                )


POLISH_FACTOR = 1e-3


def _newton(frame, theta, config):
    tol = config.residual_tol
    P, r, rel = frame.state(theta, config.partitions)
    norm = float(rel.max(initial=0.0))
    history = [norm]
    iterations = 0
    # iterate past ``tol`` towards the rounding floor so the residual re-derived from
    # ``lam`` after the basis change still meets ``tol``
    target = tol * POLISH_FACTOR
    while norm > target:
        if iterations >= config.max_newton_iters:
            if norm <= tol:
                break
            raise IterLimit(f"no convergence after {iterations} Newton iterations (residual {norm:.3e})", frame.to_lambdas(theta))
        J = frame.jacobian(P, r, config.partitions)
        scale = kernels.weighted_column_sums(P, frame.abs_h, config.partitions)
        scale = np.where(scale > 0, scale, 1.0)
        Js = J / scale[:, None]
        rs = r / scale
        if not np.all(np.isfinite(Js)):
            raise SingularJacobian("Jacobian has non-finite entries", frame.to_lambdas(theta))
        lu, piv = scipy.linalg.lu_factor(Js, check_finite=False)
        jnorm = np.abs(Js).max()
        if np.abs(np.diag(lu)).min() <= 1e-12 * jnorm:
            raise SingularJacobian("Jacobian is numerically singular (rank tolerance 1e-12 |J|)", frame.to_lambdas(theta))
        step = scipy.linalg.lu_solve((lu, piv), -rs, check_finite=False)
        # non-monotone reference: full steps that briefly raise the norm are kept, which
        # lets the iteration follow long curved valleys instead of creeping along them
        ref = max(history[-config.nonmonotone_window:])
        alpha = 1.0
        for _ in range(config.max_backtracks + 1):
            trial = theta + alpha * step
            try:
                P_t, r_t, rel_t = frame.state(trial, config.partitions)
                norm_t = float(rel_t.max(initial=0.0))
            except NonFiniteExponent:
                norm_t = math.inf
            if norm_t < ref:
                break
            alpha *= 0.5
        else:
            if norm <= tol:
                break
            raise NoDescent(
                f"backtracking exhausted after {config.max_backtracks} halvings (residual {norm:.3e})",
                frame.to_lambdas(theta),
            )
        theta, P, r, norm = trial, P_t, r_t, norm_t
        history.append(norm)
        iterations += 1
    return theta, iterations, history


#: most Newton steps taken on the original residual after the working-frame iteration
MAX_POLISH = 6


def _moment_state(frame, eqs, F_low, F_high, theta, partitions):
    P, _, _ = frame.state(theta, partitions)
    mu = kernels.weighted_column_sums(P, F_low, partitions)
    mu_h = kernels.weighted_column_sums(P, F_high, partitions) if F_high.shape[1] else np.zeros(0)
    R = residual(eqs, mu, mu_h)
    scale = residual_scale(eqs, mu, mu_h)
    scale = np.where(scale > 0, scale, 1.0)
    return P, mu, mu_h, R, scale


def _polish(frame, eqs, theta, config, history):
    """Newton steps on the row-scaled original residual while it keeps falling."""
    space = frame.space
    F_low = factorial_features(space, eqs.basis.lower)
    F_high = factorial_features(space, eqs.basis.higher)
    parts = config.partitions
    P, mu, mu_h, R, scale = _moment_state(frame, eqs, F_low, F_high, theta, parts)
    norm = float(np.abs(R / scale).max(initial=0.0))
    steps = 0
    while steps < MAX_POLISH and norm > config.residual_tol * POLISH_FACTOR:
        mean_phi = kernels.weighted_column_sums(P, frame.phi, parts)
        J = eqs.A @ (np.outer(mu, mean_phi) - kernels.weighted_gram(P, F_low, frame.phi, parts))
        if F_high.shape[1]:
            J = J + eqs.A_prime @ (np.outer(mu_h, mean_phi) - kernels.weighted_gram(P, F_high, frame.phi, parts))
        try:
            step = scipy.linalg.solve(J / scale[:, None], -R / scale, check_finite=False)
            trial = _moment_state(frame, eqs, F_low, F_high, theta + step, parts)
        except (scipy.linalg.LinAlgError, ValueError, NonFiniteExponent):
            break
        norm_t = float(np.abs(trial[3] / trial[4]).max(initial=0.0))
        if not norm_t < norm:
            break
        theta = theta + step
        P, mu, mu_h, R, scale = trial
        norm = norm_t
        history.append(norm)
        steps += 1
    return theta, steps


def _pad(lam, basis_from, basis_to):
    pos = {idx: k for k, idx in enumerate(basis_from.lower)}
    out = np.zeros(basis_to.psi)
    for k, idx in enumerate(basis_to.lower):
        if idx in pos:
            out[k] = lam[pos[idx]]
    return out


def _order_for_length(n_species, length):
    order = 1
    while True:
        psi = math.comb(n_species + order, n_species) - 1
        if psi == length:
            return order
        if psi > length:
            raise DimensionMismatch(f"{length} warm-start multipliers match no closure order for {n_species} species")
        order += 1


def _require_valid(net, space):
    report = validate_over(net, space)
    if not report.valid:
        worst = report.worst
        raise InvalidNetwork(
            f"grouped propensity for change {worst.change} reaches {worst.minimum} at state {worst.argmin}"
        )


def solve_at_order(net, space, order, config=None, warm=None, *, _validated=False):
    """Solve the closure at a fixed order.

    ``warm`` is a multiplier vector for this order's basis, or for any lower order (it is
    zero-padded). Without it the iteration starts from the uniform distribution.
    """
    config = config or SolverConfig(max_order=max(2, order), initial_order=min(order, 2))
    if space.n_species != net.n_species:
        raise DimensionMismatch(f"state space has {space.n_species} dims, network has {net.n_species} species")
    if not _validated:
        _require_valid(net, space)
    basis = build_basis(net.n_species, order)
    _check_resolvable(space, basis)
    eqs = generate_equations(net, basis)
    frame = ChebyshevFrame(net, space, basis)
    if warm is None:
        theta0 = np.zeros(basis.psi)
    else:
        warm = np.asarray(warm, dtype=float).reshape(-1)
        if warm.shape[0] != basis.psi:
            warm_basis = build_basis(net.n_species, _order_for_length(net.n_species, warm.shape[0]))
            if warm_basis.closure_order > order:
                raise DimensionMismatch("warm start has a higher order than requested")
            warm = _pad(warm, warm_basis, basis)
        theta0 = frame.from_lambdas(warm)
    theta, iterations, history = _newton(frame, theta0, config)
    theta, extra = _polish(frame, eqs, theta, config, history)
    iterations += extra
    return _finish(net, space, eqs, frame.to_lambdas(theta), iterations, history, config)


def _finish(net, space, eqs, lam, iterations, history, config):
    basis = eqs.basis
    ev = MaxEntEvaluator(space, basis)
    P, lam0 = ev.evaluate(lam)
    mu = ev.moments(P, list(basis.lower))
    mu_h = ev.moments(P, list(basis.higher))
    R = residual(eqs, mu, mu_h)
    dist = DistributionTable(space, P.reshape(space.shape))
    bmass = dist.boundary_mass()
    notes = []
    if bmass > config.boundary_warn:
        msg = f"boundary mass {bmass:.3e} exceeds {config.boundary_warn:g}; enlarge the state space"
        warnings.warn(msg, TruncationWarning, stacklevel=3)
        notes.append(msg)
    return ClosureSolution(
        order_used=basis.closure_order,
        basis=basis,
        equations=eqs,
        lambdas=lam,
        lambda0=lam0,
        moments_lower=mu,
        moments_higher=mu_h,
        distribution=dist,
        residual_norm=relative_residual_norm(eqs, mu, mu_h),
        residual_abs=float(np.abs(R).max(initial=0.0)),
        iterations=iterations,
        boundary_mass=bmass,
        residual_history=tuple(history),
        warnings=tuple(notes),
    )


def solve_adaptive(net, space, config=None):
    """Solve at increasing closure orders, warm-starting each from the previous one.

    Stops when successive reconstructed distributions differ by less than
    ``order_escalation_tol`` in L1 (if ``config.adaptive``), or at ``max_order``.
    """
    config = config or SolverConfig()
    _require_valid(net, space)
    start = config.initial_order
    warm = None
    if config.initial_lambdas is not None:
        warm = np.asarray(config.initial_lambdas)
        start = _order_for_length(net.n_species, warm.shape[0])
        if start > config.max_order:
            raise DimensionMismatch(f"warm start order {start} exceeds max_order {config.max_order}")
    sol = solve_at_order(net, space, start, config, warm, _validated=True)
    records = [OrderRecord(start, sol.residual_norm, None, sol.iterations)]
    notes = list(sol.warnings)
    failed = False
    order = start
    while order < config.max_order:
        try:
            nxt = solve_at_order(net, space, order + 1, config, sol.lambdas, _validated=True)
        except SolverError as exc:
            msg = f"order {order + 1} failed ({type(exc).__name__}: {exc}); keeping order {order}"
            warnings.warn(msg, EscalationWarning, stacklevel=2)
            notes.append(msg)
            failed = True
            break
        step = nxt.distribution.l1(sol.distribution)
        records.append(OrderRecord(order + 1, nxt.residual_norm, step, nxt.iterations))
        notes = [n for n in notes if not n.startswith("boundary mass")] + list(nxt.warnings)
        sol = nxt
        order += 1
        if config.adaptive and step < config.order_escalation_tol:
            break
    return ClosureSolution(
        **{
            **sol.__dict__,
            "per_order_history": tuple(records),
            "warnings": tuple(notes),
            "escalation_failed": failed,
        }
    )
