"""Independent ground truth: the truncated CME and Gillespie's direct method.

Neither engine shares code with the closure solver beyond the network and lattice
definitions, so they can be used to check it.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from . import kernels
from .errors import CapExceeded, DimensionMismatch, MalformedInput, NegativePropensity, ReducibleChain
from .network import change_groups, grouped_propensities, validate_over
from .statespace import DistributionTable, StateSpace, factorial_features

#: Largest lattice the direct CME solve accepts by default.
DEFAULT_CAP = 200_000


def _active_mask(space, mask):
    if mask is None:
        return np.ones(space.size, dtype=bool)
    mask = np.asarray(mask, dtype=bool).reshape(-1)
    if mask.shape[0] != space.size:
        raise DimensionMismatch(f"mask has {mask.shape[0]} entries for {space.size} states")
    return mask


def generator_matrix(net, space, mask=None):
    """Sparse CME generator ``Q`` on the lattice (rows: from-state).

    Reactions are grouped by net change so split reactions with negative constants give
    one nonnegative rate per transition. Jumps that leave the lattice (or the optional
    ``mask``) are dropped, and the diagonal holds minus the retained outflow.
    """
    if space.n_species != net.n_species:
        raise DimensionMismatch(f"state space has {space.n_species} dims, network has {net.n_species} species")
    active = _active_mask(space, mask)
    states = space.lattice()
    props = grouped_propensities(net, states)
    changes, groups = change_groups(net)
    n = space.size
    rows, cols, vals = [], [], []
    for g, nu in enumerate(changes):
        if not nu.any():
            continue
        rate = props[:, g]
        if np.any(rate[active] < 0):
            bad = np.flatnonzero((rate < 0) & active)[0]
            raise NegativePropensity(
                f"grouped propensity for change {tuple(int(v) for v in nu)} is {rate[bad]} at state "
                f"{tuple(int(v) for v in states[bad])}"
            )
        target = states + nu
        ok = space.contains(target) & active & (rate > 0)
        src = np.flatnonzero(ok)
        dst = space.flat_index(target[ok]) if src.size else np.zeros(0, dtype=np.int64)
        keep = active[dst]
        rows.append(src[keep])
        cols.append(dst[keep])
        vals.append(rate[src[keep]])
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    Q = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    Q.sum_duplicates()
    out = np.asarray(Q.sum(axis=1)).ravel()
    return (Q - sp.diags(out)).tocsr()


def cme_stationary(net, space, cap=DEFAULT_CAP, mask=None):
    """Stationary distribution of the truncated CME by a sparse direct solve.

    The chain must have exactly one closed communicating class (transient states get
    probability zero); otherwise :class:`ReducibleChain` is raised.
    """
    if space.size > cap:
        raise CapExceeded(f"state space has {space.size} states, above the cap of {cap}")
    report = validate_over(net, space)
    if not report.valid:
        worst = report.worst
        raise NegativePropensity(
            f"grouped propensity for change {worst.change} reaches {worst.minimum} at {worst.argmin}"
        )
    active = _active_mask(space, mask)
    Q = generator_matrix(net, space, mask=active)
    idx_active = np.flatnonzero(active)
    Qa = Q[idx_active][:, idx_active]
    adj = Qa.copy()
    adj.setdiag(0)
    adj.eliminate_zeros()
    n_comp, labels = csgraph.connected_components(adj, directed=True, connection="strong")
    # a class is closed when no edge leaves it
    coo = adj.tocoo()
    leaves = np.zeros(n_comp, dtype=bool)
    cross = labels[coo.row] != labels[coo.col]
    leaves[labels[coo.row[cross]]] = True
    closed = np.flatnonzero(~leaves)
    if closed.size != 1:
        raise ReducibleChain(f"truncated chain has {closed.size} closed communicating classes; stationary distribution is not unique")
    members = np.flatnonzero(labels == closed[0])
    p_active = np.zeros(idx_active.size)
    if members.size == 1:
        p_active[members] = 1.0
    else:
        Qc = Qa[members][:, members].T.tolil()
        Qc[0, :] = np.ones(members.size)
        b = np.zeros(members.size)
        b[0] = 1.0
        sol = spla.spsolve(Qc.tocsc(), b)
        sol = np.where(sol < 0, 0.0, sol)
        p_active[members] = sol / kernels.weighted_sum(sol)
    p = np.zeros(space.size)
    p[idx_active] = p_active
    return DistributionTable(space, p.reshape(space.shape))


def interior_mask(net, space):
    """States from which every jump with nonzero propensity stays inside the lattice."""
    changes, _ = change_groups(net)
    states = space.lattice()
    props = grouped_propensities(net, states)
    ok = np.ones(space.size, dtype=bool)
    for g, nu in enumerate(changes):
        if nu.any():
            ok &= space.contains(states + nu) | (props[:, g] == 0)
    return ok


def generator_apply(net, space, p, indices):
    """``sum_X f_i(X) (Q^T p)(X)`` for each multi-index, with ``p`` restricted to interior states."""
    if isinstance(p, DistributionTable):
        if p.space != space:
            raise DimensionMismatch("distribution lives on a different state space")
        p = p.flat
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.shape[0] != space.size:
        raise DimensionMismatch(f"{p.shape[0]} probabilities for {space.size} states")
    Q = generator_matrix(net, space)
    v = Q.T @ (p * interior_mask(net, space))
    F = factorial_features(space, indices)
    return kernels.weighted_column_sums(v, F)


# ---------------------------------------------------------------------------
# stochastic simulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SsaConfig:
    seed: int = 0
    n_trajectories: int = 1
    burn_in_time: float = 100.0
    sample_interval: float = 100.0
    total_time: float = 10_000.0
    initial_state: tuple | None = None
    block: int = 1 << 16

    def __post_init__(self):
        if not (self.burn_in_time > 0 and self.sample_interval > 0 and self.total_time > 0):
            raise MalformedInput("SSA times must be > 0")
        if self.n_trajectories < 1:
            raise MalformedInput("need at least one trajectory")
        if self.sample_interval > self.total_time:
            raise MalformedInput("sample_interval must not exceed total_time")


@dataclass(frozen=True, eq=False)
class SsaResult:
    """Time-averaged occupancy after burn-in.

    ``means`` and ``factorial2`` hold per-species estimates of ``E[X]`` and
    ``E[X(X-1)]``; standard errors come from batch means over windows of
    ``sample_interval``.
    """

    distribution: DistributionTable
    outside_mass: float
    means: np.ndarray
    means_stderr: np.ndarray
    factorial2: np.ndarray
    factorial2_stderr: np.ndarray
    events_frozen: int
    n_batches: int


def ssa_sample(net, cfg, space):
    """Run Gillespie direct-method trajectories and histogram them on ``space``.

    Random numbers come from numpy's counter-based Philox generator, one stream per
    trajectory spawned from ``cfg.seed``, so a seed fixes the output exactly.
    """
    if space.n_species != net.n_species:
        raise DimensionMismatch("state space and network disagree on species count")
    init = cfg.initial_state
    if init is None:
        init = tuple(int(v) for v in space.lows)
    init = np.asarray(init, dtype=np.int64)
    if init.shape[0] != net.n_species or not space.contains(init)[0]:
        raise MalformedInput(f"initial state {tuple(init)} is not inside the state space")
    changes, groups = change_groups(net)
    reactants = np.ascontiguousarray(net.reactants, dtype=np.int64)
    rates = np.ascontiguousarray(net.rates, dtype=float)
    lo, hi = space.lows, space.highs
    strides = np.array(
        [int(np.prod(space.shape[j + 1:], dtype=np.int64)) for j in range(space.n_species)], dtype=np.int64
    )
    n_batches = max(1, int(round(cfg.total_time / cfg.sample_interval)))
    edges = np.linspace(0.0, cfg.total_time, n_batches + 1)
    batch_hist = np.zeros((cfg.n_trajectories * n_batches, space.size + 1))
    batch_sums = np.zeros((cfg.n_trajectories * n_batches, net.n_species, 2))
    frozen = 0
    seeds = np.random.SeedSequence(int(cfg.seed)).spawn(cfg.n_trajectories)
    for traj, ss in enumerate(seeds):
        rng = np.random.Generator(np.random.Philox(ss))
        state = init.copy()
        uniforms = rng.random(cfg.block)
        upos = 0
        scratch = np.zeros(space.size + 1)
        scratch_sums = np.zeros((net.n_species, 2))
        windows = [(0.0, cfg.burn_in_time, None)] + [
            (cfg.burn_in_time + edges[b], cfg.burn_in_time + edges[b + 1], traj * n_batches + b)
            for b in range(n_batches)
        ]
        t = 0.0
        for start, stop, slot in windows:
            hist = scratch if slot is None else batch_hist[slot]
            sums = scratch_sums if slot is None else batch_sums[slot]
            while True:
                t, upos, status = kernels.ssa_advance(
                    state, t, stop, reactants, rates, groups, changes, lo, hi, strides,
                    uniforms, upos, hist, sums,
                )
                if status == kernels.SSA_NEED_RANDOM:
                    uniforms = rng.random(cfg.block)
                    upos = 0
                    continue
                if status == kernels.SSA_NEGATIVE:
                    raise NegativePropensity(f"negative grouped propensity at state {tuple(int(v) for v in state)}")
                if status == kernels.SSA_FROZEN:
                    frozen += 1
                break
    if frozen:
        warnings.warn(f"{frozen} windows ended in a state with zero total propensity", RuntimeWarning, stacklevel=2)
    span = edges[1:] - edges[:-1]
    span = np.tile(span, cfg.n_trajectories)
    total_hist = batch_hist.sum(axis=0)
    inside = total_hist[:-1]
    total_time = total_hist.sum()
    mass_inside = inside.sum()
    dist = DistributionTable(space, (inside / mass_inside).reshape(space.shape)) if mass_inside > 0 else None
    per_batch = batch_sums / span[:, None, None]
    est = per_batch.mean(axis=0)
    nb = per_batch.shape[0]
    err = per_batch.std(axis=0, ddof=1) / np.sqrt(nb) if nb > 1 else np.full_like(est, np.nan)
    return SsaResult(
        distribution=dist,
        outside_mass=float(total_hist[-1] / total_time),
        means=est[:, 0],
        means_stderr=err[:, 0],
        factorial2=est[:, 1],
        factorial2_stderr=err[:, 1],
        events_frozen=frozen,
        n_batches=nb,
    )
