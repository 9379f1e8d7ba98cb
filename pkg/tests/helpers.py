"""Shared generators for randomized tests."""
import numpy as np

from zics.network import ReactionNetwork


def random_network(rng, n_species, n_reactions, max_order=2, max_product=2):
    """Random mass-action network with at most ``max_order`` molecules consumed per reaction."""
    reac = np.zeros((n_reactions, n_species), dtype=int)
    prod = np.zeros((n_reactions, n_species), dtype=int)
    for r in range(n_reactions):
        for _ in range(rng.integers(0, max_order + 1)):
            reac[r, rng.integers(n_species)] += 1
        for _ in range(rng.integers(0, max_product + 1)):
            prod[r, rng.integers(n_species)] += 1
        if not (reac[r].any() or prod[r].any()):
            prod[r, rng.integers(n_species)] = 1
    rates = rng.uniform(0.1, 3.0, n_reactions)
    return ReactionNetwork([f"S{j}" for j in range(n_species)], reac, prod, rates)


def local_maxima(p, interior=False):
    """Indices that are strictly above both neighbours (or their one neighbour at an edge)."""
    n = len(p)
    idx = [i for i in range(n) if (i == 0 or p[i] > p[i - 1]) and (i == n - 1 or p[i] > p[i + 1])]
    if interior:
        idx = [i for i in idx if 0 < i < n - 1]
    return idx
