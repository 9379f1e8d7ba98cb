"""Reaction networks: definition, parsing, persistence and structural transforms."""
from __future__ import annotations

import itertools
import json
import math
import re
import string
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateSpecies,
    MalformedInput,
    NonIntegerStoichiometry,
    NonlinearDependence,
    ShapeMismatch,
    TotalMissing,
    UnresolvableDependency,
)


def default_species_names(n):
    """A, B, ..., Z, then A1, B1, ..."""
    letters = string.ascii_uppercase
    return [letters[i % 26] + (str(i // 26) if i >= 26 else "") for i in range(n)]


def _frozen_array(values, dtype):
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _as_stoich(values, what):
    try:
        flt = np.asarray(values, dtype=float)
    except ValueError as exc:
        raise ShapeMismatch(f"{what} is ragged or non-numeric: {exc}") from exc
    except TypeError as exc:
        raise MalformedInput(f"{what}: non-numeric stoichiometry") from exc
    if flt.ndim != 2:
        raise ShapeMismatch(f"{what} must be a 2-d matrix, got {flt.ndim}-d")
    if not np.all(np.isfinite(flt)) or np.any(flt != np.round(flt)):
        bad = np.argwhere(~np.isfinite(flt) | (flt != np.round(flt)))[0]
        raise NonIntegerStoichiometry(f"{what} row {bad[0]}: non-integer coefficient {flt[tuple(bad)]!r}")
    if np.any(flt < 0):
        bad = np.argwhere(flt < 0)[0]
        raise MalformedInput(f"{what} row {bad[0]}: negative coefficient {flt[tuple(bad)]!r}")
    return flt.astype(np.int64)


@dataclass(frozen=True, eq=False)
class ReactionNetwork:
    """Mass-action network of irreversible elementary reactions.

    Parameters
    ----------
    species : sequence of str
        Unique species names; column order of the stoichiometric matrices.
    reactants, products : (R, N) array_like of int
        Molecules consumed and produced by each reaction.
    rates : (R,) array_like of float
        Rate constants. Negative values are allowed here; whether the grouped
        propensities stay nonnegative is checked by :func:`validate_over`.
    """

    species: tuple
    reactants: np.ndarray
    products: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        species = tuple(str(s) for s in self.species)
        reactants = _as_stoich(self.reactants, "reactant matrix")
        products = _as_stoich(self.products, "product matrix")
        if reactants.shape != products.shape:
            raise ShapeMismatch(
                f"reactant matrix is {reactants.shape[0]}x{reactants.shape[1]} but product matrix is "
                f"{products.shape[0]}x{products.shape[1]}"
            )
        R, N = reactants.shape
        if R < 1 or N < 1:
            raise ShapeMismatch("network needs at least one reaction and one species")
        if len(species) != N:
            raise ShapeMismatch(f"{len(species)} species names for {N} stoichiometry columns")
        if any(not s or s != s.strip() for s in species):
            raise MalformedInput("species names must be nonempty without surrounding whitespace")
        seen = set()
        for s in species:
            if s in seen:
                raise DuplicateSpecies(f"species {s!r} listed twice")
            seen.add(s)
        try:
            rates = np.asarray(self.rates, dtype=float).reshape(-1)
        except (TypeError, ValueError) as exc:
            raise MalformedInput("rate constants must be numbers") from exc
        if rates.shape[0] != R:
            raise ShapeMismatch(f"{rates.shape[0]} rate constants for {R} reactions")
        if not np.all(np.isfinite(rates)):
            raise MalformedInput("rate constants must be finite")
        empty = np.flatnonzero((reactants.sum(axis=1) == 0) & (products.sum(axis=1) == 0))
        if empty.size:
            raise MalformedInput(f"reaction {empty[0]} has neither reactants nor products")
        object.__setattr__(self, "species", species)
        object.__setattr__(self, "reactants", _frozen_array(reactants, np.int64))
        object.__setattr__(self, "products", _frozen_array(products, np.int64))
        object.__setattr__(self, "rates", _frozen_array(rates, float))

    @classmethod
    def from_matrices(cls, reactants, products, rates, species=None):
        n = np.asarray(reactants).shape[1] if np.ndim(reactants) == 2 else 0
        if species is None:
            species = default_species_names(n)
        return cls(tuple(species), reactants, products, rates)

    @property
    def n_species(self):
        return len(self.species)

    @property
    def n_reactions(self):
        return self.rates.shape[0]

    @property
    def net(self):
        """Net change matrix ``products - reactants`` (R, N)."""
        return self.products - self.reactants

    @property
    def max_reactant_order(self):
        return int(self.reactants.sum(axis=1).max())

    def index(self, name):
        try:
            return self.species.index(name)
        except ValueError:
            raise MalformedInput(f"unknown species {name!r}") from None

    def __eq__(self, other):
        if not isinstance(other, ReactionNetwork):
            return NotImplemented
        return (
            self.species == other.species
            and np.array_equal(self.reactants, other.reactants)
            and np.array_equal(self.products, other.products)
            and np.array_equal(self.rates, other.rates)
        )

    def __hash__(self):
        return hash((self.species, self.reactants.tobytes(), self.products.tobytes(), self.rates.tobytes()))

    def reaction_strings(self):
        """Human-readable reactions, e.g. ``'Y -> 2 X (k=35)'``."""
        return [
            f"{_side(self.reactants[r], self.species, ' ')} -> "
            f"{_side(self.products[r], self.species, ' ')} (k={format_number(self.rates[r])})"
            for r in range(self.n_reactions)
        ]

    def __str__(self):
        return "\n".join(self.reaction_strings())


def format_number(x):
    """Shortest round-tripping decimal for ``x``; integral values print without a point."""
    x = float(x)
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def _side(row, species, sep):
    terms = []
    for coef, name in zip(row, species):
        if coef == 1:
            terms.append(name)
        elif coef > 1:
            terms.append(f"{coef}{sep}{name}")
    return " + ".join(terms) if terms else "0"


# ---------------------------------------------------------------------------
# parsing and saving
# ---------------------------------------------------------------------------


def parse_network(text, format="json"):
    """Parse network file content in ``'json'`` or ``'tsv'`` format."""
    fmt = format.lower()
    if fmt == "json":
        return _parse_json(text)
    if fmt == "tsv":
        return _parse_tsv(text)
    raise MalformedInput(f"unknown network format {format!r}")


def _parse_json(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedInput("network JSON must be an object")
    if "reactions" in doc:
        return _parse_json_reactions(doc)
    if "reactant_matrix" in doc or "product_matrix" in doc:
        try:
            reac = doc["reactant_matrix"]
            prod = doc["product_matrix"]
            rates = doc["rates"]
        except KeyError as exc:
            raise MalformedInput(f"matrix-form network missing key {exc}") from None
        for what, m in (("reactant matrix", reac), ("product matrix", prod)):
            if not isinstance(m, list) or not all(isinstance(row, list) for row in m):
                raise MalformedInput(f"{what} must be a list of rows")
            for r, row in enumerate(m[1:], start=1):
                if len(row) != len(m[0]):
                    raise ShapeMismatch(f"{what} row {r} has {len(row)} entries, row 0 has {len(m[0])}")
        if len(reac) != len(prod):
            raise ShapeMismatch(
                f"reactant matrix has {len(reac)} rows but product matrix has {len(prod)} rows"
            )
        for r, (a, b) in enumerate(zip(reac, prod)):
            if len(a) != len(b):
                raise ShapeMismatch(f"row {r}: reactant width {len(a)} != product width {len(b)}")
        return ReactionNetwork.from_matrices(reac, prod, rates, doc.get("species"))
    raise MalformedInput("network JSON needs 'reactions' or 'reactant_matrix'/'product_matrix'")


def _parse_json_reactions(doc):
    species = doc.get("species")
    reactions = doc["reactions"]
    if not isinstance(reactions, list) or not reactions:
        raise MalformedInput("'reactions' must be a nonempty list")
    if species is None:
        raise MalformedInput("reaction-list JSON requires a 'species' list")
    if not isinstance(species, list) or not all(isinstance(s, str) for s in species):
        raise MalformedInput("'species' must be a list of strings")
    if len(set(species)) != len(species):
        dup = next(s for s in species if species.count(s) > 1)
        raise DuplicateSpecies(f"species {dup!r} listed twice")
    col = {s: j for j, s in enumerate(species)}
    R, N = len(reactions), len(species)
    reac = [[0] * N for _ in range(R)]
    prod = [[0] * N for _ in range(R)]
    rates = []
    for r, rxn in enumerate(reactions):
        if not isinstance(rxn, dict):
            raise MalformedInput(f"reaction {r} must be an object")
        for key, target in (("reactants", reac), ("products", prod)):
            terms = rxn.get(key, {})
            if not isinstance(terms, dict):
                raise MalformedInput(f"reaction {r}: '{key}' must map species to coefficients")
            for name, coef in terms.items():
                if name not in col:
                    raise MalformedInput(f"reaction {r}: unknown species {name!r}")
                if isinstance(coef, bool) or not isinstance(coef, (int, float)):
                    raise MalformedInput(f"reaction {r}: coefficient of {name!r} is not a number")
                target[r][col[name]] = coef
        if "rate" not in rxn:
            raise MalformedInput(f"reaction {r}: missing 'rate'")
        rate = rxn["rate"]
        if isinstance(rate, bool) or not isinstance(rate, (int, float)):
            raise MalformedInput(f"reaction {r}: rate is not a number")
        rates.append(rate)
    return ReactionNetwork(tuple(species), reac, prod, rates)


_TERM = re.compile(r"^(?:(\d+)\s*\*\s*)?(\S.*?)$")


def _parse_side(text, col, lineno):
    text = text.strip()
    row = [0] * len(col)
    if text in ("0", ""):
        return row
    for term in re.split(r"\s+\+\s+", text):
        term = term.strip()
        m = _TERM.match(term)
        if not m:
            raise MalformedInput(f"line {lineno}: cannot parse term {term!r}")
        coef = int(m.group(1)) if m.group(1) else 1
        name = m.group(2).strip()
        if name not in col:
            if re.fullmatch(r"[\d.]+\s*\*.*", term):
                raise NonIntegerStoichiometry(f"line {lineno}: non-integer coefficient in {term!r}")
            raise MalformedInput(f"line {lineno}: unknown species {name!r}")
        row[col[name]] += coef
    return row


def _parse_tsv(text):
    blocks = []
    current = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            if current:
                blocks.append(current)
                current = []
            continue
        if line.lstrip().startswith("#"):
            continue
        current.append((lineno, line))
    if current:
        blocks.append(current)
    if len(blocks) != 2:
        raise MalformedInput(f"TSV network needs a species block and a reactions block, found {len(blocks)} blocks")
    (sp_head, *sp_lines), (rx_head, *rx_lines) = blocks
    if sp_head[1].strip().lower() != "species" or rx_head[1].strip().lower() != "reactions":
        raise MalformedInput("TSV blocks must start with 'species' and 'reactions' headers")
    species = [line.strip() for _, line in sp_lines]
    if len(set(species)) != len(species):
        dup = next(s for s in species if species.count(s) > 1)
        raise DuplicateSpecies(f"species {dup!r} listed twice")
    col = {s: j for j, s in enumerate(species)}
    reac, prod, rates = [], [], []
    for lineno, line in rx_lines:
        parts = line.split("\t")
        if len(parts) != 2:
            raise MalformedInput(f"line {lineno}: expected '<reaction><TAB><rate>'")
        eq, rate = parts
        if eq.count("->") != 1:
            raise MalformedInput(f"line {lineno}: reaction needs exactly one '->'")
        lhs, rhs = eq.split("->")
        reac.append(_parse_side(lhs, col, lineno))
        prod.append(_parse_side(rhs, col, lineno))
        try:
            rates.append(float(rate.strip()))
        except ValueError:
            raise MalformedInput(f"line {lineno}: rate {rate.strip()!r} is not a number") from None
    if not rates:
        raise MalformedInput("TSV network has no reactions")
    return ReactionNetwork(tuple(species), reac, prod, rates)


def _json_number(x):
    x = float(x)
    return int(x) if x.is_integer() and abs(x) < 1e16 else x


def save_network(net, format="json"):
    """Serialise a network; ``parse_network(save_network(net, f), f) == net``."""
    fmt = format.lower()
    if fmt == "json":
        reactions = []
        for r in range(net.n_reactions):
            reactions.append(
                {
                    "reactants": {s: int(c) for s, c in zip(net.species, net.reactants[r]) if c},
                    "products": {s: int(c) for s, c in zip(net.species, net.products[r]) if c},
                    "rate": float(net.rates[r]),
                }
            )
        return json.dumps({"species": list(net.species), "reactions": reactions}, indent=2) + "\n"
    if fmt == "tsv":
        lines = ["species", *net.species, "", "reactions"]
        for r in range(net.n_reactions):
            lhs = _side(net.reactants[r], net.species, "*")
            rhs = _side(net.products[r], net.species, "*")
            lines.append(f"{lhs} -> {rhs}\t{float(net.rates[r])!r}")
        return "\n".join(lines) + "\n"
    raise MalformedInput(f"unknown network format {format!r}")


def load_network(path, format=None):
    """Read a network file; the format defaults to the file extension."""
    path = str(path)
    if format is None:
        format = "tsv" if path.lower().endswith(".tsv") else "json"
    with open(path, encoding="utf-8") as fh:
        return parse_network(fh.read(), format)


# ---------------------------------------------------------------------------
# validation over a state space
# ---------------------------------------------------------------------------


def mass_action_factors(reactants, states):
    """Falling-factorial propensity factors ``prod_j x_j (x_j-1) ... (x_j-s_rj+1)``.

    Returns an array of shape ``(len(states), R)``.
    """
    states = np.asarray(states, dtype=float)
    out = np.ones((states.shape[0], reactants.shape[0]))
    for r in range(reactants.shape[0]):
        for j in range(reactants.shape[1]):
            for q in range(int(reactants[r, j])):
                out[:, r] *= states[:, j] - q
    return out


def change_groups(net):
    """Group reactions by net change vector, in order of first appearance.

    Returns ``(changes, group_of_reaction)`` where ``changes`` is ``(G, N)``.
    """
    changes = []
    lookup = {}
    groups = np.empty(net.n_reactions, dtype=np.int64)
    for r, row in enumerate(net.net):
        key = tuple(int(v) for v in row)
        if key not in lookup:
            lookup[key] = len(changes)
            changes.append(key)
        groups[r] = lookup[key]
    return np.array(changes, dtype=np.int64).reshape(-1, net.n_species), groups


def grouped_propensities(net, states, return_scale=False):
    """Summed propensity per change group at each state, shape ``(len(states), G)``.

    Sums within ``1e-12`` of the group's absolute propensity are snapped to zero, so
    split reactions that cancel exactly in real arithmetic do not come out as tiny
    negatives. With ``return_scale`` the absolute sums are returned as well.
    """
    changes, groups = change_groups(net)
    a = mass_action_factors(net.reactants, states) * net.rates
    out = np.zeros((a.shape[0], changes.shape[0]))
    scale = np.zeros_like(out)
    for r in range(net.n_reactions):
        out[:, groups[r]] += a[:, r]
        scale[:, groups[r]] += np.abs(a[:, r])
    out = np.where(np.abs(out) <= 1e-12 * scale, 0.0, out)
    return (out, scale) if return_scale else out


@dataclass(frozen=True)
class PropensityGroup:
    change: tuple
    reactions: tuple
    minimum: float
    argmin: tuple


@dataclass(frozen=True)
class ValidationReport:
    groups: tuple
    space_shape: tuple

    @property
    def valid(self):
        return all(g.minimum >= 0 for g in self.groups if any(g.change))

    @property
    def worst(self):
        moving = [g for g in self.groups if any(g.change)]
        return min(moving, key=lambda g: g.minimum) if moving else None

    def lines(self, species):
        out = []
        for g in self.groups:
            change = ", ".join(f"{s}{c:+d}" for s, c in zip(species, g.change) if c) or "no change"
            state = ", ".join(f"{s}={x}" for s, x in zip(species, g.argmin))
            flag = "ok" if g.minimum >= 0 or not any(g.change) else "NEGATIVE"
            out.append(
                f"change ({change}) reactions {list(g.reactions)}: min propensity "
                f"{format_number(g.minimum)} at ({state}) {flag}"
            )
        return out


def validate_over(net, space):
    """Check that every change group has nonnegative summed propensity on ``space``."""
    if space.n_species != net.n_species:
        raise DimensionMismatch(f"state space has {space.n_species} dimensions, network has {net.n_species} species")
    states = space.lattice()
    props = grouped_propensities(net, states)
    changes, groups = change_groups(net)
    out = []
    for g in range(changes.shape[0]):
        col = props[:, g]
        i = int(np.argmin(col))
        out.append(
            PropensityGroup(
                change=tuple(int(v) for v in changes[g]),
                reactions=tuple(int(r) for r in np.flatnonzero(groups == g)),
                minimum=float(col[i]),
                argmin=tuple(int(v) for v in states[i]),
            )
        )
    return ValidationReport(groups=tuple(out), space_shape=space.shape)


# ---------------------------------------------------------------------------
# conservation laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConservationLaw:
    """``coefficients . x == total`` for every reachable state ``x``."""

    coefficients: tuple
    total: float | None = None

    def __post_init__(self):
        coefs = tuple(int(c) for c in self.coefficients)
        if not any(coefs):
            raise MalformedInput("conservation law coefficients are all zero")
        object.__setattr__(self, "coefficients", coefs)
        if self.total is not None:
            total = float(self.total)
            if not math.isfinite(total) or total < 0:
                raise MalformedInput(f"conservation total must be finite and >= 0, got {self.total!r}")
            object.__setattr__(self, "total", total)

    def with_total(self, total):
        return ConservationLaw(self.coefficients, total)

    def holds_for(self, net):
        return all(int(np.dot(row, self.coefficients)) == 0 for row in net.net)

    def label(self, species):
        terms = []
        for c, s in zip(self.coefficients, species):
            if c == 1:
                terms.append(s)
            elif c:
                terms.append(f"{c}*{s}")
        return "+".join(terms).replace("+-", "-")


def _rref_nullspace(matrix):
    """Exact rational null space basis of an integer matrix (columns of the result)."""
    rows = [[Fraction(int(v)) for v in row] for row in matrix]
    n_cols = len(rows[0]) if rows else 0
    pivots = []
    r = 0
    for c in range(n_cols):
        piv = next((i for i in range(r, len(rows)) if rows[i][c] != 0), None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        lead = rows[r][c]
        rows[r] = [v / lead for v in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
        if r == len(rows):
            break
    free = [c for c in range(n_cols) if c not in pivots]
    basis = []
    for fc in free:
        vec = [Fraction(0)] * n_cols
        vec[fc] = Fraction(1)
        for i, pc in enumerate(pivots):
            vec[pc] = -rows[i][fc]
        basis.append(vec)
    return basis


def _primitive(vec):
    den = 1
    for v in vec:
        den = den * Fraction(v).denominator // math.gcd(den, Fraction(v).denominator)
    ints = [int(Fraction(v) * den) for v in vec]
    g = 0
    for v in ints:
        g = math.gcd(g, abs(v))
    ints = [v // g for v in ints] if g else ints
    first = next((v for v in ints if v), 0)
    if first < 0:
        ints = [-v for v in ints]
    return tuple(ints)


def _rank(vectors):
    if not vectors:
        return 0
    rows = [[Fraction(v) for v in vec] for vec in vectors]
    return len(rows[0]) - len(_rref_nullspace(rows))


def _semipositive_rays(S):
    """Extreme rays of ``{c >= 0 : S c = 0}`` by the double-description method (integer)."""
    N = S.shape[1]
    rays = [tuple(int(i == j) for i in range(N)) for j in range(N)]
    for row in S:
        row = [int(v) for v in row]
        dot = {ray: sum(a * b for a, b in zip(row, ray)) for ray in rays}
        zero = [r for r in rays if dot[r] == 0]
        pos = [r for r in rays if dot[r] > 0]
        neg = [r for r in rays if dot[r] < 0]
        new = list(zero)
        for p, n in itertools.product(pos, neg):
            combo = [dot[p] * b - dot[n] * a for a, b in zip(p, n)]
            new.append(_primitive(combo))
        # keep only rays with minimal support
        new = list(dict.fromkeys(new))
        supports = [frozenset(i for i, v in enumerate(r) if v) for r in new]
        rays = [
            r
            for r, s in zip(new, supports)
            if not any(t < s for t in supports)
        ]
    return rays


def conservation_laws(net):
    """Integer basis of the left null space of the net stoichiometry.

    Nonnegative (semipositive) laws are preferred, smallest support first. If the
    semipositive laws do not span the null space, mixed-sign integer vectors complete
    the basis. The returned laws have no totals.
    """
    S = net.net
    null = _rref_nullspace(S)
    dim = len(null)
    if dim == 0:
        return []
    candidates = sorted(
        _semipositive_rays(S),
        key=lambda r: (sum(1 for v in r if v), tuple(-v for v in r)),
    )
    chosen = []
    for ray in candidates:
        if _rank(chosen + [ray]) > len(chosen):
            chosen.append(ray)
        if len(chosen) == dim:
            break
    if len(chosen) < dim:
        for vec in null:
            prim = _primitive(vec)
            if _rank(chosen + [prim]) > len(chosen):
                chosen.append(prim)
            if len(chosen) == dim:
                break
    return [ConservationLaw(c) for c in chosen]


# ---------------------------------------------------------------------------
# closed -> open transformation
# ---------------------------------------------------------------------------


def _solve_fraction(matrix, rhs_cols):
    """Solve ``matrix @ X = rhs`` exactly; returns None if singular."""
    n = len(matrix)
    aug = [[Fraction(v) for v in row] + [Fraction(v) for v in rhs] for row, rhs in zip(matrix, rhs_cols)]
    for c in range(n):
        piv = next((i for i in range(c, n) if aug[i][c] != 0), None)
        if piv is None:
            return None
        aug[c], aug[piv] = aug[piv], aug[c]
        lead = aug[c][c]
        aug[c] = [v / lead for v in aug[c]]
        for i in range(n):
            if i != c and aug[i][c] != 0:
                f = aug[i][c]
                aug[i] = [a - f * b for a, b in zip(aug[i], aug[c])]
    return [row[n:] for row in aug]


def _ff_mul_1d(a, b):
    """x_(a) * x_(b) = sum_k C(a,k) C(b,k) k! x_(a+b-k)."""
    return {a + b - k: math.comb(a, k) * math.comb(b, k) * math.factorial(k) for k in range(min(a, b) + 1)}


def to_open_form(net, laws, dependent):
    """Eliminate dependent species using conservation laws with known totals.

    Each dependent species is solved from the laws as ``total-part - sum_j c_j X_j``
    over the independent species. Dependent products are dropped. A dependent reactant
    (coefficient 1) is replaced by its affine expression: the constant part multiplies
    the rate, and each linear part ``-c X_j`` becomes a separate reaction with rate
    ``-c k`` whose propensity factor gains ``X_j`` (added to both sides).
    """
    laws = list(laws)
    dependent = list(dependent)
    if len(laws) != len(dependent):
        raise UnresolvableDependency(f"{len(dependent)} dependent species for {len(laws)} conservation laws")
    if not laws:
        return net
    for law in laws:
        if law.total is None:
            raise TotalMissing(f"conservation law {law.label(net.species)} has no total")
        if len(law.coefficients) != net.n_species:
            raise DimensionMismatch("conservation law length does not match species count")
        if not law.holds_for(net):
            raise UnresolvableDependency(f"{law.label(net.species)} is not conserved by the network")
    if len(set(dependent)) != len(dependent):
        raise UnresolvableDependency("dependent species listed twice")
    dep_idx = [net.index(s) for s in dependent]
    ind_idx = [j for j in range(net.n_species) if j not in dep_idx]
    if not ind_idx:
        raise UnresolvableDependency("no independent species would remain")

    # x_D = L_D^{-1} (totals - L_I x_I)
    L_D = [[law.coefficients[j] for j in dep_idx] for law in laws]
    rhs = [[Fraction(law.total)] + [-Fraction(law.coefficients[j]) for j in ind_idx] for law in laws]
    sol = _solve_fraction(L_D, rhs)
    if sol is None:
        raise UnresolvableDependency(
            f"the conservation laws do not determine {', '.join(dependent)} from the remaining species"
        )
    affine = {d: sol[i] for i, d in enumerate(dep_idx)}  # [const, coef per independent species]

    n_ind = len(ind_idx)
    new_reac, new_prod, new_rates = [], [], []
    for r in range(net.n_reactions):
        dep_reactants = [d for d in dep_idx if net.reactants[r, d] > 0]
        for d in dep_reactants:
            if net.reactants[r, d] >= 2:
                raise NonlinearDependence(
                    f"reaction {r} ({net.reaction_strings()[r]}) consumes {net.reactants[r, d]} of "
                    f"dependent species {net.species[d]!r}; only coefficient 1 can be substituted"
                )
        base_reac = [int(net.reactants[r, j]) for j in ind_idx]
        base_prod = [int(net.products[r, j]) for j in ind_idx]
        # polynomial in falling-factorial basis of independent species: {multi-index: coef}
        poly = {tuple(base_reac): Fraction(1)}
        for d in dep_reactants:
            const, *lin = affine[d]
            nxt = {}
            for idx, c in poly.items():
                if const:
                    nxt[idx] = nxt.get(idx, Fraction(0)) + c * const
                for q, cq in enumerate(lin):
                    if not cq:
                        continue
                    for deg, mult in _ff_mul_1d(idx[q], 1).items():
                        new = idx[:q] + (deg,) + idx[q + 1:]
                        nxt[new] = nxt.get(new, Fraction(0)) + c * cq * mult
            poly = nxt
        k = Fraction(float(net.rates[r]))
        for idx, c in poly.items():
            if c == 0:
                continue
            extra = [idx[q] - base_reac[q] for q in range(n_ind)]
            new_reac.append(list(idx))
            new_prod.append([base_prod[q] + extra[q] for q in range(n_ind)])
            new_rates.append(float(c * k))
    species = tuple(net.species[j] for j in ind_idx)
    keep = [i for i in range(len(new_rates)) if any(new_reac[i]) or any(new_prod[i])]
    return ReactionNetwork(
        species,
        [new_reac[i] for i in keep],
        [new_prod[i] for i in keep],
        [new_rates[i] for i in keep],
    )
