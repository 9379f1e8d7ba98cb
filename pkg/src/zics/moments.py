"""Factorial-moment basis and stationary moment equations.

A multi-index ``m = (m_1, ..., m_N)`` labels the factorial moment
``E[prod_j X_j (X_j - 1) ... (X_j - m_j + 1)]``. Equations are derived by applying the
CME generator to each falling-factorial product and expanding the result exactly, in
rational arithmetic, back into the falling-factorial basis.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import DimensionMismatch
from .network import format_number


# ---------------------------------------------------------------------------
# combinatorics
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def stirling1(n, k):
    """Signed Stirling numbers of the first kind: ``x_(n) = sum_k s(n, k) x^k``."""
    if n == k:
        return 1
    if n == 0 or k == 0:
        return 0
    return stirling1(n - 1, k - 1) - (n - 1) * stirling1(n - 1, k)


@lru_cache(maxsize=None)
def stirling2(n, k):
    """Stirling numbers of the second kind: ``x^n = sum_k S(n, k) x_(k)``."""
    if n == k:
        return 1
    if n == 0 or k == 0:
        return 0
    return k * stirling2(n - 1, k) + stirling2(n - 1, k - 1)


def falling(x, m):
    """Falling factorial ``x (x-1) ... (x-m+1)`` for scalar or array ``x``."""
    out = np.ones_like(np.asarray(x, dtype=float)) if np.ndim(x) else 1
    for q in range(m):
        out = out * (x - q)
    return out


def monomial_to_falling(coeffs):
    """Convert ``sum_n a_n x^n`` to falling-factorial coefficients ``sum_k b_k x_(k)``."""
    out = [Fraction(0)] * len(coeffs)
    for n, a in enumerate(coeffs):
        if a:
            for k in range(n + 1):
                out[k] += a * stirling2(n, k)
    return out


def falling_to_monomial(coeffs):
    out = [Fraction(0)] * len(coeffs)
    for n, b in enumerate(coeffs):
        if b:
            for k in range(n + 1):
                out[k] += b * stirling1(n, k)
    return out


def _shift_1d(m, c):
    """(x + c)_(m) = sum_k C(m, k) (c)_(m-k) x_(k)  (Chu-Vandermonde)."""
    return {k: math.comb(m, k) * falling(c, m - k) for k in range(m + 1)}


def _product_1d(a, b):
    """x_(a) x_(b) = sum_k C(a, k) C(b, k) k! x_(a+b-k)."""
    return {a + b - k: math.comb(a, k) * math.comb(b, k) * math.factorial(k) for k in range(min(a, b) + 1)}


# ---------------------------------------------------------------------------
# basis
# ---------------------------------------------------------------------------


def order(index):
    return sum(index)


def graded_indices(n_species, max_order, min_order=1):
    """Multi-indices ordered by total order, then descending lexicographically."""
    out = []
    for o in range(min_order, max_order + 1):
        level = [m for m in itertools.product(range(o + 1), repeat=n_species) if sum(m) == o]
        out.extend(sorted(level, reverse=True))
    return out


def _graded_key(index):
    return (sum(index), tuple(-v for v in index))


def moment_label(index, species, brackets="{}"):
    """Label such as ``{X^2 Y}`` for the factorial moment (2, 1)."""
    parts = []
    for m, s in zip(index, species):
        if m == 1:
            parts.append(s)
        elif m > 1:
            parts.append(f"{s}^{m}")
    return brackets[0] + (" ".join(parts) if parts else "1") + brackets[1]


@dataclass(frozen=True)
class MomentBasis:
    n_species: int
    closure_order: int
    lower: tuple
    higher: tuple = ()

    @property
    def psi(self):
        return len(self.lower)

    @property
    def psi_prime(self):
        return len(self.higher)

    def labels(self, species, which="lower", brackets="{}"):
        return [moment_label(i, species, brackets) for i in getattr(self, which)]

    def position(self, index):
        return self.lower.index(tuple(index))


def build_basis(n_species, closure_order):
    if n_species < 1:
        raise ValueError("n_species must be >= 1")
    if closure_order < 1:
        raise ValueError("closure_order must be >= 1")
    lower = tuple(graded_indices(n_species, closure_order))
    return MomentBasis(n_species, closure_order, lower, ())


# ---------------------------------------------------------------------------
# equations
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MomentEquations:
    """``d mu / dt = A mu + A_prime mu_prime + mu_c`` for the lower moments of ``basis``."""

    basis: MomentBasis
    A: np.ndarray
    A_prime: np.ndarray
    mu_c: np.ndarray


def _poly_mul(p, q):
    out = {}
    for a, ca in p.items():
        for b, cb in q.items():
            key = a + b
            out[key] = out.get(key, 0) + ca * cb
    return out


def _generator_row(index, reactants, changes, rates):
    """Exact falling-factorial expansion of ``sum_r k_r g_r(X) (f(X + nu_r) - f(X))``."""
    total = {}
    N = len(index)
    for s, nu, k in zip(reactants, changes, rates):
        if not any(nu):
            continue
        # per-species expansion of the shifted factor times the propensity factor
        shifted = {(): 1}
        plain = {(): 1}
        for j in range(N):
            sh = {}
            for deg, c in _shift_1d(index[j], int(nu[j])).items():
                for d2, c2 in _product_1d(deg, int(s[j])).items():
                    sh[(d2,)] = sh.get((d2,), 0) + c * c2
            shifted = _poly_mul(shifted, sh)
            plain = _poly_mul(plain, {(d2,): c2 for d2, c2 in _product_1d(index[j], int(s[j])).items()})
        for key, c in plain.items():
            shifted[key] = shifted.get(key, 0) - c
        kf = Fraction(float(k))
        for key, c in shifted.items():
            if c:
                total[key] = total.get(key, Fraction(0)) + kf * c
    return {key: c for key, c in total.items() if c != 0}


def generate_equations(net, basis):
    """Stationary factorial-moment equations of ``net`` at the basis closure order."""
    if basis.n_species != net.n_species:
        raise DimensionMismatch(f"basis has {basis.n_species} species, network has {net.n_species}")
    changes = net.net
    rows = [_generator_row(idx, net.reactants, changes, net.rates) for idx in basis.lower]
    M = basis.closure_order
    higher = sorted({key for row in rows for key in row if sum(key) > M}, key=_graded_key)
    pos_low = {idx: i for i, idx in enumerate(basis.lower)}
    pos_high = {idx: i for i, idx in enumerate(higher)}
    psi = len(basis.lower)
    A = [[Fraction(0)] * psi for _ in range(psi)]
    Ap = [[Fraction(0)] * len(higher) for _ in range(psi)]
    c = [Fraction(0)] * psi
    for i, row in enumerate(rows):
        for key, v in row.items():
            o = sum(key)
            if o == 0:
                c[i] += v
            elif o <= M:
                A[i][pos_low[key]] += v
            else:
                Ap[i][pos_high[key]] += v
    full = MomentBasis(basis.n_species, M, basis.lower, tuple(higher))
    to_float = lambda m: np.array([[float(v) for v in row] for row in m], dtype=float).reshape(len(m), -1)
    return MomentEquations(
        basis=full,
        A=to_float(A),
        A_prime=to_float(Ap).reshape(psi, len(higher)),
        mu_c=np.array([float(v) for v in c]),
    )


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def _render_row(i, eqs, species):
    terms = []
    if eqs.mu_c[i]:
        terms.append((eqs.mu_c[i], None))
    for j, idx in enumerate(eqs.basis.lower):
        if eqs.A[i, j]:
            terms.append((eqs.A[i, j], moment_label(idx, species, "<>")))
    for j, idx in enumerate(eqs.basis.higher):
        if eqs.A_prime[i, j]:
            terms.append((eqs.A_prime[i, j], moment_label(idx, species, "<>")))
    if not terms:
        return "0"
    out = []
    for n, (c, label) in enumerate(terms):
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        body = format_number(mag) if label is None else (label if mag == 1 else f"{format_number(mag)}*{label}")
        if n == 0:
            out.append(body if sign == "+" else f"-{body}")
        else:
            out.append(f" {sign} {body}")
    return "".join(out)


def export_equations(eqs, species, format="text"):
    """Render moment equations as ``'text'`` ODEs, ``'json'`` or labelled ``'csv'``."""
    basis = eqs.basis
    low = basis.labels(species)
    high = basis.labels(species, "higher")
    fmt = format.lower()
    if fmt == "text":
        lines = [
            f"d{moment_label(idx, species, '<>')}/dt = {_render_row(i, eqs, species)}"
            for i, idx in enumerate(basis.lower)
        ]
        return "\n".join(lines) + "\n"
    if fmt == "json":
        doc = {
            "species": list(species),
            "closure_order": basis.closure_order,
            "psi": basis.psi,
            "psi_prime": basis.psi_prime,
            "labels_lower": low,
            "labels_higher": high,
            "A": eqs.A.tolist(),
            "A_prime": eqs.A_prime.tolist() if basis.psi_prime else [],
            "mu_c": eqs.mu_c.tolist(),
        }
        return json.dumps(doc, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["equation", *low, *high, "constant"])
        for i, label in enumerate(low):
            writer.writerow(
                [f"d{label}/dt"]
                + [repr(float(v)) for v in eqs.A[i]]
                + [repr(float(v)) for v in eqs.A_prime[i]]
                + [repr(float(eqs.mu_c[i]))]
            )
        return buf.getvalue()
    raise ValueError(f"unknown export format {format!r}")
