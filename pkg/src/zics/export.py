"""Result files shared by the solver and the oracles.

Every CSV is UTF-8 with LF line endings and floats written with ``repr`` so values
round-trip exactly and identical inputs give byte-identical files.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os

import numpy as np

from .errors import DimensionMismatch, MalformedInput
from .moments import build_basis, moment_label

MARGINAL_HEADER = ["species", "count", "probability"]
MOMENT_HEADER = ["moment_label", "value", "lambda"]


def _num(x):
    return repr(float(x))


def _csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def marginals_csv(dist, species):
    rows = [MARGINAL_HEADER]
    for j, name in enumerate(species):
        for count, p in zip(dist.marginal_counts(j), dist.marginal(j)):
            rows.append([name, int(count), _num(p)])
    return _csv(rows)


def distribution_csv(dist, species):
    rows = [[*species, "probability"]]
    for state, p in dist.items():
        rows.append([*state, _num(p)])
    return _csv(rows)


def moments_csv(species, indices, values, lambdas=None, lambda0=None):
    """Rows ``{1}`` (normaliser), then one per multi-index; ``lambda`` blank when absent."""
    rows = [MOMENT_HEADER, ["{1}", _num(1.0), "" if lambda0 is None else _num(lambda0)]]
    for k, (idx, v) in enumerate(zip(indices, values)):
        lam = "" if lambdas is None or k >= len(lambdas) else _num(lambdas[k])
        rows.append([moment_label(idx, species), _num(v), lam])
    return _csv(rows)


def solution_moments_csv(sol, species):
    basis = sol.equations.basis
    indices = list(basis.lower) + list(basis.higher)
    values = list(sol.moments_lower) + list(sol.moments_higher)
    return moments_csv(species, indices, values, list(sol.lambdas), sol.lambda0)


def lambdas_document(sol, species):
    return {
        "order": sol.order_used,
        "labels": sol.basis.labels(species),
        "lambdas": [float(v) for v in sol.lambdas],
    }


def read_lambdas(path, species):
    """Load a warm-start file and check its labels against ``species``."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MalformedInput(f"{path}: invalid JSON: {exc}") from exc
    try:
        order = int(doc["order"])
        labels = list(doc["labels"])
        lam = [float(v) for v in doc["lambdas"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedInput(f"{path}: expected keys order, labels, lambdas") from exc
    expected = build_basis(len(species), order).labels(species)
    if labels != expected or len(lam) != len(expected):
        raise DimensionMismatch(f"{path}: multiplier labels do not match an order-{order} basis for species {list(species)}")
    return lam


def read_marginals(path):
    """Parse a marginals CSV into ``{species: (counts, probabilities)}``."""
    out = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MARGINAL_HEADER:
            raise MalformedInput(f"{path}: header must be {','.join(MARGINAL_HEADER)}")
        for row in reader:
            name, count, p = row
            c, v = out.setdefault(name, ([], []))
            c.append(int(count))
            v.append(float(p))
    return {k: (np.array(c), np.array(v)) for k, (c, v) in out.items()}


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_json(path, doc):
    write_text(path, json.dumps(doc, indent=2) + "\n")


def plot_marginals(dist, species, outdir, overlay=None, label="closure"):
    """One SVG line chart per species; ``overlay`` is a marginals CSV drawn as points.

    SVG ids and metadata are fixed so reruns produce identical files.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ref = read_marginals(overlay) if overlay else {}
    paths = []
    with matplotlib.rc_context({"svg.hashsalt": "zics", "svg.fonttype": "none"}):
        for j, name in enumerate(species):
            fig, ax = plt.subplots(figsize=(5, 3.5))
            ax.plot(dist.marginal_counts(j), dist.marginal(j), "-", lw=1.5, label=label)
            if name in ref:
                ax.plot(*ref[name], "o", ms=3, label=os.path.basename(overlay))
            ax.set_xlabel(f"{name} (molecules)")
            ax.set_ylabel("probability")
            ax.legend(frameon=False)
            fig.tight_layout()
            safe = "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in name)
            path = os.path.join(outdir, f"marginal_{safe}.svg")
            fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
            plt.close(fig)
            paths.append(path)
    return paths
