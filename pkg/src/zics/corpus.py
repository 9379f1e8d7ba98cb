"""Bundled example networks with recommended state spaces."""
import json
from importlib import resources

from .network import parse_network
from .statespace import parse_space

_PKG = "zics.data.networks"


def _read(name):
    return resources.files(_PKG).joinpath(name).read_text(encoding="utf-8")


def names():
    """Names of the solvable corpus networks, in a fixed order."""
    return list(json.loads(_read("corpus.json")))


def path(name):
    """Filesystem path of a bundled file, e.g. ``path('wilhelm.json')``."""
    return str(resources.files(_PKG).joinpath(name))


def load(name):
    """Return ``(network, state_space)`` for a corpus entry.

    Files outside the index (such as the closed enzyme networks) can be loaded with
    :func:`load_file`.
    """
    entry = json.loads(_read("corpus.json"))[name]
    net = parse_network(_read(entry["file"]), "json")
    return net, parse_space(entry["space"], net.species)


def load_file(filename):
    fmt = "tsv" if filename.endswith(".tsv") else "json"
    return parse_network(_read(filename), fmt)
