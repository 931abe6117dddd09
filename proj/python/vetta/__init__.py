"""Python access to the vessel tree autoencoder core.

Trees cross the boundary as JSON text in the same format the CLI reads and
writes; the helpers here convert to and from plain dicts.
"""

import json

from ._core import (
    TreeError,
    TreeModel,
    UsageError,
    compare_trees as _compare_trees,
    invert_fourier,
    lift_fourier,
    linear_sum_assignment,
    run_cli,
    synthetic_tree as _synthetic_tree,
    top_k_matching,
    validate_tree as _validate_tree,
)

__all__ = [
    "TreeError",
    "TreeModel",
    "UsageError",
    "compare_trees",
    "invert_fourier",
    "lift_fourier",
    "linear_sum_assignment",
    "run_cli",
    "synthetic_tree",
    "top_k_matching",
    "validate_tree",
]


def _text(tree):
    return tree if isinstance(tree, str) else json.dumps(tree)


def synthetic_tree(seed, dims=2, depth=4):
    return json.loads(_synthetic_tree(seed, dims, depth))


def validate_tree(tree):
    """Returns (ok, reason); unreadable documents are reported as invalid."""
    return _validate_tree(_text(tree))


def compare_trees(prediction, target):
    return _compare_trees(_text(prediction), _text(target))
