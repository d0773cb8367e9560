"""Multiplicative forms on local Lie groupoids.

Configurations are dicts in the same format as the JSON files accepted by the
``mulform`` command-line tool; see ``schema()``.
"""

import json

from . import _mulform
from ._mulform import ConfigError, MathError, PreconditionError, diff_expr, eval_expr

__all__ = [
    "ConfigError",
    "MathError",
    "PreconditionError",
    "check",
    "convergence",
    "diff_expr",
    "eval_expr",
    "evaluate",
    "schema",
]


def _text(config):
    return config if isinstance(config, str) else json.dumps(config)


def schema():
    return json.loads(_mulform.schema())


def check(config, seed=None, threads=0):
    """Run the check pipeline and return the report dict."""
    return json.loads(_mulform.check(_text(config), seed, threads))


def convergence(config, ladder=None, threads=0):
    return json.loads(_mulform.convergence(_text(config), ladder, threads))


def evaluate(config, point, vectors=(), compose=None):
    """omega, d omega and kind-specific values at a total-space point."""
    return json.loads(_mulform.evaluate(_text(config), list(point), [list(v) for v in vectors], compose))
