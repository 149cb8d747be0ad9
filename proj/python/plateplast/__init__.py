"""Elastoplastic thin plates: limit models, moment reductions and recovery sequences.

Reports are returned as dicts with the same layout as the CLI's JSON output.
Non-finite numbers appear as the strings "inf", "-inf" and "nan".
"""

import json

import numpy as np

from . import _core
from ._core import ConfigError, Error, HypothesisError, dissipation, plastic_prox, reduce_tensor

__all__ = [
    "ConfigError",
    "Error",
    "HypothesisError",
    "SCHEMA_VERSION",
    "check_reduction",
    "dissipation",
    "parse_config",
    "plastic_prox",
    "recovery_study",
    "reduce_tensor",
    "solve_3d",
    "solve_limit",
]

SCHEMA_VERSION = _core.schema_version


def _text(config):
    """Accept INI text or a path to an INI file."""
    if "\n" in config or "=" in config:
        return config
    with open(config, encoding="utf-8") as f:
        return f.read()


def parse_config(config):
    """Validated config with defaults filled in."""
    return json.loads(_core.parse_config(_text(config)))


def solve_limit(config):
    """Minimize the limit functional.

    Returns (report, fields); fields holds nodal ux, uy, v and p with shape
    (n_nodes, n_x3, 5) in orthonormal trace-free coordinates.
    """
    report, fields = _core.solve_limit(_text(config))
    n_x3 = fields.pop("n_x3")
    fields["p"] = np.asarray(fields["p"]).reshape(-1, n_x3, 5)
    return json.loads(report), fields


def check_reduction(config, kind):
    """Compare the full limit minimum with its membrane or bending reduction."""
    return json.loads(_core.check_reduction(_text(config), kind))


def recovery_study(config, eps=None):
    """Recovery-sequence energies of the limit minimizer over a thickness schedule."""
    return json.loads(_core.recovery_study(_text(config), list(eps or [])))


def solve_3d(config, eps=0.05, nz=5):
    """Exploratory direct minimization of the scaled 3D energy."""
    return json.loads(_core.solve_3d(_text(config), eps, nz))
