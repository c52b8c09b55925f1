# Copyright 2026 The kanon-ols Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""OLS inference on k-anonymized equivalence-class tables."""

import json

from ._core import (
    ConsistencyError,
    DataMinimizationError,
    DesignError,
    InsufficientDfError,
    KAnonymityError,
    KanonError,
    NotSupportedError,
    ParseError,
    RangeError,
    SchemaError,
    SingularMatrixError,
    SparseCellError,
    StaleTssError,
    Table,
    aggregate,
    empty_table,
    merge,
    read_micro_csv,
    read_table,
    release,
    replay,
    write_table,
)
from . import _core

__all__ = [
    "ConsistencyError",
    "DataMinimizationError",
    "DesignError",
    "InsufficientDfError",
    "KAnonymityError",
    "KanonError",
    "NotSupportedError",
    "ParseError",
    "RangeError",
    "SchemaError",
    "SingularMatrixError",
    "SparseCellError",
    "StaleTssError",
    "Table",
    "adjust",
    "adjust_p",
    "aggregate",
    "empty_table",
    "merge",
    "partial_f",
    "read_micro_csv",
    "read_table",
    "regress",
    "release",
    "replay",
    "screen",
    "write_table",
]


def regress(table, spec=None):
    """Fits the design described by `spec` (dict or None for all main effects)."""
    if spec is None:
        spec = {"main_effects": [table.treatment_factor] +
                [f for f in table.factors if f != table.treatment_factor]}
    return json.loads(_core._regress(table, json.dumps(spec)))


def partial_f(table, factor_a, factor_b, endpoint=""):
    return json.loads(_core._partial_f(table, factor_a, factor_b, endpoint))


def screen(tables, method="bh", alpha=0.05):
    """tables maps (factor_a, factor_b) to a Table."""
    return json.loads(_core._screen(dict(tables), method, alpha))


def adjust(table, covariate, values=None, endpoint="", pate=True):
    return json.loads(
        _core._adjust(table, covariate, dict(values or {}), endpoint, pate))


def adjust_p(p_values, method="bh"):
    return _core._adjust_p(list(p_values), method)
