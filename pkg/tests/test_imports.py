"""
Import every module and check the signatures the CLI and the API depend on.
"""
import importlib
import inspect

import pytest

MODULES = [
    "src.settings",
    "src.services.settings",
    "src.utils.constants",
    "src.utils.helpers",
    "src.egs.errors",
    "src.egs.interval",
    "src.egs.ntheory",
    "src.egs.certify",
    "src.egs.greedy",
    "src.egs.linprog",
    "src.egs.upperbound",
    "src.egs.rearrange",
    "src.egs.repair",
    "src.egs.constants",
    "main.main",
    "main.app",
]


@pytest.mark.parametrize("name", MODULES)
def test_module_imports(name):
    assert importlib.import_module(name) is not None


@pytest.mark.parametrize("module, function, parameters", [
    ("src.egs.greedy", "hint_chain", ["N_start", "N_end", "mode", "hints"]),
    ("src.egs.linprog", "build_model", ["N", "t", "policy"]),
    ("src.egs.rearrange", "check_finite_crit", ["D", "alpha", "N", "W", "L_exp", "mode", "rounding"]),
    ("src.egs.repair", "build_params", ["N_range", "t_rule", "A", "K", "L", "bits"]),
    ("src.egs.constants", "compute_c1_suite", ["tol", "accelerate", "K", "Nfreq", "bits", "threads"]),
    ("src.egs.upperbound", "upper_crit_test", ["N", "t", "mode"]),
])
def test_signatures(module, function, parameters):
    signature = inspect.signature(getattr(importlib.import_module(module), function))
    for name in parameters:
        assert name in signature.parameters, f"{function} lacks {name}"
