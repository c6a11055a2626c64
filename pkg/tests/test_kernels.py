import os
import subprocess
import sys

import numpy as np
import pytest

from qtmhalt.analysis import _kernels
from qtmhalt.analysis._kernels import window_triplets
from qtmhalt.corpus import random_corpus
from qtmhalt.machines import load_bundled

needs_numba = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not importable")


def _same(a, b):
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


@needs_numba
@pytest.mark.parametrize("name", ["two_phase", "permutation", "halt_violator"])
@pytest.mark.parametrize("radius", [0, 1, 2])
def test_backends_agree_on_bundled(name, radius):
    spec = load_bundled(name)
    _same(window_triplets(spec, radius, "numba"), window_triplets(spec, radius, "numpy"))


@needs_numba
def test_backends_agree_on_random_machines():
    for spec in random_corpus(5, 8):
        _same(window_triplets(spec, 1, "numba"), window_triplets(spec, 1, "numpy"))


def test_missing_rules_flagged():
    spec = load_bundled("two_phase")
    rules = dict(spec.rules)
    del rules[(0, 0, 0)]
    partial = type(spec)(spec.alphabet_size, spec.state_count, spec.blank, rules)
    *_, missing = window_triplets(partial, 1, "numpy")
    assert missing.any() and not missing.all()


def test_radius_zero_column_exactness():
    # a single cell: every move leaves the window
    rows, cols, vals, exact, missing = window_triplets(load_bundled("two_phase"), 0, "numpy")
    assert len(rows) == 0 and not exact.any()


def test_unknown_backend():
    with pytest.raises(ValueError):
        window_triplets(load_bundled("two_phase"), 1, "fortran")


def test_env_flag_selects_fallback():
    code = "from qtmhalt.analysis import _kernels as k; print(k.HAVE_NUMBA)"
    env = dict(os.environ, QTMHALT_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
    code = ("from qtmhalt.analysis._kernels import window_triplets\n"
            "from qtmhalt.machines import load_bundled\n"
            "print(len(window_triplets(load_bundled('two_phase'), 1)[0]))")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert int(out.stdout) > 0
