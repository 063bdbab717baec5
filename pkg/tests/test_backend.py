import os
import subprocess
import sys

import numpy as np
import pytest

from heisenberg_mf import _backend
from heisenberg_mf.heisenberg import ring_log_mean


def test_python_backend_always_available():
    assert "python" in _backend.available()
    assert _backend.BACKEND in _backend.available()


def test_forced_backend_via_environment():
    env = dict(os.environ, HEISENBERG_MF_BACKEND="python")
    r = subprocess.run([sys.executable, "-c", "import heisenberg_mf; print(heisenberg_mf.BACKEND)"],
                       capture_output=True, text=True, env=env)
    assert r.stdout.strip() == "python"
    env["HEISENBERG_MF_BACKEND"] = "fortran"
    r = subprocess.run([sys.executable, "-c", "import heisenberg_mf"], capture_output=True, text=True, env=env)
    assert r.returncode != 0 and "unknown backend" in r.stderr


@pytest.mark.parametrize("name", _backend.available())
def test_ring_log_sum_matches_closed_form(name):
    k = _backend.load(name)
    rng = np.random.default_rng(0)
    s_t, t_t = rng.uniform(0, 4, 5), rng.uniform(-3, 3, 5)
    S, T = rng.uniform(0, 4, (3, 4)), rng.uniform(-3, 3, (3, 4))
    W = rng.random((3, 4))
    out = np.empty((5, 3))
    k.ring_log_sum(s_t, t_t, S, T, W, out)
    ref = np.array([[sum(W[j, q] * ring_log_mean(s_t[i], t_t[i], S[j, q], T[j, q]) for q in range(4))
                     for j in range(3)] for i in range(5)])
    assert np.allclose(out, ref, rtol=1e-13, atol=1e-13)
    pairs = np.empty(3)
    k.ring_log_pairs(s_t[:3], t_t[:3], S, T, W, pairs)
    assert np.allclose(pairs, np.diag(ref[:3]), rtol=1e-13, atol=1e-13)


@pytest.mark.skipif("compiled" not in _backend.available(), reason="compiled core not built")
def test_compiled_rejects_callable_weight():
    k = _backend.load("compiled")
    X = np.zeros((2, 3))
    X[1, 0] = 0.5
    with pytest.raises(Exception):
        k.metropolis_sweeps(X, np.zeros((1, 2, 3)), np.zeros((1, 2)), 1.0, (0.0, 0.0, 0.0), 1.0, 0, 0, 1,
                            np.empty((1, 2, 3)), lambda x, y, t: 0.0)
