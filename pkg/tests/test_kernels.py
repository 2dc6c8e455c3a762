import subprocess
import sys

import numpy as np
import pytest

from tubecert import _kernels, _pykernels


def test_backend_switching():
    names = _kernels.available_backends()
    assert "python" in names
    prev = _kernels.use_backend("python")
    assert _kernels.backend() == "python"
    _kernels.use_backend(prev)
    assert _kernels.backend() == prev
    with pytest.raises(ValueError):
        _kernels.use_backend("fortran")


def test_zonotope_support_matches_numpy(rng, kernel_backend):
    D = rng.normal(size=(50, 3))
    G = rng.normal(size=(3, 7))
    np.testing.assert_allclose(_kernels.zonotope_support(D, G), np.abs(D @ G).sum(axis=1), rtol=1e-13)


def test_zonotope_support_accepts_views(rng, kernel_backend):
    D = rng.normal(size=(10, 4))[:, ::2]  # non-contiguous
    G = np.asfortranarray(rng.normal(size=(2, 3)))
    G.setflags(write=False)
    np.testing.assert_allclose(_kernels.zonotope_support(D, G), np.abs(D @ G).sum(axis=1), rtol=1e-13)


def test_max_violation(rng, kernel_backend):
    A = rng.normal(size=(9, 3))
    x = rng.normal(size=3)
    b = rng.normal(size=9)
    r = A @ x - b
    idx, val = _kernels.max_violation(A, x, b)
    assert idx == int(np.argmax(r))
    assert val == pytest.approx(float(r.max()), rel=1e-13)


def test_qp_status_codes_are_shared():
    assert (_kernels.QP_OPTIMAL, _kernels.QP_INFEASIBLE) == (_pykernels.QP_OPTIMAL, _pykernels.QP_INFEASIBLE)


def test_qp_kernel_reports_active_set(kernel_backend):
    Hinv = np.eye(2)
    x0 = np.array([3.0, 0.0])  # unconstrained minimiser of 0.5|x|^2 - 3 x1
    x, lam, active, it, status = _kernels.qp_ineq(Hinv, x0, np.array([[1.0, 0.0]]), np.array([1.0]), 1e-12, 50)
    assert status == _kernels.QP_OPTIMAL
    np.testing.assert_allclose(x, [1.0, 0.0])
    assert lam[0] == pytest.approx(2.0)
    assert list(active) == [0] and it >= 1


def test_fallback_selected_without_extension():
    code = ("import sys; sys.modules['tubecert._ckernels'] = None\n"
            "import tubecert\n"
            "from tubecert import netmodel, tubes\n"
            "assert tubecert.backend() == 'python', tubecert.backend()\n"
            "assert tubecert.available_backends() == ['python']\n"
            "rep = tubes.theorem2_certificate(netmodel.builtin_scenarios()['trucks-case1'])\n"
            "print(rep.conclusion)\n")
    r = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert r.stdout.strip() == "CERTIFIED"
