import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from poolrelax import _kernels
from poolrelax.conic.kkt import LdlFactor

compiled_only = pytest.mark.skipif(_kernels.compiled is None, reason="compiled extension not built")


def quasi_definite(n1, n2, density, seed):
    """Upper-triangle COO of ``[[H, B'], [B, -E]]`` with ``H, E`` positive definite."""
    rng = np.random.default_rng(seed)
    H = sp.random(n1, n1, density=density, random_state=rng)
    H = (H @ H.T + sp.identity(n1)).tocoo()
    B = sp.random(n2, n1, density=density, random_state=rng).tocoo()
    E = sp.diags(rng.uniform(0.5, 2.0, n2)).tocoo()
    K = sp.bmat([[H, B.T], [B, -E]]).tocsr()
    U = sp.triu(K).tocoo()
    signs = np.r_[np.ones(n1), -np.ones(n2)]
    return K, U.row, U.col, U.data, signs


@pytest.mark.parametrize("kern", [_kernels.fallback, pytest.param(_kernels.compiled, marks=compiled_only)],
                         ids=["python", "compiled"])
@pytest.mark.parametrize("n1,n2,density", [(5, 3, 0.4), (30, 12, 0.1), (80, 40, 0.03)])
def test_solve_matches_dense(kern, n1, n2, density):
    K, r, c, v, signs = quasi_definite(n1, n2, density, seed=n1)
    f = LdlFactor(n1 + n2, r, c, signs, kernels=kern)
    assert f.factor(v) == 0
    b = np.arange(n1 + n2, dtype=float) - 3.0
    np.testing.assert_allclose(f.solve(b), np.linalg.solve(K.toarray(), b), rtol=1e-9, atol=1e-10)
    np.testing.assert_allclose(f.matvec(b), K @ b, rtol=1e-12, atol=1e-12)


@compiled_only
@given(st.integers(2, 25), st.integers(1, 15), st.floats(0.05, 0.5), st.integers(0, 10_000))
def test_compiled_and_python_kernels_agree(n1, n2, density, seed):
    _, r, c, v, signs = quasi_definite(n1, n2, density, seed)
    fc = LdlFactor(n1 + n2, r, c, signs, kernels=_kernels.compiled)
    fp = LdlFactor(n1 + n2, r, c, signs, kernels=_kernels.fallback)
    np.testing.assert_array_equal(fc.perm, fp.perm)
    np.testing.assert_array_equal(fc.parent, fp.parent)
    fc.factor(v)
    fp.factor(v)
    np.testing.assert_array_equal(fc.Lp, fp.Lp)
    np.testing.assert_array_equal(fc.Li, fp.Li)
    np.testing.assert_allclose(fc.Lx, fp.Lx, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(fc.D, fp.D, rtol=1e-12, atol=1e-14)


@given(st.integers(1, 40), st.integers(0, 10_000))
def test_min_degree_is_a_permutation(n, seed):
    M = sp.random(n, n, density=0.2, random_state=seed)
    M = ((M + M.T) != 0).astype(float).tocsr()
    M.setdiag(0)
    M.eliminate_zeros()
    M.sort_indices()
    perm = _kernels.fallback.min_degree(n, M.indptr.astype(np.int64), M.indices.astype(np.int64))
    assert sorted(perm.tolist()) == list(range(n))


def test_dynamic_regularization_counts_wrong_sign_pivots():
    # a zero pivot where a positive one is expected gets bumped to +delta
    r, c, v = np.array([0, 0, 1]), np.array([0, 1, 1]), np.array([0.0, 0.0, 1.0])
    f = LdlFactor(2, r, c, np.array([1.0, 1.0]), kernels=_kernels.fallback, delta=1e-7)
    assert f.factor(v) == 1
    assert np.all(f.D > 0)


def test_pattern_must_be_upper_triangular():
    with pytest.raises(ValueError):
        LdlFactor(2, [1], [0], [1.0, 1.0])


def test_backend_name_reflects_choice():
    assert _kernels.BACKEND_NAME == ("compiled" if _kernels.compiled is not None else "python")


def test_environment_variable_forces_python_kernels():
    import os
    import subprocess
    import sys

    env = dict(os.environ, POOLRELAX_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from poolrelax import _kernels; print(_kernels.BACKEND_NAME)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
