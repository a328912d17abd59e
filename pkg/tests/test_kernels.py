import numpy as np
from hypothesis import given, settings, strategies as st

from slag import _kernels as K


def _sym(rng, N, n):
    A = rng.standard_normal((N, n, n))
    return (A + np.swapaxes(A, 1, 2)) / 2


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_compiled_matches_numpy(n, seed):
    H = _sym(np.random.default_rng(seed), 20, n)
    np.testing.assert_allclose(K.esym_batch(H), K.esym_batch_numpy(H), atol=1e-10)
    np.testing.assert_allclose(K.im_det_batch(H), K.im_det_batch_numpy(H), atol=1e-10)


def test_esym_against_characteristic_polynomial():
    H = _sym(np.random.default_rng(1), 50, 4)
    e = K.esym_batch(H)
    for t in (0.3, -1.7):
        direct = np.linalg.det(np.eye(4) + t * H)
        np.testing.assert_allclose(e @ t ** np.arange(5), direct, atol=1e-10)


def test_empty_batch():
    assert K.esym_batch(np.zeros((0, 3, 3))).shape == (0, 4)
