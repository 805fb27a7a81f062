import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from weightanomaly.vectorize import (
    DimensionalityError,
    Interpretation,
    stack_corpus,
    vector_shape,
    vectorize_conv,
    vectorize_matrix,
    vectorize_tensor,
)
from weightanomaly.weightstore import WeightTensor

M = WeightTensor("fc", np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))


def test_forward_2x3():
    fs = vectorize_matrix(M, "forward")
    np.testing.assert_array_equal(fs.vectors, [[1, 4], [2, 5], [3, 6]])
    assert fs.dim == 2 and len(fs) == 3


def test_backward_2x3():
    fs = vectorize_matrix(M, Interpretation.BACKWARD)
    np.testing.assert_array_equal(fs.vectors, [[1, 2, 3], [4, 5, 6]])


def test_large_layer_counts():
    # shape arithmetic only; no 512x1792 tensor is allocated
    assert vector_shape((512, 1792), "forward") == (1792, 512)
    assert vector_shape((512, 1792), "backward") == (512, 1792)


def test_matrix_rejects_other_ranks():
    with pytest.raises(DimensionalityError):
        vectorize_matrix(WeightTensor("b", np.ones(3)), "forward")
    with pytest.raises(DimensionalityError):
        vectorize_tensor(WeightTensor("b", np.ones(3)), "forward")


def test_bad_interpretation():
    with pytest.raises(ValueError, match="forward"):
        vectorize_matrix(M, "sideways")


def test_conv_filters():
    w = np.array([[[[1, 2], [3, 4]]], [[[5, 6], [7, 8]]]], dtype=float)
    fs = vectorize_conv(WeightTensor("conv", w))
    np.testing.assert_array_equal(fs.vectors, [[1, 2, 3, 4], [5, 6, 7, 8]])


def test_conv_shape_arithmetic():
    fs = vectorize_conv(WeightTensor("conv", np.zeros((3, 2, 3, 3))))
    assert (len(fs), fs.dim) == (3, 18)
    with pytest.raises(DimensionalityError):
        vectorize_conv(M)


@settings(max_examples=60, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=4, max_dims=4, max_side=4), elements=st.floats(-1e6, 1e6)))
def test_conv_flatten_roundtrip(w):
    fs = vectorize_conv(WeightTensor("c", w))
    np.testing.assert_array_equal(fs.vectors.reshape(w.shape), w)


@settings(max_examples=60, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, max_side=7), elements=st.floats(-1e6, 1e6)))
def test_forward_is_backward_of_transpose(w):
    fwd = vectorize_matrix(WeightTensor("w", w), "forward")
    bwd_t = vectorize_matrix(WeightTensor("w", w.T.copy()), "backward")
    np.testing.assert_array_equal(fwd.vectors, bwd_t.vectors)
    bwd = vectorize_matrix(WeightTensor("w", w), "backward")
    assert len(fwd) * fwd.dim == len(bwd) * bwd.dim == w.size


def test_stack_counts_and_identity(rng):
    sets = [vectorize_matrix(WeightTensor("l", rng.normal(size=(4, 6))), "forward", f"n{i}") for i in range(18)]
    st_ = stack_corpus(sets)
    assert len(st_) == 18 * 6 and st_.dim == 4
    assert st_.network_ids == tuple(f"n{i}" for i in range(18))
    assert stack_corpus(sets[:1]) is sets[0]


def test_stack_is_multiset_commutative(rng):
    a = vectorize_matrix(WeightTensor("l", rng.normal(size=(3, 5))), "forward", "a")
    b = vectorize_matrix(WeightTensor("l", rng.normal(size=(3, 4))), "forward", "b")
    ab = stack_corpus([a, b]).vectors
    ba = stack_corpus([b, a]).vectors
    key = lambda v: sorted(map(tuple, v))  # noqa: E731
    assert key(ab) == key(ba)


def test_stack_dim_mismatch_names_network():
    a = vectorize_matrix(WeightTensor("l", np.ones((3, 2))), "forward", "good")
    b = vectorize_matrix(WeightTensor("l", np.ones((4, 2))), "forward", "offender")
    with pytest.raises(DimensionalityError, match="offender"):
        stack_corpus([a, b])
