import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from gsparse.data import (
    DataFormatError,
    Dataset,
    SyntheticSpec,
    generate_synthetic,
    polynomial_group_expand,
    read_csv,
    read_libsvm,
    write_libsvm,
)


def test_synthetic_shapes():
    A, y, x_true, part = generate_synthetic(SyntheticSpec(m=500, n=2000, group_size=5, k_active=10))
    assert A.shape == (500, 2000) and part.d == 400
    assert np.count_nonzero(part.norms(x_true, 2)) == 10
    assert np.max(np.abs(A @ A.T - np.eye(500))) <= 1e-10


def test_synthetic_noise_free_and_deterministic():
    spec = SyntheticSpec(m=20, n=40, k_active=2, noise_std=0.0, seed=4)
    A, y, x_true, _ = generate_synthetic(spec)
    assert np.array_equal(y, A @ x_true)
    A2, y2, _, _ = generate_synthetic(spec)
    assert np.array_equal(A, A2) and np.array_equal(y, y2)


def test_synthetic_spec_validation_and_parse():
    with pytest.raises(ValueError):
        SyntheticSpec(n=2001)
    with pytest.raises(ValueError):
        SyntheticSpec(m=10, n=20, k_active=5)
    with pytest.raises(ValueError):
        SyntheticSpec(m=50, n=40)
    spec = SyntheticSpec.parse("m=50, n=100\n# comment\nnoise_std=0.1", seed=3)
    assert (spec.m, spec.n, spec.noise_std, spec.seed) == (50, 100, 0.1, 3)
    with pytest.raises(ValueError):
        SyntheticSpec.parse("bogus=1")


def test_synthetic_spec_from_file(tmp_path):
    path = tmp_path / "spec.txt"
    path.write_text("m=30\nn=60\nk_active=3\n")
    assert SyntheticSpec.from_file(path) == SyntheticSpec(m=30, n=60, k_active=3)


def test_read_libsvm_example(tmp_path):
    path = tmp_path / "a.txt"
    path.write_text("1.5 1:2.0 3:-1.0\n")
    ds = read_libsvm(path)
    assert ds.y.tolist() == [1.5]
    assert ds.X.tolist() == [[2.0, 0.0, -1.0]]


def test_read_libsvm_errors(tmp_path):
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    with pytest.raises(DataFormatError):
        read_libsvm(empty)
    bad = tmp_path / "bad.txt"
    bad.write_text("1 1:2\n2 0:1\n")
    with pytest.raises(DataFormatError, match=":2:"):
        read_libsvm(bad)
    wide = tmp_path / "wide.txt"
    wide.write_text("1 3:1\n")
    with pytest.raises(DataFormatError, match="exceeds"):
        read_libsvm(wide, n_features=1)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(1, 6), st.data())
def test_libsvm_round_trip(tmp_path_factory, rows, cols, data):
    dense = data.draw(arrays(float, (rows, cols), elements=st.floats(-1e6, 1e6, allow_subnormal=False)))
    mask = data.draw(arrays(bool, (rows, cols)))
    X = np.where(mask, dense, 0.0)
    y = data.draw(arrays(float, rows, elements=st.floats(-1e6, 1e6)))
    path = tmp_path_factory.mktemp("rt") / "d.txt"
    write_libsvm(path, X, y)
    ds = read_libsvm(path, n_features=cols)
    assert np.array_equal(ds.X, X + 0.0) and np.array_equal(ds.y, y)


def test_read_csv(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,target,b\n1,10,2\n3,20,4\n")
    ds = read_csv(path, "target")
    assert ds.X.tolist() == [[1, 2], [3, 4]] and ds.y.tolist() == [10, 20]
    assert ds.feature_names == ["a", "b"]
    with pytest.raises(DataFormatError, match="no column"):
        read_csv(path, "missing")
    bad = tmp_path / "bad.csv"
    bad.write_text("a,t\n1,x\n")
    with pytest.raises(DataFormatError, match="row 2"):
        read_csv(bad, "t")


def test_read_csv_mobileprice_shape(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.integers(0, 100, size=(2000, 21))
    path = tmp_path / "mobile.csv"
    header = ",".join([f"f{j}" for j in range(20)] + ["price_range"])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%d")
    ds = read_csv(path, "price_range")
    assert ds.X.shape == (2000, 20)


def test_signed_labels():
    ds = Dataset(np.zeros((3, 1)), [0, 1, 0], task="classification")
    assert ds.signed_labels().tolist() == [-1, 1, -1]


@pytest.mark.parametrize("raw,width", [(14, 455), (27, 1755), (20, 950), (34, 2805), (30, 2175)])
def test_expansion_widths(raw, width):
    X = np.random.default_rng(raw).standard_normal((40, raw))
    A, part = polynomial_group_expand(Dataset(X, np.zeros(40)))
    assert A.shape == (40, width) and part.d == math.comb(raw, 2)
    assert np.allclose(np.linalg.norm(A, axis=0), 1.0)


def test_expansion_single_pair():
    X = np.random.default_rng(0).standard_normal((10, 2))
    A, part = polynomial_group_expand(Dataset(X, np.zeros(10)), degree=3)
    assert A.shape == (10, 5) and part.d == 1
    Z = (X - X.mean(0)) / X.std(0)
    col = Z[:, 0] ** 2 * Z[:, 1]
    col = (col - col.mean()) / np.linalg.norm(col - col.mean())
    assert np.allclose(A[:, 1], col)


def test_expansion_drops_constant_feature():
    X = np.random.default_rng(0).standard_normal((10, 3))
    X[:, 1] = 7.0
    with pytest.warns(UserWarning, match="constant"):
        A, part = polynomial_group_expand(Dataset(X, np.zeros(10)))
    assert part.d == 1


def test_expansion_degree_two_keeps_quadratics():
    X = np.random.default_rng(0).standard_normal((10, 3))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        A, part = polynomial_group_expand(Dataset(X, np.zeros(10)), degree=2)
    assert A.shape == (10, 9) and part.d == 3


def test_expansion_treats_rounding_noise_as_constant():
    # 0.1 is not exact in binary, so centering leaves tiny nonzero residue
    X = np.random.default_rng(1).standard_normal((30, 3))
    X[:, 2] = 0.1
    with pytest.warns(UserWarning, match="constant"):
        A, part = polynomial_group_expand(Dataset(X, np.zeros(30)))
    assert part.d == 1 and np.all(np.isfinite(A))
