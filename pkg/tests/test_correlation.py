import numpy as np
import pytest

from util import make_epoch, random_epoch

from windstates.correlation import (
    matrix_csv_header,
    normalize_epoch,
    pearson_matrix,
    write_matrix_csv,
)
from windstates.errors import DataError


def test_normalize_affine_channel():
    normalized, stats = normalize_epoch(
        make_epoch([[1.0, 2.0, 3.0, 4.0]], min_points=2)
    )
    assert abs(normalized[0].mean()) < 1e-10
    assert abs(normalized[0].std() - 1.0) < 1e-10
    mean, std = stats[0]
    assert mean == pytest.approx(2.5)
    assert std == pytest.approx(np.sqrt(1.25))


def test_normalize_constant_channel_degenerate():
    epoch = make_epoch([[5.0, 5.0, 5.0, 5.0], [1.0, 2.0, 3.0, 4.0]], min_points=2)
    normalized, stats = normalize_epoch(epoch)
    np.testing.assert_array_equal(normalized[0], 0.0)
    assert stats[0][1] == 0.0
    matrix = pearson_matrix(epoch)
    assert matrix.degenerate_channels == frozenset({0})
    assert matrix.entries[0, 1] == 0.0
    assert matrix.entries[1, 0] == 0.0
    assert matrix.entries[0, 0] == 1.0


def test_normalize_matches_two_pass_oracle():
    rng = np.random.default_rng(5)
    row = rng.standard_normal(180)
    normalized, _ = normalize_epoch(make_epoch(row[None, :]))
    # independent two-pass computation: mean first, then centered moments
    mean = sum(row) / len(row)
    var = sum((x - mean) ** 2 for x in row) / len(row)
    expected = (row - mean) / np.sqrt(var)
    np.testing.assert_allclose(normalized[0], expected, atol=1e-12)


def test_normalize_rejects_invalid_epoch():
    epoch = make_epoch(np.ones((2, 50)), min_points=90)
    with pytest.raises(DataError, match="insufficient data"):
        normalize_epoch(epoch)
    with pytest.raises(DataError):
        pearson_matrix(epoch)


def test_perfect_linear_dependence():
    rng = np.random.default_rng(0)
    s1 = rng.standard_normal(120)
    epoch = make_epoch(np.stack([s1, 2.0 * s1 + 3.0]), min_points=2)
    assert pearson_matrix(epoch).value("S1", "S2") == pytest.approx(1.0, abs=1e-12)


def test_sign_flip():
    rng = np.random.default_rng(1)
    s1 = rng.standard_normal(120)
    epoch = make_epoch(np.stack([s1, -s1]), min_points=2)
    assert pearson_matrix(epoch).value("S1", "S2") == pytest.approx(-1.0, abs=1e-12)


def test_matrix_matches_pairwise_formula_oracle():
    rng = np.random.default_rng(2)
    epoch = random_epoch(rng)
    entries = pearson_matrix(epoch).entries
    rows = epoch.rows
    k = rows.shape[0]
    for i in range(k):
        for j in range(k):
            xi, xj = rows[i], rows[j]
            cov = np.mean((xi - xi.mean()) * (xj - xj.mean()))
            expected = cov / (xi.std() * xj.std())
            assert entries[i, j] == pytest.approx(expected, abs=1e-12)


def test_matrix_shape_invariants():
    rng = np.random.default_rng(3)
    matrix = pearson_matrix(random_epoch(rng))
    entries = matrix.entries
    np.testing.assert_array_equal(entries, entries.T)
    np.testing.assert_array_equal(np.diag(entries), 1.0)
    assert entries.min() >= -1.0 and entries.max() <= 1.0
    assert np.linalg.eigvalsh(entries).min() >= -1e-9


def test_affine_invariance_and_sign_flip():
    rng = np.random.default_rng(4)
    epoch = random_epoch(rng)
    base = pearson_matrix(epoch).entries
    scales = rng.uniform(0.5, 3.0, size=5)
    offsets = rng.uniform(-10.0, 10.0, size=5)
    mapped = make_epoch(
        epoch.rows * scales[:, None] + offsets[:, None], signals=epoch.signals
    )
    np.testing.assert_allclose(pearson_matrix(mapped).entries, base, atol=1e-12)
    # a negative scale on one channel flips that row and column
    flipped_rows = epoch.rows.copy()
    flipped_rows[2] *= -1.0
    flipped = pearson_matrix(make_epoch(flipped_rows, signals=epoch.signals)).entries
    expected = base.copy()
    expected[2, :] *= -1.0
    expected[:, 2] *= -1.0
    np.fill_diagonal(expected, 1.0)
    np.testing.assert_allclose(flipped, expected, atol=1e-12)


def test_channel_permutation_permutes_entries():
    rng = np.random.default_rng(6)
    epoch = random_epoch(rng)
    base = pearson_matrix(epoch).entries
    perm = rng.permutation(epoch.rows.shape[0])
    permuted = pearson_matrix(
        make_epoch(epoch.rows[perm], signals=[epoch.signals[p] for p in perm])
    ).entries
    np.testing.assert_allclose(permuted, base[np.ix_(perm, perm)], atol=1e-12)


def test_matrix_csv_dump(tmp_path):
    rng = np.random.default_rng(8)
    matrices = [pearson_matrix(random_epoch(rng, k=2)) for _ in range(3)]
    path = tmp_path / "correlations.csv"
    write_matrix_csv(path, matrices)
    lines = path.read_text().splitlines()
    assert lines[0] == matrix_csv_header(matrices[0].signals)
    assert lines[0].startswith("turbine,epoch_start,C11,C12,C21,C22")
    assert len(lines) == 4
    cells = lines[1].split(",")
    reread = np.array([float(x) for x in cells[2:]]).reshape(2, 2)
    np.testing.assert_allclose(reread, matrices[0].entries, rtol=1e-14)
