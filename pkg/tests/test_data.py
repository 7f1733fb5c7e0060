import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairdesert.data import (
    CsvSchema,
    Dataset,
    apply_scaling,
    load_csv,
    require_positivity,
    scale_covariates,
    stratum_counts,
    write_csv,
)
from fairdesert.errors import (
    DegenerateCovariateError,
    EmptyDataError,
    ParseError,
    PositivityError,
    SchemaError,
)


def make_dataset(n=12, d=2, seed=0, scaled=True):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(n, d))
    return Dataset(
        s=rng.integers(0, 2, n),
        z=rng.integers(0, 2, n),
        y=rng.integers(0, 2, n),
        x=x,
        covariate_names=tuple(f"x{j}" for j in range(d)),
        scaling=((0.0, 1.0),) * d,
        scaled=scaled,
    )


def test_load_csv_three_rows(tmp_path):
    path = tmp_path / "toy.csv"
    path.write_text(
        "race,quality,callback,exp\n1,0,1,3.5\n0,1,0,1.25\n1,1,1,7.0\n",
        encoding="utf-8",
    )
    schema = CsvSchema(s="race", z="quality", y="callback", covariates=("exp",))
    ds = load_csv(path, schema)
    assert ds.n == 3 and ds.d == 1
    assert ds.x[:, 0].tolist() == [3.5, 1.25, 7.0]
    assert not ds.scaled


def test_load_csv_nonbinary_cites_row(tmp_path):
    rows = ["s,z,y,x0"] + ["1,0,1,0.5"] * 6 + ["1,0,2,0.5", "0,1,0,0.5"]
    path = tmp_path / "bad.csv"
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    with pytest.raises(ParseError, match="row 7") as err:
        load_csv(path, CsvSchema(covariates=("x0",)))
    assert err.value.row == 7


def test_load_csv_missing_column(tmp_path):
    path = tmp_path / "missing.csv"
    path.write_text("s,z,y\n1,0,1\n", encoding="utf-8")
    with pytest.raises(SchemaError, match="x0"):
        load_csv(path, CsvSchema(covariates=("x0",)))


def test_load_csv_empty(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("s,z,y,x0\n", encoding="utf-8")
    with pytest.raises(EmptyDataError):
        load_csv(path, CsvSchema(covariates=("x0",)))


def test_load_csv_rejects_missing_values(tmp_path):
    path = tmp_path / "nan.csv"
    path.write_text("s,z,y,x0\n1,0,1,nan\n0,1,0,0.5\n", encoding="utf-8")
    with pytest.raises(ParseError):
        load_csv(path, CsvSchema(covariates=("x0",)))


def test_load_csv_custom_binary_encoding(tmp_path):
    path = tmp_path / "enc.csv"
    path.write_text(
        "race,q,call,x0\nwhite,0,1,0.2\nblack,1,0,0.8\nwhite,1,1,0.5\nblack,0,0,0.4\n",
        encoding="utf-8",
    )
    schema = CsvSchema(
        s="race", z="q", y="call", covariates=("x0",),
        binary_values={"white": 1, "black": 0},
    )
    ds = load_csv(path, schema)
    assert ds.s.tolist() == [1, 0, 1, 0]


def test_csv_round_trip_full_precision(tmp_path):
    rng = np.random.default_rng(3)
    n = 25
    x = rng.standard_normal((n, 3)) * np.array([1e-7, 1.0, 1e6]) + 0.1
    ds = Dataset(
        s=rng.integers(0, 2, n), z=rng.integers(0, 2, n), y=rng.integers(0, 2, n),
        x=x, covariate_names=("a", "b", "c"),
        scaling=tuple((float(x[:, j].min()), float(x[:, j].max())) for j in range(3)),
    )
    path = tmp_path / "rt.csv"
    write_csv(ds, path)
    back = load_csv(path, CsvSchema(covariates=("a", "b", "c")))
    assert np.array_equal(back.x, ds.x)
    assert np.array_equal(back.s, ds.s)
    assert np.array_equal(back.z, ds.z)
    assert np.array_equal(back.y, ds.y)


def test_scale_affine_map():
    ds = Dataset(
        s=[0, 1, 1], z=[1, 0, 1], y=[0, 1, 0],
        x=np.array([[2.0], [4.0], [6.0]]),
        covariate_names=("v",), scaling=((2.0, 6.0),),
    )
    scaled = scale_covariates(ds)
    assert scaled.x[:, 0].tolist() == [0.0, 0.5, 1.0]
    assert scaled.scaled


def test_scale_identity_on_unit_column():
    ds = Dataset(
        s=[0, 1, 0], z=[1, 0, 1], y=[0, 1, 1],
        x=np.array([[0.0], [0.4], [1.0]]),
        covariate_names=("v",), scaling=((0.0, 1.0),),
    )
    assert np.array_equal(scale_covariates(ds).x, ds.x)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_scale_idempotent(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-5, 5, size=(8, 2))
    x[0] = -5.0
    x[1] = 5.0
    ds = Dataset(
        s=rng.integers(0, 2, 8), z=rng.integers(0, 2, 8), y=rng.integers(0, 2, 8),
        x=x, covariate_names=("a", "b"),
        scaling=tuple((float(x[:, j].min()), float(x[:, j].max())) for j in range(2)),
    )
    once = scale_covariates(ds)
    twice = scale_covariates(once)
    assert np.array_equal(once.x, twice.x)


def test_out_of_range_clamped_and_flagged():
    scaling = ((0.0, 10.0), (0.0, 1.0))
    x_scaled, flagged = apply_scaling(scaling, np.array([[12.0, 0.5], [5.0, 0.2]]))
    assert x_scaled[0, 0] == 1.0
    assert flagged.tolist() == [True, False]


def test_constant_column_rejected(tmp_path):
    path = tmp_path / "const.csv"
    path.write_text("s,z,y,good,flat\n1,0,1,0.2,7\n0,1,0,0.9,7\n", encoding="utf-8")
    with pytest.raises(DegenerateCovariateError, match="flat"):
        load_csv(path, CsvSchema(covariates=("good", "flat")))


def test_stratum_counts_single_record():
    ds = Dataset(
        s=[0], z=[1], y=[1], x=np.array([[0.5]]),
        covariate_names=("v",), scaling=((0.0, 1.0),), scaled=True,
    )
    counts = stratum_counts(ds)
    assert counts[0, 1] == 1 and counts.sum() == 1


def test_stratum_counts_balanced():
    s = np.repeat([0, 0, 1, 1], 100)
    z = np.tile(np.repeat([0, 1], 100), 2)
    ds = Dataset(
        s=s, z=z, y=np.zeros(400, dtype=int), x=np.linspace(0, 1, 400)[:, None],
        covariate_names=("v",), scaling=((0.0, 1.0),), scaled=True,
    )
    assert (stratum_counts(ds) == 100).all()


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=4, max_value=200), st.integers(min_value=0, max_value=10**6))
def test_stratum_counts_sum_to_n(n, seed):
    ds = make_dataset(n=n, seed=seed)
    counts = stratum_counts(ds)
    assert counts.sum() == n and (counts >= 0).all()


def test_positivity_error_on_empty_stratum():
    ds = Dataset(
        s=[0, 0, 1], z=[0, 1, 0], y=[1, 0, 1], x=np.array([[0.1], [0.5], [0.9]]),
        covariate_names=("v",), scaling=((0.0, 1.0),), scaled=True,
    )
    with pytest.raises(PositivityError, match=r"\(s=1, z=1\)"):
        require_positivity(ds)


def test_records_and_subset():
    ds = make_dataset(n=10)
    rec = ds.record(3)
    assert rec.s == ds.s[3] and rec.x.shape == (2,)
    sub = ds.subset([1, 1, 4])
    assert sub.n == 3 and sub.s[0] == sub.s[1] == ds.s[1]


def test_dataset_validates_binary():
    with pytest.raises(ValueError, match="only 0/1"):
        Dataset(
            s=[0, 2], z=[0, 1], y=[1, 0], x=np.zeros((2, 1)) + 0.5,
            covariate_names=("v",), scaling=((0.0, 1.0),),
        )
