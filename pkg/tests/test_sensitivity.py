import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairdesert.basis import BasisConfig
from fairdesert.sensitivity import DEFAULT_GRIDS, SweepSpec, flip_rate, run_sweep
from fairdesert.sievemle import FitOptions
from fairdesert.simulate import DgpConfig, gen_dataset, oracle_theta

CONFIG = BasisConfig(interaction_order=1)
# no logit ridge here: the shrinkage that stabilizes the replication harness
# biases the variant-model theta plug-ins that sweeps report
OPTS = FitOptions(restarts=2, floor=0.05, relevance_margin=1e-3, seed=0)


def test_flip_rate_identical_scores():
    scores = np.linspace(0.1, 0.9, 20)
    assert flip_rate(scores, scores, 0.3) == 0.0


def test_flip_rate_reversed_ranking():
    scores = np.linspace(0.05, 0.95, 10)
    assert flip_rate(scores, scores[::-1], 0.5) == 1.0


def test_flip_rate_below_resolution():
    scores = np.linspace(0.1, 0.9, 50)
    assert flip_rate(scores, scores + 1e-12, 0.4) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.05, 0.95))
def test_flip_rate_symmetric(seed, rate):
    rng = np.random.default_rng(seed)
    a = rng.uniform(size=30)
    b = rng.uniform(size=30)
    assert flip_rate(a, b, rate) == flip_rate(b, a, rate)


def test_flip_rate_length_mismatch():
    with pytest.raises(ValueError):
        flip_rate(np.ones(3), np.ones(4), 0.5)


def test_default_grids_shape():
    assert DEFAULT_GRIDS["delta"][0] == (0.0, 0.0)
    assert len(DEFAULT_GRIDS["kappa"]) == 3


def test_sweep_zero_point_reproduces_baseline():
    data, _, _ = gen_dataset(DgpConfig(n=1200, seed=50))
    spec = SweepSpec(variant="delta", grid=((0.0, 0.0),), with_bootstrap=False)
    table = run_sweep(data, CONFIG, OPTS, spec)
    row = table.rows[0]
    assert row.error is None
    assert row.criterion == pytest.approx(table.metadata["baseline_criterion"], abs=1e-6)
    assert row.mean_abs_tau_diff < 5e-4
    assert row.flip_rate <= 0.005


def test_sweep_recovers_true_delta_row():
    # data generated with two-sided unfairness at 0.05: the matching grid row
    # should land closest to the oracle theta
    config = DgpConfig(n=6000, delta=0.05, seed=8)
    data, _, _ = gen_dataset(config)
    theta_true = oracle_theta(config)
    spec = SweepSpec(
        variant="delta",
        grid=((0.0, 0.0), (0.05, 0.05), (0.1, 0.1)),
        with_bootstrap=False,
    )
    table = run_sweep(data, CONFIG, OPTS, spec)
    errors = [abs(row.theta - theta_true) for row in table.rows]
    assert int(np.argmin(errors)) == 1


def test_sweep_rows_deterministic_without_warm_start():
    data, _, _ = gen_dataset(DgpConfig(n=1000, seed=51))
    spec = SweepSpec(
        variant="zeta", grid=((0.0, 0.0), (0.05, 0.05)),
        reuse_warm_start=False, with_bootstrap=False,
    )
    t1 = run_sweep(data, CONFIG, OPTS, spec)
    t2 = run_sweep(data, CONFIG, OPTS, spec)
    assert [r.__dict__ for r in t1.rows] == [r.__dict__ for r in t2.rows]
    assert t1.metadata["cold_start_checked"] == 0


def test_sweep_records_per_point_failures():
    data, _, _ = gen_dataset(DgpConfig(n=1000, seed=52))
    bad_opts = FitOptions(restarts=1, max_iter=1, include_plugin_start=False, seed=0)
    spec = SweepSpec(variant="delta", grid=((0.0, 0.0), (0.05, 0.05)),
                     with_bootstrap=False, reuse_warm_start=False)
    table = run_sweep(data, CONFIG, bad_opts, spec, baseline=_quick_baseline(data))
    assert all(row.error is not None for row in table.rows)
    assert len(table.rows) == 2


def _quick_baseline(data):
    from fairdesert.sievemle import fit

    return fit(data, CONFIG, OPTS)


def test_sweep_csv_and_metadata(tmp_path):
    data, _, _ = gen_dataset(DgpConfig(n=1000, seed=53))
    spec = SweepSpec(variant="kappa", grid=((0.0, 0.0),), with_bootstrap=False)
    table = run_sweep(data, CONFIG, OPTS, spec)
    table.write_csv(tmp_path / "sweep.csv")
    table.write_metadata(tmp_path / "sweep_meta.json")
    header = (tmp_path / "sweep.csv").read_text().splitlines()[0]
    assert header.startswith("v0,v1,theta")
    import json

    meta = json.loads((tmp_path / "sweep_meta.json").read_text())
    assert meta["variant"] == "kappa"
    assert "cold_start_max_gap" in meta


def test_sweep_grid_validation():
    with pytest.raises(ValueError):
        SweepSpec(variant="delta").params()
    spec = SweepSpec(variant="delta", grid=((0.0, 0.0),))
    assert spec.params()[0].variant == "delta"
