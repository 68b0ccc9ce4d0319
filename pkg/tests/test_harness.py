import numpy as np
import pytest
from scipy import stats

from gpamis.config import default_config
from gpamis.errors import EmptyDataset, GridBeforeFirstObservation, MalformedRow
from gpamis.gp import Dataset
from gpamis.harness import (
    ConvergenceTrace,
    RunningMean,
    default_grid,
    iqr_aggregate,
    load_dataset,
    running_estimate_trace,
    stabilization_point,
    synthetic_regression,
)
from gpamis.harness.data import binarize_labels, write_csv
from gpamis.harness.experiment import prepare, run_experiment, run_replicates, write_run
from gpamis.importance import ProposalParams, Schedule, amis_run, self_normalized_expectation
from gpamis.linalg import make_rng
from gpamis.targets import gaussian_target

GLASS = __import__("pathlib").Path(__file__).resolve().parents[1] / "data" / "glass2.csv"


def trace_of(pairs, eot=0):
    t = ConvergenceTrace(eot=eot)
    for o, e in pairs:
        t.record(o, e)
    return t


class TestLoadDataset:
    def test_two_rows_standardized(self, tmp_path):
        path = tmp_path / "two.csv"
        path.write_text("1.0,5.0,3.0\n3.0,-1.0,5.0\n")
        ds = load_dataset(path)
        assert ds.n == 2 and ds.d == 2
        assert np.all(ds.X.mean(axis=0) == 0.0)
        np.testing.assert_allclose(ds.X.std(axis=0), 1.0)
        np.testing.assert_allclose(ds.y, [-1.0, 1.0])

    def test_subsample_is_deterministic(self, tmp_path):
        X, y = synthetic_regression(300, 3, seed=1)
        path = write_csv(tmp_path / "s.csv", X, y)
        a = load_dataset(path, subsample=100, seed=4)
        b = load_dataset(path, subsample=100, seed=4)
        c = load_dataset(path, subsample=100, seed=5)
        assert a.n == 100
        assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
        assert not np.array_equal(a.y, c.y)

    def test_malformed_row_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,2,3\n4,5\n")
        with pytest.raises(MalformedRow) as info:
            load_dataset(path)
        assert "2" in str(info.value)

    def test_non_numeric_cell(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,2,3\n4,x,6\n")
        with pytest.raises(MalformedRow):
            load_dataset(path)

    def test_empty(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("\n\n")
        with pytest.raises(EmptyDataset):
            load_dataset(path)

    def test_missing_file_names_path(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nothere.csv"):
            load_dataset(tmp_path / "nothere.csv")

    def test_binarize_majority_class(self):
        y, pos = binarize_labels([2, 1, 2, 3, 1, 2])
        assert pos == 2.0
        np.testing.assert_array_equal(y, [1, -1, 1, -1, -1, 1])

    def test_binarize_tie_goes_to_smallest(self):
        assert binarize_labels([3, 1, 3, 1])[1] == 1.0

    def test_binarize_unknown_class(self):
        with pytest.raises(ValueError):
            binarize_labels([0, 1], positive_class=5)

    def test_glass_subset_shape(self):
        ds = load_dataset(GLASS, "classification", positive_class=1)
        assert (ds.n, ds.d) == (163, 9)
        assert int(np.sum(ds.y == 1)) == 76 and int(np.sum(ds.y == -1)) == 87


class TestTraces:
    def test_constant_chain(self):
        trace = running_estimate_trace([(k, np.array([0.0, 2.0])) for k in range(1, 6)])
        assert trace.estimates == [2.0] * 5

    def test_running_mean(self):
        trace = running_estimate_trace([(1, np.array([1.0])), (2, np.array([3.0]))])
        assert trace.estimates == [1.0, 2.0]

    def test_burn_in_skipped(self):
        trace = ConvergenceTrace()
        acc = RunningMean(trace, burn_in=1)
        for k, v in enumerate([10.0, 1.0, 3.0]):
            acc(np.array([v]), k)
        assert trace.ops == [1, 2] and trace.estimates == [1.0, 2.0]

    def test_weighted_snapshot(self):
        trace = running_estimate_trace([(5, np.array([[1.0], [3.0]]), np.array([0.25, 0.75]))])
        assert trace.estimates == [2.5]

    def test_amis_final_value_is_self_normalized_expectation(self):
        target = gaussian_target(np.array([1.0, -0.5]), np.array([[1.0, 0.2], [0.2, 0.6]]))
        events = []

        def snapshot(store, t):
            events.append((t + 1, store.thetas.copy(), store.normalized_weights()))

        store = amis_run(target, ProposalParams.from_cov(np.zeros(2), 2 * np.eye(2)), Schedule(6, 50),
                         rng=make_rng(0), callback=snapshot)
        trace = running_estimate_trace(events)
        expected = self_normalized_expectation(store, lambda X: np.linalg.norm(X, axis=1), vectorized=True)
        assert trace.final == pytest.approx(expected, rel=1e-12)

    def test_ops_must_not_decrease(self):
        with pytest.raises(ValueError):
            trace_of([(5, 1.0), (3, 1.0)])

    def test_round_trip(self, tmp_path):
        t = trace_of([(1, 0.1), (4, 1 / 3)])
        t.write(tmp_path / "t.csv")
        back = ConvergenceTrace.read(tmp_path / "t.csv")
        assert back.ops == t.ops and back.estimates == t.estimates


class TestIqr:
    def test_identical_traces(self):
        traces = [trace_of([(1, 3.0), (10, 2.0), (100, 2.5)]) for _ in range(4)]
        c = iqr_aggregate(traces, np.array([1, 5, 50, 200]))
        assert np.array_equal(c.q1, c.median) and np.array_equal(c.median, c.q3)
        np.testing.assert_array_equal(c.median, [3.0, 3.0, 2.0, 2.5])

    def test_hand_quantiles(self):
        traces = [trace_of([(1, float(v))]) for v in (5, 3, 1, 4, 2)]
        c = iqr_aggregate(traces, np.array([1.0]))
        assert (c.q1[0], c.median[0], c.q3[0]) == (2.0, 3.0, 4.0)

    def test_normal_iqr_identity(self):
        rng = np.random.default_rng(3)
        sigma = 0.7
        grid = np.array([1.0, 10.0, 100.0])
        traces = [trace_of([(g, 2.0 + sigma * rng.normal()) for g in grid]) for _ in range(100)]
        c = iqr_aggregate(traces, grid)
        expected = (stats.norm.ppf(0.75) - stats.norm.ppf(0.25)) * sigma
        assert np.all(np.abs(c.width - expected) <= 0.1 * expected)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(4)
        traces = [trace_of([(1, rng.normal()), (7, rng.normal())]) for _ in range(9)]
        grid = np.array([1.0, 3.0, 7.0])
        a, b = iqr_aggregate(traces, grid), iqr_aggregate(traces[::-1], grid)
        assert np.array_equal(a.median, b.median) and np.array_equal(a.q1, b.q1)

    def test_grid_before_first_observation(self):
        with pytest.raises(GridBeforeFirstObservation):
            iqr_aggregate([trace_of([(10, 1.0)])], np.array([5.0, 20.0]))

    def test_default_grid_starts_at_latest_first_observation(self):
        traces = [trace_of([(30, 1.0), (90, 1.0)], eot=20), trace_of([(50, 1.0)], eot=45)]
        grid = default_grid(traces, budget=1000, points=20)
        assert grid[0] == 50 and grid[-1] == pytest.approx(1000)
        assert np.all(np.diff(grid) > 0)

    def test_stabilization(self):
        traces = [trace_of([(1, 5.0), (10, 2.02), (100, 2.0)]), trace_of([(1, 1.0), (10, 1.99), (100, 2.0)])]
        c = iqr_aggregate(traces, np.array([1.0, 10.0, 100.0]))
        assert stabilization_point(c) == 10.0
        flat = iqr_aggregate(traces, np.array([100.0]))
        assert stabilization_point(flat) == 100.0


def small_config(**values):
    config = default_config()
    for k, v in values.items():
        config[k] = v
    return config


@pytest.fixture(scope="module")
def synthetic40():
    # light-tailed posterior; E||theta|| = 2.2847 by 44^3-point grid quadrature
    X, y = synthetic_regression(40, 2, seed=2)
    return Dataset(X, y - y.mean(), name="synthetic40")


class TestRunExperiment:
    def test_single_replicate_is_degenerate(self, synthetic40):
        config = small_config(**{"run.replicates": 1, "run.budget": 800, "sampler.name": "amis", "run.threads": 1})
        result = run_experiment(config, dataset=synthetic40)
        c = result.curve
        assert np.array_equal(c.q1, c.median) and np.array_equal(c.q3, c.median)
        assert np.all(np.asarray(result.traces[0].ops) >= result.init_cost)

    def test_same_seed_gives_identical_files(self, synthetic40, tmp_path):
        config = small_config(**{"run.replicates": 3, "run.budget": 3000, "sampler.name": "mh-h", "run.seed": 5})
        problem = prepare(config, synthetic40)
        a = write_run(run_experiment(config, problem=problem), config, tmp_path / "a")
        b = write_run(run_experiment(config, problem=problem), config, tmp_path / "b")
        for name in ("trace_rep000.csv", "trace_rep002.csv", "aggregate.csv", "manifest.txt"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_thread_count_does_not_change_traces(self, synthetic40):
        base = {"run.replicates": 4, "run.budget": 1200, "sampler.name": "ss", "run.seed": 2}
        problem = prepare(small_config(**base), synthetic40)
        one, _ = run_replicates("ss", problem, small_config(**base, **{"run.threads": 1}))
        four, _ = run_replicates("ss", problem, small_config(**base, **{"run.threads": 4}))
        for s, t in zip(one, four):
            assert s.ops == t.ops and s.estimates == t.estimates

    def test_eot_precedes_first_observation(self, synthetic40):
        config = small_config(**{"run.replicates": 2, "run.budget": 2500, "sampler.name": "mh-h"})
        result = run_experiment(config, dataset=synthetic40)
        for t in result.traces:
            assert result.init_cost < t.eot <= t.ops[0]
            assert all(b > a for a, b in zip(t.ops, t.ops[1:]))

    def test_failed_replicates_are_excluded(self, synthetic40):
        # an HMC tuning batch alone costs more than this budget
        config = small_config(**{"run.replicates": 2, "run.budget": 600, "sampler.name": "hmc-h"})
        problem = prepare(config, synthetic40)
        traces, failures = run_replicates("hmc-h", problem, config)
        assert not traces and len(failures) == 2

    def test_mh_and_amis_agree(self, synthetic40):
        config = small_config(**{"run.replicates": 5, "run.budget": 5000, "run.seed": 1})
        problem = prepare(config, synthetic40)
        finals = {name: run_experiment(config, problem=problem, sampler=name).curve.median[-1]
                  for name in ("mh-h", "amis")}
        assert abs(finals["mh-h"] - finals["amis"]) <= 0.02 * finals["amis"]
        assert abs(finals["amis"] - 2.2847) <= 0.02 * 2.2847
