import numpy as np
import pytest

from splitgp.data import SeedPlan, synth_dataset
from splitgp.exceptions import ContractViolationError, EmptyModelError
from splitgp.gp import FitSchedule, GpPosterior, posterior_mean, posterior_variance
from splitgp.kernels import Hyperparameters, KernelSpec, kernel_eval
from splitgp.model import ChildModel, SplittingGP, TrainSchedule


def make_spec(ls, sf2=1.0, sn2=0.1):
    return KernelSpec(Hyperparameters(np.asarray(ls, dtype=float), sf2, sn2))


def quiet_model(m, spec=None, **kwargs):
    return SplittingGP(m, spec=spec, train_schedule=TrainSchedule.never(), **kwargs)


class TestUpdate:
    def test_first_observation_creates_centered_child(self):
        model = quiet_model(5)
        model.update(np.array([0.4, -0.2]), 1.5)
        assert model.n_children == 1
        assert np.array_equal(model.children[0].center, [0.4, -0.2])
        assert np.array_equal(model.children[0].Y, [1.5])

    def test_third_collinear_point_triggers_split(self):
        model = quiet_model(2)
        for x, y in [(0.0, 0.0), (0.1, 0.1), (10.0, 1.0)]:
            model.update(np.array([x]), y)
        assert model.n_children == 2
        assert all(c.n <= 2 for c in model.children)

    def test_new_point_joins_most_similar_center(self):
        spec = make_spec([1.0, 1.0])
        model = quiet_model(50, spec=spec)
        model.children.append(ChildModel(np.array([[0.0, 0.0]]), [0.0]))
        model.children.append(ChildModel(np.array([[10.0, 0.0]]), [1.0]))
        model.update(np.array([9.0, 0.0]), 2.0)
        assert model.children[0].n == 1
        assert model.children[1].n == 2

    def test_center_recomputed_after_append(self):
        model = quiet_model(10)
        model.update(np.array([0.0, 0.0]), 0.0)
        model.update(np.array([1.0, 1.0]), 1.0)
        assert np.allclose(model.children[0].center, [0.5, 0.5])

    def test_non_finite_rejected(self):
        model = quiet_model(5)
        with pytest.raises(ContractViolationError):
            model.update(np.array([np.nan, 0.0]), 1.0)
        model.update(np.array([0.0, 0.0]), 0.0)
        with pytest.raises(ContractViolationError):
            model.update(np.array([0.0, 0.0]), float("inf"))

    def test_split_limit_below_two_rejected(self):
        with pytest.raises(ContractViolationError):
            SplittingGP(1)


class TestUpdateBatch:
    def test_batch_of_one_equals_single_update(self):
        xs = np.array([[0.0], [0.4], [1.2], [5.0]])
        ys = np.array([0.0, 1.0, 0.5, -1.0])
        a, b = quiet_model(3), quiet_model(3)
        for x, y in zip(xs, ys):
            a.update(x, y)
            b.update_batch(x[None, :], [y])
        assert a.n_children == b.n_children
        for ca, cb in zip(a.children, b.children):
            assert np.array_equal(ca.X, cb.X)
            assert np.array_equal(ca.Y, cb.Y)

    def test_empty_batch_is_noop(self):
        model = quiet_model(3)
        model.update(np.array([0.0]), 1.0)
        model.update_batch(np.zeros((0, 1)), np.zeros(0))
        assert model.n_children == 1
        assert model.n_observations == 1

    def test_streaming_invariants(self):
        seeds = SeedPlan(3)
        ds = synth_dataset(600, seeds)
        model = quiet_model(100)
        model.update_batch(ds.X, ds.Y)
        assert all(c.n <= 100 for c in model.children)
        assert model.n_observations == 600
        stored = np.vstack([np.column_stack([c.X, c.Y]) for c in model.children])
        stream = np.column_stack([ds.X, ds.Y])
        assert np.array_equal(
            stored[np.lexsort(stored.T)], stream[np.lexsort(stream.T)]
        )

    def test_child_count_bounds(self):
        seeds = SeedPlan(4)
        ds = synth_dataset(900, seeds)
        model = quiet_model(120)
        model.update_batch(ds.X, ds.Y)
        n, m = 900, 120
        assert int(np.ceil(n / m)) <= model.n_children <= int(np.ceil(2 * n / m)) + 1


class TestPredict:
    def test_single_child_matches_gp_posterior(self):
        spec = make_spec([1.0], sn2=0.05)
        model = quiet_model(50, spec=spec)
        rng = np.random.default_rng(0)
        X = rng.uniform(-1, 1, size=(12, 1))
        Y = np.sin(2 * X[:, 0])
        model.update_batch(X, Y)
        assert model.n_children == 1
        post = GpPosterior(X, Y, spec)
        for x in (np.array([0.3]), np.array([-0.8])):
            summary = model.predict_mean(x)
            assert summary.mean == pytest.approx(posterior_mean(post, x, spec), abs=1e-12)
            assert summary.weights.shape == (1,)
            assert summary.weights[0] == pytest.approx(1.0, abs=1e-15)
            assert model.predict_variance(x) == pytest.approx(
                posterior_variance(post, x, spec), abs=1e-12
            )

    def test_identical_children_reproduce_common_mean(self):
        spec = make_spec([1.0, 1.0], sn2=0.1)
        rng = np.random.default_rng(1)
        X = rng.normal(size=(8, 2))
        Y = rng.normal(size=8)
        model = quiet_model(50, spec=spec)
        model.children = [
            ChildModel(X.copy(), Y.copy(), center=np.array([0.0, 0.0])),
            ChildModel(X.copy(), Y.copy(), center=np.array([2.0, 1.0])),
            ChildModel(X.copy(), Y.copy(), center=np.array([-1.0, 3.0])),
        ]
        post = GpPosterior(X, Y, spec)
        for x in rng.normal(size=(20, 2)):
            expected = posterior_mean(post, x, spec)
            assert model.predict_mean(x).mean == pytest.approx(expected, abs=1e-12)

    def test_equidistant_children_average(self):
        spec = make_spec([1.0], sf2=1.0, sn2=0.0)
        k = kernel_eval([0.7], [0.0], spec)
        model = quiet_model(50, spec=spec)
        # Single-point children whose means at x*=0 are exactly 1.0 and 3.0.
        model.children = [
            ChildModel(np.array([[-0.7]]), [1.0 / k]),
            ChildModel(np.array([[0.7]]), [3.0 / k]),
        ]
        summary = model.predict_mean(np.array([0.0]))
        assert np.allclose(summary.weights, [0.5, 0.5])
        assert summary.mean == pytest.approx(2.0, abs=1e-12)
        # Symmetric construction: equal child variances v give v/2.
        v = posterior_variance(model.children[0].posterior(spec), np.array([0.0]), spec)
        assert model.predict_variance(np.array([0.0])) == pytest.approx(v / 2, abs=1e-12)

    def test_three_child_variance_formula_oracle(self):
        spec = make_spec([1.0, 1.0], sf2=1.4, sn2=0.2)
        rng = np.random.default_rng(2)
        model = quiet_model(50, spec=spec)
        for _ in range(3):
            X = rng.normal(size=(5, 2))
            model.children.append(ChildModel(X, rng.normal(size=5)))
        x = np.array([0.25, -0.4])
        sims = np.array([kernel_eval(c.center, x, spec) for c in model.children])
        weights = sims / sims.sum()
        variances = np.array([
            posterior_variance(c.posterior(spec), x, spec) for c in model.children
        ])
        expected = float(np.sum(weights ** 2 * variances))
        assert model.predict_variance(x) == pytest.approx(expected, abs=1e-12)
        assert model.predict_variance(x) <= variances.max() + 1e-15

    def test_weights_partition_of_unity(self):
        seeds = SeedPlan(5)
        ds = synth_dataset(300, seeds)
        model = quiet_model(60)
        model.update_batch(ds.X, ds.Y)
        rng = np.random.default_rng(6)
        for x in rng.uniform(-2, 2, size=(100, 2)):
            summary = model.predict_mean(x)
            assert abs(summary.weights.sum() - 1.0) <= 1e-12
            assert np.all(summary.weights >= 0.0)

    def test_underflow_falls_back_to_uniform(self):
        spec = make_spec([1e-3, 1e-3], sn2=0.01)
        model = quiet_model(50, spec=spec)
        model.children = [
            ChildModel(np.array([[0.0, 0.0]]), [1.0]),
            ChildModel(np.array([[0.1, 0.0]]), [2.0]),
        ]
        with pytest.warns(RuntimeWarning):
            summary = model.predict_mean(np.array([1e3, 1e3]))
        assert summary.uniform_fallback
        assert np.allclose(summary.weights, [0.5, 0.5])
        assert summary.normalizer == 0.0

    def test_empty_model_rejected(self):
        model = quiet_model(5)
        with pytest.raises(EmptyModelError):
            model.predict_mean(np.array([0.0]))


class TestPriorInheritance:
    def test_children_carry_parent_mean_after_split(self):
        rng = np.random.default_rng(7)
        X = rng.uniform(-1, 1, size=(41, 1))
        Y = np.sin(3 * X[:, 0]) + rng.normal(0, 0.05, 41)
        sched = TrainSchedule(on_split=False, on_batch=True, fit=FitSchedule(max_iters=30))
        model = SplittingGP(40, train_schedule=sched)
        model.update_batch(X[:40], Y[:40])
        grid = np.linspace(-1, 1, 50)[:, None]
        before = model.predict_mean_batch(grid)
        model.schedule = TrainSchedule.never()
        model.update(X[40], Y[40])
        assert model.n_children == 2
        after = model.predict_mean_batch(grid)
        # One extra observation plus the split barely moves the surface.
        assert np.abs(after - before).max() < 0.3
        assert model.children[0].prior is model.children[1].prior

    def test_fit_uses_residuals(self):
        rng = np.random.default_rng(8)
        X = rng.uniform(-1, 1, size=(30, 1))
        Y = rng.normal(size=30)
        model = quiet_model(20)
        model.update_batch(X, Y)
        assert model.n_children >= 2
        for child in model.children:
            if child.prior is not None:
                offset = child.prior.evaluate(child.X)
                assert np.allclose(child.residuals(), child.Y - offset, atol=1e-12)


class TestMemoryFootprint:
    def test_empty_model(self):
        assert quiet_model(5).memory_footprint() == 0

    def test_single_child_accounting(self):
        model = quiet_model(50)
        rng = np.random.default_rng(9)
        model.update_batch(rng.normal(size=(10, 2)), rng.normal(size=10))
        assert model.n_children == 1
        assert model.memory_footprint() == 8 * (10 * 10 + 10 * 2 + 10 + 2)

    def test_streaming_bound(self):
        seeds = SeedPlan(10)
        n, m = 800, 150
        ds = synth_dataset(n, seeds)
        model = quiet_model(m)
        model.update_batch(ds.X, ds.Y)
        assert model.gram_footprint() <= 8 * m * n
        # Live-child portion obeys the per-child bound; each of the C-1 splits
        # froze at most m+1 rows (plus weights) into a prior node.
        ndim, C = 2, model.n_children
        live = sum(c.footprint_bytes(ndim) for c in model.children)
        assert live <= 8 * (m * n + n * ndim + n + C * ndim)
        assert model.memory_footprint() <= live + 8 * (C - 1) * (m + 1) * (ndim + 1)


class TestSnapshot:
    def test_round_trip_preserves_predictions(self, tmp_path):
        seeds = SeedPlan(11)
        ds = synth_dataset(250, seeds)
        sched = TrainSchedule(on_split=False, on_batch=True, fit=FitSchedule(max_iters=10))
        model = SplittingGP(60, train_schedule=sched)
        model.update_batch(ds.X, ds.Y)
        path = tmp_path / "model.npz"
        model.save(path)
        loaded = SplittingGP.load(path)
        assert loaded.m == model.m
        assert loaded.n_children == model.n_children
        grid = np.random.default_rng(12).uniform(-1, 1, size=(40, 2))
        assert np.array_equal(model.predict_mean_batch(grid), loaded.predict_mean_batch(grid))
        assert loaded.memory_footprint() == model.memory_footprint()


def test_oja_estimator_mode_streams_and_splits():
    seeds = SeedPlan(14)
    ds = synth_dataset(400, seeds)
    model = quiet_model(80, estimator_mode="oja-streaming")
    model.update_batch(ds.X, ds.Y)
    assert model.n_children >= 5
    assert all(c.n <= 80 for c in model.children)
    assert model.n_observations == 400
    # Splits remain deterministic for a fixed stream.
    other = quiet_model(80, estimator_mode="oja-streaming")
    other.update_batch(ds.X, ds.Y)
    assert [c.n for c in other.children] == [c.n for c in model.children]


def test_update_refits_on_split_per_schedule():
    rng = np.random.default_rng(13)
    sched = TrainSchedule(on_split=True, on_batch=False, fit=FitSchedule(max_iters=3))
    model = SplittingGP(10, train_schedule=sched)
    for i in range(11):
        model.update(rng.uniform(-1, 1, size=2), rng.normal())
    assert model.n_children == 2
    assert model.last_fit is not None
