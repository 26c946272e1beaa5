import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from traj_shapley.errors import NonFiniteLoss
from traj_shapley.predictor import (
    VARIANCE_FLOOR,
    ConstantVelocityPredictor,
    Dims,
    FeatureMask,
    InjectedAgent,
    ModelParams,
    PredictiveDistribution,
    SocialPredictor,
    TrainHyper,
    aggregate_edges,
    apply_mask,
    batch_nll,
    build_batch,
    load_checkpoint,
    nll_gradient,
    predict,
    predict_many,
    save_checkpoint,
    stack_inputs,
    train,
)
from traj_shapley.scene import PredictionQuery, enumerate_queries, neighbors_of
from traj_shapley.synth import SynthConfig, generate_dataset

from conftest import make_dataset, make_scene, straight_line


def random_params(dims, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    p = ModelParams.init(dims, seed, scale)
    return ModelParams.from_vector(dims, p.to_vector() + 0.1 * rng.normal(size=p.to_vector().shape))


def crowd_scene(n=4, T=8, n_max=None, seed=0):
    rng = np.random.default_rng(seed)
    start = rng.uniform(-2, 2, (n, 2))
    vel = rng.normal(size=(n, 2))
    return make_scene([straight_line(s, v, T) for s, v in zip(start, vel)], n_max=n_max)


def test_constant_velocity_means():
    scene = make_scene([straight_line([-0.4, 0.0], [1.0, 0.0], 2)])
    # frame 1: position (0, 0), velocity (1, 0)
    model = ConstantVelocityPredictor(h=2, horizon=3, radius=5.0)
    dist = predict(model, scene.padded(1), PredictionQuery(0, 0, 1, 2, 3))
    assert dist.num_components == 1
    np.testing.assert_allclose(dist.means[:, 0], [[0.4, 0], [0.8, 0], [1.2, 0]], rtol=0, atol=1e-12)
    np.testing.assert_array_equal(dist.variances, 0.25)


def test_constant_velocity_ignores_neighbors():
    scene = crowd_scene()
    q = PredictionQuery(0, 0, 3, 3, 4)
    model = ConstantVelocityPredictor(3, 4, radius=10.0)
    full = predict(model, scene, q)
    for bits in ([0, 0, 0, 0], [0, 1, 0, 1], [1, 0, 1, 0]):
        other = predict(model, scene, q, FeatureMask(True, np.array(bits, dtype=bool)))
        np.testing.assert_array_equal(full.means, other.means)
        np.testing.assert_array_equal(full.variances, other.variances)


def test_social_with_zero_decoder_equals_constant_velocity():
    dims = Dims(3, 4, 5, 6, 7)
    p = random_params(dims, 1)
    arrays = dict(p.arrays)
    for name in ("dec_W1", "dec_b1", "dec_W2", "dec_b2"):
        arrays[name] = np.zeros_like(arrays[name])
    social = SocialPredictor(ModelParams(dims, arrays), radius=10.0)
    cv = ConstantVelocityPredictor(3, 4, radius=10.0)
    scene = crowd_scene()
    q = PredictionQuery(0, 1, 4, 3, 4)
    np.testing.assert_array_equal(predict(social, scene, q).means, predict(cv, scene, q).means)


def test_apply_mask_full_is_identity():
    scene = crowd_scene()
    q = PredictionQuery(0, 2, 4, 3, 3)
    row = neighbors_of(scene, q, 10.0)
    x = apply_mask(scene, q, row, FeatureMask.full(scene.n_max))
    track = scene.tracks[2]
    np.testing.assert_array_equal(x.hist_pos, track.positions[2:5])
    np.testing.assert_array_equal(x.hist_vel, track.velocities[2:5])
    np.testing.assert_array_equal(x.hist_acc, track.accelerations[2:5])
    np.testing.assert_array_equal(x.adjacency, row)
    np.testing.assert_array_equal(x.nb_pos, scene.positions[:, 4])


def test_apply_mask_no_neighbors_zeroes_row():
    scene = crowd_scene()
    q = PredictionQuery(0, 0, 4, 3, 3)
    row = neighbors_of(scene, q, 10.0)
    assert row.sum() > 0
    x = apply_mask(scene, q, row, FeatureMask.no_neighbors(scene.n_max))
    assert not x.adjacency.any()


def test_apply_mask_partial_bits_follow_masking_rule():
    scene = crowd_scene(n=5)
    q = PredictionQuery(0, 0, 4, 3, 3)
    row = neighbors_of(scene, q, 10.0)
    bits = np.array([1, 0, 1, 1, 0], dtype=bool)
    x = apply_mask(scene, q, row, FeatureMask(True, bits))
    np.testing.assert_array_equal(x.adjacency, np.where(bits, row, 0.0))


def test_apply_mask_history_off_is_static():
    scene = crowd_scene()
    q = PredictionQuery(0, 1, 5, 4, 2)
    x = apply_mask(scene, q, neighbors_of(scene, q, 10.0), FeatureMask(False, np.ones(4, dtype=bool)))
    np.testing.assert_array_equal(x.hist_pos, np.tile(scene.tracks[1].positions[5], (4, 1)))
    assert not x.hist_vel.any() and not x.hist_acc.any()


def test_apply_mask_appends_injected_agents():
    scene = crowd_scene()
    q = PredictionQuery(0, 0, 4, 3, 3)
    agent = InjectedAgent(scene.tracks[1].translated([50.0, 0.0]), 4)
    x = apply_mask(scene, q, neighbors_of(scene, q, 1.0), FeatureMask.full(scene.n_max, [agent]))
    assert len(x.adjacency) == scene.n_max + 1
    assert x.adjacency[-1] == 1.0  # connected regardless of distance
    np.testing.assert_array_equal(x.nb_pos[-1], scene.tracks[1].positions[4] + [50.0, 0.0])


def test_apply_mask_replacement_is_radius_gated():
    scene = crowd_scene()
    q = PredictionQuery(0, 0, 4, 3, 3)
    row = neighbors_of(scene, q, 10.0)
    far = InjectedAgent(scene.tracks[1].translated([100.0, 0.0]), 4)
    bits = np.array([1, 0, 1, 1], dtype=bool)
    x = apply_mask(scene, q, row, FeatureMask(True, bits, (), ((1, far),)), radius=10.0)
    assert x.adjacency[1] == 0.0
    near = InjectedAgent(scene.tracks[0].translated([0.5, 0.0]), 4)
    y = apply_mask(scene, q, row, FeatureMask(True, bits, (), ((1, near),)), radius=10.0)
    assert y.adjacency[1] == 1.0
    np.testing.assert_array_equal(y.nb_pos[1], scene.tracks[0].positions[4] + [0.5, 0.0])
    with pytest.raises(ValueError):
        apply_mask(scene, q, row, FeatureMask(True, np.ones(4, bool), (), ((1, near),)), radius=10.0)


def test_aggregate_edges_examples():
    np.testing.assert_array_equal(aggregate_edges([[1.0, 2.0]], [1.0]), [1.0, 2.0])
    np.testing.assert_array_equal(aggregate_edges([[1.0, 0.0], [3.0, 0.0]], [1.0, 1.0]), [2.0, 0.0])
    np.testing.assert_array_equal(aggregate_edges([[1.0, 0.0, 5.0], [3.0, 0.0, 1.0]], [0.0, 0.0]), [0, 0, 0])
    np.testing.assert_array_equal(aggregate_edges([[1.0, 0.0], [3.0, 9.0]], [1.0, 0.0]), [1.0, 0.0])


@settings(max_examples=40, deadline=None)
@given(
    j=st.integers(1, 6),
    extra=st.integers(0, 4),
    seed=st.integers(0, 2**16),
)
def test_aggregate_edges_ignores_appended_unconnected_slots(j, extra, seed):
    rng = np.random.default_rng(seed)
    E = rng.normal(size=(j, 3))
    A = (rng.random(j) < 0.5).astype(float)
    base = aggregate_edges(E, A)
    padded = aggregate_edges(np.vstack([E, rng.normal(size=(extra, 3))]), np.concatenate([A, np.zeros(extra)]))
    np.testing.assert_array_equal(base, padded)
    if A.sum():
        np.testing.assert_allclose(base, E[A > 0].mean(axis=0), rtol=1e-12, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**16), bit=st.integers(0, 5))
def test_mask_locality(seed, bit):
    scene = crowd_scene(n=6, seed=seed)
    q = PredictionQuery(0, 0, 4, 3, 3)
    radius = 1.5
    row = neighbors_of(scene, q, radius)
    model = SocialPredictor(random_params(Dims(3, 3, 4, 5, 6), seed), radius)
    if row[bit]:
        return
    bits = np.ones(6, dtype=bool)
    a = predict(model, scene, q, FeatureMask(True, bits))
    bits[bit] = False
    b = predict(model, scene, q, FeatureMask(True, bits))
    np.testing.assert_array_equal(a.means, b.means)
    np.testing.assert_array_equal(a.variances, b.variances)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**16), extra=st.integers(1, 4))
def test_dummy_invisibility(seed, extra):
    scene = crowd_scene(n=4, seed=seed)
    padded = scene.padded(4 + extra)
    q = PredictionQuery(0, 1, 4, 3, 3)
    model = SocialPredictor(random_params(Dims(3, 3, 4, 5, 6), seed), 3.0)
    a, b = predict(model, scene, q), predict(model, padded, q)
    np.testing.assert_array_equal(a.means, b.means)
    np.testing.assert_array_equal(a.variances, b.variances)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**16), scale=st.floats(0.1, 5.0))
def test_distribution_validity(seed, scale):
    scene = crowd_scene(n=5, seed=seed)
    q = PredictionQuery(0, 2, 4, 3, 3)
    model = SocialPredictor(random_params(Dims(3, 3, 4, 5, 6), seed, scale), 3.0)
    d = predict(model, scene, q)
    assert np.abs(d.weights.sum(axis=1) - 1).max() <= 1e-12
    assert (d.weights >= 0).all()
    assert (d.variances >= VARIANCE_FLOOR).all()
    assert np.isfinite(d.means).all()


def test_predictive_distribution_validation():
    with pytest.raises(ValueError):
        PredictiveDistribution(np.array([[0.6, 0.6]]), np.zeros((1, 2, 2)), np.ones((1, 2, 2)))
    with pytest.raises(ValueError):
        PredictiveDistribution(np.ones((1, 1)), np.zeros((1, 2, 2)), np.ones((1, 2, 2)))
    with pytest.raises(ValueError):
        PredictiveDistribution.gaussian(np.array([[np.nan, 0.0]]), np.ones((1, 2)))
    d = PredictiveDistribution.gaussian(np.zeros((2, 2)), np.full((2, 2), 1e-12))
    assert (d.variances == VARIANCE_FLOOR).all()


def test_batched_prediction_matches_single():
    scene = crowd_scene(n=5, seed=3)
    model = SocialPredictor(random_params(Dims(3, 3, 4, 5, 6), 3), 3.0)
    queries = [PredictionQuery(0, a, 4, 3, 3) for a in range(5)]
    inputs = [apply_mask(scene, q, neighbors_of(scene, q, 3.0), FeatureMask.full(5)) for q in queries]
    for x, d in zip(inputs, predict_many(model, inputs)):
        single = model.predict_inputs(x)
        np.testing.assert_allclose(d.means, single.means, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(d.variances, single.variances, rtol=1e-12, atol=1e-12)


def _batch(seed=0, n_queries=6):
    dataset, _ = generate_dataset(SynthConfig(num_scenes=2, agents_per_scene=5, steps=12, seed=seed))
    queries = enumerate_queries(dataset, 3, 4, 2)[:n_queries]
    return build_batch(dataset, queries, 4.0)


def test_zero_params_give_finite_loss_and_gradient():
    batch = _batch()
    loss, grad = nll_gradient(ModelParams.zeros(Dims(3, 4)), batch)
    assert np.isfinite(loss) and np.isfinite(grad.to_vector()).all()


def test_duplicated_query_has_same_gradient():
    batch = _batch(n_queries=1)
    twice = batch.subset(np.array([0, 0]))
    p = random_params(Dims(3, 4, 5, 6, 7), 2)
    l1, g1 = nll_gradient(p, batch)
    l2, g2 = nll_gradient(p, twice)
    assert l1 == pytest.approx(l2, rel=1e-14)
    np.testing.assert_allclose(g1.to_vector(), g2.to_vector(), rtol=1e-12, atol=1e-15)


def test_exploding_params_raise_non_finite_loss():
    p = ModelParams.from_vector(Dims(3, 4), np.full(ModelParams.zeros(Dims(3, 4)).to_vector().shape, 1e3))
    with pytest.raises(NonFiniteLoss), np.errstate(over="ignore", invalid="ignore"):
        nll_gradient(p, _batch())


def test_zero_epochs_returns_params_unchanged():
    p = random_params(Dims(3, 4, 5, 6, 7), 4)
    out = train(p, _batch(), TrainHyper(epochs=0))
    np.testing.assert_array_equal(out.to_vector(), p.to_vector())


@pytest.mark.parametrize("optimizer", ["sgd", "adam"])
def test_same_seed_trains_bit_identically(optimizer):
    p = random_params(Dims(3, 4, 5, 6, 7), 5)
    hyper = TrainHyper(epochs=3, batch_size=4, seed=7, optimizer=optimizer)
    a = train(p, _batch(), hyper)
    b = train(p, _batch(), hyper)
    assert a.to_vector().tobytes() == b.to_vector().tobytes()


def test_training_lowers_nll_on_default_corpus():
    dataset, _ = generate_dataset(SynthConfig(seed=1))
    batch = build_batch(dataset, enumerate_queries(dataset, 4, 6), 4.0)
    p0 = ModelParams.init(Dims(4, 6), seed=0)
    history = []
    train(p0, batch, TrainHyper(epochs=50), history)
    assert len(history) == 50
    assert history[-1] < batch_nll(p0, batch)


def test_gradient_clipping_bounds_sgd_step():
    p = random_params(Dims(3, 4, 5, 6, 7), 6, scale=3.0)
    hyper = TrainHyper(epochs=1, batch_size=1000, learning_rate=0.1, optimizer="sgd", clip_norm=5.0,
                       history_dropout=0.0, neighbor_dropout=0.0, final_lr_fraction=1.0)
    out = train(p, _batch(), hyper)
    assert np.linalg.norm(out.to_vector() - p.to_vector()) <= 0.1 * 5.0 + 1e-12


def test_checkpoint_round_trip(tmp_path):
    scene = crowd_scene(n=4, seed=8)
    q = PredictionQuery(0, 0, 4, 3, 3)
    social = SocialPredictor(random_params(Dims(3, 3, 4, 5, 6), 8), 2.5)
    cv = ConstantVelocityPredictor(3, 3, 2.5, sigma0=0.3)
    for model in (social, cv):
        path = tmp_path / f"{model.kind}.json"
        save_checkpoint(model, path, TrainHyper(), dt=0.4)
        loaded = load_checkpoint(path)
        assert loaded.kind == model.kind and loaded.radius == model.radius
        a, b = predict(model, scene, q), predict(loaded, scene, q)
        assert a.means.tobytes() == b.means.tobytes()
        assert a.variances.tobytes() == b.variances.tobytes()


def test_build_batch_matches_stack_inputs():
    dataset = make_dataset(crowd_scene(n=3, seed=9))
    queries = enumerate_queries(dataset, 3, 3)
    batch = build_batch(dataset, queries, 5.0)
    assert len(batch) == len(queries) and batch.target.shape == (len(queries), 3, 2)
    scene = dataset.scenes[0]
    inputs = [apply_mask(scene, q, neighbors_of(scene, q, 5.0), FeatureMask.full(3)) for q in queries]
    np.testing.assert_array_equal(stack_inputs(inputs).edge_in, batch.edge_in)


def test_training_objective_is_the_metric_nll():
    from traj_shapley.metrics import nll

    dataset = make_dataset(crowd_scene(n=4, T=10, seed=12))
    queries = enumerate_queries(dataset, 3, 3)
    model = SocialPredictor(random_params(Dims(3, 3, 4, 5, 6), 12), 2.0)
    scene = dataset.scenes[0]
    per_query = [nll(predict(model, scene, q), scene.tracks[q.target].positions[q.t + 1 : q.t + 4]) for q in queries]
    assert batch_nll(model.params, build_batch(dataset, queries, 2.0)) == pytest.approx(np.mean(per_query), rel=1e-12)
