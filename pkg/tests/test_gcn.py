import dataclasses
import math

import numpy as np
import pytest

from surgraph.errors import (
    CorruptCheckpoint,
    DimensionMismatch,
    EmptyGraph,
    VersionMismatch,
)
from surgraph.gcn import (
    AdamHyper,
    GcnConfig,
    adam_step,
    backward,
    forward,
    gcn_layer_forward,
    global_add_pool,
    init_adam_state,
    init_model,
    load_checkpoint,
    loss_and_gradients,
    normalize_adjacency,
    save_checkpoint,
    checkpoint_header,
    checkpoint_step,
)
from surgraph.numerics import grad_check, softmax


@dataclasses.dataclass
class FakeNode:
    features: np.ndarray


@dataclasses.dataclass
class FakeGraph:
    """Minimal stand-in exposing the node/edge protocol the model consumes."""

    x: np.ndarray
    edges: tuple

    @property
    def nodes(self):
        return [FakeNode(row) for row in self.x]

    def feature_matrix(self):
        return self.x


def _random_graph(rng, n, d, p_edge=0.4):
    x = rng.normal(size=(n, d))
    edges = tuple(
        (i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p_edge
    )
    return FakeGraph(x, edges)


SMALL_CFG = GcnConfig(input_dim=5, hidden_dims=(6, 7), num_classes=3, seed=0)


def test_init_shapes_default_architecture():
    cfg = GcnConfig(input_dim=148, num_classes=19, seed=0)
    model = init_model(cfg)
    dims = [(w.shape[0], w.shape[1]) for w in model.weights]
    assert dims == [
        (148, 64), (64, 64), (64, 128), (128, 128),
        (128, 192), (192, 128), (128, 64), (64, 64),
    ]
    assert model.fc_weight.shape == (64, 19)
    assert model.fc_bias.shape == (19,)
    for b, w in zip(model.biases, model.weights):
        assert b.shape == (w.shape[1],)
        np.testing.assert_array_equal(b, 0.0)


def test_init_deterministic_and_bounded():
    a = init_model(SMALL_CFG)
    b = init_model(SMALL_CFG)
    for wa, wb in zip(a.parameter_arrays(), b.parameter_arrays()):
        np.testing.assert_array_equal(wa, wb)
    c = init_model(dataclasses.replace(SMALL_CFG, seed=1))
    assert not np.array_equal(a.weights[0], c.weights[0])
    for w in (*a.weights, a.fc_weight):
        bound = math.sqrt(6.0 / (w.shape[0] + w.shape[1]))
        assert np.max(np.abs(w)) <= bound


def test_normalize_single_node():
    g = FakeGraph(np.zeros((1, 2)), ())
    np.testing.assert_allclose(normalize_adjacency(g).to_dense(), [[1.0]])


def test_normalize_two_nodes_one_edge():
    g = FakeGraph(np.zeros((2, 2)), ((0, 1),))
    np.testing.assert_allclose(normalize_adjacency(g).to_dense(), np.full((2, 2), 0.5))


def test_normalize_triangle():
    g = FakeGraph(np.zeros((3, 2)), ((0, 1), (0, 2), (1, 2)))
    np.testing.assert_allclose(
        normalize_adjacency(g).to_dense(), np.full((3, 3), 1.0 / 3.0), atol=1e-15
    )


def test_normalize_dedupes_and_accepts_kinds():
    g = FakeGraph(np.zeros((2, 2)), ((0, 1), (1, 0, "temporal"), (0, 1, "spatial")))
    np.testing.assert_allclose(normalize_adjacency(g).to_dense(), np.full((2, 2), 0.5))


def test_normalize_empty_graph():
    with pytest.raises(EmptyGraph):
        normalize_adjacency(FakeGraph(np.zeros((0, 2)), ()))


def test_layer_forward_matches_dense_formula():
    rng = np.random.default_rng(9)
    g = _random_graph(rng, 6, 4)
    anorm = normalize_adjacency(g)
    w = rng.normal(size=(4, 5))
    b = rng.normal(size=5)
    out = gcn_layer_forward(g.x, anorm, w, b)
    expected = np.maximum(anorm.to_dense() @ (g.x @ w) + b, 0.0)
    np.testing.assert_allclose(out, expected, atol=1e-12)
    linear = gcn_layer_forward(g.x, anorm, w, b, apply_relu=False)
    np.testing.assert_allclose(linear, anorm.to_dense() @ (g.x @ w) + b, atol=1e-12)


def test_global_add_pool():
    h = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    np.testing.assert_array_equal(global_add_pool(h), [9.0, 12.0])
    with pytest.raises(EmptyGraph):
        global_add_pool(np.zeros((0, 2)))


def test_forward_probs_sum_to_one():
    rng = np.random.default_rng(1)
    model = init_model(SMALL_CFG)
    for _ in range(5):
        g = _random_graph(rng, int(rng.integers(2, 9)), 5)
        logits, probs, pred = forward(model, g)
        assert logits.shape == probs.shape == (3,)
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert pred == int(np.argmax(probs))


def test_zero_model_is_uniform_and_ties_break_low():
    model = init_model(SMALL_CFG)
    zeroed = model.with_vector(np.zeros_like(model.to_vector()))
    g = _random_graph(np.random.default_rng(2), 4, 5)
    _, probs, pred = forward(zeroed, g)
    np.testing.assert_allclose(probs, 1.0 / 3.0)
    assert pred == 0


def test_forward_node_permutation_invariant():
    rng = np.random.default_rng(3)
    model = init_model(SMALL_CFG)
    g = _random_graph(rng, 7, 5)
    logits, _, _ = forward(model, g)
    perm = rng.permutation(7)
    inv = np.argsort(perm)
    pg = FakeGraph(g.x[perm], tuple((int(inv[i]), int(inv[j])) for i, j in g.edges))
    plogits, _, _ = forward(model, pg)
    np.testing.assert_allclose(logits, plogits, atol=1e-10)


def test_disjoint_duplicate_doubles_pooled_logit_shift():
    # two disconnected copies of a graph pool to exactly twice the summary
    rng = np.random.default_rng(4)
    model = init_model(SMALL_CFG)
    g = _random_graph(rng, 5, 5)
    dup_edges = g.edges + tuple((i + 5, j + 5) for i, j in g.edges)
    dup = FakeGraph(np.vstack([g.x, g.x]), dup_edges)
    logits, _, _ = forward(model, g)
    dlogits, _, _ = forward(model, dup)
    np.testing.assert_allclose(
        dlogits - model.fc_bias, 2.0 * (logits - model.fc_bias), atol=1e-9
    )


def test_backward_matches_central_differences():
    rng = np.random.default_rng(5)
    model = init_model(SMALL_CFG)
    g = _random_graph(rng, 6, 5)

    def f(vec):
        m = model.with_vector(vec)
        loss, grads = loss_and_gradients(m, g, 1)
        return loss, grads.to_vector()

    assert grad_check(f, model.to_vector()) < 1e-6


def test_confident_correct_prediction_has_tiny_gradients():
    rng = np.random.default_rng(6)
    model = init_model(SMALL_CFG)
    g = _random_graph(rng, 4, 5)
    # blow up the head so the predicted class saturates
    boosted = dataclasses.replace(model, fc_weight=model.fc_weight * 200.0)
    _, probs, pred = forward(boosted, g)
    assert probs[pred] > 1.0 - 1e-9
    loss, grads = loss_and_gradients(boosted, g, pred)
    assert loss < 1e-8
    assert np.max(np.abs(grads.fc_bias)) < 1e-8


def test_backward_on_dynamic_style_edges():
    rng = np.random.default_rng(7)
    model = init_model(SMALL_CFG)
    g = _random_graph(rng, 5, 5)
    kinds = FakeGraph(g.x, tuple((i, j, "spatial") for i, j in g.edges))

    def f(vec):
        m = model.with_vector(vec)
        loss, grads = loss_and_gradients(m, kinds, 2)
        return loss, grads.to_vector()

    assert grad_check(f, model.to_vector()) < 1e-6
    assert backward(model, kinds, 2) is not None


def test_adam_zero_gradient_is_identity():
    model = init_model(SMALL_CFG)
    state = init_adam_state(model)
    from surgraph.gcn import zeros_like_gradients

    new_model, new_state = adam_step(model, zeros_like_gradients(model), state, AdamHyper())
    np.testing.assert_array_equal(model.to_vector(), new_model.to_vector())
    assert new_state.t == 1


def test_adam_first_step_matches_scalar_oracle():
    model = init_model(SMALL_CFG)
    state = init_adam_state(model)
    rng = np.random.default_rng(8)
    g = _random_graph(rng, 5, 5)
    _, grads = loss_and_gradients(model, g, 0)
    hyper = AdamHyper(lr=0.01)
    new_model, _ = adam_step(model, grads, state, hyper)
    gvec = grads.to_vector()
    # bias correction at t=1 collapses the update to -lr * g / (|g| + eps)
    expected = model.to_vector() - hyper.lr * gvec / (np.abs(gvec) + hyper.eps)
    np.testing.assert_allclose(new_model.to_vector(), expected, atol=1e-12)


def test_adam_deterministic():
    rng = np.random.default_rng(9)
    g = _random_graph(rng, 5, 5)

    def run():
        model = init_model(SMALL_CFG)
        state = init_adam_state(model)
        for step in range(3):
            _, grads = loss_and_gradients(model, g, step % 3)
            model, state = adam_step(model, grads, state, AdamHyper())
        return model.to_vector()

    np.testing.assert_array_equal(run(), run())


def test_checkpoint_round_trip(tmp_path):
    model = init_model(SMALL_CFG)
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path, step=17, extra={"note": "x"})
    loaded = load_checkpoint(path)
    assert loaded.config == model.config
    for a, b in zip(model.parameter_arrays(), loaded.parameter_arrays()):
        np.testing.assert_array_equal(a, b)
    assert checkpoint_step(path) == 17
    assert checkpoint_header(path)["extra"] == {"note": "x"}
    # saving the loaded model reproduces the file byte for byte
    again = tmp_path / "m2.ckpt"
    save_checkpoint(loaded, again, step=17, extra={"note": "x"})
    assert path.read_bytes() == again.read_bytes()


def test_checkpoint_truncated(tmp_path):
    model = init_model(SMALL_CFG)
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-16])
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(path)


def test_checkpoint_trailing_garbage(tmp_path):
    model = init_model(SMALL_CFG)
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    path.write_bytes(path.read_bytes() + b"\x00" * 8)
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(path)


def test_checkpoint_bad_magic(tmp_path):
    model = init_model(SMALL_CFG)
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    blob = bytearray(path.read_bytes())
    blob[:4] = b"NOPE"
    path.write_bytes(bytes(blob))
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(path)


def test_checkpoint_version_mismatch(tmp_path):
    model = init_model(SMALL_CFG)
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    blob = bytearray(path.read_bytes())
    blob[4:8] = (99).to_bytes(4, "little")
    path.write_bytes(bytes(blob))
    with pytest.raises(VersionMismatch):
        load_checkpoint(path)


def test_feature_dim_mismatch_at_forward():
    model = init_model(SMALL_CFG)
    g = FakeGraph(np.zeros((3, 9)), ((0, 1),))
    with pytest.raises(DimensionMismatch) as exc:
        forward(model, g)
    assert "9" in str(exc.value) and "5" in str(exc.value)
