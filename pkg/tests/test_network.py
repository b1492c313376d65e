import json

import numpy as np
import pytest

from polyrelax.errors import ParseError, ShapeError
from polyrelax.network import (
    Activation,
    Affine,
    Network,
    Property,
    dense_network,
    evaluate,
    load_dataset,
    load_network,
    network_to_dict,
    random_network,
    save_network,
)

from oracles import forward


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return path


def test_minimal_affine_file(tmp_path):
    doc = {"format": "polyrelax-network", "version": 1,
           "layers": [{"type": "affine", "shape": [1, 2], "weights": [1.0, 2.0], "bias": [0.5]}]}
    net = load_network(write_json(tmp_path / "n.json", doc))
    assert len(net.layers) == 1
    assert net.input_dim == 2 and net.output_dim == 1


def test_bias_length_mismatch(tmp_path):
    doc = {"format": "polyrelax-network", "version": 1,
           "layers": [{"type": "affine", "shape": [3, 2], "weights": [0.0] * 6, "bias": [0.0] * 4}]}
    with pytest.raises(ShapeError):
        load_network(write_json(tmp_path / "n.json", doc))


def test_adjacent_dimension_mismatch():
    with pytest.raises(ShapeError):
        Network((Affine(np.ones((3, 2)), np.zeros(3)), Activation("relu"), Affine(np.ones((1, 2)), np.zeros(1))))


def test_first_layer_must_be_affine():
    with pytest.raises(ShapeError):
        Network((Activation("relu"),))


def test_malformed_json_reports_line(tmp_path):
    p = tmp_path / "n.json"
    p.write_text('{\n "format": "polyrelax-network",\n "layers": [\n}')
    with pytest.raises(ParseError) as err:
        load_network(p)
    assert err.value.line is not None


def test_unknown_layer_type(tmp_path):
    doc = {"format": "polyrelax-network", "version": 1,
           "layers": [{"type": "affine", "shape": [1, 1], "weights": [1.0], "bias": [0.0]}, {"type": "softmax"}]}
    with pytest.raises(ParseError):
        load_network(write_json(tmp_path / "n.json", doc))


def test_save_load_round_trip_is_bit_exact(tmp_path, rng):
    net = random_network(rng, [3, 5, 4, 2], "tanh")
    net = Network(net.layers + (Activation("maxpool", [[0, 1]]),), mean=rng.normal(size=3), std=rng.uniform(1, 2, 3))
    save_network(tmp_path / "n.json", net)
    back = load_network(tmp_path / "n.json")
    assert network_to_dict(back) == network_to_dict(net)
    for a, b in zip(net.layers, back.layers):
        if isinstance(a, Affine):
            assert np.array_equal(a.weights, b.weights) and np.array_equal(a.bias, b.bias)
    assert np.array_equal(back.mean, net.mean) and np.array_equal(back.std, net.std)


def test_identity_network():
    net = dense_network([np.eye(3)], [np.zeros(3)])
    x = np.array([0.3, -1.0, 2.0])
    np.testing.assert_array_equal(evaluate(net, x), x)


def test_small_relu_example():
    net = Network((Affine([[1.0, -1.0]], [0.5]), Activation("relu")))
    assert evaluate(net, [2.0, 1.0])[0] == 1.5


@pytest.mark.parametrize("seed", range(5))
def test_evaluate_matches_straight_line_oracle(seed):
    rng = np.random.default_rng(seed)
    sizes = [4, 7, 6, 3]
    net = random_network(rng, sizes)
    Ws = [layer.weights for layer in net.layers if isinstance(layer, Affine)]
    bs = [layer.bias for layer in net.layers if isinstance(layer, Affine)]
    for x in rng.normal(size=(20, 4)):
        ref = forward(Ws, bs, x)
        np.testing.assert_allclose(evaluate(net, x), ref, rtol=1e-12, atol=1e-14)


def test_evaluate_batch_and_activations(rng):
    X = rng.normal(size=(10, 2))
    for kind, f in (("sigmoid", lambda z: 1 / (1 + np.exp(-z))), ("tanh", np.tanh)):
        net = Network((Affine(np.eye(2), np.zeros(2)), Activation(kind)))
        np.testing.assert_allclose(evaluate(net, X), f(X), rtol=1e-14)
    pool = Network((Affine(np.eye(3), np.zeros(3)), Activation("maxpool", [[0, 2], [1]])))
    X3 = rng.normal(size=(5, 3))
    np.testing.assert_array_equal(evaluate(pool, X3), np.column_stack([np.maximum(X3[:, 0], X3[:, 2]), X3[:, 1]]))


def test_evaluate_rejects_wrong_width():
    with pytest.raises(ShapeError):
        evaluate(dense_network([np.eye(2)], [np.zeros(2)]), [1.0, 2.0, 3.0])


def test_extreme_sigmoid_is_finite():
    net = Network((Affine([[1.0]], [0.0]), Activation("sigmoid")))
    np.testing.assert_array_equal(evaluate(net, [[-1000.0], [1000.0]])[:, 0], [0.0, 1.0])


def test_load_dataset_single_row(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("1,0.5,0.25\n")
    net = dense_network([np.eye(2)], [np.zeros(2)])
    s = load_dataset(p, net)
    assert len(s) == 1 and s[0].label == 1
    np.testing.assert_array_equal(s[0].x, [0.5, 0.25])


def test_load_dataset_wrong_columns(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("1,0.5,0.25,3\n")
    with pytest.raises(ParseError):
        load_dataset(p, dense_network([np.eye(2)], [np.zeros(2)]))


def test_load_dataset_order_and_normalization(tmp_path, rng):
    X = rng.normal(size=(100, 2))
    p = tmp_path / "d.csv"
    p.write_text("".join(f"{i % 3},{float(a)!r},{float(b)!r}\n" for i, (a, b) in enumerate(X)))
    net = Network(dense_network([np.eye(2)], [np.zeros(2)]).layers, mean=[1.0, -1.0], std=[2.0, 4.0])
    s = load_dataset(p, net)
    assert len(s) == 100
    assert [t.label for t in s] == [i % 3 for i in range(100)]
    np.testing.assert_allclose(np.array([t.x for t in s]), (X - [1.0, -1.0]) / [2.0, 4.0])
    raw = load_dataset(p, net, normalize=False)
    np.testing.assert_array_equal(np.array([t.x for t in raw]), X)


def test_load_dataset_regression_and_bad_number(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("0.75,1,2\n")
    assert load_dataset(p, regression=True)[0].target == 0.75
    p.write_text("1,abc\n")
    with pytest.raises(ParseError):
        load_dataset(p)


def test_property_box_and_validation():
    lo, hi = Property(0.1, clip=(0.0, 1.0)).input_box([0.05, 0.5])
    np.testing.assert_allclose(lo, [0.0, 0.4])
    np.testing.assert_allclose(hi, [0.15, 0.6])
    with pytest.raises(ValueError):
        Property(-0.1)
