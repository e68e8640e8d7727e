import time

import numpy as np
import pytest

from soccermap import autograd as ag
from soccermap.autograd import GridTensor
from soccermap.network import (
    ABLATIONS,
    CheckpointError,
    NetworkSpec,
    SoccerMap,
    ablation_specs,
    assemble,
    head_layers,
    layer_shapes,
    load_checkpoint,
    param_count,
    read_checkpoint,
    save_checkpoint,
)

from gradcheck import check

SMALL = NetworkSpec(grid=(8, 8), filters=4, prediction_filters=4, upsampling_filters=4)


def jitter_biases(model, seed=0):
    """Nonzero biases keep ReLU inputs off the kink where finite differences break."""
    rng = np.random.default_rng(seed)
    for w, b in model.params.values():
        b.values[...] = rng.uniform(0.05, 0.2, b.shape)
    return model


def rand_state(spec, n=1, seed=0):
    return np.random.default_rng(seed).standard_normal((n, *spec.grid, spec.in_channels))


def test_param_count_hand_computed():
    # F = 32, NF = 2, every component on; each layer contributes k*k*cin*cout + cout
    feat = (5 * 5 * 13 * 32 + 32) + 5 * (5 * 5 * 32 * 32 + 32)  # 10,432 + 5 * 25,632
    pred = 3 * ((32 * 32 + 32) + (32 * 1 + 1))  # 1x1 32 then 1x1 1, per scale
    up = 2 * ((3 * 3 * 1 * 32 + 32) + (3 * 3 * 32 * 1 + 1))
    fuse = 2 * (2 * 1 + 1)
    assert feat + pred + up + fuse == 143083
    spec = NetworkSpec()
    assert param_count(spec) == 143083
    assert assemble(spec).param_count() == 143083


def test_param_count_independent_of_grid():
    a = NetworkSpec(grid=(104, 68), filters=8)
    b = NetworkSpec(grid=(16, 8), filters=8)
    assert param_count(a) == param_count(b)


def test_grid_must_divide_by_four():
    with pytest.raises(ValueError):
        NetworkSpec(grid=(52, 34))
    with pytest.raises(ValueError):
        NetworkSpec(conv_layers_per_scale=0)
    with pytest.raises(ValueError):
        NetworkSpec(head="tanh")


@pytest.mark.parametrize("name", list(ABLATIONS))
@pytest.mark.parametrize("head", ["sigmoid_probability", "softmax_selection", "linear_value"])
def test_output_shape_every_ablation(name, head):
    spec = ablation_specs(NetworkSpec(grid=(16, 12), filters=4, head=head))[name]
    out = assemble(spec).predict(rand_state(spec, 2))
    assert out.shape == (2, 16, 12)
    if head == "sigmoid_probability":
        assert np.all((out > 0) & (out < 1))
    elif head == "softmax_selection":
        np.testing.assert_allclose(out.sum(axis=(1, 2)), 1.0, atol=1e-6)


def test_ablation_table_names():
    assert set(ABLATIONS) >= {"full", "-UP", "-FL", "-NLP", "-FL-NLP", "single-scale"}
    specs = ablation_specs(NetworkSpec(filters=4))
    assert specs["-FL-NLP"].flags() == {"SC": True, "UP": True, "FL": False, "NLP": False, "NF": 2}
    assert not specs["single-scale"].multi_scale
    with pytest.raises(ValueError):
        ablation_specs(NetworkSpec(), ["bogus"])


def test_full_size_forward_probability_surface():
    spec = NetworkSpec(filters=8)
    surf = assemble(spec).forward(rand_state(spec)[0])
    assert surf.values.shape == (104, 68) and surf.kind == "probability"
    assert np.all((surf.values > 0) & (surf.values < 1))


def test_forward_deterministic_and_tape_free():
    m = assemble(SMALL, seed=3)
    x = rand_state(SMALL)[0]
    a, b = m.forward(x), m.forward(x)
    assert a.values.tobytes() == b.values.tobytes()
    assert all(p.grad is None for p in m.parameters())


def test_zero_input_constant_in_center():
    spec = NetworkSpec(grid=(32, 32), filters=4)
    out = assemble(spec, seed=1).forward(np.zeros((32, 32, 13))).values
    center = out[8:24, 8:24]
    assert np.ptp(center) < 1e-6


def test_shape_mismatch_rejected():
    m = assemble(SMALL)
    with pytest.raises(ag.ContractError):
        m.forward(np.zeros((8, 4, 13)))
    with pytest.raises(ag.ContractError):
        m.forward(np.zeros((8, 8, 12)))


@pytest.mark.parametrize("name", ["full", "-UP", "-FL-NLP", "single-scale"])
def test_full_model_gradient_check(name):
    spec = ablation_specs(SMALL)[name]
    m = jitter_biases(assemble(spec, seed=2, dtype=np.float64))
    x = GridTensor(rand_state(spec, seed=5))
    cells = np.array([[3, 4]])
    y = np.array([1])

    def loss():
        return ag.mean(ag.binary_logloss(ag.gather_cells(m(x), cells), y))

    assert check(loss, m.parameters() + [x]) < 1e-3


def test_softmax_and_value_head_gradients():
    for head in ("softmax_selection", "linear_value"):
        spec = NetworkSpec(grid=(8, 8), filters=3, prediction_filters=3, upsampling_filters=3, head=head)
        m = jitter_biases(assemble(spec, seed=4, dtype=np.float64))
        x = GridTensor(rand_state(spec, seed=6))
        cells = np.array([[1, 6]])
        if head == "softmax_selection":
            fn = lambda: ag.mean(ag.neg_log(ag.gather_cells(m(x), cells)))
        else:
            fn = lambda: ag.mean(ag.squared_error(ag.gather_cells(m(x), cells), np.array([0.3])))
        assert check(fn, m.parameters()) < 1e-3


def test_head_layers_per_configuration():
    assert head_layers(NetworkSpec()) == ["fuse_1x"]
    assert head_layers(NetworkSpec(fusion_layer=False)) == ["pred_1x_1"]
    assert head_layers(NetworkSpec(fusion_layer=False, nonlinear_prediction=False)) == ["pred_1x_0"]
    assert head_layers(NetworkSpec(multi_scale=False)) == ["up_2to1_1"]
    names = {n for n, *_ in layer_shapes(NetworkSpec())}
    assert set(head_layers(NetworkSpec())) <= names


# ----------------------------------------------------------------------------
# checkpoints


def test_checkpoint_round_trip(tmp_path):
    m = assemble(SMALL, seed=9)
    path = tmp_path / "m.smap"
    save_checkpoint(m, path, {"seed": 9, "epochs": 3})
    back = load_checkpoint(path)
    assert back.spec == m.spec
    assert back.metadata == {"seed": 9, "epochs": 3}
    for name, arr in m.state_dict().items():
        assert back.state_dict()[name].tobytes() == arr.astype("<f4").tobytes()
    x = rand_state(SMALL)[0]
    assert back.forward(x).values.tobytes() == m.forward(x).values.tobytes()


def test_checkpoint_bad_magic_and_truncation(tmp_path):
    path = tmp_path / "m.smap"
    save_checkpoint(assemble(SMALL), path)
    data = path.read_bytes()
    (tmp_path / "magic.smap").write_bytes(b"XMAP" + data[4:])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "magic.smap")
    for cut in (3, 10, len(data) // 2, len(data) - 1):
        (tmp_path / "cut.smap").write_bytes(data[:cut])
        with pytest.raises(CheckpointError):
            read_checkpoint(tmp_path / "cut.smap")
    (tmp_path / "ver.smap").write_bytes(data[:4] + (99).to_bytes(4, "little") + data[8:])
    with pytest.raises(CheckpointError):
        read_checkpoint(tmp_path / "ver.smap")


def test_head_swap_requires_flag(tmp_path):
    path = tmp_path / "m.smap"
    m = assemble(SMALL, seed=1)
    save_checkpoint(m, path)
    with pytest.raises(CheckpointError):
        load_checkpoint(path, head="softmax_selection")
    swapped = load_checkpoint(path, head="softmax_selection", head_swap=True)
    assert swapped.spec.head == "softmax_selection"
    trunk = m.state_dict()
    for name, arr in swapped.state_dict().items():
        layer = name.rsplit(".", 1)[0]
        if layer not in head_layers(swapped.spec):
            np.testing.assert_array_equal(arr, trunk[name])
    out = swapped.predict(rand_state(SMALL))
    np.testing.assert_allclose(out.sum(), 1.0, atol=1e-6)


def test_inference_under_50ms_at_default_size():
    spec = NetworkSpec()
    m = assemble(spec)
    x = rand_state(spec)[0].astype(np.float32)
    m.forward(x)
    best = min(_timed(m, x) for _ in range(5))
    print(f"single 104x68x13 forward at F=32: {best * 1000:.1f} ms")
    assert best < 0.05


def _timed(m, x):
    t = time.perf_counter()
    m.forward(x)
    return time.perf_counter() - t
