import numpy as np
import pytest

from tsencoder import encoder as E
from tsencoder import numerics as nx
from tsencoder.numerics import Tensor


def test_default_config_first_conv_shape():
    params = E.build(E.EncoderConfig(), np.random.default_rng(0))
    assert params["block1.weight"].shape == (128, 1, 5)
    assert params["block2.weight"].shape == (256, 128, 11)
    assert params["block3.weight"].shape == (512, 256, 21)
    assert params["fc.weight"].shape == (256, 256)


def test_default_parameter_count_is_fixed():
    cfg = E.EncoderConfig()
    n = sum(int(np.prod(s)) for s in E.parameter_shapes(cfg).values())
    # conv: 128*5 + 256*128*11 + 512*256*21; per-filter vectors: 4*(128+256+512);
    # fc: 256*256 + 256; output norm: 2*256
    assert n == 640 + 360448 + 2752512 + 3584 + 65792 + 512
    assert E.build(cfg, np.random.default_rng(1)).n_parameters() == n


def test_build_is_seeded(tiny_config):
    a = E.build(tiny_config, np.random.default_rng(5))
    b = E.build(tiny_config, np.random.default_rng(5))
    for name in a.tensors:
        assert np.array_equal(a[name].data, b[name].data)


def test_build_initialization(tiny_config):
    p = E.build(tiny_config, np.random.default_rng(2))
    assert np.all(p["block2.slope"].data == 0.25)
    assert np.all(p["block3.gamma"].data == 1.0) and np.all(p["out.beta"].data == 0.0)
    bound = np.sqrt(1.0 / (8 * 11))
    assert np.abs(p["block2.weight"].data).max() <= bound


def test_k_sets_output_extent():
    p = E.build(E.EncoderConfig(filters=(8, 16, 32), k=64), np.random.default_rng(0))
    assert p["fc.weight"].shape == (64, 16)


@pytest.mark.parametrize("bad, fragment", [
    (dict(filters=(8, 16, 31)), "even"),
    (dict(kernels=(4, 11, 21)), "odd"),
    (dict(k=0), "k must"),
    (dict(dropout_p=1.0), "dropout"),
])
def test_invalid_config(bad, fragment):
    with pytest.raises(ValueError, match=fragment):
        E.build(E.EncoderConfig(**bad), np.random.default_rng(0))


def test_config_lists_all_violations():
    problems = E.EncoderConfig(filters=(8, 16, 31), k=0).violations()
    assert len(problems) == 2


def test_conv_block_zero_weights(tiny_params):
    for name in ("block1.weight", "block1.bias", "block1.beta"):
        tiny_params[name].data[...] = 0.0
    out = E.conv_block(Tensor(np.random.default_rng(0).normal(size=(2, 1, 24))), tiny_params, 1)
    assert out.shape == (2, 8, 24)
    assert np.all(out.data == 0.0)


def test_conv_block_matches_composition(tiny_params):
    x = Tensor(np.random.default_rng(1).normal(size=(2, 8, 12)))
    p = tiny_params
    expected = nx.prelu(nx.instance_norm(nx.conv1d(x, p["block2.weight"], p["block2.bias"], 5),
                                         p["block2.gamma"], p["block2.beta"], 1e-5), p["block2.slope"])
    got = E.conv_block(x, p, 2)
    np.testing.assert_array_equal(got.data, expected.data)


def test_attention_uniform_logits_give_temporal_mean():
    rng = np.random.default_rng(3)
    h = rng.normal(size=(2, 3, 7))
    feats = np.concatenate([h, np.full((2, 3, 7), 0.7)], axis=1)
    out = E.attention_summarize(Tensor(feats)).data
    np.testing.assert_allclose(out, h.mean(axis=2), rtol=1e-13)


def test_attention_single_step():
    feats = np.array([[[4.0], [-2.0], [9.0], [3.0]]])
    np.testing.assert_array_equal(E.attention_summarize(Tensor(feats)).data, [[4.0, -2.0]])


def test_attention_hand_case():
    feats = np.array([[[1.0, 2.0, 3.0], [0.0, 0.0, np.log(2.0)]]])
    assert E.attention_summarize(Tensor(feats)).data[0, 0] == pytest.approx(2.25, abs=1e-14)


def test_attention_rejects_odd_filters():
    with pytest.raises(nx.ShapeError):
        E.attention_summarize(Tensor(np.zeros((1, 3, 4))))


def test_attention_weights_sum_to_one(tiny_params):
    info = {}
    E.encode(tiny_params, np.random.default_rng(4).normal(size=(3, 1, 50)), inspect=info)
    assert info["attention"].shape == (3, 16, 12)
    assert np.all(np.abs(info["attention"].sum(axis=2) - 1.0) <= 1e-12)


def test_internal_lengths_for_24(tiny_params):
    info = {}
    out = E.encode(tiny_params, np.zeros((1, 1, 24)) + np.arange(24.0), inspect=info)
    assert info["lengths"] == [24, 12, 6]
    assert out.shape == (1, 8)


@pytest.mark.parametrize("t", [4, 24, 100, 571, 2709])
def test_output_dim_for_any_length(tiny_params, t):
    x = np.random.default_rng(t).normal(size=(2, 1, t))
    out = E.encode(tiny_params, x)
    assert out.shape == (2, 8)
    assert np.all(np.isfinite(out.data))


def test_rejects_too_short(tiny_params):
    with pytest.raises(nx.SeriesTooShortError, match="minimum of 4"):
        E.encode(tiny_params, np.zeros((1, 1, 3)))


def test_identical_rows_identical_outputs(tiny_params):
    s = np.random.default_rng(6).normal(size=40)
    out = E.encode(tiny_params, np.stack([s, s])[:, None, :]).data
    assert np.array_equal(out[0], out[1])


def test_eval_mode_is_pure(tiny_params):
    x = np.random.default_rng(7).normal(size=(3, 1, 33))
    assert np.array_equal(E.encode(tiny_params, x).data, E.encode(tiny_params, x).data)


def test_train_mode_depends_on_rng(tiny_params):
    x = np.random.default_rng(7).normal(size=(3, 1, 33))
    a = E.encode(tiny_params, x, train=True, rng=np.random.default_rng(1)).data
    b = E.encode(tiny_params, x, train=True, rng=np.random.default_rng(2)).data
    assert not np.array_equal(a, b)


def test_output_normalized_over_components(tiny_params):
    info = {}
    out = E.encode(tiny_params, np.random.default_rng(8).normal(size=(4, 1, 64)), inspect=info).data
    assert np.all(np.abs(out.mean(axis=1)) < 1e-10)
    var = out.var(axis=1)
    # eps shrinks the variance to v / (v + eps), v being the pre-norm variance
    v = info["pre_norm"].var(axis=1)
    assert np.all(var <= 1.0)
    np.testing.assert_allclose(var, v / (v + 1e-5), rtol=1e-12)


def test_represent_handles_mixed_lengths(tiny_params):
    rng = np.random.default_rng(9)
    series = [rng.normal(size=n) for n in (30, 12, 30, 50, 12)]
    reps = E.represent(tiny_params, series)
    for i, s in enumerate(series):
        np.testing.assert_allclose(reps[i], E.encode(tiny_params, s[None, None, :]).data[0], atol=1e-14)


def test_full_encoder_grad_check():
    cfg = E.EncoderConfig(filters=(8, 16, 32), k=8)
    rng = np.random.default_rng(10)
    params = E.build(cfg, rng)
    x = rng.normal(size=(2, 1, 32))
    w = rng.normal(size=(2, 8))

    def loss():
        return nx.total(E.encode(params, x), w)

    assert nx.grad_check(loss, params.values(), max_entries=40, rng=rng) < 1e-4


# --------------------------------------------------------------------------
# weight file

def test_roundtrip_default(tmp_path):
    params = E.build(E.EncoderConfig(), np.random.default_rng(0))
    path = tmp_path / "enc.tse"
    E.save(params, path)
    loaded = E.load(path)
    assert loaded.config == params.config
    for name in params.tensors:
        assert loaded[name].data.tobytes() == params[name].data.tobytes()
    assert E.to_bytes(loaded) == path.read_bytes()


def test_roundtrip_k64(tmp_path):
    params = E.build(E.EncoderConfig(filters=(8, 16, 32), k=64), np.random.default_rng(0))
    E.save(params, tmp_path / "k64.tse")
    assert E.load(tmp_path / "k64.tse").config.k == 64


def test_corrupted_magic(tmp_path, tiny_params):
    blob = bytearray(E.to_bytes(tiny_params))
    blob[:4] = b"JUNK"
    (tmp_path / "bad.tse").write_bytes(bytes(blob))
    with pytest.raises(E.NotEncoderFileError, match="not an encoder file"):
        E.load(tmp_path / "bad.tse")


def test_wrong_version(tiny_params):
    blob = b"TSENC002" + E.to_bytes(tiny_params)[8:]
    with pytest.raises(E.UnsupportedVersionError):
        E.from_bytes(blob)


def test_truncated(tiny_params):
    blob = E.to_bytes(tiny_params)
    with pytest.raises(E.TruncatedFileError):
        E.from_bytes(blob[:-100])


def test_checksum(tiny_params):
    blob = bytearray(E.to_bytes(tiny_params))
    blob[100] ^= 0xFF
    with pytest.raises(E.ChecksumError):
        E.from_bytes(bytes(blob))


def test_header_layout(tiny_params):
    import struct
    blob = E.to_bytes(tiny_params)
    assert blob[:8] == b"TSENC001"
    (hlen,) = struct.unpack_from("<I", blob, 8)
    fields = struct.unpack_from(f"<{hlen // 4}i", blob, 12)
    assert fields == (8, 16, 32, 5, 11, 21, 2, 5, 10, 8, 200000, 10000000)
