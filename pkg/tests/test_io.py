import json
import struct

import numpy as np
import pytest

from gupdm.exceptions import ConfigError, DecodeError
from gupdm.io import checkpoint, config, images, manifest
from gupdm.network import GupdmModel, ModelConfig
from gupdm.optim import AdamState

TINY = dict(channels=4, code_dim=6, n_kernels=2, hyper_blocks=1, hyper_channels=4)


@pytest.mark.parametrize("ext", [".png", ".ppm"])
def test_round_trip_every_8bit_value(tmp_path, ext):
    arr = np.stack([np.arange(256, dtype=np.uint8).reshape(16, 16)] * 3, axis=2)
    arr[:, :, 1] = arr[:, :, 1][::-1]
    path = tmp_path / f"img{ext}"
    images.save_image(path, images.from_uint8(arr))
    back = images.load_image(path)
    np.testing.assert_array_equal(images.to_uint8(back), arr)
    np.testing.assert_array_equal(back, arr / 255.0)


def test_one_pixel_ppm():
    data = b"P6\n1 1\n255\n" + bytes([128, 64, 255])
    img = images.decode_image(data)
    assert img.shape == (1, 1, 3)
    assert img[0, 0].tolist() == [128 / 255, 64 / 255, 1.0]


def test_ppm_header_comments():
    data = b"P6\n# made by hand\n2 1\n255\n" + bytes(range(6))
    assert images.decode_ppm(data).shape == (1, 2, 3)


def test_truncated_and_bad_files(tmp_path):
    with pytest.raises(DecodeError):
        images.decode_image(b"P6\n2 2\n255\n" + bytes(5))
    with pytest.raises(DecodeError):
        images.decode_image(b"P6\n1 1\n65535\n" + bytes(6))
    with pytest.raises(DecodeError):
        images.decode_image(b"GIF89a....")
    path = tmp_path / "a.png"
    images.save_image(path, np.zeros((4, 4, 3)))
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(DecodeError):
        images.load_image(path)


def test_quantisation_rounds_half_up():
    assert images.to_uint8(np.array([0.5 / 255, 1.5 / 255, -0.2, 1.3])).tolist() == [1, 2, 0, 255]


def test_list_images_sorted(tmp_path):
    for n in ("b.png", "a.ppm", "c.txt"):
        (tmp_path / n).write_bytes(b"")
    assert [p.split("/")[-1] for p in images.list_images(tmp_path)] == ["a.ppm", "b.png"]


def test_checkpoint_round_trip_bit_exact(tmp_path):
    model = GupdmModel(ModelConfig(**TINY, seed=5))
    params = [p.data for p in model.parameter_set("omega")]
    adam = {"omega": AdamState(7, [np.full_like(p, 0.5) for p in params], [np.full_like(p, 0.25) for p in params])}
    ckpt = checkpoint.from_model(model, step=7, adam=adam, extra={"note": "x"})
    path = tmp_path / "m.ckpt"
    checkpoint.save(path, ckpt)
    back = checkpoint.load(path)
    assert back.step == 7 and back.seed == 5 and back.extra == {"note": "x"}
    for name, arr in ckpt.tensors.items():
        assert back.tensors[name].tobytes() == np.asarray(arr, dtype="<f4").tobytes(), name
    restored = checkpoint.to_model(back)
    for (n, p), (_, q) in zip(model.named_parameters(), restored.named_parameters()):
        np.testing.assert_array_equal(q.data, p.data.astype(np.float32).astype(np.float64))
    st = checkpoint.adam_states(back)["omega"]
    assert st.step == 7 and len(st.m) == len(params)
    assert checkpoint.encode(back) == path.read_bytes()


def test_checkpoint_layout_by_hand():
    ckpt = checkpoint.Checkpoint({"a": 1}, {"w": np.array([[1.0, 2.0]])})
    data = checkpoint.encode(ckpt)
    assert data[:4] == b"GUPD"
    version, hlen = struct.unpack("<II", data[4:12])
    assert version == 1
    header = json.loads(data[12 : 12 + hlen])
    assert header["model_config"] == {"a": 1}
    rest = data[12 + hlen :]
    assert rest == struct.pack("<IH", 1, 1) + b"w" + struct.pack("<BII", 2, 1, 2) + np.array([1, 2], "<f4").tobytes()


def test_checkpoint_rejects_bad_input():
    data = checkpoint.encode(checkpoint.Checkpoint({}, {"w": np.zeros(3)}))
    with pytest.raises(DecodeError, match="version"):
        checkpoint.decode(data[:4] + struct.pack("<I", 2) + data[8:])
    with pytest.raises(DecodeError):
        checkpoint.decode(b"NOPE" + data[4:])
    with pytest.raises(DecodeError):
        checkpoint.decode(data[:-1])
    with pytest.raises(DecodeError):
        checkpoint.decode(data + b"\0")


def test_config_defaults_and_overrides():
    model, train = config.parse("")
    assert model == ModelConfig() and train.epochs == 200
    model, train = config.parse("[train]\nepochs = 200\nbatch = 4\nM = 2\n[model]\nK = 3\n[loss]\nlambda1 = 0.1\n")
    assert (train.epochs, train.batch_size, train.m_variants) == (200, 4, 2)
    assert model.n_kernels == 3 and train.lambda1 == 0.1
    m2, t2 = config.parse(config.dump(model, train))
    assert m2 == model and t2 == train


def test_config_errors_list_valid_keys():
    with pytest.raises(ConfigError, match="valid keys: .*epochs"):
        config.parse("[train]\nepoch = 3\n")
    with pytest.raises(ConfigError):
        config.parse("[optim]\nlr = 1\n")
    with pytest.raises(ConfigError):
        config.parse("[train]\nepochs = many\n")
    with pytest.raises(ConfigError):
        config.parse("[train]\nstrategy = z\n")


def test_manifest_round_trip(tmp_path):
    (tmp_path / "in").mkdir()
    (tmp_path / "ref").mkdir()
    for name in ("x.png", "y.png"):
        images.save_image(tmp_path / "in" / name, np.full((4, 4, 3), 0.2))
    images.save_image(tmp_path / "ref" / "x.png", np.full((4, 4, 3), 0.6))
    man = manifest.manifest_from_dirs(tmp_path / "in", tmp_path / "ref")
    assert man.pairs[1][1] is None
    path = tmp_path / "m.json"
    manifest.save_manifest(path, man)
    back = manifest.load_manifest(path)
    assert back.pairs == man.pairs
    inputs, refs = back.load()
    assert refs[1] is None and refs[0][0, 0, 0] == 0.6
    with pytest.raises(ConfigError):
        back.validate(require_reference=True)


def test_manifest_entry_forms(tmp_path):
    images.save_image(tmp_path / "a.png", np.zeros((2, 2, 3)))
    path = tmp_path / "m.json"
    path.write_text(json.dumps({"pairs": ["a.png", ["a.png", "a.png"], {"input": "a.png"}]}))
    man = manifest.load_manifest(path)
    assert [r is None for _, r in man.pairs] == [True, False, True]
    path.write_text(json.dumps({"pairs": [["missing.png", None]]}))
    with pytest.raises(ConfigError):
        manifest.load_manifest(path).validate()
    path.write_text(json.dumps({"pairs": [42]}))
    with pytest.raises(ConfigError):
        manifest.load_manifest(path)
