import struct

import numpy as np
import pytest

from sparseseg import checkpoint
from sparseseg.segnet import ModelParams, NetConfig


def test_round_trip_is_bit_exact(tmp_path, tiny_net):
    params = ModelParams.init(tiny_net, seed=5)
    checkpoint.save(params, tmp_path / "m.ckpt", meta={"note": "x"})
    loaded, meta = checkpoint.load(tmp_path / "m.ckpt")
    assert loaded.config == params.config
    assert list(loaded.tensors) == list(params.tensors)
    for name in params.tensors:
        assert loaded[name].value.tobytes() == params[name].value.tobytes()
    assert meta == {"note": "x"}


def test_default_network_round_trip(tmp_path):
    params = ModelParams.init(NetConfig(), seed=0)
    checkpoint.save(params, tmp_path / "d.ckpt")
    again = tmp_path / "e.ckpt"
    checkpoint.save(checkpoint.load(tmp_path / "d.ckpt")[0], again)
    assert (tmp_path / "d.ckpt").read_bytes() == again.read_bytes()


def test_layout_header(tmp_path, tiny_net):
    checkpoint.save(ModelParams.init(tiny_net), tmp_path / "m.ckpt")
    blob = (tmp_path / "m.ckpt").read_bytes()
    assert blob[:8] == checkpoint.MAGIC
    version, cfg_len = struct.unpack_from("<II", blob, 8)
    assert version == 1
    (count,) = struct.unpack_from("<I", blob, 16 + cfg_len)
    assert count == len(ModelParams.init(tiny_net).tensors)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda b: b"NOTACKPT" + b[8:],
        lambda b: b[:-3],
        lambda b: b + b"\0",
        lambda b: b[:8] + struct.pack("<I", 99) + b[12:],
    ],
)
def test_corrupt_files_are_rejected(tmp_path, tiny_net, mutate):
    checkpoint.save(ModelParams.init(tiny_net), tmp_path / "m.ckpt")
    (tmp_path / "bad.ckpt").write_bytes(mutate((tmp_path / "m.ckpt").read_bytes()))
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.load(tmp_path / "bad.ckpt")


def test_missing_checkpoint(tmp_path):
    with pytest.raises(checkpoint.CheckpointError, match="missing.ckpt"):
        checkpoint.load(tmp_path / "missing.ckpt")


def test_nonfinite_values_survive(tmp_path, tiny_net):
    params = ModelParams.init(tiny_net)
    v = params["fine.b"].value.copy()
    v[0, :3] = [np.inf, -0.0, 5e-324]
    params["fine.b"].assign(v)
    checkpoint.save(params, tmp_path / "m.ckpt")
    assert checkpoint.load(tmp_path / "m.ckpt")[0]["fine.b"].value.tobytes() == v.tobytes()
