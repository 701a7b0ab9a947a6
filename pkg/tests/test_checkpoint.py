import numpy as np
import pytest

from coopconv import checkpoint as ckpt
from coopconv.neural import ActorCriticNet
from coopconv.policy import ModularPolicy


def test_roundtrip_is_byte_identical(tmp_path):
    net = ActorCriticNet(6, 12, 4, rng=np.random.default_rng(5))
    p1 = tmp_path / "a.ckpt"
    p2 = tmp_path / "b.ckpt"
    ckpt.save_plain_net(p1, net, meta={"env": "bandit"})
    loaded, meta = ckpt.load_plain_net(p1)
    ckpt.save_plain_net(p2, loaded, meta={"env": meta["env"]})
    assert p1.read_bytes() == p2.read_bytes()
    for k in net.params:
        assert np.array_equal(net.params[k], loaded.params[k])


def test_modular_roundtrip_with_detached_head(tmp_path):
    policy = ModularPolicy("bandit", 4, 8, 3, rng=np.random.default_rng(0))
    policy.detach_partner_module(1)
    path = tmp_path / "m.ckpt"
    ckpt.save_modular_policy(path, policy, meta={"note": "x"})
    loaded, meta = ckpt.load_modular_policy(path)
    assert meta["partner_ids"] == [0, 2]
    assert loaded.active_ids() == [0, 2]
    for i in (0, 2):
        for k in policy.partners[i].params:
            assert np.array_equal(loaded.partners[i].params[k],
                                  policy.partners[i].params[k])
    obs = np.eye(4)[0]
    mask = np.ones(8, dtype=bool)
    a = policy.forward(obs, 2, mask)["dist"].probs
    b = loaded.forward(obs, 2, mask)["dist"].probs
    assert np.array_equal(a, b)


def test_version_mismatch_rejected(tmp_path):
    net = ActorCriticNet(3, 4, 2, rng=np.random.default_rng(0))
    path = tmp_path / "v.ckpt"
    ckpt.save_plain_net(path, net)
    raw = path.read_bytes()
    patched = raw.replace(b'"format_version":1', b'"format_version":99', 1)
    path.write_bytes(patched)
    with pytest.raises(ckpt.CheckpointError, match="version"):
        ckpt.load_checkpoint(path)


def test_corrupt_payload_rejected(tmp_path):
    net = ActorCriticNet(3, 4, 2, rng=np.random.default_rng(0))
    path = tmp_path / "c.ckpt"
    ckpt.save_plain_net(path, net)
    raw = bytearray(path.read_bytes())
    raw[-3] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(ckpt.CheckpointError, match="checksum"):
        ckpt.load_checkpoint(path)


def test_not_a_checkpoint(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"hello world\n")
    with pytest.raises(ckpt.CheckpointError, match="not a checkpoint"):
        ckpt.load_checkpoint(path)


def test_wrong_kind_rejected(tmp_path):
    net = ActorCriticNet(3, 4, 2, rng=np.random.default_rng(0))
    path = tmp_path / "p.ckpt"
    ckpt.save_plain_net(path, net)
    with pytest.raises(ckpt.CheckpointError, match="modular"):
        ckpt.load_modular_policy(path)
