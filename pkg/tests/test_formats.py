import numpy as np
import pytest

from gatscore.checkpoint import (Checkpoint, CheckpointFormatError, deserialize_checkpoint,
                                 read_checkpoint, serialize_checkpoint, write_checkpoint)
from gatscore.data import EmbeddingBundle
from gatscore.model import GatConfig, init_model_params
from gatscore.tgeb import (TgebFormatError, deserialize_tgeb, read_tgeb, serialize_tgeb,
                           write_tgeb)


def sample_checkpoint(seed=0):
    config = GatConfig(num_layers=2, num_heads=3, d_head=4, attention_slope=0.15)
    params = init_model_params(config, 8, seed=seed)
    return Checkpoint.from_params(params, config, 8)


class TestTgmc:
    def test_magic_and_version(self):
        buf = serialize_checkpoint(sample_checkpoint())
        assert buf[:4] == b"TGMC"

    def test_roundtrip_is_f32_exact(self):
        ckpt = sample_checkpoint(seed=3)
        back = deserialize_checkpoint(serialize_checkpoint(ckpt))
        assert back.config == ckpt.config
        assert back.d_in == 8
        for (n1, t1), (n2, t2) in zip(ckpt.params.named_parameters(),
                                      back.params.named_parameters()):
            assert n1 == n2
            assert np.array_equal(t1.data.astype(np.float32).astype(np.float64), t2.data)

    def test_serialization_deterministic(self):
        a = serialize_checkpoint(sample_checkpoint(seed=5))
        b = serialize_checkpoint(sample_checkpoint(seed=5))
        assert a == b

    def test_bad_magic(self):
        buf = b"XXXX" + serialize_checkpoint(sample_checkpoint())[4:]
        with pytest.raises(CheckpointFormatError, match="bad checkpoint magic"):
            deserialize_checkpoint(buf)

    def test_truncation(self):
        buf = serialize_checkpoint(sample_checkpoint())
        with pytest.raises(CheckpointFormatError, match="truncated"):
            deserialize_checkpoint(buf[:-10])

    def test_trailing_bytes(self):
        buf = serialize_checkpoint(sample_checkpoint()) + b"\x00"
        with pytest.raises(CheckpointFormatError, match="trailing"):
            deserialize_checkpoint(buf)

    def test_bad_version(self):
        buf = bytearray(serialize_checkpoint(sample_checkpoint()))
        buf[4:8] = (99).to_bytes(4, "little")
        with pytest.raises(CheckpointFormatError, match="version"):
            deserialize_checkpoint(bytes(buf))

    def test_file_roundtrip(self, tmp_path):
        path = tmp_path / "model.tgmc"
        ckpt = sample_checkpoint(seed=7)
        write_checkpoint(ckpt, path)
        back = read_checkpoint(path)
        assert back.config == ckpt.config

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointFormatError):
            read_checkpoint(tmp_path / "absent.tgmc")


def sample_bundles(seed=0, dim=6):
    rng = np.random.default_rng(seed)
    out = []
    for i, n in enumerate((3, 1, 5)):
        out.append(EmbeddingBundle(essay_id=f"e{i}", essay_vec=rng.normal(size=dim),
                                   token_matrix=rng.normal(size=(n, dim))))
    return out


class TestTgeb:
    def test_magic(self):
        buf = serialize_tgeb(sample_bundles())
        assert buf[:4] == b"TGEB"

    def test_roundtrip_is_f32_exact(self):
        bundles = sample_bundles(seed=1)
        back = deserialize_tgeb(serialize_tgeb(bundles))
        assert list(back) == [b.essay_id for b in bundles]
        for bundle in bundles:
            loaded = back[bundle.essay_id]
            assert np.array_equal(
                bundle.essay_vec.astype(np.float32).astype(np.float64), loaded.essay_vec)
            assert np.array_equal(
                bundle.token_matrix.astype(np.float32).astype(np.float64),
                loaded.token_matrix)

    def test_bad_magic(self):
        buf = b"NOPE" + serialize_tgeb(sample_bundles())[4:]
        with pytest.raises(TgebFormatError, match="bad embedding magic"):
            deserialize_tgeb(buf)

    def test_truncation(self):
        buf = serialize_tgeb(sample_bundles())
        with pytest.raises(TgebFormatError, match="truncated"):
            deserialize_tgeb(buf[:-3])

    def test_duplicate_id(self):
        b = sample_bundles()[0]
        buf = serialize_tgeb([b, b])
        with pytest.raises(TgebFormatError, match="duplicate"):
            deserialize_tgeb(buf)

    def test_mixed_dims_rejected_on_write(self):
        rng = np.random.default_rng(2)
        bundles = [EmbeddingBundle("a", rng.normal(size=4), rng.normal(size=(2, 4))),
                   EmbeddingBundle("b", rng.normal(size=5), rng.normal(size=(2, 5)))]
        with pytest.raises(ValueError, match="dim"):
            serialize_tgeb(bundles)

    def test_file_roundtrip(self, tmp_path):
        path = tmp_path / "embeddings.tgeb"
        bundles = sample_bundles(seed=3)
        write_tgeb(bundles, path)
        back = read_tgeb(path)
        assert set(back) == {b.essay_id for b in bundles}

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            serialize_tgeb([])
