import struct

import numpy as np
import pytest

from app.engine.alignnet import init_params
from app.model import (
    CheckpointError,
    ClassEmbeddingTable,
    ConfigError,
    LabeledFeatureSet,
    ParseError,
    ProtocolError,
    SynthConfig,
    TrainConfig,
    ZslSplit,
)
from app.service import dataio


def _random_table(rng, n: int, d: int) -> ClassEmbeddingTable:
    scale = 10.0 ** rng.integers(-6, 6, size=(n, d))
    return ClassEmbeddingTable(
        class_names=[f"w{i}_{int(rng.integers(1000))}" for i in range(n)],
        vectors=rng.standard_normal((n, d)) * scale,
    )


# ========== Round Trips ==========

def test_embeddings_round_trip_is_byte_identical(rng, tmp_path):
    for i in range(50):
        table = _random_table(rng, int(rng.integers(1, 12)), int(rng.integers(1, 9)))
        first, second = tmp_path / f"a{i}.txt", tmp_path / f"b{i}.txt"
        dataio.save_embeddings(table, first)
        loaded = dataio.load_embeddings(first)
        dataio.save_embeddings(loaded, second)

        assert first.read_bytes() == second.read_bytes()
        assert loaded.class_names == table.class_names
        assert np.array_equal(loaded.vectors, table.vectors)


def test_features_round_trip_is_byte_identical(rng, tmp_path):
    for i in range(50):
        m, d = int(rng.integers(1, 20)), int(rng.integers(1, 6))
        labels = [f"c{int(j)}" for j in rng.integers(0, 4, size=m)]
        features = LabeledFeatureSet(class_labels=labels, features=rng.standard_normal((m, d)))
        first, second = tmp_path / f"a{i}.txt", tmp_path / f"b{i}.txt"
        dataio.save_features(features, first)
        dataio.save_features(dataio.load_features(first), second)
        assert first.read_bytes() == second.read_bytes()


def test_checkpoint_round_trip_is_byte_identical(rng, tmp_path):
    for i in range(50):
        in_dim = int(rng.integers(1, 6))
        hidden = (int(rng.integers(1, 6)), int(rng.integers(1, 6)))
        out_dim = int(rng.integers(2, 6))
        params = init_params(in_dim, hidden, out_dim, rng)
        cfg = TrainConfig(
            k1=int(rng.integers(1, 5)),
            k2=None if i % 2 else 9,
            lr=float(rng.uniform(1e-4, 1.0)),
            lam=float(rng.uniform(0.0, 1e-2)),
            hidden=hidden if i % 3 else None,
            hub_correction=bool(i % 2),
            seed=i,
        )
        first, second = tmp_path / f"a{i}.bin", tmp_path / f"b{i}.bin"
        dataio.save_checkpoint(params, cfg, first)
        loaded_params, loaded_cfg = dataio.load_checkpoint(first)
        dataio.save_checkpoint(loaded_params, loaded_cfg, second)

        assert first.read_bytes() == second.read_bytes()
        assert loaded_cfg.model_dump() == cfg.model_dump()
        assert np.array_equal(loaded_params.flat(), params.flat())


def test_split_round_trip(tmp_path):
    split = ZslSplit(seen=frozenset({"a", "c"}), unseen=frozenset({"b"}))
    path = tmp_path / "split.txt"
    dataio.save_split(split, path, ("a", "b", "c"))
    assert path.read_text() == "seen a\nseen c\nunseen b\n"
    assert dataio.load_split(path) == split


# ========== Parse Errors ==========

@pytest.mark.parametrize("text, line", [
    ("", 1),
    ("2 2\na 1 2\n", 1),
    ("2 2\na 1 2\nb 1 x\n", 3),
    ("2 2\na 1 2\nb 1\n", 3),
    ("2 2\na 1 2\na 3 4\n", 3),
    ("1 2\na 1 inf\n", 2),
    ("1 2\na 1 nan\n", 2),
    ("2 2\na 1 2\nb 1_0 2\n", 3),
    ("1_0 2\na 1 2\n", 1),
    ("2 +2\na 1 2\nb 3 4\n", 1),
])
def test_malformed_embedding_files(tmp_path, text, line):
    path = tmp_path / "bad.txt"
    path.write_text(text)
    with pytest.raises(ParseError) as err:
        dataio.load_embeddings(path)
    assert err.value.line == line


def test_invalid_utf8_is_a_parse_error_on_its_line(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_bytes(b"2 1\na 1\nd\xffg 2\n")
    with pytest.raises(ParseError) as err:
        dataio.load_embeddings(path)
    assert err.value.line == 3


def test_malformed_split_files(tmp_path):
    path = tmp_path / "split.txt"
    path.write_text("seen a\nmaybe b\n")
    with pytest.raises(ParseError) as err:
        dataio.load_split(path)
    assert err.value.line == 2

    path.write_text("seen a\nunseen a\n")
    with pytest.raises(ParseError):
        dataio.load_split(path)

    path.write_text("seen a\nseen b\n")
    with pytest.raises(ProtocolError):
        dataio.load_split(path)


def _checkpoint_bytes(tmp_path) -> bytes:
    path = tmp_path / "ckpt.bin"
    params = init_params(3, (4, 4), 2, np.random.default_rng(0))
    dataio.save_checkpoint(params, TrainConfig(), path)
    return path.read_bytes()


@pytest.mark.parametrize("mutate", [
    lambda b: b[:-1],
    lambda b: b[:30],
    lambda b: b + b"\x00",
    lambda b: b"XXXX" + b[4:],
    lambda b: b[:4] + struct.pack("<I", 2) + b[8:],
    lambda b: b.replace(b"hidden=16,16", b"hidden=16,1_6"),
    lambda b: b.replace(b"hidden=16,16", b"hidden=16,1x"),
    lambda b: b.replace(b"hidden=16,16", b"hidden=16,1\xff"),
    lambda b: b.replace(b"max_epochs=300", b"max_epochs=3_0"),
])
def test_corrupt_checkpoints(tmp_path, mutate):
    path = tmp_path / "corrupt.bin"
    path.write_bytes(mutate(_checkpoint_bytes(tmp_path)))
    with pytest.raises(CheckpointError):
        dataio.load_checkpoint(path)


def test_checkpoint_version_is_reported(tmp_path):
    data = _checkpoint_bytes(tmp_path)
    path = tmp_path / "v2.bin"
    path.write_bytes(data[:4] + struct.pack("<I", 2) + data[8:])
    with pytest.raises(CheckpointError) as err:
        dataio.load_checkpoint(path)
    assert err.value.details["version"] == 2


# ========== Synthetic Data ==========

def test_synthetic_data_is_deterministic(small_cfg):
    a = dataio.generate_synthetic(small_cfg)
    b = dataio.generate_synthetic(small_cfg)
    assert np.array_equal(a[0].features, b[0].features)
    assert np.array_equal(a[1].vectors, b[1].vectors)
    assert dataio.synthetic_split(small_cfg) == dataio.synthetic_split(small_cfg)


def test_synthetic_shapes(small_cfg):
    features, embeddings, centers = dataio.generate_synthetic(small_cfg)
    assert features.num_rows == 14 * 4
    assert features.dim == 6
    assert embeddings.dim == 8
    assert centers.num_classes == 14
    np.testing.assert_allclose(np.linalg.norm(embeddings.vectors, axis=1), 1.0, atol=1e-12)

    split = dataio.synthetic_split(small_cfg)
    assert len(split.unseen) == 4
    assert split.seen | split.unseen == set(embeddings.class_names)


def test_aligned_data_has_maximal_consistency(aligned_cfg):
    assert dataio.synthetic_consistency(aligned_cfg, 5) == 5.0
    noisy = aligned_cfg.model_copy(update={"discrepancy_rho": 4.0})
    assert dataio.synthetic_consistency(noisy, 5) < 5.0


def test_calibrate_rho_lands_in_band(aligned_cfg):
    rho = dataio.calibrate_rho(aligned_cfg, 5, (2.0, 4.0))
    assert rho > 0.0
    value = dataio.synthetic_consistency(aligned_cfg.model_copy(update={"discrepancy_rho": rho}), 5)
    assert 2.0 <= value <= 4.0


def test_calibrate_rho_unreachable_band(aligned_cfg):
    with pytest.raises(ConfigError):
        dataio.calibrate_rho(aligned_cfg, 5, (6.0, 7.0))


def test_synth_config_limits():
    with pytest.raises(ConfigError):
        SynthConfig(num_classes=3)
    with pytest.raises(ConfigError):
        SynthConfig(num_classes=10, num_unseen=9)
    with pytest.raises(ConfigError):
        SynthConfig(noise_sigma=-1.0)
