"""Checkpoint container: bitwise round trips and tamper detection."""

import numpy as np
import pytest

from tempcal.checkpoint import Checkpoint, load, save
from tempcal.errors import BlobSizeMismatch, ManifestMismatch


@pytest.fixture
def sample(rng):
    return Checkpoint(
        tensors={
            "alpha": rng.normal(size=(3, 4)),
            "beta": rng.normal(size=7),
            "gamma.scalar": np.asarray(2.5),
        },
        config_echo={"model.dim": "64", "seed": "0"},
        epoch=12,
    )


class TestRoundTrip:
    def test_bitwise(self, sample, tmp_path):
        base = str(tmp_path / "ck")
        save(sample, base)
        back = load(base)
        assert back.epoch == 12
        assert back.config_echo == sample.config_echo
        assert set(back.tensors) == set(sample.tensors)
        for name, arr in sample.tensors.items():
            assert np.array_equal(back.tensors[name], np.asarray(arr, dtype=np.float64))
            assert back.tensors[name].shape == np.asarray(arr).shape

    def test_save_load_save_identical_bytes(self, sample, tmp_path):
        base1, base2 = str(tmp_path / "a"), str(tmp_path / "b")
        save(sample, base1)
        save(load(base1), base2)
        for ext in (".manifest", ".blob"):
            with open(base1 + ext, "rb") as f1, open(base2 + ext, "rb") as f2:
                assert f1.read() == f2.read()

    def test_value_count_matches_shapes(self, sample):
        assert sample.value_count == 12 + 7 + 1

    def test_manifest_is_readable_text(self, sample, tmp_path):
        base = str(tmp_path / "ck")
        save(sample, base)
        text = open(base + ".manifest", encoding="utf-8").read()
        assert "tensor.alpha: shape=3x4 offset=0" in text
        assert "config.model.dim: 64" in text
        assert "tensor.gamma.scalar: shape=scalar offset=19" in text


class TestTampering:
    def test_truncated_blob(self, sample, tmp_path):
        base = str(tmp_path / "ck")
        save(sample, base)
        with open(base + ".blob", "r+b") as f:
            f.truncate(8 * 5)
        with pytest.raises(BlobSizeMismatch):
            load(base)

    def test_extended_blob(self, sample, tmp_path):
        base = str(tmp_path / "ck")
        save(sample, base)
        with open(base + ".blob", "ab") as f:
            f.write(b"\x00" * 8)
        with pytest.raises(BlobSizeMismatch):
            load(base)

    def test_manifest_shape_edit(self, sample, tmp_path):
        base = str(tmp_path / "ck")
        save(sample, base)
        text = open(base + ".manifest", encoding="utf-8").read()
        open(base + ".manifest", "w", encoding="utf-8").write(text.replace("shape=3x4", "shape=4x4"))
        with pytest.raises(ManifestMismatch):
            load(base)

    def test_manifest_offset_edit(self, sample, tmp_path):
        base = str(tmp_path / "ck")
        save(sample, base)
        text = open(base + ".manifest", encoding="utf-8").read()
        open(base + ".manifest", "w", encoding="utf-8").write(text.replace("offset=12", "offset=13"))
        with pytest.raises(ManifestMismatch):
            load(base)

    def test_unknown_format_tag(self, sample, tmp_path):
        base = str(tmp_path / "ck")
        save(sample, base)
        text = open(base + ".manifest", encoding="utf-8").read()
        open(base + ".manifest", "w", encoding="utf-8").write(
            text.replace("format: tempcal-checkpoint-v1", "format: other-v9"))
        with pytest.raises(ManifestMismatch):
            load(base)
