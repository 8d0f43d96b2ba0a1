import io

import numpy as np
import pytest

from smp_spde.noise import PathBatch, WienerPath, antithetic, generate, generate_batch, load, save
from smp_spde.spectral import FieldFormatError


class TestGeneration:
    def test_bit_identical_regeneration(self):
        a = generate(42, 7, 50, 3, 0.01)
        b = generate(42, 7, 50, 3, 0.01)
        assert a.increments.tobytes() == b.increments.tobytes()

    def test_distinct_paths_differ(self):
        a = generate(42, 0, 50, 3, 0.01)
        b = generate(42, 1, 50, 3, 0.01)
        assert not np.array_equal(a.increments, b.increments)

    def test_distinct_seeds_differ(self):
        a = generate(1, 0, 50, 3, 0.01)
        b = generate(2, 0, 50, 3, 0.01)
        assert not np.array_equal(a.increments, b.increments)

    def test_variance_matches_dt(self):
        dt = 0.02
        w = generate(0, 0, 100000, 1, dt)
        assert np.var(w.increments) == pytest.approx(dt, rel=0.05)

    def test_mean_near_zero(self):
        w = generate(3, 0, 100000, 1, 0.01)
        assert abs(np.mean(w.increments)) < 3 * np.sqrt(0.01 / 100000)

    def test_bad_args(self):
        with pytest.raises(ValueError):
            generate(0, 0, 0, 1, 0.1)
        with pytest.raises(ValueError):
            generate(0, 0, 10, 1, 0.0)

    def test_batch_matches_single(self):
        batch = generate_batch(5, [2, 4, 6], 10, 2, 0.1)
        for i, pid in enumerate([2, 4, 6]):
            np.testing.assert_array_equal(batch.increments[i],
                                          generate(5, pid, 10, 2, 0.1).increments)

    def test_batch_duplicate_ids_rejected(self):
        with pytest.raises(ValueError):
            generate_batch(0, [1, 1], 10, 2, 0.1)

    def test_batch_path_accessor(self):
        batch = generate_batch(5, [9], 10, 2, 0.1)
        p = batch.path(0)
        assert (p.seed, p.path_id) == (5, 9)


class TestAntithetic:
    def test_involution(self):
        w = generate(0, 0, 20, 2, 0.1)
        np.testing.assert_array_equal(antithetic(antithetic(w)).increments, w.increments)

    def test_negates(self):
        w = generate(0, 0, 20, 2, 0.1)
        np.testing.assert_array_equal(antithetic(w).increments, -w.increments)


class TestSerialization:
    def test_roundtrip(self, tmp_path):
        w = generate(11, 3, 25, 4, 0.05)
        p = tmp_path / "w.bin"
        save(w, p)
        back = load(p)
        assert (back.seed, back.path_id, back.dt) == (11, 3, 0.05)
        np.testing.assert_array_equal(back.increments, w.increments)

    def test_bad_magic_names_file(self, tmp_path):
        p = tmp_path / "junk.bin"
        p.write_bytes(b"x" * 100)
        with pytest.raises(FieldFormatError, match="junk.bin"):
            load(p)

    def test_truncated_rejected(self, tmp_path):
        w = generate(0, 0, 10, 2, 0.1)
        buf = io.BytesIO()
        save(w, buf)
        p = tmp_path / "trunc.bin"
        p.write_bytes(buf.getvalue()[:-8])
        with pytest.raises(FieldFormatError, match="trunc.bin"):
            load(p)

    def test_header_too_short(self):
        with pytest.raises(FieldFormatError):
            load(io.BytesIO(b"SMPSPDE"))
