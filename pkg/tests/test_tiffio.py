import numpy as np
import pytest

from msrobust.core import LabelMask
from msrobust.errors import ConfigError, MissingInputError
from msrobust.tiffio import read_image, read_label_mask, write_image, write_label_mask

from conftest import make_image


class TestImageRoundTrip:
    def test_u16_multiband(self, tmp_path):
        img = make_image(h=20, w=30, seed=1, dtype=np.uint16)
        path = tmp_path / "x.tif"
        write_image(path, img)
        back = read_image(path, bands=img.bands)
        assert back == img

    def test_u8_multiband(self, tmp_path):
        img = make_image(h=16, w=16, seed=2)
        path = tmp_path / "x.tif"
        write_image(path, img)
        assert read_image(path, bands=img.bands) == img

    def test_default_band_names(self, tmp_path):
        img = make_image(bands=tuple("abcdefgh"), h=8, w=8, seed=3, dtype=np.uint16)
        path = tmp_path / "x.tif"
        write_image(path, img)
        back = read_image(path)
        assert back.bands == ("COASTAL", "B", "G", "Y", "R", "REDEDGE", "NIR1", "NIR2")

    def test_interleaved_layout_normalizes(self, tmp_path):
        import tifffile

        arr = np.random.default_rng(0).integers(0, 65536, (12, 10, 4)).astype(np.uint16)
        path = tmp_path / "hwb.tif"
        tifffile.imwrite(path, arr)
        img = read_image(path)
        assert (img.height, img.width) == (12, 10)
        assert len(img.bands) == 4
        assert (img.data[2] == arr[:, :, 2]).all()

    def test_tiled_layout_reads_identically(self, tmp_path):
        import tifffile

        arr = np.random.default_rng(1).integers(0, 65536, (4, 96, 128)).astype(np.uint16)
        stripped, tiled = tmp_path / "s.tif", tmp_path / "t.tif"
        tifffile.imwrite(stripped, arr, photometric="minisblack")
        tifffile.imwrite(tiled, arr, photometric="minisblack", tile=(32, 32))
        assert read_image(stripped) == read_image(tiled)

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingInputError):
            read_image(tmp_path / "absent.tif")

    def test_deterministic_bytes(self, tmp_path):
        img = make_image(h=32, w=32, seed=4, dtype=np.uint16)
        a, b = tmp_path / "a.tif", tmp_path / "b.tif"
        write_image(a, img)
        write_image(b, img)
        assert a.read_bytes() == b.read_bytes()


class TestLabelRoundTrip:
    def test_round_trip(self, tmp_path):
        mask = LabelMask(np.random.default_rng(5).integers(0, 7, (14, 9)).astype(np.uint8), indexed=True)
        path = tmp_path / "m.tif"
        write_label_mask(path, mask)
        assert read_label_mask(path, indexed=True) == mask

    def test_rejects_multiband_labels(self, tmp_path):
        img = make_image(h=8, w=8, seed=6)
        path = tmp_path / "img.tif"
        write_image(path, img)
        with pytest.raises(ConfigError):
            read_label_mask(path)
