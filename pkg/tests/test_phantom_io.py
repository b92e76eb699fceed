import math

import numpy as np
import pytest
import torch
from PIL import Image

from vdamp.phantom_io import (SHEPP_LOGAN, EllipseSpec, center_crop, largest_dyadic,
                              load_grayscale, save_grayscale, shepp_logan)


def phantom_oracle(n, table):
    img = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            x = (2 * j + 1) / n - 1
            y = 1 - (2 * i + 1) / n
            for e in table:
                dx, dy = x - e.center[0], y - e.center[1]
                u = dx * math.cos(e.angle) + dy * math.sin(e.angle)
                v = -dx * math.sin(e.angle) + dy * math.cos(e.angle)
                if (u / e.axes[0]) ** 2 + (v / e.axes[1]) ** 2 <= 1:
                    img[i, j] += e.intensity
    return img / img.max()


def test_phantom_range_and_corners():
    img = shepp_logan(128)
    assert img.dtype == torch.complex128
    assert tuple(img.shape) == (128, 128)
    assert float(img.real.max()) == 1.0
    assert torch.all(img.imag == 0)
    for i, j in [(0, 0), (0, -1), (-1, 0), (-1, -1)]:
        assert img[i, j] == 0


def test_phantom_matches_ellipse_oracle():
    img = shepp_logan(64).real.numpy()
    assert np.allclose(img, phantom_oracle(64, SHEPP_LOGAN), atol=1e-12)


def test_modified_phantom_has_higher_contrast():
    standard = shepp_logan(64).real
    modified = shepp_logan(64, modified=True).real
    assert float(standard[32, 32]) == pytest.approx(0.02)
    assert float(modified[32, 32]) == pytest.approx(0.2)
    assert float(modified.max()) == 1.0


def test_rectangular_phantom():
    img = shepp_logan(32, 64)
    assert tuple(img.shape) == (32, 64)


def test_phantom_rejects_small_sizes():
    with pytest.raises(ValueError, match='16x16'):
        shepp_logan(8)
    with pytest.raises(ValueError):
        shepp_logan(64, 12)


def test_ellipse_axes_must_be_positive():
    with pytest.raises(ValueError):
        EllipseSpec(1.0, (0.0, 0.0), (0.0, 0.5), 0.0)


@pytest.mark.parametrize('n,expected', [(1, 1), (16, 16), (300, 256), (513, 512)])
def test_largest_dyadic(n, expected):
    assert largest_dyadic(n) == expected


def test_center_crop():
    arr = np.arange(36).reshape(6, 6)
    assert center_crop(arr, (2, 4)).tolist() == [[13, 14, 15, 16], [19, 20, 21, 22]]


def test_sixteen_bit_round_trip(tmp_path):
    img = shepp_logan(64, modified=True)
    save_grayscale(img, tmp_path / 'phantom.pgm')
    loaded = load_grayscale(tmp_path / 'phantom.pgm')
    assert loaded.dtype == torch.complex128
    assert float(torch.max(torch.abs(loaded - img))) <= 2 ** -16


def test_eight_bit_round_trip(tmp_path):
    img = shepp_logan(64, modified=True)
    save_grayscale(img, tmp_path / 'phantom.pgm', bits=8)
    with Image.open(tmp_path / 'phantom.pgm') as im:
        assert im.mode == 'L'
    loaded = load_grayscale(tmp_path / 'phantom.pgm')
    assert float(torch.max(torch.abs(loaded - img))) <= 1 / 510 + 1e-12


def test_all_black_image(tmp_path):
    save_grayscale(torch.zeros(32, 32, dtype=torch.complex128), tmp_path / 'black.pgm')
    assert torch.all(load_grayscale(tmp_path / 'black.pgm') == 0)


def test_saving_takes_clipped_magnitude(tmp_path):
    img = torch.tensor([[2.0, -0.5], [0.25j, 0.0]], dtype=torch.complex128)
    img = img.repeat(8, 8)
    save_grayscale(img, tmp_path / 'mag.pgm')
    loaded = load_grayscale(tmp_path / 'mag.pgm').real
    assert float(loaded[0, 0]) == 1.0
    assert float(loaded[0, 1]) == pytest.approx(0.5, abs=1e-5)
    assert float(loaded[1, 0]) == pytest.approx(0.25, abs=1e-5)


def test_save_rejects_bit_depth(tmp_path):
    with pytest.raises(ValueError, match='bits'):
        save_grayscale(shepp_logan(16), tmp_path / 'x.pgm', bits=12)


def test_non_dyadic_image_is_center_cropped(tmp_path):
    arr = (np.arange(300 * 200).reshape(300, 200) % 251).astype(np.uint8)
    Image.fromarray(arr).save(tmp_path / 'odd.pgm')
    with pytest.warns(UserWarning, match='cropping 300x200 to 256x128'):
        img = load_grayscale(tmp_path / 'odd.pgm')
    assert tuple(img.shape) == (256, 128)
    assert np.allclose(img.real.numpy(), arr[22:278, 36:164] / 255)


def test_load_rejects_colour_images(tmp_path):
    Image.new('RGB', (16, 16), (10, 20, 30)).save(tmp_path / 'colour.png')
    with pytest.raises(ValueError, match='unsupported image mode'):
        load_grayscale(tmp_path / 'colour.png')


def test_load_rejects_unreadable_files(tmp_path):
    (tmp_path / 'junk.pgm').write_bytes(b'not an image')
    with pytest.raises(ValueError, match='cannot read'):
        load_grayscale(tmp_path / 'junk.pgm')
    with pytest.raises(ValueError, match='cannot read'):
        load_grayscale(tmp_path / 'missing.pgm')


@pytest.mark.slow
def test_phantom_is_resolution_consistent():
    fine = shepp_logan(2048).real.numpy()
    averaged = fine.reshape(512, 4, 512, 4).mean(axis=(1, 3))
    coarse = shepp_logan(512).real.numpy()
    assert np.sqrt(np.mean((averaged - coarse) ** 2)) < 0.05
