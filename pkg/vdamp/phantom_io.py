"""Shepp-Logan phantom and grayscale (PGM) image I/O."""

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from common.utils import to_numpy


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EllipseSpec:
    intensity: float
    center: Tuple[float, float]
    axes: Tuple[float, float]
    angle: float

    def __post_init__(self):
        if min(self.axes) <= 0:
            raise ValueError(f'semi-axes must be positive, got {self.axes}')


def _table(intensities):
    geometry = [
        ((0.0, 0.0), (0.69, 0.92), 0),
        ((0.0, -0.0184), (0.6624, 0.874), 0),
        ((0.22, 0.0), (0.11, 0.31), -18),
        ((-0.22, 0.0), (0.16, 0.41), 18),
        ((0.0, 0.35), (0.21, 0.25), 0),
        ((0.0, 0.1), (0.046, 0.046), 0),
        ((0.0, -0.1), (0.046, 0.046), 0),
        ((-0.08, -0.605), (0.046, 0.023), 0),
        ((0.0, -0.605), (0.023, 0.023), 0),
        ((0.06, -0.605), (0.023, 0.046), 0),
    ]
    return tuple(EllipseSpec(a, c, ax, math.radians(deg))
                 for a, (c, ax, deg) in zip(intensities, geometry))


SHEPP_LOGAN = _table([1, -0.98, -0.02, -0.02, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01])
MODIFIED_SHEPP_LOGAN = _table([1, -0.8, -0.2, -0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1])


def pixel_centers(h, w):
    """x grows to the right, y upwards; both span [-1, 1] at the image edges."""
    x = (2 * np.arange(w) + 1) / w - 1
    y = 1 - (2 * np.arange(h) + 1) / h
    return np.meshgrid(x, y)


def inside_ellipse(x, y, ellipse):
    cos, sin = math.cos(ellipse.angle), math.sin(ellipse.angle)
    dx = x - ellipse.center[0]
    dy = y - ellipse.center[1]
    a, b = ellipse.axes
    return ((dx * cos + dy * sin) / a) ** 2 + ((dy * cos - dx * sin) / b) ** 2 <= 1


def shepp_logan(h, w=None, modified=False):
    """Summed ellipse intensities sampled at pixel centres, peak-normalized."""
    w = h if w is None else w
    if h < 16 or w < 16:
        raise ValueError(f'phantom needs at least 16x16 pixels, got {h}x{w}')
    x, y = pixel_centers(h, w)
    img = np.zeros((h, w))
    for ellipse in (MODIFIED_SHEPP_LOGAN if modified else SHEPP_LOGAN):
        img[inside_ellipse(x, y, ellipse)] += ellipse.intensity
    img /= img.max()
    return torch.from_numpy(img).to(torch.complex128)


def largest_dyadic(n):
    return 1 << (int(n).bit_length() - 1)


def center_crop(arr, shape):
    h, w = arr.shape
    top, left = (h - shape[0]) // 2, (w - shape[1]) // 2
    return arr[top:top + shape[0], left:left + shape[1]]


def load_grayscale(fpath):
    """8- or 16-bit grayscale raster mapped to [0, 1]. Sizes that are not
    powers of two are cropped to the largest centred power-of-two region."""
    try:
        with Image.open(fpath) as im:
            mode = im.mode
            arr = np.asarray(im)
    except (OSError, UnidentifiedImageError) as e:
        raise ValueError(f'cannot read image {fpath}: {e}')

    if mode == 'L':
        img = arr.astype(np.float64) / 255
    elif mode.startswith('I'):
        img = arr.astype(np.float64) / 65535
    else:
        raise ValueError(f'{fpath}: unsupported image mode {mode}, expected grayscale')

    shape = tuple(largest_dyadic(n) for n in img.shape)
    if shape != img.shape:
        msg = f'{fpath}: cropping {img.shape[0]}x{img.shape[1]} to {shape[0]}x{shape[1]}'
        warnings.warn(msg)
        logger.warning(msg)
        img = center_crop(img, shape)
    return torch.from_numpy(np.ascontiguousarray(img)).to(torch.complex128)


def save_grayscale(img, fpath, bits=16):
    """Magnitude clipped to [0, 1], written as 8- or 16-bit PGM."""
    mag = np.clip(np.abs(to_numpy(img)), 0, 1)
    if bits == 16:
        arr = np.round(mag * 65535).astype(np.int32)
    elif bits == 8:
        arr = np.round(mag * 255).astype(np.uint8)
    else:
        raise ValueError(f'bits must be 8 or 16, got {bits}')
    Image.fromarray(arr).save(fpath, format='PPM')
