"""Variable-density probability maps, Bernoulli sampling sets and the
noisy Fourier measurement model y = M (F x0 + eps)."""

import logging
from dataclasses import dataclass

import numpy as np
import torch

from vdamp.transforms import fft2_unitary


logger = logging.getLogger(__name__)

MAGIC = b'VDMP'
FORMAT_VERSION = 1
KIND_MAP = 0
KIND_MASK = 1

HEADER_DTYPE = np.dtype([('magic', 'S4'), ('version', '<u4'), ('h', '<u4'),
                         ('w', '<u4'), ('kind', 'u1')])


class InfeasibleDensityError(ValueError):
    pass


@dataclass(eq=False)
class ProbabilityMap:
    p: torch.Tensor

    def __post_init__(self):
        if not bool(torch.all(self.p > 0)) or not bool(torch.all(self.p <= 1)):
            raise ValueError('sampling probabilities must lie in (0, 1]')

    @property
    def shape(self):
        return tuple(self.p.shape)

    def expected_fraction(self):
        return float(self.p.mean())


@dataclass(eq=False)
class SamplingSet:
    mask: torch.Tensor

    @property
    def shape(self):
        return tuple(self.mask.shape)

    @property
    def n_observed(self):
        return int(self.mask.sum())


def make_rng(seed):
    """Counter-based generator; identical seeds give identical streams."""
    return np.random.Generator(np.random.Philox(seed))


def radial_grid(shape):
    """Distance of every centered frequency bin from DC as a fraction of the
    k-space field of view (so the edge midpoints sit at 1/2)."""
    h, w = shape
    ky = (np.arange(h) - h // 2) / h
    kx = (np.arange(w) - w // 2) / w
    return np.sqrt(ky[:, None] ** 2 + kx[None, :] ** 2)


def _density_profile(r, fully_sampled_radius, decay, p_min, offset):
    rho = r / r.max() if r.max() > 0 else r
    p = np.clip((1 - rho) ** decay + offset, p_min, 1)
    p[r <= fully_sampled_radius] = 1
    return p


def make_density(shape, target_fraction, fully_sampled_radius=1/32, decay=8,
                 p_min=0.01, tol=1e-3, max_bisections=200):
    """Radially decaying polynomial density with a fully sampled centre.

    Outside the centre p(r) = clip((1 - r / r_max)^decay + c, p_min, 1), with
    the offset `c` chosen by bisection so that sum(p) = target_fraction * N.
    `fully_sampled_radius` is a fraction of the field of view.
    """
    if not 0 < target_fraction <= 1:
        raise ValueError(f'target fraction must be in (0, 1], got {target_fraction}')
    if p_min <= 0:
        raise ValueError(f'p_min must be positive, got {p_min}')
    if target_fraction == 1:
        return ProbabilityMap(torch.ones(shape, dtype=torch.float64))

    r = radial_grid(shape)
    n = r.size
    target = target_fraction * n

    def total(offset):
        return _density_profile(r, fully_sampled_radius, decay, p_min, offset).sum()

    # offset -1 leaves p_min everywhere outside the centre, +1 samples everything
    lo, hi = -1.0, 1.0
    if total(lo) > target * (1 + tol):
        raise InfeasibleDensityError(
            f'target fraction {target_fraction} is below the p_min={p_min} floor '
            f'({total(lo) / n:.4f})')

    for _ in range(max_bisections):
        mid = (lo + hi) / 2
        if total(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break

    p = _density_profile(r, fully_sampled_radius, decay, p_min, hi)
    if hi < 0:
        logger.warning('density offset %.4f is negative; the polynomial alone exceeds '
                       'the target, consider a larger decay', hi)
    logger.debug('density offset %.6f gives fraction %.5f', hi, p.mean())
    return ProbabilityMap(torch.from_numpy(p))


def uniform_density(shape, target_fraction):
    if not 0 < target_fraction <= 1:
        raise ValueError(f'target fraction must be in (0, 1], got {target_fraction}')
    return ProbabilityMap(torch.full(shape, float(target_fraction), dtype=torch.float64))


def draw_mask(density, seed):
    """Independent Bernoulli(p_j) draw of every coefficient."""
    u = make_rng(seed).random(density.shape)
    mask = torch.from_numpy(u) < density.p.cpu()
    return SamplingSet(mask.to(density.p.device))


def measure(x0, sampling, sigma, seed):
    if sigma < 0:
        raise ValueError(f'noise level must be non-negative, got {sigma}')
    if tuple(x0.shape) != sampling.shape:
        raise ValueError(f'image shape {tuple(x0.shape)} does not match '
                         f'mask shape {sampling.shape}')
    y = fft2_unitary(x0.to(torch.complex128))
    if sigma > 0:
        rng = make_rng(seed)
        eps = (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))
        y = y + torch.from_numpy(eps * (sigma / np.sqrt(2))).to(y.device)
    return torch.where(sampling.mask, y, torch.zeros_like(y))


def snr_to_sigma(x0, snr_db):
    energy = float(torch.sum(torch.abs(x0) ** 2))
    if energy == 0:
        raise ValueError('cannot derive a noise level for an all-zero image')
    return float(np.sqrt(energy / (x0.numel() * 10 ** (snr_db / 10))))


def _write_binary(path, shape, kind, payload):
    header = np.zeros((), dtype=HEADER_DTYPE)
    header['magic'] = MAGIC
    header['version'] = FORMAT_VERSION
    header['h'], header['w'] = shape
    header['kind'] = kind
    with open(path, 'wb') as f:
        f.write(header.tobytes())
        f.write(payload.tobytes())


def _read_binary(path, kind):
    with open(path, 'rb') as f:
        raw = f.read()
    if len(raw) < HEADER_DTYPE.itemsize:
        raise ValueError(f'{path}: truncated header')
    header = np.frombuffer(raw, dtype=HEADER_DTYPE, count=1)[0]
    if header['magic'] != MAGIC:
        raise ValueError(f'{path}: bad magic {header["magic"]!r}')
    if header['version'] != FORMAT_VERSION:
        raise ValueError(f'{path}: unsupported version {header["version"]}')
    if header['kind'] != kind:
        raise ValueError(f'{path}: expected kind {kind}, found {header["kind"]}')
    shape = (int(header['h']), int(header['w']))
    dtype = np.dtype('<f8') if kind == KIND_MAP else np.dtype('u1')
    if (len(raw) - HEADER_DTYPE.itemsize) % dtype.itemsize:
        raise ValueError(f'{path}: payload is not a whole number of {dtype} values')
    body = np.frombuffer(raw, dtype=dtype, offset=HEADER_DTYPE.itemsize)
    if body.size != shape[0] * shape[1]:
        raise ValueError(f'{path}: expected {shape[0] * shape[1]} values, found {body.size}')
    return body.reshape(shape).copy()


def save_density(density, path):
    p = density.p.cpu().numpy().astype('<f8')
    _write_binary(path, density.shape, KIND_MAP, p)


def load_density(path):
    return ProbabilityMap(torch.from_numpy(_read_binary(path, KIND_MAP).astype(np.float64)))


def save_mask(sampling, path):
    m = sampling.mask.cpu().numpy().astype(np.uint8)
    _write_binary(path, sampling.shape, KIND_MASK, m)


def load_mask(path):
    return SamplingSet(torch.from_numpy(_read_binary(path, KIND_MASK).astype(bool)))
