"""Unitary centered 2D Fourier transform, orthonormal 2D Haar DWT and the
subband layout shared by the rest of the package.

Images are complex ``(h, w)`` tensors. Wavelet coefficients are stored as
a flat length-N tensor ordered by subband: the coarse approximation first,
then for each scale from the coarsest to the finest the horizontal,
vertical and diagonal details.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import List, Tuple

import torch


ORIENTATIONS = ('horiz', 'vert', 'diag')


def fft2_unitary(img):
    """Zero-frequency-centered 2D DFT with 1/sqrt(N) scaling."""
    return torch.fft.fftshift(torch.fft.fft2(img, norm='ortho'), dim=(-2, -1))


def ifft2_unitary(spec):
    return torch.fft.ifft2(torch.fft.ifftshift(spec, dim=(-2, -1)), norm='ortho')


def check_dyadic(shape, scales):
    for axis, size in zip(('height', 'width'), shape):
        if size % (2 ** scales) != 0:
            raise ValueError(f'{axis} {size} is not divisible by 2^{scales}')


@dataclass(frozen=True)
class SubbandLayout:
    """Index ranges J_b of the 3s+1 subbands of an (h, w) image."""
    shape: Tuple[int, int]
    scales: int

    def __post_init__(self):
        if self.scales < 1:
            raise ValueError(f'scales must be >= 1, got {self.scales}')
        check_dyadic(self.shape, self.scales)

    @property
    def n_subbands(self):
        return 3 * self.scales + 1

    @property
    def numel(self):
        return self.shape[0] * self.shape[1]

    @cached_property
    def block_shapes(self) -> List[Tuple[int, int]]:
        h, w = self.shape
        s = self.scales
        shapes = [(h >> s, w >> s)]
        for j in range(s, 0, -1):
            shapes += [(h >> j, w >> j)] * 3
        return shapes

    @cached_property
    def sizes(self) -> List[int]:
        return [bh * bw for bh, bw in self.block_shapes]

    @cached_property
    def offsets(self) -> List[int]:
        offsets = [0]
        for size in self.sizes:
            offsets.append(offsets[-1] + size)
        return offsets

    def range(self, b):
        return slice(self.offsets[b], self.offsets[b + 1])

    def scale_of(self, b):
        """Detail scale j of subband b (1 finest); the approximation sits at s."""
        if b == 0:
            return self.scales
        return self.scales - (b - 1) // 3

    def index(self, scale, orientation):
        """Subband index of a detail block, e.g. index(1, 'diag')."""
        if not 1 <= scale <= self.scales:
            raise ValueError(f'scale {scale} outside 1..{self.scales}')
        return 1 + 3 * (self.scales - scale) + ORIENTATIONS.index(orientation)

    def label(self, b):
        if b == 0:
            return 'approx'
        return f'{ORIENTATIONS[(b - 1) % 3]}_s{self.scale_of(b)}'


@dataclass(eq=False)
class WaveletCoeffs:
    data: torch.Tensor
    layout: SubbandLayout

    @property
    def scales(self):
        return self.layout.scales

    @property
    def shape(self):
        return self.layout.shape

    def subband(self, b):
        return self.data[self.layout.range(b)]

    def block(self, b):
        return self.subband(b).reshape(self.layout.block_shapes[b])

    def with_data(self, data):
        return WaveletCoeffs(data, self.layout)

    def __sub__(self, other):
        return self.with_data(self.data - other.data)

    def __add__(self, other):
        return self.with_data(self.data + other.data)

    def norm(self):
        return torch.linalg.vector_norm(self.data)

    @classmethod
    def zeros(cls, layout, dtype=torch.complex128, device=None):
        return cls(torch.zeros(layout.numel, dtype=dtype, device=device), layout)


@dataclass(eq=False)
class SubbandVector:
    """One real value per subband, piecewise constant once expanded."""
    layout: SubbandLayout
    values: torch.Tensor

    def expand(self):
        return subband_expand(self)

    def __getitem__(self, b):
        return self.values[b]

    def tolist(self):
        return self.values.tolist()

    @classmethod
    def full(cls, layout, value, device=None):
        return cls(layout, torch.full((layout.n_subbands,), float(value),
                                      dtype=torch.float64, device=device))


def _haar_analysis(x):
    a = x[..., 0::2, 0::2]
    b = x[..., 0::2, 1::2]
    c = x[..., 1::2, 0::2]
    d = x[..., 1::2, 1::2]
    approx = (a + b + c + d) / 2
    horiz = (a + b - c - d) / 2
    vert = (a - b + c - d) / 2
    diag = (a - b - c + d) / 2
    return approx, horiz, vert, diag


def _haar_synthesis(approx, horiz, vert, diag):
    h, w = approx.shape[-2:]
    x = approx.new_zeros(approx.shape[:-2] + (2 * h, 2 * w))
    x[..., 0::2, 0::2] = (approx + horiz + vert + diag) / 2
    x[..., 0::2, 1::2] = (approx + horiz - vert - diag) / 2
    x[..., 1::2, 0::2] = (approx - horiz + vert - diag) / 2
    x[..., 1::2, 1::2] = (approx - horiz - vert + diag) / 2
    return x


def dwt_forward(img, scales):
    """Orthonormal 2D Haar analysis with `scales` decomposition levels.

    The filters are real, so a complex input is transformed exactly as its
    real and imaginary parts would be separately.
    """
    layout = SubbandLayout(tuple(img.shape[-2:]), scales)
    details = []
    approx = img
    for _ in range(scales):
        approx, horiz, vert, diag = _haar_analysis(approx)
        details.append((horiz, vert, diag))

    blocks = [approx]
    for level in reversed(details):
        blocks.extend(level)
    data = torch.cat([blk.reshape(-1) for blk in blocks])
    return WaveletCoeffs(data, layout)


def dwt_inverse(coeffs):
    layout = coeffs.layout
    approx = coeffs.block(0)
    for j in range(layout.scales, 0, -1):
        horiz, vert, diag = (coeffs.block(layout.index(j, o)) for o in ORIENTATIONS)
        approx = _haar_synthesis(approx, horiz, vert, diag)
    return approx


def subband_average(vec, layout):
    """Mean of `vec` over each subband's index range."""
    vec = torch.as_tensor(vec)
    if vec.numel() != layout.numel:
        raise ValueError(f'expected {layout.numel} entries, got {vec.numel()}')
    vec = vec.reshape(-1)
    values = torch.stack([vec[layout.range(b)].sum() / layout.sizes[b]
                          for b in range(layout.n_subbands)])
    return SubbandVector(layout, values)


def subband_expand(sv):
    sizes = torch.tensor(sv.layout.sizes, device=sv.values.device)
    return torch.repeat_interleave(sv.values, sizes)
