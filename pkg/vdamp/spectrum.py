"""Colored aliasing power spectra: the exact expectation, its importance
sampling estimate from observed residuals, and the transfer of a Fourier
domain spectrum to one variance per wavelet subband."""

from dataclasses import dataclass

import torch

from vdamp.transforms import (SubbandLayout, SubbandVector, WaveletCoeffs,
                              dwt_inverse, fft2_unitary)


@dataclass(eq=False)
class SubbandSpectra:
    """Rows b of |F Psi^H|^2, one per subband (every atom of a subband shares
    the same power spectrum)."""
    layout: SubbandLayout
    rows: torch.Tensor

    @property
    def shape(self):
        return self.layout.shape

    @property
    def scales(self):
        return self.layout.scales


def atom_spectrum(layout, index, device=None):
    coeffs = WaveletCoeffs.zeros(layout, device=device)
    coeffs.data[index] = 1
    return torch.abs(fft2_unitary(dwt_inverse(coeffs))) ** 2


def build_subband_spectra(shape, scales, device=None):
    layout = SubbandLayout(tuple(shape), scales)
    rows = torch.stack([atom_spectrum(layout, layout.offsets[b], device)
                        for b in range(layout.n_subbands)])
    return SubbandSpectra(layout, rows)


def aliasing_spectrum_exact(y_ref, density, sigma):
    """E|y_ref - P^-1 y|^2 entrywise, for a full reference spectrum y_ref."""
    p = density.p
    return (1 - p) / p * torch.abs(y_ref) ** 2 + sigma ** 2 / p


def tau_y_estimate(z, sampling, density, sigma):
    """Unbiased estimate of the aliasing spectrum from the masked residual."""
    p = density.p
    est = ((1 - p) / p * torch.abs(z) ** 2 + sigma ** 2) / p
    return torch.where(sampling.mask, est, torch.zeros_like(est))


def tau_wavelet(spectra, tau_y):
    rows = spectra.rows.reshape(spectra.layout.n_subbands, -1)
    tau_y = tau_y.reshape(-1).to(rows.dtype)
    if tau_y.numel() != rows.shape[1]:
        raise ValueError(f'expected {rows.shape[1]} spectrum entries, got {tau_y.numel()}')
    return SubbandVector(spectra.layout, torch.clamp(rows @ tau_y, min=0))
