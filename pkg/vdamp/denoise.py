"""Complex soft thresholding tuned per subband with complex SURE, the
Onsager correction that makes the composite denoiser divergence-free, and
the two gain updates (c = 1/(1-alpha) and the SURE-optimal gain)."""

import warnings
from dataclasses import dataclass
from typing import Dict, Optional

import torch

from vdamp.transforms import SubbandVector, WaveletCoeffs


MIN_SUBBAND_SIZE = 16
ALPHA_LIMIT = 1 - 1e-6
MAX_GAIN = 1e6


@dataclass(eq=False)
class DenoiseResult:
    w_hat: WaveletCoeffs
    thresholds: SubbandVector
    alpha: SubbandVector
    sure_values: SubbandVector


def soft_threshold(v, t):
    """v (1 - min(t/|v|, 1)), zero wherever |v| <= t."""
    mag = torch.abs(v)
    shrink = 1 - t / torch.clamp(mag, min=torch.finfo(mag.dtype).tiny)
    return torch.where(mag > t, v * shrink, torch.zeros_like(v))


def soft_threshold_partial(v, t):
    """Average of the real-real and imag-imag partials of soft_threshold."""
    mag = torch.abs(v)
    part = 1 - t / (2 * torch.clamp(mag, min=torch.finfo(mag.dtype).tiny))
    return torch.where(mag > t, part, torch.zeros_like(part))


def csure_soft(v, tau_v, t):
    """Unbiased risk of soft thresholding v at t under complex noise of
    variance tau_v."""
    mag = torch.abs(v).reshape(-1).to(torch.float64)
    if mag.numel() == 0:
        raise ValueError('cannot evaluate SURE on an empty subband')
    above = mag > t
    n_above = int(above.sum())
    return float((t ** 2 + 2 * tau_v) * n_above
                 - mag.numel() * tau_v
                 + torch.sum(mag[~above] ** 2)
                 - t * tau_v * torch.sum(1 / mag[above]))


def optimize_threshold(v, tau_v):
    """Minimize csure_soft over t in {0} U {|v_j|}.

    Sorting plus prefix sums evaluate every candidate in O(N log N); ties go
    to the smallest candidate.
    """
    mag = torch.abs(v).reshape(-1).to(torch.float64)
    n = mag.numel()
    if n == 0:
        raise ValueError('cannot optimize a threshold on an empty subband')

    sorted_mag, _ = torch.sort(mag)
    zero = sorted_mag.new_zeros(1)
    candidates = torch.cat([zero, sorted_mag])
    inv = torch.where(sorted_mag > 0, 1 / torch.clamp(sorted_mag, min=torch.finfo(mag.dtype).tiny),
                      torch.zeros_like(sorted_mag))
    cum_sq = torch.cat([zero, torch.cumsum(sorted_mag ** 2, 0)])
    cum_inv = torch.cat([zero, torch.cumsum(inv, 0)])

    n_below = torch.searchsorted(sorted_mag, candidates, right=True)
    n_above = n - n_below
    risk = ((candidates ** 2 + 2 * tau_v) * n_above - n * tau_v + cum_sq[n_below]
            - candidates * tau_v * (cum_inv[-1] - cum_inv[n_below]))

    t_hat = float(candidates[torch.argmin(risk)])
    return t_hat, csure_soft(mag, tau_v, t_hat)


def gsure_denoise(r, tau, fixed_thresholds: Optional[Dict[int, float]] = None):
    """Subband-wise soft thresholding with SURE-tuned thresholds.

    Each subband is whitened by sqrt(tau_b), thresholded at unit variance
    and scaled back. Thresholds in `fixed_thresholds` (whitened units) are
    used as given instead of being optimized.
    """
    layout = r.layout
    fixed_thresholds = fixed_thresholds or {}
    w_hat = torch.empty_like(r.data)
    thresholds, alpha, risks = [], [], []

    for b in range(layout.n_subbands):
        tau_b = float(tau.values[b])
        if not tau_b > 0:
            raise ValueError(f'subband {layout.label(b)} has non-positive variance {tau_b}')
        if layout.sizes[b] < MIN_SUBBAND_SIZE:
            warnings.warn(f'subband {layout.label(b)} has only {layout.sizes[b]} '
                          'coefficients, SURE threshold selection is unreliable')

        scale = tau_b ** 0.5
        v = r.subband(b) / scale
        if b in fixed_thresholds:
            t = fixed_thresholds[b]
            risk = csure_soft(v, 1.0, t)
        else:
            t, risk = optimize_threshold(v, 1.0)

        w_hat[layout.range(b)] = soft_threshold(v, t) * scale
        alpha.append(soft_threshold_partial(v, t).mean())
        thresholds.append(t)
        risks.append(risk * tau_b)

    def as_vector(vals):
        return SubbandVector(layout, torch.as_tensor(vals, dtype=torch.float64,
                                                     device=r.data.device))

    return DenoiseResult(w_hat=r.with_data(w_hat),
                         thresholds=as_vector(thresholds),
                         alpha=SubbandVector(layout, torch.stack(alpha).to(torch.float64)),
                         sure_values=as_vector(risks))


def threshold_subbands(r, thresholds):
    """Soft thresholding with one threshold per subband in coefficient units."""
    t = thresholds.expand().to(r.data.device)
    return r.with_data(soft_threshold(r.data, t))


def onsager_correct(g, r, alpha, c):
    return g.with_data(c.expand() * (g.data - alpha.expand() * r.data))


def onsager_divergence(r, tau, denoised, c):
    """Per-subband mean of the analytic partial of c (g - alpha r)."""
    layout = r.layout
    values = []
    for b in range(layout.n_subbands):
        v = r.subband(b) / float(tau.values[b]) ** 0.5
        d = soft_threshold_partial(v, float(denoised.thresholds.values[b]))
        values.append(c.values[b] * (d.mean() - denoised.alpha.values[b]))
    return SubbandVector(layout, torch.stack(values))


def c_alpha(alpha):
    """Gain 1/(1 - alpha_b); returns the gains and a per-subband flag marking
    subbands clamped because the denoiser removed them entirely."""
    clamped = alpha.values >= ALPHA_LIMIT
    if bool(clamped.any()):
        labels = [alpha.layout.label(b) for b in torch.nonzero(clamped).flatten().tolist()]
        warnings.warn(f'alpha ~ 1 (identity denoiser) in subbands {labels}, gain clamped to {MAX_GAIN:g}')
    safe = torch.where(clamped, torch.zeros_like(alpha.values), alpha.values)
    c = torch.where(clamped, torch.full_like(safe, MAX_GAIN), 1 / (1 - safe))
    return SubbandVector(alpha.layout, c), clamped


def c_sure(r, g, alpha):
    """Real gain per subband minimizing ||c (g_b - alpha_b r_b) - r_b||^2.

    Subbands where g_b = alpha_b r_b fall back to c_alpha and are flagged.
    """
    layout = r.layout
    gains = torch.empty(layout.n_subbands, dtype=torch.float64, device=r.data.device)
    fell_back = torch.zeros(layout.n_subbands, dtype=torch.bool, device=r.data.device)
    for b in range(layout.n_subbands):
        r_b = r.subband(b)
        d = g.subband(b) - alpha.values[b] * r_b
        den = torch.sum(torch.abs(d) ** 2)
        if den == 0:
            fell_back[b] = True
        else:
            gains[b] = torch.vdot(r_b, d).real / den

    if bool(fell_back.any()):
        warnings.warn('zero denominator in SURE gain for subbands '
                      f'{[layout.label(b) for b in torch.nonzero(fell_back).flatten().tolist()]}')
        fallback, _ = c_alpha(alpha)
        gains = torch.where(fell_back, fallback.values, gains)
    return SubbandVector(layout, gains), fell_back
