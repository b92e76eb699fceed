"""VDAMP (alpha and SURE gain variants), the FISTA family (FISTA, S-FISTA,
SURE-IT), S-FISTA subband weights by power iteration, the lambda grid
search and the convergence-iteration metric."""

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import torch
from tqdm import tqdm

from common.utils import MeasureTime
from vdamp.denoise import (c_alpha, c_sure, gsure_denoise, onsager_correct,
                           onsager_divergence, threshold_subbands)
from vdamp.sampling import make_rng
from vdamp.spectrum import build_subband_spectra, tau_wavelet, tau_y_estimate
from vdamp.transforms import (SubbandLayout, SubbandVector, WaveletCoeffs,
                              dwt_forward, dwt_inverse, fft2_unitary,
                              ifft2_unitary)


logger = logging.getLogger(__name__)

VDAMP_VARIANTS = ('vdamp_alpha', 'vdamp_s')
FISTA_VARIANTS = ('fista', 'sfista', 'sure_it')
ALGORITHMS = VDAMP_VARIANTS + FISTA_VARIANTS
LAMBDA_ALGORITHMS = ('fista', 'sfista')


class SolverError(RuntimeError):
    pass


class PowerIterationError(SolverError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


@dataclass
class SolverConfig:
    algorithm: str = 'vdamp_s'
    iterations: int = 50
    scales: int = 4
    lam: Optional[float] = None
    sigma: float = 0.0
    seed: int = 0
    oracle_tau: bool = True
    record_trace: bool = True
    keep_iterates: bool = False
    momentum: bool = True
    tau_floor_rel: float = 1e-12
    freeze_after: int = 3
    power_iters: int = 1000
    power_tol: float = 1e-6

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f'unknown algorithm {self.algorithm!r}, choose from {ALGORITHMS}')
        if self.iterations < 1:
            raise ValueError(f'iterations must be >= 1, got {self.iterations}')
        if self.lam is not None and not self.lam > 0:
            raise ValueError(f'lambda must be positive, got {self.lam}')
        if self.sigma < 0:
            raise ValueError(f'noise level must be non-negative, got {self.sigma}')


@dataclass(eq=False)
class IterationRecord:
    iteration: int
    nmse_db: float
    subband_nmse: List[float]
    subband_error: List[float]
    subband_energy: List[float]
    tau: List[float]
    alpha: List[float]
    c: List[float]
    divergence: List[float]
    wall_time: float
    r: Optional[WaveletCoeffs] = None


@dataclass(eq=False)
class ReconResult:
    x_hat: torch.Tensor
    w_hat: WaveletCoeffs
    algorithm: str
    trace: List[IterationRecord] = field(default_factory=list)
    converged_iteration: Optional[int] = None
    frozen_subbands: List[int] = field(default_factory=list)

    @property
    def nmse_trace(self):
        return [rec.nmse_db for rec in self.trace]


def nmse_db(x_hat, x0):
    err = torch.sum(torch.abs(x_hat - x0) ** 2)
    return float(10 * torch.log10(err / torch.sum(torch.abs(x0) ** 2)))


def masked(u, sampling):
    return torch.where(sampling.mask, u, torch.zeros_like(u))


def zero_filled(y):
    return ifft2_unitary(y)


def density_compensated_estimate(y, density):
    """Image-domain unbiased estimate F^H P^-1 y."""
    return ifft2_unitary(y / density.p)


def data_consistent_output(w_hat, y, sampling):
    """Psi^H w + F^H (y - M F Psi^H w): measured coefficients replace the
    estimate's on the sampling set."""
    x = dwt_inverse(w_hat)
    return x + ifft2_unitary(y - masked(fft2_unitary(x), sampling))


def _check_finite(r, k):
    if not bool(torch.isfinite(r.data).all()):
        raise SolverError(f'non-finite iterate at iteration {k}')


def _subband_stats(r, w0):
    if w0 is None:
        nan = [math.nan] * r.layout.n_subbands
        return nan, nan, nan
    err = torch.abs(r.data - w0.data) ** 2
    energy = torch.abs(w0.data) ** 2
    layout = r.layout
    err_b = [float(err[layout.range(b)].sum()) for b in range(layout.n_subbands)]
    energy_b = [float(energy[layout.range(b)].sum()) for b in range(layout.n_subbands)]
    nmse_b = [e / s if s > 0 else math.nan for e, s in zip(err_b, energy_b)]
    return nmse_b, err_b, energy_b


def _record(config, k, wall_time, r, w_hat, y, sampling, x0, w0, tau, alpha, c, divergence):
    nmse = math.nan
    if x0 is not None:
        nmse = nmse_db(data_consistent_output(w_hat, y, sampling), x0)
    subband_nmse, subband_error, subband_energy = _subband_stats(r, w0)

    def as_list(sv):
        return sv.tolist() if sv is not None else [math.nan] * r.layout.n_subbands

    return IterationRecord(
        iteration=k, nmse_db=nmse, subband_nmse=subband_nmse,
        subband_error=subband_error, subband_energy=subband_energy,
        tau=as_list(tau), alpha=as_list(alpha), c=as_list(c),
        divergence=as_list(divergence), wall_time=wall_time,
        r=r.with_data(r.data.clone()) if config.keep_iterates else None)


def _finish(result, x0):
    if x0 is not None and result.trace:
        result.converged_iteration = convergence_iteration(result.nmse_trace)
    return result


def vdamp(y, sampling, density, config, ground_truth=None):
    """Variable density AMP.

    Each iteration takes a density compensated gradient step, models the
    aliasing of the result with one variance per subband, denoises with
    SURE-tuned soft thresholding and applies the Onsager correction so the
    aliasing stays Gaussian with that colored variance.
    """
    if config.algorithm not in VDAMP_VARIANTS:
        raise ValueError(f'{config.algorithm} is not a VDAMP variant')
    device = y.device
    shape = tuple(y.shape)
    layout = SubbandLayout(shape, config.scales)
    spectra = build_subband_spectra(shape, config.scales, device=device)
    x0 = ground_truth.to(device=device, dtype=torch.complex128) if ground_truth is not None else None
    w0 = dwt_forward(x0, config.scales) if x0 is not None else None

    r_tilde = WaveletCoeffs.zeros(layout, device=device)
    result = ReconResult(x_hat=None, w_hat=r_tilde, algorithm=config.algorithm)
    tau_floor = None
    below_floor = torch.zeros(layout.n_subbands, dtype=torch.long, device=device)
    frozen = {}

    for k in range(config.iterations):
        timer = MeasureTime(cuda=device.type == 'cuda')
        with timer:
            z = y - masked(fft2_unitary(dwt_inverse(r_tilde)), sampling)
            r = r_tilde + dwt_forward(ifft2_unitary(z / density.p), config.scales)
            _check_finite(r, k)

            if tau_floor is None:
                power = float(torch.mean(torch.abs(r.data) ** 2))
                tau_floor = max(config.tau_floor_rel * power, torch.finfo(torch.float64).tiny)

            tau = tau_wavelet(spectra, tau_y_estimate(z, sampling, density, config.sigma))
            if not bool(torch.isfinite(tau.values).all()):
                raise SolverError(f'non-finite aliasing variance at iteration {k}')
            at_floor = tau.values <= tau_floor
            below_floor = torch.where(at_floor, below_floor + 1, torch.zeros_like(below_floor))
            tau = SubbandVector(layout, torch.clamp(tau.values, min=tau_floor))

            denoised = gsure_denoise(r, tau, fixed_thresholds=frozen)
            for b in torch.nonzero(below_floor >= config.freeze_after).flatten().tolist():
                if b not in frozen:
                    frozen[b] = float(denoised.thresholds.values[b])
                    warnings.warn(f'aliasing variance of subband {layout.label(b)} stayed at '
                                  f'the floor for {config.freeze_after} iterations, '
                                  'threshold frozen')

            if config.algorithm == 'vdamp_alpha':
                c, _ = c_alpha(denoised.alpha)
            else:
                c, _ = c_sure(r, denoised.w_hat, denoised.alpha)
            r_tilde = onsager_correct(denoised.w_hat, r, denoised.alpha, c)
            result.w_hat = denoised.w_hat

        if config.record_trace:
            divergence = onsager_divergence(r, tau, denoised, c)
            result.trace.append(_record(config, k, timer[-1], r, denoised.w_hat, y, sampling,
                                        x0, w0, tau, denoised.alpha, c, divergence))
            logger.debug('iter %d nmse %.3f dB', k, result.trace[-1].nmse_db)

    result.x_hat = data_consistent_output(result.w_hat, y, sampling)
    result.frozen_subbands = sorted(frozen)
    return _finish(result, x0)


def next_momentum(h):
    return (1 + math.sqrt(1 + 4 * h ** 2)) / 2


def fista_family(y, sampling, config, weights=None, ground_truth=None, density=None):
    """FISTA, S-FISTA and SURE-IT.

    Thresholds scale with the aliasing variance tau_k, taken from the ground
    truth when `config.oracle_tau` and otherwise from the mean of the
    importance-sampled aliasing spectrum (which needs `density`).
    """
    if config.algorithm not in FISTA_VARIANTS:
        raise ValueError(f'{config.algorithm} is not a FISTA variant')
    if config.algorithm in LAMBDA_ALGORITHMS and config.lam is None:
        raise ValueError(f'{config.algorithm} requires lambda')
    if config.oracle_tau and ground_truth is None:
        raise ValueError('oracle tau requires the ground truth')
    if not config.oracle_tau and density is None:
        raise ValueError('estimating tau without the oracle requires the sampling density')

    device = y.device
    shape = tuple(y.shape)
    layout = SubbandLayout(shape, config.scales)
    if weights is None:
        weights = SubbandVector.full(layout, 1.0, device=device)
    w_full = weights.expand().to(device)
    x0 = ground_truth.to(device=device, dtype=torch.complex128) if ground_truth is not None else None
    w0 = dwt_forward(x0, config.scales) if x0 is not None else None

    r_tilde = WaveletCoeffs.zeros(layout, device=device)
    w_prev = WaveletCoeffs.zeros(layout, device=device)
    h_prev = 1.0
    tau_floor = None
    result = ReconResult(x_hat=None, w_hat=w_prev, algorithm=config.algorithm)

    for k in range(config.iterations):
        timer = MeasureTime(cuda=device.type == 'cuda')
        with timer:
            z = y - fft2_unitary(dwt_inverse(r_tilde))
            grad = dwt_forward(ifft2_unitary(masked(z, sampling)), config.scales)
            r = r_tilde.with_data(r_tilde.data + grad.data / w_full)
            _check_finite(r, k)

            if tau_floor is None:
                power = float(torch.mean(torch.abs(r.data) ** 2))
                tau_floor = max(config.tau_floor_rel * power, torch.finfo(torch.float64).tiny)
            if config.oracle_tau:
                tau = float(torch.sum(torch.abs(r.data - w0.data) ** 2)) / layout.numel
            else:
                tau = float(torch.mean(tau_y_estimate(masked(z, sampling), sampling,
                                                      density, config.sigma)))
            tau = max(tau, tau_floor)

            alpha = None
            if config.algorithm == 'sure_it':
                denoised = gsure_denoise(r, SubbandVector.full(layout, tau, device=device))
                w_hat, alpha = denoised.w_hat, denoised.alpha
            else:
                thresholds = SubbandVector(layout, tau * config.lam / weights.values.to(device))
                w_hat = threshold_subbands(r, thresholds)

            h = next_momentum(h_prev) if config.momentum else 1.0
            r_tilde = w_hat.with_data(w_hat.data + (h_prev - 1) / h * (w_hat.data - w_prev.data))
            w_prev, h_prev = w_hat, h
            result.w_hat = w_hat

        if config.record_trace:
            result.trace.append(_record(config, k, timer[-1], r, w_hat, y, sampling, x0, w0,
                                        SubbandVector.full(layout, tau), alpha, None, None))

    result.x_hat = data_consistent_output(result.w_hat, y, sampling)
    return _finish(result, x0)


def power_iteration(op, x0, max_iters=1000, tol=1e-6, atol=1e-12):
    """Largest eigenvalue of a Hermitian positive semi-definite operator.

    Stops when the Rayleigh quotient changes by less than `tol` relative (or
    `atol` absolute, for operators that are numerically zero).
    """
    x = x0 / torch.linalg.vector_norm(x0)
    eig = 0.0
    residual = math.inf
    for i in range(max_iters):
        ax = op(x)
        rayleigh = torch.vdot(x, ax)
        new_eig = float(rayleigh.real if rayleigh.is_complex() else rayleigh)
        norm = float(torch.linalg.vector_norm(ax))
        if norm == 0:
            return 0.0
        residual = abs(new_eig - eig)
        eig = new_eig
        if residual <= max(tol * abs(eig), atol):
            logger.debug('power iteration converged after %d iterations', i + 1)
            return eig
        x = ax / norm
    raise PowerIterationError(
        f'power iteration did not converge in {max_iters} iterations '
        f'(last change {residual:.3e})', residual)


def _embed(v, b, layout):
    coeffs = WaveletCoeffs.zeros(layout, device=v.device)
    coeffs.data[layout.range(b)] = v
    return coeffs


def _phi(v, b, layout, sampling):
    """Subband block b of M F Psi^H."""
    return masked(fft2_unitary(dwt_inverse(_embed(v, b, layout))), sampling)


def _phi_adjoint(u, b, layout, sampling):
    return dwt_forward(ifft2_unitary(masked(u, sampling)), layout.scales).subband(b)


def subband_gram_norms(sampling, shape, scales, power_iters=1000, tol=1e-6, seed=0):
    """lambda_max(Phi_b'^H Phi_b Phi_b^H Phi_b') for every subband pair.

    The matrix is symmetric: both orders share the singular values of
    Phi_b^H Phi_b'.
    """
    layout = SubbandLayout(tuple(shape), scales)
    n = layout.n_subbands
    device = sampling.mask.device
    norms = torch.zeros(n, n, dtype=torch.float64)
    pairs = [(b, bp) for b in range(n) for bp in range(b, n)]
    rng = make_rng(seed)
    for b, bp in tqdm(pairs, desc='subband pairs', leave=False):
        def op(v):
            u = _phi_adjoint(_phi(v, bp, layout, sampling), b, layout, sampling)
            return _phi_adjoint(_phi(u, b, layout, sampling), bp, layout, sampling)

        size = layout.sizes[bp]
        x0 = torch.from_numpy(rng.standard_normal(size) + 1j * rng.standard_normal(size))
        norms[b, bp] = norms[bp, b] = power_iteration(op, x0.to(device), power_iters, tol)
    return norms


def sfista_weights(sampling, shape, scales, power_iters=1000, tol=1e-6, margin=1e-3, seed=0):
    """Subband weights w_b with 1/w_b > sum_b' sqrt(lambda_max(b, b'))."""
    norms = subband_gram_norms(sampling, shape, scales, power_iters, tol, seed)
    bound = torch.sqrt(torch.clamp(norms, min=0)).sum(dim=1)
    layout = SubbandLayout(tuple(shape), scales)
    return SubbandVector(layout, (1 - margin) / bound)


@dataclass(eq=False)
class ReconProblem:
    y: torch.Tensor
    sampling: object
    density: object
    x0: torch.Tensor
    sigma: float
    scales: int = 4
    weights: Optional[SubbandVector] = None


def default_lambda_grid(x0, per_decade=16, lo=1e-4, hi=1e1):
    """Log-spaced grid over [lo, hi] / rms(x0)."""
    scale = 1 / math.sqrt(float(torch.mean(torch.abs(x0) ** 2)))
    n = int(round(per_decade * math.log10(hi / lo))) + 1
    return (np.logspace(math.log10(lo), math.log10(hi), n) * scale).tolist()


def lambda_scores(problem, algorithm, lambda_grid, k_eval=100):
    scores = []
    for lam in tqdm(sorted(lambda_grid), desc=f'{algorithm} lambda', leave=False):
        config = SolverConfig(algorithm=algorithm, iterations=k_eval, scales=problem.scales,
                              lam=lam, sigma=problem.sigma, record_trace=False)
        result = fista_family(problem.y, problem.sampling, config, weights=problem.weights,
                              ground_truth=problem.x0, density=problem.density)
        scores.append((lam, nmse_db(result.x_hat, problem.x0.to(torch.complex128))))
    return scores


def tune_lambda(problem, algorithm, lambda_grid, k_eval=100):
    """Grid λ with the lowest NMSE at k_eval; ties go to the smaller λ."""
    if len(lambda_grid) == 0:
        raise ValueError('empty lambda grid')
    best_lam, best = None, math.inf
    for lam, score in lambda_scores(problem, algorithm, lambda_grid, k_eval):
        if score < best:
            best_lam, best = lam, score
    if best_lam is None:
        best_lam = min(lambda_grid)
    logger.info('%s: lambda %.4g gives %.2f dB at k=%d', algorithm, best_lam, best, k_eval)
    return best_lam


def convergence_iteration(nmse_trace_db, final_value_db=None, tol_db=0.1):
    """Smallest k such that every later trace value is within tol_db of the
    final value."""
    if len(nmse_trace_db) == 0:
        raise ValueError('empty NMSE trace')
    final = nmse_trace_db[-1] if final_value_db is None else final_value_db
    if abs(nmse_trace_db[-1] - final) > tol_db:
        raise ValueError(f'trace ends at {nmse_trace_db[-1]:.2f} dB, not within '
                         f'{tol_db} dB of {final:.2f} dB')
    k = len(nmse_trace_db)
    while k > 0 and abs(nmse_trace_db[k - 1] - final) <= tol_db:
        k -= 1
    return k


def trace_fieldnames(n_subbands):
    names = ['iter', 'nmse_db']
    for key in ('subband_nmse', 'tau', 'alpha', 'c'):
        names += [f'{key}_{b + 1}' for b in range(n_subbands)]
    return names + ['wall_ms']


def write_trace(trace, fpath, timing=True):
    n_subbands = len(trace[0].tau) if trace else 0
    with open(fpath, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(trace_fieldnames(n_subbands))
        for rec in trace:
            wall_ms = rec.wall_time * 1000 if timing else 0.0
            writer.writerow([rec.iteration, rec.nmse_db] + rec.subband_nmse + rec.tau
                            + rec.alpha + rec.c + [wall_ms])
