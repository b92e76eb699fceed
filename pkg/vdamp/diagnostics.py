"""Evidence that the effective noise r_k - w0 is Gaussian per subband with
the modelled variance: excess kurtosis, normal QQ quantiles and the
tracking of true per-subband NMSE by the tau model."""

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np
import torch
from scipy import stats
from scipy.stats import norm

from common.utils import save_json, to_numpy, write_csv_rows
from vdamp.transforms import dwt_inverse


logger = logging.getLogger(__name__)

PARTS = ('real', 'imag')


class DegenerateSubbandError(ValueError):
    pass


def _as_samples(samples):
    x = np.asarray(to_numpy(samples), dtype=np.float64).ravel()
    if x.size < 4:
        raise ValueError(f'need at least 4 samples, got {x.size}')
    std = x.std()
    if std == 0 or std <= 1e-10 * abs(x.mean()):
        raise DegenerateSubbandError('samples have (numerically) zero variance')
    return x


def excess_kurtosis(samples):
    """mu_4 / sigma^4 - 3 with biased moments."""
    return float(stats.kurtosis(_as_samples(samples), fisher=True, bias=True))


def _component(values, part):
    if part not in PARTS:
        raise ValueError(f'part must be one of {PARTS}, got {part!r}')
    return values.real if part == 'real' else values.imag


@dataclass
class KurtosisSummary:
    mean: float
    per_subband: List[float]
    skipped: List[int] = field(default_factory=list)


def mean_subband_kurtosis(err, part='real'):
    """Mean excess kurtosis over subbands; zero-variance subbands are skipped."""
    per_subband, skipped = [], []
    for b in range(err.layout.n_subbands):
        try:
            per_subband.append(excess_kurtosis(_component(err.subband(b), part)))
        except DegenerateSubbandError:
            per_subband.append(math.nan)
            skipped.append(b)
    valid = [k for k in per_subband if not math.isnan(k)]
    if skipped:
        logger.info('skipped degenerate subbands %s (%s)',
                    [err.layout.label(b) for b in skipped], part)
    mean = float(np.mean(valid)) if valid else math.nan
    return KurtosisSummary(mean=mean, per_subband=per_subband, skipped=skipped)


def qq_data(samples, n_points=None):
    """(theoretical, empirical) normal quantile pairs at Hazen positions
    (i - 0.5)/n of the standardized sample."""
    x = _as_samples(samples)
    n = x.size if n_points is None else int(n_points)
    if not 1 <= n <= x.size:
        raise ValueError(f'n_points must be in [1, {x.size}], got {n}')
    z = (x - x.mean()) / x.std()
    probs = (np.arange(1, n + 1) - 0.5) / n
    return np.stack([norm.ppf(probs), np.quantile(z, probs, method='hazen')], axis=1)


def qq_max_deviation(pairs):
    return float(np.max(np.abs(pairs[:, 1] - pairs[:, 0])))


def tau_tracking_report(trace, layout):
    """True per-subband NMSE of r_k against the tau model N_b tau_b / ||w0_b||^2."""
    rows = []
    for rec in trace:
        for b in range(layout.n_subbands):
            energy = rec.subband_energy[b]
            true = rec.subband_error[b] / energy if energy > 0 else math.nan
            model = layout.sizes[b] * rec.tau[b] / energy if energy > 0 else math.nan
            undefined = not (true > 0 and math.isfinite(model))
            rows.append({'iteration': rec.iteration, 'subband': b,
                         'label': layout.label(b), 'nmse_true': true,
                         'nmse_model': model,
                         'ratio': math.nan if undefined else model / true,
                         'ratio_undefined': undefined})
    return rows


def median_ratio(rows, iteration):
    ratios = [row['ratio'] for row in rows
              if row['iteration'] == iteration and not row['ratio_undefined']]
    return float(np.median(ratios)) if ratios else math.nan


def effective_noise_image(r, w0, peak):
    """|Psi^H (r - w0)| as a fraction of the ground-truth peak."""
    return torch.abs(dwt_inverse(r - w0)) / peak


@dataclass(eq=False)
class StateEvolutionReport:
    rows: List[dict]
    kurtosis: List[dict]
    qq: Dict[Tuple[int, int], Dict[str, np.ndarray]]
    summary: dict
    labels: Dict[int, str]

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        kurt = {k['iteration']: k for k in self.kurtosis}
        rows = [dict(row, kurt_real=kurt[row['iteration']]['kurt_real'],
                     kurt_imag=kurt[row['iteration']]['kurt_imag'])
                for row in self.rows]
        fields = ['iteration', 'subband', 'label', 'nmse_true', 'nmse_model', 'ratio',
                  'ratio_undefined', 'kurt_real', 'kurt_imag']
        write_csv_rows(os.path.join(out_dir, 'state_evolution.csv'), fields, rows)
        save_json(self.summary, os.path.join(out_dir, 'state_evolution.json'))

        paths = []
        for (k, b), pairs in sorted(self.qq.items()):
            path = os.path.join(out_dir, f'qq_{self.labels[b]}_k{k}.csv')
            qq_rows = [{'theoretical_real': tr, 'empirical_real': er,
                        'theoretical_imag': ti, 'empirical_imag': ei}
                       for (tr, er), (ti, ei) in zip(pairs['real'], pairs['imag'])]
            write_csv_rows(path, list(qq_rows[0]), qq_rows)
            paths.append(path)
        return paths


def state_evolution_report(result, w0, qq_subbands, qq_iterations, n_points=None):
    """Assemble kurtosis, QQ and tau-tracking evidence from a run that kept
    its iterates."""
    layout = w0.layout
    iterates = {rec.iteration: rec.r for rec in result.trace if rec.r is not None}
    if not iterates:
        raise ValueError('the run did not keep its iterates (keep_iterates=False)')

    kurtosis = []
    for k, r in sorted(iterates.items()):
        err = r - w0
        real, imag = (mean_subband_kurtosis(err, part) for part in PARTS)
        kurtosis.append({'iteration': k, 'kurt_real': real.mean, 'kurt_imag': imag.mean,
                         'skipped_real': real.skipped, 'skipped_imag': imag.skipped})

    qq = {}
    for k in qq_iterations:
        if k not in iterates:
            raise ValueError(f'iteration {k} is outside the recorded run')
        err = iterates[k] - w0
        for b in qq_subbands:
            qq[k, b] = {part: qq_data(_component(err.subband(b), part), n_points)
                        for part in PARTS}

    final = kurtosis[-1]
    summary = {'mean_kurt_real': final['kurt_real'],
               'mean_kurt_imag': final['kurt_imag'],
               'converged_iteration': result.converged_iteration,
               'final_nmse_db': result.trace[-1].nmse_db if result.trace else math.nan}
    labels = {b: layout.label(b) for b in range(layout.n_subbands)}
    return StateEvolutionReport(rows=tau_tracking_report(result.trace, layout),
                                kurtosis=kurtosis, qq=qq, summary=summary, labels=labels)
