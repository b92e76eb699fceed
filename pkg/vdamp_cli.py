# *****************************************************************************
#  Copyright (c) 2018, NVIDIA CORPORATION.  All rights reserved.
#
#  Redistribution and use in source and binary forms, with or without
#  modification, are permitted provided that the following conditions are met:
#      * Redistributions of source code must retain the above copyright
#        notice, this list of conditions and the following disclaimer.
#      * Redistributions in binary form must reproduce the above copyright
#        notice, this list of conditions and the following disclaimer in the
#        documentation and/or other materials provided with the distribution.
#      * Neither the name of the NVIDIA CORPORATION nor the
#        names of its contributors may be used to endorse or promote products
#        derived from this software without specific prior written permission.
#
#  THIS SOFTWARE IS PROVIDED BY THE COPYRIGHT HOLDERS AND CONTRIBUTORS "AS IS" AND
#  ANY EXPRESS OR IMPLIED WARRANTIES, INCLUDING, BUT NOT LIMITED TO, THE IMPLIED
#  WARRANTIES OF MERCHANTABILITY AND FITNESS FOR A PARTICULAR PURPOSE ARE
#  DISCLAIMED. IN NO EVENT SHALL NVIDIA CORPORATION BE LIABLE FOR ANY
#  DIRECT, INDIRECT, INCIDENTAL, SPECIAL, EXEMPLARY, OR CONSEQUENTIAL DAMAGES
#  (INCLUDING, BUT NOT LIMITED TO, PROCUREMENT OF SUBSTITUTE GOODS OR SERVICES;
#  LOSS OF USE, DATA, OR PROFITS; OR BUSINESS INTERRUPTION) HOWEVER CAUSED AND
#  ON ANY THEORY OF LIABILITY, WHETHER IN CONTRACT, STRICT LIABILITY, OR TORT
#  (INCLUDING NEGLIGENCE OR OTHERWISE) ARISING IN ANY WAY OUT OF THE USE OF THIS
#  SOFTWARE, EVEN IF ADVISED OF THE POSSIBILITY OF SUCH DAMAGE.
#
# *****************************************************************************

import argparse
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor

import torch
from tqdm import tqdm

import algorithms
from common import tb_dllogger as logger
from common.utils import (MeasureTime, get_device, load_config, num_threads,
                          parse_shape, save_config, save_json, to_device_async,
                          write_csv_rows)
from vdamp.arg_parser import (add_algorithm_arg, parse_problem_args,
                              parse_solver_args)
from vdamp.diagnostics import effective_noise_image, state_evolution_report
from vdamp.phantom_io import load_grayscale, save_grayscale, shepp_logan
from vdamp.sampling import (ProbabilityMap, SamplingSet, draw_mask, load_density,
                            load_mask, make_density, measure, save_density,
                            save_mask, snr_to_sigma, uniform_density)
from vdamp.solvers import (VDAMP_VARIANTS, ReconProblem, SolverError,
                           density_compensated_estimate, nmse_db, write_trace,
                           zero_filled)
from vdamp.transforms import SubbandLayout, dwt_forward


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_USAGE = 64

DEFAULT_QQ_SUBBANDS = ['diag_s1', 'horiz_s2', 'vert_s4']
DEFAULT_QQ_ITERATIONS = [0, 5, 20]


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f'{self.prog}: error: {message}\n')


def parse_common_args(parser):
    parser.add_argument('--config', type=str, default=None,
                        help='JSON file of argument defaults (CLI flags win)')
    parser.add_argument('-o', '--output', type=str, default=None,
                        help='Output directory')
    parser.add_argument('--log-file', type=str, default=None,
                        help='Path to a DLLogger log file')
    parser.add_argument('--cuda', action='store_true',
                        help='Run on a GPU using CUDA')
    parser.add_argument('--tensorboard', action='store_true',
                        help='Also write per-iteration TensorBoard scalars')
    return parser


def parse_args(parser):
    """
    Parse commandline arguments.
    """
    common = parse_common_args(argparse.ArgumentParser(add_help=False))
    problem = parse_problem_args(common)
    solver = parse_solver_args(argparse.ArgumentParser(add_help=False))
    subparsers = parser.add_subparsers(dest='command', metavar='COMMAND')
    subparsers.required = True

    mask = subparsers.add_parser('mask', parents=[common],
                                 help='Build a density and draw a sampling mask')
    mask.add_argument('--shape', type=str, default='256x256',
                      help='Mask shape HxW')
    mask.add_argument('--accel', type=float, default=8.0,
                      help='Acceleration factor N/n')
    mask.add_argument('--seed', type=int, default=0, help='Seed of the mask draw')
    mask.add_argument('--pmin', type=float, default=0.01,
                      help='Lower bound on sampling probabilities')
    mask.add_argument('--decay', type=float, default=8.0,
                      help='Polynomial decay order of the density')
    mask.add_argument('--center-frac', type=float, default=1/32,
                      help='Radius of the fully sampled k-space centre, '
                      'as a fraction of the field of view')
    mask.add_argument('--uniform', action='store_true',
                      help='Uniform density instead of the polynomial one')

    phantom = subparsers.add_parser('phantom', parents=[common],
                                    help='Render a Shepp-Logan phantom to PGM')
    phantom.add_argument('--size', type=str, default='256',
                         help='Phantom size N or HxW')
    phantom.add_argument('--modified', action='store_true',
                         help='Use the high-contrast intensities')
    phantom.add_argument('--bits', type=int, default=16, choices=[8, 16],
                         help='PGM bit depth')

    recon = subparsers.add_parser('reconstruct', parents=[problem, solver],
                                  help='Run one algorithm on one problem')
    add_algorithm_arg(recon)

    bench = subparsers.add_parser('benchmark', parents=[problem, solver],
                                  help='Sweep algorithms x accelerations x seeds')
    add_algorithm_arg(bench, multiple=True)
    bench.add_argument('--accels', type=float, nargs='+', default=[8.0, 10.0, 12.0],
                       help='Acceleration factors to sweep')
    bench.set_defaults(iterations=1000, phantom=256, tune_lambda=True)
    bench.add_argument('--seeds', type=int, nargs='+', default=[0],
                       help='Mask seeds to sweep')

    diag = subparsers.add_parser('diagnose', parents=[problem, solver],
                                 help='State-evolution evidence of a VDAMP run')
    add_algorithm_arg(diag, choices=VDAMP_VARIANTS)
    diag.add_argument('--qq-subbands', nargs='+', default=DEFAULT_QQ_SUBBANDS,
                      help='Subband labels for QQ data, e.g. diag_s1 horiz_s2')
    diag.add_argument('--qq-iterations', type=int, nargs='+',
                      default=DEFAULT_QQ_ITERATIONS,
                      help='Iterations for QQ data')
    diag.add_argument('--qq-points', type=int, default=None,
                      help='Quantiles per QQ file (default: every coefficient)')
    diag.add_argument('--noise-images', type=int, default=0,
                      help='Write |Psi^H (r_k - w0)| images for k = 1..K')
    return parser


def build_parser(argv):
    parser = ArgumentParser(description='Variable density AMP reconstruction toolkit',
                            allow_abbrev=False)
    parser = parse_args(parser)

    pre = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    pre.add_argument('--config', type=str, default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config is not None:
        config = load_config(known.config)
        subparsers = next(a for a in parser._actions
                          if isinstance(a, argparse._SubParsersAction))
        for sub in subparsers.choices.values():
            dests = {a.dest for a in sub._actions}
            sub.set_defaults(**{k: v for k, v in config.items() if k in dests})
        known_dests = set().union(*({a.dest for a in sub._actions}
                                    for sub in subparsers.choices.values()))
        unknown = sorted(set(config) - known_dests)
        if unknown:
            raise ValueError(f'unknown keys in {known.config}: {unknown}')
    return parser


def setup_output(args):
    if args.command == 'phantom' and args.output and args.output.endswith('.pgm'):
        args.pgm_path = args.output
        args.output = os.path.dirname(args.output) or '.'
    args.output = args.output or os.path.join('results', args.command)
    os.makedirs(args.output, exist_ok=True)
    save_config(vars(args), os.path.join(args.output, 'config.json'))


def init_logging(args, subsets):
    log_fpath = args.log_file or os.path.join(args.output, f'nvlog_{args.command}.json')
    logger.init(log_fpath, args.output, enabled=True, tb_subsets=subsets,
                tensorboard=args.tensorboard)
    logger.parameters(vars(args))


def build_density(shape, args, accel=None):
    accel = args.accel if accel is None else accel
    if accel < 1:
        raise ValueError(f'acceleration must be >= 1, got {accel}')
    if args.uniform:
        return uniform_density(shape, 1 / accel)
    return make_density(shape, 1 / accel, args.center_frac, args.decay, args.pmin)


def load_ground_truth(args):
    if args.image is not None:
        return load_grayscale(args.image)
    if args.phantom is not None:
        return shepp_logan(args.phantom, modified=args.modified)
    raise UsageError('a ground truth is required: pass --phantom SIZE or --image PATH')


def build_problem(args, device, accel=None, seed=None):
    seed = args.seed if seed is None else seed
    x0 = to_device_async(load_ground_truth(args), device)
    shape = tuple(x0.shape)
    if args.density is not None:
        density = load_density(args.density)
    else:
        density = build_density(shape, args, accel)
    sampling = load_mask(args.mask) if args.mask is not None else draw_mask(density, seed)
    for name, other in (('density', density.shape), ('mask', sampling.shape)):
        if other != shape:
            raise ValueError(f'{name} shape {other} does not match image shape {shape}')
    density = ProbabilityMap(to_device_async(density.p, device))
    sampling = SamplingSet(to_device_async(sampling.mask, device))

    sigma = args.sigma if args.sigma is not None else snr_to_sigma(x0, args.snr)
    noise_seed = args.noise_seed if args.noise_seed is not None else seed + 1
    y = measure(x0, sampling, sigma, noise_seed)
    return ReconProblem(y=y, sampling=sampling, density=density, x0=x0,
                        sigma=sigma, scales=args.scales)


def solve(algorithm, problem, args):
    if algorithms.needs_lambda(algorithm) and args.lam is None and not args.tune_lambda:
        raise UsageError(f'{algorithm} needs --lambda or --tune-lambda')
    lam = algorithms.choose_lambda(algorithm, problem, args)
    config = algorithms.get_algorithm_config(algorithm, args, problem.sigma, lam)
    timer = MeasureTime(cuda=args.cuda)
    with timer:
        result = algorithms.run_algorithm(algorithm, problem, config)
    return result, lam, timer[-1]


def run_summary(algorithm, problem, result, lam, wall_time):
    x0 = problem.x0
    final = nmse_db(result.x_hat, x0)
    return {'algorithm': algorithm,
            'lambda': lam,
            'sigma': problem.sigma,
            'n_observed': problem.sampling.n_observed,
            'final_nmse_db': final,
            'zero_filled_nmse_db': nmse_db(zero_filled(problem.y), x0),
            'density_compensated_nmse_db': nmse_db(
                density_compensated_estimate(problem.y, problem.density), x0),
            'converged_iteration': result.converged_iteration,
            'wall_time_s': wall_time}


def cmd_mask(args, device):
    shape = parse_shape(args.shape)
    density = build_density(shape, args)
    sampling = draw_mask(density, args.seed)
    save_density(density, os.path.join(args.output, 'density.bin'))
    save_mask(sampling, os.path.join(args.output, 'mask.bin'))
    n = shape[0] * shape[1]
    expected = float(density.p.sum())
    summary = {'shape': list(shape), 'accel': args.accel,
               'target_fraction': 1 / args.accel,
               'expected_fraction': expected / n,
               'expected_observed': expected,
               'n_observed': sampling.n_observed,
               'observed_fraction': sampling.n_observed / n}
    save_json(summary, os.path.join(args.output, 'summary.json'))
    logger.log('mask', data={'expected_fraction': expected / n,
                             'n_observed': sampling.n_observed}, subset='')
    return EXIT_OK


def cmd_phantom(args, device):
    h, w = parse_shape(args.size)
    img = shepp_logan(h, w, modified=args.modified)
    fpath = getattr(args, 'pgm_path', None) or os.path.join(
        args.output, f'shepp_logan_{h}x{w}.pgm')
    save_grayscale(img, fpath, bits=args.bits)
    logger.log('phantom', data={'path': fpath}, subset='')
    return EXIT_OK


def cmd_reconstruct(args, device):
    problem = build_problem(args, device)
    result, lam, wall_time = solve(args.algorithm, problem, args)
    layout = SubbandLayout(tuple(problem.y.shape), args.scales)

    save_grayscale(result.x_hat, os.path.join(args.output, 'recon.pgm'))
    write_trace(result.trace, os.path.join(args.output, 'trace.csv'),
                timing=not args.no_timing)
    summary = run_summary(args.algorithm, problem, result, lam, wall_time)
    if args.no_timing:
        summary['wall_time_s'] = 0.0
    save_json(summary, os.path.join(args.output, 'summary.json'))

    labels = [layout.label(b) for b in range(layout.n_subbands)]
    logger.log_trace(args.algorithm, result.trace, labels, subset=args.algorithm)
    logger.log(args.algorithm, data={'NMSE/Final': summary['final_nmse_db'],
                                     'NMSE/Zero filled': summary['zero_filled_nmse_db'],
                                     'Time/Total': wall_time},
               subset=args.algorithm)
    return EXIT_OK


def _benchmark_cell(args, device, algorithm, accel, seed):
    cell_dir = os.path.join(args.output, f'{algorithm}_accel{accel:g}_seed{seed}')
    os.makedirs(cell_dir, exist_ok=True)
    row = {'algorithm': algorithm, 'accel': accel, 'seed': seed, 'status': 'ok', 'error': ''}
    try:
        problem = build_problem(args, device, accel=accel, seed=seed)
        result, lam, wall_time = solve(algorithm, problem, args)
        write_trace(result.trace, os.path.join(cell_dir, 'trace.csv'),
                    timing=not args.no_timing)
        row.update(run_summary(algorithm, problem, result, lam, wall_time))
        if args.no_timing:
            row['wall_time_s'] = 0.0
    except (ValueError, SolverError, UsageError) as e:
        row.update(status='failed', error=str(e))
    return row


def cmd_benchmark(args, device):
    cells = [(alg, accel, seed) for alg in args.algorithms
             for accel in args.accels for seed in args.seeds]
    with ThreadPoolExecutor(max_workers=num_threads()) as pool:
        futures = {cell: pool.submit(_benchmark_cell, args, device, *cell) for cell in cells}
        rows = [futures[cell].result()
                for cell in tqdm(sorted(cells), desc='benchmark cells')]

    reference = {(r['accel'], r['seed']): r.get('converged_iteration')
                 for r in rows if r['algorithm'] == 'fista' and r['status'] == 'ok'}
    for row in rows:
        ref = reference.get((row['accel'], row['seed']))
        conv = row.get('converged_iteration')
        row['fista_convergence_ratio'] = (ref / conv if ref is not None and conv
                                          else math.nan)
        if row['status'] == 'ok':
            logger.log(f'{row["algorithm"]} accel {row["accel"]:g} seed {row["seed"]}',
                       data={'NMSE/Final': row['final_nmse_db'],
                             'Convergence/Iteration': row['converged_iteration']},
                       subset=row['algorithm'])

    fields = ['algorithm', 'accel', 'seed', 'lambda', 'sigma', 'n_observed',
              'final_nmse_db', 'zero_filled_nmse_db', 'density_compensated_nmse_db',
              'converged_iteration', 'fista_convergence_ratio', 'wall_time_s',
              'status', 'error']
    write_csv_rows(os.path.join(args.output, 'benchmark.csv'), fields,
                   [{k: row.get(k, '') for k in fields} for row in rows])
    if all(row['status'] != 'ok' for row in rows):
        print('all benchmark cells failed', file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def resolve_subbands(labels, layout):
    by_label = {layout.label(b): b for b in range(layout.n_subbands)}
    missing = [label for label in labels if label not in by_label]
    if missing:
        raise ValueError(f'unknown subbands {missing}, choose from {sorted(by_label)}')
    return [by_label[label] for label in labels]


def cmd_diagnose(args, device):
    problem = build_problem(args, device)
    layout = SubbandLayout(tuple(problem.y.shape), args.scales)
    qq_subbands = resolve_subbands(args.qq_subbands, layout)
    if max(args.qq_iterations) >= args.iterations:
        raise ValueError(f'QQ iterations {args.qq_iterations} exceed the run length '
                         f'{args.iterations}')

    args.keep_iterates = True
    result, _, _ = solve(args.algorithm, problem, args)
    w0 = dwt_forward(problem.x0.to(torch.complex128), args.scales)
    report = state_evolution_report(result, w0, qq_subbands, args.qq_iterations,
                                    args.qq_points)
    report.write(args.output)
    write_trace(result.trace, os.path.join(args.output, 'trace.csv'),
                timing=not args.no_timing)

    peak = float(torch.abs(problem.x0).max())
    for k in range(1, min(args.noise_images, args.iterations - 1) + 1):
        save_grayscale(effective_noise_image(result.trace[k].r, w0, peak),
                       os.path.join(args.output, f'effective_noise_k{k}.pgm'))

    for row in report.kurtosis:
        logger.log((args.algorithm, row['iteration']),
                   data={'Kurtosis/Real': row['kurt_real'],
                         'Kurtosis/Imag': row['kurt_imag']},
                   subset=args.algorithm)
    return EXIT_OK


COMMANDS = {'mask': cmd_mask, 'phantom': cmd_phantom, 'reconstruct': cmd_reconstruct,
            'benchmark': cmd_benchmark, 'diagnose': cmd_diagnose}


def main(argv=None):
    """
    Launches a toolkit command.
    """
    argv = sys.argv[1:] if argv is None else argv
    try:
        parser = build_parser(argv)
    except ValueError as e:
        print(f'error: {e}', file=sys.stderr)
        return EXIT_CONFIG
    args = parser.parse_args(argv)

    try:
        setup_output(args)
        subsets = list(getattr(args, 'algorithms', None) or [getattr(args, 'algorithm', '')])
        init_logging(args, [s for s in subsets if s])
        device = get_device(args.cuda)
        with warnings.catch_warnings():
            warnings.simplefilter('once')
            status = COMMANDS[args.command](args, device)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f'error: {e}', file=sys.stderr)
        return EXIT_USAGE
    except SolverError as e:
        print(f'solver failure: {e}', file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as e:
        print(f'error: {e}', file=sys.stderr)
        return EXIT_CONFIG
    finally:
        logger.flush()
    return status


if __name__ == '__main__':
    sys.exit(main())
