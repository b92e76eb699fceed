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

from vdamp.solvers import ALGORITHMS


def parse_problem_args(parent, add_help=False):
    """
    Arguments describing the image, sampling and noise of a problem instance.
    """
    parser = argparse.ArgumentParser(parents=[parent], add_help=add_help,
                                     allow_abbrev=False)
    image = parser.add_argument_group('image source')
    image.add_argument('--phantom', type=int, default=None, metavar='SIZE',
                       help='Use a SIZExSIZE Shepp-Logan phantom as ground truth')
    image.add_argument('--modified', action='store_true',
                       help='Use the high-contrast Shepp-Logan intensities')
    image.add_argument('--image', type=str, default=None,
                       help='8/16-bit PGM ground-truth image')

    sampling = parser.add_argument_group('sampling parameters')
    sampling.add_argument('--accel', type=float, default=8.0,
                          help='Acceleration factor N/n of the density')
    sampling.add_argument('--pmin', type=float, default=0.01,
                          help='Lower bound on sampling probabilities')
    sampling.add_argument('--decay', type=float, default=8.0,
                          help='Polynomial decay order of the density')
    sampling.add_argument('--center-frac', type=float, default=1/32,
                          help='Radius of the fully sampled k-space centre, '
                          'as a fraction of the field of view')
    sampling.add_argument('--uniform', action='store_true',
                          help='Uniform density instead of the polynomial one')
    sampling.add_argument('--mask', type=str, default=None,
                          help='Binary sampling mask (overrides the drawn one)')
    sampling.add_argument('--density', type=str, default=None,
                          help='Binary probability map (overrides the built one)')

    noise = parser.add_argument_group('noise parameters')
    noise.add_argument('--snr', type=float, default=40.0,
                       help='Measurement SNR ||x0||^2 / (N sigma^2) in dB')
    noise.add_argument('--sigma', type=float, default=None,
                       help='Noise standard deviation (overrides --snr)')
    noise.add_argument('--seed', type=int, default=0,
                       help='Seed of the mask draw')
    noise.add_argument('--noise-seed', type=int, default=None,
                       help='Seed of the measurement noise (defaults to --seed + 1)')
    return parser


def parse_solver_args(parent, add_help=False):
    """
    Parse solver arguments.
    """
    parser = argparse.ArgumentParser(parents=[parent], add_help=add_help,
                                     allow_abbrev=False)
    solver = parser.add_argument_group('solver parameters')
    solver.add_argument('--iterations', type=int, default=100,
                        help='Number of iterations K_it')
    solver.add_argument('--scales', type=int, default=4,
                        help='Haar decomposition scales')
    solver.add_argument('--estimate-tau', action='store_true',
                        help='FISTA family: estimate tau from the data instead '
                        'of the ground-truth oracle')
    solver.add_argument('--no-momentum', action='store_true',
                        help='FISTA family: disable momentum (plain ISTA)')
    solver.add_argument('--power-iters', type=int, default=1000,
                        help='S-FISTA: maximum power iterations per subband pair')
    solver.add_argument('--power-tol', type=float, default=1e-6,
                        help='S-FISTA: relative tolerance of the power iteration')
    solver.add_argument('--no-timing', action='store_true',
                        help='Write zero wall times so reruns are byte-identical')

    lam = parser.add_argument_group('regularization parameters')
    lam.add_argument('--lambda', dest='lam', type=float, default=None,
                     help='FISTA/S-FISTA threshold multiplier')
    lam.add_argument('--tune-lambda', action='store_true',
                     help='Pick lambda by grid search on the ground truth '
                     '(benchmark default; an explicit --lambda wins)')
    lam.add_argument('--k-eval', type=int, default=100,
                     help='Iteration at which the grid search compares NMSE')
    lam.add_argument('--lambda-min', type=float, default=1e-4,
                     help='Grid lower end, relative to 1/rms(x0)')
    lam.add_argument('--lambda-max', type=float, default=1e1,
                     help='Grid upper end, relative to 1/rms(x0)')
    lam.add_argument('--lambda-per-decade', type=int, default=16,
                     help='Grid points per decade')
    return parser


def add_algorithm_arg(parser, multiple=False, choices=ALGORITHMS, default='vdamp_s'):
    if multiple:
        parser.add_argument('--algorithms', nargs='+', choices=choices,
                            default=list(choices), help='Algorithms to run')
    else:
        parser.add_argument('--algorithm', choices=choices, default=default,
                            help='Reconstruction algorithm')
    return parser
