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

import logging

from vdamp.solvers import (FISTA_VARIANTS, LAMBDA_ALGORITHMS, VDAMP_VARIANTS,
                           SolverConfig, default_lambda_grid,
                           fista_family, sfista_weights, tune_lambda, vdamp)


logger = logging.getLogger(__name__)


def get_algorithm_config(algorithm, args, sigma, lam=None):
    """Builds a SolverConfig for `algorithm` from parsed arguments"""
    if algorithm not in VDAMP_VARIANTS + FISTA_VARIANTS:
        raise NotImplementedError(algorithm)
    return SolverConfig(
        algorithm=algorithm,
        iterations=args.iterations,
        scales=args.scales,
        lam=lam if lam is not None else getattr(args, 'lam', None),
        sigma=sigma,
        seed=args.seed,
        oracle_tau=not args.estimate_tau,
        momentum=not args.no_momentum,
        keep_iterates=getattr(args, 'keep_iterates', False),
        power_iters=args.power_iters,
        power_tol=args.power_tol)


def needs_lambda(algorithm):
    return algorithm in LAMBDA_ALGORITHMS


def get_weights(algorithm, problem, config):
    """S-FISTA weights, computed once per mask; None for unit weights"""
    if algorithm != 'sfista':
        return None
    if problem.weights is None:
        logger.info('computing S-FISTA weights for a %dx%d mask', *problem.y.shape)
        problem.weights = sfista_weights(problem.sampling, tuple(problem.y.shape),
                                         config.scales, config.power_iters,
                                         config.power_tol, seed=config.seed)
    return problem.weights


def choose_lambda(algorithm, problem, args):
    if not needs_lambda(algorithm):
        return None
    if args.lam is not None or not args.tune_lambda:
        return args.lam
    config = get_algorithm_config(algorithm, args, problem.sigma)
    get_weights(algorithm, problem, config)
    grid = default_lambda_grid(problem.x0, args.lambda_per_decade,
                               args.lambda_min, args.lambda_max)
    return tune_lambda(problem, algorithm, grid, args.k_eval)


def run_algorithm(algorithm, problem, config):
    """Chooses a solver based on name"""
    if algorithm in VDAMP_VARIANTS:
        return vdamp(problem.y, problem.sampling, problem.density, config,
                     ground_truth=problem.x0)
    elif algorithm in FISTA_VARIANTS:
        weights = get_weights(algorithm, problem, config)
        return fista_family(problem.y, problem.sampling, config, weights=weights,
                            ground_truth=problem.x0, density=problem.density)
    else:
        raise NotImplementedError(algorithm)
