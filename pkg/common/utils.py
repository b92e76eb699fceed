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

import csv
import json
import os
import time

import numpy as np
import torch


class AttrDict(dict):
    def __init__(self, *args, **kwargs):
        super(AttrDict, self).__init__(*args, **kwargs)
        self.__dict__ = self


def load_config(fpath):
    if fpath is None:
        return AttrDict()
    with open(fpath) as f:
        return AttrDict(json.load(f))


def save_config(config, fpath):
    os.makedirs(os.path.dirname(fpath) or '.', exist_ok=True)
    with open(fpath, 'w') as f:
        json.dump(dict(config), f, indent=4, sort_keys=True)


def save_json(data, fpath):
    with open(fpath, 'w') as f:
        json.dump(data, f, indent=4)


def write_csv_rows(fpath, fieldnames, rows):
    with open(fpath, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def read_csv_rows(fpath):
    with open(fpath, newline='') as f:
        return list(csv.DictReader(f))


def parse_shape(text):
    """'256x256' or '256' -> (256, 256)"""
    parts = str(text).lower().split('x')
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2:
        raise ValueError(f'invalid shape {text!r}, expected HxW')
    return tuple(int(p) for p in parts)


def get_device(cuda=False):
    if cuda and not torch.cuda.is_available():
        raise ValueError('CUDA requested but not available')
    return torch.device('cuda' if cuda else 'cpu')


def to_device_async(tensor, device):
    return tensor.to(device, non_blocking=True)


def to_numpy(x):
    return x.cpu().numpy() if isinstance(x, torch.Tensor) else np.asarray(x)


def num_threads(default=1):
    """Worker cap from VDAMP_THREADS."""
    value = os.environ.get('VDAMP_THREADS')
    if value is None:
        return default
    try:
        return max(1, int(value))
    except ValueError:
        raise ValueError(f'VDAMP_THREADS must be an integer, got {value!r}')


class MeasureTime(list):
    def __init__(self, *args, cuda=False, **kwargs):
        super(MeasureTime, self).__init__(*args, **kwargs)
        self.cuda = cuda

    def __enter__(self):
        if self.cuda:
            torch.cuda.synchronize()
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_value, exc_traceback):
        if self.cuda:
            torch.cuda.synchronize()
        self.append(time.perf_counter() - self.t0)
