import atexit
import datetime
import glob
import math
import os
import re
import numpy as np

import torch
from torch.utils.tensorboard import SummaryWriter

import dllogger
from dllogger import StdOutBackend, JSONStreamBackend, Verbosity


tb_loggers = {}


class TBLogger:
    def __init__(self, enabled, log_dir, name, interval=1):
        self.enabled = enabled
        self.interval = interval
        self.cache = {}
        if self.enabled:
            self.summary_writer = SummaryWriter(
                log_dir=os.path.join(log_dir, name),
                flush_secs=120, max_queue=200)
            atexit.register(self.summary_writer.close)

    def log(self, step, data):
        for k, v in data.items():
            self.log_value(step, k, v.item() if type(v) is torch.Tensor else v)

    def log_value(self, step, key, val, stat='mean'):
        if self.enabled:
            if key not in self.cache:
                self.cache[key] = []
            self.cache[key].append(val)
            if len(self.cache[key]) == self.interval:
                agg_val = getattr(np, stat)(self.cache[key])
                self.summary_writer.add_scalar(key, agg_val, step)
                del self.cache[key]

    def log_subbands(self, step, key, values, labels):
        for label, val in zip(labels, values):
            if not math.isnan(val):
                self.log_value(step, f'{key}/{label}', val)


def unique_log_fpath(log_fpath):
    if not os.path.isfile(log_fpath):
        return log_fpath

    # Avoid overwriting old logs
    saved = sorted([int(re.search(r'\.(\d+)$', f).group(1))
                    for f in glob.glob(f'{log_fpath}.*')
                    if re.search(r'\.(\d+)$', f)])

    log_num = (saved[-1] if saved else 0) + 1
    return f'{log_fpath}.{log_num}'


def stdout_step_format(step):
    if isinstance(step, str):
        return step
    fields = []
    if len(step) > 0:
        fields.append("run {}".format(step[0]))
    if len(step) > 1:
        fields.append("iter {:>4}".format(step[1]))
    if len(step) > 2:
        fields[-1] += "/{}".format(step[2])
    return " | ".join(fields)


def stdout_metric_format(metric, metadata, value):
    name = metadata.get("name", metric + ": ")
    unit = metadata.get("unit", None)
    format = f'{{{metadata.get("format", "")}}}'
    fields = [name, format.format(value) if value is not None else value, unit]
    fields = [f for f in fields if f is not None]
    return "| " + " ".join(fields)


def prefix_format(timestamp):
    timestamp = timestamp.strftime('%Y-%m-%d %H:%M:%S')
    return "[{}] ".format(timestamp)


def init(log_fpath, log_dir, enabled=True, tb_subsets=[], **tb_kw):

    if enabled:
        backends = [JSONStreamBackend(Verbosity.DEFAULT,
                                      unique_log_fpath(log_fpath)),
                    StdOutBackend(Verbosity.VERBOSE,
                                  step_format=stdout_step_format,
                                  metric_format=stdout_metric_format,
                                  prefix_format=prefix_format)]
    else:
        backends = []

    dllogger.init(backends=backends)

    for id_ in tb_subsets:
        dllogger.metadata(f"{id_}_NMSE/Total",
                          {"name": f"{id_} nmse", "unit": "dB", "format": ":>7.2f"})
        dllogger.metadata(f"{id_}_NMSE/Final",
                          {"name": f"{id_} final nmse", "unit": "dB", "format": ":>7.2f"})
        dllogger.metadata(f"{id_}_NMSE/Zero filled",
                          {"name": "zero-filled nmse", "unit": "dB", "format": ":>7.2f"})
        dllogger.metadata(f"{id_}_Tau/Mean",
                          {"name": "tau", "format": ":>9.3e"})
        dllogger.metadata(f"{id_}_Onsager/Alpha",
                          {"name": "alpha", "format": ":>6.3f"})
        dllogger.metadata(f"{id_}_Onsager/Gain",
                          {"name": "c", "format": ":>8.3f"})
        dllogger.metadata(f"{id_}_Kurtosis/Real",
                          {"name": "kurt re", "format": ":>6.3f"})
        dllogger.metadata(f"{id_}_Kurtosis/Imag",
                          {"name": "kurt im", "format": ":>6.3f"})
        dllogger.metadata(f"{id_}_Convergence/Iteration",
                          {"name": "converged at", "format": ":>5d"})
        dllogger.metadata(f"{id_}_Time/Iter time",
                          {"name": "took", "unit": "ms", "format": ":>8.2f"})
        dllogger.metadata(f"{id_}_Time/Total",
                          {"name": "total", "unit": "s", "format": ":>8.2f"})

    timestamp = datetime.datetime.now().strftime('%Y-%m-%dT%H.%M.%S')
    tensorboard = tb_kw.pop('tensorboard', True)
    global tb_loggers
    tb_loggers = {s: TBLogger(enabled and tensorboard, log_dir,
                              name=os.path.join(s, timestamp), **tb_kw)
                  for s in tb_subsets}


def log(step, tb_total_steps=None, data={}, subset='vdamp_s'):
    if tb_total_steps is not None and subset in tb_loggers:
        tb_loggers[subset].log(tb_total_steps, data)

    if subset != '':
        data = {f'{subset}_{key}': v for key, v in data.items()}
    dllogger.log(step, data=data)


def _mean(values):
    finite = [v for v in values if not math.isnan(v)]
    return float(np.mean(finite)) if finite else float('nan')


def log_trace(run, trace, labels, subset, verbose_every=10):
    """Per-iteration metrics of a solver trace; every iteration reaches
    TensorBoard, every `verbose_every`-th the stdout/JSON log."""
    for rec in trace:
        data = {'NMSE/Total': rec.nmse_db,
                'Tau/Mean': _mean(rec.tau),
                'Onsager/Alpha': _mean(rec.alpha),
                'Onsager/Gain': _mean(rec.c),
                'Time/Iter time': rec.wall_time * 1000}
        if subset in tb_loggers:
            tbl = tb_loggers[subset]
            tbl.log(rec.iteration, {k: v for k, v in data.items() if not math.isnan(v)})
            tbl.log_subbands(rec.iteration, 'NMSE_subband', rec.subband_nmse, labels)
            tbl.log_subbands(rec.iteration, 'Tau_subband', rec.tau, labels)
        if rec.iteration % verbose_every == 0 or rec.iteration == len(trace) - 1:
            log((run, rec.iteration, len(trace)), data=data, subset=subset)


def parameters(data, verbosity=0, tb_subset=None):
    for k, v in data.items():
        dllogger.log(step="PARAMETER", data={k: v}, verbosity=verbosity)


def flush():
    dllogger.flush()
    for tbl in tb_loggers.values():
        if tbl.enabled:
            tbl.summary_writer.flush()
