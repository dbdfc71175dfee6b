"""Experiment recipes that emit one CSV per plotted curve."""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Callable
from pathlib import Path

import numpy as np

from . import costmodel, parsolvers, seqsolvers
from .dataio.dataset import Dataset
from .dataio.layout import pad_to_multiple
from .experiment import resolve_dataset
from .seqsolvers import SolverConfig

FIGURES: dict[str, Callable] = {}


def _figure(name: str):
    def register(fn):
        FIGURES[name] = fn
        return fn
    return register


def _write(path: Path, header: list[str], rows) -> Path:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _curve(path: Path, trace: seqsolvers.ConvergenceTrace, m: int, extra=None) -> Path:
    rows = []
    for i, r in enumerate(trace.records):
        row = [r.iteration, r.grad_evals, _fmt(r.grad_evals / m), _fmt(r.objective)]
        if extra is not None:
            row.append(_fmt(extra[i]))
        rows.append(row)
    header = ["iteration", "grad_evals", "epochs", "objective"]
    if extra is not None:
        header.append("max_abs_dx")
    return _write(path, header, rows)


def _as_list(v) -> list:
    if isinstance(v, (list, tuple)):
        return list(v)
    if isinstance(v, str):
        return [int(t) for t in v.split(",") if t]
    return [v]


def _load(params: dict) -> Dataset:
    ref = params.get("dataset")
    if isinstance(ref, str) and ref.startswith("synthetic:"):
        m, n, c, *seed = (int(t) for t in ref.split(":", 1)[1].split(","))
        ref = {"synthetic": {"m": m, "n": n, "c": c, "seed": seed[0] if seed else 0}}
    return resolve_dataset(ref)


@_figure("gd-vs-sgd")
def gd_vs_sgd(out: Path, dataset="w1a", b=16, eta=1.0, epochs=50) -> dict:
    """GD and SGD loss against gradient evaluations (one GD step = m/b SGD steps)."""
    d = pad_to_multiple(_load({"dataset": dataset}), b)
    per_epoch = d.m // b
    x_gd, t_gd = seqsolvers.gd(d, SolverConfig(b=b, eta=eta, K=epochs))
    x_sgd, t_sgd = seqsolvers.sgd(d, SolverConfig(b=b, eta=eta, K=epochs * per_epoch,
                                                  trace_every=per_epoch))
    _curve(out / "gd.csv", t_gd, d.m)
    _curve(out / "sgd.csv", t_sgd, d.m)
    return {"gd_final": t_gd.final_objective, "sgd_final": t_sgd.final_objective}


@_figure("sstep-equivalence")
def sstep_equivalence(out: Path, dataset="w1a", b=16, eta=None, K=512, s="16,256") -> dict:
    """Loss of SGD and s-step SGD plus the largest entrywise iterate gap at each checkpoint."""
    s_values = _as_list(s)
    eta = 1.0 / b if eta is None else eta
    step = math.lcm(*s_values)
    d = pad_to_multiple(_load({"dataset": dataset}), max(s_values) * b)
    ref: dict[int, np.ndarray] = {}
    _, t_sgd = seqsolvers.sgd(d, SolverConfig(b=b, eta=eta, K=K, trace_every=step),
                              on_record=lambda k, x: ref.__setitem__(k, x.copy()))
    _curve(out / "sgd.csv", t_sgd, d.m, [0.0] * len(t_sgd))
    result = {}
    for s_ in s_values:
        gaps: list[float] = []

        def gap(k, x):
            if k in ref:
                gaps.append(float(np.max(np.abs(x - ref[k]))) if x.size else 0.0)

        _, t = seqsolvers.sstep_sgd(d, SolverConfig(b=b, eta=eta, K=K, s=s_, trace_every=step),
                                    on_record=gap)
        _curve(out / f"sstep-s{s_}.csv", t, d.m, gaps)
        result[f"max_abs_dx_s{s_}"] = max(gaps)
    return result


@_figure("fedavg-delay")
def fedavg_delay(out: Path, dataset="w1a", b=16, eta=1.0, tau=100, p="1,4,16",
                 rounds=20) -> dict:
    """FedAvg loss against total gradient evaluations for several worker counts."""
    ps = _as_list(p)
    d = pad_to_multiple(_load({"dataset": dataset}), math.lcm(b, *ps))
    result = {}
    for q in ps:
        run = parsolvers.fedavg(d, q, SolverConfig(b=b, eta=eta, K=rounds * tau, tau=tau))
        _curve(out / f"fedavg-p{q}.csv", run.trace, d.m)
        result[f"final_p{q}"] = run.trace.final_objective
    return result


@_figure("grid-heatmap")
def grid_heatmap(out: Path, dataset="synthetic:4096,512,16", p=16, b=4, tau=512, K_hat=2048,
                 s="1,2,4,8,16,32", alpha=1e-6, beta=1e-9, gamma=1e-12, phi=4.0) -> dict:
    """Modeled-time speedup of every (s, p_r x p_c) HybridSGD cell over column-parallel SGD."""
    d = _load({"dataset": dataset})
    base = costmodel.params_from_dataset(d, K_hat=K_hat, b=b, tau=tau)
    rows = costmodel.sweep(costmodel.hybrid_cells(p, _as_list(s), base), alpha, beta, gamma, phi)
    (out / "sweep.csv").write_text(costmodel.sweep_csv(rows))
    for s_ in sorted({r.s for r in rows}):
        cells = sorted((r for r in rows if r.s == s_), key=lambda r: r.p_r)
        _write(out / f"heatmap-s{s_}.csv", ["p_r", "p_c", "modeled_time", "speedup"],
               [[r.p_r, r.p_c, _fmt(r.modeled_time), _fmt(r.speedup)] for r in cells])
    best = rows[0]
    return {"best": {"s": best.s, "p_r": best.p_r, "p_c": best.p_c, "speedup": best.speedup}}


def run_figure(name: str, out_dir: str | Path, params: dict | None = None) -> dict:
    """Run a named recipe, writing its CSVs and a ``figure.json`` with params and results."""
    if name not in FIGURES:
        raise KeyError(f"unknown figure {name!r}; known: {sorted(FIGURES)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    params = dict(params or {})
    result = FIGURES[name](out, **params)
    meta = {"figure": name, "params": params, "result": result}
    (out / "figure.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return result
