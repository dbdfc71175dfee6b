"""Experiment configuration, dataset resolution and solver dispatch."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import logreg, parsolvers, seqsolvers
from .dataio.dataset import Dataset
from .dataio.fetch import fetch_dataset, load_registry
from .dataio.layout import LAYOUTS, pad_to_multiple
from .dataio.libsvm import load_libsvm
from .dataio.synthetic import gen_synthetic
from .seqsolvers import ConvergenceTrace, SolverConfig
from .simgrid.grid import ProcessorGrid
from .simgrid.ledger import CostLedger, HockneyParams, MergedLedger, hockney_time

ALGORITHMS = ("gd", "sgd", "sstep", "par_sgd", "fedavg", "hybrid")
_TOP_KEYS = {"dataset", "algorithm", "solver", "grid", "layout", "p", "matched", "hockney",
             "trace_every", "output_dir", "seed", "s_max", "wall_time", "mode"}
_SOLVER_KEYS = {"b", "eta", "K", "s", "tau", "sampler", "allow_large_eta"}


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _int(raw: dict, key: str, path: str, default=None, minimum: int | None = None):
    val = raw.get(key, default)
    if val is None:
        return None
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"{path}.{key}" if path else key, f"expected an integer, got {val!r}")
    if minimum is not None and val < minimum:
        raise ConfigError(f"{path}.{key}" if path else key, f"must be >= {minimum}, got {val}")
    return val


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully resolved experiment. ``to_dict`` output reloads to an equal config."""

    dataset: str | dict
    algorithm: str
    solver: SolverConfig
    p_r: int = 1
    p_c: int = 1
    layout: str = "grid2d"
    p: int = 1
    matched: bool = False
    hockney: HockneyParams = field(default_factory=HockneyParams)
    output_dir: str = "out"
    s_max: int | None = None
    wall_time: bool = False
    mode: str = "reference"

    @property
    def grid(self) -> ProcessorGrid:
        return ProcessorGrid(self.p_r, self.p_c)

    def to_dict(self) -> dict:
        sol = asdict(self.solver)
        trace_every = sol.pop("trace_every")
        seed = sol.pop("seed")
        return {
            "dataset": self.dataset, "algorithm": self.algorithm, "solver": sol,
            "grid": {"p_r": self.p_r, "p_c": self.p_c}, "layout": self.layout, "p": self.p,
            "matched": self.matched, "hockney": asdict(self.hockney),
            "trace_every": trace_every, "output_dir": self.output_dir, "seed": seed,
            "s_max": self.s_max, "wall_time": self.wall_time, "mode": self.mode,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> ExperimentConfig:
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "configuration must be a JSON object")
        unknown = sorted(set(raw) - _TOP_KEYS)
        if unknown:
            raise ConfigError(unknown[0], "unknown field")
        if "dataset" not in raw:
            raise ConfigError("dataset", "required")
        dataset = raw["dataset"]
        _check_dataset(dataset)
        alg = raw.get("algorithm")
        if alg not in ALGORITHMS:
            raise ConfigError("algorithm", f"must be one of {list(ALGORITHMS)}, got {alg!r}")

        sol = raw.get("solver", {})
        if not isinstance(sol, dict):
            raise ConfigError("solver", "must be an object")
        bad = sorted(set(sol) - _SOLVER_KEYS)
        if bad:
            raise ConfigError(f"solver.{bad[0]}", "unknown field")
        eta = sol.get("eta", 1.0)
        if isinstance(eta, bool) or not isinstance(eta, (int, float)):
            raise ConfigError("solver.eta", f"expected a number, got {eta!r}")
        kwargs = dict(
            b=_int(sol, "b", "solver", 1, 1), eta=float(eta), K=_int(sol, "K", "solver", 1, 0),
            s=_int(sol, "s", "solver", 1, 1), tau=_int(sol, "tau", "solver", 1, 1),
            seed=_int(raw, "seed", "", 0), sampler=sol.get("sampler", "cyclic"),
            trace_every=_int(raw, "trace_every", "", None, 1),
            allow_large_eta=bool(sol.get("allow_large_eta", False)),
        )
        if kwargs["eta"] < 0 or not math.isfinite(kwargs["eta"]):
            raise ConfigError("solver.eta", "must be finite and >= 0")
        if kwargs["eta"] > 1 and not kwargs["allow_large_eta"]:
            raise ConfigError("solver.eta", "step size above 1 needs solver.allow_large_eta")
        if kwargs["sampler"] not in seqsolvers.SAMPLERS:
            raise ConfigError("solver.sampler", f"must be one of {list(seqsolvers.SAMPLERS)}")
        solver = SolverConfig(**kwargs)

        grid = raw.get("grid", {})
        if not isinstance(grid, dict):
            raise ConfigError("grid", "must be an object")
        p_r, p_c = _int(grid, "p_r", "grid", 1, 1), _int(grid, "p_c", "grid", 1, 1)
        layout = raw.get("layout", "grid2d")
        if layout not in LAYOUTS:
            raise ConfigError("layout", f"must be one of {list(LAYOUTS)}")
        p = _int(raw, "p", "", 1, 1)

        hk = raw.get("hockney", {})
        if not isinstance(hk, dict):
            raise ConfigError("hockney", "must be an object")
        for key in hk:
            if key not in ("alpha", "beta", "gamma", "phi"):
                raise ConfigError(f"hockney.{key}", "unknown field")
            if isinstance(hk[key], bool) or not isinstance(hk[key], (int, float)):
                raise ConfigError(f"hockney.{key}", "expected a number")
        try:
            hockney = HockneyParams(**{k: float(v) for k, v in hk.items()})
        except ValueError as exc:
            raise ConfigError("hockney", str(exc)) from None

        mode = raw.get("mode", "reference")
        if mode not in ("reference", "threaded"):
            raise ConfigError("mode", "must be 'reference' or 'threaded'")
        out = raw.get("output_dir", "out")
        if not isinstance(out, str):
            raise ConfigError("output_dir", "must be a string")
        cfg = cls(dataset, alg, solver, p_r, p_c, layout, p, bool(raw.get("matched", False)),
                  hockney, out, _int(raw, "s_max", "", None, 1), bool(raw.get("wall_time", False)),
                  mode)
        cfg._check_algorithm()
        return cfg

    def _check_algorithm(self) -> None:
        s, tau, b, K = self.solver.s, self.solver.tau, self.solver.b, self.solver.K
        alg = self.algorithm
        if alg in ("sstep", "hybrid") and K % s:
            raise ConfigError("solver.K", f"must be a multiple of s={s}")
        if alg == "hybrid":
            if s > tau:
                raise ConfigError("solver.s", f"s={s} must not exceed tau={tau}")
            if tau % s:
                raise ConfigError("solver.tau", f"must be a multiple of s={s}")
        if alg in ("fedavg", "hybrid") and K % tau:
            raise ConfigError("solver.K", f"must be a multiple of tau={tau}")
        if alg in ("par_sgd", "hybrid") and b % self.p_r:
            raise ConfigError("grid.p_r", f"must divide the batch size b={b}")
        if alg == "par_sgd":
            if self.layout == "row1d" and self.p_c != 1:
                raise ConfigError("grid.p_c", "row1d layout needs p_c = 1")
            if self.layout == "col1d" and self.p_r != 1:
                raise ConfigError("grid.p_r", "col1d layout needs p_r = 1")
        if alg == "fedavg" and self.matched and b % self.p:
            raise ConfigError("p", f"matched sampling needs p to divide b={b}")
        if self.s_max is not None and self.s_max < s:
            raise ConfigError("s_max", f"must be >= s={s}")


def _check_dataset(ds) -> None:
    if isinstance(ds, str):
        return
    if not isinstance(ds, dict):
        raise ConfigError("dataset", "must be a registry name, {'path': ...} or {'synthetic': ...}")
    if "synthetic" in ds:
        synth = ds["synthetic"]
        if not isinstance(synth, dict):
            raise ConfigError("dataset.synthetic", "must be an object")
        for key in ("m", "n", "c"):
            if key not in synth:
                raise ConfigError(f"dataset.synthetic.{key}", "required")
            _int(synth, key, "dataset.synthetic", None, 1)
        _int(synth, "seed", "dataset.synthetic", 0)
        if synth["c"] > synth["n"]:
            raise ConfigError("dataset.synthetic.c", "must not exceed n")
    elif "path" in ds:
        if not isinstance(ds["path"], str):
            raise ConfigError("dataset.path", "must be a string")
    else:
        raise ConfigError("dataset", "object form needs 'path' or 'synthetic'")


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a JSON config. OSError propagates; malformed JSON becomes ConfigError."""
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON ({exc})") from None
    return ExperimentConfig.from_dict(raw)


def resolve_dataset(ref: str | dict, cache_dir: str | Path | None = None) -> Dataset:
    """Registry name, ``{"path": file}`` or ``{"synthetic": {m, n, c, seed}}``."""
    if isinstance(ref, str):
        if ref in load_registry():
            return fetch_dataset(ref, cache_dir)
        return load_libsvm(ref)
    if "synthetic" in ref:
        synth = ref["synthetic"]
        return gen_synthetic(synth["m"], synth["n"], synth["c"], synth.get("seed", 0))
    label_map = ref.get("label_map")
    if label_map is not None:
        label_map = {float(k): float(v) for k, v in label_map.items()}
    return load_libsvm(ref["path"], n=ref.get("n"), label_map=label_map)


def padding_multiple(cfg: ExperimentConfig) -> int:
    """Row count multiple that every solver in ``cfg`` needs."""
    alg, b = cfg.algorithm, cfg.solver.b
    if alg == "gd":
        return 1
    s_max = cfg.s_max or (cfg.solver.s if alg in ("sstep", "hybrid") else 1)
    mult = s_max * b
    if alg == "fedavg":
        mult = math.lcm(mult, cfg.p)
    if alg in ("par_sgd", "hybrid"):
        mult = math.lcm(mult, cfg.p_r)
    return mult


@dataclass
class RunOutcome:
    dataset: Dataset
    x: np.ndarray
    trace: ConvergenceTrace
    ledger: CostLedger | MergedLedger
    modeled_time: float


def run_experiment(cfg: ExperimentConfig, data: Dataset | None = None) -> RunOutcome:
    d = resolve_dataset(cfg.dataset) if data is None else data
    d = pad_to_multiple(d, padding_multiple(cfg))
    sol, hk = cfg.solver, cfg.hockney
    alg = cfg.algorithm
    if alg in ("gd", "sgd", "sstep"):
        ledger = CostLedger()
        solver = {"gd": seqsolvers.gd, "sgd": seqsolvers.sgd, "sstep": seqsolvers.sstep_sgd}[alg]
        x, trace = solver(d, sol, ledger=ledger, hockney=hk)
        return RunOutcome(d, x, trace, ledger,
                          hockney_time(ledger, hk.alpha, hk.beta, hk.gamma, hk.phi))
    if alg == "par_sgd":
        run = parsolvers.par_sgd(d, cfg.grid, cfg.layout, sol, hk, cfg.mode)
    elif alg == "fedavg":
        run = parsolvers.fedavg(d, cfg.p, sol, cfg.matched, hk, cfg.mode)
    else:
        run = parsolvers.hybrid_sgd(d, cfg.grid, sol, hk, cfg.mode)
    return RunOutcome(d, run.x, run.trace, run.ledger, run.modeled_time)


def x_checksum(x: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(x, dtype="<f8").tobytes()).hexdigest()


def summary(cfg: ExperimentConfig, out: RunOutcome) -> dict:
    d = out.dataset
    return {
        "status": "ok",
        "final_objective": logreg.objective(d, out.x),
        "accuracy": logreg.accuracy(d, out.x),
        "x_sha256": x_checksum(out.x),
        "grad_evals": int(out.trace.records[-1].grad_evals) if out.trace.records else 0,
        "modeled_time": out.modeled_time,
        "dataset": {"name": d.name, "m": d.m_original, "n": d.n, "padded_rows": d.padded_rows},
        "config": cfg.to_dict(),
    }
