"""Command-line entry point: run, figure, fetch and sweep."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import costmodel
from .dataio.fetch import FetchError, fetch_dataset
from .experiment import (
    ConfigError,
    ExperimentConfig,
    load_config,
    resolve_dataset,
    run_experiment,
    summary,
)
from .figures import FIGURES, run_figure
from .seqsolvers import DivergenceError

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("hybridsgd")


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.output_dir:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "output_dir": args.output_dir})
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / "config.json", cfg.to_dict())
    try:
        result = run_experiment(cfg)
    except DivergenceError as exc:
        if exc.trace is not None:
            (out / "trace.csv").write_text(exc.trace.to_csv(cfg.wall_time))
        _dump(out / "summary.json", {"status": "diverged", "iteration": exc.iteration,
                                     "config": cfg.to_dict()})
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    (out / "trace.csv").write_text(result.trace.to_csv(cfg.wall_time))
    (out / "ledger.csv").write_text(result.ledger.to_csv())
    info = summary(cfg, result)
    _dump(out / "summary.json", info)
    print(f"objective={info['final_objective']:.6g} accuracy={info['accuracy']:.4f} "
          f"modeled_time={info['modeled_time']:.6g}s -> {out}")
    return EXIT_OK


def _coerce(text: str):
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            pass
    return text


def cmd_figure(args) -> int:
    params = {}
    for item in args.param:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--param {item}", "expected key=value")
        params[key] = _coerce(value)
    out = args.out or f"figures/{args.name}"
    try:
        result = run_figure(args.name, out, params)
    except TypeError as exc:  # unexpected keyword for the recipe
        raise ConfigError("--param", str(exc)) from None
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_fetch(args) -> int:
    d = fetch_dataset(args.dataset, args.cache_dir)
    print(f"{args.dataset}: m={d.m} n={d.n} nnz={d.nnz} density={d.density:.4f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        raw = json.loads(Path(args.config).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON ({exc})") from None
    for key in ("dataset", "p", "base"):
        if key not in raw:
            raise ConfigError(key, "required")
    d = resolve_dataset(raw["dataset"])
    base = costmodel.params_from_dataset(d, **raw["base"])
    hk = raw.get("hockney", {})
    try:
        rows = costmodel.sweep(
            costmodel.hybrid_cells(raw["p"], raw.get("s_values", [1]), base),
            hk.get("alpha", 0.0), hk.get("beta", 0.0), hk.get("gamma", 0.0), hk.get("phi", 4.0),
            raw.get("mode", "derived"),
            tuple(raw["baseline"]) if raw.get("baseline") else None)
    except (KeyError, ValueError) as exc:
        raise ConfigError("base", str(exc)) from None
    text = costmodel.sweep_csv(rows)
    if raw.get("output"):
        Path(raw["output"]).write_text(text)
    if args.output:
        Path(args.output).write_text(text)
    for r in rows[: args.top]:
        print(f"s={r.s:<4} p_r={r.p_r:<4} p_c={r.p_c:<4} time={r.modeled_time:.4g}s "
              f"speedup={r.speedup:.3g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybridsgd", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment from a JSON config")
    p.add_argument("config")
    p.add_argument("--output-dir", help="override output_dir from the config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("figure", help="emit the CSV data behind a figure")
    p.add_argument("name", choices=sorted(FIGURES))
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--out", help="output directory (default figures/<name>)")
    p.set_defaults(func=cmd_figure)

    p = sub.add_parser("fetch", help="download a registry dataset into the cache")
    p.add_argument("dataset")
    p.add_argument("--cache-dir", help="cache directory (default $HYBRIDSGD_CACHE)")
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("sweep", help="rank HybridSGD grid shapes by modeled time")
    p.add_argument("config")
    p.add_argument("--output", help="write the sweep CSV here")
    p.add_argument("--top", type=int, default=10)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FetchError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (KeyError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
