"""
Command-line interface.

    gelwrinkle run CONFIG [-o DIR]
    gelwrinkle sweep CONFIG SWEEP [-o DIR] [--workers N]
    gelwrinkle probe CHECKPOINT [--config FILE]
    gelwrinkle validate CONFIG [--sweep SWEEP]

Exit codes: 0 ok, 2 configuration error, 3 solver failure, 4 no crossing found.
The sweep worker count defaults to the ``GELWRINKLE_WORKERS`` environment
variable (1 when unset).
"""

import argparse
import logging
import sys
from pathlib import Path

import yaml

from . import __version__
from .config import ConfigError, config_from_dict, load_config, load_sweep, load_yaml
from .driver import EXIT_CONFIG, EXIT_NO_CROSSING, EXIT_OK, EXIT_SOLVER

log = logging.getLogger("gelwrinkle")


def _parser():
    p = argparse.ArgumentParser(prog="gelwrinkle", description=__doc__.split("\n\n")[0].strip())
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="run one scenario and locate the wrinkling onset")
    r.add_argument("config", type=Path)
    r.add_argument("-o", "--outdir", type=Path, help="output directory (default: output.dir)")

    s = sub.add_parser("sweep", help="run a one-parameter sweep")
    s.add_argument("config", type=Path)
    s.add_argument("sweep", type=Path)
    s.add_argument("-o", "--outdir", type=Path)
    s.add_argument("--workers", type=int, help="parallel sweep points (default: $GELWRINKLE_WORKERS or 1)")

    q = sub.add_parser("probe", help="stability probe of a saved checkpoint")
    q.add_argument("checkpoint", type=Path)
    q.add_argument("--config", type=Path,
                   help="scenario configuration (default: config.resolved.yaml next to the checkpoint)")

    v = sub.add_parser("validate", help="validate a configuration and print it fully resolved")
    v.add_argument("config", type=Path)
    v.add_argument("--sweep", type=Path, help="also validate a sweep specification")
    return p


def _load_resolved(path):
    """Load a configuration, tolerating the provenance key of resolved copies."""
    data = load_yaml(Path(path).read_text(encoding="utf-8"))
    data.pop("code_version", None)
    return config_from_dict(data)


def _cmd_run(args):
    from .driver import run_scenario

    cfg = load_config(args.config)
    res = run_scenario(cfg, args.outdir)
    rep = res.report
    if res.exit_code == EXIT_OK and rep.found:
        print(f"g_c = {rep.g_c:.4f} um  N_c = {rep.N_c:g}  t_c = {rep.t_c:.6g} s  "
              f"(bracket {rep.bracket_width:.3g} um)  -> {res.outdir}")
    elif res.message:
        print(res.message, file=sys.stderr)
    return res.exit_code


def _cmd_sweep(args):
    from .driver import run_sweep

    cfg = load_config(args.config)
    sweep = load_sweep(args.sweep)
    code, rows = run_sweep(cfg, sweep, args.outdir, workers=args.workers)
    for r in rows:
        print(f"{r['value']:>12g}  g_c={r['g_c']:.4f}  N_c={r['N_c']:g}  {r['status']}")
    return code


def _cmd_probe(args):
    from .driver import probe_checkpoint

    cfg_path = args.config or args.checkpoint.parent / "config.resolved.yaml"
    cfg = _load_resolved(cfg_path)
    run, probe = probe_checkpoint(cfg, args.checkpoint)
    out = {
        "t": float(run.state.t),
        "n_negative": int(probe.n_negative),
        "lambda_min": float(probe.lambda_min),
        "stable": bool(probe.stable),
        "degeneracy_gap": float(probe.gap),
    }
    print(yaml.safe_dump(out, sort_keys=False), end="")
    return EXIT_OK


def _cmd_validate(args):
    cfg = load_config(args.config)
    if args.sweep is not None:
        sw = load_sweep(args.sweep)
        for v in sw.values:
            cfg.with_value(sw.parameter, v)
    print(yaml.safe_dump(cfg.resolved(), sort_keys=False), end="")
    return EXIT_OK


def main(argv=None):
    args = _parser().parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _cmd_run, "sweep": _cmd_sweep, "probe": _cmd_probe, "validate": _cmd_validate}
    from .solver import SolverFailure

    try:
        return handler[args.verb](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        # unreadable files, bad checkpoints, invalid worker counts
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())


__all__ = ["main", "EXIT_OK", "EXIT_CONFIG", "EXIT_SOLVER", "EXIT_NO_CROSSING"]
