"""``dqlab`` command line: train, oracle-check, plot, inspect-replay.

Exit codes: 0 success, 1 check failed / bad input data, 2 usage or
configuration error, 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .mdp_core import ConfigError, NumericalError, UsageError

log = logging.getLogger("dqlab")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3


def _setup_logging() -> None:
    level = os.environ.get("DQLAB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def parse_seeds(text: str) -> list[int]:
    """``"0,3,5"`` or ``"0-8"`` (inclusive) or a mix of both."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1) if not part.startswith("-") else part[1:].split("-", 1)
            seeds += list(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("empty seed list")
    return seeds


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load(args):
    path = Path(args.config)
    if not path.is_file():
        print(f"error: config file not found: {path}", file=sys.stderr)
        return None
    cfg = load_config(path)
    if getattr(args, "seeds", None):
        cfg = cfg.replace(seeds=parse_seeds(args.seeds))
        cfg.validate()
    return cfg


def cmd_train(args) -> int:
    from .harness import (
        csv_content_hash,
        make_env,
        make_eval_set,
        rows_to_csv,
        run_experiment_to_dir,
    )
    from .plotting import save_figures

    cfg = _load(args)
    if cfg is None:
        return EXIT_USAGE
    out = Path(args.out)
    manifest_path = out / "manifest.json"
    eval_hash = make_eval_set(make_env(cfg), cfg).content_hash()

    if args.check:
        if not manifest_path.is_file():
            print(f"error: --check needs an existing manifest at {manifest_path}", file=sys.stderr)
            return EXIT_USAGE
        import tempfile

        old = json.loads(manifest_path.read_text())
        with tempfile.TemporaryDirectory() as tmp:
            quiet = dataclasses.replace(cfg.output, snapshots="none", replay_snapshots=False)
            rows, _ = run_experiment_to_dir(cfg.replace(output=quiet), tmp, args.parallel)
        new_hash = csv_content_hash(rows_to_csv(rows))
        ok = new_hash == old.get("metrics_hash") and eval_hash == old.get("eval_set_hash")
        print(f"metrics hash {'matches' if ok else 'DIFFERS'}: {new_hash}")
        return EXIT_OK if ok else EXIT_FAIL

    out.mkdir(parents=True, exist_ok=True)
    rows, snaps = run_experiment_to_dir(cfg, out, args.parallel)
    csv_path = out / "metrics.csv"
    text = rows_to_csv(rows)
    csv_path.write_text(text)
    figures = [] if args.no_plots else save_figures(rows, out / "figures" / "curves.svg")
    files = [csv_path, *snaps, *figures]
    manifest = {
        "dqlab_version": __version__,
        "config_path": str(Path(args.config)),
        "output_dir": str(out),
        "config": cfg.to_dict(),
        "seeds": list(cfg.seeds),
        "eval_set_hash": eval_hash,
        "metrics_hash": csv_content_hash(text),
        "files": {str(p.relative_to(out)): _sha256(p) for p in files if p != csv_path},
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(rows)} metric rows to {csv_path}")
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    from .harness import equivalence_check, make_env, oracle_check, random_transition_stream
    from .mdp_core import RngStream

    cfg = _load(args)
    if cfg is None:
        return EXIT_USAGE
    if cfg.env.kind != "cliffwalk":
        print(f"error: oracle-check needs an enumerable world; env.kind is {cfg.env.kind!r} "
              "(use cliffwalk)", file=sys.stderr)
        return EXIT_USAGE
    if cfg.learner.kind != "tabular-local-window":
        print("error: oracle-check compares a tabular learner", file=sys.stderr)
        return EXIT_USAGE
    oc = cfg.oracle
    rep = oracle_check(cfg)
    print(f"episodes={rep.episodes} steps={rep.steps} compared_states={rep.n_compared_states}")
    print(f"max_abs_error={rep.max_error:.6g} (tolerance {oc.tolerance})")
    print(f"start_value={rep.start_value:.6f} optimal={rep.optimal_start_value:.6f} "
          f"(tolerance {oc.start_tolerance})")
    ok = rep.passed(oc.tolerance, oc.start_tolerance)
    if args.equivalence:
        env = make_env(cfg)
        stream = random_transition_stream(env, oc.equivalence_transitions,
                                          RngStream(cfg.seeds[0]).fork(5), env.encode)
        diff = equivalence_check(env, env.n_cells, stream, cfg.learner.alpha, cfg.gamma)
        eq_ok = diff <= oc.equivalence_tolerance
        print(f"decomposed joint-greedy vs monolithic: max diff {diff:.3g} "
              f"(tolerance {oc.equivalence_tolerance:g})")
        ok = ok and eq_ok
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_plot(args) -> int:
    from .harness import read_metrics_csv
    from .plotting import save_figures

    try:
        rows = read_metrics_csv(args.csv)
    except FileNotFoundError:
        print(f"error: no such file: {args.csv}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if not rows:
        print(f"error: {args.csv}: no data rows", file=sys.stderr)
        return EXIT_FAIL
    phases = sorted({r.phase for r in rows})
    phase = args.phase if args.phase is not None else phases[-1]
    try:
        paths = save_figures(rows, args.out, phase=phase)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_inspect_replay(args) -> int:
    from .replay import ReplayBuffer
    from .snapshot import SnapshotError

    try:
        buf = ReplayBuffer.load(args.snapshot)
    except (SnapshotError, OSError, KeyError, ValueError) as exc:
        print(f"error: cannot read replay snapshot: {exc}", file=sys.stderr)
        return EXIT_FAIL
    b = buf.contents()
    print(f"size: {len(buf)} / capacity {buf.capacity}")
    print(f"crash_fraction: {buf.crash_fraction():.6f}")
    print(f"terminal_fraction: {float(np.mean(b.terminal)) if len(buf) else 0.0:.6f}")
    for name, col in (("r_env", b.r_env), ("r_task", b.r_task)):
        values, counts = np.unique(col, return_counts=True)
        hist = ", ".join(f"{v:g}: {c}" for v, c in zip(values, counts))
        print(f"{name} histogram: {{{hist}}}")
    actions = np.bincount(b.actions.astype(np.int64), minlength=4) if len(buf) else np.zeros(4, int)
    print("action counts: " + ", ".join(f"{n}: {c}" for n, c in zip("UDLR", actions)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dqlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"dqlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run phase 1 + phase 2 for every method and seed")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--seeds", help="override seeds, e.g. 0-8 or 0,2,4")
    t.add_argument("--parallel", type=int, default=1, metavar="N")
    t.add_argument("--check", action="store_true",
                   help="re-run and compare against the manifest in --out; writes nothing")
    t.add_argument("--no-plots", action="store_true")
    t.set_defaults(func=cmd_train)

    o = sub.add_parser("oracle-check", help="compare tabular Q-learning with value iteration")
    o.add_argument("--config", required=True)
    o.add_argument("--seeds", help="first seed is used for the learner")
    o.add_argument("--equivalence", action="store_true",
                   help="also check joint-greedy decomposed vs monolithic updates")
    o.set_defaults(func=cmd_oracle_check)

    pl = sub.add_parser("plot", help="render learning curves (one SVG per metric)")
    pl.add_argument("csv")
    pl.add_argument("--out", required=True,
                    help="figure path stem: X.svg becomes X_<metric>.svg; a directory gets curves_<metric>.svg")
    pl.add_argument("--phase", type=int, default=None)
    pl.set_defaults(func=cmd_plot)

    r = sub.add_parser("inspect-replay", help="summarise a replay snapshot")
    r.add_argument("snapshot")
    r.set_defaults(func=cmd_inspect_replay)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
