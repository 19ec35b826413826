"""Command-line entry point: ``robustpref <command> [flags]``.

Each experiment command writes ``<command>_<seed>.csv`` plus a flat
``key=value`` manifest next to it. ``replay`` re-runs a manifest.
"""

from __future__ import annotations

import argparse
import shlex
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import RadiusSchedule
from .experiments import (
    DEFAULT_LR,
    DEFAULT_NS,
    DEFAULT_ROBUST,
    alignment_sweep,
    coverage_curve,
    fmt,
    frontier,
    rate_curve,
)
from .inner import (
    chi2_dual_solve,
    kl_tilt_weights,
    mixture_chi2_argmax,
    wasserstein_penalty,
)
from .simulator import make_env


def _floats(text: str):
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("expected at least one number")
    return vals


def _ints(text: str):
    vals = _floats(text)
    if any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    return [int(v) for v in vals]


def _words(text: str):
    return [w.strip() for w in text.split(",") if w.strip()]


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _nonneg_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {v}")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {v}")
    return v


def _ns_list(text: str):
    ns = _ints(text)
    if any(n < 1 for n in ns) or any(b <= a for a, b in zip(ns, ns[1:])):
        raise argparse.ArgumentTypeError("sample sizes must be positive and strictly increasing")
    return ns


def _alpha_list(text: str):
    vals = _floats(text)
    if any(not 0 < a < 1 for a in vals):
        raise argparse.ArgumentTypeError("confidence levels must lie in (0, 1)")
    return vals


def _env_flags(p):
    p.add_argument("--seed", type=_nonneg_int, default=0, help="environment seed (default: %(default)s)")
    p.add_argument("--K", type=_positive_int, default=15, help="latent groups (default: %(default)s)")
    p.add_argument("--d", type=_positive_int, default=12, help="feature dimension (default: %(default)s)")
    p.add_argument("--rank", type=_positive_int, default=3, help="mean-factor rank (default: %(default)s)")


def _common_flags(p):
    p.add_argument("--out", default=".", help="output directory (default: %(default)s)")
    p.add_argument("--jobs", type=_positive_int, default=1,
                   help="worker processes; results do not depend on it (default: %(default)s)")


def _schedule_flags(p):
    p.add_argument("--alphas", type=_alpha_list, default=[0.5, 0.9, 0.95],
                   help="calibrated confidence levels (default: 0.5,0.9,0.95)")
    p.add_argument("--fast-c", type=_positive_float, default=0.7,
                   help="constant of the c n^-2 schedule (default: %(default)s)")
    p.add_argument("--ns", type=_ns_list, default=list(DEFAULT_NS),
                   help="sample sizes (default: 1000,2000,4000,8000,16000)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robustpref", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("coverage", help="coverage of the chi-square ball per schedule and n")
    _env_flags(p)
    _schedule_flags(p)
    p.add_argument("--reps", type=_positive_int, default=120, help="multinomial draws (default: %(default)s)")
    _common_flags(p)

    p = sub.add_parser("rate", help="parameter error vs n per schedule, with log-log slopes")
    _env_flags(p)
    _schedule_flags(p)
    p.add_argument("--seeds", type=_positive_int, default=8, help="models per point (default: %(default)s)")
    p.add_argument("--steps", type=_positive_int, default=500, help="GD steps (default: %(default)s)")
    p.add_argument("--lr", type=_positive_float, default=0.12, help="GD step size (default: %(default)s)")
    p.add_argument("--no-erm-control", action="store_true",
                   help="omit the rho = 0 control series")
    _common_flags(p)

    p = sub.add_parser("frontier", help="coverage vs excess worst-case risk along eps = c/n")
    _env_flags(p)
    p.add_argument("--n", type=_positive_int, default=16000, help="training size (default: %(default)s)")
    p.add_argument("--grid", type=_positive_int, default=25, help="c grid points (default: %(default)s)")
    p.add_argument("--reps", type=_positive_int, default=400, help="coverage draws (default: %(default)s)")
    p.add_argument("--seeds", type=_positive_int, default=8, help="models per c (default: %(default)s)")
    p.add_argument("--eval-n", type=_positive_int, default=25000, help="fresh evaluation samples (default: %(default)s)")
    p.add_argument("--anchors", type=_alpha_list, default=[0.9, 0.95],
                   help="calibrated anchor levels (default: 0.9,0.95)")
    p.add_argument("--steps", type=_positive_int, default=500, help="GD steps (default: %(default)s)")
    p.add_argument("--lr", type=_positive_float, default=0.12, help="GD step size (default: %(default)s)")
    _common_flags(p)

    p = sub.add_parser("align", help="synthetic preference-shift sweep over alpha")
    p.add_argument("--seed", type=_nonneg_int, default=0, help="environment seed (default: %(default)s)")
    p.add_argument("--mixing", choices=["convex", "geometric"], default="convex",
                   help="reward mixing (default: %(default)s)")
    p.add_argument("--alpha0", type=float, default=0.1, help="training mixing coefficient (default: %(default)s)")
    p.add_argument("--alphas", type=_floats, default=[round(0.1 * i, 10) for i in range(11)],
                   help="evaluation grid (default: 0,0.1,...,1)")
    p.add_argument("--losses", type=_words, default=["dpo", "rebel"], help="base losses (default: dpo,rebel)")
    p.add_argument("--variants", type=_words, default=["none", "wasserstein", "kl", "chi2"],
                   help="robust variants (default: none,wasserstein,kl,chi2)")
    p.add_argument("--epochs", type=_positive_int, default=40, help="fresh batches (default: %(default)s)")
    p.add_argument("--batch", type=_positive_int, default=64, help="batch size (default: %(default)s)")
    p.add_argument("--eta", type=_positive_float, default=0.01, help="REBEL eta (default: %(default)s)")
    p.add_argument("--beta", type=_positive_float, default=0.1, help="DPO beta (default: %(default)s)")
    p.add_argument("--bound", type=_positive_float, default=10.0, help="parameter ball radius (default: %(default)s)")
    p.add_argument("--rho", type=_positive_float, default=DEFAULT_ROBUST["chi2"], help="chi2 radius (default: %(default)s)")
    p.add_argument("--tau", type=_positive_float, default=DEFAULT_ROBUST["kl"], help="KL temperature (default: %(default)s)")
    p.add_argument("--rho0", type=float, default=DEFAULT_ROBUST["wasserstein"],
                   help="Wasserstein penalty weight (default: %(default)s)")
    p.add_argument("--lr-rebel", type=_positive_float, default=DEFAULT_LR["rebel"], help="REBEL step size (default: %(default)s)")
    p.add_argument("--lr-dpo", type=_positive_float, default=DEFAULT_LR["dpo"], help="DPO step size (default: %(default)s)")
    p.add_argument("--eval-prompts", type=_positive_int, default=64, help="held-out prompts (default: %(default)s)")
    _common_flags(p)

    p = sub.add_parser("solve", help="run one inner solver and print its solution")
    p.add_argument("--kind", choices=["chi2", "kl", "wasserstein", "mixture_chi2"], required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--losses", type=_floats, help="comma-separated losses (squared gradient norms for wasserstein)")
    src.add_argument("--losses-file", help="file of whitespace/comma-separated losses")
    p.add_argument("--rho", type=float, default=None, help="chi2 / mixture_chi2 radius")
    p.add_argument("--tau", type=float, default=None, help="KL temperature")
    p.add_argument("--rho0", type=float, default=None, help="Wasserstein penalty weight")
    p.add_argument("--p-ref", type=_floats, default=None, help="reference mixture for mixture_chi2 (default: uniform)")

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    return parser


# ---------------------------------------------------------------------------


def _schedules(args, K):
    scheds = [RadiusSchedule.calibrated(a, K) for a in args.alphas]
    scheds.append(RadiusSchedule.fast(args.fast_c, K))
    return scheds


def _write(table, args, argv, parser) -> int:
    out = Path(args.out)
    stem = f"{args.command}_{args.seed}"
    csv_path = out / f"{stem}.csv"
    manifest_path = out / f"{stem}.manifest"
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "command"}
    lines = [f"command={args.command}", f"argv={shlex.join(argv)}", f"version={__version__}",
             f"env_seed={args.seed}", f"csv={csv_path}"]
    lines += [f"arg.{k}={_render(v)}" for k, v in resolved.items()]
    lines += [f"meta.{k}={_render(v)}" for k, v in sorted(table.metadata.items())]
    try:
        out.mkdir(parents=True, exist_ok=True)
        table.write_csv(csv_path)
        manifest_path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        print(f"robustpref: cannot write output: {exc}", file=sys.stderr)
        return 1
    print(csv_path)
    return 0


def _render(v) -> str:
    if isinstance(v, (list, tuple)):
        return ",".join(_render(x) for x in v)
    if isinstance(v, dict):
        return ";".join(f"{k}:{_render(x)}" for k, x in sorted(v.items()))
    if isinstance(v, float):
        return fmt(v)
    return str(v)


def _env(args, parser):
    if args.rank > args.d:
        parser.error(f"argument --rank: must not exceed --d ({args.d})")
    if args.K < 2:
        parser.error("argument --K: need at least 2 groups")
    return make_env(args.seed, K=args.K, d=args.d, rank=args.rank)


def _read_losses(args, parser):
    if args.losses is not None:
        return np.asarray(args.losses, dtype=float)
    try:
        text = Path(args.losses_file).read_text()
    except OSError as exc:
        print(f"robustpref: cannot read {args.losses_file}: {exc}", file=sys.stderr)
        raise SystemExit(1)
    try:
        vals = [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        parser.error(f"argument --losses-file: malformed number in {args.losses_file}")
    if not vals:
        parser.error("argument --losses-file: no losses found")
    return np.asarray(vals, dtype=float)


def _need(value, flag, parser):
    if value is None:
        parser.error(f"argument {flag}: required for this --kind")
    return value


def _print_solution(kind, sol):
    print(f"kind={kind}")
    print(f"value={fmt(sol.value)}")
    for k, v in sol.dual.items():
        print(f"dual.{k}={_render(v) if not isinstance(v, float) else fmt(v)}")
    print("weights=" + ",".join(fmt(w) for w in sol.weights))


def cmd_solve(args, parser) -> int:
    x = _read_losses(args, parser)
    if not np.all(np.isfinite(x)):
        parser.error("argument --losses: values must be finite")
    if args.kind == "chi2":
        rho = _need(args.rho, "--rho", parser)
        if not rho > 0:
            parser.error("argument --rho: must be positive")
        _print_solution("chi2", chi2_dual_solve(x, rho))
    elif args.kind == "kl":
        tau = _need(args.tau, "--tau", parser)
        if not tau > 0:
            parser.error("argument --tau: must be positive")
        _print_solution("kl", kl_tilt_weights(x, tau))
    elif args.kind == "wasserstein":
        rho0 = _need(args.rho0, "--rho0", parser)
        if rho0 < 0 or np.any(x < 0):
            parser.error("argument --rho0/--losses: must be nonnegative")
        print("kind=wasserstein")
        print(f"value={fmt(wasserstein_penalty(x, rho0))}")
    else:
        rho = _need(args.rho, "--rho", parser)
        if rho < 0:
            parser.error("argument --rho: must be nonnegative")
        p = np.full(x.size, 1.0 / x.size) if args.p_ref is None else np.asarray(args.p_ref)
        if p.size != x.size or np.any(p <= 0):
            parser.error("argument --p-ref: needs one positive entry per loss")
        if x.size < 2:
            parser.error("argument --losses: mixture_chi2 needs at least two groups")
        _print_solution("mixture_chi2", mixture_chi2_argmax(x, p / p.sum(), rho))
    return 0


def run(argv) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "replay":
        return replay(args.manifest)
    if args.command == "solve":
        return cmd_solve(args, parser)
    if args.command == "coverage":
        env = _env(args, parser)
        table = coverage_curve(env, _schedules(args, env.K), args.ns, args.reps, jobs=args.jobs)
    elif args.command == "rate":
        env = _env(args, parser)
        scheds = _schedules(args, env.K)
        if not args.no_erm_control:
            scheds.append(RadiusSchedule.fixed(0.0, env.K))
        table = rate_curve(env, scheds, args.ns, args.seeds, args.steps, args.lr, jobs=args.jobs)
    elif args.command == "frontier":
        env = _env(args, parser)
        table = frontier(env, args.n, args.grid, args.reps, args.seeds, args.eval_n,
                         tuple(args.anchors), args.steps, args.lr, jobs=args.jobs)
    elif args.command == "align":
        if not 0 <= args.alpha0 <= 1:
            parser.error("argument --alpha0: must lie in [0, 1]")
        if any(not 0 <= a <= 1 for a in args.alphas):
            parser.error("argument --alphas: values must lie in [0, 1]")
        bad = set(args.losses) - {"dpo", "rebel"}
        if bad:
            parser.error(f"argument --losses: unknown {sorted(bad)}")
        bad = set(args.variants) - {"none", "wasserstein", "kl", "chi2"}
        if bad:
            parser.error(f"argument --variants: unknown {sorted(bad)}")
        if args.rho0 < 0:
            parser.error("argument --rho0: must be nonnegative")
        table = alignment_sweep(
            args.seed, args.losses, args.variants, args.alpha0, args.alphas, args.mixing,
            params={"chi2": args.rho, "kl": args.tau, "wasserstein": args.rho0},
            lr={"rebel": args.lr_rebel, "dpo": args.lr_dpo}, epochs=args.epochs,
            batch=args.batch, bound=args.bound, eta=args.eta, beta=args.beta,
            eval_prompts=args.eval_prompts, jobs=args.jobs)
    else:  # pragma: no cover - argparse rejects unknown commands
        parser.error(f"unknown command {args.command}")
    return _write(table, args, list(argv), parser)


def replay(manifest) -> int:
    try:
        lines = Path(manifest).read_text().splitlines()
    except OSError as exc:
        print(f"robustpref: cannot read manifest: {exc}", file=sys.stderr)
        return 1
    argv = next((ln[len("argv="):] for ln in lines if ln.startswith("argv=")), None)
    if argv is None:
        print("robustpref: manifest has no argv line", file=sys.stderr)
        return 1
    return run(shlex.split(argv))


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        return run(argv)
    except SystemExit as exc:
        return int(exc.code or 0) if isinstance(exc.code, int) else 2


if __name__ == "__main__":
    sys.exit(main())
