"""Command-line interface.

Subcommands: schedule, verify, train, sample, eval, sweep, traj-dump.
The output root for experiment runs defaults to ./runs and can be moved
with the BACKDIFF_OUT_ROOT environment variable.  ``verify`` exits 0 only
if every invariant check passes; config errors exit with code 2.
"""

import argparse
import sys

import numpy as np

from . import checks
from .config import ConfigError, load_config
from .denoiser import load_checkpoint
from .experiment import (
    evaluate_samples,
    read_samples_csv,
    run_experiment,
    run_sweep,
    write_csv,
    write_samples_csv,
    write_trajectory_csv,
)
from .process import BENIGN, trojan_mode
from .sampler import SamplerConfig, sample
from .schedule import ddim_subsequence, drift_sum_residuals, linear_beta_schedule, solve_trojan_coefficients
from .trigger import Trigger


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="backdiff", description=__doc__)
    sub = parser.add_subparsers(required=True)

    p = sub.add_parser("schedule", help="schedule utilities")
    ssub = p.add_subparsers(required=True)
    d = ssub.add_parser("dump", help="write t,beta,alpha,alpha_bar,k,residual to CSV")
    d.add_argument("--T", type=int, default=1000)
    d.add_argument("--beta1", type=float, default=1e-4)
    d.add_argument("--betaT", type=float, default=0.02)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_schedule_dump)

    p = sub.add_parser("verify", help="run the consistency-check battery")
    p.add_argument("what", nargs="?", default="all", choices=["all", "process", "schedule"])
    p.add_argument("--T", type=int, default=1000)
    p.add_argument("--beta1", type=float, default=1e-4)
    p.add_argument("--betaT", type=float, default=0.02)
    p.add_argument("--out", default=None, help="optional CSV for the results")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("train", help="train a model from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="output root (default: $BACKDIFF_OUT_ROOT or ./runs)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="sample chains from a checkpoint")
    _add_sample_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--traj", default=None, help="optional trajectory CSV")
    p.add_argument("--capture-every", type=int, default=0)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="compute metrics for a samples CSV")
    p.add_argument("--samples", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--which", default="trojan", choices=["benign", "trojan", "control"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run an experiment (expanding any [sweep] lists)")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("traj-dump", help="dump reverse-chain trajectories to CSV")
    _add_sample_args(p)
    p.add_argument("--capture-every", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_traj_dump)
    return parser


def _add_sample_args(p):
    p.add_argument("--model", required=True, help="checkpoint written by train/sweep")
    p.add_argument("--mode", default="benign", choices=["benign", "trojan"])
    p.add_argument("--family", default="ddpm", choices=["ddpm", "ddim"])
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--S", type=int, default=100)
    p.add_argument("--stride", default="quadratic", choices=["linear", "quadratic"])
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--seed", type=int, default=1234)
    p.add_argument("--clean-init", action="store_true", help="start the trojan chain from clean noise")


def cmd_schedule_dump(args) -> int:
    s = linear_beta_schedule(args.T, args.beta1, args.betaT)
    coeffs = solve_trojan_coefficients(s)
    residuals = drift_sum_residuals(s, coeffs)
    rows = [
        (t, s.beta[t - 1], s.alpha[t - 1], s.alpha_bar[t], coeffs.k[t - 1], residuals[t - 1])
        for t in range(1, s.T + 1)
    ]
    write_csv(args.out, ["t", "beta", "alpha", "alpha_bar", "k", "residual"], rows)
    print(f"wrote {args.out} ({s.T} rows, max residual {residuals.max():.3g})")
    return 0


def cmd_verify(args) -> int:
    results = checks.run_battery(args.T, args.beta1, args.betaT)
    if args.what == "schedule":
        results = [r for r in results if r.name.startswith(("drift", "stride", "sigma"))]
    elif args.what == "process":
        results = [r for r in results if not r.name.startswith("drift")]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"[{status}] {r.name}: residual {r.residual:.3g} (tolerance {r.tolerance:.3g})")
    if args.out:
        write_csv(args.out, ["check", "passed", "residual", "tolerance"], [(r.name, int(r.passed), r.residual, r.tolerance) for r in results])
    return 0 if all(r.passed for r in results) else 1


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if cfg.sweep:
        print("config has a [sweep] table; use the sweep subcommand", file=sys.stderr)
        return 2
    rd = run_experiment(cfg, out_dir=args.out)
    print(f"run directory: {rd}")
    return 0


def _load_sampling_context(args):
    model, extra = load_checkpoint(args.model)
    if "schedule" not in extra:
        raise ConfigError(f"checkpoint {args.model} carries no schedule header; re-save via train/sweep")
    sc = extra["schedule"]
    s = linear_beta_schedule(sc["T"], sc["beta1"], sc["betaT"])
    coeffs = solve_trojan_coefficients(s)
    mode = BENIGN
    if args.mode == "trojan":
        if "trigger" not in extra:
            raise ConfigError("checkpoint carries no trigger; it was trained without an attack")
        tc = extra["trigger"]
        if tc["kind"] == "patch":
            gamma = np.ones(model.dim)
            gamma[np.asarray(tc["patch_coords"], dtype=np.int64)] = tc["gamma_on"]
            delta = np.zeros(model.dim)
            delta[np.asarray(tc["patch_coords"], dtype=np.int64)] = 1.0
            mode = trojan_mode(Trigger(delta=delta, gamma=gamma, kind="patch"))
        else:
            delta = np.asarray(tc["delta"], dtype=np.float64)
            mode = trojan_mode(Trigger(delta=delta, gamma=np.full(delta.shape, tc["gamma"]), kind="blend"))
    ddim = ddim_subsequence(s.T, args.S, args.stride, eta=args.eta) if args.family == "ddim" else None
    init = "clean" if args.clean_init else "auto"
    capture = getattr(args, "capture_every", 0)
    cfg = SamplerConfig(family=args.family, mode=mode, ddim=ddim, capture_every=capture, init=init)
    return model, s, coeffs, cfg


def cmd_sample(args) -> int:
    model, s, coeffs, scfg = _load_sampling_context(args)
    samples, trajectory = sample(model, s, coeffs, scfg, args.n, args.seed)
    write_samples_csv(args.out, samples)
    print(f"wrote {args.out} ({args.n} samples)")
    if args.traj:
        if not trajectory:
            print("no trajectory captured; pass --capture-every N", file=sys.stderr)
            return 2
        write_trajectory_csv(args.traj, trajectory)
        print(f"wrote {args.traj} ({len(trajectory)} frames)")
    return 0


def cmd_traj_dump(args) -> int:
    model, s, coeffs, scfg = _load_sampling_context(args)
    _, trajectory = sample(model, s, coeffs, scfg, args.n, args.seed)
    write_trajectory_csv(args.out, trajectory)
    print(f"wrote {args.out} ({len(trajectory)} frames x {args.n} chains)")
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    from .config import build_dataset

    samples = read_samples_csv(args.samples)
    metrics = evaluate_samples(cfg, args.which, samples, build_dataset(cfg))
    write_csv(args.out, ["which", "metric", "value"], [(args.which, k, v) for k, v in metrics.items()])
    for k, v in metrics.items():
        print(f"{args.which}.{k} = {v:.6g}")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    root = run_sweep(cfg, out_dir=args.out, jobs=args.jobs)
    print(f"sweep directory: {root}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
