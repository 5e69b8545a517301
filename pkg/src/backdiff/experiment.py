"""Experiment orchestration: train -> sample -> eval, with sweep expansion.

Each run owns a directory containing a resolved config snapshot and only
CSV artifacts (plus optional PNG scatter plots); re-running from the
snapshot reproduces every CSV byte for byte.  Sweep children are expanded
from the [sweep] table and may execute in parallel processes; each child
is internally deterministic, and the summary is assembled in config order
so the output does not depend on scheduling.
"""

import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import (
    ConfigError,
    ExperimentConfig,
    build_attack,
    build_dataset,
    build_mixture,
    build_schedule,
    build_target_mixture,
    dump_toml,
)
from .dataset import ToyDataset
from .denoiser import save_checkpoint
from .metrics import (
    assignment_rate,
    component_masses,
    fit_diagonal_gaussian,
    gaussian_frechet,
    knn_precision,
    mse_to_target,
)
from .process import BENIGN, trojan_mode
from .sampler import SamplerConfig, sample
from .schedule import ddim_subsequence, solve_trojan_coefficients
from .trainer import TrainConfig, train

OUT_ROOT_ENV = "BACKDIFF_OUT_ROOT"

# sampling master seeds are derived from the experiment seed by fixed offsets
SEED_OFFSET = {"benign": 1, "trojan": 2, "control": 3}


def out_root(explicit=None) -> Path:
    if explicit is not None:
        return Path(explicit)
    return Path(os.environ.get(OUT_ROOT_ENV, "runs"))


def write_csv(path, header, rows):
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_cell(v) for v in row) + "\n")


def _cell(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_samples_csv(path, samples):
    write_csv(path, [f"x{i}" for i in range(samples.shape[1])], samples)


def read_samples_csv(path):
    return np.genfromtxt(path, delimiter=",", skip_header=1, dtype=np.float64, ndmin=2)


def write_trajectory_csv(path, trajectory):
    d = trajectory[0][1].shape[1]
    rows = []
    for t, states in trajectory:
        for chain, x in enumerate(states):
            rows.append((chain, t, *x))
    write_csv(path, ["chain", "t", *[f"x{i}" for i in range(d)]], rows)


def sampler_config(cfg: ExperimentConfig, mode, init="auto") -> SamplerConfig:
    sm = cfg["sample"]
    ddim = None
    if sm["family"] == "ddim":
        ddim = ddim_subsequence(cfg["schedule"]["T"], sm["S"], sm["stride"], eta=sm["eta"])
    return SamplerConfig(family=sm["family"], mode=mode, ddim=ddim, capture_every=sm["capture_every"], init=init)


def evaluate_samples(cfg: ExperimentConfig, which: str, samples: np.ndarray, data: ToyDataset) -> dict:
    """Metric dict for one sample set; ``which`` is benign, trojan, or control."""
    out = {}
    is_mixture = cfg["dataset"]["kind"] == "mixture"
    if is_mixture:
        mix = build_mixture(cfg)
        ac = cfg["attack"]
        if which == "benign":
            masses = component_masses(samples, mix.means, mix.stds)
            out["coverage_components"] = float(np.sum(masses >= 0.02))
            out["min_component_mass"] = float(masses.min())
            mean, var = _mixture_moments(mix)
            fmean, fvar = fit_diagonal_gaussian(samples)
            out["frechet_to_data"] = gaussian_frechet(fmean, fvar, mean, var)
        elif ac["kind"] == "in_d2d":
            out["assignment_rate"] = assignment_rate(samples, mix.means, mix.stds, ac["target_class"])
        elif ac["kind"] == "out_d2d":
            target = build_target_mixture(cfg)
            means = np.concatenate([mix.means, target.means])
            stds = np.concatenate([mix.stds, target.stds])
            rates = [assignment_rate(samples, means, stds, mix.n_components + j) for j in range(target.n_components)]
            out["assignment_rate"] = float(np.sum(rates))
    if which == "benign":
        out["knn_precision"] = knn_precision(samples, data.points, k=cfg["eval"]["knn_k"])
    elif cfg["attack"]["kind"] == "d2i":
        out["mse_to_target"] = mse_to_target(samples, np.asarray(cfg["attack"]["x_target"]))
    elif cfg["attack"]["kind"] == "in_d2d" and which == "trojan":
        out["knn_precision_target_class"] = knn_precision(
            samples, data.class_subset(cfg["attack"]["target_class"]), k=cfg["eval"]["knn_k"]
        )
    return out


def _mixture_moments(mix):
    mean = mix.weights @ mix.means
    second = mix.weights @ (mix.means**2 + mix.stds[:, None] ** 2)
    return mean, second - mean**2


def run_experiment(cfg: ExperimentConfig, out_dir=None, run_dir=None) -> Path:
    """Full pipeline for one config; returns the artifact directory."""
    if cfg.sweep:
        raise ConfigError("config has a [sweep] table; use run_sweep")
    rd = Path(run_dir) if run_dir is not None else out_root(out_dir) / cfg["experiment"]["name"]
    rd.mkdir(parents=True, exist_ok=True)
    (rd / "config.toml").write_text(dump_toml(cfg.raw))

    s = build_schedule(cfg)
    coeffs = solve_trojan_coefficients(s)
    data = build_dataset(cfg)
    attack = build_attack(cfg, data.dim)
    seed = cfg["experiment"]["seed"]

    tc = cfg["train"]
    model, loss_rows = train(
        TrainConfig(
            schedule=s,
            coeffs=coeffs,
            dataset=data,
            attack=attack,
            steps=tc["steps"],
            batch_size=tc["batch_size"],
            lr=tc["lr"],
            hidden=tuple(tc["hidden"]),
            seed=seed,
            checkpoint_every=tc["checkpoint_every"],
            checkpoint_path=str(rd / "model.ckpt"),
        )
    )
    write_csv(rd / "loss.csv", ["step", "benign_loss", "trojan_loss", "total"], loss_rows)
    save_checkpoint(rd / "model.ckpt", model, extra=_checkpoint_extra(cfg))

    chains = {"benign": (BENIGN, "auto")}
    if attack is not None:
        chains["trojan"] = (trojan_mode(attack.trigger), "auto")
        if cfg["eval"]["negative_control"]:
            chains["control"] = (trojan_mode(attack.trigger), "clean")

    metric_rows = []
    n = cfg["sample"]["n"]
    for which, (mode, init) in chains.items():
        scfg = sampler_config(cfg, mode, init=init)
        samples, trajectory = sample(model, s, coeffs, scfg, n, seed + SEED_OFFSET[which])
        write_samples_csv(rd / f"samples_{which}.csv", samples)
        if trajectory:
            write_trajectory_csv(rd / f"traj_{which}.csv", trajectory)
            if cfg["eval"]["plots"]:
                plot_trajectory(rd / f"traj_{which}.png", trajectory)
        for metric, value in evaluate_samples(cfg, which, samples, data).items():
            metric_rows.append((which, metric, value))
    write_csv(rd / "metrics.csv", ["which", "metric", "value"], metric_rows)
    return rd


def _checkpoint_extra(cfg: ExperimentConfig) -> dict:
    extra = {"schedule": dict(cfg["schedule"])}
    if cfg["attack"]["kind"] != "none":
        extra["trigger"] = dict(cfg["trigger"])
    return extra


def _run_child(raw: dict, run_dir: str):
    run_experiment(ExperimentConfig(raw=raw), run_dir=run_dir)
    return run_dir


def run_sweep(cfg: ExperimentConfig, out_dir=None, jobs: int = 1) -> Path:
    """Expand sweep children, run them (possibly in parallel), summarize."""
    root = out_root(out_dir) / cfg["experiment"]["name"]
    root.mkdir(parents=True, exist_ok=True)
    children = cfg.sweep_children()
    dirs = [root] if len(children) == 1 else [root / child["experiment"]["name"] for child in children]
    if len(children) == 1:
        run_experiment(children[0], run_dir=dirs[0])
    elif jobs <= 1:
        for child, rd in zip(children, dirs):
            run_experiment(child, run_dir=rd)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_run_child, [c.raw for c in children], [str(d) for d in dirs]))
    per_child = []
    for rd in dirs:
        metrics = {}
        for line in (rd / "metrics.csv").read_text().splitlines()[1:]:
            which, metric, value = line.split(",")
            metrics[f"{which}.{metric}"] = value
        per_child.append(metrics)
    columns = _summary_columns(per_child[0]) if per_child else []
    rows = [
        (child["experiment"]["name"], *(metrics.get(c, "nan") for c in columns))
        for child, metrics in zip(children, per_child)
    ]
    write_csv(root / "sweep_summary.csv", ["name", *columns], rows)
    return root


def _summary_columns(metrics):
    preferred = [
        "trojan.assignment_rate",
        "trojan.mse_to_target",
        "control.assignment_rate",
        "benign.coverage_components",
        "benign.knn_precision",
        "benign.frechet_to_data",
    ]
    return [c for c in preferred if c in metrics]


def plot_trajectory(path, trajectory, max_chains: int = 64):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 5))
    n_frames = len(trajectory)
    for i, (t, states) in enumerate(trajectory):
        color = plt.cm.viridis(i / max(n_frames - 1, 1))
        pts = states[:max_chains]
        ax.scatter(pts[:, 0], pts[:, 1], s=4, color=color, label=f"t={t}" if i in (0, n_frames - 1) else None)
    ax.legend(loc="best", fontsize=8)
    ax.set_aspect("equal")
    fig.savefig(path, dpi=120)
    plt.close(fig)
