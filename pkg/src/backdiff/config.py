"""Experiment configuration: TOML schema, validation, and object construction.

One TOML file describes one experiment (dataset, trigger, attack, training,
sampling, evaluation); a [sweep] table of lists expands into child runs.
Validation reports the offending key path; TOML syntax errors keep the
parser's line/column diagnostics.
"""

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import dataset as ds
from . import trigger as tg
from .schedule import linear_beta_schedule
from .trainer import AttackSpec


class ConfigError(Exception):
    pass


DEFAULTS = {
    "experiment": {"name": "run", "seed": 1234},
    "schedule": {"T": 1000, "beta1": 1e-4, "betaT": 0.02},
    "dataset": {
        "kind": "mixture",
        "components": 8,
        "radius": 0.8,
        "std": 0.1,
        "size": 4096,
        "seed": 99,
        "path": "",
    },
    "trigger": {
        "kind": "blend",
        "gamma": 0.6,
        "delta": [1.0, 1.0],
        "delta_csv": "",
        "patch_coords": [],
        "gamma_on": 0.1,
    },
    "attack": {
        "kind": "in_d2d",  # none | in_d2d | out_d2d | d2i
        "target_class": 7,
        "x_target": [],
        "target_batch_fraction": -1.0,  # <0: default by attack kind
        "target_components": 1,
        "target_center": [1.2, 0.0],
        "target_std": 0.1,
        "target_size": 1024,
    },
    "train": {"steps": 20000, "batch_size": 128, "lr": 2e-4, "hidden": [128, 128, 128], "checkpoint_every": 0},
    "sample": {"family": "ddpm", "eta": 0.0, "S": 100, "stride": "quadratic", "n": 2048, "capture_every": 0},
    "eval": {"knn_k": 3, "negative_control": True, "plots": False},
}

_SWEEP_KEYS = {
    "gamma": ("trigger", "gamma"),
    "gamma_on": ("trigger", "gamma_on"),
    "patch_coords": ("trigger", "patch_coords"),
    "eta": ("sample", "eta"),
    "S": ("sample", "S"),
    "steps": ("train", "steps"),
}


@dataclass
class ExperimentConfig:
    """Resolved configuration tree (plain dicts, defaults applied)."""

    raw: dict
    sweep: dict = field(default_factory=dict)

    def __getitem__(self, section):
        return self.raw[section]

    def child(self, overrides: dict, name_suffix: str) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        for key, value in overrides.items():
            section, leaf = _SWEEP_KEYS[key]
            raw[section][leaf] = value
        raw["experiment"]["name"] = f"{self.raw['experiment']['name']}-{name_suffix}"
        return ExperimentConfig(raw=raw, sweep={})

    def sweep_children(self):
        """Expand [sweep] lists into the cartesian product of child configs."""
        if not self.sweep:
            return [self]
        keys = sorted(self.sweep)
        children = [({}, [])]
        for key in keys:
            children = [
                (dict(ov, **{key: value}), parts + [f"{key}={str(value).replace(' ', '')}"])
                for ov, parts in children
                for value in self.sweep[key]
            ]
        return [self.child(ov, "-".join(parts)) for ov, parts in children]


def _type_name(value):
    return type(value).__name__


def _merge(section: str, table: dict) -> dict:
    defaults = DEFAULTS[section]
    out = copy.deepcopy(defaults)
    for key, value in table.items():
        if key not in defaults:
            raise ConfigError(f"unknown key [{section}].{key}")
        want = defaults[key]
        if isinstance(want, bool) != isinstance(value, bool) or (
            not isinstance(value, type(want)) and not (isinstance(want, float) and isinstance(value, int))
        ):
            raise ConfigError(f"[{section}].{key}: expected {_type_name(want)}, got {_type_name(value)}")
        out[key] = float(value) if isinstance(want, float) else value
    return out


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{source}: {e}") from e
    raw = {}
    for section in DEFAULTS:
        table = data.pop(section, {})
        if not isinstance(table, dict):
            raise ConfigError(f"[{section}] must be a table")
        raw[section] = _merge(section, table)
    sweep = data.pop("sweep", {})
    if data:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(data))}")
    for key, values in sweep.items():
        if key not in _SWEEP_KEYS:
            raise ConfigError(f"[sweep].{key}: not sweepable (choose from {', '.join(sorted(_SWEEP_KEYS))})")
        if not isinstance(values, list):
            raise ConfigError(f"[sweep].{key} must be a list")
    cfg = ExperimentConfig(raw=raw, sweep=dict(sweep))
    validate_config(cfg)
    for child in cfg.sweep_children():
        if child is not cfg:
            validate_config(child)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), source=str(path))


def validate_config(cfg: ExperimentConfig):
    sc = cfg["schedule"]
    if sc["T"] < 1:
        raise ConfigError("[schedule].T must be >= 1")
    if not 0.0 < sc["beta1"] <= sc["betaT"] < 1.0:
        raise ConfigError("[schedule]: need 0 < beta1 <= betaT < 1")
    dc = cfg["dataset"]
    if dc["kind"] not in ("mixture", "csv"):
        raise ConfigError(f"[dataset].kind: unknown kind {dc['kind']!r}")
    if dc["kind"] == "mixture" and (dc["components"] < 1 or dc["std"] <= 0.0 or dc["size"] < 1):
        raise ConfigError("[dataset]: mixture needs components >= 1, std > 0, size >= 1")
    if dc["kind"] == "csv" and not dc["path"]:
        raise ConfigError("[dataset].path: csv dataset needs a path")
    tc = cfg["trigger"]
    if tc["kind"] not in ("blend", "patch"):
        raise ConfigError(f"[trigger].kind: unknown kind {tc['kind']!r}")
    if tc["kind"] == "blend" and not 0.0 < tc["gamma"] <= 1.0:
        raise ConfigError(f"[trigger].gamma: must lie in (0, 1], got {tc['gamma']}")
    if tc["kind"] == "patch":
        if not tc["patch_coords"]:
            raise ConfigError("[trigger].patch_coords: patch trigger needs coordinates")
        if not 0.0 < tc["gamma_on"] < 1.0:
            raise ConfigError(
                f"[trigger].gamma_on: must lie in (0, 1), got {tc['gamma_on']}; zero leaves the "
                "patch coordinates without random space and collapses attack quality"
            )
    ac = cfg["attack"]
    if ac["kind"] not in ("none", "in_d2d", "out_d2d", "d2i"):
        raise ConfigError(f"[attack].kind: unknown kind {ac['kind']!r}")
    if ac["kind"] == "d2i" and not ac["x_target"]:
        raise ConfigError("[attack].x_target: single-instance attack needs a target point")
    if ac["kind"] == "in_d2d" and dc["kind"] == "mixture" and not 0 <= ac["target_class"] < dc["components"]:
        raise ConfigError(f"[attack].target_class: {ac['target_class']} outside 0..{dc['components'] - 1}")
    tn = cfg["train"]
    if tn["steps"] < 0 or tn["batch_size"] < 1 or tn["lr"] <= 0:
        raise ConfigError("[train]: need steps >= 0, batch_size >= 1, lr > 0")
    sm = cfg["sample"]
    if sm["family"] not in ("ddpm", "ddim"):
        raise ConfigError(f"[sample].family: unknown family {sm['family']!r}")
    if sm["family"] == "ddim" and not 1 <= sm["S"] <= sc["T"]:
        raise ConfigError(f"[sample].S: need 1 <= S <= T, got {sm['S']}")
    if not 0.0 <= sm["eta"] <= 1.0:
        raise ConfigError(f"[sample].eta: must lie in [0, 1], got {sm['eta']}")
    if sm["stride"] not in ("linear", "quadratic"):
        raise ConfigError(f"[sample].stride: unknown stride {sm['stride']!r}")
    if sm["n"] < 1:
        raise ConfigError("[sample].n must be >= 1")
    ec = cfg["eval"]
    if ec["knn_k"] < 1:
        raise ConfigError("[eval].knn_k must be >= 1")


# -- construction of library objects from a validated config --


def build_schedule(cfg: ExperimentConfig):
    sc = cfg["schedule"]
    return linear_beta_schedule(sc["T"], sc["beta1"], sc["betaT"])


def build_mixture(cfg: ExperimentConfig) -> ds.MixtureSpec:
    dc = cfg["dataset"]
    if dc["kind"] != "mixture":
        raise ConfigError("[dataset]: not a mixture dataset")
    return ds.circle_mixture(dc["components"], radius=dc["radius"], std=dc["std"])


def build_dataset(cfg: ExperimentConfig) -> ds.ToyDataset:
    dc = cfg["dataset"]
    if dc["kind"] == "csv":
        return ds.load_dataset_csv(dc["path"])
    rng = np.random.default_rng(dc["seed"])
    return ds.synth_dataset(build_mixture(cfg), dc["size"], rng)


def build_trigger(cfg: ExperimentConfig, dim: int) -> tg.Trigger:
    tc = cfg["trigger"]
    if tc["kind"] == "patch":
        return tg.make_patch_trigger(dim, np.asarray(tc["patch_coords"], dtype=np.int64), tc["gamma_on"])
    if tc["delta_csv"]:
        delta = np.genfromtxt(tc["delta_csv"], delimiter=",", dtype=np.float64).reshape(-1)
    else:
        delta = np.asarray(tc["delta"], dtype=np.float64)
    if delta.shape != (dim,):
        raise ConfigError(f"[trigger].delta: expected {dim} entries, got {delta.shape[0]}")
    return tg.make_blend_trigger(delta, tc["gamma"])


def build_target_mixture(cfg: ExperimentConfig) -> ds.MixtureSpec:
    """Out-of-domain target distribution: components near a given center."""
    ac = cfg["attack"]
    center = np.asarray(ac["target_center"], dtype=np.float64)
    n = ac["target_components"]
    offsets = np.zeros((n, center.shape[0]))
    if n > 1:
        angles = 2.0 * np.pi * np.arange(n) / n
        offsets[:, 0] = 0.3 * np.cos(angles)
        offsets[:, 1] = 0.3 * np.sin(angles)
    return ds.MixtureSpec(
        means=center + offsets,
        stds=np.full(n, float(ac["target_std"])),
        weights=np.full(n, 1.0 / n),
    )


def build_attack(cfg: ExperimentConfig, dim: int) -> AttackSpec | None:
    ac = cfg["attack"]
    if ac["kind"] == "none":
        return None
    trig = build_trigger(cfg, dim)
    fraction = None if ac["target_batch_fraction"] < 0 else ac["target_batch_fraction"]
    if ac["kind"] == "in_d2d":
        return AttackSpec(kind="in_d2d", trigger=trig, target_class=ac["target_class"], target_batch_fraction=fraction)
    if ac["kind"] == "d2i":
        x_target = np.asarray(ac["x_target"], dtype=np.float64)
        if x_target.shape != (dim,):
            raise ConfigError(f"[attack].x_target: expected {dim} entries, got {x_target.shape[0]}")
        return AttackSpec(kind="d2i", trigger=trig, x_target=x_target, target_batch_fraction=fraction)
    target_rng = np.random.default_rng(cfg["dataset"]["seed"] + 1)
    target = ds.synth_dataset(build_target_mixture(cfg), ac["target_size"], target_rng)
    return AttackSpec(kind="out_d2d", trigger=trig, target_data=target, target_batch_fraction=fraction)


def dump_toml(raw: dict) -> str:
    """Emit the resolved config as TOML (scalars, strings, flat lists only)."""
    lines = []
    for section, table in raw.items():
        lines.append(f"[{section}]")
        for key, value in table.items():
            lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    return "\n".join(lines)


def _toml_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return repr(float(value))
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize config value of type {_type_name(value)}")
