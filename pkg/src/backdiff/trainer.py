"""Joint benign + trojan training of a single noise predictor.

Each step draws a data batch, diffuses it along the benign chain, and --
depending on the attack -- extends the batch with rows diffused along the
biased chain:

  * in-domain class target: the batch rows carrying the target label are
    reused with the same per-row times and noise draws (a batch without
    any such rows makes a benign-only step);
  * out-of-domain / single-instance targets: fresh rows come from a target
    loader, with fresh times and noise, sized as a fraction of the data
    batch (defaults: half for a distribution target, a tenth for a single
    instance).

The regression target is the raw standard-normal draw for every row; the
loss is the element mean over the concatenated batch and one optimizer
step is taken per training step.
"""

from dataclasses import dataclass

import numpy as np

from .dataset import ToyDataset
from .denoiser import Adam, MlpDenoiser, save_checkpoint
from .process import BENIGN, diffuse, trojan_mode
from .schedule import NoiseSchedule, TrojanCoefficients
from .trigger import Trigger

ATTACK_KINDS = ("in_d2d", "out_d2d", "d2i")
DEFAULT_TARGET_FRACTION = {"out_d2d": 0.5, "d2i": 0.1}


@dataclass(frozen=True)
class AttackSpec:
    """Attack goal plus the trigger that activates it."""

    kind: str
    trigger: Trigger
    target_class: int | None = None
    target_data: ToyDataset | None = None
    x_target: np.ndarray | None = None
    target_batch_fraction: float | None = None

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.kind == "in_d2d" and self.target_class is None:
            raise ValueError("in-domain attack needs a target class")
        if self.kind == "out_d2d" and (self.target_data is None or len(self.target_data) == 0):
            raise ValueError("out-of-domain attack needs a nonempty target dataset")
        if self.kind == "d2i" and self.x_target is None:
            raise ValueError("single-instance attack needs a target point")

    @property
    def fraction(self) -> float:
        if self.target_batch_fraction is not None:
            return self.target_batch_fraction
        return DEFAULT_TARGET_FRACTION.get(self.kind, 0.0)

    def target_batch(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        """Draw the trojan rows for one step (out-of-domain / single-instance)."""
        n = max(1, round(self.fraction * batch_size))
        if self.kind == "out_d2d":
            return self.target_data.batch(rng, n)[0]
        return np.tile(self.x_target, (n, 1))


def training_step(
    model,
    s: NoiseSchedule,
    coeffs: TrojanCoefficients,
    x0: np.ndarray,
    labels: np.ndarray,
    attack: AttackSpec | None,
    rng: np.random.Generator,
    opt: Adam | None = None,
):
    """One joint step; returns (total, benign, trojan) mean-squared losses.

    With no optimizer the model is only evaluated (any predictor works);
    with one, the model must expose forward/backward and is updated in
    place.  The trojan loss is nan on benign-only steps.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim != 2 or x0.shape[0] == 0:
        raise ValueError("batch must be a nonempty (B, d) array")
    n_benign, d = x0.shape
    t = rng.integers(1, s.T + 1, size=n_benign)
    eps = rng.standard_normal((n_benign, d))
    x_t = diffuse(s, BENIGN, x0, t, eps=eps)
    xs, ts, eps_all = x_t, t, eps

    n_trojan = 0
    if attack is not None:
        if attack.kind == "in_d2d":
            rows = np.asarray(labels) == attack.target_class
            x0h, th, epsh = x0[rows], t[rows], eps[rows]
        else:
            x0h = attack.target_batch(n_benign, rng)
            th = rng.integers(1, s.T + 1, size=x0h.shape[0])
            epsh = rng.standard_normal(x0h.shape)
        n_trojan = x0h.shape[0]
        if n_trojan:
            x_th = diffuse(s, trojan_mode(attack.trigger), x0h, th, eps=epsh)
            xs = np.concatenate([x_t, x_th])
            ts = np.concatenate([t, th])
            eps_all = np.concatenate([eps, epsh])

    if opt is None:
        pred = model.predict(xs, ts)
    else:
        pred, cache = model.forward(xs, ts)
    resid = pred - eps_all
    total = float(np.mean(resid**2))
    benign = float(np.mean(resid[:n_benign] ** 2))
    trojan = float(np.mean(resid[n_benign:] ** 2)) if n_trojan else float("nan")

    if opt is not None:
        grads = model.backward(cache, 2.0 * resid / resid.size)
        opt.step(model, grads)
    return total, benign, trojan


@dataclass
class TrainConfig:
    schedule: NoiseSchedule
    coeffs: TrojanCoefficients
    dataset: ToyDataset
    attack: AttackSpec | None
    steps: int
    batch_size: int = 128
    lr: float = 2e-4
    hidden: tuple = (128, 128, 128)
    seed: int = 0
    checkpoint_every: int = 0
    checkpoint_path: str | None = None


def train(cfg: TrainConfig):
    """Run the loop; returns (model, loss rows (steps, 4): step/benign/trojan/total).

    Model init and the step stream are split off the seed as spawn keys 0
    and 1, so a run is a pure function of the config.
    """
    _validate(cfg)
    init_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0,)))
    step_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1,)))
    model = MlpDenoiser(dim=cfg.dataset.dim, hidden=cfg.hidden, n_steps=cfg.schedule.T, rng=init_rng)
    opt = Adam(model, lr=cfg.lr)
    rows = np.empty((cfg.steps, 4))
    for step in range(cfg.steps):
        x0, labels = cfg.dataset.batch(step_rng, cfg.batch_size)
        total, benign, trojan = training_step(model, cfg.schedule, cfg.coeffs, x0, labels, cfg.attack, step_rng, opt)
        rows[step] = (step + 1, benign, trojan, total)
        if cfg.checkpoint_every > 0 and cfg.checkpoint_path and (step + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(cfg.checkpoint_path, model)
    return model, rows


def _validate(cfg: TrainConfig):
    if cfg.steps < 0:
        raise ValueError("step count must be nonnegative")
    if cfg.attack is None:
        return
    a = cfg.attack
    if a.trigger.dim != cfg.dataset.dim:
        raise ValueError(f"trigger dimension {a.trigger.dim} != data dimension {cfg.dataset.dim}")
    if a.kind == "in_d2d" and a.target_class not in set(np.unique(cfg.dataset.labels)):
        raise ValueError(f"target class {a.target_class} does not occur in the dataset")
    if a.kind == "d2i" and np.asarray(a.x_target).shape != (cfg.dataset.dim,):
        raise ValueError("target point dimension does not match the dataset")
    if a.kind == "out_d2d" and a.target_data.dim != cfg.dataset.dim:
        raise ValueError("target dataset dimension does not match the data")
