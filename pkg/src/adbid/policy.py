"""Student bidding policy: a small MLP trained to imitate planner actions.

The network is a plain float64 ReLU MLP with a variant-specific output head:

- ``slot``:    one output, the log bid coefficient (bid = exp(out) * mu);
- ``2s``:      three outputs (log alpha0, slope, intercept) of a two-piece
               bid-coefficient curve over mu;
- ``upgrade``: one output per IO, mapped through softplus to a nonnegative
               raw bid.  Inputs for this head are per-IO rows (observation
               plus the IO's mu and sigma).

Training minimizes mean squared error between the head's action and the
action a replanning oracle takes from the same state, with Adam, global
gradient-norm clipping, and a linearly decaying learning rate.  Inputs are
standardized by running mean/variance statistics accumulated during training
and frozen afterwards.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError, ConfigError, TrainingDivergedError

HEADS = ("slot", "2s", "upgrade")
HEAD_DIMS = {"slot": 1, "2s": 3, "upgrade": 1}
CHECKPOINT_VERSION = 1
_NORM_EPS = 1e-8


@dataclass(frozen=True)
class NetConfig:
    """Architecture of the policy network."""

    input_dim: int
    head: str
    hidden: tuple[int, ...] = (256, 256, 256)

    def __post_init__(self):
        if self.head not in HEADS:
            raise ConfigError(f"unknown head {self.head!r}, expected one of {HEADS}")
        if self.input_dim <= 0:
            raise ConfigError("input_dim must be positive")
        if any(h <= 0 for h in self.hidden):
            raise ConfigError("hidden layer sizes must be positive")

    @property
    def output_dim(self) -> int:
        return HEAD_DIMS[self.head]


@dataclass
class PolicyParams:
    """Weights plus the input-normalization statistics."""

    config: NetConfig
    weights: list[np.ndarray]       # W1, b1, W2, b2, ...
    norm_mean: np.ndarray
    norm_var: np.ndarray
    norm_count: float = 0.0

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            config=self.config,
            weights=[w.copy() for w in self.weights],
            norm_mean=self.norm_mean.copy(),
            norm_var=self.norm_var.copy(),
            norm_count=self.norm_count,
        )


# Output bias at init makes the untrained policy bid near mu: the slot head
# starts at log-coefficient 0 (alpha = 1), the curve head at a flat unit
# coefficient line.
_HEAD_BIAS = {
    "slot": (0.0,),
    "2s": (0.0, 0.0, 1.0),
    "upgrade": (0.0,),
}


def init_params(config: NetConfig, seed: int = 0) -> PolicyParams:
    rng = np.random.default_rng(seed)
    dims = (config.input_dim, *config.hidden, config.output_dim)
    weights: list[np.ndarray] = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        weights.append(np.zeros(fan_out))
    weights[-1][:] = _HEAD_BIAS[config.head]
    return PolicyParams(
        config=config,
        weights=weights,
        norm_mean=np.zeros(config.input_dim),
        norm_var=np.ones(config.input_dim),
    )


def update_norm_stats(params: PolicyParams, batch: np.ndarray) -> None:
    """Chan-style parallel merge of batch mean/variance into the running stats."""
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    bn = len(batch)
    if bn == 0:
        return
    bmean = batch.mean(axis=0)
    bvar = batch.var(axis=0)
    n = params.norm_count
    total = n + bn
    delta = bmean - params.norm_mean
    params.norm_mean = params.norm_mean + delta * (bn / total)
    m2 = params.norm_var * n + bvar * bn + delta * delta * (n * bn / total)
    params.norm_var = m2 / total
    params.norm_count = total


def _normalize(params: PolicyParams, x: np.ndarray) -> np.ndarray:
    return (x - params.norm_mean) / np.sqrt(params.norm_var + _NORM_EPS)


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def head_transform(head: str, raw: np.ndarray) -> np.ndarray:
    """Map raw network outputs to actions."""
    if head == "upgrade":
        return _softplus(raw)
    return raw


def _head_jacobian(head: str, raw: np.ndarray) -> np.ndarray:
    if head == "upgrade":
        return 1.0 / (1.0 + np.exp(-raw))
    return np.ones_like(raw)


def forward(params: PolicyParams, x: np.ndarray) -> np.ndarray:
    """Actions for a batch of inputs, shape (n, output_dim)."""
    a, _ = _forward_cached(params, np.atleast_2d(np.asarray(x, dtype=float)))
    return head_transform(params.config.head, a)


def _forward_cached(params: PolicyParams, x: np.ndarray):
    h = _normalize(params, x)
    cache = [h]
    n_layers = len(params.weights) // 2
    for layer in range(n_layers):
        w, b = params.weights[2 * layer], params.weights[2 * layer + 1]
        h = h @ w + b
        if layer < n_layers - 1:
            h = np.maximum(h, 0.0)
        cache.append(h)
    return h, cache


def loss_and_grads(params: PolicyParams, x: np.ndarray, y: np.ndarray):
    """Mean squared action error and its gradient in every weight."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    raw, cache = _forward_cached(params, x)
    head = params.config.head
    action = head_transform(head, raw)
    err = action - y
    loss = float(np.mean(err * err))
    # d loss / d raw
    g = (2.0 / err.size) * err * _head_jacobian(head, raw)
    grads: list[np.ndarray] = [None] * len(params.weights)
    n_layers = len(params.weights) // 2
    for layer in reversed(range(n_layers)):
        w = params.weights[2 * layer]
        h_in = cache[layer]
        grads[2 * layer] = h_in.T @ g
        grads[2 * layer + 1] = g.sum(axis=0)
        if layer > 0:
            g = (g @ w.T) * (cache[layer] > 0.0)
    return loss, grads


def clip_global_norm(grads: list[np.ndarray], max_norm: float) -> float:
    """Scale grads in place so their joint L2 norm is at most max_norm."""
    total = np.sqrt(sum(float((g * g).sum()) for g in grads))
    if total > max_norm and total > 0:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: PolicyParams) -> "AdamState":
        return cls(
            m=[np.zeros_like(w) for w in params.weights],
            v=[np.zeros_like(w) for w in params.weights],
        )


def adam_update(
    params: PolicyParams,
    state: AdamState,
    grads: list[np.ndarray],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    state.step += 1
    t = state.step
    for i, g in enumerate(grads):
        state.m[i] = beta1 * state.m[i] + (1 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1 - beta2) * (g * g)
        mhat = state.m[i] / (1 - beta1**t)
        vhat = state.v[i] / (1 - beta2**t)
        params.weights[i] -= lr * mhat / (np.sqrt(vhat) + eps)


@dataclass(frozen=True)
class TrainConfig:
    """Imitation-training hyperparameters."""

    total_interactions: int = 100_000
    rollout_steps: int = 128
    epochs: int = 10
    batch_size: int = 512
    lr_start: float = 1e-3
    lr_end: float = 0.0
    max_grad_norm: float = 0.7
    seed: int = 0
    diverged_checkpoint: str | None = None

    def __post_init__(self):
        if self.total_interactions <= 0 or self.rollout_steps <= 0:
            raise ConfigError("total_interactions and rollout_steps must be positive")
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ConfigError("epochs and batch_size must be positive")
        if self.lr_start < 0 or self.lr_end < 0 or self.max_grad_norm <= 0:
            raise ConfigError("learning rates must be >= 0 and max_grad_norm > 0")

    def lr_at(self, interactions: int) -> float:
        frac = min(1.0, interactions / self.total_interactions)
        return self.lr_start + (self.lr_end - self.lr_start) * frac


@dataclass
class TrainLog:
    """Progress rows emitted while training."""

    updates: list[dict] = field(default_factory=list)
    episodes: list[dict] = field(default_factory=list)

    def latest_loss(self) -> float:
        return self.updates[-1]["loss"] if self.updates else float("nan")


def _check_finite(loss: float, params: PolicyParams, config: TrainConfig, where: str):
    if np.isfinite(loss):
        return
    path = config.diverged_checkpoint
    if path:
        save_checkpoint(params, path)
    raise TrainingDivergedError(
        f"non-finite loss at {where}", checkpoint_path=path
    )


def fit_buffer(
    params: PolicyParams,
    adam: AdamState,
    xs: np.ndarray,
    ys: np.ndarray,
    config: TrainConfig,
    lr: float,
    rng: np.random.Generator,
) -> float:
    """Run the configured epochs of minibatch updates; returns mean loss."""
    n = len(xs)
    losses = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads = loss_and_grads(params, xs[idx], ys[idx])
            _check_finite(loss, params, config, "minibatch update")
            clip_global_norm(grads, config.max_grad_norm)
            adam_update(params, adam, grads, lr)
            losses.append(loss)
    return float(np.mean(losses))


def train_oil(env, config: TrainConfig, net_config: NetConfig | None = None,
              progress=None) -> tuple[PolicyParams, TrainLog]:
    """Online imitation learning against ``env``.

    The env exposes the step protocol used here: ``reset()``,
    ``current_inputs() -> (n, input_dim)``, ``oracle_targets() -> (n, out_dim)
    or None`` (None marks steps without a defined teacher action, which are
    played but not added to the buffer), and ``act(actions) -> done``.
    One interaction is one env step.
    """
    if net_config is None:
        net_config = NetConfig(input_dim=env.input_dim, head=env.mode)
    if net_config.head != env.mode:
        raise ConfigError(f"net head {net_config.head!r} != env mode {env.mode!r}")
    params = init_params(net_config, seed=config.seed)
    adam = AdamState.for_params(params)
    rng = np.random.default_rng(config.seed + 1)
    log = TrainLog()
    buf_x: list[np.ndarray] = []
    buf_y: list[np.ndarray] = []

    env.reset()
    interactions = 0
    while interactions < config.total_interactions:
        x = env.current_inputs()
        y = env.oracle_targets()
        actions = forward(params, x)
        done = env.act(actions)
        update_norm_stats(params, x)
        if y is not None:
            buf_x.append(np.atleast_2d(x))
            buf_y.append(np.atleast_2d(y))
        interactions += 1
        if done:
            log.episodes.append(env.episode_summary())
            env.reset()
        if interactions % config.rollout_steps == 0 and buf_x:
            xs = np.concatenate(buf_x)
            ys = np.concatenate(buf_y)
            lr = config.lr_at(interactions)
            loss = fit_buffer(params, adam, xs, ys, config, lr, rng)
            row = {"interactions": interactions, "loss": loss, "lr": lr,
                   "buffer": len(xs)}
            log.updates.append(row)
            if progress is not None:
                progress(row)
            buf_x.clear()
            buf_y.clear()
    return params, log


def offline_train(
    xs: np.ndarray,
    ys: np.ndarray,
    net_config: NetConfig,
    config: TrainConfig,
    progress=None,
) -> tuple[PolicyParams, TrainLog]:
    """Same optimization on a fixed dataset of (input, action) pairs."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    if len(xs) != len(ys):
        raise ConfigError("xs and ys must have the same length")
    params = init_params(net_config, seed=config.seed)
    adam = AdamState.for_params(params)
    rng = np.random.default_rng(config.seed + 1)
    update_norm_stats(params, xs)
    log = TrainLog()
    passes = max(1, config.total_interactions // max(1, len(xs)))
    for sweep in range(passes):
        lr = config.lr_at((sweep + 1) * len(xs))
        loss = fit_buffer(params, adam, xs, ys, config, lr, rng)
        row = {"interactions": (sweep + 1) * len(xs), "loss": loss, "lr": lr,
               "buffer": len(xs)}
        log.updates.append(row)
        if progress is not None:
            progress(row)
    return params, log


def save_checkpoint(params: PolicyParams, path: str,
                    adam: AdamState | None = None) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "input_dim": params.config.input_dim,
        "head": params.config.head,
        "hidden": list(params.config.hidden),
        "norm_count": params.norm_count,
        "n_weights": len(params.weights),
        "has_adam": adam is not None,
        "adam_step": adam.step if adam is not None else 0,
    }
    arrays = {f"w{i}": w for i, w in enumerate(params.weights)}
    arrays["norm_mean"] = params.norm_mean
    arrays["norm_var"] = params.norm_var
    if adam is not None:
        arrays.update({f"m{i}": m for i, m in enumerate(adam.m)})
        arrays.update({f"v{i}": v for i, v in enumerate(adam.v)})
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path: str) -> tuple[PolicyParams, AdamState | None]:
    try:
        data = np.load(path)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        meta = json.loads(bytes(data["meta"]).decode())
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"checkpoint {path} has no readable metadata") from exc
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {meta.get('version')} unsupported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    config = NetConfig(
        input_dim=int(meta["input_dim"]),
        head=str(meta["head"]),
        hidden=tuple(int(h) for h in meta["hidden"]),
    )
    n = int(meta["n_weights"])
    try:
        weights = [data[f"w{i}"] for i in range(n)]
        params = PolicyParams(
            config=config,
            weights=weights,
            norm_mean=data["norm_mean"],
            norm_var=data["norm_var"],
            norm_count=float(meta["norm_count"]),
        )
        adam = None
        if meta.get("has_adam"):
            adam = AdamState(
                m=[data[f"m{i}"] for i in range(n)],
                v=[data[f"v{i}"] for i in range(n)],
                step=int(meta["adam_step"]),
            )
    except KeyError as exc:
        raise CheckpointError(f"checkpoint {path} is missing arrays: {exc}") from exc
    expected = (config.input_dim, *config.hidden, config.output_dim)
    for layer, (fan_in, fan_out) in enumerate(zip(expected[:-1], expected[1:])):
        if weights[2 * layer].shape != (fan_in, fan_out):
            raise CheckpointError(
                f"layer {layer} shape {weights[2 * layer].shape} does not match "
                f"architecture {expected}"
            )
    return params, adam
