"""Pairwise-ranking training: triplet sampling, Adam, early stopping.

``train`` drives any model object exposing the small protocol documented in
``gcf.base``: fresh tape per batch, gradients via the tape, parameter
updates via Adam, periodic validation Recall@K with best-checkpoint
tracking and patience-based stopping.
"""

import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import arrayio
from .errors import DataError, NumericalError
from .evaluator import EmbeddingScorer, evaluate
from .seeding import derive_seed


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 1024
    lr: float = 1e-3
    l2: float = 1e-4
    seed: int = 0
    patience: int = 5
    eval_every: int = 5
    k_eval: int = 20

    def __post_init__(self):
        if min(self.epochs, self.batch_size, self.patience, self.eval_every) < 1:
            raise ValueError("epochs, batch_size, patience, eval_every must be >= 1")
        # lr = 0 is allowed: a frozen run is still a valid (if pointless) run
        # and exercises the early-stopping path deterministically
        if self.lr < 0:
            raise ValueError("lr must be nonnegative")


def bpr_loss(tape, pos_scores, neg_scores, l2: float, params: dict):
    """mean softplus(neg - pos) over the batch, plus l2 * sum of squared
    parameter entries. Softplus keeps large margins finite."""
    batch = pos_scores.value.shape[0]
    margin = tape.sub(neg_scores, pos_scores)
    loss = tape.scale(tape.reduce_sum(tape.softplus(margin)), 1.0 / batch)
    if l2 != 0.0:
        loss = tape.add(loss, l2_penalty(tape, l2, params))
    return loss


def l2_penalty(tape, l2: float, params: dict):
    """l2 * sum over parameters of the squared Frobenius norm.

    Parameters combine in sorted-name order so the op sequence (and with it
    float rounding) is reproducible.
    """
    total = None
    for name in sorted(params):
        node = params[name]
        sq = tape.reduce_sum(tape.mul(node, node))
        total = sq if total is None else tape.add(total, sq)
    return tape.scale(total, l2)


class TripletSampler:
    """Draws (user, positive, negative) index triplets from a train set.

    Users arrive proportionally to their interaction count (a uniform draw
    over interactions); negatives are rejection-sampled uniformly over
    items until they miss the user's train profile.
    """

    MAX_REJECTION_ROUNDS = 100

    def __init__(self, train):
        self.users = train.users
        self.items = train.items
        self.num_items = train.num_items
        self._profiles = [set() for _ in range(train.num_users)]
        for u, i in zip(train.users.tolist(), train.items.tolist()):
            self._profiles[u].add(i)

    def sample(self, batch_size: int, rng) -> tuple:
        picks = rng.integers(0, len(self.users), size=batch_size)
        users = self.users[picks]
        positives = self.items[picks]
        negatives = rng.integers(0, self.num_items, size=batch_size)
        pending = np.array(
            [negatives[b] in self._profiles[users[b]] for b in range(batch_size)]
        )
        rounds = 0
        while pending.any():
            rounds += 1
            if rounds > self.MAX_REJECTION_ROUNDS:
                raise DataError(
                    "negative sampling exhausted retries; a sampled user "
                    "interacts with (nearly) every item"
                )
            redraw = np.flatnonzero(pending)
            negatives[redraw] = rng.integers(0, self.num_items, size=len(redraw))
            pending[redraw] = [
                negatives[b] in self._profiles[users[b]] for b in redraw
            ]
        return users, positives, negatives


def sample_bpr_triplets(train, batch_size: int, rng) -> tuple:
    return TripletSampler(train).sample(batch_size, rng)


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    """Bias-corrected Adam update, in place on the parameter arrays."""
    state.t += 1
    t = state.t
    for name in sorted(params):
        p = params[name]
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        g = g.astype(p.dtype, copy=False)
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        p -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype, copy=False)
    return state


@dataclass
class TrainResult:
    params: dict
    curve: list
    best_val: float | None
    best_epoch: int | None
    stopped_epoch: int


def _validation_split(split):
    from .ingest import Split

    return Split(train=split.train, test=split.validation)


def train(model, split, config: TrainConfig, checkpoint_dir=None) -> TrainResult:
    """Run the epoch loop; returns the best checkpoint (by validation
    Recall@K) when a validation part exists, else the final parameters."""
    from .autodiff import Tape

    init_rng = np.random.default_rng(derive_seed(config.seed, "init"))
    sample_rng = np.random.default_rng(derive_seed(config.seed, "sampler"))
    model_rng = np.random.default_rng(derive_seed(config.seed, "model"))

    params = model.init_params(init_rng)
    sampler = TripletSampler(split.train)
    state = AdamState()
    steps = max(1, math.ceil(split.train.num_pairs / config.batch_size))

    curve = []
    best_params = None
    best_val = None
    best_epoch = None
    misses = 0
    stopped = config.epochs

    for epoch in range(1, config.epochs + 1):
        if hasattr(model, "on_epoch_begin"):
            model.on_epoch_begin(model_rng)
        epoch_loss = 0.0
        for _ in range(steps):
            users, pos, neg = sampler.sample(config.batch_size, sample_rng)
            tape = Tape()
            pnodes = {
                name: tape.input(value, trainable=True, name=name)
                for name, value in params.items()
            }
            loss = model.loss(tape, pnodes, users, pos, neg, config.l2, model_rng)
            value = float(loss.value[0, 0])
            if not np.isfinite(value):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch} ({model.kind}); "
                    f"check learning rate and regularization"
                )
            tape.backward(loss)
            grads = {name: node.grad for name, node in pnodes.items()}
            adam_step(params, grads, state, config.lr)
            epoch_loss += value
        epoch_loss /= steps

        val_recall = None
        if split.validation is not None and epoch % config.eval_every == 0:
            scorer = EmbeddingScorer(*model.final_embeddings(params))
            report = evaluate(scorer, _validation_split(split), K=config.k_eval)
            val_recall = report.recall_mean
            if best_val is None or val_recall > best_val:
                best_val = val_recall
                best_epoch = epoch
                best_params = {k: v.copy() for k, v in params.items()}
                misses = 0
            else:
                misses += 1
                if misses >= config.patience:
                    curve.append((epoch, epoch_loss, val_recall))
                    stopped = epoch
                    break
        curve.append((epoch, epoch_loss, val_recall))
    else:
        stopped = config.epochs

    result = TrainResult(
        params=best_params if best_params is not None else params,
        curve=curve,
        best_val=best_val,
        best_epoch=best_epoch,
        stopped_epoch=stopped,
    )
    if checkpoint_dir is not None:
        save_checkpoint(checkpoint_dir, model, config, result)
    return result


def save_checkpoint(out_dir, model, config: TrainConfig, result: TrainResult) -> None:
    meta = {
        "model": model.hyperparameters(),
        "config": asdict(config),
        "best_val": result.best_val,
        "best_epoch": result.best_epoch,
        "stopped_epoch": result.stopped_epoch,
    }
    arrayio.save_model(out_dir, model.kind, meta, result.params)
    write_curve(os.path.join(out_dir, "curve.tsv"), result.curve)


def write_curve(path, curve) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch\tloss\tval_recall\n")
        for epoch, loss, val in curve:
            val_txt = "" if val is None else f"{val:.10g}"
            fh.write(f"{epoch}\t{loss:.10g}\t{val_txt}\n")


def load_checkpoint(in_dir):
    """Return (kind, meta, params) for a directory written by train."""
    if not os.path.exists(os.path.join(in_dir, "model.json")):
        from .errors import DependencyError

        raise DependencyError(f"no checkpoint at {in_dir}")
    return arrayio.load_model(in_dir)
