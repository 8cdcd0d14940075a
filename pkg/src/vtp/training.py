"""Staged training pipelines and the evaluation metrics.

Stages run in order -- action classifier, autoencoder, latent transform,
value heads -- each freezing everything upstream.  Every stage is exactly
reproducible from (episodes, seed): batch sampling uses a dedicated
counter-based stream and dropout masks are keyed on (seed, iteration).
Validation runs on held-out episodes only; early stopping watches a fixed
validation slice and restores the best parameters seen.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import models as M
from . import numerics as N
from .models import DropoutPlan, ModelBundle
from .numerics import AdamConfig, Tensor, adam_step


@dataclass
class LossConfig:
    lam: float = 0.0            # weight of the classifier term on x2
    mode: str = "linked"        # "linked" (two chained transforms) | "naive"

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.mode not in ("linked", "naive"):
            raise ValueError(f"unknown loss mode {self.mode!r}")
        if self.lam > 0 and self.mode == "naive":
            raise ValueError("the classifier term applies to the second "
                             "prediction; naive mode has none")


DESK_LR = 1e-3  # compresses the paper's 45k-iteration schedule into 5k


@dataclass
class TrainConfig:
    iterations: int = 5000
    batch: int = 64
    seed: int = 0
    adam: AdamConfig = field(default_factory=lambda: AdamConfig(lr=DESK_LR))
    dropout: float = 0.1
    eval_interval: int = 100
    patience: int = 500         # iterations without val improvement
    val_batches: int = 4
    # unresolved reading of the normalization remark for the value stage:
    # when set, value heads train on encodings computed without the
    # encoder's instance norms (default off; consumers must then encode
    # the same way at inference)
    values_use_raw_encoder: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")


class StageError(Exception):
    """A stage ran without its frozen upstream models."""


def _rng(seed: int, tag: str) -> np.random.Generator:
    import zlib
    return np.random.default_rng(
        np.random.SeedSequence([seed & (2**63 - 1), zlib.crc32(tag.encode())]))


class _EarlyStop:
    """Plateau detection plus best-parameter snapshots.

    A new value counts as progress only when it beats the best seen by a
    relative margin, so slow asymptotic tails stop after `patience`
    iterations instead of consuming the whole budget.
    """

    REL_DELTA = 0.01

    def __init__(self, stores, patience: int):
        self.stores = list(stores)
        self.patience = patience
        self.best = np.inf
        self.best_iter = 0
        self.snapshot = None

    def update(self, iteration: int, val: float) -> bool:
        if val < self.best * (1.0 - self.REL_DELTA) or self.snapshot is None:
            self.best_iter = iteration
        if val < self.best:
            self.best = val
            self.snapshot = [
                {k: t.data.copy() for k, t in s.params.items()} for s in self.stores]
        return iteration - self.best_iter >= self.patience

    def restore(self) -> None:
        if self.snapshot is None:
            return
        for store, snap in zip(self.stores, self.snapshot):
            for k, arr in snap.items():
                store.params[k].data = arr


def _frame_index(episodes, skip_root: bool = False) -> list[tuple[int, int]]:
    idx = []
    for e, ep in enumerate(episodes):
        start = 1 if skip_root else 0
        idx.extend((e, i) for i in range(start, ep.n_frames))
    return idx


def _gather_frames(episodes, index, rows) -> tuple[np.ndarray, np.ndarray]:
    xs = np.empty((len(rows), 64, 64, 3), dtype=np.float32)
    labels = np.empty(len(rows), dtype=np.int64)
    for j, r in enumerate(rows):
        e, i = index[r]
        xs[j] = ds.frames_float(episodes[e].frames[i])
        labels[j] = episodes[e].actions[i]
    return xs, labels


# --------------------------------------------------------------------------
# classifier


def train_classifier(data, cfg: TrainConfig, bundle: ModelBundle) -> dict:
    """Cross-entropy training of the action classifier; reports val accuracy."""
    train_eps, val_eps = data
    if not train_eps:
        raise StageError("no training episodes supplied")
    store = bundle["classifier"]
    index = _frame_index(train_eps, skip_root=True)
    val_index = _frame_index(val_eps, skip_root=True)
    rng = _rng(cfg.seed, "classifier-batches")
    val_rows = _rng(cfg.seed, "classifier-val").choice(
        len(val_index), size=min(512, len(val_index)), replace=False)
    val_x, val_y = _gather_frames(val_eps, val_index, val_rows)
    stopper = _EarlyStop([store], cfg.patience)
    curve = []
    ran = 0
    for it in range(cfg.iterations):
        rows = rng.integers(0, len(index), size=cfg.batch)
        xs, ys = _gather_frames(train_eps, index, rows)
        plan = DropoutPlan(cfg.seed, step=it, rate=cfg.dropout)
        store.zero_grad()
        loss = N.cross_entropy(
            M.classifier_forward(store, Tensor(xs), train=True, plan=plan), ys)
        loss.backward()
        adam_step(store, store.grads(), cfg.adam)
        ran = it + 1
        if (it + 1) % cfg.eval_interval == 0 or it + 1 == cfg.iterations:
            val_loss = _classifier_val_loss(store, val_x, val_y)
            curve.append((it + 1, float(loss.item()), val_loss))
            if stopper.update(it + 1, val_loss):
                break
    stopper.restore()
    bundle.trained.add("classifier")
    acc = classifier_accuracy(bundle, val_eps)
    return {"stage": "classifier", "iterations": ran, "seed": cfg.seed,
            "val_accuracy": acc, "curve": curve}


def _classifier_val_loss(store, val_x, val_y) -> float:
    with N.no_grad():
        total = 0.0
        for s in range(0, len(val_x), 256):
            part = N.cross_entropy(
                M.classifier_forward(store, Tensor(val_x[s:s + 256])),
                val_y[s:s + 256])
            total += part.item() * len(val_x[s:s + 256])
    return total / len(val_x)


def classifier_accuracy(bundle: ModelBundle, episodes) -> float:
    """Held-out fraction of frames whose causing action is recovered."""
    index = _frame_index(episodes, skip_root=True)
    hits = 0
    with N.no_grad():
        for s in range(0, len(index), 256):
            xs, ys = _gather_frames(episodes, index, range(s, min(s + 256, len(index))))
            logits = M.classifier_forward(bundle["classifier"], Tensor(xs)).data
            hits += int((logits.argmax(axis=1) == ys).sum())
    return hits / len(index)


# --------------------------------------------------------------------------
# autoencoder


def train_autoencoder(data, cfg: TrainConfig, bundle: ModelBundle) -> dict:
    """L1 reconstruction training of encoder+decoder; reports val MAE."""
    train_eps, val_eps = data
    if not train_eps:
        raise StageError("no training episodes supplied")
    enc, dec = bundle["encoder"], bundle["decoder"]
    index = _frame_index(train_eps)
    val_index = _frame_index(val_eps)
    rng = _rng(cfg.seed, "autoencoder-batches")
    val_rows = _rng(cfg.seed, "autoencoder-val").choice(
        len(val_index), size=min(256, len(val_index)), replace=False)
    val_x, _ = _gather_frames(val_eps, val_index, val_rows)
    stopper = _EarlyStop([enc, dec], cfg.patience)
    curve = []
    ran = 0
    for it in range(cfg.iterations):
        rows = rng.integers(0, len(index), size=cfg.batch)
        xs, _ = _gather_frames(train_eps, index, rows)
        plan = DropoutPlan(cfg.seed, step=it, rate=cfg.dropout)
        enc.zero_grad()
        dec.zero_grad()
        x = Tensor(xs)
        h = M.encoder_forward(enc, x, train=True, plan=plan)
        recon = M.decoder_forward(dec, h, train=True, plan=plan)
        loss = N.l1_loss(recon, x)
        loss.backward()
        adam_step(enc, enc.grads(), cfg.adam)
        adam_step(dec, dec.grads(), cfg.adam)
        ran = it + 1
        if (it + 1) % cfg.eval_interval == 0 or it + 1 == cfg.iterations:
            val_mae = _reconstruction_mae(enc, dec, val_x)
            curve.append((it + 1, float(loss.item()), val_mae))
            if stopper.update(it + 1, val_mae):
                break
    stopper.restore()
    bundle.trained.add("autoencoder")
    final = reconstruction_mae(bundle, val_eps)
    return {"stage": "autoencoder", "iterations": ran, "seed": cfg.seed,
            "val_mae": final, "curve": curve}


def _reconstruction_mae(enc, dec, val_x) -> float:
    with N.no_grad():
        total = 0.0
        for s in range(0, len(val_x), 128):
            x = val_x[s:s + 128]
            recon = M.decoder_forward(dec, M.encoder_forward(enc, Tensor(x))).data
            total += float(np.abs(recon - x).mean()) * len(x)
    return total / len(val_x)


def reconstruction_mae(bundle: ModelBundle, episodes) -> float:
    index = _frame_index(episodes)
    xs, _ = _gather_frames(episodes, index, range(len(index)))
    return _reconstruction_mae(bundle["encoder"], bundle["decoder"], xs)


def mean_image_baseline_mae(train_eps, val_eps) -> float:
    """MAE of predicting the training-set mean frame everywhere."""
    total = np.zeros((64, 64, 3), dtype=np.float64)
    count = 0
    for ep in train_eps:
        total += ds.frames_float(ep.frames).sum(axis=0)
        count += ep.n_frames
    mean_img = (total / count).astype(np.float32)
    err = 0.0
    n = 0
    for ep in val_eps:
        err += float(np.abs(ds.frames_float(ep.frames) - mean_img).sum())
        n += ep.n_frames * 64 * 64 * 3
    return err / n


# --------------------------------------------------------------------------
# cached encodings


def encode_all_frames(bundle: ModelBundle, episodes,
                      use_norm: bool = True) -> tuple[np.ndarray, dict]:
    """Inference-mode hidden states for every frame; offsets index episodes."""
    index = _frame_index(episodes)
    out = np.empty((len(index),) + M.HIDDEN_SHAPE, dtype=np.float32)
    offsets = {}
    pos = 0
    for e, ep in enumerate(episodes):
        offsets[e] = pos
        pos += ep.n_frames
    with N.no_grad():
        for s in range(0, len(index), 256):
            xs, _ = _gather_frames(episodes, index, range(s, min(s + 256, len(index))))
            out[s:s + len(xs)] = M.encoder_forward(bundle["encoder"], Tensor(xs),
                                                   use_norm=use_norm).data
    return out, offsets


# --------------------------------------------------------------------------
# transform


def transform_loss(batch: dict, bundle: ModelBundle, loss_cfg: LossConfig,
                   h0, hi, train: bool = False,
                   plan_seed: int = 0, plan_step: int = 0,
                   dropout_rate: float = 0.1) -> tuple[Tensor, Tensor, Tensor]:
    """Linked (or naive) prediction loss; returns (loss, x1_hat, x2_hat).

    `h0`/`hi` are precomputed frozen-encoder hidden states.  Both transform
    applications share the same parameter store, so the weight sharing of
    linked training holds by construction.
    """
    tr = bundle["transform"]
    a1 = M.one_hot(batch["a1"], bundle.action_count)
    plan1 = DropoutPlan(plan_seed, step=plan_step, rate=dropout_rate, stream=1)
    h1p = M.transform_forward(tr, h0, hi, a1, train=train, plan=plan1)
    x1_hat = M.decoder_forward(bundle["decoder"], h1p)
    loss = N.l1_loss(x1_hat, Tensor(batch["xt1"]))
    x2_hat = None
    if loss_cfg.mode == "linked":
        a2 = M.one_hot(batch["a2"], bundle.action_count)
        plan2 = DropoutPlan(plan_seed, step=plan_step, rate=dropout_rate, stream=2)
        h2p = M.transform_forward(tr, h0, h1p, a2, train=train, plan=plan2)
        x2_hat = M.decoder_forward(bundle["decoder"], h2p)
        loss = N.add(loss, N.l1_loss(x2_hat, Tensor(batch["xt2"])))
        if loss_cfg.lam > 0:
            logits = M.classifier_forward(bundle["classifier"], x2_hat)
            loss = N.add(loss, N.mul(N.cross_entropy(logits, batch["a2"]),
                                     loss_cfg.lam))
    return loss, x1_hat, x2_hat


def train_transform(data, cfg: TrainConfig, loss_cfg: LossConfig,
                    bundle: ModelBundle, success_only: bool = True) -> dict:
    """Train the latent transform against frozen encoder/decoder/classifier."""
    train_eps, val_eps = data
    if "autoencoder" not in bundle.trained:
        raise StageError("train_transform requires a trained autoencoder stage")
    if loss_cfg.lam > 0 and "classifier" not in bundle.trained:
        raise StageError("a positive classifier weight requires a trained classifier")
    tr = bundle["transform"]
    frozen = [bundle[n] for n in ("encoder", "decoder", "classifier")]
    for s in frozen:
        s.set_trainable(False)
    try:
        enc_train, off_train = encode_all_frames(bundle, train_eps)
        enc_val, off_val = encode_all_frames(bundle, val_eps)
        windows = ds.transform_windows(train_eps, success_only=success_only)
        val_windows = ds.transform_windows(val_eps, success_only=success_only)
        if not windows or not val_windows:
            raise StageError("not enough transform windows in the data")
        rng = _rng(cfg.seed, "transform-batches")
        vrows = _rng(cfg.seed, "transform-val").choice(
            len(val_windows), size=min(cfg.val_batches * cfg.batch, len(val_windows)),
            replace=False)
        stopper = _EarlyStop([tr], cfg.patience)
        curve = []
        ran = 0
        for it in range(cfg.iterations):
            rows = rng.integers(0, len(windows), size=cfg.batch)
            batch = ds.gather_transform_batch(train_eps, windows, rows)
            h0, hi = _window_hiddens(enc_train, off_train, windows, rows)
            tr.zero_grad()
            loss, _, _ = transform_loss(batch, bundle, loss_cfg, Tensor(h0), Tensor(hi),
                                        train=True, plan_seed=cfg.seed, plan_step=it,
                                        dropout_rate=cfg.dropout)
            loss.backward()
            adam_step(tr, tr.grads(), cfg.adam)
            ran = it + 1
            if (it + 1) % cfg.eval_interval == 0 or it + 1 == cfg.iterations:
                val_loss = _transform_val_loss(val_eps, val_windows, vrows, bundle,
                                               loss_cfg, enc_val, off_val, cfg.batch)
                curve.append((it + 1, float(loss.item()), val_loss))
                if stopper.update(it + 1, val_loss):
                    break
        stopper.restore()
    finally:
        for s in frozen:
            s.set_trainable(True)
    bundle.trained.add("transform")
    return {"stage": "transform", "iterations": ran, "seed": cfg.seed,
            "mode": loss_cfg.mode, "lambda": loss_cfg.lam, "curve": curve}


def _window_hiddens(encodings, offsets, windows, rows):
    h0 = np.empty((len(rows),) + M.HIDDEN_SHAPE, dtype=np.float32)
    hi = np.empty_like(h0)
    for j, r in enumerate(rows):
        e, i = windows[r]
        h0[j] = encodings[offsets[e]]
        hi[j] = encodings[offsets[e] + i]
    return h0, hi


def _transform_val_loss(val_eps, val_windows, vrows, bundle, loss_cfg,
                        enc_val, off_val, batch_size) -> float:
    total, n = 0.0, 0
    for s in range(0, len(vrows), batch_size):
        rows = vrows[s:s + batch_size]
        batch = ds.gather_transform_batch(val_eps, val_windows, rows)
        h0, hi = _window_hiddens(enc_val, off_val, val_windows, rows)
        with N.no_grad():
            loss, _, _ = transform_loss(batch, bundle, loss_cfg,
                                        Tensor(h0), Tensor(hi), train=False)
        total += loss.item() * len(rows)
        n += len(rows)
    return total / n


# --------------------------------------------------------------------------
# value heads


def train_value_heads(data, cfg: TrainConfig, bundle: ModelBundle) -> dict:
    """Binary cross-entropy training of V, Q, done and permissibility heads."""
    train_eps, val_eps = data
    if "autoencoder" not in bundle.trained:
        raise StageError("train_value_heads requires a trained encoder")
    stores = {k: bundle[k] for k in ("value", "q", "done", "perm")}
    bundle["encoder"].set_trainable(False)
    use_norm = not cfg.values_use_raw_encoder
    try:
        enc_train, off_train = encode_all_frames(bundle, train_eps, use_norm=use_norm)
        masks = ds.replay_legal_masks(train_eps)
        samples = ds.value_samples(train_eps, masks)
        flat_h = enc_train  # row order matches value_samples flattening
        rng = _rng(cfg.seed, "value-batches")
        batches = ds.build_value_batches(samples, cfg.batch, rng=rng)
        a_count = bundle.action_count
        stopper = _EarlyStop(list(stores.values()), cfg.patience)
        # fixed validation slice from held-out episodes
        val_masks = ds.replay_legal_masks(val_eps)
        val_samples = ds.value_samples(val_eps, val_masks)
        enc_val, off_val = encode_all_frames(bundle, val_eps, use_norm=use_norm)
        vrows = _rng(cfg.seed, "value-val").choice(
            len(val_samples["episode"]),
            size=min(1024, len(val_samples["episode"])), replace=False)
        curve = []
        ran = 0
        for it in range(cfg.iterations):
            rows = next(batches)
            loss = _value_loss(stores, samples, flat_h, off_train, rows, a_count)
            for s in stores.values():
                s.zero_grad()
            loss.backward()
            for s in stores.values():
                adam_step(s, s.grads(), cfg.adam)
            ran = it + 1
            if (it + 1) % cfg.eval_interval == 0 or it + 1 == cfg.iterations:
                with N.no_grad():
                    val_loss = _value_loss(stores, val_samples, enc_val, off_val,
                                           vrows, a_count).item()
                curve.append((it + 1, float(loss.item()), val_loss))
                if stopper.update(it + 1, val_loss):
                    break
        stopper.restore()
    finally:
        bundle["encoder"].set_trainable(True)
    bundle.trained.add("values")
    return {"stage": "values", "iterations": ran, "seed": cfg.seed, "curve": curve}


def _value_loss(stores, samples, encodings, offsets, rows, a_count) -> Tensor:
    rows = np.asarray(rows)
    eps_idx = samples["episode"][rows]
    frames = samples["frame"][rows]
    flat = np.array([offsets[int(e)] + int(i) for e, i in zip(eps_idx, frames)])
    h0 = Tensor(encodings[[offsets[int(e)] for e in eps_idx]])
    hi = Tensor(encodings[flat])
    a_vec = M.one_hot(samples["action"][rows], a_count, root_slot=True)
    success = samples["success"][rows]
    done = samples["done"][rows]
    has_next = samples["has_next"][rows]
    next_action = samples["next_action"][rows]
    legal = samples["legal_mask"][rows]
    is_real_action = (samples["action"][rows] != ds.ROOT_ACTION).astype(np.float32)

    v_logit = M.value_forward(stores["value"], hi)
    loss = N.bce_with_logits(N.reshape(v_logit, (len(rows),)), success)

    q_logits = M.pair_head_forward(stores["q"], h0, hi, a_vec)
    q_mask = np.zeros((len(rows), a_count), dtype=np.float32)
    q_mask[np.arange(len(rows)), next_action] = has_next
    q_target = np.broadcast_to(success[:, None], q_mask.shape).copy()
    loss = N.add(loss, N.bce_with_logits(q_logits, q_target, mask=q_mask))

    f_logit = M.pair_head_forward(stores["done"], h0, hi, a_vec)
    loss = N.add(loss, N.bce_with_logits(N.reshape(f_logit, (len(rows),)),
                                         done, mask=is_real_action))

    p_logits = M.pair_head_forward(stores["perm"], h0, hi, a_vec)
    loss = N.add(loss, N.bce_with_logits(p_logits, legal))
    return loss


# --------------------------------------------------------------------------
# evaluation


def eval_recognizability(bundle: ModelBundle, episodes,
                         subset: str = "success") -> dict:
    """Single-frame action recovery and MAE for one- and two-step predictions."""
    if subset not in ("success", "all"):
        raise ValueError("subset must be 'success' or 'all'")
    windows = ds.transform_windows(episodes, success_only=(subset == "success"))
    if not windows:
        raise ValueError("no evaluation windows available")
    encodings, offsets = encode_all_frames(bundle, episodes)
    hits1 = hits2 = 0
    mae1 = mae2 = 0.0
    loss_cfg = LossConfig(lam=0.0, mode="linked")
    for s in range(0, len(windows), 128):
        rows = range(s, min(s + 128, len(windows)))
        batch = ds.gather_transform_batch(episodes, windows, rows)
        h0, hi = _window_hiddens(encodings, offsets, windows, rows)
        with N.no_grad():
            _, x1_hat, x2_hat = transform_loss(batch, bundle, loss_cfg,
                                               Tensor(h0), Tensor(hi))
            logits1 = M.classifier_forward(bundle["classifier"], x1_hat).data
            logits2 = M.classifier_forward(bundle["classifier"], x2_hat).data
        hits1 += int((logits1.argmax(axis=1) == batch["a1"]).sum())
        hits2 += int((logits2.argmax(axis=1) == batch["a2"]).sum())
        mae1 += float(np.abs(x1_hat.data - batch["xt1"]).mean()) * len(batch["a1"])
        mae2 += float(np.abs(x2_hat.data - batch["xt2"]).mean()) * len(batch["a2"])
    n = len(windows)
    return {"x1_label": hits1 / n, "x1_mae": mae1 / n,
            "x2_label": hits2 / n, "x2_mae": mae2 / n, "windows": n}


def eval_value_heads(bundle: ModelBundle, episodes) -> dict:
    """Held-out accuracies: V two transforms ahead, permissibility, done."""
    windows = ds.transform_windows(episodes, success_only=False)
    encodings, offsets = encode_all_frames(bundle, episodes)
    masks = ds.replay_legal_masks(episodes)
    samples = ds.value_samples(episodes, masks)
    a_count = bundle.action_count

    v_hits = v_total = 0
    for s in range(0, len(windows), 128):
        rows = range(s, min(s + 128, len(windows)))
        batch = ds.gather_transform_batch(episodes, windows, rows)
        h0, hi = _window_hiddens(encodings, offsets, windows, rows)
        a1 = M.one_hot(batch["a1"], a_count)
        a2 = M.one_hot(batch["a2"], a_count)
        with N.no_grad():
            h1 = M.transform_forward(bundle["transform"], Tensor(h0), Tensor(hi), a1)
            h2 = M.transform_forward(bundle["transform"], Tensor(h0), h1, a2)
            v = N.sigmoid_np(M.value_forward(bundle["value"], h2).data).reshape(-1)
        v_hits += int(((v >= 0.5) == (batch["success"] >= 0.5)).sum())
        v_total += len(rows)

    rows = np.arange(len(samples["episode"]))
    p_hits = p_total = f_hits = f_total = 0
    for s in range(0, len(rows), 256):
        part = rows[s:s + 256]
        eps_idx = samples["episode"][part]
        frames = samples["frame"][part]
        flat = np.array([offsets[int(e)] + int(i) for e, i in zip(eps_idx, frames)])
        h0 = Tensor(encodings[[offsets[int(e)] for e in eps_idx]])
        hi = Tensor(encodings[flat])
        a_vec = M.one_hot(samples["action"][part], a_count, root_slot=True)
        with N.no_grad():
            p = N.sigmoid_np(M.pair_head_forward(bundle["perm"], h0, hi, a_vec).data)
            f = N.sigmoid_np(M.pair_head_forward(bundle["done"], h0, hi, a_vec).data)
        legal = samples["legal_mask"][part]
        p_hits += int(((p >= 0.5) == (legal >= 0.5)).sum())
        p_total += legal.size
        real = samples["action"][part] != ds.ROOT_ACTION
        f_pred = (f.reshape(-1) >= 0.5)
        f_hits += int((f_pred[real] == (samples["done"][part][real] >= 0.5)).sum())
        f_total += int(real.sum())

    return {"v_acc": v_hits / max(v_total, 1),
            "p_acc": p_hits / max(p_total, 1),
            "f_acc": f_hits / max(f_total, 1)}


# --------------------------------------------------------------------------
# reports


REPORT_KEYS = ("stage", "iterations", "seed", "x1_label", "x1_mae",
               "x2_label", "x2_mae", "v_acc", "p_acc", "f_acc")


def write_report(path, metrics: dict) -> None:
    out = {k: metrics.get(k) for k in REPORT_KEYS}
    out.update({k: v for k, v in metrics.items()
                if k not in out and k != "curve"})
    Path(path).write_text(json.dumps(out, indent=2) + "\n")


def write_curve(path, curve) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iteration", "loss", "val_metric"])
        for row in curve:
            w.writerow(row)
