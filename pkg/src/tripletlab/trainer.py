"""Training orchestration: episodes of M DML iterations, validation-driven
rewards, and the per-episode PMF adjustment loop.

One run = one model trained under one sampler kind. For the adaptive kind
the loop is: train M iterations under the current PMF, evaluate, reward the
previous adjustment with the sign of the validation-score change, update
the policy, sample the next adjustment, apply it. Static kinds share the
identical loop minus the policy machinery, which is what makes controlled
comparisons and the reduction test possible.

RNG discipline: independent child streams (model init, batches, negatives,
policy init, policy actions, metric seed) are spawned from the run seed so
that, e.g., policy sampling does not perturb batch composition between
otherwise identical runs. Dataset generation and the validation split
derive from data.seed instead, so different run seeds share data.
"""

from __future__ import annotations

import json
import time
import warnings
from pathlib import Path

import numpy as np

from .config import RunConfig, resolved_lines
from .data import LabeledDataset, generate_synthetic, load_dataset
from .geometry import EmbeddingBatch, pairwise_distances
from .metrics import evaluate, eval_score, update_tracks, RunningTracks
from .model import (
    Adam,
    EmbeddingModel,
    backward,
    margin_boundary_grads,
    triplet_losses,
)
from .rl import (
    PolicyNetwork,
    PolicyUpdater,
    Transition,
    build_state,
    compute_reward,
    multipliers_from_trits,
    sample_action,
    state_dim,
)
from .samplers import (
    PMF_SAMPLER_KINDS,
    SamplingPMF,
    apply_action,
    curriculum_pmf,
    init_pmf,
    require_valid_kind,
    sample_negative_adaptive,
    sample_negative_distweighted,
    sample_negative_random,
    sample_negative_semihard,
)

CSV_HEADER = "episode,r1,r2,r4,nmi,intra,inter,reward"


def split_validation(
    dataset: LabeledDataset, fraction: float, mode: str, seed
) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint (train indices, validation indices).

    per-class holds out the fraction inside every class (at least one
    sample, leaving at least two for training); by-class holds out whole
    classes.
    """
    if not 0.0 < fraction <= 0.5:
        raise ValueError(f"validation fraction must lie in (0, 0.5], got {fraction}")
    rng = np.random.default_rng(seed)
    if mode == "per-class":
        train_parts, val_parts = [], []
        for label, idx in sorted(dataset.class_index.items()):
            if idx.size < 2:
                raise ValueError(f"class {label} has fewer than 2 samples; cannot split per-class")
            n_val = max(1, int(round(fraction * idx.size)))
            if idx.size - n_val < 2:
                raise ValueError(
                    f"class {label} has {idx.size} samples; the split would leave "
                    f"fewer than 2 for training"
                )
            perm = rng.permutation(idx.size)
            val_parts.append(idx[perm[:n_val]])
            train_parts.append(idx[perm[n_val:]])
        return np.sort(np.concatenate(train_parts)), np.sort(np.concatenate(val_parts))
    if mode == "by-class":
        n_classes = dataset.n_classes
        n_val = max(1, int(round(fraction * n_classes)))
        if n_classes - n_val < 2:
            raise ValueError("by-class split would leave fewer than 2 training classes")
        perm = rng.permutation(n_classes)
        val_classes = perm[:n_val]
        val_mask = np.isin(dataset.labels, val_classes)
        return np.where(~val_mask)[0], np.where(val_mask)[0]
    raise ValueError(f"unknown split mode {mode!r}; valid modes: per-class, by-class")


def _load_pmf_file(path, cfg: RunConfig) -> SamplingPMF:
    payload = json.loads(Path(path).read_text())
    if isinstance(payload, dict) and "p" in payload:
        lo = payload.get("lambda_min", cfg.pmf.lambda_min)
        hi = payload.get("lambda_max", cfg.pmf.lambda_max)
        return SamplingPMF(lo, hi, np.asarray(payload["p"], dtype=np.float64))
    raise ValueError(f"{path}: not a PMF checkpoint (expected an object with a 'p' array)")


class TrainLoop:
    """Mutable state of one training run; see train() for the entry point."""

    def __init__(self, cfg: RunConfig, out_dir):
        require_valid_kind(cfg.sampler.kind)
        self.cfg = cfg
        self.out_dir = Path(out_dir)
        kids = np.random.SeedSequence(cfg.seed).spawn(6)
        self.rng_model = np.random.default_rng(kids[0])
        self.rng_batch = np.random.default_rng(kids[1])
        self.rng_negative = np.random.default_rng(kids[2])
        self.rng_policy_init = np.random.default_rng(kids[3])
        self.rng_policy_act = np.random.default_rng(kids[4])
        self.metric_seed = int(np.random.default_rng(kids[5]).integers(2**31))

        data_kids = np.random.SeedSequence(cfg.data.seed).spawn(2)
        if cfg.data.path:
            self.dataset = load_dataset(cfg.data.path)
        else:
            self.dataset = generate_synthetic(
                cfg.data.n_classes,
                cfg.data.per_class,
                cfg.data.input_dim,
                cfg.data.center_spread,
                cfg.data.within_std,
                seed=data_kids[0],
            )
        self.train_idx, self.val_idx = split_validation(
            self.dataset, cfg.train.val_fraction, cfg.train.split_mode, data_kids[1]
        )
        train_labels = self.dataset.labels[self.train_idx]
        self.train_class_ids = np.unique(train_labels)
        if self.train_class_ids.size < 2:
            raise ValueError("training split must contain at least 2 classes")
        self.train_index = {
            int(c): self.train_idx[train_labels == c] for c in self.train_class_ids
        }

        self.model = EmbeddingModel(
            self.dataset.input_dim, cfg.model.hidden, cfg.model.embedding_dim, self.rng_model
        )
        self.opt = Adam(lr=cfg.model.lr)
        self.beta_class = None
        if cfg.loss.kind == "margin" and cfg.loss.learnable_beta:
            self.beta_class = np.full(self.dataset.n_classes, cfg.loss.beta_margin)

        self.kind = cfg.sampler.kind
        self.pmf = None
        self.policy = None
        self.updater = None
        self.frozen_policy = False
        if self.kind in PMF_SAMPLER_KINDS:
            self.pmf = init_pmf(cfg.pmf.lambda_min, cfg.pmf.lambda_max, cfg.pmf.k, cfg.pmf.init)
        if self.kind == "pads":
            self._setup_policy()
        self.tracks = RunningTracks(cfg.train.running_averages, cfg.train.history)
        self.fallbacks = 0

    def _setup_policy(self):
        cfg = self.cfg
        mode = cfg.transfer.mode
        if mode == "fixed-final-pmf":
            # a frozen PMF needs no policy at all; empty path means "freeze the init PMF"
            if cfg.transfer.pmf_path:
                self.pmf = _load_pmf_file(cfg.transfer.pmf_path, cfg)
            return
        if cfg.rl.algorithm == "frozen-identity":
            # diagnostic mode: the maintain action every episode, no updates
            self.frozen_policy = True
            return
        sdim = state_dim(cfg.pmf.k, self.tracks_template(), cfg.rl.state_recalls)
        if mode == "fixed-policy":
            payload = json.loads(Path(cfg.transfer.policy_path).read_text())
            self.policy = PolicyNetwork.from_dict(payload)
            if self.policy.k_bins != cfg.pmf.k:
                raise ValueError(
                    f"transferred policy has {self.policy.k_bins} heads, config wants {cfg.pmf.k}"
                )
            if self.policy.state_dim != sdim:
                raise ValueError(
                    f"transferred policy expects state dim {self.policy.state_dim}, "
                    f"this config builds {sdim}"
                )
            return
        has_value = cfg.rl.algorithm in ("a2c", "ppo-a2c")
        self.policy = PolicyNetwork(
            sdim, cfg.pmf.k, has_value, self.rng_policy_init, hidden=cfg.rl.hidden
        )
        self.updater = PolicyUpdater(
            self.policy,
            cfg.rl.algorithm,
            lr=cfg.rl.lr,
            epsilon=cfg.ppo.epsilon,
            old_refresh=cfg.ppo.old_refresh,
            ema_decay=cfg.rl.ema_decay,
            value_coef=cfg.rl.value_coef,
        )

    def tracks_template(self) -> RunningTracks:
        return RunningTracks(self.cfg.train.running_averages, self.cfg.train.history)

    # ---- one DML iteration ----

    def _build_batch(self) -> np.ndarray:
        cfg = self.cfg.train
        ids = self.train_class_ids
        p = min(cfg.classes_per_batch, ids.size)
        chosen = self.rng_batch.choice(ids.size, size=p, replace=False)
        rows = []
        for ci in chosen:
            idx = self.train_index[int(ids[ci])]
            if idx.size >= cfg.samples_per_class:
                pick = self.rng_batch.choice(idx.size, size=cfg.samples_per_class, replace=False)
            else:
                pick = self.rng_batch.integers(0, idx.size, size=cfg.samples_per_class)
            rows.append(idx[pick])
        return np.concatenate(rows)

    def _pick_negative(self, i: int, pos: int, labels: np.ndarray, dist: np.ndarray) -> int:
        cfg = self.cfg
        adaptive = self.kind in PMF_SAMPLER_KINDS
        if adaptive and cfg.sampler.self_reg:
            cand = np.delete(np.arange(labels.size), i)
        else:
            cand = np.where(labels != labels[i])[0]
        d_an = dist[i, cand]
        if self.kind == "random":
            return sample_negative_random(cand, self.rng_negative)
        if self.kind == "semihard":
            return sample_negative_semihard(dist[i, pos], cand, d_an)
        if self.kind == "distweighted":
            clip = cfg.sampler.clip_lambda if cfg.sampler.clip_lambda > 0 else None
            return sample_negative_distweighted(
                cand, d_an, cfg.model.embedding_dim, self.rng_negative, clip
            )
        neg, fell_back = sample_negative_adaptive(self.pmf, cand, d_an, self.rng_negative)
        self.fallbacks += int(fell_back)
        return neg

    def _train_step(self):
        cfg = self.cfg
        batch_rows = self._build_batch()
        feats = self.dataset.features[batch_rows]
        labels = self.dataset.labels[batch_rows]
        emb, cache = self.model.forward(feats)
        ebatch = EmbeddingBatch(emb, labels)
        dist = pairwise_distances(ebatch)
        triplets = []
        for i in range(labels.size):
            same = np.where(labels == labels[i])[0]
            same = same[same != i]
            pos = int(same[self.rng_batch.integers(same.size)])
            neg = self._pick_negative(i, pos, labels, dist)
            triplets.append((i, pos, neg))
        triplets = np.asarray(triplets)
        boundaries = None
        if self.beta_class is not None:
            boundaries = self.beta_class[labels[triplets[:, 0]]]
        losses = triplet_losses(emb, triplets, cfg.loss, boundaries)
        if not np.all(np.isfinite(losses)):
            raise RuntimeError("non-finite loss; aborting run")
        grad = backward(self.model, cache, triplets, cfg.loss, boundaries)
        self.model.set_params(self.opt.step(self.model.get_params(), grad))
        if self.beta_class is not None:
            per_triplet = margin_boundary_grads(emb, triplets, cfg.loss, boundaries)
            class_grad = np.zeros_like(self.beta_class)
            np.add.at(class_grad, labels[triplets[:, 0]], per_triplet)
            self.beta_class = np.maximum(self.beta_class - cfg.loss.beta_lr * class_grad, 1e-3)

    # ---- evaluation ----

    def _evaluate(self):
        emb, _ = self.model.forward(self.dataset.features[self.val_idx])
        batch = EmbeddingBatch(emb, self.dataset.labels[self.val_idx])
        return evaluate(batch, ks=(1, 2, 4), kmeans_seed=self.metric_seed)

    # ---- full run ----

    def run(self) -> dict:
        cfg = self.cfg
        started = time.time()
        n_episodes = cfg.n_episodes
        leftover = cfg.train.total_iterations - n_episodes * cfg.train.m
        if leftover:
            warnings.warn(
                f"total_iterations not a multiple of m; dropping the last {leftover} iterations",
                stacklevel=2,
            )
        report = self._evaluate()
        e_prev = eval_score(report)
        update_tracks(self.tracks, report)

        csv_rows = [CSV_HEADER]
        pmf_lines = []
        transition_lines = []
        pending = None  # (state, trits, logprob, value) awaiting its reward
        adjusts = self.kind == "pads" and (self.policy is not None or self.frozen_policy)

        for ep in range(1, n_episodes + 1):
            if self.kind in ("curriculum-linear", "curriculum-nonlinear"):
                progress = (ep - 1) * cfg.train.m / cfg.train.total_iterations
                self.pmf = curriculum_pmf(
                    progress,
                    self.kind.removeprefix("curriculum-"),
                    cfg.pmf.lambda_min,
                    cfg.pmf.lambda_max,
                    cfg.pmf.k,
                    dim=cfg.model.embedding_dim,
                )
            if self.pmf is not None:
                pmf_lines.append(json.dumps(self.pmf.snapshot(ep)))
            for _ in range(cfg.train.m):
                self._train_step()
            report = self._evaluate()
            e_now = eval_score(report)
            reward = compute_reward(e_now, e_prev)
            e_prev = e_now
            update_tracks(self.tracks, report)
            row = report.as_row()
            csv_rows.append(
                f"{ep},{row['r1']!r},{row['r2']!r},{row['r4']!r},"
                f"{row['nmi']!r},{row['intra']!r},{row['inter']!r},{reward}"
            )
            if adjusts:
                if pending is not None:
                    tr = Transition(ep, pending[0], pending[1], pending[2], reward, pending[3])
                    if self.updater is not None:
                        self.updater.update([tr])
                    if cfg.train.log_transitions:
                        transition_lines.append(tr.to_json())
                if self.frozen_policy:
                    continue  # identity action: the PMF stays exactly as it is
                progress = ep * cfg.train.m / cfg.train.total_iterations
                state = build_state(self.tracks, self.pmf.p, min(progress, 1.0), cfg.rl.state_recalls)
                cache = self.policy.forward(state)
                trits, logprob = sample_action(cache.logits, self.rng_policy_act)
                pending = (state, trits, logprob, cache.value)
                mult = multipliers_from_trits(trits, cfg.pmf.alpha, cfg.pmf.beta)
                self.pmf = apply_action(self.pmf, mult)

        return self._write_artifacts(csv_rows, pmf_lines, transition_lines, started, report)

    def _write_artifacts(self, csv_rows, pmf_lines, transition_lines, started, final_report) -> dict:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / "metrics.csv").write_text("\n".join(csv_rows) + "\n")
        (self.out_dir / "config.resolved").write_text("\n".join(resolved_lines(self.cfg)) + "\n")
        if pmf_lines:
            (self.out_dir / "pmf.jsonl").write_text("\n".join(pmf_lines) + "\n")
        if transition_lines:
            (self.out_dir / "transitions.jsonl").write_text("\n".join(transition_lines) + "\n")
        (self.out_dir / "model.json").write_text(json.dumps(self.model.to_dict()))
        if self.policy is not None:
            (self.out_dir / "policy.json").write_text(json.dumps(self.policy.to_dict()))
        if self.pmf is not None:
            payload = {
                "lambda_min": self.pmf.lambda_min,
                "lambda_max": self.pmf.lambda_max,
                "p": self.pmf.p.tolist(),
            }
            (self.out_dir / "final_pmf.json").write_text(json.dumps(payload))
        final = final_report.as_row()
        summary = {
            "run_dir": str(self.out_dir),
            "episodes": self.cfg.n_episodes,
            "final": final,
            "adaptive_fallbacks": self.fallbacks,
            "seconds": round(time.time() - started, 3),
        }
        (self.out_dir / "summary.json").write_text(json.dumps(summary, indent=2))
        return summary


def train(cfg: RunConfig, out_dir) -> dict:
    """Run one full training; returns the summary dict (artifacts on disk)."""
    return TrainLoop(cfg, out_dir).run()
