"""Run configuration: flat dotted-key files, typed schema, validation.

A config file is plain `key = value` lines (# comments allowed). Every
hyperparameter is a named key with a default; unknown keys are rejected.
The resolved form written next to run artifacts echoes every key in sorted
order and reproduces the run exactly when fed back in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import LossConfig
from .rl import RL_ALGORITHMS
from .samplers import SAMPLER_KINDS, init_pmf

#: accepted rl.algorithm values; frozen-identity is a diagnostic mode that
#: always emits the maintain action and never updates (reduction testing)
ALGORITHM_CHOICES = RL_ALGORITHMS + ("frozen-identity",)

SPLIT_MODES = ("per-class", "by-class")
TRANSFER_MODES = ("none", "fixed-policy", "fixed-final-pmf")


class ConfigError(ValueError):
    """Carries every validation failure found, one per line."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {e}" for e in self.errors))


@dataclass(frozen=True)
class DataConfig:
    path: str = ""
    n_classes: int = 8
    per_class: int = 200
    input_dim: int = 20
    center_spread: float = 1.0
    within_std: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple = (64, 64)
    embedding_dim: int = 32
    lr: float = 1e-3


@dataclass(frozen=True)
class SamplerConfig:
    kind: str = "pads"
    clip_lambda: float = 0.0  # 0 means automatic cap
    self_reg: bool = False


@dataclass(frozen=True)
class PMFConfig:
    lambda_min: float = 0.1
    lambda_max: float = 1.4
    k: int = 30
    init: str = "uniform"
    alpha: float = 0.8
    beta: float = 1.25


@dataclass(frozen=True)
class RLConfig:
    algorithm: str = "ppo-a2c"
    lr: float = 1e-4
    ema_decay: float = 0.9
    value_coef: float = 0.5
    hidden: int = 128
    state_recalls: tuple = (1, 2, 4)


@dataclass(frozen=True)
class PPOConfig:
    epsilon: float = 0.2
    old_refresh: int = 5


@dataclass(frozen=True)
class TrainConfig:
    m: int = 30
    total_iterations: int = 4500
    classes_per_batch: int = 4
    samples_per_class: int = 4
    val_fraction: float = 0.15
    split_mode: str = "per-class"
    running_averages: tuple = (2, 8, 16, 32)
    history: int = 20
    log_transitions: bool = True


@dataclass(frozen=True)
class TransferConfig:
    mode: str = "none"
    policy_path: str = ""
    pmf_path: str = ""


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    data: DataConfig = DataConfig()
    model: ModelConfig = ModelConfig()
    loss: LossConfig = LossConfig()
    sampler: SamplerConfig = SamplerConfig()
    pmf: PMFConfig = PMFConfig()
    rl: RLConfig = RLConfig()
    ppo: PPOConfig = PPOConfig()
    train: TrainConfig = TrainConfig()
    transfer: TransferConfig = TransferConfig()

    @property
    def n_episodes(self) -> int:
        return self.train.total_iterations // self.train.m


# key -> (type tag, default). Type tags: int, float, str, bool, ints.
SCHEMA = {
    "seed": ("int", 0),
    "data.path": ("str", ""),
    "data.n_classes": ("int", 8),
    "data.per_class": ("int", 200),
    "data.input_dim": ("int", 20),
    "data.center_spread": ("float", 1.0),
    "data.within_std": ("float", 1.0),
    "data.seed": ("int", 0),
    "model.hidden": ("ints", (64, 64)),
    "model.embedding_dim": ("int", 32),
    "model.lr": ("float", 1e-3),
    "loss.kind": ("str", "triplet"),
    "loss.gamma": ("float", 0.2),
    "loss.beta_margin": ("float", 1.2),
    "loss.learnable_beta": ("bool", False),
    "loss.beta_lr": ("float", 5e-4),
    "sampler.kind": ("str", "pads"),
    "sampler.clip_lambda": ("float", 0.0),
    "sampler.self_reg": ("bool", False),
    "pmf.lambda_min": ("float", 0.1),
    "pmf.lambda_max": ("float", 1.4),
    "pmf.k": ("int", 30),
    "pmf.init": ("str", "uniform"),
    "pmf.alpha": ("float", 0.8),
    "pmf.beta": ("float", 1.25),
    "rl.algorithm": ("str", "ppo-a2c"),
    "rl.lr": ("float", 1e-4),
    "rl.ema_decay": ("float", 0.9),
    "rl.value_coef": ("float", 0.5),
    "rl.hidden": ("int", 128),
    "rl.state_recalls": ("ints", (1, 2, 4)),
    "ppo.epsilon": ("float", 0.2),
    "ppo.old_refresh": ("int", 5),
    "train.m": ("int", 30),
    "train.total_iterations": ("int", 4500),
    "train.classes_per_batch": ("int", 4),
    "train.samples_per_class": ("int", 4),
    "train.val_fraction": ("float", 0.15),
    "train.split_mode": ("str", "per-class"),
    "train.running_averages": ("ints", (2, 8, 16, 32)),
    "train.history": ("int", 20),
    "train.log_transitions": ("bool", True),
    "transfer.mode": ("str", "none"),
    "transfer.policy_path": ("str", ""),
    "transfer.pmf_path": ("str", ""),
}


def _parse_value(tag: str, raw: str):
    raw = raw.strip()
    if tag == "int":
        return int(raw)
    if tag == "float":
        return float(raw)
    if tag == "str":
        return raw
    if tag == "bool":
        lowered = raw.lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if tag == "ints":
        if not raw:
            return ()
        return tuple(int(x) for x in raw.split(","))
    raise AssertionError(f"unhandled type tag {tag}")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(str(x) for x in value)
    return str(value)


def parse_kv_lines(lines, source: str = "<config>") -> dict:
    """key=value lines -> raw string dict; blank lines and # comments skipped."""
    out = {}
    for lineno, line in enumerate(lines, start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError([f"{source}:{lineno}: expected key=value, got {stripped!r}"])
        key, value = stripped.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def parse_kv_file(path) -> dict:
    with open(path) as fh:
        return parse_kv_lines(fh, source=str(path))


def _validate(values: dict) -> tuple[list, list]:
    errors, warnings_ = [], []

    def need(cond: bool, msg: str):
        if not cond:
            errors.append(msg)

    need(values["loss.kind"] in ("triplet", "margin"), "loss.kind must be triplet or margin")
    need(values["loss.gamma"] > 0, "loss.gamma must be positive")
    need(values["loss.beta_margin"] > 0, "loss.beta_margin must be positive")
    need(values["loss.beta_lr"] >= 0, "loss.beta_lr must be nonnegative")
    if values["sampler.kind"] not in SAMPLER_KINDS:
        errors.append(
            f"unknown sampler kind {values['sampler.kind']!r}; "
            f"valid kinds: {', '.join(SAMPLER_KINDS)}"
        )
    if values["rl.algorithm"] not in ALGORITHM_CHOICES:
        errors.append(
            f"unknown rl algorithm {values['rl.algorithm']!r}; "
            f"valid algorithms: {', '.join(ALGORITHM_CHOICES)}"
        )
    need(values["sampler.clip_lambda"] >= 0, "sampler.clip_lambda must be nonnegative (0 = auto)")
    need(
        0.0 <= values["pmf.lambda_min"] < values["pmf.lambda_max"] <= 2.0,
        "pmf interval must satisfy 0 <= lambda_min < lambda_max <= 2",
    )
    need(values["pmf.k"] >= 2, "pmf.k must be >= 2")
    need(0.0 < values["pmf.alpha"] < 1.0, "pmf.alpha must lie in (0, 1)")
    need(values["pmf.beta"] > 1.0, "pmf.beta must exceed 1")
    if not errors:
        try:
            init_pmf(values["pmf.lambda_min"], values["pmf.lambda_max"], values["pmf.k"], values["pmf.init"])
        except ValueError as exc:
            errors.append(f"pmf.init: {exc}")
    if (
        0.0 < values["pmf.alpha"] < 1.0
        and values["pmf.beta"] > 1.0
        and abs(0.5 * (values["pmf.alpha"] + values["pmf.beta"]) - 1.0) > 1e-12
    ):
        warnings_.append(
            f"action multipliers average {(values['pmf.alpha'] + values['pmf.beta']) / 2:g}, not 1; "
            "allowed, but updates drift the PMF even under balanced actions"
        )
    need(values["model.embedding_dim"] >= 2, "model.embedding_dim must be >= 2")
    if values["sampler.kind"] in ("distweighted", "curriculum-nonlinear"):
        need(
            values["model.embedding_dim"] >= 3,
            f"sampler.kind={values['sampler.kind']} needs model.embedding_dim >= 3 "
            "(the distance density is undefined below)",
        )
    need(
        len(values["model.hidden"]) >= 1 and all(h >= 1 for h in values["model.hidden"]),
        "model.hidden must list positive layer widths",
    )
    need(values["model.lr"] >= 0, "model.lr must be nonnegative")
    need(values["rl.lr"] >= 0, "rl.lr must be nonnegative")
    need(0.0 <= values["rl.ema_decay"] < 1.0, "rl.ema_decay must lie in [0, 1)")
    need(values["rl.value_coef"] >= 0, "rl.value_coef must be nonnegative")
    need(values["rl.hidden"] >= 1, "rl.hidden must be >= 1")
    need(
        len(values["rl.state_recalls"]) >= 1
        and set(values["rl.state_recalls"]) <= {1, 2, 4},
        "rl.state_recalls must be a nonempty subset of 1,2,4",
    )
    need(values["ppo.epsilon"] > 0, "ppo.epsilon must be positive")
    need(values["ppo.old_refresh"] >= 1, "ppo.old_refresh must be >= 1")
    need(values["train.m"] >= 1, "train.m must be >= 1")
    need(
        values["train.total_iterations"] >= values["train.m"],
        "train.total_iterations must be >= train.m",
    )
    need(values["train.classes_per_batch"] >= 2, "train.classes_per_batch must be >= 2")
    need(values["train.samples_per_class"] >= 2, "train.samples_per_class must be >= 2")
    need(
        0.0 < values["train.val_fraction"] <= 0.5,
        "train.val_fraction must lie in (0, 0.5]",
    )
    need(
        values["train.split_mode"] in SPLIT_MODES,
        f"train.split_mode must be one of: {', '.join(SPLIT_MODES)}",
    )
    need(
        len(values["train.running_averages"]) >= 1
        and all(l >= 1 for l in values["train.running_averages"]),
        "train.running_averages must list positive lengths",
    )
    need(values["train.history"] >= 1, "train.history must be >= 1")
    if not values["data.path"]:
        need(values["data.n_classes"] >= 2, "data.n_classes must be >= 2 for synthetic data")
        need(values["data.per_class"] >= 2, "data.per_class must be >= 2")
        need(values["data.input_dim"] >= 1, "data.input_dim must be >= 1")
        need(values["data.within_std"] >= 0, "data.within_std must be nonnegative")
        need(values["data.center_spread"] > 0, "data.center_spread must be positive")
    if values["transfer.mode"] not in TRANSFER_MODES:
        errors.append(f"transfer.mode must be one of: {', '.join(TRANSFER_MODES)}")
    else:
        if values["transfer.mode"] != "none" and values["sampler.kind"] != "pads":
            errors.append("transfer modes require sampler.kind=pads")
        if values["transfer.mode"] == "fixed-policy" and not values["transfer.policy_path"]:
            errors.append("transfer.mode=fixed-policy requires transfer.policy_path")
    return errors, warnings_


def config_from_flat(flat: dict) -> tuple["RunConfig", list]:
    """Build and validate a RunConfig from raw string values.

    Raises ConfigError listing every problem at once; returns the config
    plus non-fatal lint warnings otherwise.
    """
    errors = []
    unknown = sorted(set(flat) - set(SCHEMA))
    errors.extend(f"unknown config key {k!r}" for k in unknown)
    values = {}
    for key, (tag, default) in SCHEMA.items():
        if key in flat:
            try:
                values[key] = _parse_value(tag, flat[key])
            except ValueError as exc:
                errors.append(f"{key}: {exc}")
        else:
            values[key] = default
    if errors:
        raise ConfigError(errors)
    sem_errors, warnings_ = _validate(values)
    if sem_errors:
        raise ConfigError(sem_errors)

    def section(prefix, cls, **renames):
        kwargs = {}
        for key, value in values.items():
            if key.startswith(prefix + "."):
                field_name = key[len(prefix) + 1 :]
                kwargs[renames.get(field_name, field_name)] = value
        return cls(**kwargs)

    cfg = RunConfig(
        seed=values["seed"],
        data=section("data", DataConfig),
        model=section("model", ModelConfig),
        loss=section("loss", LossConfig),
        sampler=section("sampler", SamplerConfig),
        pmf=section("pmf", PMFConfig),
        rl=section("rl", RLConfig),
        ppo=section("ppo", PPOConfig),
        train=section("train", TrainConfig),
        transfer=section("transfer", TransferConfig),
    )
    return cfg, warnings_


def config_to_flat(cfg: RunConfig) -> dict:
    sections = {
        "data": cfg.data,
        "model": cfg.model,
        "loss": cfg.loss,
        "sampler": cfg.sampler,
        "pmf": cfg.pmf,
        "rl": cfg.rl,
        "ppo": cfg.ppo,
        "train": cfg.train,
        "transfer": cfg.transfer,
    }
    flat = {"seed": _format_value(cfg.seed)}
    for prefix, obj in sections.items():
        for key in SCHEMA:
            if key.startswith(prefix + "."):
                flat[key] = _format_value(getattr(obj, key[len(prefix) + 1 :]))
    return flat


def resolved_lines(cfg: RunConfig) -> list:
    """Sorted key=value echo of the full effective configuration."""
    flat = config_to_flat(cfg)
    return [f"{k}={flat[k]}" for k in sorted(flat)]


def load_config(path=None, overrides: dict | None = None) -> tuple[RunConfig, list]:
    """File (optional) + override dict -> validated RunConfig."""
    flat = parse_kv_file(path) if path else {}
    flat.update(overrides or {})
    return config_from_flat(flat)
