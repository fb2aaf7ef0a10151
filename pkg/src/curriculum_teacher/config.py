"""Experiment configuration as a flat ``section.key = value`` text file.

Example::

    # desk-scale run
    data.source = synthetic
    data.spread = 0.8
    teacher.kind = ddpg
    ddpg.gamma = 0.95
    experiment.iterations = 300

Unknown keys are rejected. Values are coerced to the type of the default.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .curriculum import MODES
from .exceptions import ConfigurationError
from .student import StudentConfig
from .teacher_ddpg import DdpgConfig
from .teacher_dqn import DqnConfig

EXPERIMENT_KINDS = ("train", "baseline_batchwise", "baseline_curriculum", "constrain", "perturb",
                    "transfer", "slow_lr")


@dataclass
class DataConfig:
    source: str = "synthetic"  # synthetic | csv
    csv_path: str = ""
    label_column: str = "label"
    categorical: str = ""  # comma-separated column names to one-hot
    n_classes: int = 4
    n_per_class: int = 500
    dim: int = 8
    spread: float = 0.8
    train_fraction: float = 0.6
    validation_fraction: float = 0.2
    test_fraction: float = 0.2
    balance_train: bool = True


@dataclass
class CurriculumConfig:
    scorer: str = "mahalanobis"  # mahalanobis | cosine
    use_dae: bool = True
    n_batches: int = 100
    mode: str = "disjoint"
    latent_dim: int = 4
    noise: float = 0.2
    epochs: int = 30
    learning_rate: float = 0.01


@dataclass
class TeacherConfig:
    kind: str = "ddpg"  # ddpg | dqn | none


@dataclass
class ExperimentSection:
    kind: str = "train"
    n_students: int = 10
    iterations: int = 100
    batch_size: int = 32
    select_on: str = "test"  # test | validation
    log_every: int = 1
    perturb_sigma: float = 0.1
    teacher_checkpoint: str = ""
    constrained: bool = False
    lr_divisor: float = 10.0


@dataclass
class SeedConfig:
    global_: int = 0
    student: int = -1  # -1: derived from the global seed
    teacher: int = -1
    data: int = -1

    def resolve(self, name):
        value = getattr(self, name)
        if value >= 0:
            return value
        offset = ("student", "teacher", "data").index(name) + 1
        return int(np.random.SeedSequence([self.global_, offset]).generate_state(1)[0] % (2**31))


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    student: StudentConfig = field(default_factory=StudentConfig)
    teacher: TeacherConfig = field(default_factory=TeacherConfig)
    ddpg: DdpgConfig = field(default_factory=DdpgConfig)
    dqn: DqnConfig = field(default_factory=DqnConfig)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    seeds: SeedConfig = field(default_factory=SeedConfig)
    output: str = "runs/default"

    def validate(self):
        if self.data.source not in ("synthetic", "csv"):
            raise ConfigurationError(f"data.source must be synthetic or csv, got {self.data.source!r}")
        if self.data.source == "csv" and not self.data.csv_path:
            raise ConfigurationError("data.source = csv needs data.csv_path")
        d = self.data
        if abs(d.train_fraction + d.validation_fraction + d.test_fraction - 1.0) > 1e-9:
            raise ConfigurationError("data split fractions must sum to 1")
        if self.curriculum.mode not in MODES:
            raise ConfigurationError(f"curriculum.mode must be one of {MODES}")
        if self.curriculum.scorer not in ("mahalanobis", "cosine"):
            raise ConfigurationError("curriculum.scorer must be mahalanobis or cosine")
        if self.teacher.kind not in ("ddpg", "dqn", "none"):
            raise ConfigurationError("teacher.kind must be ddpg, dqn or none")
        if self.experiment.kind not in EXPERIMENT_KINDS:
            raise ConfigurationError(f"experiment.kind must be one of {EXPERIMENT_KINDS}")
        if self.experiment.select_on not in ("test", "validation"):
            raise ConfigurationError("experiment.select_on must be test or validation")
        if self.experiment.log_every < 1:
            raise ConfigurationError("experiment.log_every must be >= 1")
        return self


def _key(name):
    return "global" if name == "global_" else name


def to_flat(config):
    """``{"section.key": value}`` for every field."""
    out = {}
    for f in fields(config):
        value = getattr(config, f.name)
        if hasattr(value, "__dataclass_fields__"):
            for sub in fields(value):
                out[f"{f.name}.{_key(sub.name)}"] = getattr(value, sub.name)
        else:
            out[f.name] = value
    return out


def _coerce(raw, default):
    if isinstance(default, bool):
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(float(raw)) if raw.strip().lower() not in ("none", "") else 0
    if isinstance(default, float):
        return float(raw)
    return raw.strip()


def apply_overrides(config, pairs):
    """Return a copy of ``config`` with dotted-key string values applied."""
    sections = {f.name: getattr(config, f.name) for f in fields(config)}
    changes = {}
    for key, raw in pairs.items():
        if "." not in key:
            if key != "output":
                raise ConfigurationError(f"unknown config key {key!r}")
            changes["output"] = str(raw).strip()
            continue
        section, name = key.split(".", 1)
        attr = "global_" if name == "global" else name
        if section not in sections or not hasattr(sections[section], "__dataclass_fields__") \
                or attr not in {f.name for f in fields(sections[section])}:
            raise ConfigurationError(f"unknown config key {key!r}")
        current = changes.get(section, sections[section])
        value = _coerce(str(raw), getattr(current, attr))
        changes[section] = replace(current, **{attr: value})
    return replace(config, **changes)


def parse_text(text):
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def load_config(path=None, overrides=None):
    config = ExperimentConfig()
    if path:
        with open(path) as fh:
            config = apply_overrides(config, parse_text(fh.read()))
    if overrides:
        config = apply_overrides(config, overrides)
    return config.validate()


def dump_config(config):
    return "".join(f"{k} = {v}\n" for k, v in to_flat(config).items())


def config_hash(config):
    payload = json.dumps(to_flat(config), sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def as_dict(config):
    return asdict(config)
