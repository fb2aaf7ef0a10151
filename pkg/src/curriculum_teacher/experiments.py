"""Experiment runners: teacher training, baselines, and the policy analyses.

Every runner returns a :class:`RunLog` whose records are plain dicts, so a
run can be written as JSON lines and re-read without loss.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import teacher_ddpg, teacher_dqn
from .config import config_hash
from .curriculum import CurriculumBuilder
from .data import SplitSpec, load_csv, split, standardize, synth_blobs
from .exceptions import ConfigurationError, TransferError
from .student import StudentSession, init_student, student_to_dict

log = logging.getLogger(__name__)


@dataclass
class RunLog:
    records: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    config_hash: str = ""

    def lines(self):
        out = [json.dumps({**r, "config_hash": self.config_hash}, sort_keys=True)
               for r in self.records]
        out.append(json.dumps({"record": "summary", **self.summary,
                               "config_hash": self.config_hash}, sort_keys=True))
        return out

    def write(self, path):
        Path(path).write_text("\n".join(self.lines()) + "\n")

    @classmethod
    def read(cls, path):
        records, summary, digest = [], {}, ""
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            digest = rec.pop("config_hash", digest)
            if rec.get("record") == "summary":
                rec.pop("record")
                summary = rec
            else:
                records.append(rec)
        return cls(records, summary, digest)


@dataclass
class RunResult:
    log: RunLog
    artifacts: dict = field(default_factory=dict)
    teacher: object = None


# -- data and curriculum ------------------------------------------------------

def load_dataset(cfg):
    d = cfg.data
    if d.source == "csv":
        categorical = [c.strip() for c in d.categorical.split(",") if c.strip()]
        return load_csv(d.csv_path, d.label_column, categorical)
    return synth_blobs(d.n_classes, d.n_per_class, d.dim, d.spread, seed=cfg.seeds.resolve("data"))


def prepare_splits(cfg, dataset=None):
    dataset = dataset if dataset is not None else load_dataset(cfg)
    spec = SplitSpec(cfg.data.train_fraction, cfg.data.validation_fraction,
                     cfg.data.test_fraction, cfg.data.balance_train)
    splits, _ = standardize(split(dataset, spec, seed=cfg.seeds.resolve("data")))
    return splits


def build_plan(cfg, splits):
    c = cfg.curriculum
    builder = CurriculumBuilder(scorer=c.scorer, use_dae=c.use_dae, n_batches=c.n_batches,
                                mode=c.mode, latent_dim=c.latent_dim, noise=c.noise,
                                epochs=c.epochs, learning_rate=c.learning_rate,
                                random_state=cfg.seeds.resolve("data"))
    return builder.fit(splits.train.features).plan_


def student_config(cfg):
    return replace(cfg.student, seed=cfg.seeds.resolve("student"))


def make_teacher(cfg, state_dim, n_batches):
    seed = cfg.seeds.resolve("teacher")
    if cfg.teacher.kind == "ddpg":
        return teacher_ddpg.DdpgTeacher.create(state_dim, replace(cfg.ddpg, seed=seed))
    if cfg.teacher.kind == "dqn":
        return teacher_dqn.DqnTeacher.create(state_dim, replace(cfg.dqn, seed=seed, n_actions=n_batches))
    raise ConfigurationError("this experiment needs teacher.kind = ddpg or dqn")


def _episode_fn(teacher):
    return teacher_ddpg.run_episode if teacher.kind == "ddpg" else teacher_dqn.run_episode_dqn


def _train_fn(teacher):
    return teacher_ddpg.train_teacher if teacher.kind == "ddpg" else teacher_dqn.train_teacher_dqn


def teacher_to_dict(teacher):
    mod = teacher_ddpg if teacher.kind == "ddpg" else teacher_dqn
    return mod.teacher_to_dict(teacher)


def load_teacher(path):
    data = json.loads(Path(path).read_text())
    mod = {"ddpg": teacher_ddpg, "dqn": teacher_dqn}.get(data.get("kind"))
    if mod is None:
        raise ConfigurationError(f"{path}: unknown teacher kind {data.get('kind')!r}")
    return mod.teacher_from_dict(data), data


def save_teacher(path, teacher):
    Path(path).write_text(json.dumps(teacher_to_dict(teacher), sort_keys=True))


def _session(cfg, splits, seed, lr=None):
    scfg = replace(student_config(cfg), seed=seed)
    if lr is not None:
        scfg = replace(scfg, learning_rate=lr)
    student = init_student(scfg, splits.train.d, splits.train.n_classes)
    return StudentSession(student, splits.train, splits.validation, splits.test,
                          eval_seed=seed, select_on=cfg.experiment.select_on)


def _summary(log_or_session, **extra):
    session = getattr(log_or_session, "session", log_or_session)
    out = {"best_acc": session.best_acc, "best_iter": session.best_iter,
           "select_on": session.select_on}
    out["best_test_acc"] = session.best_acc if session.select_on == "test" else None
    out.update(extra)
    return out


# -- baselines ----------------------------------------------------------------

def baseline_batchwise(scfg, splits, batch_size, steps, seed=0, select_on="test"):
    """Uniform random mini-batches for ``steps`` SGD steps."""
    if batch_size > splits.train.n:
        raise ConfigurationError("batch_size exceeds the training-set size")
    student = init_student(scfg, splits.train.d, splits.train.n_classes)
    session = StudentSession(student, splits.train, splits.validation, splits.test,
                             eval_seed=scfg.seed, select_on=select_on)
    rng = np.random.default_rng([seed, 7])
    records = []
    for it in range(steps):
        idx = rng.choice(splits.train.n, size=batch_size, replace=False)
        step = session.step(idx, iteration=it)
        records.append({"student_id": 0, "iter": it, "center": None, "width": int(batch_size),
                        "reward": step.reward, "train_acc": step.train_acc,
                        "val_acc": step.val_acc, "test_acc": step.test_acc, "mode": "batchwise"})
    return RunLog(records, _summary(session, steps=steps))


def baseline_curriculum(scfg, splits, plan, steps, select_on="test"):
    """Present batches ``B_0 .. B_N`` in order, an equal share of ``steps`` each."""
    student = init_student(scfg, splits.train.d, splits.train.n_classes)
    session = StudentSession(student, splits.train, splits.validation, splits.test,
                             eval_seed=scfg.seed, select_on=select_on)
    records = []
    for it in range(steps):
        b = it * plan.n_batches // steps
        idx = plan.batch(b)
        step = session.step(idx, iteration=it)
        records.append({"student_id": 0, "iter": it, "action_id": int(b), "width": int(idx.size),
                        "reward": step.reward, "train_acc": step.train_acc,
                        "val_acc": step.val_acc, "test_acc": step.test_acc, "mode": "curriculum"})
    return RunLog(records, _summary(session, steps=steps, plan_mode=plan.mode))


# -- teacher experiments ------------------------------------------------------

def _thin(records, every):
    return [r for r in records if r["iter"] % every == 0]


def train_and_evaluate(cfg, splits, plan, constrained=False):
    """Train a fresh teacher, then let it drive one more student greedily."""
    scfg = student_config(cfg)
    teacher = make_teacher(cfg, scfg.state_dim, plan.n_batches)
    records = []
    on_episode = lambda ep: records.extend(_thin(ep.records, cfg.experiment.log_every))
    _train_fn(teacher)(teacher, splits, plan, cfg.experiment.n_students, cfg.experiment.iterations,
                       scfg, constrained=constrained, select_on=cfg.experiment.select_on,
                       on_episode=on_episode)
    final_id = cfg.experiment.n_students
    session = _session(cfg, splits, scfg.seed + final_id)
    final = _episode_fn(teacher)(teacher, session, plan, cfg.experiment.iterations, "greedy",
                                 constrained, student_id=final_id)
    records.extend(final.records)
    return teacher, records, final


def _teacher_for(cfg, splits, plan, constrained=False):
    path = cfg.experiment.teacher_checkpoint
    if path:
        teacher, _ = load_teacher(path)
        return teacher, []
    teacher, records, _ = train_and_evaluate(cfg, splits, plan, constrained)
    return teacher, records


def check_compatible(teacher, scfg, plan):
    if teacher.state_dim != scfg.state_dim:
        raise TransferError(
            f"teacher expects states of length {teacher.state_dim}, "
            f"student encodes {scfg.state_dim}", expected=teacher.state_dim, actual=scfg.state_dim)
    if teacher.kind == "dqn" and teacher.config.n_actions != plan.n_batches:
        raise TransferError(
            f"teacher chooses among {teacher.config.n_actions} batches, plan has {plan.n_batches}",
            expected=teacher.config.n_actions, actual=plan.n_batches)


def _greedy_action(teacher, state, n_train, width_max):
    if teacher.kind == "ddpg":
        a = teacher_ddpg.act(teacher, state, n_train=n_train, width_max=width_max)
        return a.center_index, a.width
    return int(teacher_dqn.greedy_actions(teacher, state[None, :])[0]), None


def perturbation_table(teacher, states, sigma, rng, n_train, width_max):
    rows = []
    for it, s in enumerate(states):
        c0, w0 = _greedy_action(teacher, s, n_train, width_max)
        c1, w1 = _greedy_action(teacher, teacher_ddpg.perturb_state(s, sigma, rng), n_train, width_max)
        rows.append({"iter": it, "center": c0, "width": w0,
                     "center_perturbed": c1, "width_perturbed": w1})
    return rows


def _correlation(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.size < 2 or a.std() == 0 or b.std() == 0:
        return None
    return float(np.corrcoef(a, b)[0, 1])


def run(cfg, splits=None, plan=None):
    """Dispatch on ``cfg.experiment.kind``."""
    cfg.validate()
    digest = config_hash(cfg)
    kind = cfg.experiment.kind
    splits = splits if splits is not None else prepare_splits(cfg)
    scfg = student_config(cfg)
    exp = cfg.experiment
    artifacts = {}

    if kind == "baseline_batchwise":
        runlog = baseline_batchwise(scfg, splits, min(exp.batch_size, splits.train.n),
                                    exp.iterations, seed=cfg.seeds.resolve("teacher"),
                                    select_on=exp.select_on)
        runlog.config_hash = digest
        return RunResult(runlog)

    plan = plan if plan is not None else build_plan(cfg, splits)
    artifacts["plan"] = plan

    if kind == "baseline_curriculum":
        runlog = baseline_curriculum(scfg, splits, plan, exp.iterations, exp.select_on)
        runlog.config_hash = digest
        return RunResult(runlog, artifacts)

    if kind in ("train", "constrain"):
        constrained = kind == "constrain" or exp.constrained
        teacher, records, final = train_and_evaluate(cfg, splits, plan, constrained)
        summary = _summary(final, teacher=teacher.kind, constrained=constrained,
                           n_students=exp.n_students, iterations=exp.iterations)
        if teacher.kind == "ddpg":
            summary["replay_schedule"] = "recent-m then uniform-m every replay_every steps"
        else:
            summary["online_update_batch"] = 1
        if constrained:
            widths = [r["width"] for r in records]
            summary["width0_fraction"] = float(np.mean([w == 0 for w in widths])) if teacher.kind == "ddpg" \
                else float(np.mean([w == 1 for w in widths]))
        artifacts["best_student"] = student_to_dict(final.session.best_student(), final.best_acc)
        return RunResult(RunLog(records, summary, digest), artifacts, teacher)

    if kind == "transfer":
        if not exp.teacher_checkpoint:
            raise ConfigurationError("transfer needs experiment.teacher_checkpoint")
        teacher, data = load_teacher(exp.teacher_checkpoint)
        check_compatible(teacher, scfg, plan)
        before = teacher_ddpg.checkpoint_hash(data)
        records = []
        for k in range(exp.n_students):
            session = _session(cfg, splits, scfg.seed + k)
            ep = _episode_fn(teacher)(teacher, session, plan, exp.iterations, "greedy", exp.constrained,
                                      student_id=k)
            records.extend(ep.records)
        after = teacher_ddpg.checkpoint_hash(teacher_to_dict(teacher))
        file_after = teacher_ddpg.checkpoint_hash(json.loads(Path(exp.teacher_checkpoint).read_text()))
        summary = _summary(ep, teacher=teacher.kind, checkpoint_hash_before=before,
                           checkpoint_hash_after=after, checkpoint_file_hash_after=file_after,
                           state_dim=teacher.state_dim, n_features=splits.train.d)
        return RunResult(RunLog(records, summary, digest), artifacts, teacher)

    if kind == "perturb":
        teacher, _ = _teacher_for(cfg, splits, plan, exp.constrained)
        check_compatible(teacher, scfg, plan)
        session = _session(cfg, splits, scfg.seed + exp.n_students)
        ep = _episode_fn(teacher)(teacher, session, plan, exp.iterations, "greedy", exp.constrained,
                                  student_id=exp.n_students, keep_states=True)
        width_max = teacher_ddpg.resolve_width_max(getattr(teacher.config, "width_max", 0), plan.n)
        rng = np.random.default_rng([cfg.seeds.resolve("teacher"), 11])
        rows = perturbation_table(teacher, ep.states, exp.perturb_sigma, rng, plan.n, width_max)
        a = [r["center"] for r in rows]
        b = [r["center_perturbed"] for r in rows]
        summary = _summary(ep, sigma=exp.perturb_sigma, center_correlation=_correlation(a, b),
                           identical_fraction=float(np.mean([x == y for x, y in zip(a, b)])),
                           mean_abs_center_shift=float(np.mean(np.abs(np.subtract(a, b)))))
        return RunResult(RunLog(rows, summary, digest), artifacts, teacher)

    if kind == "slow_lr":
        teacher, _ = _teacher_for(cfg, splits, plan, constrained=True)
        check_compatible(teacher, scfg, plan)
        records = []
        base_lr = scfg.learning_rate
        slow_lr = base_lr / exp.lr_divisor
        episodes = {}
        for tag, lr in (("base", base_lr), ("slow", slow_lr)):
            session = _session(cfg, splits, scfg.seed + exp.n_students, lr=lr)
            ep = _episode_fn(teacher)(teacher, session, plan, exp.iterations, "greedy", True,
                                      student_id=exp.n_students)
            records.extend({**r, "lr_tag": tag, "student_lr": lr} for r in ep.records)
            episodes[tag] = ep
        summary = {"base_lr": base_lr, "slow_lr": slow_lr, "lr_ratio": exp.lr_divisor,
                   "best_acc_base": episodes["base"].best_acc,
                   "best_acc_slow": episodes["slow"].best_acc}
        return RunResult(RunLog(records, summary, digest), artifacts, teacher)

    raise ConfigurationError(f"unknown experiment kind {kind!r}")


def write_artifacts(result, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result.log.write(out / "log.jsonl")
    written = {"log": str(out / "log.jsonl")}
    if "plan" in result.artifacts:
        (out / "plan.json").write_text(json.dumps(result.artifacts["plan"].to_dict()))
        written["plan"] = str(out / "plan.json")
    if "best_student" in result.artifacts:
        (out / "best_student.json").write_text(json.dumps(result.artifacts["best_student"]))
        written["best_student"] = str(out / "best_student.json")
    if result.teacher is not None and result.log.summary.get("checkpoint_hash_before") is None:
        save_teacher(out / "teacher.json", result.teacher)
        written["teacher"] = str(out / "teacher.json")
    return written


# -- policy tables ------------------------------------------------------------

POLICY_COLUMNS = ("iter", "center_or_action", "width", "reward", "test_acc")


def emit_policy_table(records, student_id=None):
    """CSV of the actions in ``records`` (one student), sorted by iteration."""
    if isinstance(records, RunLog):
        records = records.records
    if not records:
        raise ConfigurationError("cannot tabulate an empty run log")
    if student_id is None:
        student_id = max(r.get("student_id", 0) for r in records)
    rows = sorted((r for r in records if r.get("student_id", 0) == student_id), key=lambda r: r["iter"])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(POLICY_COLUMNS)
    for r in rows:
        action = r.get("center", r.get("action_id"))
        if action is None:
            action = r.get("action_id", "")
        writer.writerow([r["iter"], action, r.get("width", ""), repr(float(r.get("reward", 0.0))),
                         repr(float(r.get("test_acc", 0.0)))])
    return buf.getvalue()


def parse_policy_table(text):
    rows = []
    for row in csv.DictReader(io.StringIO(text)):
        rows.append({
            "iter": int(row["iter"]),
            "center_or_action": int(row["center_or_action"]) if row["center_or_action"] != "" else None,
            "width": int(row["width"]) if row["width"] != "" else None,
            "reward": float(row["reward"]),
            "test_acc": float(row["test_acc"]),
        })
    return rows
