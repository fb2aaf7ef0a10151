"""The student classifier and how a teacher sees it.

A student is a ReLU MLP with a softmax head trained by plain SGD. Its state,
as seen by a teacher, compresses every non-input weight matrix row by row
against a fixed unit reference vector: for each row the absolute dot product
and the angle to the reference. The state length is therefore
``2 * sum(hidden widths)`` and does not depend on the number of input
features, which is what lets a teacher move between datasets.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import ConfigurationError
from .nncore import (DenseNet, DenseNetSpec, SgdMomentum, backward, forward, net_from_dict,
                     net_to_dict, one_hot, sgd_step)


@dataclass
class StudentConfig:
    hidden_layers: int = 2
    hidden_nodes: int = 50
    learning_rate: float = 0.001
    seed: int = 0
    eval_subsample: int = 1024

    def __post_init__(self):
        if self.hidden_layers < 1:
            raise ConfigurationError("hidden_layers must be >= 1")
        if self.hidden_nodes < 1:
            raise ConfigurationError("hidden_nodes must be >= 1")
        if self.learning_rate < 0:
            raise ConfigurationError("learning_rate must be non-negative")

    @property
    def hidden_sizes(self):
        return (self.hidden_nodes,) * self.hidden_layers

    @property
    def state_dim(self):
        return 2 * sum(self.hidden_sizes)


@dataclass
class Student:
    net: DenseNet
    optimizer: SgdMomentum
    config: StudentConfig
    step_counter: int = 0

    def predict_proba(self, X):
        return self.net.predict(X)

    def predict(self, X):
        return np.argmax(self.net.predict(X), axis=1)


def init_student(config, n_features, n_classes):
    if n_features < 1 or n_classes < 1:
        raise ConfigurationError("n_features and n_classes must be >= 1")
    spec = DenseNetSpec((n_features, *config.hidden_sizes, n_classes), "softmax", 0.0)
    net = DenseNet.initialize(spec, np.random.default_rng(config.seed))
    return Student(net, SgdMomentum.for_net(net, config.learning_rate, 0.0), config)


def reference_vectors(layer_sizes):
    """One unit all-ones vector per encoded matrix (``weights[1:]``), sized to its rows."""
    return [np.full(m, 1.0 / np.sqrt(m)) for m in layer_sizes[2:]]


def encoded_matrices(net):
    return net.weights[1:]


def state_dim(layer_sizes):
    return 2 * sum(layer_sizes[1:-1])


def encode_state(student, refs=None):
    """Row-wise ``(|<W_n, a>|, angle(W_n, a))`` for every encoded matrix.

    Per matrix the magnitudes come first, then the angles; matrices follow in
    layer order. Zero rows get an angle of pi/2.
    """
    net = student.net if isinstance(student, Student) else student
    if refs is None:
        refs = reference_vectors(net.spec.layer_sizes)
    parts = []
    for w, a in zip(encoded_matrices(net), refs):
        dots = w @ a
        norms = np.linalg.norm(w, axis=1) * np.linalg.norm(a)
        cos = np.divide(dots, norms, out=np.zeros_like(dots), where=norms > 0.0)
        angles = np.arccos(np.clip(cos, -1.0, 1.0))
        angles[norms == 0.0] = np.pi / 2
        parts.append(np.abs(dots))
        parts.append(angles)
    return np.concatenate(parts)


def train_on_indices(student, dataset, indices):
    """One SGD step on ``dataset`` rows ``indices`` as a single mini-batch."""
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size == 0:
        raise ConfigurationError("cannot train on an empty index list")
    if indices.min() < 0 or indices.max() >= dataset.n:
        raise ConfigurationError("training indices out of range")
    x = dataset.features[indices]
    y = one_hot(dataset.labels[indices], student.net.n_outputs)
    trace = forward(student.net, x)
    sgd_step(student.optimizer, student.net, backward(student.net, trace, y, "cross_entropy"))
    student.step_counter += 1
    return student


def accuracy(student, dataset):
    """Fraction of rows whose argmax prediction (lowest id on ties) is correct."""
    if dataset.n == 0:
        raise ConfigurationError("accuracy of an empty split is undefined")
    net = student.net if isinstance(student, Student) else student
    pred = np.argmax(net.predict(dataset.features), axis=1)
    return float(np.mean(pred == dataset.labels))


def reward(delta_t, delta_prev, validation_accuracy):
    """Training-accuracy improvement weighted by validation accuracy."""
    for name, v in (("delta_t", delta_t), ("delta_prev", delta_prev),
                    ("validation_accuracy", validation_accuracy)):
        if not 0.0 <= v <= 1.0:
            raise ConfigurationError(f"{name}={v} outside [0, 1]")
    return (delta_t - delta_prev) * validation_accuracy


def student_to_dict(student, best_accuracy=None):
    data = net_to_dict(student.net, student.optimizer)
    data["config"] = asdict(student.config)
    data["step_counter"] = student.step_counter
    data["best_accuracy_so_far"] = best_accuracy
    return data


def student_from_dict(data):
    net, opt = net_from_dict(data)
    config = StudentConfig(**data["config"])
    if opt is None:
        opt = SgdMomentum.for_net(net, config.learning_rate)
    return Student(net, opt, config, int(data.get("step_counter", 0)))


@dataclass
class StepResult:
    reward: float
    train_acc: float
    val_acc: float
    test_acc: float


class StudentSession:
    """One student being trained on one train/validation/test split.

    Training accuracy is measured on a fixed seeded subsample of the
    training split so successive rewards stay comparable. The best student
    seen so far (by ``select_on`` accuracy) is kept as a copy.
    """

    def __init__(self, student, train, validation, test, eval_seed=0, select_on="test"):
        if select_on not in ("test", "validation"):
            raise ConfigurationError("select_on must be 'test' or 'validation'")
        self.student = student
        self.train = train
        self.validation = validation
        self.test = test
        self.select_on = select_on
        size = min(train.n, student.config.eval_subsample)
        idx = np.sort(np.random.default_rng(eval_seed).choice(train.n, size=size, replace=False))
        self.train_eval = train.subset(idx)
        self.refs = reference_vectors(student.net.spec.layer_sizes)
        self.train_acc = accuracy(student, self.train_eval)
        self.best_acc = -1.0
        self.best_iter = -1
        self.best_net = None

    def state(self):
        return encode_state(self.student, self.refs)

    def step(self, indices, iteration=None):
        train_on_indices(self.student, self.train, indices)
        prev = self.train_acc
        self.train_acc = accuracy(self.student, self.train_eval)
        val_acc = accuracy(self.student, self.validation)
        test_acc = accuracy(self.student, self.test)
        picked = test_acc if self.select_on == "test" else val_acc
        if picked > self.best_acc:
            self.best_acc = picked
            self.best_iter = self.student.step_counter - 1 if iteration is None else iteration
            self.best_net = self.student.net.copy()
        return StepResult(reward(self.train_acc, prev, val_acc), self.train_acc, val_acc, test_acc)

    def best_student(self):
        net = self.best_net if self.best_net is not None else self.student.net
        return Student(net.copy(), SgdMomentum.for_net(net, self.student.config.learning_rate),
                       self.student.config, self.student.step_counter)
