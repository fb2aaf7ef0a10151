"""scikit-learn style classifier whose training is driven by a learned teacher."""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.model_selection import train_test_split
from sklearn.preprocessing import LabelEncoder, StandardScaler
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import teacher_ddpg, teacher_dqn
from .curriculum import CurriculumBuilder, Dataset
from .data import Splits
from .exceptions import ConfigurationError
from .student import StudentConfig, StudentSession, init_student


class CurriculumTeacherClassifier(ClassifierMixin, BaseEstimator):
    """MLP classifier trained on curriculum windows chosen by an RL teacher.

    ``fit`` holds out ``validation_fraction`` of the rows (stratified), scores
    the rest into a curriculum plan, trains a teacher over ``n_students``
    throwaway students, and then trains the final student greedily. The
    student snapshot with the best held-out accuracy becomes the model.

    Parameters
    ----------
    teacher : {"ddpg", "dqn"}
    n_batches : int
        Number of curriculum batches in the plan.
    mode : {"disjoint", "cumulative"}
    scorer : {"mahalanobis", "cosine"}
    use_dae : bool
        Score in the latent space of a denoising autoencoder.
    hidden_layers, hidden_nodes : int
        Student architecture.
    learning_rate : float
        Student SGD learning rate.
    n_students, iterations : int
        Teacher training budget (students times steps per student).
    validation_fraction : float
    random_state : int
    """

    def __init__(self, teacher="ddpg", n_batches=20, mode="disjoint", scorer="mahalanobis",
                 use_dae=True, hidden_layers=2, hidden_nodes=50, learning_rate=0.02,
                 n_students=10, iterations=200, validation_fraction=0.25, random_state=0):
        self.teacher = teacher
        self.n_batches = n_batches
        self.mode = mode
        self.scorer = scorer
        self.use_dae = use_dae
        self.hidden_layers = hidden_layers
        self.hidden_nodes = hidden_nodes
        self.learning_rate = learning_rate
        self.n_students = n_students
        self.iterations = iterations
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _check_params(self):
        if self.teacher not in ("ddpg", "dqn"):
            raise ConfigurationError(f"teacher must be 'ddpg' or 'dqn', got {self.teacher!r}")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigurationError("validation_fraction must lie in (0, 1)")
        if self.n_students < 1 or self.iterations < 1:
            raise ConfigurationError("n_students and iterations must be >= 1")

    def fit(self, X, y):
        self._check_params()
        X, y = check_X_y(X, y, dtype=np.float64)
        self.label_encoder_ = LabelEncoder().fit(y)
        self.classes_ = self.label_encoder_.classes_
        if self.classes_.size < 2:
            raise ConfigurationError("need at least two classes")
        codes = self.label_encoder_.transform(y)
        seed = int(self.random_state)
        X_tr, X_val, y_tr, y_val = train_test_split(
            X, codes, test_size=self.validation_fraction, stratify=codes, random_state=seed)
        self.scaler_ = StandardScaler().fit(X_tr)
        k = self.classes_.size
        train = Dataset(self.scaler_.transform(X_tr), y_tr, k)
        validation = Dataset(self.scaler_.transform(X_val), y_val, k)
        # the held-out split doubles as the selection set
        splits = Splits(train, validation, validation)

        builder = CurriculumBuilder(scorer=self.scorer, use_dae=self.use_dae,
                                    n_batches=min(self.n_batches, train.n), mode=self.mode,
                                    random_state=seed)
        self.plan_ = builder.fit(train.features).plan_

        scfg = StudentConfig(self.hidden_layers, self.hidden_nodes, self.learning_rate, seed)
        if self.teacher == "ddpg":
            self.teacher_ = teacher_ddpg.DdpgTeacher.create(scfg.state_dim,
                                                            teacher_ddpg.DdpgConfig(seed=seed))
            train_fn, episode_fn = teacher_ddpg.train_teacher, teacher_ddpg.run_episode
        else:
            cfg = teacher_dqn.DqnConfig(n_actions=self.plan_.n_batches, seed=seed)
            self.teacher_ = teacher_dqn.DqnTeacher.create(scfg.state_dim, cfg)
            train_fn, episode_fn = teacher_dqn.train_teacher_dqn, teacher_dqn.run_episode_dqn
        _, self.teacher_history_ = train_fn(self.teacher_, splits, self.plan_, self.n_students,
                                            self.iterations, scfg, select_on="validation")

        final = replace(scfg, seed=seed + self.n_students)
        session = StudentSession(init_student(final, train.d, k), train, validation, validation,
                                 eval_seed=final.seed, select_on="validation")
        episode = episode_fn(self.teacher_, session, self.plan_, self.iterations, "greedy",
                             student_id=self.n_students)
        self.student_ = session.best_student()
        self.best_validation_accuracy_ = episode.best_acc
        self.actions_ = episode.records
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "student_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return self.student_.predict_proba(self.scaler_.transform(X))

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]
