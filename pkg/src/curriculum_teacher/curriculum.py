"""Difficulty scoring and curriculum batch plans.

Rows are encoded by a denoising autoencoder, scored by their Mahalanobis
distance in latent space (or by cosine dissimilarity), sorted from easy to
hard, and cut into batches. Two batch layouts are supported: ``disjoint``
(contiguous, non-overlapping chunks) and ``cumulative`` (each batch is a
prefix of the sorted order and contains every earlier one).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import BoundsError, ConfigurationError, DimensionError, NumericError
from .nncore import DenseNet, DenseNetSpec, SgdMomentum, backprop, forward, sgd_step

MODES = ("disjoint", "cumulative")


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise DimensionError("features must be a 2-D matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise DimensionError("need exactly one label per feature row")
        if self.n_classes is None:
            self.n_classes = int(self.labels.max()) + 1 if self.labels.size else 0
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ConfigurationError("labels must lie in [0, n_classes)")
        if not np.all(np.isfinite(self.features)):
            raise NumericError("features contain NaN or Inf")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[indices], self.labels[indices], self.n_classes)


# -- denoising autoencoder ----------------------------------------------------

@dataclass
class DaeConfig:
    latent_dim: int = 4
    noise: float = 0.2
    epochs: int = 30
    learning_rate: float = 0.01
    hidden: int = 32
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ConfigurationError("latent_dim must be >= 1")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if not 0.0 <= self.noise < 1.0:
            raise ConfigurationError("noise must lie in [0, 1)")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")


def _reconstruct(encoder, decoder, x):
    return decoder.predict(encoder.predict(x))


def _fit_dae(x, config):
    if x.shape[0] == 0:
        raise ConfigurationError("cannot train an autoencoder on an empty dataset")
    if np.all(x.std(axis=0) == 0.0):
        raise ConfigurationError("every feature has zero variance; nothing to encode")
    rng = np.random.default_rng(config.seed)
    d = x.shape[1]
    encoder = DenseNet.initialize(DenseNetSpec((d, config.hidden, config.latent_dim), "linear"), rng)
    decoder = DenseNet.initialize(DenseNetSpec((config.latent_dim, config.hidden, d), "linear"), rng)
    enc_opt = SgdMomentum.for_net(encoder, config.learning_rate, 0.9)
    dec_opt = SgdMomentum.for_net(decoder, config.learning_rate, 0.9)
    history = [float(np.mean((_reconstruct(encoder, decoder, x) - x) ** 2))]
    n = x.shape[0]
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            clean = x[perm[start:start + config.batch_size]]
            noisy = clean * (rng.random(clean.shape) >= config.noise)
            enc_trace = forward(encoder, noisy)
            dec_trace = forward(decoder, enc_trace.output)
            out = dec_trace.output
            dec_grads, latent_grad = backprop(decoder, dec_trace, 2.0 * (out - clean) / out.size)
            enc_grads, _ = backprop(encoder, enc_trace, latent_grad)
            sgd_step(dec_opt, decoder, dec_grads)
            sgd_step(enc_opt, encoder, enc_grads)
        history.append(float(np.mean((_reconstruct(encoder, decoder, x) - x) ** 2)))
    return encoder, decoder, history


class DenoisingAutoencoder(TransformerMixin, BaseEstimator):
    """Masking-noise autoencoder ``d -> hidden -> latent -> hidden -> d``.

    ``transform`` returns the latent code. ``mse_history_[0]`` is the clean
    reconstruction error before training, followed by one entry per epoch.
    """

    def __init__(self, latent_dim=4, noise=0.2, epochs=30, learning_rate=0.01,
                 hidden=32, batch_size=32, random_state=0):
        self.latent_dim = latent_dim
        self.noise = noise
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.hidden = hidden
        self.batch_size = batch_size
        self.random_state = random_state

    def _config(self):
        return DaeConfig(self.latent_dim, self.noise, self.epochs, self.learning_rate,
                         self.hidden, self.batch_size, self.random_state)

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.encoder_, self.decoder_, self.mse_history_ = _fit_dae(X, self._config())
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "encoder_")
        X = check_array(X, dtype=np.float64)
        return self.encoder_.predict(X)

    def inverse_transform(self, Z):
        check_is_fitted(self, "decoder_")
        return self.decoder_.predict(check_array(Z, dtype=np.float64))

    @property
    def initial_mse_(self):
        return self.mse_history_[0]

    @property
    def final_mse_(self):
        return self.mse_history_[-1]


def train_dae(dataset, config):
    """Train a denoising autoencoder and return its encoder half."""
    x = dataset.features if isinstance(dataset, Dataset) else np.asarray(dataset, dtype=np.float64)
    encoder, _, _ = _fit_dae(x, config)
    return encoder


# -- Mahalanobis distance -----------------------------------------------------

@dataclass
class MomentModel:
    mean: np.ndarray
    covariance: np.ndarray
    ridge: float
    factor: np.ndarray = field(repr=False)

    @classmethod
    def from_moments(cls, mean, covariance, ridge=0.0):
        mean = np.asarray(mean, dtype=np.float64)
        cov = np.asarray(covariance, dtype=np.float64)
        if cov.shape != (mean.size, mean.size):
            raise DimensionError(f"covariance {cov.shape} does not match mean of length {mean.size}")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-9):
            raise NumericError("covariance is not symmetric")
        cov = 0.5 * (cov + cov.T)
        try:
            factor = linalg.cholesky(cov + ridge * np.eye(mean.size), lower=True)
        except linalg.LinAlgError as exc:
            eig_min = float(np.linalg.eigvalsh(cov).min())
            raise NumericError(
                f"Cholesky of S + {ridge:g} I failed (smallest eigenvalue of S: {eig_min:.3e})"
            ) from exc
        return cls(mean, cov, float(ridge), factor)

    @property
    def dim(self):
        return self.mean.size


def default_ridge(covariance):
    """``1e-6 * trace(S) / dim``, floored so an all-zero S still factors."""
    dim = covariance.shape[0]
    return max(1e-6 * float(np.trace(covariance)) / dim, 1e-12)


def fit_moments(latent, ridge=None):
    """Column means and unbiased sample covariance of ``latent``."""
    z = np.asarray(latent, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 2:
        raise ConfigurationError("need a 2-D matrix with at least two rows")
    mean = z.mean(axis=0)
    centered = z - mean
    cov = centered.T @ centered / (z.shape[0] - 1)
    if ridge is None:
        ridge = default_ridge(cov)
    return MomentModel.from_moments(mean, cov, ridge)


def mahalanobis_many(X, model):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise DimensionError(f"expected rows of length {model.dim}, got shape {X.shape}")
    solved = linalg.solve_triangular(model.factor, (X - model.mean).T, lower=True)
    return np.sqrt(np.sum(solved**2, axis=0))


def mahalanobis(x, model):
    """``sqrt((x - mean)^T S^-1 (x - mean))`` via the stored Cholesky factor."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.dim,):
        raise DimensionError(f"expected a vector of length {model.dim}, got shape {x.shape}")
    return float(mahalanobis_many(x[None, :], model)[0])


class MahalanobisScorer(BaseEstimator):
    def __init__(self, ridge=None):
        self.ridge = ridge

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        self.moments_ = fit_moments(X, self.ridge)
        self.n_features_in_ = X.shape[1]
        return self

    def score_samples(self, X):
        check_is_fitted(self, "moments_")
        return mahalanobis_many(check_array(X, dtype=np.float64), self.moments_)


# -- cosine dissimilarity -----------------------------------------------------

def cosine_scores(features, reference):
    """``1 - cos(x_i, reference)`` per row; zero rows score 1."""
    x = np.asarray(features, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    ref_norm = np.linalg.norm(ref)
    if ref_norm == 0.0:
        raise ConfigurationError("reference vector must be nonzero")
    if x.ndim != 2 or x.shape[1] != ref.size:
        raise DimensionError(f"features of shape {x.shape} vs reference of length {ref.size}")
    norms = np.linalg.norm(x, axis=1)
    cos = np.zeros(x.shape[0])
    nz = norms > 0.0
    cos[nz] = (x[nz] @ ref) / (norms[nz] * ref_norm)
    return 1.0 - np.clip(cos, -1.0, 1.0)


def principal_direction(X):
    """Leading principal axis of ``X``, sign fixed so its largest entry is positive."""
    centered = X - X.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    axis = vt[0]
    if axis[np.argmax(np.abs(axis))] < 0:
        axis = -axis
    return axis


class CosineScorer(BaseEstimator):
    """Cosine dissimilarity to ``reference``, or to the leading principal axis if None."""

    def __init__(self, reference=None):
        self.reference = reference

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if self.reference is None:
            self.reference_ = principal_direction(X)
        else:
            self.reference_ = np.asarray(self.reference, dtype=np.float64)
        self.n_features_in_ = X.shape[1]
        return self

    def score_samples(self, X):
        check_is_fitted(self, "reference_")
        return cosine_scores(check_array(X, dtype=np.float64), self.reference_)


# -- batch plans --------------------------------------------------------------

@dataclass(frozen=True)
class BatchPlan:
    order: np.ndarray
    mode: str
    n_batches: int
    scores: np.ndarray = None

    @property
    def n(self):
        return self.order.size

    def batch_bounds(self, i):
        """``(start, stop)`` positions of batch ``i`` within ``order``."""
        if not 0 <= i < self.n_batches:
            raise BoundsError(f"batch {i} outside [0, {self.n_batches})")
        n, N = self.n, self.n_batches
        if self.mode == "cumulative":
            return 0, -(-(i + 1) * n // N)
        base, extra = divmod(n, N)
        start = i * base + min(i, extra)
        return start, start + base + (1 if i < extra else 0)

    def batch(self, i):
        start, stop = self.batch_bounds(i)
        return self.order[start:stop]

    def batches(self):
        return [self.batch(i) for i in range(self.n_batches)]

    def to_dict(self):
        return {
            "mode": self.mode,
            "n_batches": int(self.n_batches),
            "order": [int(i) for i in self.order],
            "scores": None if self.scores is None else [float(s) for s in self.scores],
        }

    @classmethod
    def from_dict(cls, data):
        scores = data.get("scores")
        return cls(np.asarray(data["order"], dtype=np.int64), data["mode"], int(data["n_batches"]),
                   None if scores is None else np.asarray(scores, dtype=np.float64))


def make_plan(scores, n_batches, mode="disjoint"):
    """Sort rows by ascending score (stable) and cut into ``n_batches`` batches."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    n = scores.size
    if mode not in MODES:
        raise ConfigurationError(f"mode must be one of {MODES}, got {mode!r}")
    if n_batches < 1:
        raise ConfigurationError("n_batches must be >= 1")
    if n_batches > n:
        raise ConfigurationError(f"n_batches={n_batches} exceeds the {n} available rows")
    order = np.argsort(scores, kind="stable")
    return BatchPlan(order, mode, int(n_batches), scores)


def slice_window(plan, center, width):
    """Rows of ``plan.order`` in a window of ``width`` positions around ``center``.

    The center sits at offset ``width // 2`` inside the window; the window is
    clipped at both ends of the order and never wraps. ``width == 0`` selects
    the single row at ``center``.
    """
    n = plan.n
    if not 0 <= center < n:
        raise BoundsError(f"center {center} outside [0, {n})")
    if width < 0:
        raise ConfigurationError("width must be >= 0")
    if width == 0:
        return plan.order[center:center + 1]
    lo = max(0, center - width // 2)
    hi = min(n - 1, center + math.ceil(width / 2) - 1)
    return plan.order[lo:hi + 1]


class CurriculumBuilder(BaseEstimator):
    """Score rows by difficulty and build a :class:`BatchPlan`.

    Parameters
    ----------
    scorer : {'mahalanobis', 'cosine'}
    use_dae : bool
        Score the autoencoder latent code instead of the raw features.
    n_batches : int
    mode : {'disjoint', 'cumulative'}
    """

    def __init__(self, scorer="mahalanobis", use_dae=True, n_batches=20, mode="disjoint",
                 latent_dim=4, noise=0.2, epochs=30, learning_rate=0.01, ridge=None,
                 random_state=0):
        self.scorer = scorer
        self.use_dae = use_dae
        self.n_batches = n_batches
        self.mode = mode
        self.latent_dim = latent_dim
        self.noise = noise
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.ridge = ridge
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        if self.use_dae:
            self.dae_ = DenoisingAutoencoder(self.latent_dim, self.noise, self.epochs,
                                             self.learning_rate, random_state=self.random_state)
            Z = self.dae_.fit_transform(X)
        else:
            self.dae_ = None
            Z = X
        if self.scorer == "mahalanobis":
            self.scorer_ = MahalanobisScorer(self.ridge).fit(Z)
        elif self.scorer == "cosine":
            self.scorer_ = CosineScorer().fit(Z)
        else:
            raise ConfigurationError(f"unknown scorer {self.scorer!r}")
        self.scores_ = self.scorer_.score_samples(Z)
        self.plan_ = make_plan(self.scores_, self.n_batches, self.mode)
        self.n_features_in_ = X.shape[1]
        return self

    def score_samples(self, X):
        check_is_fitted(self, "plan_")
        X = check_array(X, dtype=np.float64)
        Z = self.dae_.transform(X) if self.dae_ is not None else X
        return self.scorer_.score_samples(Z)
