"""
Scoring models: anything that turns a feature vector into a probability
vector over its classes. The same interface serves as the global model over
all l labels and as the binary local model of a label pair.

Two trainable models are built in. They're small enough to train in
milliseconds, which is what lets the whole matcher be exercised end to end
on desk-scale data:

- `NearestCentroidModel` scores each class by a softmax over negative
  squared distances to the class means.
- `LogisticModel` is multinomial logistic regression trained by full-batch
  gradient descent.

>>> ds = LabeledDataset.make([[0.0, 0.0], [10.0, 10.0]], [0, 1])
>>> model = train_nearest_centroid(ds, temperature=1.0)
>>> model.predict([0.0, 0.0])
0
>>> [float(p) for p in model.score([5.0, 5.0])]
[0.5, 0.5]
"""
import logging
from abc import ABC, abstractmethod
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp, softmax

from lccmatch.core import (
    DataError,
    DimensionMismatch,
    LabeledDataset,
    LabelOutOfRange,
    LabelPair,
    MalformedDocument,
    MissingClass,
    NonFiniteLoss,
)
from lccmatch.util import argmax

logger = logging.getLogger(__name__)

MODEL_KINDS = ('centroid', 'logistic')


class ModelConfig:
    """
    How to train a model. `kind` picks the model; the other fields are the
    hyperparameters of whichever kind it is. `temperature` only matters to
    nearest-centroid models, and the rest only to logistic models.
    """

    FIELDS = [
        'kind',
        'temperature',
        'learning_rate',
        'max_iterations',
        'l2',
        'seed',
        'standardize',
    ]

    def __init__(
        self,
        kind: str = 'logistic',
        temperature: float = 1.0,
        learning_rate: float = 0.1,
        max_iterations: int = 500,
        l2: float = 0.0,
        seed: int = 0,
        standardize: bool = True,
    ):
        if kind not in MODEL_KINDS:
            raise DataError(f"Unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
        if not temperature > 0:
            raise DataError(f"The temperature must be positive, got {temperature!r}")
        if not learning_rate > 0:
            raise DataError(f"The learning rate must be positive, got {learning_rate!r}")
        if int(max_iterations) < 1:
            raise DataError(f"max_iterations must be at least 1, got {max_iterations!r}")
        if not l2 >= 0:
            raise DataError(f"The L2 penalty can't be negative, got {l2!r}")
        self.kind = kind
        self.temperature = float(temperature)
        self.learning_rate = float(learning_rate)
        self.max_iterations = int(max_iterations)
        self.l2 = float(l2)
        self.seed = int(seed)
        self.standardize = bool(standardize)

    def replace(self, **changes) -> 'ModelConfig':
        values = self.to_dict()
        values.update(changes)
        return ModelConfig(**values)

    def to_dict(self) -> dict:
        return {key: getattr(self, key) for key in self.FIELDS}

    @classmethod
    def from_dict(cls, data: dict) -> 'ModelConfig':
        unknown = set(data) - set(cls.FIELDS)
        if unknown:
            raise DataError(f"Unknown model settings: {sorted(unknown)}")
        return cls(**data)

    def __eq__(self, other) -> bool:
        return isinstance(other, ModelConfig) and self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        items = ', '.join(f'{key}={value!r}' for key, value in self.to_dict().items())
        return f"ModelConfig({items})"


class ScoringModel(ABC):
    """
    A trained model that scores a feature vector of a fixed dimension with a
    probability vector of `class_count` entries.
    """

    kind = ''

    def __init__(self, class_count: int, dimension: int):
        self.class_count = int(class_count)
        self.dimension = int(dimension)

    @abstractmethod
    def _logits(self, x: np.ndarray) -> np.ndarray:
        """
        Unnormalized log-probabilities for a single, already checked,
        feature vector.
        """
        raise NotImplementedError

    @abstractmethod
    def to_dict(self) -> dict:
        raise NotImplementedError

    def _check_features(self, x: Sequence[float]) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.dimension:
            raise DimensionMismatch(
                f"This {self.kind} model expects {self.dimension} features, got {x.shape[0]}"
            )
        return x

    def score(self, x: Sequence[float]) -> np.ndarray:
        return softmax(self._logits(self._check_features(x)))

    def predict(self, x: Sequence[float]) -> int:
        return argmax(self.score(x))

    def __repr__(self) -> str:
        return (
            f"{type(self).__name__}(class_count={self.class_count}, "
            f"dimension={self.dimension})"
        )


class NearestCentroidModel(ScoringModel):
    kind = 'centroid'

    def __init__(self, centroids: np.ndarray, temperature: float = 1.0):
        centroids = np.array(centroids, dtype=float)
        super().__init__(centroids.shape[0], centroids.shape[1])
        centroids.setflags(write=False)
        self.centroids = centroids
        self.temperature = float(temperature)

    def _logits(self, x: np.ndarray) -> np.ndarray:
        squared_distances = ((self.centroids - x) ** 2).sum(axis=1)
        return -self.temperature * squared_distances

    def to_dict(self) -> dict:
        return {
            'kind': self.kind,
            'class_count': self.class_count,
            'dimension': self.dimension,
            'temperature': self.temperature,
            'centroids': self.centroids.tolist(),
        }


class LogisticModel(ScoringModel):
    """
    Multinomial logistic regression: score(x) = softmax(W z + b), where z is
    x standardized by the offset and scale measured on the training data.
    """

    kind = 'logistic'

    def __init__(
        self,
        weights: np.ndarray,
        biases: np.ndarray,
        offset: Optional[np.ndarray] = None,
        scale: Optional[np.ndarray] = None,
        config: Optional[ModelConfig] = None,
        initial_loss: Optional[float] = None,
        final_loss: Optional[float] = None,
    ):
        weights = np.array(weights, dtype=float)
        super().__init__(weights.shape[0], weights.shape[1])
        biases = np.array(biases, dtype=float).reshape(-1)
        if offset is None:
            offset = np.zeros(self.dimension)
        if scale is None:
            scale = np.ones(self.dimension)
        offset = np.array(offset, dtype=float).reshape(-1)
        scale = np.array(scale, dtype=float).reshape(-1)
        for array in (weights, biases, offset, scale):
            array.setflags(write=False)
        self.weights = weights
        self.biases = biases
        self.offset = offset
        self.scale = scale
        self.config = config or ModelConfig()
        self.initial_loss = initial_loss
        self.final_loss = final_loss

    def _logits(self, x: np.ndarray) -> np.ndarray:
        return self.weights @ ((x - self.offset) / self.scale) + self.biases

    def to_dict(self) -> dict:
        return {
            'kind': self.kind,
            'class_count': self.class_count,
            'dimension': self.dimension,
            'weights': self.weights.tolist(),
            'biases': self.biases.tolist(),
            'offset': self.offset.tolist(),
            'scale': self.scale.tolist(),
            'config': self.config.to_dict(),
        }


def _check_class_coverage(labels: np.ndarray, class_count: int) -> None:
    counts = np.bincount(labels, minlength=class_count)
    for label, count in enumerate(counts[:class_count]):
        if count == 0:
            raise MissingClass(label)


def _fit_nearest_centroid(
    features: np.ndarray, labels: np.ndarray, class_count: int, temperature: float
) -> NearestCentroidModel:
    _check_class_coverage(labels, class_count)
    centroids = np.vstack(
        [features[labels == label].mean(axis=0) for label in range(class_count)]
    )
    return NearestCentroidModel(centroids, temperature)


def train_nearest_centroid(ds: LabeledDataset, temperature: float = 1.0) -> NearestCentroidModel:
    """
    One centroid per class, the mean of that class's samples.
    """
    if not temperature > 0:
        raise DataError(f"The temperature must be positive, got {temperature!r}")
    return _fit_nearest_centroid(ds.features, ds.label_array, ds.n_classes, temperature)


def loss_and_gradient(
    weights: np.ndarray,
    biases: np.ndarray,
    features: np.ndarray,
    onehot: np.ndarray,
    l2: float = 0.0,
) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    The training objective of a logistic model, mean cross-entropy plus
    l2 * ||W||^2, and its gradient with respect to the weights and biases.
    """
    n_samples = features.shape[0]
    logits = features @ weights.T + biases
    log_probs = logits - logsumexp(logits, axis=1, keepdims=True)
    loss = -np.sum(onehot * log_probs) / n_samples + l2 * np.sum(weights ** 2)
    residual = (np.exp(log_probs) - onehot) / n_samples
    grad_weights = residual.T @ features + 2.0 * l2 * weights
    grad_biases = residual.sum(axis=0)
    return float(loss), grad_weights, grad_biases


def _fit_logistic(
    features: np.ndarray,
    labels: np.ndarray,
    class_count: int,
    config: ModelConfig,
    init: Optional[LogisticModel] = None,
) -> LogisticModel:
    _check_class_coverage(labels, class_count)
    n_samples, dimension = features.shape

    if init is not None:
        offset, scale = init.offset, init.scale
        weights = np.array(init.weights, dtype=float)
        biases = np.array(init.biases, dtype=float)
    else:
        if config.standardize:
            offset = features.mean(axis=0)
            scale = features.std(axis=0)
            scale[scale == 0] = 1.0
        else:
            offset = np.zeros(dimension)
            scale = np.ones(dimension)
        rng = np.random.default_rng(config.seed)
        weights = rng.normal(0.0, 0.01, size=(class_count, dimension))
        biases = np.zeros(class_count)

    standardized = (features - offset) / scale
    onehot = np.zeros((n_samples, class_count))
    onehot[np.arange(n_samples), labels] = 1.0

    initial_loss = None
    best = None
    for iteration in range(config.max_iterations + 1):
        loss, grad_weights, grad_biases = loss_and_gradient(
            weights, biases, standardized, onehot, config.l2
        )
        if not np.isfinite(loss):
            raise NonFiniteLoss(
                f"The training loss became {loss} after {iteration} iterations; "
                f"the learning rate {config.learning_rate} is probably too large"
            )
        if initial_loss is None:
            initial_loss = loss
        # Keep the best iterate, so the returned model never ends up worse
        # than where training started.
        if best is None or loss < best[0]:
            best = (loss, weights.copy(), biases.copy())
        if iteration < config.max_iterations:
            weights = weights - config.learning_rate * grad_weights
            biases = biases - config.learning_rate * grad_biases

    final_loss, weights, biases = best
    logger.debug(
        "Trained a %d-class logistic model: loss %.6g -> %.6g",
        class_count, initial_loss, final_loss,
    )
    return LogisticModel(
        weights, biases, offset, scale, config,
        initial_loss=initial_loss, final_loss=final_loss,
    )


def train_logistic(
    ds: LabeledDataset,
    config: Optional[ModelConfig] = None,
    init: Optional[LogisticModel] = None,
) -> LogisticModel:
    """
    Fit a logistic model by full-batch gradient descent. The seed only
    affects the initial weights, so the same data, config and seed always
    give the same parameters.

    If `init` is given, training starts from its weights and reuses its
    feature standardization instead of starting from random weights.
    """
    config = config or ModelConfig()
    return _fit_logistic(ds.features, ds.label_array, ds.n_classes, config, init)


def train_model(
    ds: LabeledDataset,
    config: Optional[ModelConfig] = None,
    init: Optional[ScoringModel] = None,
) -> ScoringModel:
    config = config or ModelConfig()
    if config.kind == 'centroid':
        return train_nearest_centroid(ds, config.temperature)
    if not isinstance(init, LogisticModel):
        init = None
    return train_logistic(ds, config, init)


def train_local_model(
    ds: LabeledDataset,
    pair: LabelPair,
    config: Optional[ModelConfig] = None,
    init: Optional[ScoringModel] = None,
) -> ScoringModel:
    """
    Train the binary local model of a label pair on only the samples of its
    two labels. Output index 0 scores `pair.lo` and index 1 scores `pair.hi`.

    When both this model and `init` are logistic, the local model starts
    from the rows of `init` that belong to the pair's two labels.

    >>> ds = LabeledDataset.make([[0.0], [1.0], [5.0]], [0, 0, 2], ['a', 'b', 'c'])
    >>> train_local_model(ds, (0, 1))
    Traceback (most recent call last):
        ...
    lccmatch.core.MissingClass: Class 1 has no samples, so the local model for LabelPair(0, 1) can't be trained
    """
    config = config or ModelConfig()
    if not isinstance(pair, LabelPair):
        pair = LabelPair(*pair)
    if pair.hi >= ds.n_classes:
        raise LabelOutOfRange(f"{pair!r} refers to a label beyond the {ds.n_classes} in the dataset")

    labels = ds.label_array
    for label in pair:
        if not np.any(labels == label):
            raise MissingClass(label, pair)

    mask = (labels == pair.lo) | (labels == pair.hi)
    features = ds.features[mask]
    binary_labels = (labels[mask] == pair.hi).astype(int)

    if config.kind == 'centroid':
        return _fit_nearest_centroid(features, binary_labels, 2, config.temperature)

    local_init = None
    if isinstance(init, LogisticModel):
        local_init = LogisticModel(
            init.weights[[pair.lo, pair.hi]],
            init.biases[[pair.lo, pair.hi]],
            init.offset,
            init.scale,
            config,
        )
    return _fit_logistic(features, binary_labels, 2, config, local_init)


def score_batch(m: ScoringModel, xs: Sequence[Sequence[float]]) -> np.ndarray:
    """
    Score many feature vectors. Row i is exactly `m.score(xs[i])`.
    """
    if len(xs) == 0:
        return np.zeros((0, m.class_count))
    return np.vstack([m.score(x) for x in xs])


def model_to_dict(m: ScoringModel) -> dict:
    return m.to_dict()


def model_from_dict(data: dict) -> ScoringModel:
    """
    Rebuild a model from the JSON container written by `model_to_dict`.
    """
    try:
        kind = data['kind']
        if kind == 'centroid':
            return NearestCentroidModel(data['centroids'], data['temperature'])
        elif kind == 'logistic':
            return LogisticModel(
                data['weights'],
                data['biases'],
                data['offset'],
                data['scale'],
                ModelConfig.from_dict(data.get('config', {})),
            )
    except (KeyError, TypeError, ValueError, IndexError) as err:
        if isinstance(err, DataError):
            raise
        raise MalformedDocument(f"Not a model document: {err}") from err
    raise MalformedDocument(f"Unknown model kind {kind!r}")
