"""
Choosing which label pairs get local models, and training those models.

A pair is selected when its score in Q (similarity) or R (confusion) is
strictly greater than the threshold. Q is symmetric; R isn't, and a pair is
selected from R when either direction exceeds the threshold.

>>> q = np.array([[1.0, 0.80, 0.77], [0.80, 1.0, 0.30], [0.77, 0.30, 1.0]])
>>> list(select_pairs_similarity(q, 0.5))
[LabelPair(0, 1), LabelPair(0, 2)]
>>> len(select_pairs_similarity(q, 1.0))
0

>>> r = np.array([[0.71, 0.27, 0.02], [0.02, 0.98, 0.0], [0.0, 0.0, 1.0]])
>>> list(select_pairs_confusion(r, 0.1))
[LabelPair(0, 1)]
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, MutableMapping, Optional

import numpy as np

from lccmatch.core import (
    DataError,
    InvalidThreshold,
    LabeledDataset,
    LabelPair,
    LabelPairSet,
    MalformedDocument,
    MissingClass,
    PairSource,
    canonical_pair,
)
from lccmatch.matrices import ConfusionMatrices, SimilarityMatrices
from lccmatch.models import (
    ModelConfig,
    ScoringModel,
    model_from_dict,
    train_local_model,
)

logger = logging.getLogger(__name__)


def check_threshold(threshold: float) -> float:
    threshold = float(threshold)
    if not 0.0 <= threshold <= 1.0:
        raise InvalidThreshold(f"Thresholds must be in [0, 1], got {threshold!r}")
    return threshold


class PairSelectionConfig:
    def __init__(self, source: PairSource, threshold: float):
        self.source = PairSource(source)
        self.threshold = check_threshold(threshold)

    def __repr__(self) -> str:
        return f"PairSelectionConfig(source={self.source.value!r}, threshold={self.threshold!r})"


def _pairs_above(matrix: np.ndarray, threshold: float):
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DataError(f"Expected a square score matrix, got shape {matrix.shape}")
    found = set()
    for i, j in np.argwhere(matrix > threshold):
        if i != j:
            found.add(canonical_pair(i, j))
    return found


def select_pairs_similarity(q: np.ndarray, t_s: float) -> LabelPairSet:
    """
    Every pair of different labels i, j with q_ij > t_s.
    """
    t_s = check_threshold(t_s)
    return LabelPairSet(_pairs_above(q, t_s), PairSource.SIMILARITY, t_s)


def select_pairs_confusion(r: np.ndarray, t_c: float) -> LabelPairSet:
    """
    Every pair of different labels i, j with r_ij > t_c or r_ji > t_c. The
    direction of the confusion is ignored, and each pair appears once.
    """
    t_c = check_threshold(t_c)
    return LabelPairSet(_pairs_above(r, t_c), PairSource.CONFUSION, t_c)


def select_pairs(
    similarity: Optional[SimilarityMatrices],
    confusion: Optional[ConfusionMatrices],
    config: PairSelectionConfig,
) -> LabelPairSet:
    if config.source == PairSource.SIMILARITY:
        if similarity is None:
            raise DataError("Selecting pairs by similarity needs the similarity matrix")
        return select_pairs_similarity(similarity.q, config.threshold)
    else:
        if confusion is None:
            raise DataError("Selecting pairs by confusion needs the confusion matrix")
        return select_pairs_confusion(confusion.r, config.threshold)


class LocalModelBank:
    """
    The local binary model of every pair in a label pair set.
    """

    def __init__(self, pair_set: LabelPairSet, models: Dict[LabelPair, ScoringModel]):
        if set(models) != set(pair_set.pairs):
            missing = sorted(set(pair_set.pairs) - set(models))
            extra = sorted(set(models) - set(pair_set.pairs))
            raise DataError(
                f"The bank's models don't match its pair set (missing {missing}, extra {extra})"
            )
        self.pair_set = pair_set
        self.models: Dict[LabelPair, ScoringModel] = {
            pair: models[pair] for pair in pair_set.pairs
        }

    def __len__(self) -> int:
        return len(self.models)

    def to_dict(self) -> dict:
        return {
            'pair_set': self.pair_set.to_dict(),
            'models': [
                {'pair': [pair.lo, pair.hi], 'model': model.to_dict()}
                for pair, model in self.models.items()
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'LocalModelBank':
        try:
            pair_set = LabelPairSet.from_dict(data['pair_set'])
            models = {
                LabelPair(*entry['pair']): model_from_dict(entry['model'])
                for entry in data['models']
            }
        except (KeyError, TypeError) as err:
            raise MalformedDocument(f"Not a local model bank document: {err}") from err
        return cls(pair_set, models)

    def __repr__(self) -> str:
        return f"LocalModelBank({len(self)} models, {self.pair_set!r})"


def build_local_bank(
    ds_train: LabeledDataset,
    pair_set: LabelPairSet,
    config: Optional[ModelConfig] = None,
    workers: int = 1,
    init: Optional[ScoringModel] = None,
    cache: Optional[MutableMapping[LabelPair, ScoringModel]] = None,
) -> LocalModelBank:
    """
    Train one local model per pair in `pair_set`, on the training samples of
    its two labels.

    Training a local model only depends on the pair and the inputs, so the
    models are trained on a thread pool when `workers` > 1, and models found
    in `cache` are reused instead of retrained. Newly trained models are
    added to `cache`.
    """
    config = config or ModelConfig()
    if cache is None:
        cache = {}
    todo = [pair for pair in pair_set.pairs if pair not in cache]

    def train(pair: LabelPair) -> ScoringModel:
        try:
            return train_local_model(ds_train, pair, config, init)
        except MissingClass as err:
            raise MissingClass(err.label, pair) from err

    if workers > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            trained = list(executor.map(train, todo))
    else:
        trained = [train(pair) for pair in todo]

    for pair, model in zip(todo, trained):
        cache[pair] = model
    logger.info(
        "Local model bank: %d pairs (%d trained, %d reused) from %s threshold %g",
        len(pair_set), len(todo), len(pair_set) - len(todo),
        pair_set.source.value, pair_set.threshold,
    )
    return LocalModelBank(pair_set, {pair: cache[pair] for pair in pair_set.pairs})
