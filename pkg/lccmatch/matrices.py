"""
Score matrices over the label set, computed from how the global model
scores the validation set.

The similarity matrix W compares the mean score vectors of each pair of
classes, and Q normalizes it into a similarity in [0, 1]:

>>> sim = similarity_matrix([[1.0, 0.0], [0.0, 1.0]])
>>> sim.w.tolist()
[[0.0, 1.0], [1.0, 0.0]]
>>> sim.q.tolist()
[[1.0, 0.0], [0.0, 1.0]]

The confusion matrix Z counts (true label, predicted label) outcomes, and R
normalizes each row into rates:

>>> conf = confusion_matrix([0, 0, 1], [0, 1, 1], 2)
>>> conf.z.tolist()
[[1, 1], [0, 1]]
>>> conf.r.tolist()
[[0.5, 0.5], [0.0, 1.0]]
"""
import csv
import logging
import warnings
from typing import Optional, Sequence

import numpy as np

from lccmatch.core import (
    DegenerateMeans,
    DimensionMismatch,
    LabeledDataset,
    LabelOutOfRange,
    LengthMismatch,
    MissingClass,
)
from lccmatch.models import ScoringModel, score_batch
from lccmatch.util import argmax

logger = logging.getLogger(__name__)


class AbsentClassWarning(UserWarning):
    """
    A class never appears as a true label in the validation set, so its row
    of the confusion matrix stays all zero and no pair will be selected
    from it.
    """


class SimilarityMatrices:
    """
    W, the mean squared difference between class-mean score vectors, and
    Q = 1 - W / max(W). The class means are kept alongside.
    """

    def __init__(self, means: np.ndarray, w: np.ndarray, q: np.ndarray):
        self.means = means
        self.w = w
        self.q = q

    @property
    def n_labels(self) -> int:
        return self.w.shape[0]


class ConfusionMatrices:
    """
    Z, the count of validation samples by (true label, predicted label), and
    R, each row of Z divided by its sum.
    """

    def __init__(self, z: np.ndarray, r: np.ndarray):
        self.z = z
        self.r = r

    @property
    def n_labels(self) -> int:
        return self.z.shape[0]


def mean_vectors(scores: np.ndarray, labels: Sequence[int], n_labels: Optional[int] = None) -> np.ndarray:
    """
    The mean score vector of each class: row i averages the rows of `scores`
    whose true label is i.

    >>> mean_vectors(np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]]), [0, 0, 1]).tolist()
    [[0.5, 0.5], [0.0, 1.0]]
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if scores.ndim != 2:
        raise DimensionMismatch(f"Expected a 2-D score matrix, got shape {scores.shape}")
    if scores.shape[0] != labels.shape[0]:
        raise LengthMismatch(
            f"There are {scores.shape[0]} score rows but {labels.shape[0]} labels"
        )
    if n_labels is None:
        n_labels = scores.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= n_labels):
        raise LabelOutOfRange(f"Labels must be in [0, {n_labels})")

    means = np.zeros((n_labels, scores.shape[1]))
    for label in range(n_labels):
        members = scores[labels == label]
        if members.shape[0] == 0:
            raise MissingClass(label)
        means[label] = members.mean(axis=0)
    return means


def similarity_matrix(means: np.ndarray) -> SimilarityMatrices:
    """
    w_ij = (1/l) * sum_k (U_ik - U_jk)^2 over the class means U, then
    q_ij = 1 - w_ij / max(W).

    This is the mean of squared coordinate differences, which is not quite a
    Euclidean distance; we follow the formula rather than the name.
    """
    means = np.asarray(means, dtype=float)
    if means.ndim != 2 or means.shape[0] < 2:
        raise DegenerateMeans(
            f"A similarity matrix needs the means of at least two classes, got shape {means.shape}"
        )
    differences = means[:, np.newaxis, :] - means[np.newaxis, :, :]
    w = (differences ** 2).mean(axis=2)
    largest = w.max()
    if not largest > 0:
        raise DegenerateMeans("Every class has the same mean score vector")
    q = 1.0 - w / largest
    return SimilarityMatrices(means, w, q)


def confusion_matrix(
    true_labels: Sequence[int], predicted_labels: Sequence[int], n_labels: int
) -> ConfusionMatrices:
    """
    Count (true, predicted) outcomes and normalize each row. A class that
    never appears as a true label keeps an all-zero row of R.
    """
    true_labels = np.asarray(true_labels, dtype=int).reshape(-1)
    predicted_labels = np.asarray(predicted_labels, dtype=int).reshape(-1)
    if true_labels.shape != predicted_labels.shape:
        raise LengthMismatch(
            f"There are {true_labels.shape[0]} true labels but "
            f"{predicted_labels.shape[0]} predictions"
        )
    for name, labels in (('true', true_labels), ('predicted', predicted_labels)):
        if labels.size and (labels.min() < 0 or labels.max() >= n_labels):
            raise LabelOutOfRange(f"A {name} label is outside [0, {n_labels})")

    z = np.zeros((n_labels, n_labels), dtype=int)
    np.add.at(z, (true_labels, predicted_labels), 1)
    row_sums = z.sum(axis=1)
    r = np.zeros((n_labels, n_labels))
    present = row_sums > 0
    r[present] = z[present] / row_sums[present, np.newaxis]

    absent = np.flatnonzero(~present)
    if absent.size:
        warnings.warn(
            f"Classes {absent.tolist()} never appear as true labels; their "
            "confusion rows stay all zero",
            AbsentClassWarning,
        )
    return ConfusionMatrices(z, r)


def validation_matrices(g: ScoringModel, ds_val: LabeledDataset):
    """
    Score the validation set with the global model, and compute both the
    similarity and the confusion matrices from the result.

    Returns (scores, SimilarityMatrices, ConfusionMatrices). A class with no
    validation samples has no mean score vector, so the similarity matrix
    is None in that case; the confusion matrix is always computed, with an
    all-zero row for the missing class.
    """
    scores = score_batch(g, ds_val.samples)
    labels = ds_val.label_array
    predictions = [argmax(row) for row in scores]
    confusion = confusion_matrix(labels, predictions, g.class_count)
    try:
        similarity = similarity_matrix(mean_vectors(scores, labels, g.class_count))
    except MissingClass as err:
        logger.warning("No similarity matrix: %s in the validation set", err)
        similarity = None
    logger.info(
        "Validation matrices: %d samples, %d labels, global accuracy %.4f",
        len(labels), g.class_count, float(np.mean(np.asarray(predictions) == labels)),
    )
    return scores, similarity, confusion


def write_matrix_csv(path: str, matrix: np.ndarray, label_names: Sequence[str]) -> None:
    """
    Write a square matrix as CSV, with a header row of label names and each
    row led by its label name.
    """
    matrix = np.asarray(matrix)
    with open(path, 'w', encoding='utf-8', newline='') as outfile:
        writer = csv.writer(outfile)
        writer.writerow(['label'] + list(label_names))
        for name, row in zip(label_names, matrix):
            writer.writerow([name] + [repr(value.item()) for value in row])
