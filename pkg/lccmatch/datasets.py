"""
Getting labeled data into the matcher: reading and writing the CSV dataset
format, and generating synthetic datasets whose classes fall into groups
that a global model confuses with each other.

A dataset CSV has one sample per row, `label,f1,...,fd`, with an optional
header row. Labels can be any strings; they're numbered in order of first
appearance.
"""
import csv
import logging
from typing import Dict, List, Optional, Sequence

import numpy as np

from lccmatch.core import (
    DataError,
    EmptyDataset,
    LabeledDataset,
    LabelOutOfRange,
    ParseError,
    RaggedFeatures,
    validate_dataset,
)

logger = logging.getLogger(__name__)


def _is_header(row: Sequence[str]) -> bool:
    for cell in row[1:]:
        try:
            float(cell)
        except ValueError:
            continue
        return False
    return len(row) > 1


def ingest_csv(path: str, label_names: Optional[Sequence[str]] = None) -> LabeledDataset:
    """
    Read a dataset CSV.

    If `label_names` is given, the file's labels must be names from that
    table, and they get its indices. That's how a validation or test file
    shares the label numbering of its training file.
    """
    if label_names is not None:
        index_of: Dict[str, int] = {name: index for index, name in enumerate(label_names)}
        names: List[str] = list(label_names)
    else:
        index_of = {}
        names = []

    samples = []
    labels = []
    dimension = None
    with open(path, encoding='utf-8', newline='') as infile:
        for line_number, row in enumerate(csv.reader(infile), start=1):
            row = [cell.strip() for cell in row]
            if not any(row):
                continue
            if line_number == 1 and _is_header(row):
                continue
            if len(row) < 2:
                raise ParseError("a sample needs a label and at least one feature", line_number)

            label_token = row[0]
            try:
                features = [float(cell) for cell in row[1:]]
            except ValueError as err:
                raise ParseError(f"non-numeric feature: {err}", line_number) from err

            if dimension is None:
                dimension = len(features)
            elif len(features) != dimension:
                raise RaggedFeatures(
                    f"{path}, line {line_number}: {len(features)} features, "
                    f"but earlier rows have {dimension}"
                )

            if label_token not in index_of:
                if label_names is not None:
                    raise LabelOutOfRange(
                        f"{path}, line {line_number}: unknown label {label_token!r}"
                    )
                index_of[label_token] = len(names)
                names.append(label_token)
            samples.append(features)
            labels.append(index_of[label_token])

    if not samples:
        raise EmptyDataset(f"{path} has no samples")
    dataset = LabeledDataset(samples, labels, names)
    validate_dataset(dataset)
    logger.info("Read %r from %s", dataset, path)
    return dataset


def write_dataset_csv(path: str, ds: LabeledDataset) -> None:
    with open(path, 'w', encoding='utf-8', newline='') as outfile:
        writer = csv.writer(outfile)
        writer.writerow(['label'] + [f'f{index + 1}' for index in range(ds.dimension)])
        for sample, label in zip(ds.samples, ds.labels):
            writer.writerow([ds.label_names[label]] + [repr(float(value)) for value in sample])


class SyntheticSpec:
    """
    A recipe for a synthetic dataset of Gaussian clusters.

    Classes are arranged in groups. The classes of a confusable group sit
    `near_distance` apart along axis 1; the groups themselves, including a
    one-class group for every class in no confusable group, sit
    `far_distance` apart along axis 0. Explicit `centers` replace this
    arrangement.

    The noise has standard deviation `spread` in every direction except
    the diagonal (1, 1) / sqrt(2) of the first two axes, where it is
    `spread * elongation`. All classes share this shape, so with
    `elongation` > 1 the class boundary that best separates a confusable
    pair is tilted, and a model that only compares distances to class
    means gets it wrong more often than a model trained on the pair.
    """

    FIELDS = [
        'n_classes',
        'dimension',
        'per_class',
        'spread',
        'near_distance',
        'far_distance',
        'confusable_groups',
        'elongation',
        'seed',
    ]

    def __init__(
        self,
        n_classes: int = 4,
        dimension: int = 2,
        per_class: int = 200,
        spread: float = 1.0,
        near_distance: float = 1.5,
        far_distance: float = 20.0,
        confusable_groups: Sequence[Sequence[int]] = ((0, 1),),
        elongation: float = 4.0,
        seed: int = 0,
        centers: Optional[Sequence[Sequence[float]]] = None,
    ):
        self.n_classes = int(n_classes)
        self.dimension = int(dimension)
        self.per_class = int(per_class)
        self.spread = float(spread)
        self.near_distance = float(near_distance)
        self.far_distance = float(far_distance)
        self.confusable_groups = [sorted(int(label) for label in group) for group in confusable_groups]
        self.elongation = float(elongation)
        self.seed = int(seed)
        self.centers = None if centers is None else np.asarray(centers, dtype=float)
        self._validate()

    def _validate(self) -> None:
        if self.n_classes < 2:
            raise DataError(f"A synthetic dataset needs at least 2 classes, got {self.n_classes}")
        if self.dimension < 2:
            raise DataError(f"A synthetic dataset needs at least 2 dimensions, got {self.dimension}")
        if self.per_class < 0:
            raise DataError(f"per_class can't be negative, got {self.per_class}")
        if not self.spread > 0 or not self.elongation > 0:
            raise DataError("spread and elongation must be positive")
        if self.near_distance < 0 or self.far_distance < 0:
            raise DataError("Distances between centers can't be negative")
        seen = set()
        for group in self.confusable_groups:
            for label in group:
                if not 0 <= label < self.n_classes:
                    raise LabelOutOfRange(
                        f"Confusable group {group} names class {label}, "
                        f"but there are {self.n_classes} classes"
                    )
                if label in seen:
                    raise DataError(f"Class {label} is in more than one confusable group")
                seen.add(label)
        if self.centers is not None and self.centers.shape != (self.n_classes, self.dimension):
            raise DataError(
                f"Expected {self.n_classes} x {self.dimension} centers, got {self.centers.shape}"
            )

    def groups(self) -> List[List[int]]:
        """
        Every class's group: the confusable groups, then each remaining
        class on its own.

        >>> SyntheticSpec(n_classes=4, confusable_groups=[[1, 0]]).groups()
        [[0, 1], [2], [3]]
        """
        grouped = {label for group in self.confusable_groups for label in group}
        singles = [[label] for label in range(self.n_classes) if label not in grouped]
        return [list(group) for group in self.confusable_groups if group] + singles

    def class_centers(self) -> np.ndarray:
        """
        >>> SyntheticSpec(n_classes=3, near_distance=1.5, far_distance=10.0).class_centers().tolist()
        [[0.0, 0.0], [0.0, 1.5], [10.0, 0.0]]
        """
        if self.centers is not None:
            return self.centers.copy()
        centers = np.zeros((self.n_classes, self.dimension))
        for group_index, group in enumerate(self.groups()):
            for member_index, label in enumerate(group):
                centers[label, 0] = group_index * self.far_distance
                centers[label, 1] = member_index * self.near_distance
        return centers

    def to_dict(self) -> dict:
        data = {key: getattr(self, key) for key in self.FIELDS}
        if self.centers is not None:
            data['centers'] = self.centers.tolist()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> 'SyntheticSpec':
        unknown = set(data) - set(cls.FIELDS) - {'centers'}
        if unknown:
            raise DataError(f"Unknown synthetic data settings: {sorted(unknown)}")
        return cls(**data)

    def __repr__(self) -> str:
        return (
            f"SyntheticSpec(n_classes={self.n_classes}, dimension={self.dimension}, "
            f"per_class={self.per_class}, seed={self.seed})"
        )


def generate_synthetic(spec: SyntheticSpec) -> LabeledDataset:
    """
    Draw `per_class` samples for every class, class 0 first. The same spec
    and seed always produce the same dataset.

    An empty dataset (per_class = 0) is returned as is, and fails
    validation wherever it's used.

    >>> ds = generate_synthetic(SyntheticSpec(n_classes=3, per_class=5, seed=1))
    >>> ds
    LabeledDataset(n_samples=15, dimension=2, n_classes=3)
    >>> ds.labels[:6]
    (0, 0, 0, 0, 0, 1)
    """
    rng = np.random.default_rng(spec.seed)
    centers = spec.class_centers()
    # Columns are the long diagonal and the short one.
    rotation = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)

    samples = []
    labels = []
    for label in range(spec.n_classes):
        noise = rng.standard_normal((spec.per_class, spec.dimension)) * spec.spread
        noise[:, 0] *= spec.elongation
        noise[:, :2] = noise[:, :2] @ rotation.T
        samples.extend(centers[label] + noise)
        labels.extend([label] * spec.per_class)

    label_names = [str(label) for label in range(spec.n_classes)]
    logger.debug("Generated %d synthetic samples from %r", len(samples), spec)
    return LabeledDataset(samples, labels, label_names)
