"""
Domain types shared by the rest of lccmatch: labeled datasets, label pairs,
label pair sets, signatures and chain traces, plus the exceptions raised
throughout the package.

Labels are dense integer indices 0..l-1, with a parallel table of display
names. A label pair is unordered, so it is always stored in canonical form
with the smaller label first:

>>> canonical_pair(4, 1)
LabelPair(1, 4)

>>> canonical_pair(1, 4) == canonical_pair(4, 1)
True

>>> canonical_pair(2, 2)
Traceback (most recent call last):
    ...
lccmatch.core.SelfPair: A label pair needs two different labels, got 2 twice

Constructing a pair directly in the wrong order is an error, rather than
being silently fixed:

>>> LabelPair(4, 1)
Traceback (most recent call last):
    ...
lccmatch.core.NonCanonicalPair: Label pairs are written smaller label first, got (4, 1)
"""
import enum
from operator import itemgetter
from typing import Dict, Iterable, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np


class MatcherError(ValueError):
    """
    The base class of every error lccmatch raises on purpose.
    """


class DataError(MatcherError):
    """
    Something is wrong with a dataset, a label, or a document we were given.
    """


class NumericError(MatcherError):
    """
    The inputs are well-formed, but the math they lead to is degenerate.
    """


class EmptyDataset(DataError):
    pass


class RaggedFeatures(DataError):
    pass


class LabelOutOfRange(DataError):
    pass


class LengthMismatch(DataError):
    pass


class SelfPair(DataError):
    pass


class NonCanonicalPair(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class InvalidThreshold(DataError):
    pass


class MalformedDocument(DataError):
    pass


class VersionMismatch(DataError):
    pass


class InvariantViolation(DataError):
    pass


class MissingGallery(DataError):
    pass


class DegenerateTable(DataError):
    pass


class UnsupportedCriticalValue(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MissingClass(DataError):
    """
    A class that training needs has no samples. When the failure happened
    while training the local model for a label pair, `pair` says which one.
    """

    def __init__(self, label: int, pair: Optional['LabelPair'] = None):
        self.label = label
        self.pair = pair
        if pair is None:
            message = f"Class {label} has no samples"
        else:
            message = f"Class {label} has no samples, so the local model for {pair!r} can't be trained"
        super().__init__(message)


class MissingLocalVector(DataError):
    def __init__(self, pair: 'LabelPair'):
        self.pair = pair
        super().__init__(f"The signature has no local matching vector for {pair!r}")


class NonFiniteLoss(NumericError):
    pass


class DegenerateMeans(NumericError):
    pass


class ZeroVector(NumericError):
    pass


class SingularDenominator(NumericError):
    pass


class PairSource(enum.Enum):
    SIMILARITY = 'similarity'
    CONFUSION = 'confusion'


class SignatureMode(enum.Enum):
    CLASSIFICATION = 'classification'
    IDENTIFICATION = 'identification'


class Termination(enum.Enum):
    NO_PAIRS = 'no-pairs'
    NO_IMPROVEMENT = 'no-improvement'
    CYCLE_GUARD = 'cycle-guard'


class LabeledDataset:
    """
    Real-valued feature vectors with integer class labels, and the display
    names of those labels.

    Calling the constructor doesn't check anything, so that
    `validate_dataset` can describe what's wrong with a malformed dataset.
    Use `LabeledDataset.make`, which validates, when building one for real.

    >>> ds = LabeledDataset.make([[0.0, 0.0], [1.0, 1.0], [0.0, 0.5]], [0, 1, 0], ['a', 'b'])
    >>> ds
    LabeledDataset(n_samples=3, dimension=2, n_classes=2)
    >>> ds.class_counts()
    [2, 1]
    """

    def __init__(
        self,
        samples: Sequence[Sequence[float]],
        labels: Sequence[int],
        label_names: Sequence[str],
    ):
        self.samples: Tuple[np.ndarray, ...] = tuple(
            np.asarray(sample, dtype=float).reshape(-1) for sample in samples
        )
        self.labels: Tuple[int, ...] = tuple(int(label) for label in labels)
        self.label_names: Tuple[str, ...] = tuple(str(name) for name in label_names)
        self._features: Optional[np.ndarray] = None

    @classmethod
    def make(
        cls,
        samples: Sequence[Sequence[float]],
        labels: Sequence[int],
        label_names: Optional[Sequence[str]] = None,
    ) -> 'LabeledDataset':
        """
        Build a dataset and check its invariants. If `label_names` is
        omitted, labels are named after their indices and the label count is
        one more than the largest label.
        """
        if label_names is None:
            n_classes = max((int(label) for label in labels), default=-1) + 1
            label_names = [str(index) for index in range(n_classes)]
        dataset = cls(samples, labels, label_names)
        validate_dataset(dataset)
        return dataset

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    @property
    def n_classes(self) -> int:
        return len(self.label_names)

    @property
    def dimension(self) -> int:
        return self.samples[0].shape[0] if self.samples else 0

    @property
    def features(self) -> np.ndarray:
        """
        The samples stacked into an N x d array.
        """
        if self._features is None:
            features = np.vstack(self.samples)
            features.setflags(write=False)
            self._features = features
        return self._features

    @property
    def label_array(self) -> np.ndarray:
        return np.asarray(self.labels, dtype=int)

    def class_counts(self) -> List[int]:
        counts = np.bincount(self.label_array, minlength=self.n_classes)
        return [int(count) for count in counts]

    def subset(self, indices: Iterable[int]) -> 'LabeledDataset':
        """
        Select some samples, keeping the whole label table.
        """
        indices = list(indices)
        return LabeledDataset(
            [self.samples[i] for i in indices],
            [self.labels[i] for i in indices],
            self.label_names,
        )

    def split(
        self, fractions: Sequence[float] = (0.5, 0.25, 0.25), seed: int = 0
    ) -> List['LabeledDataset']:
        """
        Split the samples of each class separately, in the given proportions,
        after shuffling them with `seed`. The last part gets whatever is left
        after rounding, so every sample lands in exactly one part.

        A class with at least as many samples as there are parts puts at
        least one sample in every part, taking it from the largest. A
        smaller class fills the parts one sample each, in order.

        >>> ds = LabeledDataset.make([[float(i)] for i in range(8)], [0, 0, 0, 0, 1, 1, 1, 1])
        >>> [part.n_samples for part in ds.split((0.5, 0.25, 0.25))]
        [4, 2, 2]
        >>> ds = LabeledDataset.make([[float(i)] for i in range(6)], [0, 0, 0, 1, 1, 1])
        >>> [part.n_samples for part in ds.split((0.5, 0.25, 0.25))]
        [2, 2, 2]
        """
        if not fractions or any(fraction <= 0 for fraction in fractions):
            raise DataError(f"Split fractions must be positive, got {list(fractions)}")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise DataError(f"Split fractions must sum to 1, got {list(fractions)}")

        rng = np.random.default_rng(seed)
        parts: List[List[int]] = [[] for _ in fractions]
        labels = self.label_array
        for label in range(self.n_classes):
            members = np.flatnonzero(labels == label)
            members = members[rng.permutation(len(members))]
            start = 0
            for index, count in enumerate(_part_sizes(len(members), fractions)):
                parts[index].extend(int(i) for i in members[start:start + count])
                start += count
        return [self.subset(sorted(part)) for part in parts]

    def __len__(self) -> int:
        return self.n_samples

    def __repr__(self) -> str:
        return (
            f"LabeledDataset(n_samples={self.n_samples}, dimension={self.dimension}, "
            f"n_classes={self.n_classes})"
        )


def _part_sizes(n: int, fractions: Sequence[float]) -> List[int]:
    """
    How many of a class's `n` samples go to each part of a split.

    >>> _part_sizes(2, (0.5, 0.25, 0.25))
    [1, 1, 0]
    >>> _part_sizes(3, (0.5, 0.25, 0.25))
    [1, 1, 1]
    >>> _part_sizes(40, (0.5, 0.25, 0.25))
    [20, 10, 10]
    """
    if n < len(fractions):
        return [1] * n + [0] * (len(fractions) - n)
    sizes = []
    remaining = n
    for fraction in fractions[:-1]:
        size = min(remaining, int(round(fraction * n)))
        sizes.append(size)
        remaining -= size
    sizes.append(remaining)
    for index in range(len(sizes)):
        if sizes[index] == 0:
            sizes[int(np.argmax(sizes))] -= 1
            sizes[index] = 1
    return sizes


def validate_dataset(ds: LabeledDataset) -> None:
    """
    Confirm that a dataset is usable: it has samples, one label per sample,
    features of a single dimension, and labels inside the label table.

    >>> validate_dataset(LabeledDataset([], [], ['a']))
    Traceback (most recent call last):
        ...
    lccmatch.core.EmptyDataset: The dataset has no samples

    >>> validate_dataset(LabeledDataset([[1.0], [2.0], [3.0]], [0, 5, 1], ['a', 'b', 'c']))
    Traceback (most recent call last):
        ...
    lccmatch.core.LabelOutOfRange: Sample 1 has label 5, but there are only 3 labels
    """
    if not ds.samples:
        raise EmptyDataset("The dataset has no samples")
    if len(ds.samples) != len(ds.labels):
        raise LengthMismatch(
            f"There are {len(ds.samples)} samples but {len(ds.labels)} labels"
        )
    dimension = ds.samples[0].shape[0]
    for index, sample in enumerate(ds.samples):
        if sample.shape[0] != dimension:
            raise RaggedFeatures(
                f"Sample {index} has {sample.shape[0]} features, but sample 0 has {dimension}"
            )
    n_classes = len(ds.label_names)
    for index, label in enumerate(ds.labels):
        if not 0 <= label < n_classes:
            raise LabelOutOfRange(
                f"Sample {index} has label {label}, but there are only {n_classes} labels"
            )


class LabelPair(tuple):
    """
    An unordered pair of labels, stored smaller label first. Pairs sort by
    (lo, hi) because they're tuples.
    """

    __slots__ = ()

    def __new__(cls, lo: int, hi: int) -> 'LabelPair':
        lo, hi = int(lo), int(hi)
        if lo == hi:
            raise SelfPair(f"A label pair needs two different labels, got {lo} twice")
        if lo > hi:
            raise NonCanonicalPair(
                f"Label pairs are written smaller label first, got ({lo}, {hi})"
            )
        return super().__new__(cls, (lo, hi))

    lo = property(itemgetter(0))
    hi = property(itemgetter(1))

    def other(self, label: int) -> int:
        """
        The label in this pair that isn't `label`.

        >>> LabelPair(1, 4).other(4)
        1
        """
        if label == self.lo:
            return self.hi
        if label == self.hi:
            return self.lo
        raise KeyError(label)

    def __getnewargs__(self):
        return (self.lo, self.hi)

    def __repr__(self) -> str:
        return f"LabelPair({self.lo}, {self.hi})"


def canonical_pair(i: int, j: int) -> LabelPair:
    """
    The canonical pair of two different labels, whichever order they come in.
    """
    i, j = int(i), int(j)
    if i == j:
        raise SelfPair(f"A label pair needs two different labels, got {i} twice")
    return LabelPair(min(i, j), max(i, j))


class LabelPairSet:
    """
    The label pairs that have local models, the score matrix they were
    selected from, and the threshold used.

    >>> pairs = LabelPairSet([canonical_pair(2, 1), LabelPair(0, 1), LabelPair(0, 1)], PairSource.CONFUSION, 0.1)
    >>> pairs
    LabelPairSet([LabelPair(0, 1), LabelPair(1, 2)], source='confusion', threshold=0.1)
    >>> pairs.containing(1)
    [LabelPair(0, 1), LabelPair(1, 2)]
    >>> pairs.containing(0)
    [LabelPair(0, 1)]
    """

    def __init__(self, pairs: Iterable[LabelPair], source: PairSource, threshold: float):
        self.pairs: Tuple[LabelPair, ...] = tuple(sorted(set(pairs)))
        self.source = PairSource(source)
        self.threshold = float(threshold)
        self._by_label: Dict[int, List[LabelPair]] = {}
        for pair in self.pairs:
            self._by_label.setdefault(pair.lo, []).append(pair)
            self._by_label.setdefault(pair.hi, []).append(pair)

    def containing(self, label: int) -> List[LabelPair]:
        return list(self._by_label.get(label, ()))

    def labels(self) -> List[int]:
        return sorted(self._by_label)

    def to_dict(self) -> dict:
        return {
            'source': self.source.value,
            'threshold': self.threshold,
            'pairs': [[pair.lo, pair.hi] for pair in self.pairs],
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'LabelPairSet':
        try:
            pairs = [LabelPair(lo, hi) for lo, hi in data['pairs']]
            return cls(pairs, PairSource(data['source']), float(data['threshold']))
        except (KeyError, TypeError, ValueError) as err:
            if isinstance(err, MatcherError):
                raise
            raise MalformedDocument(f"Not a label pair set document: {err}") from err

    def __iter__(self) -> Iterator[LabelPair]:
        return iter(self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def __contains__(self, pair) -> bool:
        return pair in self._by_label.get(pair[0], ())

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabelPairSet):
            return False
        return (
            self.pairs == other.pairs
            and self.source == other.source
            and self.threshold == other.threshold
        )

    def __repr__(self) -> str:
        return (
            f"LabelPairSet({list(self.pairs)!r}, source={self.source.value!r}, "
            f"threshold={self.threshold!r})"
        )


class Signature:
    """
    What we remember about one sample: the global matching vector, and the
    local matching vector (b_lo, b_hi) of every label pair that has a local
    model. Matching only ever looks at signatures, never at the models.
    """

    def __init__(
        self,
        global_component: Sequence[float],
        local_component: Dict[LabelPair, Tuple[float, float]],
        mode: SignatureMode = SignatureMode.CLASSIFICATION,
    ):
        global_component = np.array(global_component, dtype=float).reshape(-1)
        global_component.setflags(write=False)
        self.global_component = global_component
        self.local_component: Dict[LabelPair, Tuple[float, float]] = {
            pair: (float(values[0]), float(values[1]))
            for pair, values in sorted(local_component.items())
        }
        self.mode = SignatureMode(mode)

    @property
    def n_labels(self) -> int:
        return self.global_component.shape[0]

    @property
    def local_value_count(self) -> int:
        """
        The number of reals in the local component: two per label pair.
        """
        return 2 * len(self.local_component)

    def covers(self, pair_set: LabelPairSet) -> bool:
        return all(pair in self.local_component for pair in pair_set)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Signature):
            return False
        return (
            self.mode == other.mode
            and np.array_equal(self.global_component, other.global_component)
            and self.local_component == other.local_component
        )

    def __repr__(self) -> str:
        return (
            f"Signature(n_labels={self.n_labels}, n_pairs={len(self.local_component)}, "
            f"mode={self.mode.value!r})"
        )


def validate_signature(s: Signature, tolerance: float = 1e-9) -> None:
    """
    Check the invariants of a signature: a classification signature's global
    component is a probability vector, and every local matching vector is a
    pair of probabilities summing to 1.

    >>> validate_signature(Signature([0.2, 0.8], {LabelPair(0, 1): (0.3, 0.8)}))
    Traceback (most recent call last):
        ...
    lccmatch.core.InvariantViolation: The local matching vector for LabelPair(0, 1) sums to 1.1, not 1
    """
    values = s.global_component
    if values.shape[0] == 0:
        raise InvariantViolation("The global component is empty")
    if not np.all(np.isfinite(values)):
        raise InvariantViolation("The global component has non-finite entries")
    if s.mode == SignatureMode.CLASSIFICATION:
        if np.any(values < -tolerance) or np.any(values > 1 + tolerance):
            raise InvariantViolation("The global component has entries outside [0, 1]")
        if abs(values.sum() - 1.0) > tolerance:
            raise InvariantViolation(
                f"The global component sums to {values.sum():.6g}, not 1"
            )
    for pair, (b_lo, b_hi) in s.local_component.items():
        if not isinstance(pair, LabelPair):
            raise InvariantViolation(f"{pair!r} is not a canonical label pair")
        if pair.hi >= s.n_labels:
            raise InvariantViolation(
                f"{pair!r} refers to a label beyond the {s.n_labels} in the global component"
            )
        for value in (b_lo, b_hi):
            if not (-tolerance <= value <= 1 + tolerance):
                raise InvariantViolation(
                    f"The local matching vector for {pair!r} has an entry outside [0, 1]"
                )
        if abs(b_lo + b_hi - 1.0) > tolerance:
            raise InvariantViolation(
                f"The local matching vector for {pair!r} sums to {b_lo + b_hi:.6g}, not 1"
            )


class ChainStep(NamedTuple):
    pair: LabelPair
    accepted_label: int
    local_value: float


class ChainTrace:
    """
    The walk the hierarchical matcher took for one sample: where it started,
    each local model that moved it, where it ended and why it stopped.
    """

    def __init__(
        self,
        start_label: int,
        steps: Sequence[ChainStep],
        final_label: int,
        terminated_by: Termination,
    ):
        self.start_label = int(start_label)
        self.steps: Tuple[ChainStep, ...] = tuple(steps)
        self.final_label = int(final_label)
        self.terminated_by = Termination(terminated_by)

    @property
    def length(self) -> int:
        return len(self.steps)

    def to_dict(self) -> dict:
        return {
            'start': self.start_label,
            'steps': [
                {
                    'pair': [step.pair.lo, step.pair.hi],
                    'accepted': step.accepted_label,
                    'value': step.local_value,
                }
                for step in self.steps
            ],
            'final': self.final_label,
            'terminated_by': self.terminated_by.value,
        }

    def __eq__(self, other) -> bool:
        if not isinstance(other, ChainTrace):
            return False
        return (
            self.start_label == other.start_label
            and self.steps == other.steps
            and self.final_label == other.final_label
            and self.terminated_by == other.terminated_by
        )

    def __repr__(self) -> str:
        path = ' -> '.join(
            [str(self.start_label)] + [str(step.accepted_label) for step in self.steps]
        )
        return f"ChainTrace({path}, terminated_by={self.terminated_by.value!r})"
