"""
The hierarchical matcher. A sample's match starts from the global decision
and then walks a chain of local models: at each step, among the local
models whose pair contains the current label, the one voting most strongly
for the other label moves the match there. The walk stops when no local
model overturns the current label, when there are no local models for it,
or when it would come back to a label it already visited.

Here a dog is corrected to a cat by the cat/dog local model:

>>> from lccmatch.core import LabelPair, PairSource
>>> cat, dog = 0, 1
>>> s = Signature([0.4, 0.6], {LabelPair(cat, dog): (0.9, 0.1)})
>>> pairs = LabelPairSet([LabelPair(cat, dog)], PairSource.CONFUSION, 0.1)
>>> final, trace = match(s, pairs)
>>> final
0
>>> trace
ChainTrace(1 -> 0, terminated_by='no-improvement')
"""
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from lccmatch.core import (
    ChainStep,
    ChainTrace,
    DataError,
    DimensionMismatch,
    LabeledDataset,
    LabelOutOfRange,
    LabelPairSet,
    MissingClass,
    MissingGallery,
    MissingLocalVector,
    Signature,
    SignatureMode,
    Termination,
    ZeroVector,
)
from lccmatch.models import ScoringModel
from lccmatch.util import argmax

logger = logging.getLogger(__name__)


class Gallery:
    """
    Enrolled global feature vectors with their identity labels. Every
    identity 0..l-1 has at least one entry.
    """

    def __init__(self, entries: Sequence[Tuple[int, Sequence[float]]]):
        if not entries:
            raise DataError("A gallery needs at least one entry")
        labels = np.asarray([int(label) for label, _ in entries], dtype=int)
        vectors = [np.asarray(vector, dtype=float).reshape(-1) for _, vector in entries]
        dimension = vectors[0].shape[0]
        for index, vector in enumerate(vectors):
            if vector.shape[0] != dimension:
                raise DimensionMismatch(
                    f"Gallery entry {index} has {vector.shape[0]} features, but entry 0 has {dimension}"
                )
        if labels.min() < 0:
            raise LabelOutOfRange("Gallery identities can't be negative")
        n_labels = int(labels.max()) + 1
        counts = np.bincount(labels, minlength=n_labels)
        for label, count in enumerate(counts):
            if count == 0:
                raise MissingClass(label)

        matrix = np.vstack(vectors)
        norms = np.linalg.norm(matrix, axis=1)
        if np.any(norms == 0):
            index = int(np.flatnonzero(norms == 0)[0])
            raise ZeroVector(f"Gallery entry {index} is a zero vector")

        self.labels = labels
        self.vectors = matrix
        self.norms = norms
        self.n_labels = n_labels
        self.dimension = dimension

    @classmethod
    def enroll(cls, ds: LabeledDataset, g: ScoringModel) -> 'Gallery':
        """
        Enroll every sample of a labeled dataset, using the global model's
        score vector as its global feature.
        """
        return cls([(label, g.score(x)) for x, label in zip(ds.samples, ds.labels)])

    def __len__(self) -> int:
        return len(self.labels)

    def __repr__(self) -> str:
        return f"Gallery({len(self)} entries, {self.n_labels} identities)"


def global_match_classification(s: Signature) -> int:
    """
    The label with the highest global score, ties going to the lowest label.
    """
    return argmax(s.global_component)


def global_match_identification(probe: Sequence[float], gallery: Gallery) -> Tuple[int, np.ndarray]:
    """
    Compare a probe with every gallery entry by cosine similarity. The
    matching vector holds, for each identity, its best similarity over that
    identity's entries, and the match is its argmax.

    >>> gallery = Gallery([(0, [1.0, 0.0]), (1, [0.0, 1.0]), (1, [1.0, 1.0])])
    >>> label, vector = global_match_identification([0.0, 2.0], gallery)
    >>> label, vector.tolist()
    (1, [0.0, 1.0])
    """
    probe = np.asarray(probe, dtype=float).reshape(-1)
    if probe.shape[0] != gallery.dimension:
        raise DimensionMismatch(
            f"The probe has {probe.shape[0]} features, but the gallery has {gallery.dimension}"
        )
    probe_norm = np.linalg.norm(probe)
    if probe_norm == 0:
        raise ZeroVector("The probe is a zero vector")
    similarities = (gallery.vectors @ probe) / (gallery.norms * probe_norm)
    matching = np.full(gallery.n_labels, -np.inf)
    np.maximum.at(matching, gallery.labels, similarities)
    return argmax(matching), matching


def match_chain(s: Signature, pair_set: LabelPairSet, start: int) -> ChainTrace:
    """
    Walk the chain of local models from `start`.

    Each round collects the pairs containing the current label o. Among
    them, a pair whose local vote goes to the other label, with a higher
    value than any earlier candidate this round, becomes the next label.
    If nothing beats o, o is final. If the next label was already visited,
    the chain would loop forever on these fixed votes, so it stops at o.
    """
    start = int(start)
    if not 0 <= start < s.n_labels:
        raise LabelOutOfRange(f"The chain can't start at label {start}; there are {s.n_labels} labels")

    current = start
    visited = {start}
    steps: List[ChainStep] = []
    while True:
        candidates = pair_set.containing(current)
        if not candidates:
            terminated_by = Termination.NO_PAIRS
            break

        best_value = 0.0
        next_label = current
        best_pair = None
        for pair in candidates:
            if pair not in s.local_component:
                raise MissingLocalVector(pair)
            b_lo, b_hi = s.local_component[pair]
            if b_lo >= b_hi:
                winner, value = pair.lo, b_lo
            else:
                winner, value = pair.hi, b_hi
            if winner != current and value > best_value:
                next_label, best_value, best_pair = winner, value, pair

        if next_label == current:
            terminated_by = Termination.NO_IMPROVEMENT
            break
        if next_label in visited:
            terminated_by = Termination.CYCLE_GUARD
            break
        steps.append(ChainStep(best_pair, next_label, best_value))
        visited.add(next_label)
        current = next_label

    return ChainTrace(start, steps, current, terminated_by)


def match(
    s: Signature,
    pair_set: LabelPairSet,
    gallery: Optional[Gallery] = None,
) -> Tuple[int, ChainTrace]:
    """
    The full hierarchical match: the global decision (by argmax for
    classification, or against a gallery for identification), then the
    chain of local models.
    """
    if s.mode == SignatureMode.IDENTIFICATION:
        if gallery is None:
            raise MissingGallery("Matching an identification signature needs a gallery")
        start, _ = global_match_identification(s.global_component, gallery)
    else:
        if gallery is not None:
            raise DataError("A gallery only applies to identification signatures")
        start = global_match_classification(s)
    trace = match_chain(s, pair_set, start)
    return trace.final_label, trace


def match_batch(
    signatures: Sequence[Signature],
    pair_set: LabelPairSet,
    gallery: Optional[Gallery] = None,
    workers: int = 1,
) -> List[Tuple[int, ChainTrace]]:
    def match_one(s):
        return match(s, pair_set, gallery)

    if workers > 1 and len(signatures) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(match_one, signatures))
    else:
        results = [match_one(s) for s in signatures]

    terminations: Dict[str, int] = Counter(trace.terminated_by.value for _, trace in results)
    logger.debug("Matched %d signatures: %s", len(results), dict(terminations))
    return results
