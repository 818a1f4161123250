import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lccmatch.core import (
    DataError,
    InvalidThreshold,
    LabeledDataset,
    LabelPair,
    LabelPairSet,
    MissingClass,
    PairSource,
)
from lccmatch.matrices import ConfusionMatrices, SimilarityMatrices
from lccmatch.models import ModelConfig, model_from_dict
from lccmatch.pairs import (
    LocalModelBank,
    PairSelectionConfig,
    build_local_bank,
    select_pairs,
    select_pairs_confusion,
    select_pairs_similarity,
)


def brute_force_pairs(matrix, threshold):
    n = len(matrix)
    found = set()
    for i in range(n):
        for j in range(n):
            if i != j and (matrix[i][j] > threshold or matrix[j][i] > threshold):
                found.add((min(i, j), max(i, j)))
    return sorted(found)


square = st.integers(2, 7).flatmap(
    lambda n: arrays(np.float64, (n, n), elements=st.floats(0.0, 1.0))
)


@given(square, st.floats(0.0, 1.0))
def test_confusion_selection_matches_brute_force(r, threshold):
    selected = select_pairs_confusion(r, threshold)
    assert [tuple(pair) for pair in selected] == brute_force_pairs(r, threshold)
    assert selected.source == PairSource.CONFUSION


@given(square, st.floats(0.0, 1.0))
def test_similarity_selection_matches_brute_force(q, threshold):
    q = np.maximum(q, q.T)
    selected = select_pairs_similarity(q, threshold)
    assert [tuple(pair) for pair in selected] == brute_force_pairs(q, threshold)


@given(square, st.lists(st.floats(0.0, 1.0), min_size=2, max_size=5))
def test_selection_is_monotone_in_threshold(r, thresholds):
    thresholds = sorted(thresholds)
    sets = [set(select_pairs_confusion(r, t)) for t in thresholds]
    for looser, stricter in zip(sets, sets[1:]):
        assert stricter <= looser


def test_threshold_one_selects_nothing():
    q = np.ones((4, 4))
    assert len(select_pairs_similarity(q, 1.0)) == 0


def test_selection_is_strict():
    r = np.array([[0.9, 0.1], [0.0, 1.0]])
    assert len(select_pairs_confusion(r, 0.1)) == 0
    assert list(select_pairs_confusion(r, 0.09)) == [LabelPair(0, 1)]


def test_invalid_thresholds():
    with pytest.raises(InvalidThreshold):
        select_pairs_confusion(np.eye(2), 1.5)
    with pytest.raises(InvalidThreshold):
        PairSelectionConfig('similarity', -0.1)


def test_select_pairs_dispatch():
    q = np.array([[1.0, 0.8], [0.8, 1.0]])
    r = np.array([[1.0, 0.0], [0.0, 1.0]])
    similarity = SimilarityMatrices(None, 1.0 - q, q)
    confusion = ConfusionMatrices(None, r)
    assert len(select_pairs(similarity, confusion, PairSelectionConfig('similarity', 0.5))) == 1
    assert len(select_pairs(similarity, confusion, PairSelectionConfig('confusion', 0.5))) == 0
    with pytest.raises(DataError):
        select_pairs(None, confusion, PairSelectionConfig('similarity', 0.5))


def small_dataset():
    samples = [[0.0], [0.3], [2.0], [2.3], [4.0], [4.3]]
    return LabeledDataset.make(samples, [0, 0, 1, 1, 2, 2])


def test_build_local_bank():
    pairs = LabelPairSet([LabelPair(0, 1), LabelPair(1, 2)], PairSource.CONFUSION, 0.1)
    bank = build_local_bank(small_dataset(), pairs, ModelConfig(kind='centroid'))
    assert len(bank) == 2
    assert list(bank.models) == [LabelPair(0, 1), LabelPair(1, 2)]
    assert bank.models[LabelPair(0, 1)].predict([0.1]) == 0
    assert bank.models[LabelPair(1, 2)].predict([4.1]) == 1


def test_build_local_bank_in_parallel_matches_serial():
    pairs = LabelPairSet(
        [LabelPair(0, 1), LabelPair(0, 2), LabelPair(1, 2)], PairSource.SIMILARITY, 0.2
    )
    config = ModelConfig(max_iterations=50)
    serial = build_local_bank(small_dataset(), pairs, config)
    parallel = build_local_bank(small_dataset(), pairs, config, workers=3)
    for pair in pairs:
        assert np.array_equal(serial.models[pair].weights, parallel.models[pair].weights)


def test_bank_cache_is_reused():
    cache = {}
    loose = LabelPairSet([LabelPair(0, 1), LabelPair(1, 2)], PairSource.CONFUSION, 0.1)
    strict = LabelPairSet([LabelPair(0, 1)], PairSource.CONFUSION, 0.3)
    first = build_local_bank(small_dataset(), loose, ModelConfig(kind='centroid'), cache=cache)
    second = build_local_bank(small_dataset(), strict, ModelConfig(kind='centroid'), cache=cache)
    assert second.models[LabelPair(0, 1)] is first.models[LabelPair(0, 1)]
    assert set(cache) == {LabelPair(0, 1), LabelPair(1, 2)}


def test_bank_reports_missing_class_with_pair():
    ds = LabeledDataset.make([[0.0], [1.0]], [0, 2], ['a', 'b', 'c'])
    pairs = LabelPairSet([LabelPair(1, 2)], PairSource.CONFUSION, 0.1)
    with pytest.raises(MissingClass) as excinfo:
        build_local_bank(ds, pairs)
    assert excinfo.value.label == 1
    assert excinfo.value.pair == LabelPair(1, 2)


def test_bank_document():
    pairs = LabelPairSet([LabelPair(0, 2)], PairSource.CONFUSION, 0.1)
    bank = build_local_bank(small_dataset(), pairs, ModelConfig(max_iterations=20))
    rebuilt = LocalModelBank.from_dict(bank.to_dict())
    assert rebuilt.pair_set == pairs
    x = [1.0]
    assert np.array_equal(rebuilt.models[LabelPair(0, 2)].score(x), bank.models[LabelPair(0, 2)].score(x))
    assert model_from_dict(bank.to_dict()['models'][0]['model']).class_count == 2


def test_bank_must_match_pair_set():
    pairs = LabelPairSet([LabelPair(0, 1)], PairSource.CONFUSION, 0.1)
    with pytest.raises(DataError):
        LocalModelBank(pairs, {})
