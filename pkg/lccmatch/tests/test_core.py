import pickle

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lccmatch.core import (
    ChainStep,
    ChainTrace,
    DataError,
    EmptyDataset,
    InvariantViolation,
    LabeledDataset,
    LabelOutOfRange,
    LabelPair,
    LabelPairSet,
    MalformedDocument,
    MissingClass,
    NonCanonicalPair,
    PairSource,
    ParseError,
    RaggedFeatures,
    SelfPair,
    Signature,
    SignatureMode,
    Termination,
    canonical_pair,
    validate_dataset,
    validate_signature,
)


@given(st.integers(0, 50), st.integers(0, 50))
def test_canonical_pair_is_symmetric(i, j):
    if i == j:
        with pytest.raises(SelfPair):
            canonical_pair(i, j)
    else:
        pair = canonical_pair(i, j)
        assert pair == canonical_pair(j, i)
        assert pair.lo < pair.hi
        assert {pair.lo, pair.hi} == {i, j}


def test_label_pair_other():
    pair = LabelPair(2, 7)
    assert pair.other(2) == 7
    assert pair.other(7) == 2
    with pytest.raises(KeyError):
        pair.other(3)


def test_label_pair_pickles():
    pair = LabelPair(0, 3)
    assert pickle.loads(pickle.dumps(pair)) == pair
    assert isinstance(pickle.loads(pickle.dumps(pair)), LabelPair)


def test_label_pair_rejects_wrong_order():
    with pytest.raises(NonCanonicalPair):
        LabelPair(3, 1)


def test_pair_set_sorts_and_deduplicates():
    pairs = LabelPairSet(
        [LabelPair(1, 2), LabelPair(0, 3), LabelPair(1, 2)], PairSource.SIMILARITY, 0.5
    )
    assert list(pairs) == [LabelPair(0, 3), LabelPair(1, 2)]
    assert len(pairs) == 2
    assert LabelPair(1, 2) in pairs
    assert LabelPair(0, 1) not in pairs
    assert pairs.labels() == [0, 1, 2, 3]
    assert pairs.containing(5) == []


def test_pair_set_dict_round_trip():
    pairs = LabelPairSet([LabelPair(0, 1), LabelPair(1, 4)], PairSource.CONFUSION, 0.05)
    data = pairs.to_dict()
    assert data == {'source': 'confusion', 'threshold': 0.05, 'pairs': [[0, 1], [1, 4]]}
    assert LabelPairSet.from_dict(data) == pairs


def test_pair_set_from_bad_dict():
    with pytest.raises(MalformedDocument):
        LabelPairSet.from_dict({'pairs': [[0, 1]]})
    with pytest.raises(NonCanonicalPair):
        LabelPairSet.from_dict({'source': 'confusion', 'threshold': 0.1, 'pairs': [[1, 0]]})


def test_dataset_make_names_labels():
    ds = LabeledDataset.make([[1.0], [2.0]], [0, 2])
    assert ds.label_names == ('0', '1', '2')
    assert ds.class_counts() == [1, 0, 1]
    assert ds.features.shape == (2, 1)
    with pytest.raises(ValueError):
        ds.features[0, 0] = 5.0


def test_dataset_validation_errors():
    with pytest.raises(EmptyDataset):
        LabeledDataset.make([], [], ['a'])
    with pytest.raises(RaggedFeatures):
        LabeledDataset.make([[1.0, 2.0], [1.0]], [0, 0], ['a'])
    with pytest.raises(LabelOutOfRange):
        LabeledDataset.make([[1.0]], [-1], ['a'])
    with pytest.raises(DataError):
        validate_dataset(LabeledDataset([[1.0], [2.0]], [0], ['a']))


def test_split_is_stratified_and_complete():
    labels = [0] * 40 + [1] * 20
    ds = LabeledDataset.make([[float(i)] for i in range(60)], labels)
    train, validation, test = ds.split((0.5, 0.25, 0.25), seed=3)
    assert train.class_counts() == [20, 10]
    assert validation.class_counts() == [10, 5]
    assert test.class_counts() == [10, 5]
    seen = sorted(float(x[0]) for part in (train, validation, test) for x in part.samples)
    assert seen == [float(i) for i in range(60)]


def test_split_is_deterministic():
    ds = LabeledDataset.make([[float(i)] for i in range(30)], [i % 3 for i in range(30)])
    first = [part.labels for part in ds.split(seed=9)]
    second = [part.labels for part in ds.split(seed=9)]
    assert first == second


@pytest.mark.parametrize('per_class', range(1, 13))
def test_split_of_small_classes(per_class):
    labels = [0] * per_class + [1] * 2
    ds = LabeledDataset.make([[float(i)] for i in range(len(labels))], labels)
    train, validation, test = ds.split((0.5, 0.25, 0.25), seed=per_class)
    counts = [part.class_counts()[0] for part in (train, validation, test)]
    assert sum(counts) == per_class
    if per_class >= 3:
        assert min(counts) >= 1
    else:
        assert counts == [1] * per_class + [0] * (3 - per_class)
    # Two samples go to training and validation, so validation is never empty
    assert [part.class_counts()[1] for part in (train, validation, test)] == [1, 1, 0]


def test_split_rejects_bad_fractions():
    ds = LabeledDataset.make([[0.0], [1.0]], [0, 1])
    with pytest.raises(DataError):
        ds.split((0.5, 0.6))
    with pytest.raises(DataError):
        ds.split((1.0, 0.0))


def test_signature_local_value_count():
    local = {LabelPair(0, 1): (0.4, 0.6), LabelPair(1, 2): (0.5, 0.5)}
    s = Signature([0.2, 0.3, 0.5], local)
    assert s.local_value_count == 4
    assert s.n_labels == 3
    assert list(s.local_component) == [LabelPair(0, 1), LabelPair(1, 2)]
    validate_signature(s)


def test_signature_covers():
    s = Signature([0.5, 0.5, 0.0], {LabelPair(0, 1): (0.4, 0.6)})
    assert s.covers(LabelPairSet([LabelPair(0, 1)], PairSource.CONFUSION, 0.1))
    assert not s.covers(LabelPairSet([LabelPair(1, 2)], PairSource.CONFUSION, 0.1))


def test_validate_signature_rejects():
    with pytest.raises(InvariantViolation):
        validate_signature(Signature([0.5, 0.6], {}))
    with pytest.raises(InvariantViolation):
        validate_signature(Signature([0.5, 0.5], {LabelPair(0, 2): (0.5, 0.5)}))
    with pytest.raises(InvariantViolation):
        validate_signature(Signature([np.nan, 1.0], {}))
    # Identification signatures hold features, not probabilities
    validate_signature(Signature([3.0, -2.0], {}, SignatureMode.IDENTIFICATION))


def test_chain_trace_to_dict():
    trace = ChainTrace(
        1, [ChainStep(LabelPair(0, 1), 0, 0.9)], 0, Termination.NO_IMPROVEMENT
    )
    assert trace.length == 1
    assert trace.to_dict() == {
        'start': 1,
        'steps': [{'pair': [0, 1], 'accepted': 0, 'value': 0.9}],
        'final': 0,
        'terminated_by': 'no-improvement',
    }


def test_error_messages():
    assert str(ParseError("bad token", 4)) == "line 4: bad token"
    err = MissingClass(3, LabelPair(1, 3))
    assert err.label == 3
    assert err.pair == LabelPair(1, 3)
    assert isinstance(err, ValueError)
