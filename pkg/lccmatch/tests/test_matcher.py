import itertools

import numpy as np
import pytest

from lccmatch.core import (
    DataError,
    DimensionMismatch,
    LabeledDataset,
    LabelOutOfRange,
    LabelPair,
    LabelPairSet,
    MissingClass,
    MissingGallery,
    MissingLocalVector,
    PairSource,
    Signature,
    SignatureMode,
    Termination,
    ZeroVector,
)
from lccmatch.matcher import (
    Gallery,
    global_match_classification,
    global_match_identification,
    match,
    match_batch,
    match_chain,
)
from lccmatch.models import train_nearest_centroid

CAT, DOG, HORSE, DEER = 0, 1, 2, 3


def pair_set(*pairs):
    return LabelPairSet([LabelPair(*pair) for pair in pairs], PairSource.CONFUSION, 0.1)


def reference_chain(global_component, local, pairs, start):
    """
    Walk the chain one step at a time from a plain dict of local votes,
    keeping a list of visited labels, and return (final label, steps,
    termination reason).
    """
    current = start
    visited = [start]
    steps = 0
    while True:
        related = sorted(p for p in pairs if current in p)
        if len(related) == 0:
            return current, steps, 'no-pairs'
        best_value = 0.0
        best_label = current
        for lo, hi in related:
            votes = local[(lo, hi)]
            winner = lo if votes[0] >= votes[1] else hi
            if winner != current and max(votes) > best_value:
                best_value = max(votes)
                best_label = winner
        if best_label == current:
            return current, steps, 'no-improvement'
        if best_label in visited:
            return current, steps, 'cycle-guard'
        visited.append(best_label)
        current = best_label
        steps += 1


def test_global_match_classification():
    assert global_match_classification(Signature([0.1, 0.7, 0.2], {})) == 1
    assert global_match_classification(Signature([0.5, 0.5], {})) == 0
    assert global_match_classification(Signature([0.25] * 4, {})) == 0


def test_dog_corrected_to_cat():
    s = Signature([0.3, 0.6, 0.1], {LabelPair(CAT, DOG): (0.9, 0.1)})
    final, trace = match(s, pair_set((CAT, DOG)))
    assert final == CAT
    assert trace.start_label == DOG
    assert trace.length == 1
    assert trace.steps[0].pair == LabelPair(CAT, DOG)
    assert trace.steps[0].accepted_label == CAT
    assert trace.steps[0].local_value == 0.9
    assert trace.terminated_by == Termination.NO_IMPROVEMENT


def test_two_step_chain_to_deer():
    # The global model says dog. The dog/horse model says horse, and then
    # the horse/deer model says deer.
    local = {
        LabelPair(CAT, DOG): (0.2, 0.8),
        LabelPair(DOG, HORSE): (0.3, 0.7),
        LabelPair(HORSE, DEER): (0.35, 0.65),
    }
    s = Signature([0.1, 0.5, 0.2, 0.2], local)
    final, trace = match(s, pair_set((CAT, DOG), (DOG, HORSE), (HORSE, DEER)))
    assert final == DEER
    assert [step.accepted_label for step in trace.steps] == [HORSE, DEER]
    assert trace.terminated_by == Termination.NO_IMPROVEMENT


def test_no_pairs_for_start_label():
    s = Signature([0.1, 0.1, 0.8], {LabelPair(0, 1): (0.5, 0.5)})
    final, trace = match(s, pair_set((0, 1)))
    assert final == 2
    assert trace.length == 0
    assert trace.terminated_by == Termination.NO_PAIRS


def test_empty_pair_set_is_global_match():
    s = Signature([0.2, 0.5, 0.3], {LabelPair(0, 1): (0.9, 0.1)})
    final, trace = match(s, pair_set())
    assert final == 1
    assert trace.terminated_by == Termination.NO_PAIRS


def test_three_cycle_stops_at_cycle_guard():
    # A -> B by the (A, B) model, B -> C by (B, C), and C -> A by (A, C)
    a, b, c = 0, 1, 2
    local = {
        LabelPair(a, b): (0.1, 0.9),
        LabelPair(b, c): (0.2, 0.8),
        LabelPair(a, c): (0.7, 0.3),
    }
    s = Signature([0.6, 0.2, 0.2], local)
    trace = match_chain(s, pair_set((a, b), (b, c), (a, c)), a)
    # From A, the (A, B) vote of 0.9 beats the (A, C) vote, which favors A
    assert [step.accepted_label for step in trace.steps] == [b, c]
    assert trace.final_label == c
    assert trace.terminated_by == Termination.CYCLE_GUARD
    assert trace.length == 2


def test_reset_comparison_each_round():
    # The second step's vote (0.6) is weaker than the first (0.9), but it
    # still moves the chain.
    local = {LabelPair(0, 1): (0.1, 0.9), LabelPair(1, 2): (0.4, 0.6)}
    trace = match_chain(Signature([1.0, 0.0, 0.0], local), pair_set((0, 1), (1, 2)), 0)
    assert trace.final_label == 2


def test_ties_keep_first_pair():
    local = {LabelPair(0, 1): (0.2, 0.8), LabelPair(0, 2): (0.2, 0.8)}
    trace = match_chain(Signature([1.0, 0.0, 0.0], local), pair_set((0, 1), (0, 2)), 0)
    assert trace.steps[0].pair == LabelPair(0, 1)


def test_missing_local_vector():
    s = Signature([0.2, 0.8], {})
    with pytest.raises(MissingLocalVector) as excinfo:
        match(s, pair_set((0, 1)))
    assert excinfo.value.pair == LabelPair(0, 1)


def test_start_out_of_range():
    with pytest.raises(LabelOutOfRange):
        match_chain(Signature([0.5, 0.5], {}), pair_set(), 2)


def random_case(rng):
    n_labels = int(rng.integers(2, 7))
    all_pairs = list(itertools.combinations(range(n_labels), 2))
    n_pairs = int(rng.integers(0, min(8, len(all_pairs)) + 1))
    chosen = [all_pairs[i] for i in rng.choice(len(all_pairs), size=n_pairs, replace=False)]
    local = {}
    for lo, hi in all_pairs:
        # Coarse values make ties common
        b_lo = float(rng.integers(0, 11)) / 10
        local[(lo, hi)] = (b_lo, 1.0 - b_lo)
    global_component = rng.random(n_labels)
    global_component /= global_component.sum()
    start = int(rng.integers(0, n_labels))
    return n_labels, chosen, local, global_component, start


def test_matches_reference_interpreter():
    rng = np.random.default_rng(2024)
    for _ in range(10000):
        n_labels, chosen, local, global_component, start = random_case(rng)
        s = Signature(global_component, {LabelPair(*p): v for p, v in local.items()})
        trace = match_chain(s, pair_set(*chosen), start)
        final, steps, reason = reference_chain(global_component, local, chosen, start)
        assert trace.final_label == final
        assert trace.length == steps
        assert trace.terminated_by.value == reason
        assert trace.length <= n_labels - 1


def test_step_soundness():
    rng = np.random.default_rng(7)
    for _ in range(2000):
        n_labels, chosen, local, global_component, start = random_case(rng)
        s = Signature(global_component, {LabelPair(*p): v for p, v in local.items()})
        pairs = pair_set(*chosen)
        trace = match_chain(s, pairs, start)
        current = start
        for step in trace.steps:
            votes = s.local_component[step.pair]
            winner = step.pair.lo if votes[0] >= votes[1] else step.pair.hi
            assert step.accepted_label == winner
            assert step.accepted_label != current
            assert current in step.pair
            # No other qualifying vote in this round is stronger
            for other in pairs.containing(current):
                other_votes = s.local_component[other]
                other_winner = other.lo if other_votes[0] >= other_votes[1] else other.hi
                if other_winner != current:
                    assert max(other_votes) <= step.local_value
            current = step.accepted_label
        # Deterministic
        assert match_chain(s, pairs, start) == trace


def test_tree_pair_graphs_never_hit_cycle_guard():
    rng = np.random.default_rng(11)
    for _ in range(2000):
        n_labels = int(rng.integers(2, 7))
        # A random tree: every label after the first hangs off an earlier one
        edges = [tuple(sorted((label, int(rng.integers(0, label))))) for label in range(1, n_labels)]
        local = {}
        for lo, hi in edges:
            b_lo = float(rng.random())
            local[LabelPair(lo, hi)] = (b_lo, 1.0 - b_lo)
        s = Signature(np.full(n_labels, 1.0 / n_labels), local)
        trace = match_chain(s, pair_set(*edges), int(rng.integers(0, n_labels)))
        assert trace.terminated_by != Termination.CYCLE_GUARD


def test_adversarial_cycles_halt():
    rng = np.random.default_rng(3)
    for _ in range(2000):
        n_labels = int(rng.integers(3, 7))
        order = [int(label) for label in rng.permutation(n_labels)]
        local = {}
        # Every consecutive pair in a random cycle votes strongly for the
        # next label, so the chain keeps wanting to go around.
        for index, label in enumerate(order):
            following = order[(index + 1) % n_labels]
            pair = LabelPair(min(label, following), max(label, following))
            value = 0.99 - 0.01 * index
            local[pair] = (value, 1 - value) if following == pair.lo else (1 - value, value)
        s = Signature(np.full(n_labels, 1.0 / n_labels), local)
        trace = match_chain(s, pair_set(*local), order[0])
        assert trace.length <= n_labels - 1


def test_gallery_identification():
    gallery = Gallery([
        (0, [1.0, 0.0, 0.0]),
        (0, [0.9, 0.1, 0.0]),
        (1, [0.0, 1.0, 0.0]),
        (2, [0.0, 0.0, 1.0]),
    ])
    label, vector = global_match_identification([0.0, 1.0, 0.0], gallery)
    assert label == 1
    assert vector[1] == pytest.approx(1.0)
    label, vector = global_match_identification([0.9, 0.1, 0.0], gallery)
    assert label == 0
    assert vector[0] == pytest.approx(1.0)


def test_identification_matches_brute_force():
    rng = np.random.default_rng(13)
    entries = [(identity, rng.normal(size=4)) for identity in range(5) for _ in range(3)]
    gallery = Gallery(entries)
    for _ in range(50):
        probe = rng.normal(size=4)
        best = {}
        for identity, vector in entries:
            cosine = vector @ probe / (np.linalg.norm(vector) * np.linalg.norm(probe))
            best[identity] = max(best.get(identity, -np.inf), cosine)
        expected = max(range(5), key=lambda identity: (best[identity], -identity))
        label, vector = global_match_identification(probe, gallery)
        assert label == expected
        assert np.allclose(vector, [best[identity] for identity in range(5)])


def test_gallery_errors():
    with pytest.raises(DataError):
        Gallery([])
    with pytest.raises(DimensionMismatch):
        Gallery([(0, [1.0]), (0, [1.0, 2.0])])
    with pytest.raises(MissingClass):
        Gallery([(0, [1.0]), (2, [1.0])])
    with pytest.raises(ZeroVector):
        Gallery([(0, [0.0, 0.0])])
    gallery = Gallery([(0, [1.0, 0.0])])
    with pytest.raises(ZeroVector):
        global_match_identification([0.0, 0.0], gallery)
    with pytest.raises(DimensionMismatch):
        global_match_identification([1.0], gallery)


def test_match_needs_gallery_for_identification():
    s = Signature([0.2, 0.9], {}, SignatureMode.IDENTIFICATION)
    gallery = Gallery([(0, [1.0, 0.0]), (1, [0.0, 1.0])])
    with pytest.raises(MissingGallery):
        match(s, pair_set())
    final, _ = match(s, pair_set(), gallery)
    assert final == 1
    with pytest.raises(DataError):
        match(Signature([0.2, 0.8], {}), pair_set(), gallery)


def test_identification_then_chain():
    s = Signature([0.1, 0.9], {LabelPair(0, 1): (0.8, 0.2)}, SignatureMode.IDENTIFICATION)
    gallery = Gallery([(0, [1.0, 0.0]), (1, [0.0, 1.0])])
    final, trace = match(s, pair_set((0, 1)), gallery)
    assert trace.start_label == 1
    assert final == 0


def test_gallery_enroll():
    ds = LabeledDataset.make([[0.0], [0.5], [4.0]], [0, 0, 1], ['ann', 'bo'])
    g = train_nearest_centroid(ds)
    gallery = Gallery.enroll(ds, g)
    assert len(gallery) == 3
    assert gallery.n_labels == 2
    label, _ = global_match_identification(g.score([4.1]), gallery)
    assert label == 1


def test_match_batch_in_parallel():
    rng = np.random.default_rng(17)
    # Use one label count so that one pair set fits every signature
    signatures = []
    for _ in range(50):
        global_component = rng.random(4)
        global_component /= global_component.sum()
        local = {}
        for lo, hi in itertools.combinations(range(4), 2):
            b_lo = float(rng.random())
            local[LabelPair(lo, hi)] = (b_lo, 1 - b_lo)
        signatures.append(Signature(global_component, local))
    pairs = pair_set(*itertools.combinations(range(4), 2))
    serial = match_batch(signatures, pairs)
    parallel = match_batch(signatures, pairs, workers=4)
    assert [final for final, _ in serial] == [final for final, _ in parallel]
    assert [trace for _, trace in serial] == [trace for _, trace in parallel]
