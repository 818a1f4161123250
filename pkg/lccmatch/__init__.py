"""
lccmatch corrects a classifier's mistakes with local classifier chains.

A global model scores a sample over every label. Some labels are easy to
mix up with each other, and we can tell which ones from how the global model
does on a validation set: either their mean score vectors are similar, or
the model actually confuses them. Each such pair of labels gets a local
binary model, trained only on those two labels. To match a sample, we start
from the global model's answer and follow a chain of local models, each of
which can move the match to the other label of its pair, until none of them
improves it.

See README.md for the main documentation. The package is organized as:

- `lccmatch.core`: labels, label pairs, signatures, traces and errors
- `lccmatch.models`: the scoring models and their training
- `lccmatch.matrices`: similarity and confusion matrices
- `lccmatch.pairs`: choosing label pairs and training local models
- `lccmatch.signature`: per-sample signatures and their file format
- `lccmatch.matcher`: the chain matcher and identification galleries
- `lccmatch.stats`: rank-based comparison of methods across splits
- `lccmatch.datasets`, `lccmatch.config`, `lccmatch.pipeline`, `lccmatch.cli`:
  the experiment harness
"""
from lccmatch.core import (
    ChainStep,
    ChainTrace,
    DataError,
    LabeledDataset,
    LabelPair,
    LabelPairSet,
    MatcherError,
    NumericError,
    PairSource,
    Signature,
    SignatureMode,
    Termination,
    canonical_pair,
    validate_dataset,
    validate_signature,
)
from lccmatch.matcher import (
    Gallery,
    global_match_classification,
    global_match_identification,
    match,
    match_batch,
    match_chain,
)
from lccmatch.matrices import confusion_matrix, mean_vectors, similarity_matrix
from lccmatch.models import (
    ModelConfig,
    ScoringModel,
    train_local_model,
    train_logistic,
    train_model,
    train_nearest_centroid,
)
from lccmatch.pairs import (
    LocalModelBank,
    build_local_bank,
    select_pairs_confusion,
    select_pairs_similarity,
)
from lccmatch.signature import (
    build_signature,
    deserialize_signature,
    serialize_signature,
)
from lccmatch.stats import (
    compute_ranks,
    critical_difference,
    friedman_chi2,
    iman_f,
    pairwise_significance,
)

__all__ = [
    'ChainStep',
    'ChainTrace',
    'DataError',
    'Gallery',
    'LabelPair',
    'LabelPairSet',
    'LabeledDataset',
    'LocalModelBank',
    'MatcherError',
    'ModelConfig',
    'NumericError',
    'PairSource',
    'ScoringModel',
    'Signature',
    'SignatureMode',
    'Termination',
    'build_local_bank',
    'build_signature',
    'canonical_pair',
    'compute_ranks',
    'confusion_matrix',
    'critical_difference',
    'deserialize_signature',
    'friedman_chi2',
    'global_match_classification',
    'global_match_identification',
    'iman_f',
    'match',
    'match_batch',
    'match_chain',
    'mean_vectors',
    'pairwise_significance',
    'select_pairs_confusion',
    'select_pairs_similarity',
    'serialize_signature',
    'similarity_matrix',
    'train_local_model',
    'train_logistic',
    'train_model',
    'train_nearest_centroid',
    'validate_dataset',
    'validate_signature',
]
