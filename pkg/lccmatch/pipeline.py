"""
The experiment from end to end: train a global model, measure its
similarity and confusion matrices on the validation split, and for every
pair source and threshold, build the local model bank, sign the test
samples and match them with the chain matcher.

`run_splits` repeats that on several splits and ranks the global model
against each pair source, the way `stats_report` compares methods.
"""
import contextlib
import logging
import os
from collections import Counter
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from lccmatch.config import ExperimentConfig
from lccmatch.core import (
    LabeledDataset,
    LabelPair,
    LabelPairSet,
    LengthMismatch,
    MatcherError,
    PairSource,
    Signature,
    SingularDenominator,
)
from lccmatch.datasets import generate_synthetic, ingest_csv
from lccmatch.matcher import Gallery, match_batch
from lccmatch.matrices import (
    ConfusionMatrices,
    SimilarityMatrices,
    validation_matrices,
    write_matrix_csv,
)
from lccmatch.models import ScoringModel, train_model
from lccmatch.pairs import PairSelectionConfig, build_local_bank, select_pairs
from lccmatch.signature import build_signatures
from lccmatch.stats import (
    DEFAULT_ALPHA,
    RankTable,
    Significance,
    bonferroni_dunn_q,
    compute_ranks,
    critical_difference,
    f_critical_value,
    friedman_chi2,
    friedman_p_value,
    iman_f,
    iman_p_value,
    pairwise_significance,
    read_accuracy_csv,
    write_accuracy_csv,
)
from lccmatch.util import write_json

logger = logging.getLogger(__name__)


@contextlib.contextmanager
def stage(name: str):
    """
    Label any MatcherError raised inside the block with the pipeline stage
    it came from, as its `stage` attribute.
    """
    try:
        yield
    except MatcherError as err:
        if getattr(err, 'stage', None) is None:
            err.stage = name
        raise


class Evaluation:
    """
    How a set of signatures fared: the accuracy of the chain matcher, the
    accuracy of the global decision it started from, how long the chains
    were and why they stopped.
    """

    def __init__(
        self,
        n_samples: int,
        accuracy: float,
        global_accuracy: float,
        chain_lengths: Dict[int, int],
        terminations: Dict[str, int],
    ):
        self.n_samples = n_samples
        self.accuracy = accuracy
        self.global_accuracy = global_accuracy
        self.chain_lengths = chain_lengths
        self.terminations = terminations

    def to_dict(self) -> dict:
        return {
            'n_samples': self.n_samples,
            'accuracy': self.accuracy,
            'global_accuracy': self.global_accuracy,
            'chain_lengths': {str(length): count for length, count in sorted(self.chain_lengths.items())},
            'terminations': dict(sorted(self.terminations.items())),
        }

    def __repr__(self) -> str:
        return (
            f"Evaluation(n_samples={self.n_samples}, accuracy={self.accuracy:.4f}, "
            f"global_accuracy={self.global_accuracy:.4f})"
        )


def evaluate(
    signatures: Sequence[Signature],
    labels: Sequence[int],
    pair_set: LabelPairSet,
    gallery: Optional[Gallery] = None,
    workers: int = 1,
) -> Evaluation:
    """
    Match every signature and compare the result, and the global decision
    it started from, with the true labels.
    """
    labels = list(labels)
    if len(labels) != len(signatures):
        raise LengthMismatch(f"There are {len(signatures)} signatures but {len(labels)} labels")
    results = match_batch(signatures, pair_set, gallery, workers)
    n_samples = len(results)
    correct = sum(final == label for (final, _), label in zip(results, labels))
    global_correct = sum(trace.start_label == label for (_, trace), label in zip(results, labels))
    chain_lengths = Counter(trace.length for _, trace in results)
    terminations = Counter(trace.terminated_by.value for _, trace in results)
    return Evaluation(
        n_samples,
        correct / n_samples if n_samples else 0.0,
        global_correct / n_samples if n_samples else 0.0,
        dict(chain_lengths),
        dict(terminations),
    )


class ThresholdResult:
    def __init__(
        self,
        source: PairSource,
        threshold: float,
        pair_set: LabelPairSet,
        test: Evaluation,
        validation: Evaluation,
    ):
        self.source = source
        self.threshold = threshold
        self.pair_set = pair_set
        self.test = test
        self.validation = validation

    @property
    def pair_count(self) -> int:
        return len(self.pair_set)

    @property
    def accuracy(self) -> float:
        return self.test.accuracy

    @property
    def validation_accuracy(self) -> float:
        return self.validation.accuracy

    def to_dict(self) -> dict:
        return {
            'source': self.source.value,
            'threshold': self.threshold,
            'pair_count': self.pair_count,
            'pairs': [[pair.lo, pair.hi] for pair in self.pair_set],
            'accuracy': self.accuracy,
            'validation_accuracy': self.validation_accuracy,
            'chain_lengths': self.test.to_dict()['chain_lengths'],
            'terminations': self.test.to_dict()['terminations'],
        }


class StageResult:
    """
    The results for one global model: its own accuracy, and the results of
    every pair source and threshold built on top of it.
    """

    def __init__(
        self,
        max_iterations: Optional[int],
        global_accuracy: float,
        global_validation_accuracy: float,
        results: Dict[PairSource, List[ThresholdResult]],
    ):
        self.max_iterations = max_iterations
        self.global_accuracy = global_accuracy
        self.global_validation_accuracy = global_validation_accuracy
        self.results = results

    def best_threshold(self, source: PairSource) -> ThresholdResult:
        """
        The threshold with the best validation accuracy. Ties go to the
        larger threshold, which has fewer local models.
        """
        return max(
            self.results[source],
            key=lambda result: (result.validation_accuracy, result.threshold),
        )

    def to_dict(self) -> dict:
        return {
            'max_iterations': self.max_iterations,
            'global_accuracy': self.global_accuracy,
            'global_validation_accuracy': self.global_validation_accuracy,
            'results': {
                source.value: [result.to_dict() for result in results]
                for source, results in self.results.items()
            },
            'best_thresholds': {
                source.value: self.best_threshold(source).threshold
                for source in self.results
            },
        }


class ExperimentReport:
    def __init__(self, config: ExperimentConfig, label_names: Sequence[str], stages: List[StageResult]):
        self.config = config
        self.label_names = list(label_names)
        self.stages = stages

    @property
    def final_stage(self) -> StageResult:
        return self.stages[-1]

    @property
    def global_accuracy(self) -> float:
        return self.final_stage.global_accuracy

    def results(self, source: PairSource) -> List[ThresholdResult]:
        return self.final_stage.results[PairSource(source)]

    def to_dict(self) -> dict:
        return {
            'config': self.config.to_dict(),
            'label_names': self.label_names,
            'global_accuracy': self.global_accuracy,
            'stages': [stage_result.to_dict() for stage_result in self.stages],
        }


def load_splits(config: ExperimentConfig) -> Tuple[LabeledDataset, LabeledDataset, LabeledDataset]:
    if config.train_path:
        train = ingest_csv(config.train_path)
        validation = ingest_csv(config.validation_path, train.label_names)
        test = ingest_csv(config.test_path, train.label_names)
        return train, validation, test
    if config.data_path:
        dataset = ingest_csv(config.data_path)
    else:
        dataset = generate_synthetic(config.synthetic)
    train, validation, test = dataset.split(config.split, config.seed)
    return train, validation, test


def _accuracy(model: ScoringModel, ds: LabeledDataset) -> float:
    predictions = np.asarray([model.predict(x) for x in ds.samples])
    return float(np.mean(predictions == ds.label_array))


def _run_stage(
    config: ExperimentConfig,
    train: LabeledDataset,
    validation: LabeledDataset,
    test: LabeledDataset,
    max_iterations: Optional[int],
) -> Tuple[StageResult, Optional[SimilarityMatrices], ConfusionMatrices]:
    global_config = config.global_model
    if max_iterations is not None:
        global_config = global_config.replace(max_iterations=max_iterations)

    with stage('train'):
        g = train_model(train, global_config)
    with stage('matrices'):
        _, similarity, confusion = validation_matrices(g, validation)
    global_accuracy = _accuracy(g, test)
    global_validation_accuracy = _accuracy(g, validation)
    logger.info(
        "Global %s model (max_iterations=%s): test accuracy %.4f",
        global_config.kind, max_iterations, global_accuracy,
    )

    init = g if config.warm_start else None
    # A pair's local model doesn't depend on how the pair was selected.
    cache: Dict[LabelPair, ScoringModel] = {}
    results: Dict[PairSource, List[ThresholdResult]] = {}
    for source in config.sources:
        results[source] = []
        for threshold in config.thresholds(source):
            with stage('select-pairs'):
                pair_set = select_pairs(similarity, confusion, PairSelectionConfig(source, threshold))
            with stage('build-bank'):
                bank = build_local_bank(train, pair_set, config.local_model, config.workers, init, cache)
            with stage('sign'):
                test_signatures = build_signatures(test.samples, g, bank, workers=config.workers)
                validation_signatures = build_signatures(validation.samples, g, bank, workers=config.workers)
            with stage('match'):
                test_eval = evaluate(test_signatures, test.labels, pair_set, workers=config.workers)
                validation_eval = evaluate(
                    validation_signatures, validation.labels, pair_set, workers=config.workers
                )
            logger.info(
                "%s threshold %g: %d pairs, test accuracy %.4f (global %.4f)",
                source.value, threshold, len(pair_set), test_eval.accuracy, global_accuracy,
            )
            results[source].append(
                ThresholdResult(source, threshold, pair_set, test_eval, validation_eval)
            )

    stage_result = StageResult(max_iterations, global_accuracy, global_validation_accuracy, results)
    return stage_result, similarity, confusion


def run_pipeline(config: ExperimentConfig) -> ExperimentReport:
    """
    Run the whole experiment described by `config`. With `config.output`
    set, the report, both matrices and the selected pair sets are written
    there as well.
    """
    with stage('data'):
        train, validation, test = load_splits(config)
    logger.info("Splits: train %r, validation %r, test %r", train, validation, test)

    if config.stages and config.global_model.kind == 'logistic':
        stage_iterations = list(config.stages)
    else:
        if config.stages:
            logger.warning(
                "Ignoring selection.stages: a %s global model isn't trained iteratively",
                config.global_model.kind,
            )
        stage_iterations = [None]

    stages = []
    similarity = confusion = None
    for max_iterations in stage_iterations:
        stage_result, similarity, confusion = _run_stage(
            config, train, validation, test, max_iterations
        )
        stages.append(stage_result)

    report = ExperimentReport(config, train.label_names, stages)
    if config.output:
        write_artifacts(config.output, report, similarity, confusion)
    return report


def write_artifacts(
    output: str,
    report: ExperimentReport,
    similarity: Optional[SimilarityMatrices],
    confusion: ConfusionMatrices,
) -> None:
    os.makedirs(output, exist_ok=True)
    write_json(os.path.join(output, 'report.json'), report.to_dict())
    if similarity is not None:
        write_matrix_csv(os.path.join(output, 'similarity.csv'), similarity.q, report.label_names)
    write_matrix_csv(os.path.join(output, 'confusion.csv'), confusion.r, report.label_names)
    for source, results in report.final_stage.results.items():
        write_json(
            os.path.join(output, f'pairs-{source.value}.json'),
            [result.pair_set.to_dict() for result in results],
        )
    logger.info("Wrote the report and artifacts to %s", output)


def stats_report(
    table, q_alpha: Optional[float] = None, alpha: float = DEFAULT_ALPHA
) -> dict:
    """
    The whole rank-based comparison of a splits x methods accuracy table:
    average ranks, the Friedman and Iman-Davenport statistics with their
    p-values, and the Bonferroni-Dunn verdict on every pair of methods.

    `table` is either a RankTable or the path of an accuracy CSV. Without
    `q_alpha`, the bundled critical value for `alpha` is used.
    """
    if not isinstance(table, RankTable):
        table = read_accuracy_csv(table)
    k, n = table.n_methods, table.n_splits
    avg_ranks = table.average_ranks
    chi2_f = friedman_chi2(avg_ranks, k, n)
    try:
        f_f = iman_f(chi2_f, k, n)
        f_p = iman_p_value(f_f, k, n)
    except SingularDenominator:
        # Every split ranked the methods identically.
        f_f = f_p = None
    f_critical = f_critical_value(alpha, k, n)
    reject = True if f_f is None else f_f > f_critical

    if q_alpha is None:
        q_alpha = bonferroni_dunn_q(k, alpha)
    cd = critical_difference(q_alpha, k, n)
    verdicts = pairwise_significance(table, q_alpha)
    names = table.method_names
    significant = [
        [names[a], names[b]]
        for a in range(k)
        for b in range(a + 1, k)
        if verdicts[a][b] != Significance.NOT_SIGNIFICANT
    ]
    return {
        'n_splits': n,
        'method_names': names,
        'average_ranks': avg_ranks.tolist(),
        'friedman_chi2': chi2_f,
        'friedman_p_value': friedman_p_value(chi2_f, k),
        'iman_f': f_f,
        'iman_p_value': f_p,
        'alpha': alpha,
        'f_critical_value': f_critical,
        'reject_equivalence': bool(reject),
        'q_alpha': q_alpha,
        'critical_difference': float(cd),
        'significance': {
            names[a]: {names[b]: verdicts[a][b].value for b in range(k)}
            for a in range(k)
        },
        'significant_pairs': significant,
    }


METHOD_NAMES = {
    PairSource.SIMILARITY: 'LCC-SM',
    PairSource.CONFUSION: 'LCC-CM',
}


class SplitComparison:
    """
    One experiment repeated on several splits. Each split contributes a row
    of accuracies: the global model's, then each pair source's at the
    threshold that did best on validation.
    """

    def __init__(self, seeds: Sequence[int], reports: List[ExperimentReport], stats: Optional[dict] = None):
        self.seeds = list(seeds)
        self.reports = reports
        self.stats = stats

    @property
    def sources(self) -> List[PairSource]:
        return list(self.reports[0].config.sources)

    @property
    def method_names(self) -> List[str]:
        return ['global'] + [METHOD_NAMES[source] for source in self.sources]

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([
            [report.global_accuracy]
            + [report.final_stage.best_threshold(source).accuracy for source in self.sources]
            for report in self.reports
        ])

    def rank_table(self) -> RankTable:
        return compute_ranks(self.accuracies, self.method_names)

    def to_dict(self) -> dict:
        return {
            'seeds': self.seeds,
            'method_names': self.method_names,
            'accuracies': self.accuracies.tolist(),
            'stats': self.stats,
        }


def run_splits(config: ExperimentConfig) -> SplitComparison:
    """
    Run the experiment once for every seed in `config.seeds` (or just
    `config.seed`), and compare the methods by rank when there are at least
    two splits. With `config.output` set, each split's artifacts go to a
    `seed-N` subdirectory, next to `accuracy.csv` and `stats.json`.
    """
    seeds = config.seeds or [config.seed]
    if config.train_path and len(seeds) > 1:
        logger.warning("The split files are fixed, so only the model seeds differ between runs")
    reports = []
    for seed in seeds:
        logger.info("Running the split with seed %d", seed)
        reports.append(run_pipeline(config.for_seed(seed)))

    comparison = SplitComparison(seeds, reports)
    if len(seeds) >= 2:
        with stage('stats'):
            comparison.stats = stats_report(comparison.rank_table())
    if config.output:
        os.makedirs(config.output, exist_ok=True)
        write_accuracy_csv(
            os.path.join(config.output, 'accuracy.csv'), comparison.accuracies, comparison.method_names
        )
        if comparison.stats is not None:
            write_json(os.path.join(config.output, 'stats.json'), comparison.stats)
    return comparison
