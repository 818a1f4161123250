"""
The `lccmatch` command. Each subcommand runs one stage of the experiment
and leaves its result in a JSON or CSV file, so any stage can be re-run on
its own; `sweep` runs all of them from a configuration file.

Exit codes: 0 on success, 1 for a usage error, 2 for bad input data and 3
when the numbers themselves are degenerate.
"""
import argparse
import json
import logging
import os
import sys
from typing import List, Optional, Sequence

import numpy as np

from lccmatch.config import load_config
from lccmatch.core import (
    DataError,
    LabelPairSet,
    MalformedDocument,
    MatcherError,
    NumericError,
    PairSource,
    SignatureMode,
)
from lccmatch.datasets import SyntheticSpec, generate_synthetic, ingest_csv, write_dataset_csv
from lccmatch.matcher import Gallery, match_batch
from lccmatch.matrices import (
    ConfusionMatrices,
    SimilarityMatrices,
    validation_matrices,
    write_matrix_csv,
)
from lccmatch.models import MODEL_KINDS, ModelConfig, model_from_dict, train_model
from lccmatch.pairs import LocalModelBank, PairSelectionConfig, build_local_bank, select_pairs
from lccmatch.pipeline import evaluate, run_pipeline, run_splits, stats_report
from lccmatch.signature import build_signatures, read_signature_file, write_signature_file
from lccmatch.util import read_json, write_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    """
    An ArgumentParser whose usage errors raise UsageError, so `main` can
    exit with our usage code instead of argparse's.
    """

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _groups(text: str) -> List[int]:
    return [int(label) for label in text.split(',') if label.strip()]


def _thresholds(text: str) -> List[float]:
    return [float(value) for value in text.split(',') if value.strip()]


def _add_model_options(parser: argparse.ArgumentParser, default_kind: str) -> None:
    parser.add_argument('--kind', choices=MODEL_KINDS, default=default_kind)
    parser.add_argument('--temperature', type=float, default=1.0)
    parser.add_argument('--learning-rate', type=float, default=0.1)
    parser.add_argument('--max-iterations', type=int, default=500)
    parser.add_argument('--l2', type=float, default=0.0)
    parser.add_argument('--seed', type=int, default=0)


def _model_config(args) -> ModelConfig:
    return ModelConfig(
        kind=args.kind,
        temperature=args.temperature,
        learning_rate=args.learning_rate,
        max_iterations=args.max_iterations,
        l2=args.l2,
        seed=args.seed,
    )


def _read_model(path: str):
    """
    Read a model file written by `train`: the model and its label names.
    """
    data = read_json(path)
    if not isinstance(data, dict) or 'model' not in data or 'label_names' not in data:
        raise MalformedDocument(f"{path} is not a model file written by 'lccmatch train'")
    return model_from_dict(data['model']), data['label_names']


def _read_matrices(path: str):
    data = read_json(path)
    try:
        similarity = None
        if data.get('q') is not None:
            similarity = SimilarityMatrices(
                np.asarray(data['means']), np.asarray(data['w']), np.asarray(data['q'])
            )
        confusion = ConfusionMatrices(np.asarray(data['z']), np.asarray(data['r']))
        return similarity, confusion, data['label_names']
    except (AttributeError, KeyError, TypeError) as err:
        raise MalformedDocument(f"{path} is not a matrices file: {err}") from err


def _read_signatures(path: str, pairs_path: Optional[str]):
    metadata, signatures = read_signature_file(path)
    metadata = metadata or {}
    if pairs_path:
        pair_set = LabelPairSet.from_dict(read_json(pairs_path))
    elif metadata.get('pair_set') is not None:
        pair_set = metadata['pair_set']
    else:
        raise DataError(f"{path} doesn't record its label pairs; pass --pairs")
    return signatures, pair_set, metadata.get('label_names')


def _gallery(args, label_names):
    if not args.gallery:
        return None
    if not args.model:
        raise UsageError("--gallery needs --model, to score the gallery samples")
    g, model_labels = _read_model(args.model)
    gallery_ds = ingest_csv(args.gallery, label_names or model_labels)
    return Gallery.enroll(gallery_ds, g)


def cmd_gen_data(args) -> None:
    spec = SyntheticSpec(
        n_classes=args.classes,
        dimension=args.dimension,
        per_class=args.per_class,
        spread=args.spread,
        near_distance=args.near,
        far_distance=args.far,
        confusable_groups=args.group if args.group else [[0, 1]],
        elongation=args.elongation,
        seed=args.seed,
    )
    dataset = generate_synthetic(spec)
    write_dataset_csv(args.output, dataset)
    if args.split:
        stem, ext = os.path.splitext(args.output)
        for name, part in zip(('train', 'validation', 'test'), dataset.split(seed=args.seed)):
            write_dataset_csv(f"{stem}-{name}{ext or '.csv'}", part)
    logger.info("Wrote %r to %s", dataset, args.output)


def cmd_train(args) -> None:
    train = ingest_csv(args.data)
    model = train_model(train, _model_config(args))
    write_json(args.output, {'label_names': list(train.label_names), 'model': model.to_dict()})


def cmd_matrices(args) -> None:
    g, label_names = _read_model(args.model)
    validation = ingest_csv(args.validation, label_names)
    _, similarity, confusion = validation_matrices(g, validation)
    os.makedirs(args.output, exist_ok=True)
    write_json(os.path.join(args.output, 'matrices.json'), {
        'label_names': label_names,
        'means': similarity.means.tolist() if similarity is not None else None,
        'w': similarity.w.tolist() if similarity is not None else None,
        'q': similarity.q.tolist() if similarity is not None else None,
        'z': confusion.z.tolist(),
        'r': confusion.r.tolist(),
    })
    if similarity is not None:
        write_matrix_csv(os.path.join(args.output, 'similarity.csv'), similarity.q, label_names)
    write_matrix_csv(os.path.join(args.output, 'confusion.csv'), confusion.r, label_names)


def cmd_select_pairs(args) -> None:
    similarity, confusion, label_names = _read_matrices(args.matrices)
    pair_set = select_pairs(similarity, confusion, PairSelectionConfig(args.source, args.threshold))
    write_json(args.output, pair_set.to_dict())
    print(f"{len(pair_set)} pairs selected by {pair_set.source.value} > {pair_set.threshold:g}")
    for pair in pair_set:
        print(f"  {label_names[pair.lo]} / {label_names[pair.hi]}")


def cmd_build_bank(args) -> None:
    g, label_names = _read_model(args.model)
    train = ingest_csv(args.data, label_names)
    pair_set = LabelPairSet.from_dict(read_json(args.pairs))
    init = g if args.warm_start else None
    bank = build_local_bank(train, pair_set, _model_config(args), args.workers, init)
    write_json(args.output, bank.to_dict())


def cmd_sign(args) -> None:
    g, label_names = _read_model(args.model)
    bank = LocalModelBank.from_dict(read_json(args.bank))
    data = ingest_csv(args.data, label_names)
    mode = SignatureMode.IDENTIFICATION if args.identification else SignatureMode.CLASSIFICATION
    signatures = build_signatures(data.samples, g, bank, mode, args.workers)
    write_signature_file(args.output, signatures, label_names, bank.pair_set)


def cmd_match(args) -> None:
    signatures, pair_set, label_names = _read_signatures(args.signatures, args.pairs)
    gallery = _gallery(args, label_names)
    results = match_batch(signatures, pair_set, gallery, args.workers)
    print("index,start,final")
    for index, (final, trace) in enumerate(results):
        start = trace.start_label
        if label_names:
            print(f"{index},{label_names[start]},{label_names[final]}")
        else:
            print(f"{index},{start},{final}")
    if args.explain:
        write_json(args.explain, [trace.to_dict() for _, trace in results])


def cmd_evaluate(args) -> None:
    signatures, pair_set, label_names = _read_signatures(args.signatures, args.pairs)
    data = ingest_csv(args.data, label_names)
    gallery = _gallery(args, label_names)
    result = evaluate(signatures, data.labels, pair_set, gallery, args.workers)
    print(json.dumps(result.to_dict(), indent=2, sort_keys=True))


def cmd_sweep(args) -> None:
    overrides = []
    for key, value in (
        ('run.seed', args.seed),
        ('run.output', json.dumps(args.output) if args.output else None),
        ('run.workers', args.workers),
        ('global_model.kind', json.dumps(args.global_kind) if args.global_kind else None),
        ('local_model.kind', json.dumps(args.local_kind) if args.local_kind else None),
        ('selection.similarity_thresholds', _toml_list(args.similarity_thresholds)),
        ('selection.confusion_thresholds', _toml_list(args.confusion_thresholds)),
    ):
        if value is not None:
            overrides.append(f"{key}={value}")
    if args.splits is not None:
        if args.splits < 2:
            raise UsageError("--splits needs at least 2 splits to compare")
        first = load_config(args.config, overrides + list(args.set)).seed
        overrides.append(f"run.seeds={list(range(first, first + args.splits))}")
    # Generic --set overrides win over the dedicated flags.
    config = load_config(args.config, overrides + list(args.set))
    if config.seeds:
        _print_comparison(run_splits(config))
        return
    report = run_pipeline(config)

    print(f"global accuracy: {report.global_accuracy:.4f}")
    for stage_result in report.stages:
        if stage_result.max_iterations is not None:
            print(f"stage max_iterations={stage_result.max_iterations}: "
                  f"global accuracy {stage_result.global_accuracy:.4f}")
        for source, results in stage_result.results.items():
            best = stage_result.best_threshold(source)
            for result in results:
                marker = '*' if result is best else ' '
                print(
                    f"{marker} {source.value:<10} threshold {result.threshold:<6g} "
                    f"pairs {result.pair_count:<4d} accuracy {result.accuracy:.4f}"
                )


def _print_comparison(comparison) -> None:
    print('seed,' + ','.join(comparison.method_names))
    for seed, row in zip(comparison.seeds, comparison.accuracies):
        print(f"{seed}," + ','.join(f"{value:.4f}" for value in row))
    if comparison.stats is not None:
        stats = comparison.stats
        ranks = ', '.join(
            f"{name} {rank:.2f}" for name, rank in zip(stats['method_names'], stats['average_ranks'])
        )
        print(f"average ranks: {ranks}")
        print(f"critical difference: {stats['critical_difference']:.3f}")
        for a, b in stats['significant_pairs']:
            print(f"significant: {a} / {b}")


def _toml_list(values: Optional[List[float]]) -> Optional[str]:
    if values is None:
        return None
    return '[' + ', '.join(repr(float(value)) for value in values) + ']'


def cmd_stats(args) -> None:
    report = stats_report(args.table, args.q_alpha, args.alpha)
    if args.output:
        write_json(args.output, report)
    print(json.dumps(report, indent=2))


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog='lccmatch', description=__doc__.strip().split('\n\n')[0])
    parser.add_argument('-v', '--verbose', action='count', default=0)
    parser.add_argument('-q', '--quiet', action='store_true')
    subparsers = parser.add_subparsers(dest='command', parser_class=ArgumentParser)
    subparsers.required = True

    p = subparsers.add_parser('gen-data', help="generate a synthetic dataset CSV")
    p.add_argument('output')
    p.add_argument('--classes', type=int, default=4)
    p.add_argument('--dimension', type=int, default=2)
    p.add_argument('--per-class', type=int, default=200)
    p.add_argument('--spread', type=float, default=1.0)
    p.add_argument('--near', type=float, default=1.5)
    p.add_argument('--far', type=float, default=20.0)
    p.add_argument('--elongation', type=float, default=4.0)
    p.add_argument('--group', type=_groups, action='append',
                   help="a confusable group, such as 0,1 (repeatable)")
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--split', action='store_true',
                   help="also write train, validation and test files")
    p.set_defaults(func=cmd_gen_data)

    p = subparsers.add_parser('train', help="train a global model")
    p.add_argument('data')
    p.add_argument('-o', '--output', required=True)
    _add_model_options(p, 'centroid')
    p.set_defaults(func=cmd_train)

    p = subparsers.add_parser('matrices', help="compute the similarity and confusion matrices")
    p.add_argument('--model', required=True)
    p.add_argument('--validation', required=True)
    p.add_argument('-o', '--output', required=True, help="output directory")
    p.set_defaults(func=cmd_matrices)

    p = subparsers.add_parser('select-pairs', help="select the label pairs for local models")
    p.add_argument('--matrices', required=True)
    p.add_argument('--source', choices=[source.value for source in PairSource], default='confusion')
    p.add_argument('--threshold', type=float, required=True)
    p.add_argument('-o', '--output', required=True)
    p.set_defaults(func=cmd_select_pairs)

    p = subparsers.add_parser('build-bank', help="train the local model of every selected pair")
    p.add_argument('data', help="training data")
    p.add_argument('--model', required=True)
    p.add_argument('--pairs', required=True)
    p.add_argument('--warm-start', action='store_true')
    p.add_argument('--workers', type=int, default=1)
    p.add_argument('-o', '--output', required=True)
    _add_model_options(p, 'logistic')
    p.set_defaults(func=cmd_build_bank)

    p = subparsers.add_parser('sign', help="compute signatures for a dataset")
    p.add_argument('data')
    p.add_argument('--model', required=True)
    p.add_argument('--bank', required=True)
    p.add_argument('--identification', action='store_true')
    p.add_argument('--workers', type=int, default=1)
    p.add_argument('-o', '--output', required=True)
    p.set_defaults(func=cmd_sign)

    for name, func, help_text in (
        ('match', cmd_match, "match signatures with the chain matcher"),
        ('evaluate', cmd_evaluate, "measure matching accuracy against true labels"),
    ):
        p = subparsers.add_parser(name, help=help_text)
        p.add_argument('signatures')
        if name == 'evaluate':
            p.add_argument('--data', required=True, help="the labeled samples that were signed")
        else:
            p.add_argument('--explain', help="write each chain's trace to this JSON file")
        p.add_argument('--pairs')
        p.add_argument('--gallery', help="a labeled CSV to enroll for identification")
        p.add_argument('--model', help="the global model, to enroll the gallery with")
        p.add_argument('--workers', type=int, default=1)
        p.set_defaults(func=func)

    p = subparsers.add_parser('sweep', help="run the whole experiment over threshold sweeps, on one split or several")
    p.add_argument('--config')
    p.add_argument('--seed', type=int)
    p.add_argument('--output')
    p.add_argument('--workers', type=int)
    p.add_argument('--global-kind', choices=MODEL_KINDS)
    p.add_argument('--local-kind', choices=MODEL_KINDS)
    p.add_argument('--similarity-thresholds', type=_thresholds)
    p.add_argument('--confusion-thresholds', type=_thresholds)
    p.add_argument(
        '--splits', type=int,
        help="repeat on this many splits, seeded from --seed on, and compare the methods",
    )
    p.add_argument('--set', action='append', default=[], metavar='SECTION.KEY=VALUE')
    p.set_defaults(func=cmd_sweep)

    p = subparsers.add_parser('stats', help="compare methods across splits by average rank")
    p.add_argument('table', help="CSV of accuracies, one row per split")
    p.add_argument('--q-alpha', type=float)
    p.add_argument('--alpha', type=float, default=0.10)
    p.add_argument('-o', '--output')
    p.set_defaults(func=cmd_stats)

    return parser


def _configure_logging(verbose: int, quiet: bool) -> None:
    if quiet:
        level = logging.ERROR
    elif verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = logging.WARNING
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _configure_logging(args.verbose, args.quiet)
        args.func(args)
    except UsageError as err:
        print(err, file=sys.stderr)
        return EXIT_USAGE
    except MatcherError as err:
        stage = getattr(err, 'stage', None)
        prefix = f"error in {stage}" if stage else "error"
        print(f"{prefix}: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_NUMERIC if isinstance(err, NumericError) else EXIT_DATA
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
