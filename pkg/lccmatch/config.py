"""
Experiment configuration, read from a TOML file and adjusted from the
command line.

A complete file looks like this; every table and key is optional.

    [data]
    # Either three files...
    train = "train.csv"
    validation = "validation.csv"
    test = "test.csv"
    # ...or one file to split per class...
    path = "all.csv"
    split = [0.5, 0.25, 0.25]
    # ...or neither, to use the [synthetic] dataset.

    [synthetic]
    n_classes = 4
    confusable_groups = [[0, 1]]

    [global_model]
    kind = "centroid"

    [local_model]
    kind = "logistic"
    warm_start = false

    [selection]
    sources = ["similarity", "confusion"]
    similarity_thresholds = [0.5, 0.7, 0.9, 1.0]
    confusion_thresholds = [0.02, 0.05, 0.1, 1.0]
    stages = []

    [run]
    seed = 0
    workers = 1
    output = "results"
    # Repeat the experiment on one split per seed, and compare the methods
    seeds = []

Any key can be overridden with `section.key=value`, where the value is
written the way it would be in TOML:

>>> config = load_config(overrides=['run.seed=3', 'selection.confusion_thresholds=[0.1, 1.0]'])
>>> config.seed, config.confusion_thresholds
(3, [0.1, 1.0])
>>> config.synthetic.seed
3

With `run.seeds`, `run_splits` repeats the experiment once per seed:

>>> config = load_config(overrides=['run.seeds=[1, 2, 3]', 'global_model.seed=7'])
>>> [(c.seed, c.synthetic.seed, c.global_model.seed) for c in map(config.for_seed, config.seeds)]
[(1, 1, 7), (2, 2, 7), (3, 3, 7)]
"""
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Sequence

from lccmatch.core import DataError, MalformedDocument, PairSource
from lccmatch.datasets import SyntheticSpec
from lccmatch.models import ModelConfig
from lccmatch.pairs import check_threshold

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

SECTIONS = ['data', 'synthetic', 'global_model', 'local_model', 'selection', 'run']

DEFAULT_SPLIT = [0.5, 0.25, 0.25]
DEFAULT_SIMILARITY_THRESHOLDS = [0.5, 0.7, 0.9, 1.0]
DEFAULT_CONFUSION_THRESHOLDS = [0.02, 0.05, 0.1, 1.0]


def _unknown_keys_error(section: str, keys) -> str:
    return f"Unknown keys in [{section}]: {sorted(keys)}"


class ExperimentConfig:
    """
    Everything `run_pipeline` needs to know. One seed governs the synthetic
    data, the split and the initial weights of every model, unless a section
    sets its own.
    """

    def __init__(
        self,
        train_path: Optional[str] = None,
        validation_path: Optional[str] = None,
        test_path: Optional[str] = None,
        data_path: Optional[str] = None,
        split: Sequence[float] = tuple(DEFAULT_SPLIT),
        synthetic: Optional[SyntheticSpec] = None,
        global_model: Optional[ModelConfig] = None,
        local_model: Optional[ModelConfig] = None,
        warm_start: bool = False,
        sources: Sequence[PairSource] = (PairSource.SIMILARITY, PairSource.CONFUSION),
        similarity_thresholds: Sequence[float] = tuple(DEFAULT_SIMILARITY_THRESHOLDS),
        confusion_thresholds: Sequence[float] = tuple(DEFAULT_CONFUSION_THRESHOLDS),
        stages: Sequence[int] = (),
        seed: int = 0,
        workers: int = 1,
        output: Optional[str] = None,
        seeds: Sequence[int] = (),
    ):
        self.train_path = train_path
        self.validation_path = validation_path
        self.test_path = test_path
        self.data_path = data_path
        self.split = [float(fraction) for fraction in split]
        self.seed = int(seed)
        self.synthetic = synthetic or SyntheticSpec(seed=self.seed)
        self.global_model = global_model or ModelConfig(kind='centroid', seed=self.seed)
        self.local_model = local_model or ModelConfig(kind='logistic', seed=self.seed)
        self.warm_start = bool(warm_start)
        self.sources = [PairSource(source) for source in sources]
        self.similarity_thresholds = [check_threshold(t) for t in similarity_thresholds]
        self.confusion_thresholds = [check_threshold(t) for t in confusion_thresholds]
        self.stages = [int(stage) for stage in stages]
        self.workers = int(workers)
        self.output = output
        self.seeds = [int(seed) for seed in seeds]
        self._validate()

    def _validate(self) -> None:
        if not self.split or any(fraction <= 0 for fraction in self.split):
            raise DataError(f"Split fractions must be positive, got {self.split}")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise DataError(f"Split fractions must sum to 1, got {self.split}")
        if len(self.split) != 3:
            raise DataError("The split needs three parts: train, validation and test")
        given = [self.train_path, self.validation_path, self.test_path]
        if any(given) and not all(given):
            raise DataError("Give all of data.train, data.validation and data.test, or none")
        if all(given) and self.data_path:
            raise DataError("Give either data.path or the three split files, not both")
        if not self.sources:
            raise DataError("selection.sources can't be empty")
        for source in self.sources:
            if not self.thresholds(source):
                raise DataError(f"selection.{source.value}_thresholds can't be empty")
        if any(stage < 1 for stage in self.stages):
            raise DataError(f"Iteration stages must be positive, got {self.stages}")
        if self.workers < 1:
            raise DataError(f"workers must be at least 1, got {self.workers}")
        if len(set(self.seeds)) != len(self.seeds):
            raise DataError(f"run.seeds repeats a seed: {self.seeds}")

    def thresholds(self, source: PairSource) -> List[float]:
        if source == PairSource.SIMILARITY:
            return list(self.similarity_thresholds)
        return list(self.confusion_thresholds)

    def to_dict(self) -> dict:
        data = {
            'split': self.split,
        }
        for key, value in (
            ('train', self.train_path),
            ('validation', self.validation_path),
            ('test', self.test_path),
            ('path', self.data_path),
        ):
            if value is not None:
                data[key] = value
        local_model = self.local_model.to_dict()
        local_model['warm_start'] = self.warm_start
        run = {'seed': self.seed, 'workers': self.workers}
        if self.output is not None:
            run['output'] = self.output
        if self.seeds:
            run['seeds'] = self.seeds
        return {
            'data': data,
            'synthetic': self.synthetic.to_dict(),
            'global_model': self.global_model.to_dict(),
            'local_model': local_model,
            'selection': {
                'sources': [source.value for source in self.sources],
                'similarity_thresholds': self.similarity_thresholds,
                'confusion_thresholds': self.confusion_thresholds,
                'stages': self.stages,
            },
            'run': run,
        }

    def for_seed(self, seed: int) -> 'ExperimentConfig':
        """
        This experiment on the split drawn with `seed`, as one run of a
        multi-split comparison. Every section whose seed follows run.seed
        follows the new one, and the output goes to a subdirectory per seed.
        """
        raw = self.to_dict()
        for name in ('synthetic', 'global_model', 'local_model'):
            if raw[name]['seed'] == self.seed:
                raw[name]['seed'] = seed
        run = raw['run']
        run['seed'] = seed
        run.pop('seeds', None)
        if self.output is not None:
            run['output'] = os.path.join(self.output, f'seed-{seed}')
        return ExperimentConfig.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> 'ExperimentConfig':
        unknown = set(raw) - set(SECTIONS)
        if unknown:
            raise DataError(f"Unknown config sections: {sorted(unknown)}")
        for name in SECTIONS:
            if not isinstance(raw.get(name, {}), dict):
                raise DataError(f"[{name}] must be a table")
        sections = {name: dict(raw.get(name, {})) for name in SECTIONS}

        run = sections['run']
        _check_keys('run', run, {'seed', 'workers', 'output', 'seeds'})
        seed = int(run.get('seed', 0))
        seeds = run.get('seeds', [])
        if not isinstance(seeds, list):
            raise DataError(f"run.seeds must be a list of seeds, got {seeds!r}")

        data = sections['data']
        _check_keys('data', data, {'train', 'validation', 'test', 'path', 'split'})

        synthetic = sections['synthetic']
        synthetic.setdefault('seed', seed)

        local_model = sections['local_model']
        warm_start = local_model.pop('warm_start', False)
        local_model.setdefault('kind', 'logistic')
        local_model.setdefault('seed', seed)
        global_model = sections['global_model']
        global_model.setdefault('kind', 'centroid')
        global_model.setdefault('seed', seed)

        selection = sections['selection']
        _check_keys(
            'selection', selection,
            {'sources', 'similarity_thresholds', 'confusion_thresholds', 'stages'},
        )
        try:
            sources = [PairSource(source) for source in selection.get('sources', ['similarity', 'confusion'])]
        except ValueError as err:
            raise DataError(f"Unknown pair source in selection.sources: {err}") from err

        return cls(
            train_path=data.get('train'),
            validation_path=data.get('validation'),
            test_path=data.get('test'),
            data_path=data.get('path'),
            split=data.get('split', DEFAULT_SPLIT),
            synthetic=SyntheticSpec.from_dict(synthetic),
            global_model=ModelConfig.from_dict(global_model),
            local_model=ModelConfig.from_dict(local_model),
            warm_start=warm_start,
            sources=sources,
            similarity_thresholds=selection.get('similarity_thresholds', DEFAULT_SIMILARITY_THRESHOLDS),
            confusion_thresholds=selection.get('confusion_thresholds', DEFAULT_CONFUSION_THRESHOLDS),
            stages=selection.get('stages', []),
            seed=seed,
            workers=run.get('workers', 1),
            output=run.get('output'),
            seeds=seeds,
        )

    def __repr__(self) -> str:
        return f"ExperimentConfig(seed={self.seed}, sources={[s.value for s in self.sources]!r})"


def _check_keys(section: str, values: dict, allowed) -> None:
    unknown = set(values) - set(allowed)
    if unknown:
        raise DataError(_unknown_keys_error(section, unknown))


def parse_value(text: str) -> Any:
    """
    Read a value written the way TOML writes it. Anything that isn't valid
    TOML is taken as a bare string, so `data.path=all.csv` works unquoted.

    >>> parse_value('0.5'), parse_value('[1, 2]'), parse_value('true'), parse_value('all.csv')
    (0.5, [1, 2], True, 'all.csv')
    """
    try:
        return tomllib.loads(f"value = {text}")['value']
    except tomllib.TOMLDecodeError:
        return text


def apply_override(raw: Dict[str, Any], override: str) -> None:
    """
    Apply one `section.key=value` override to a raw configuration dict.

    >>> raw = {}
    >>> apply_override(raw, 'selection.stages=[50, 100]')
    >>> raw
    {'selection': {'stages': [50, 100]}}
    >>> apply_override(raw, 'seed=4')
    Traceback (most recent call last):
        ...
    lccmatch.core.DataError: Overrides look like section.key=value, got 'seed=4'
    """
    name, sep, text = override.partition('=')
    section, dot, key = name.strip().partition('.')
    if not sep or not dot or not section or not key:
        raise DataError(f"Overrides look like section.key=value, got {override!r}")
    if section not in SECTIONS:
        raise DataError(f"Unknown config section {section!r} in override {override!r}")
    raw.setdefault(section, {})[key] = parse_value(text.strip())


def read_config_file(path: str) -> Dict[str, Any]:
    try:
        with open(path, 'rb') as infile:
            return tomllib.load(infile)
    except tomllib.TOMLDecodeError as err:
        raise MalformedDocument(f"{path} is not valid TOML: {err}") from err


def load_config(path: Optional[str] = None, overrides: Sequence[str] = ()) -> ExperimentConfig:
    raw = read_config_file(path) if path else {}
    for override in overrides:
        apply_override(raw, override)
    config = ExperimentConfig.from_dict(raw)
    logger.debug("Loaded %r", config)
    return config
