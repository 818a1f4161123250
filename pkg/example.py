from lccmatch.config import load_config
from lccmatch.core import PairSource
from lccmatch.pipeline import run_pipeline

# Run the experiment on synthetic data where classes 0 and 1 are easy to
# confuse, for several seeds, and for each one show:
#
# - The seed
# - The global model's test accuracy
# - The size of the local model set and the test accuracy of the chain
#   matcher, for every confusion threshold

for seed in range(5):
    config = load_config(overrides=[
        f'run.seed={seed}',
        'selection.sources=["confusion"]',
    ])
    report = run_pipeline(config)
    cells = [
        '%5g: %d pairs %.3f' % (result.threshold, result.pair_count, result.accuracy)
        for result in report.results(PairSource.CONFUSION)
    ]
    print('%-2d %.3f  %s' % (seed, report.global_accuracy, '  '.join(cells)))
