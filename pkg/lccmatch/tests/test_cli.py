import json
import os

import pytest

from lccmatch.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from lccmatch.matrices import AbsentClassWarning


@pytest.fixture
def splits(tmp_path):
    data = str(tmp_path / 'data.csv')
    assert main(['gen-data', data, '--per-class', '40', '--seed', '1', '--split']) == EXIT_OK
    return {
        name: str(tmp_path / f'data-{name}.csv') for name in ('train', 'validation', 'test')
    }


def count_rows(path):
    with open(path, encoding='utf-8') as infile:
        return sum(1 for line in infile if line.strip()) - 1


def test_gen_data(splits, tmp_path):
    assert count_rows(str(tmp_path / 'data.csv')) == 160
    assert count_rows(splits['train']) == 80
    assert count_rows(splits['validation']) == 40
    assert count_rows(splits['test']) == 40


def test_stage_by_stage(splits, tmp_path, capsys):
    model = str(tmp_path / 'model.json')
    matrices = str(tmp_path / 'matrices')
    pairs = str(tmp_path / 'pairs.json')
    bank = str(tmp_path / 'bank.json')
    signatures = str(tmp_path / 'signatures.jsonl')
    trace = str(tmp_path / 'trace.json')

    assert main(['train', splits['train'], '-o', model]) == EXIT_OK
    assert main(['matrices', '--model', model, '--validation', splits['validation'], '-o', matrices]) == EXIT_OK
    assert sorted(os.listdir(matrices)) == ['confusion.csv', 'matrices.json', 'similarity.csv']

    capsys.readouterr()
    assert main([
        'select-pairs', '--matrices', os.path.join(matrices, 'matrices.json'),
        '--source', 'confusion', '--threshold', '0.05', '-o', pairs,
    ]) == EXIT_OK
    assert 'selected by confusion > 0.05' in capsys.readouterr().out

    assert main([
        'build-bank', splits['train'], '--model', model, '--pairs', pairs,
        '--max-iterations', '100', '--workers', '2', '-o', bank,
    ]) == EXIT_OK
    assert main(['sign', splits['test'], '--model', model, '--bank', bank, '-o', signatures]) == EXIT_OK
    assert count_rows(signatures) == 40

    capsys.readouterr()
    assert main(['match', signatures, '--explain', trace]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == 'index,start,final'
    assert len(lines) == 41
    with open(trace, encoding='utf-8') as infile:
        traces = json.load(infile)
    assert len(traces) == 40
    assert set(traces[0]) == {'start', 'steps', 'final', 'terminated_by'}

    assert main(['evaluate', signatures, '--data', splits['test']]) == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert result['n_samples'] == 40
    assert 0.0 <= result['accuracy'] <= 1.0
    assert sum(result['terminations'].values()) == 40


def test_validation_without_a_class(splits, tmp_path, capsys):
    model = str(tmp_path / 'model.json')
    matrices = str(tmp_path / 'matrices')
    validation = str(tmp_path / 'validation.csv')
    with open(splits['validation'], encoding='utf-8') as infile:
        lines = [line for line in infile if not line.startswith('3,')]
    with open(validation, 'w', encoding='utf-8') as outfile:
        outfile.writelines(lines)

    assert main(['train', splits['train'], '-o', model]) == EXIT_OK
    with pytest.warns(AbsentClassWarning):
        assert main(['matrices', '--model', model, '--validation', validation, '-o', matrices]) == EXIT_OK
    assert sorted(os.listdir(matrices)) == ['confusion.csv', 'matrices.json']
    with open(os.path.join(matrices, 'matrices.json'), encoding='utf-8') as infile:
        written = json.load(infile)
    assert written['q'] is None
    assert written['r'][written['label_names'].index('3')] == [0.0, 0.0, 0.0, 0.0]

    matrices_path = os.path.join(matrices, 'matrices.json')
    pairs = str(tmp_path / 'pairs.json')
    capsys.readouterr()
    assert main([
        'select-pairs', '--matrices', matrices_path, '--source', 'similarity', '--threshold', '0.5', '-o', pairs
    ]) == EXIT_DATA
    assert 'similarity matrix' in capsys.readouterr().err
    assert main([
        'select-pairs', '--matrices', matrices_path, '--source', 'confusion', '--threshold', '0.05', '-o', pairs
    ]) == EXIT_OK


def test_identification(splits, tmp_path, capsys):
    model = str(tmp_path / 'model.json')
    pairs = str(tmp_path / 'pairs.json')
    bank = str(tmp_path / 'bank.json')
    signatures = str(tmp_path / 'signatures.jsonl')
    with open(pairs, 'w', encoding='utf-8') as outfile:
        json.dump({'source': 'confusion', 'threshold': 0.1, 'pairs': [[0, 1]]}, outfile)

    assert main(['train', splits['train'], '-o', model]) == EXIT_OK
    assert main(['build-bank', splits['train'], '--model', model, '--pairs', pairs, '-o', bank]) == EXIT_OK
    assert main([
        'sign', splits['test'], '--model', model, '--bank', bank, '--identification', '-o', signatures
    ]) == EXIT_OK

    capsys.readouterr()
    assert main(['match', signatures, '--gallery', splits['train'], '--model', model]) == EXIT_OK
    assert len(capsys.readouterr().out.strip().splitlines()) == 41

    # Identification signatures can't be matched without a gallery
    assert main(['match', signatures]) == EXIT_DATA
    assert 'MissingGallery' in capsys.readouterr().err

    assert main(['match', signatures, '--gallery', splits['train']]) == EXIT_USAGE


def test_sweep(tmp_path, capsys):
    output = str(tmp_path / 'sweep')
    assert main([
        'sweep', '--seed', '3', '--output', output,
        '--similarity-thresholds', '0.9,1.0', '--confusion-thresholds', '0.1,1.0',
        '--set', 'synthetic.per_class=30', '--set', 'run.seed=5',
    ]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith('global accuracy: ')
    assert out.count('threshold') == 4
    with open(os.path.join(output, 'report.json'), encoding='utf-8') as infile:
        report = json.load(infile)
    assert report['config']['run']['seed'] == 5
    assert report['config']['selection']['confusion_thresholds'] == [0.1, 1.0]


def test_sweep_config_file(tmp_path):
    config = tmp_path / 'experiment.toml'
    config.write_text(
        "[synthetic]\nper_class = 30\n\n[selection]\nsources = [\"confusion\"]\n"
        "confusion_thresholds = [1.0]\n",
        encoding='utf-8',
    )
    assert main(['-q', 'sweep', '--config', str(config)]) == EXIT_OK


def test_sweep_over_splits(tmp_path, capsys):
    output = str(tmp_path / 'splits')
    assert main([
        'sweep', '--splits', '3', '--seed', '2', '--output', output,
        '--similarity-thresholds', '0.9,1.0', '--confusion-thresholds', '0.1,1.0',
        '--set', 'synthetic.per_class=30',
    ]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == 'seed,global,LCC-SM,LCC-CM'
    assert [line.split(',')[0] for line in lines[1:4]] == ['2', '3', '4']
    assert lines[4].startswith('average ranks: global ')

    assert main(['stats', os.path.join(output, 'accuracy.csv')]) == EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    with open(os.path.join(output, 'stats.json'), encoding='utf-8') as infile:
        written = json.load(infile)
    assert printed['n_splits'] == written['n_splits'] == 3
    assert printed['significant_pairs'] == written['significant_pairs']

    assert main(['sweep', '--splits', '1']) == EXIT_USAGE


def test_stats(tmp_path, capsys):
    rows = [(3, 2, 1)] * 9 + [(3, 1, 2)] * 9 + [(2, 3, 1)] * 7 + [(1, 2, 3)] * 5
    table = tmp_path / 'accuracy.csv'
    table.write_text(
        "global,LCC-SM,LCC-CM\n"
        + ''.join(','.join(str(1 - rank / 10) for rank in row) + '\n' for row in rows),
        encoding='utf-8',
    )
    output = str(tmp_path / 'stats.json')
    assert main(['stats', str(table), '--q-alpha', '1.96', '-o', output]) == EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    with open(output, encoding='utf-8') as infile:
        written = json.load(infile)
    assert printed['significant_pairs'] == written['significant_pairs'] == [['global', 'LCC-CM']]
    assert round(written['critical_difference'], 2) == 0.51


def test_usage_errors(capsys):
    assert main([]) == EXIT_USAGE
    assert main(['train']) == EXIT_USAGE
    assert main(['stats', 'accuracy.csv', '--alpha', 'often']) == EXIT_USAGE
    assert main(['select-pairs', '--matrices', 'm.json', '--source', 'random', '--threshold', '0.1', '-o', 'p.json']) == EXIT_USAGE
    assert 'lccmatch' in capsys.readouterr().err


def test_data_errors(tmp_path, capsys):
    assert main(['train', str(tmp_path / 'missing.csv'), '-o', str(tmp_path / 'model.json')]) == EXIT_DATA

    broken = tmp_path / 'broken.csv'
    broken.write_text("0,1.0\n1,oops\n", encoding='utf-8')
    capsys.readouterr()
    assert main(['train', str(broken), '-o', str(tmp_path / 'model.json')]) == EXIT_DATA
    assert 'ParseError: line 2' in capsys.readouterr().err

    assert main(['sweep', '--set', f'data.path="{broken}"']) == EXIT_DATA
    assert 'error in data: ParseError' in capsys.readouterr().err

    assert main(['sweep', '--set', 'data.split=[0.5, 0.5]']) == EXIT_DATA


def test_numeric_errors(tmp_path, capsys):
    # Both classes share a centroid, so every class has the same mean score
    model = tmp_path / 'model.json'
    model.write_text(json.dumps({
        'label_names': ['a', 'b'],
        'model': {
            'kind': 'centroid',
            'class_count': 2,
            'dimension': 1,
            'temperature': 1.0,
            'centroids': [[0.0], [0.0]],
        },
    }), encoding='utf-8')
    validation = tmp_path / 'validation.csv'
    validation.write_text("a,1.0\nb,2.0\n", encoding='utf-8')
    capsys.readouterr()
    assert main([
        'matrices', '--model', str(model), '--validation', str(validation), '-o', str(tmp_path / 'out')
    ]) == EXIT_NUMERIC
    assert 'DegenerateMeans' in capsys.readouterr().err
