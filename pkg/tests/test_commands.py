import csv

import pytest
from PIL import Image

from diagnet.__main__ import get_commands, main
from diagnet.training.checkpoint import load_checkpoint
from diagnet.training.config import parse_key_values


def read_manifest(path):
    with open(path) as f:
        return parse_key_values(f.read())


@pytest.fixture
def dataset(tmp_path):
    path = tmp_path / 'scenes.txt'
    assert main(['synth', '--seed', '0', '--count', '4', '--h-in', '32', '--out', str(path)]) == 0
    return str(path)


@pytest.fixture
def config_file(tmp_path, tiny_config):
    path = tmp_path / 'tiny.cfg'
    path.write_text(tiny_config.replace(epochs=1).to_text())
    return str(path)


@pytest.fixture
def trained(tmp_path, dataset, config_file):
    out = tmp_path / 'run'
    assert main(['train', '--dataset', dataset, '--config', config_file, '--out', str(out)]) == 0
    return out


def test_every_command_is_registered():
    assert set(get_commands()) == {'synth', 'train', 'eval', 'gradcheck', 'sweep-alpha', 'ablate', 'render'}


def test_synth(tmp_path, dataset, capsys):
    manifest = read_manifest(dataset + '.manifest.txt')
    assert manifest['command'] == 'synth'
    assert manifest['result.scenes'] == '4'
    assert manifest['exit_code'] == '0'

    again = tmp_path / 'again.txt'
    assert main(['synth', '--seed', '0', '--count', '4', '--h-in', '32', '--out', str(again)]) == 0
    assert 'result.boxes=' in capsys.readouterr().out
    assert again.read_bytes() == open(dataset, 'rb').read()


def test_synth_refuses_to_overwrite(dataset):
    assert main(['synth', '--count', '4', '--h-in', '32', '--out', dataset]) == 2
    assert main(['synth', '--count', '4', '--h-in', '32', '--out', dataset, '--force']) == 0


@pytest.mark.parametrize('flags', [['--count', '0'], ['--classes', '5'], ['--h-in', '4']])
def test_synth_usage_errors(tmp_path, flags, capsys):
    assert main(['synth', '--out', str(tmp_path / 'x.txt')] + flags) == 2
    assert capsys.readouterr().err.startswith('[!] ')


def test_train(trained):
    checkpoint = load_checkpoint(str(trained / 'checkpoint.dgnt'))
    assert checkpoint.epoch == 1

    lines = (trained / 'loss.csv').read_text().splitlines()
    assert lines[0] == 'epoch,diag_loss,det_loss'
    assert len(lines) == 2

    manifest = read_manifest(trained / 'train.manifest.txt')
    assert manifest['config.h_in'] == '32'
    assert manifest['result.epoch'] == '1'


def test_train_resume(tmp_path, dataset, trained, tiny_config):
    longer = tmp_path / 'longer.cfg'
    longer.write_text(tiny_config.replace(epochs=2).to_text())
    out = tmp_path / 'resumed'

    args = ['train', '--dataset', dataset, '--config', str(longer), '--out', str(out)]
    assert main(args + ['--resume', str(trained / 'checkpoint.dgnt')]) == 0
    assert load_checkpoint(str(out / 'checkpoint.dgnt')).epoch == 2
    assert len((out / 'loss.csv').read_text().splitlines()) == 2


def test_train_rejects_mismatched_dataset(tmp_path, config_file):
    big = tmp_path / 'big.txt'
    assert main(['synth', '--count', '1', '--out', str(big)]) == 0
    assert main(['train', '--dataset', str(big), '--config', config_file, '--out', str(tmp_path / 'run')]) == 2


def test_eval(tmp_path, dataset, trained, capsys):
    report = tmp_path / 'report.txt'
    args = ['eval', '--dataset', dataset, '--checkpoint', str(trained / 'checkpoint.dgnt'), '--out', str(report)]
    assert main(args) == 0

    values = parse_key_values(report.read_text())
    for key in ('map50', 'map75', 'map'):
        assert 0.0 <= float(values[key]) <= 1.0
    assert 'result.map50=' in capsys.readouterr().out
    assert read_manifest(str(report) + '.manifest.txt')['input.dataset'] == dataset


@pytest.mark.parametrize('flag', ['--score-threshold', '--nms-iou'])
def test_eval_rejects_out_of_range_thresholds(dataset, trained, flag):
    args = ['eval', '--dataset', dataset, '--checkpoint', str(trained / 'checkpoint.dgnt'), flag, '1.1']
    assert main(args) == 2


def test_eval_rejects_corrupt_checkpoint(tmp_path, dataset):
    broken = tmp_path / 'broken.dgnt'
    broken.write_bytes(b'not a checkpoint')
    assert main(['eval', '--dataset', dataset, '--checkpoint', str(broken)]) == 1


def test_gradcheck(tmp_path, capsys):
    out = tmp_path / 'gradcheck'
    assert main(['gradcheck', '--trials', '1', '--dims', '9,4,3', '--out', str(out)]) == 0
    manifest = read_manifest(str(out) + '.manifest.txt')
    assert manifest['result.pass'] == 'true'
    assert 'result.max_rel_error.comp/soft' in manifest
    assert main(['gradcheck', '--trials', '1', '--dims', '9,4,3', '--corrupt']) == 1


@pytest.mark.parametrize('dims', ['16,8', 'a,b,c', '16,0,4'])
def test_gradcheck_rejects_bad_dims(dims):
    assert main(['gradcheck', '--dims', dims]) == 2


def test_sweep_alpha(tmp_path, dataset, config_file):
    out = tmp_path / 'sweep.csv'
    args = ['sweep-alpha', '--dataset', dataset, '--config', config_file, '--seeds', '0,1', '--alphas', '0.5,2', '--out', str(out)]
    assert main(args) == 0

    with open(out) as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 6
    assert [r['mode'] for r in rows].count('hard') == 2
    assert {r['alpha'] for r in rows if r['mode'] == 'soft'} == {'0.5', '2.0'}


@pytest.mark.parametrize('alphas', ['', '0.5,0', 'x'])
def test_sweep_alpha_rejects_bad_alphas(tmp_path, dataset, alphas):
    assert main(['sweep-alpha', '--dataset', dataset, '--alphas', alphas, '--out', str(tmp_path / 's.csv')]) == 2


def test_ablate(tmp_path, dataset, config_file):
    out = tmp_path / 'ablate.csv'
    assert main(['ablate', '--dataset', dataset, '--config', config_file, '--out', str(out)]) == 0

    with open(out) as f:
        rows = list(csv.DictReader(f))
    assert {(r['mode'], r['loss_kind']) for r in rows} == {
        ('hard', 'min'), ('hard', 'comp'), ('soft', 'min'), ('soft', 'comp')
    }


def test_render_targets(tmp_path, dataset, config_file):
    out = tmp_path / 'targets.pgm'
    assert main(['render', '--what', 'targets', '--dataset', dataset, '--config', config_file, '--out', str(out), '--full']) == 0

    assert out.read_bytes()[:2] == b'P5'
    with Image.open(out) as image:
        assert image.size == (4, 4)
    with Image.open(tmp_path / 'targets.full.pgm') as image:
        assert image.size == (16, 16)


def test_render_diagmap(tmp_path, dataset, trained):
    out = tmp_path / 'diag.pgm'
    args = ['render', '--what', 'diagmap', '--dataset', dataset, '--checkpoint', str(trained / 'checkpoint.dgnt')]
    assert main(args + ['--scene', '3', '--out', str(out)]) == 0
    assert out.read_bytes()[:2] == b'P5'


@pytest.mark.parametrize('flags', [
    ['--what', 'edges'],
    ['--what', 'diagmap'],
    ['--what', 'targets', '--scene', '9'],
])
def test_render_usage_errors(tmp_path, dataset, flags):
    assert main(['render', '--dataset', dataset, '--out', str(tmp_path / 'x.pgm')] + flags) == 2


def test_failed_eval_still_writes_manifest(tmp_path, dataset):
    broken = tmp_path / 'broken.dgnt'
    broken.write_bytes(b'not a checkpoint')
    report = tmp_path / 'report.txt'
    assert main(['eval', '--dataset', dataset, '--checkpoint', str(broken), '--out', str(report)]) == 1

    assert not report.exists()
    manifest = read_manifest(str(report) + '.manifest.txt')
    assert manifest['command'] == 'eval'
    assert 'magic' in manifest['result.error']
    assert manifest['exit_code'] == '1'


def test_failed_train_still_writes_manifest(tmp_path, config_file):
    big = tmp_path / 'big.txt'
    assert main(['synth', '--count', '1', '--out', str(big)]) == 0
    out = tmp_path / 'run'
    assert main(['train', '--dataset', str(big), '--config', config_file, '--out', str(out)]) == 2

    manifest = read_manifest(out / 'train.manifest.txt')
    assert 'h_in' in manifest['result.error']
    assert manifest['exit_code'] == '2'
    assert not (out / 'checkpoint.dgnt').exists()


def test_gradcheck_writes_report(tmp_path):
    out = tmp_path / 'gradcheck.txt'
    assert main(['gradcheck', '--trials', '1', '--dims', '9,4,3', '--out', str(out)]) == 0
    report = parse_key_values(out.read_text())
    assert report['pass'] == 'true'
    assert report['dims'] == '9,4,3'
    assert main(['gradcheck', '--trials', '1', '--dims', '9,4,3', '--out', str(out)]) == 2


def test_sweep_alpha_of_one_matches_train_then_eval(tmp_path, dataset, config_file):
    sweep = tmp_path / 'sweep.csv'
    assert main(['sweep-alpha', '--dataset', dataset, '--config', config_file, '--alphas', '1', '--out', str(sweep)]) == 0
    with open(sweep) as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 2
    soft = next(r for r in rows if r['mode'] == 'soft')

    run = tmp_path / 'run'
    report = tmp_path / 'report.txt'
    assert main(['train', '--dataset', dataset, '--config', config_file, '--out', str(run)]) == 0
    assert main(['eval', '--dataset', dataset, '--checkpoint', str(run / 'checkpoint.dgnt'), '--out', str(report)]) == 0

    assert soft['map50'] == parse_key_values(report.read_text())['map50']
