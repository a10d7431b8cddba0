# =============================================================================
# tests/test_cli.py
# =============================================================================

import csv

import pytest

from src import main as cli
from src.core import datapack, pipeline
from src.core.pipeline import TrainingDivergedError


@pytest.fixture
def dataset(tmp_path):
    out = tmp_path / 'data' / 'tiny.pack'
    assert cli.main(['synth', '--preset', 'tiny', '--out', str(out), '--n', '20', '--quiet']) == 0
    return out.with_suffix('.json')


@pytest.fixture
def checkpoint(tmp_path, dataset):
    ckpt = tmp_path / 'run' / 'model.ckpt'
    code = cli.main(['train', '--preset', 'tiny', '--data', str(dataset), '--out', str(ckpt),
                     '--epochs', '1', '--quiet'])
    assert code == 0
    return ckpt


def _rows(path):
    with open(path, newline='', encoding='utf-8') as f:
        return list(csv.reader(f))


def test_synth_writes_splits_and_manifest(dataset, capsys):
    splits, metadata = datapack.read_manifest(dataset)
    assert set(splits) == {'train', 'val', 'test'}
    assert [len(datapack.load_split(dataset, k)) for k in ('train', 'val', 'test')] == [16, 2, 2]
    assert metadata['dims']['T'] == 6
    assert sum(metadata['class_histogram']) == 20 * 6
    assert (dataset.parent / 'tiny.pack').exists()


def test_synth_prints_dims(tmp_path, capsys):
    assert cli.main(['synth', '--preset', 'tiny', '--out', str(tmp_path / 'x.pack'), '--n', '4']) == 0
    printed = capsys.readouterr().out
    assert 'T=6 C=3' in printed
    assert 'Istogramma' in printed


def test_train_writes_checkpoint_and_history(checkpoint, capsys):
    assert checkpoint.exists()
    history = _rows(checkpoint.parent / 'history.csv')
    assert history[0] == ['epoch', 'train_loss', 'val_accuracy']
    assert len(history) == 2
    assert pipeline.read_checkpoint(checkpoint).cfg.epochs == 1


def test_train_prints_validation_accuracy(tmp_path, dataset, capsys):
    code = cli.main(['train', '--preset', 'tiny', '--data', str(dataset), '--mode', 'weakly',
                     '--ablation', 'no-cere', '--out', str(tmp_path / 'w.ckpt'), '--epochs', '1',
                     '--quiet', '--list-params'])
    assert code == 0
    printed = capsys.readouterr().out
    assert 'val_acc=' in printed
    assert 'head.W_6' in printed
    assert 'cere' not in printed
    cfg = pipeline.read_checkpoint(tmp_path / 'w.ckpt').cfg
    assert (cfg.mode, cfg.cere) == ('weakly', 'zero_init')


def test_train_resume(tmp_path, dataset, checkpoint):
    out = tmp_path / 'resumed.ckpt'
    code = cli.main(['train', '--preset', 'tiny', '--data', str(dataset), '--out', str(out),
                     '--epochs', '2', '--resume', str(checkpoint), '--quiet'])
    assert code == 0
    assert pipeline.read_checkpoint(out).state['epoch'] == 2


def test_eval_prints_accuracy_and_confusion(tmp_path, dataset, checkpoint, capsys):
    confusion = tmp_path / 'confusion.csv'
    assert cli.main(['eval', '--ckpt', str(checkpoint), '--data', str(dataset),
                     '--confusion', str(confusion)]) == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert line.startswith('acc=')
    accuracy = float(line.split('=', 1)[1])
    assert 0.0 <= accuracy <= 1.0
    table = _rows(confusion)
    assert len(table) == 4
    assert sum(int(v) for row in table[1:] for v in row[1:]) == 2 * 6


def test_dump_attention(tmp_path, dataset, checkpoint):
    sample_id = datapack.load_split(dataset, 'test')[0].id
    out = tmp_path / 'attention'
    assert cli.main(['dump-attention', '--ckpt', str(checkpoint), '--data', str(dataset),
                     '--sample', sample_id, '--out', str(out), '--quiet']) == 0
    assert len(list(out.glob('segment_*.pgm'))) == 6
    assert (out / 'segment_00.pgm').read_bytes()[:2] == b'P5'
    assert len(_rows(out / 'attention.csv')) == 1 + 6 * 2 * 2
    trace = _rows(out / 'trace.csv')
    assert trace[0] == ['segment', 'O_t', 'S', 'label_hat', 'label_true']
    assert len(trace) == 7


def test_dump_attention_unknown_sample(tmp_path, dataset, checkpoint):
    assert cli.main(['dump-attention', '--ckpt', str(checkpoint), '--data', str(dataset),
                     '--sample', 'nope', '--out', str(tmp_path / 'a')]) == 2


def test_gradcheck_passes_on_tiny_config(capsys):
    assert cli.main(['gradcheck', '--mode', 'fully', '--max-elements', '4', '--quiet']) == 0
    out = capsys.readouterr().out
    assert 'max_rel_err=' in out
    assert 'max 4 per parametro' in out


def test_gradcheck_detects_broken_adjoint(capsys):
    code = cli.main(['gradcheck', '--mode', 'fully', '--max-elements', '4', '--quiet',
                     '--fault', 'Sigmoid'])
    assert code == 4


def test_gradcheck_refuses_dropout():
    assert cli.main(['gradcheck', '--dropout']) == 2


@pytest.mark.slow
def test_gradcheck_both_modes():
    assert cli.main(['gradcheck', '--quiet']) == 0


def test_ablation_report(tmp_path, dataset):
    out = tmp_path / 'report'
    assert cli.main(['ablation', '--preset', 'tiny', '--data', str(dataset), '--out', str(out),
                     '--epochs', '1', '--quiet']) == 0
    table = _rows(out / 'ablation.csv')
    assert tuple(table[0]) == pipeline.REPORT_HEADER
    assert len(table) == 1 + 4 * 2
    assert 'w/o common CERE' in (out / 'ablation.txt').read_text(encoding='utf-8')


@pytest.mark.slow
def test_loss_table_report(tmp_path, dataset):
    out = tmp_path / 'report'
    assert cli.main(['loss-table', '--preset', 'tiny', '--data', str(dataset), '--out', str(out),
                     '--epochs', '1', '--seeds', '0,1', '--quiet']) == 0
    assert len(_rows(out / 'losses.csv')) == 1 + 5 * 2 * 2
    assert {row[0].split(':')[0] for row in _rows(out / 'losses.csv')[1:]} == {'VSCG', 'PSP'}


def test_seed_precedence(monkeypatch):
    parser = cli.build_parser()
    monkeypatch.setenv('VSCG_SEED', '7')
    args = parser.parse_args(['synth', '--preset', 'tiny', '--out', 'x.pack'])
    assert cli.resolve_config(args).seed == 7
    args = parser.parse_args(['synth', '--preset', 'tiny', '--out', 'x.pack', '--seed', '3'])
    assert cli.resolve_config(args).seed == 3


def test_config_file_then_set_then_flags(tmp_path):
    path = tmp_path / 'run.cfg'
    path.write_text('train.lr = 0.01\ntrain.epochs = 7\nloss.mode = weakly\n', encoding='utf-8')
    args = cli.build_parser().parse_args([
        'train', '--preset', 'tiny', '--config', str(path), '--set', 'train.epochs=9',
        '--lr', '0.02', '--data', 'm.json', '--out', 'm.ckpt'])
    cfg = cli.resolve_config(args)
    assert (cfg.lr, cfg.epochs, cfg.mode) == (0.02, 9, 'weakly')


def test_bad_seed_environment(tmp_path, monkeypatch):
    monkeypatch.setenv('VSCG_SEED', 'abc')
    assert cli.main(['synth', '--preset', 'tiny', '--out', str(tmp_path / 'x.pack')]) == 2


@pytest.mark.parametrize('argv', [
    [],
    ['train'],
    ['synth', '--out', 'x.pack', '--set', 'dims.depth=3'],
    ['synth', '--out', 'x.pack', '--set', 'nokey'],
    ['eval', '--ckpt', 'missing.ckpt', '--data', 'missing.json'],
])
def test_usage_errors_exit_two(tmp_path, monkeypatch, argv):
    monkeypatch.chdir(tmp_path)
    assert cli.main(argv) == 2


def test_divergence_exit_code(tmp_path, dataset, monkeypatch):
    def diverge(self, *args, **kwargs):
        raise TrainingDivergedError('loss non finita')

    monkeypatch.setattr(pipeline.Trainer, 'fit', diverge)
    code = cli.main(['train', '--preset', 'tiny', '--data', str(dataset),
                     '--out', str(tmp_path / 'x.ckpt'), '--quiet'])
    assert code == 3


@pytest.mark.parametrize('name', ['paper', 'ave'])
def test_synth_full_scale_preset(tmp_path, name):
    out = tmp_path / 'full.pack'
    assert cli.main(['synth', '--preset', name, '--out', str(out), '--n', '2', '--quiet']) == 0
    header, _ = datapack.read_pack_with_header(out)
    assert (header.d_v, header.H, header.W, header.d_a) == (512, 7, 7, 128)


def test_train_rejects_other_background_index(tmp_path, dataset):
    splits, _ = datapack.read_manifest(dataset)
    for path in splits.values():
        datapack.write_pack(datapack.read_pack(path), path, background_index=0)
    code = cli.main(['train', '--preset', 'tiny', '--data', str(dataset),
                     '--out', str(tmp_path / 'x.ckpt'), '--quiet'])
    assert code == 2


def test_eval_rejects_corrupt_sample_id(tmp_path, dataset, checkpoint):
    path = datapack.read_manifest(dataset)[0]['test']
    raw = bytearray(path.read_bytes())
    raw[datapack.HEADER_SIZE + 4] = 0xff
    path.write_bytes(bytes(raw))
    assert cli.main(['eval', '--ckpt', str(checkpoint), '--data', str(dataset)]) == 2


@pytest.mark.slow
def test_gradcheck_all_elements_reports_full_coverage(capsys):
    assert cli.main(['gradcheck', '--mode', 'weakly', '--max-elements', '0', '--quiet']) == 0
    assert 'tutti gli elementi' in capsys.readouterr().out


def test_gradcheck_detects_broken_threshold():
    code = cli.main(['gradcheck', '--mode', 'fully', '--max-elements', '24', '--quiet',
                     '--fault', 'Threshold'])
    assert code == 4
