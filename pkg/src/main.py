# =============================================================================
# File 10: src/main.py
# =============================================================================

#!/usr/bin/env python3
"""
VSCG - localizzazione di eventi audio-visivi su feature precalcolate
Entry point a riga di comando: synth, train, eval, gradcheck,
dump-attention, ablation, loss-table.

Codici di uscita: 0 successo, 2 uso/config/I-O, 3 divergenza numerica,
4 gradient check fallito.
"""

import argparse
import csv
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from PIL import Image

# Import assoluti per funzionare con python src/main.py
try:
    # Prova import relativi (se eseguito come modulo)
    from .utils.config import PRESETS, ConfigError, ModelConfig, VSCGConfig, preset
    from .core import datapack, pipeline
    from .core.datapack import LabelError, PackFormatError
    from .core.numkit import GradCheckReport, NonFiniteError, check_gradients, inject_adjoint_fault
    from .core.pipeline import CheckpointError, TrainingDivergedError
except ImportError:
    # Fallback: la radice del repository sul path, package 'src'
    sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
    from src.utils.config import PRESETS, ConfigError, ModelConfig, VSCGConfig, preset
    from src.core import datapack, pipeline
    from src.core.datapack import LabelError, PackFormatError
    from src.core.numkit import GradCheckReport, NonFiniteError, check_gradients, inject_adjoint_fault
    from src.core.pipeline import CheckpointError, TrainingDivergedError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DIVERGED = 3
EXIT_GRADCHECK = 4

GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_MAX_PARAMS = 50_000

ABLATIONS: Dict[str, Dict] = {
    'none': {},
    'no-escm': {'escm': False},
    'no-cere': {'cere': 'zero_init'},
    'no-common-cere': {'shared_cere': False},
}


class GradCheckFailed(Exception):
    """Errore relativo oltre la tolleranza"""


# -----------------------------------------------------------------------------
# Configurazione da file, flag e ambiente
# -----------------------------------------------------------------------------

def default_seed() -> int:
    raw = os.environ.get('VSCG_SEED')
    if raw is None or raw.strip() == '':
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"VSCG_SEED non è un intero: {raw!r}") from None


def resolve_config(args: argparse.Namespace, **fixed) -> ModelConfig:
    """Preset → file di config → --set → flag espliciti → valori fissi"""
    config = VSCGConfig(preset(getattr(args, 'preset', None) or 'desk'))
    if getattr(args, 'config', None):
        config.load_file(args.config)
    for item in getattr(args, 'set', None) or []:
        if '=' not in item:
            raise ConfigError(f"--set atteso 'sezione.campo=valore', trovato {item!r}")
        key, value = item.split('=', 1)
        config.set(key.strip(), value.strip())

    flags = {
        'loss.mode': getattr(args, 'mode', None),
        'train.epochs': getattr(args, 'epochs', None),
        'train.lr': getattr(args, 'lr', None),
        'train.batch_size': getattr(args, 'batch_size', None),
    }
    for key, value in flags.items():
        if value is not None:
            config.set(key, value)
    # --seed > VSCG_SEED > preset o file
    seed = getattr(args, 'seed', None)
    if seed is None and os.environ.get('VSCG_SEED', '').strip():
        seed = default_seed()
    if seed is not None:
        config.set('train.seed', seed)

    for name, value in ABLATIONS[getattr(args, 'ablation', None) or 'none'].items():
        config.set(f"ablation.{name}", value)
    for key, value in fixed.items():
        config.set(key, value)
    return config.to_model_config()


def check_samples(samples: Sequence[datapack.FeatureSample], cfg: ModelConfig, split: str) -> None:
    if not samples:
        raise ConfigError(f"split {split} vuoto")
    header = datapack.PackHeader.from_config(cfg, len(samples))
    for sample in samples:
        try:
            sample.validate(header)
        except LabelError as e:
            raise ConfigError(f"split {split} incompatibile con la configurazione: {e}") from None


def check_header(header: datapack.PackHeader, cfg: ModelConfig, split: str) -> None:
    if header.background_index != cfg.bg_index:
        raise ConfigError(f"split {split}: background_index {header.background_index} nel pack, "
                          f"{cfg.bg_index} nella configurazione")


def load_checked(manifest: str, split: str, cfg: ModelConfig) -> List[datapack.FeatureSample]:
    header, samples = datapack.load_split_with_header(manifest, split)
    check_header(header, cfg, split)
    check_samples(samples, cfg, split)
    return samples


# -----------------------------------------------------------------------------
# Comandi
# -----------------------------------------------------------------------------

def cmd_synth(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    seed = cfg.seed
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)

    samples = datapack.synth_dataset(cfg, args.n, seed)
    datapack.write_pack(samples, out, cfg.bg_index)
    splits = datapack.split_samples(samples, seed)
    manifest = Path(args.manifest) if args.manifest else out.with_suffix('.json')
    manifest.parent.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, part in splits.items():
        if not part:
            continue
        path = out.with_name(f"{out.stem}-{name}{out.suffix}")
        datapack.write_pack(part, path, cfg.bg_index)
        paths[name] = os.path.relpath(path, manifest.parent)
    histogram = datapack.class_histogram(samples)
    datapack.write_manifest(manifest, paths, {
        'n': args.n, 'seed': seed, 'preset': args.preset or 'desk',
        'dims': {k: getattr(cfg, k) for k in ('T', 'C', 'd_a', 'd_v', 'H', 'W')},
        'background_index': cfg.bg_index,
        'class_histogram': histogram.tolist(),
    })

    print(f"✅ Scritti {len(samples)} campioni in {out} (manifest {manifest})")
    print(f"📊 T={cfg.T} C={cfg.C} d_a={cfg.d_a} d_v={cfg.d_v} H={cfg.H} W={cfg.W} "
          f"background={cfg.bg_index}")
    print("📊 Istogramma classi (segmenti): " +
          ' '.join(f"{c}:{n}" for c, n in enumerate(histogram.tolist())))
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    verbose = not args.quiet
    train_samples = load_checked(args.data, 'train', cfg)
    val_samples = load_checked(args.data, 'val', cfg)

    if args.resume:
        checkpoint = pipeline.read_checkpoint(args.resume, expected=cfg)
        trainer = pipeline.Trainer.from_checkpoint(checkpoint, verbose=verbose)
        if verbose:
            print(f"🔧 Ripresa da {args.resume} (epoch {trainer.epoch})")
    else:
        trainer = pipeline.Trainer(pipeline.build_model(cfg, verbose=verbose), verbose=verbose)

    if args.list_params:
        for name, param in trainer.model.named_parameters():
            print(f"{name} {list(param.shape)}")

    result = trainer.fit(train_samples, val_samples, epochs=cfg.epochs)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    pipeline.save_checkpoint(trainer.model, out, trainer)
    history_path = Path(args.history) if args.history else out.parent / 'history.csv'
    pipeline.write_history(result.history, history_path)

    if verbose:
        print(f"✅ Checkpoint {out}, storia {history_path}")
        print(f"📊 Epoch eseguite {result.epochs_run}, best epoch {result.best_epoch}, "
              f"{result.wall_seconds:.1f}s, {trainer.monitor.get_performance_grade()}")
    print(f"val_acc={result.best_val:.6f}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    model = pipeline.load_checkpoint(args.ckpt)
    samples = load_checked(args.data, args.split, model.cfg)
    result = pipeline.evaluate(model, samples)

    out = Path(args.confusion) if args.confusion else Path(args.ckpt).parent / f"confusion-{args.split}.csv"
    with open(out, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['true\\pred'] + [str(c) for c in range(model.cfg.C)])
        for c, row in enumerate(result.confusion.tolist()):
            writer.writerow([str(c)] + [str(v) for v in row])
    print(f"acc={result.accuracy:.6f}")
    return EXIT_OK


def gradcheck_config(args: argparse.Namespace, mode: str) -> ModelConfig:
    # Dropout spento: il controllo richiede una loss deterministica
    return resolve_config(args, **{'loss.mode': mode, 'loss.variant': 'full',
                                   'rates.r_s': 0.0, 'rates.r_i': 0.0})


def run_gradcheck(cfg: ModelConfig, n_samples: int, max_elements: Optional[int],
                  verbose: bool = True) -> GradCheckReport:
    model = pipeline.build_model(cfg)
    if model.num_parameters() > GRADCHECK_MAX_PARAMS:
        raise ConfigError(f"gradcheck richiede dimensioni ridotte: {model.num_parameters():,} "
                          f"parametri > {GRADCHECK_MAX_PARAMS:,}")
    samples = datapack.synth_dataset(cfg, n_samples, cfg.seed)
    data = datapack.stack_samples(samples, cfg.bg_index)
    names = [name for name, _ in model.named_parameters()]

    def loss_fn():
        return model.loss(model.forward(data, training=False), data)

    report = check_gradients(loss_fn, model.parameters(), max_elements=max_elements,
                             seed=cfg.seed, names=names)
    per_module: Dict[str, float] = {}
    for name, err in report.per_param.items():
        module = name.split('.')[0]
        per_module[module] = max(per_module.get(module, 0.0), err)
    if verbose:
        for module, err in per_module.items():
            print(f"📊 [{cfg.mode}] {module:<10} max_rel_err={err:.3e}")
    sampling = (f"max {max_elements} per parametro, campionati con seed {cfg.seed}"
                if max_elements is not None else "tutti gli elementi")
    print(f"{cfg.mode}: max_rel_err={report.max_rel_error:.3e} worst={report.worst_param} "
          f"checked={report.n_checked}/{model.num_parameters()} ({sampling}) kinks={report.n_kinks}")
    if not report.passed(GRADCHECK_TOLERANCE):
        raise GradCheckFailed(f"[{cfg.mode}] errore relativo {report.max_rel_error:.3e} "
                              f">= {GRADCHECK_TOLERANCE} su {report.worst_param}")
    return report


def cmd_gradcheck(args: argparse.Namespace) -> int:
    if args.dropout:
        print("❌ gradcheck con dropout attivo non è deterministico: rifiutato", file=sys.stderr)
        return EXIT_USAGE
    args.preset = args.preset or 'tiny'
    verbose = not args.quiet
    modes = [args.mode] if args.mode else ['fully', 'weakly']
    configs = [gradcheck_config(args, mode) for mode in modes]
    try:
        for cfg in configs:
            if args.fault:
                with inject_adjoint_fault(args.fault, args.fault_scale):
                    run_gradcheck(cfg, args.n, args.max_elements or None, verbose)
            else:
                run_gradcheck(cfg, args.n, args.max_elements or None, verbose)
    except GradCheckFailed as e:
        print(f"❌ Gradient check fallito: {e}", file=sys.stderr)
        return EXIT_GRADCHECK
    print("✅ Gradient check superato")
    return EXIT_OK


def find_sample(manifest: str, sample_id: str, cfg: ModelConfig) -> datapack.FeatureSample:
    splits, _ = datapack.read_manifest(manifest)
    for name in splits:
        header, samples = datapack.load_split_with_header(manifest, name)
        for sample in samples:
            if sample.id == sample_id:
                check_header(header, cfg, name)
                return sample
    raise ConfigError(f"campione sconosciuto: {sample_id}")


def cmd_dump_attention(args: argparse.Namespace) -> int:
    model = pipeline.load_checkpoint(args.ckpt)
    cfg = model.cfg
    if cfg.mode != 'fully':
        raise ConfigError("dump-attention richiede un checkpoint fully-supervised")
    sample = find_sample(args.data, args.sample, cfg)
    check_samples([sample], cfg, 'sample')
    data = datapack.stack_samples([sample], cfg.bg_index)
    out = model.forward(data, training=False)
    alpha = out.encoding.attention.data[0].reshape(cfg.T, cfg.H, cfg.W)
    O_t = out.fully.O_t.data[0]
    S = out.fully.S.data[0]
    predicted = model.predict(data)[0]
    truth = data.label_indices[0]

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / 'attention.csv', 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['segment', 'row', 'col', 'alpha'])
        for t in range(cfg.T):
            peak = alpha[t].max()
            pixels = np.round(alpha[t] / peak * 255.0) if peak > 0 else np.zeros_like(alpha[t])
            Image.fromarray(pixels.astype(np.uint8)).save(
                out_dir / f"segment_{t:02d}.pgm", format='PPM')
            for r in range(cfg.H):
                for c in range(cfg.W):
                    writer.writerow([t, r, c, repr(float(alpha[t, r, c]))])
    with open(out_dir / 'trace.csv', 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['segment', 'O_t', 'S', 'label_hat', 'label_true'])
        for t in range(cfg.T):
            writer.writerow([t, repr(float(O_t[t])), repr(float(S[t])), int(predicted[t]), int(truth[t])])
    if not args.quiet:
        print(f"✅ {cfg.T} mappe di attenzione scritte in {out_dir}")
    return EXIT_OK


def parse_seeds(raw: str) -> List[int]:
    try:
        return [int(part) for part in raw.split(',') if part.strip()]
    except ValueError:
        raise ConfigError(f"--seeds atteso elenco di interi, trovato {raw!r}") from None


def _report_command(args: argparse.Namespace, kind: str) -> int:
    cfg = resolve_config(args)
    verbose = not args.quiet
    train_samples = load_checked(args.data, 'train', cfg)
    val_samples = load_checked(args.data, 'val', cfg)
    seeds = parse_seeds(args.seeds) if args.seeds else [cfg.seed]

    if kind == 'ablation':
        rows = pipeline.ablation_matrix(cfg, train_samples, val_samples, seeds=seeds, verbose=verbose)
        stem = 'ablation'
    else:
        rows = pipeline.loss_matrix(cfg, train_samples, val_samples, seeds=seeds, verbose=verbose)
        stem = 'losses'
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    pipeline.write_report(rows, out_dir / f"{stem}.csv", out_dir / f"{stem}.txt")
    if verbose:
        print((out_dir / f"{stem}.txt").read_text(encoding='utf-8'), end='')
        print(f"✅ Report scritto in {out_dir / f'{stem}.csv'}")
    return EXIT_OK


def cmd_ablation(args: argparse.Namespace) -> int:
    return _report_command(args, 'ablation')


def cmd_loss_table(args: argparse.Namespace) -> int:
    return _report_command(args, 'loss')


# -----------------------------------------------------------------------------
# Parser
# -----------------------------------------------------------------------------

def _add_config_flags(parser: argparse.ArgumentParser, preset_default: Optional[str] = None) -> None:
    parser.add_argument('--config', help="file 'sezione.campo = valore'")
    parser.add_argument('--preset', choices=sorted(PRESETS), default=preset_default)
    parser.add_argument('--set', action='append', metavar='SEZIONE.CAMPO=VALORE',
                        help='sovrascrive una chiave di configurazione')
    parser.add_argument('--seed', type=int)
    parser.add_argument('--quiet', action='store_true')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='vscg', description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('synth', help='genera un dataset sintetico')
    _add_config_flags(p)
    p.add_argument('--out', required=True)
    p.add_argument('--n', type=int, default=100)
    p.add_argument('--manifest')
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser('train', help='addestra e salva il checkpoint')
    _add_config_flags(p)
    p.add_argument('--data', required=True, help='manifest JSON')
    p.add_argument('--mode', choices=('fully', 'weakly'))
    p.add_argument('--ablation', choices=sorted(ABLATIONS), default='none')
    p.add_argument('--out', required=True)
    p.add_argument('--epochs', type=int)
    p.add_argument('--lr', type=float)
    p.add_argument('--batch-size', type=int)
    p.add_argument('--history')
    p.add_argument('--resume')
    p.add_argument('--list-params', action='store_true')
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('eval', help='accuratezza per segmento su uno split')
    p.add_argument('--ckpt', required=True)
    p.add_argument('--data', required=True)
    p.add_argument('--split', choices=datapack.SPLIT_NAMES, default='test')
    p.add_argument('--confusion')
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('gradcheck', help='confronto con differenze finite')
    _add_config_flags(p)
    p.add_argument('--mode', choices=('fully', 'weakly'))
    p.add_argument('--n', type=int, default=2)
    p.add_argument('--max-elements', type=int, default=24,
                   help='elementi campionati a caso per parametro (0 = tutti)')
    p.add_argument('--dropout', action='store_true')
    p.add_argument('--fault', help=argparse.SUPPRESS)
    p.add_argument('--fault-scale', type=float, default=1.5, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser('dump-attention', help='mappe AGVA e traccia per segmento')
    p.add_argument('--ckpt', required=True)
    p.add_argument('--data', required=True)
    p.add_argument('--sample', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--quiet', action='store_true')
    p.set_defaults(func=cmd_dump_attention)

    for name, func, help_text in (('ablation', cmd_ablation, 'ablazioni dei moduli'),
                                  ('loss-table', cmd_loss_table, 'varianti di loss')):
        p = sub.add_parser(name, help=help_text)
        _add_config_flags(p)
        p.add_argument('--data', required=True)
        p.add_argument('--out', required=True)
        p.add_argument('--epochs', type=int)
        p.add_argument('--seeds', help='elenco separato da virgole')
        p.set_defaults(func=func)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point principale"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    try:
        return args.func(args)
    except (ConfigError, CheckpointError, PackFormatError, LabelError, OSError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDivergedError, NonFiniteError) as e:
        print(f"❌ Divergenza numerica: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except KeyboardInterrupt:
        print("\n⏹️ Interruzione utente")
        return 130


if __name__ == "__main__":
    sys.exit(main())
