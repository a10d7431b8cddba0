# =============================================================================
# File 8: src/core/pipeline.py
# =============================================================================

"""
Assemblaggio del modello VSCG, training nei due setting, valutazione per
segmento, checkpoint e matrici di ablazione (moduli e loss).
"""

import csv
import json
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from ..utils.config import ConfigError, ModelConfig
from ..utils.performance import PerformanceMonitor
from .datapack import Batch, FeatureSample, batch
from .escm import EscmOutput, EventSemanticConsistency, ProjectFuse, project_fuse
from .heads import (
    FullyHeadParams, FullyOutput, WeakHeadParams, WeakOutput, fully_forward, infer_fully,
    infer_weak, loss_fully, loss_weak, weak_forward,
)
from .numkit import Adam, DiffValue, Module, NonFiniteError
from .segment_encoder import SegmentEncoder, SegmentEncoding

CHECKPOINT_MAGIC = b'VSCK'
CHECKPOINT_VERSION = 1

# Campi che devono coincidere tra checkpoint e configurazione attesa
CHECKPOINT_DIM_FIELDS = ('T', 'C', 'd_a', 'd_v', 'H', 'W', 'd_m', 'd_l', 'd_p', 'd_s',
                         'd_e', 'd_i', 'd_f', 'd_h', 'background_index', 'mode',
                         'escm', 'cere', 'shared_cere')

ABLATION_ROWS: Tuple[Tuple[str, Dict], ...] = (
    ('Full model', {}),
    ('w/o ESCM', {'escm': False}),
    ('w/o CERE', {'cere': 'zero_init'}),
    ('w/o common CERE', {'shared_cere': False}),
)

LOSS_ROWS: Tuple[Tuple[str, str, str], ...] = (
    ('L_c+L_t', 'fully', 'c_t_only'),
    ('L_ce+λL_avps', 'fully', 'ce_avps'),
    ('L_fully', 'fully', 'full'),
    ('L_bce', 'weakly', 'bce_only'),
    ('2L_bce+L_s-bce', 'weakly', 'full'),
)

# Reti confrontate nella tabella delle loss: modello completo e baseline senza ESCM
LOSS_NETWORKS: Tuple[Tuple[str, Dict], ...] = (
    ('VSCG', {}),
    ('PSP', {'escm': False}),
)

REPORT_HEADER = ('variant', 'mode', 'seed', 'accuracy', 'epochs_run', 'wall_seconds')


class TrainingDivergedError(RuntimeError):
    """Loss non finita durante il training"""


class CheckpointError(ValueError):
    """Checkpoint illeggibile o incompatibile con la configurazione"""


# -----------------------------------------------------------------------------
# Modello
# -----------------------------------------------------------------------------

@dataclass
class ModelOutput:
    encoding: SegmentEncoding
    escm: Optional[EscmOutput]
    f_av: DiffValue
    fully: Optional[FullyOutput] = None
    weak: Optional[WeakOutput] = None


class VSCGModel(Module):
    """datapack → segment_encoder → escm → project_fuse → testa del setting"""

    def __init__(self, cfg: ModelConfig, verbose: bool = False):
        self.cfg = cfg.validate()
        self.verbose = verbose
        rng = np.random.default_rng(cfg.seed)

        # Ordine di costruzione fisso: determina l'inizializzazione
        self.encoder = SegmentEncoder(cfg, rng)
        self.escm = EventSemanticConsistency(cfg, rng) if cfg.escm else None
        self.fuse = ProjectFuse(rng, cfg.d_i if cfg.escm else cfg.d_s, cfg.d_f)
        if cfg.mode == 'fully':
            self.head = FullyHeadParams(rng, cfg.d_f, cfg.C)
        else:
            self.head = WeakHeadParams(rng, cfg.d_f, cfg.d_h, cfg.C)

        for name, param in self.named_parameters():
            param.name = name

        self.stats = {'forward_calls': 0, 'degenerate_skipped': 0, 'negative_clamped': 0}

    def forward(self, data: Batch, training: bool = False,
                rng: Optional[np.random.Generator] = None) -> ModelOutput:
        cfg = self.cfg
        self.stats['forward_calls'] += 1
        enc = self.encoder(data.audio, data.visual, training=training, rng=rng)
        if self.escm is not None:
            escm_out = self.escm(enc.a_seg, enc.v_seg)
            a_in, v_in = escm_out.a_isce, escm_out.v_isce
        else:
            escm_out = None
            a_in, v_in = enc.a_seg, enc.v_seg
        f_av = project_fuse(a_in, v_in, self.fuse, cfg.dropout_isce, training, rng)
        out = ModelOutput(enc, escm_out, f_av)
        if cfg.mode == 'fully':
            out.fully = fully_forward(f_av, a_in, v_in, self.head, skip_degenerate=True)
            self._log_similarity(out.fully, data)
        else:
            out.weak = weak_forward(f_av, self.head)
        return out

    def _log_similarity(self, fully: FullyOutput, data: Batch) -> None:
        skipped = int((~fully.s_valid).sum())
        if skipped:
            self.stats['degenerate_skipped'] += skipped
            if self.verbose:
                ids = [data.ids[i] for i in np.flatnonzero(~fully.s_valid)] if data.ids else []
                print(f"⚠️ Similarità degenere, L_avps saltata per {skipped} campioni {ids}")
        if fully.n_clamped:
            self.stats['negative_clamped'] += fully.n_clamped
            if self.verbose:
                print(f"⚠️ {fully.n_clamped} similarità negative portate a 0")

    def loss(self, out: ModelOutput, data: Batch) -> DiffValue:
        cfg = self.cfg
        if cfg.mode == 'fully':
            return loss_fully(out.fully, data, variant=cfg.variant, avps_weight=cfg.avps_weight)
        return loss_weak(out.weak.O_w, data.video_label, lam=cfg.lam, variant=cfg.variant)

    def predict(self, data: Batch) -> np.ndarray:
        """Etichette per segmento B×T (valutazione, dropout spento)"""
        out = self.forward(data, training=False)
        if self.cfg.mode == 'fully':
            return infer_fully(out.fully.O_t, out.fully.O_c, self.cfg.tau_b, self.cfg.bg_index)
        return infer_weak(out.weak.f_h, self.cfg.bg_index)

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(arrays))
        extra = sorted(set(arrays) - set(params))
        if missing or extra:
            raise CheckpointError(f"parametri non corrispondenti: mancanti {missing}, in più {extra}")
        for name, param in params.items():
            if arrays[name].shape != param.shape:
                raise CheckpointError(f"{name}: forma {arrays[name].shape} vs {param.shape}")
            param.data = np.array(arrays[name], dtype=np.float64, copy=True)


def build_model(cfg: ModelConfig, verbose: bool = False) -> VSCGModel:
    model = VSCGModel(cfg, verbose=verbose)
    if verbose:
        print(f"🔧 Modello VSCG ({cfg.mode}, variant={cfg.variant}): "
              f"{count_parameters(model):,} parametri")
    return model


def count_parameters(model: Module) -> int:
    return model.num_parameters()


# -----------------------------------------------------------------------------
# Valutazione
# -----------------------------------------------------------------------------

@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray      # C×C, righe = verità, colonne = predizione
    n_segments: int

    @property
    def per_class_counts(self) -> np.ndarray:
        return self.confusion.sum(axis=1)


def segment_accuracy(predicted: np.ndarray, truth: np.ndarray, C: int) -> EvalResult:
    predicted = np.asarray(predicted).reshape(-1)
    truth = np.asarray(truth).reshape(-1)
    confusion = np.zeros((C, C), dtype=np.int64)
    np.add.at(confusion, (truth, predicted), 1)
    total = truth.size
    accuracy = float(np.trace(confusion)) / total if total else 0.0
    return EvalResult(accuracy, confusion, total)


def evaluate(model: VSCGModel, samples: Sequence[FeatureSample], mode: Optional[str] = None,
             batch_size: Optional[int] = None) -> EvalResult:
    """Accuratezza per segmento (background incluso) e matrice di confusione"""
    cfg = model.cfg
    if mode is not None and mode != cfg.mode:
        raise ConfigError(f"mode richiesto {mode} ma il modello è {cfg.mode}")
    predicted, truth = [], []
    # Riduzione in ordine fisso
    for data in batch(samples, batch_size or cfg.batch_size, shuffle=False,
                      background_index=cfg.bg_index):
        predicted.append(model.predict(data))
        truth.append(data.label_indices)
    return segment_accuracy(np.concatenate(predicted), np.concatenate(truth), cfg.C)


# -----------------------------------------------------------------------------
# Training
# -----------------------------------------------------------------------------

@dataclass
class TrainResult:
    history: List[Dict[str, float]]
    best_val: float
    best_epoch: int
    epochs_run: int
    wall_seconds: float
    stopped_early: bool = False


class Trainer:
    """Loop di training deterministico con early stopping sulla val accuracy"""

    def __init__(self, model: VSCGModel, verbose: bool = False,
                 monitor: Optional[PerformanceMonitor] = None):
        self.model = model
        self.cfg = model.cfg
        self.verbose = verbose
        self.monitor = monitor or PerformanceMonitor()
        self.optimizer = Adam(model.parameters(), lr=self.cfg.lr)
        self.dropout_rng = np.random.default_rng(self.cfg.seed + 1)

        # Stato di training (salvato nel checkpoint)
        self.epoch = 0
        self.history: List[Dict[str, float]] = []
        self.best_val = -1.0
        self.best_epoch = 0
        self.bad_epochs = 0
        self.stopped_early = False
        self.best_arrays = model.state_arrays()

    def _parameter_norms(self) -> str:
        norms = [(name, float(np.linalg.norm(p.data))) for name, p in self.model.named_parameters()]
        norms.sort(key=lambda item: -item[1] if np.isfinite(item[1]) else -np.inf)
        return ', '.join(f"{name}={value:.3g}" for name, value in norms[:8])

    def train_step(self, data: Batch, tag: str) -> float:
        start = time.perf_counter()
        self.optimizer.zero_grad()
        try:
            out = self.model.forward(data, training=True, rng=self.dropout_rng)
            loss = self.model.loss(out, data)
            value = loss.item()
            if not np.isfinite(value):
                raise NonFiniteError(f"loss {value}")
            loss.backward()
            self.optimizer.step()
        except NonFiniteError as e:
            raise TrainingDivergedError(
                f"loss non finita al batch {tag} (campioni {data.ids[:4]}): {e}; "
                f"norme parametri: {self._parameter_norms()}") from e
        self.optimizer.zero_grad()
        self.monitor.record_step(time.perf_counter() - start, data.size)
        return value

    def train_epoch(self, samples: Sequence[FeatureSample]) -> float:
        cfg = self.cfg
        batches = batch(samples, cfg.batch_size, shuffle=True, seed=cfg.seed + self.epoch,
                        background_index=cfg.bg_index)
        total, count = 0.0, 0
        pbar = tqdm(batches, desc=f"Training Epoch {self.epoch + 1}", disable=not self.verbose,
                    leave=False)
        for i, data in enumerate(pbar):
            value = self.train_step(data, f"{self.epoch + 1}:{i}")
            total += value * data.size
            count += data.size
            pbar.set_postfix(loss=f"{value:.4f}")
        return total / count

    def fit(self, train_samples: Sequence[FeatureSample], val_samples: Sequence[FeatureSample],
            epochs: Optional[int] = None) -> TrainResult:
        if not train_samples or not val_samples:
            raise ConfigError("train richiede split train e val non vuoti")
        epochs = self.cfg.epochs if epochs is None else epochs
        self.monitor.start_monitoring()
        try:
            while self.epoch < epochs and not self.stopped_early:
                train_loss = self.train_epoch(train_samples)
                self.epoch += 1
                val_acc = evaluate(self.model, val_samples).accuracy
                self.history.append({'epoch': self.epoch, 'train_loss': train_loss,
                                     'val_accuracy': val_acc})
                if val_acc > self.best_val:
                    self.best_val, self.best_epoch, self.bad_epochs = val_acc, self.epoch, 0
                    self.best_arrays = self.model.state_arrays()
                else:
                    self.bad_epochs += 1
                if self.verbose:
                    self.monitor.update_system_metrics()
                    print(f"📊 Epoch {self.epoch}/{epochs} loss={train_loss:.4f} "
                          f"val_acc={val_acc:.4f} best={self.best_val:.4f}")
                if self.bad_epochs >= self.cfg.patience:
                    self.stopped_early = True
                    if self.verbose:
                        print(f"⚠️ Early stop: {self.cfg.patience} epoch senza miglioramenti "
                              f"(best epoch {self.best_epoch})")
        finally:
            self.monitor.stop_monitoring()
        return TrainResult(list(self.history), self.best_val, self.best_epoch, self.epoch,
                           self.monitor.wall_seconds, self.stopped_early)

    def state(self) -> Dict:
        return {
            'epoch': self.epoch,
            'history': self.history,
            'best_val': self.best_val,
            'best_epoch': self.best_epoch,
            'bad_epochs': self.bad_epochs,
            'stopped_early': self.stopped_early,
            'rng': self.dropout_rng.bit_generator.state,
            'adam_t': self.optimizer.t,
            'adam_lr': self.optimizer.lr,
        }

    @classmethod
    def from_checkpoint(cls, checkpoint: 'Checkpoint', verbose: bool = False) -> 'Trainer':
        """Riprende dallo stato salvato: pesi correnti, Adam, rng, storia"""
        model = build_model(checkpoint.cfg, verbose=verbose)
        model.load_arrays(checkpoint.params)
        trainer = cls(model, verbose=verbose)
        state = checkpoint.state
        if not state:
            raise CheckpointError("il checkpoint non contiene lo stato di training")
        names = [p.name for p in trainer.optimizer.params]
        trainer.optimizer.load_state_dict({
            't': state['adam_t'], 'lr': state['adam_lr'],
            'm': [checkpoint.adam_m[n] for n in names],
            'v': [checkpoint.adam_v[n] for n in names],
        })
        trainer.dropout_rng.bit_generator.state = state['rng']
        trainer.epoch = int(state['epoch'])
        trainer.history = [dict(row) for row in state['history']]
        trainer.best_val = float(state['best_val'])
        trainer.best_epoch = int(state['best_epoch'])
        trainer.bad_epochs = int(state['bad_epochs'])
        trainer.stopped_early = bool(state['stopped_early'])
        trainer.best_arrays = dict(checkpoint.best) if checkpoint.best else model.state_arrays()
        return trainer


def train(model: VSCGModel, train_samples: Sequence[FeatureSample],
          val_samples: Sequence[FeatureSample], cfg: Optional[ModelConfig] = None,
          verbose: bool = False) -> Tuple[TrainResult, Trainer]:
    """Addestra e riporta il modello ai pesi con la miglior val accuracy"""
    if cfg is not None and cfg != model.cfg:
        raise ConfigError("train: cfg diversa da quella del modello")
    trainer = Trainer(model, verbose=verbose)
    result = trainer.fit(train_samples, val_samples)
    model.load_arrays(trainer.best_arrays)
    return result, trainer


def write_history(history: Sequence[Dict[str, float]], path: Union[str, Path]) -> None:
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['epoch', 'train_loss', 'val_accuracy'])
        for row in history:
            writer.writerow([row['epoch'], repr(float(row['train_loss'])),
                             repr(float(row['val_accuracy']))])


# -----------------------------------------------------------------------------
# Checkpoint
# -----------------------------------------------------------------------------

@dataclass
class Checkpoint:
    cfg: ModelConfig
    params: Dict[str, np.ndarray]
    best: Dict[str, np.ndarray] = field(default_factory=dict)
    adam_m: Dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: Dict[str, np.ndarray] = field(default_factory=dict)
    state: Dict = field(default_factory=dict)

    def build(self, which: str = 'best', verbose: bool = False) -> VSCGModel:
        """Modello con i pesi migliori ('best') o correnti ('last')"""
        model = build_model(self.cfg, verbose=verbose)
        model.load_arrays(self.best if which == 'best' and self.best else self.params)
        return model


def _write_array(f, name: str, array: np.ndarray) -> None:
    raw_name = name.encode('utf-8')
    f.write(struct.pack('<I', len(raw_name)))
    f.write(raw_name)
    f.write(struct.pack('<I', array.ndim))
    f.write(struct.pack(f'<{array.ndim}I', *array.shape))
    f.write(np.ascontiguousarray(array, dtype='<f8').tobytes())


def save_checkpoint(model: VSCGModel, path: Union[str, Path], trainer: Optional[Trainer] = None) -> None:
    """
    Layout: magic 'VSCK', versione u32, JSON (config + stato) con lunghezza
    u32, numero di array u32, poi array nominati float64 little-endian.
    """
    arrays: List[Tuple[str, np.ndarray]] = [(f"param/{n}", a) for n, a in model.state_arrays().items()]
    meta: Dict = {'config': model.cfg.to_dict(), 'state': {}}
    if trainer is not None:
        meta['state'] = trainer.state()
        arrays += [(f"best/{n}", a) for n, a in trainer.best_arrays.items()]
        for p, m, v in zip(trainer.optimizer.params, trainer.optimizer.m, trainer.optimizer.v):
            arrays.append((f"adam_m/{p.name}", m))
            arrays.append((f"adam_v/{p.name}", v))
    raw_meta = json.dumps(meta, sort_keys=True).encode('utf-8')
    with open(path, 'wb') as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack('<I', CHECKPOINT_VERSION))
        f.write(struct.pack('<I', len(raw_meta)))
        f.write(raw_meta)
        f.write(struct.pack('<I', len(arrays)))
        for name, array in arrays:
            _write_array(f, name, array)


def _check_compatible(cfg: ModelConfig, expected: ModelConfig) -> None:
    for name in CHECKPOINT_DIM_FIELDS:
        found, wanted = getattr(cfg, name), getattr(expected, name)
        if found != wanted:
            raise CheckpointError(f"campo {name}: checkpoint {found!r}, atteso {wanted!r}")


def read_checkpoint(path: Union[str, Path], expected: Optional[ModelConfig] = None) -> Checkpoint:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"impossibile leggere {path}: {e}") from None
    offset = 0

    def take(n: int) -> bytes:
        nonlocal offset
        if offset + n > len(raw):
            raise CheckpointError(f"checkpoint troncato all'offset {offset}")
        chunk = raw[offset:offset + n]
        offset += n
        return chunk

    if take(4) != CHECKPOINT_MAGIC:
        raise CheckpointError("magic del checkpoint non valido")
    (version,) = struct.unpack('<I', take(4))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"campo version: checkpoint {version}, atteso {CHECKPOINT_VERSION}")
    (meta_len,) = struct.unpack('<I', take(4))
    meta = json.loads(take(meta_len).decode('utf-8'))
    try:
        cfg = ModelConfig.from_dict(meta['config'])
    except ConfigError as e:
        raise CheckpointError(f"configurazione nel checkpoint non valida: {e}") from None
    if expected is not None:
        _check_compatible(cfg, expected)

    groups: Dict[str, Dict[str, np.ndarray]] = {'param': {}, 'best': {}, 'adam_m': {}, 'adam_v': {}}
    (n_arrays,) = struct.unpack('<I', take(4))
    for _ in range(n_arrays):
        (name_len,) = struct.unpack('<I', take(4))
        name = take(name_len).decode('utf-8')
        (ndim,) = struct.unpack('<I', take(4))
        shape = struct.unpack(f'<{ndim}I', take(4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(take(8 * count), dtype='<f8').astype(np.float64).reshape(shape)
        group, _, param_name = name.partition('/')
        if group not in groups:
            raise CheckpointError(f"gruppo di array sconosciuto: {group}")
        groups[group][param_name] = data
    return Checkpoint(cfg, groups['param'], groups['best'], groups['adam_m'], groups['adam_v'],
                      meta.get('state', {}))


def load_checkpoint(path: Union[str, Path], expected: Optional[ModelConfig] = None,
                    which: str = 'best', verbose: bool = False) -> VSCGModel:
    return read_checkpoint(path, expected).build(which=which, verbose=verbose)


# -----------------------------------------------------------------------------
# Matrici di ablazione
# -----------------------------------------------------------------------------

@dataclass
class ReportRow:
    variant: str
    mode: str
    seed: int
    accuracy: float
    epochs_run: int
    wall_seconds: float
    n_params: int = 0

    def as_csv(self) -> List[str]:
        return [self.variant, self.mode, str(self.seed), f"{self.accuracy:.6f}",
                str(self.epochs_run), f"{self.wall_seconds:.3f}"]


def run_config(cfg: ModelConfig, label: str, train_samples: Sequence[FeatureSample],
               val_samples: Sequence[FeatureSample], verbose: bool = False) -> ReportRow:
    model = build_model(cfg)
    trainer = Trainer(model, verbose=False)
    result = trainer.fit(train_samples, val_samples)
    if verbose:
        print(f"📊 {label:<16} {cfg.mode:<6} seed={cfg.seed} acc={result.best_val:.4f} "
              f"epochs={result.epochs_run}")
    return ReportRow(label, cfg.mode, cfg.seed, result.best_val, result.epochs_run,
                     result.wall_seconds, count_parameters(model))


def _mode_config(base: ModelConfig, mode: str, seed: int, **changes) -> ModelConfig:
    changes.setdefault('variant', 'full')
    return base.replace(mode=mode, seed=seed, **changes).validate()


def ablation_matrix(base_cfg: ModelConfig, train_samples: Sequence[FeatureSample],
                    val_samples: Sequence[FeatureSample], seeds: Sequence[int] = (0,),
                    modes: Sequence[str] = ('fully', 'weakly'), verbose: bool = False) -> List[ReportRow]:
    """Full model, w/o ESCM, w/o CERE, w/o common CERE × setting × seed"""
    rows = []
    for label, changes in ABLATION_ROWS:
        for mode in modes:
            for seed in seeds:
                cfg = _mode_config(base_cfg, mode, seed, **changes)
                rows.append(run_config(cfg, label, train_samples, val_samples, verbose))
    return rows


def loss_matrix(base_cfg: ModelConfig, train_samples: Sequence[FeatureSample],
                val_samples: Sequence[FeatureSample], seeds: Sequence[int] = (0,),
                networks: Sequence[Tuple[str, Dict]] = LOSS_NETWORKS,
                verbose: bool = False) -> List[ReportRow]:
    """
    Varianti di loss per rete: L_c+L_t, L_ce+λL_avps, L_fully; L_bce, 2L_bce+L_s-bce.

    Le righe sono etichettate 'rete: variante', ad esempio 'PSP: L_fully'.
    """
    rows = []
    for network, changes in networks:
        for label, mode, variant in LOSS_ROWS:
            for seed in seeds:
                cfg = _mode_config(base_cfg, mode, seed, variant=variant, **changes)
                rows.append(run_config(cfg, f"{network}: {label}", train_samples, val_samples, verbose))
    return rows


def summarize(rows: Sequence[ReportRow]) -> List[Tuple[str, str, float, float, int]]:
    """Media e deviazione standard dell'accuratezza per (variante, setting)"""
    order: List[Tuple[str, str]] = []
    groups: Dict[Tuple[str, str], List[ReportRow]] = {}
    for row in rows:
        key = (row.variant, row.mode)
        if key not in groups:
            order.append(key)
            groups[key] = []
        groups[key].append(row)
    summary = []
    for key in order:
        accs = np.array([r.accuracy for r in groups[key]])
        summary.append((key[0], key[1], float(accs.mean()), float(accs.std()), groups[key][0].n_params))
    return summary


def write_report(rows: Sequence[ReportRow], csv_path: Union[str, Path],
                 txt_path: Optional[Union[str, Path]] = None) -> None:
    with open(csv_path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(REPORT_HEADER)
        for row in rows:
            writer.writerow(row.as_csv())
    if txt_path is None:
        return
    width = max([len(r.variant) for r in rows] + [len('variant')])
    lines = [f"{'variant':<{width}}  {'mode':<6}  {'mean_acc':>8}  {'std':>6}  {'params':>9}"]
    for variant, mode, mean, std, n_params in summarize(rows):
        lines.append(f"{variant:<{width}}  {mode:<6}  {mean:>8.4f}  {std:>6.4f}  {n_params:>9,}")
    Path(txt_path).write_text('\n'.join(lines) + '\n', encoding='utf-8')
