# =============================================================================
# File 4: src/core/datapack.py
# =============================================================================

"""
Modello dati dei campioni AVE, formato binario dei feature pack,
generatore sintetico, etichette derivate e mini-batch.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..utils.config import ModelConfig

PACK_MAGIC = b'VSCG'
PACK_VERSION = 1
HEADER_FORMAT = '<4s9I'  # magic, version, n_samples, T, C, d_a, d_v, H, W, background_index
HEADER_SIZE = struct.calcsize(HEADER_FORMAT)
SPLIT_NAMES = ('train', 'val', 'test')


class PackFormatError(ValueError):
    """Pack illeggibile: magic/versione errati o file troncato"""

    def __init__(self, message: str, offset: Optional[int] = None, sample_index: Optional[int] = None):
        details = []
        if sample_index is not None:
            details.append(f"campione {sample_index}")
        if offset is not None:
            details.append(f"offset {offset}")
        super().__init__(f"{message} ({', '.join(details)})" if details else message)
        self.offset = offset
        self.sample_index = sample_index


class LabelError(ValueError):
    """Etichette non valide"""


# -----------------------------------------------------------------------------
# Tipi
# -----------------------------------------------------------------------------

@dataclass
class FeatureSample:
    """Un video: T vettori audio, T mappe visive H×W×d_v, etichette"""

    audio: np.ndarray          # (T, d_a)
    visual: np.ndarray         # (T, H, W, d_v)
    seg_labels: np.ndarray     # (T, C) one-hot
    id: str = ''

    @property
    def video_label(self) -> np.ndarray:
        # Y^weakly = media temporale di Y^fully
        return self.seg_labels.astype(np.float64).mean(axis=0)

    @property
    def label_indices(self) -> np.ndarray:
        return np.argmax(self.seg_labels, axis=1)

    def validate(self, header: Optional['PackHeader'] = None) -> None:
        if self.audio.ndim != 2 or self.visual.ndim != 4 or self.seg_labels.ndim != 2:
            raise LabelError(f"{self.id}: forme non valide {self.audio.shape}/{self.visual.shape}")
        T = self.audio.shape[0]
        if self.visual.shape[0] != T or self.seg_labels.shape[0] != T:
            raise LabelError(f"{self.id}: T incoerente tra audio, visual e etichette")
        labels = self.seg_labels
        if not np.all((labels == 0) | (labels == 1)) or not np.all(labels.sum(axis=1) == 1):
            raise LabelError(f"{self.id}: seg_labels deve avere righe one-hot")
        if header is not None:
            expected = (header.T, header.d_a, header.H, header.W, header.d_v, header.C)
            found = (T, self.audio.shape[1], self.visual.shape[1], self.visual.shape[2],
                     self.visual.shape[3], labels.shape[1])
            if expected != found:
                raise LabelError(f"{self.id}: dimensioni {found} diverse dall'header {expected}")


@dataclass(frozen=True)
class PackHeader:
    n_samples: int
    T: int
    C: int
    d_a: int
    d_v: int
    H: int
    W: int
    background_index: int
    magic: bytes = PACK_MAGIC
    version: int = PACK_VERSION

    def pack(self) -> bytes:
        return struct.pack(HEADER_FORMAT, self.magic, self.version, self.n_samples, self.T,
                           self.C, self.d_a, self.d_v, self.H, self.W, self.background_index)

    @classmethod
    def unpack(cls, raw: bytes) -> 'PackHeader':
        if len(raw) < HEADER_SIZE:
            raise PackFormatError("header troncato", offset=len(raw))
        magic, version, n, T, C, d_a, d_v, H, W, bg = struct.unpack(HEADER_FORMAT, raw[:HEADER_SIZE])
        if magic != PACK_MAGIC:
            raise PackFormatError(f"magic non valido {magic!r}", offset=0)
        if version != PACK_VERSION:
            raise PackFormatError(f"versione non supportata {version}", offset=4)
        if min(T, C, d_a, d_v, H, W) < 1 or bg >= C:
            raise PackFormatError("dimensioni header non valide", offset=12)
        return cls(n, T, C, d_a, d_v, H, W, bg)

    @classmethod
    def from_config(cls, cfg: ModelConfig, n_samples: int) -> 'PackHeader':
        return cls(n_samples, cfg.T, cfg.C, cfg.d_a, cfg.d_v, cfg.H, cfg.W, cfg.bg_index)


@dataclass
class DerivedLabels:
    """Etichette per le loss: Y_t, Y_tc, Y_tl e il flag di degenerazione"""

    bg_mask: np.ndarray   # (T,) 1 = segmento con evento AV
    cat_rows: np.ndarray  # (T, C-1), riga nulla sul background
    bg_l1: np.ndarray     # (T,) Y_t normalizzato l1 (uniforme se degenerato)
    degenerate: bool = False


@dataclass
class Batch:
    """Campioni impilati lungo un asse batch iniziale"""

    audio: np.ndarray          # (B, T, d_a)
    visual: np.ndarray         # (B, T, H, W, d_v)
    seg_labels: np.ndarray     # (B, T, C)
    video_label: np.ndarray    # (B, C)
    bg_mask: np.ndarray        # (B, T)
    cat_rows: np.ndarray       # (B, T, C-1)
    bg_l1: np.ndarray          # (B, T)
    degenerate: np.ndarray     # (B,) bool
    ids: List[str] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.audio.shape[0]

    @property
    def label_indices(self) -> np.ndarray:
        return np.argmax(self.seg_labels, axis=2)


# -----------------------------------------------------------------------------
# Formato binario
# -----------------------------------------------------------------------------

def write_pack(samples: Sequence[FeatureSample], path: Union[str, Path],
               background_index: Optional[int] = None) -> PackHeader:
    """Scrive header little-endian e i campioni (float32 su disco)"""
    if not samples:
        raise LabelError("write_pack: nessun campione")
    first = samples[0]
    T, d_a = first.audio.shape
    _, H, W, d_v = first.visual.shape
    C = first.seg_labels.shape[1]
    bg = C - 1 if background_index is None else background_index
    header = PackHeader(len(samples), T, C, d_a, d_v, H, W, bg)
    chunks = [header.pack()]
    for sample in samples:
        sample.validate(header)
        ident = sample.id.encode('utf-8')
        chunks.append(struct.pack('<I', len(ident)))
        chunks.append(ident)
        chunks.append(np.ascontiguousarray(sample.audio, dtype='<f4').tobytes())
        chunks.append(np.ascontiguousarray(sample.visual, dtype='<f4').tobytes())
        chunks.append(np.ascontiguousarray(sample.seg_labels, dtype=np.uint8).tobytes())
    Path(path).write_bytes(b''.join(chunks))
    return header


def read_pack_with_header(path: Union[str, Path]) -> Tuple[PackHeader, List[FeatureSample]]:
    raw = Path(path).read_bytes()
    header = PackHeader.unpack(raw)
    offset = HEADER_SIZE
    audio_bytes = header.T * header.d_a * 4
    visual_bytes = header.T * header.H * header.W * header.d_v * 4
    label_bytes = header.T * header.C

    def take(n: int, index: int, what: str) -> bytes:
        nonlocal offset
        if offset + n > len(raw):
            raise PackFormatError(f"file troncato leggendo {what}", offset=offset, sample_index=index)
        chunk = raw[offset:offset + n]
        offset += n
        return chunk

    samples = []
    for index in range(header.n_samples):
        (id_len,) = struct.unpack('<I', take(4, index, 'lunghezza id'))
        id_offset = offset
        try:
            ident = take(id_len, index, 'id').decode('utf-8')
        except UnicodeDecodeError:
            raise PackFormatError("id non UTF-8", offset=id_offset, sample_index=index) from None
        audio = np.frombuffer(take(audio_bytes, index, 'audio'), dtype='<f4')
        visual = np.frombuffer(take(visual_bytes, index, 'visual'), dtype='<f4')
        labels = np.frombuffer(take(label_bytes, index, 'etichette'), dtype=np.uint8)
        samples.append(FeatureSample(
            audio=audio.astype(np.float64).reshape(header.T, header.d_a),
            visual=visual.astype(np.float64).reshape(header.T, header.H, header.W, header.d_v),
            seg_labels=labels.reshape(header.T, header.C).copy(),
            id=ident,
        ))
    return header, samples


def read_pack(path: Union[str, Path]) -> List[FeatureSample]:
    return read_pack_with_header(path)[1]


def write_manifest(path: Union[str, Path], splits: Dict[str, str],
                   metadata: Optional[Dict] = None) -> None:
    unknown = set(splits) - set(SPLIT_NAMES)
    if unknown:
        raise PackFormatError(f"split sconosciuti nel manifest: {sorted(unknown)}")
    document = {'splits': dict(splits), 'metadata': metadata or {}}
    Path(path).write_text(json.dumps(document, indent=2, sort_keys=True) + '\n', encoding='utf-8')


def read_manifest(path: Union[str, Path]) -> Tuple[Dict[str, Path], Dict]:
    """Restituisce i percorsi assoluti degli split e i metadati"""
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding='utf-8'))
        splits = document['splits']
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise PackFormatError(f"manifest non valido {path}: {e}") from None
    return {name: path.parent / rel for name, rel in splits.items()}, document.get('metadata', {})


def load_split_with_header(manifest: Union[str, Path], split: str) -> Tuple[PackHeader, List[FeatureSample]]:
    splits, _ = read_manifest(manifest)
    if split not in splits:
        raise PackFormatError(f"split '{split}' assente nel manifest {manifest}")
    return read_pack_with_header(splits[split])


def load_split(manifest: Union[str, Path], split: str) -> List[FeatureSample]:
    return load_split_with_header(manifest, split)[1]


# -----------------------------------------------------------------------------
# Etichette derivate
# -----------------------------------------------------------------------------

def derive_labels(sample: FeatureSample, background_index: int) -> DerivedLabels:
    labels = sample.seg_labels.astype(np.float64)
    T, C = labels.shape
    if not 0 <= background_index < C:
        raise LabelError(f"background_index {background_index} fuori da [0, {C})")
    bg_mask = 1.0 - labels[:, background_index]
    cat_rows = np.delete(labels, background_index, axis=1) * bg_mask[:, None]
    total = bg_mask.sum()
    if total > 0:
        return DerivedLabels(bg_mask, cat_rows, bg_mask / total, degenerate=False)
    # Video tutto background: Y_tl uniforme con flag
    return DerivedLabels(bg_mask, cat_rows, np.full(T, 1.0 / T), degenerate=True)


# -----------------------------------------------------------------------------
# Generatore sintetico
# -----------------------------------------------------------------------------

def synth_dataset(cfg: ModelConfig, n: int, seed: int, sigma: Optional[float] = None,
                  unmatched_rate: Optional[float] = None) -> List[FeatureSample]:
    """Campioni con prototipi gaussiani per classe; deterministico dato il seed"""
    if cfg.C < 2:
        raise LabelError("synth_dataset: C >= 2 richiesto")
    sigma = cfg.sigma if sigma is None else sigma
    unmatched_rate = cfg.unmatched_rate if unmatched_rate is None else unmatched_rate
    rng = np.random.default_rng(seed)
    bg = cfg.bg_index
    foreground = [c for c in range(cfg.C) if c != bg]
    audio_protos = rng.standard_normal((cfg.C, cfg.d_a))
    visual_protos = rng.standard_normal((cfg.C, cfg.d_v))
    cells = cfg.H * cfg.W

    samples = []
    for i in range(n):
        cls = foreground[rng.integers(len(foreground))]
        length = int(rng.integers(1, cfg.T + 1))
        start = int(rng.integers(0, cfg.T - length + 1))
        labels = np.zeros((cfg.T, cfg.C), dtype=np.uint8)
        labels[:, bg] = 1
        labels[start:start + length, bg] = 0
        labels[start:start + length, cls] = 1

        audio = rng.standard_normal((cfg.T, cfg.d_a))
        visual = 0.5 * rng.standard_normal((cfg.T, cells, cfg.d_v))
        source = int(rng.integers(cells))
        for t in range(cfg.T):
            if start <= t < start + length:
                audio[t] = audio_protos[cls] + sigma * rng.standard_normal(cfg.d_a)
                visual[t, source] = visual_protos[cls] + sigma * rng.standard_normal(cfg.d_v)
            elif len(foreground) > 1 and rng.random() < unmatched_rate:
                # Oggetto visibile ma muto: coppia non corrispondente
                other = foreground[rng.integers(len(foreground))]
                visual[t, source] = visual_protos[other] + sigma * rng.standard_normal(cfg.d_v)
        samples.append(FeatureSample(
            audio=audio,
            visual=visual.reshape(cfg.T, cfg.H, cfg.W, cfg.d_v),
            seg_labels=labels,
            id=f"synth-{seed}-{i:05d}",
        ))
    return samples


def split_samples(samples: Sequence[FeatureSample], seed: int,
                  ratios: Tuple[float, float, float] = (0.8, 0.1, 0.1)) -> Dict[str, List[FeatureSample]]:
    order = np.random.default_rng(seed).permutation(len(samples))
    n_train = int(round(ratios[0] * len(samples)))
    n_val = int(round(ratios[1] * len(samples)))
    cuts = {'train': order[:n_train], 'val': order[n_train:n_train + n_val],
            'test': order[n_train + n_val:]}
    return {name: [samples[i] for i in idx] for name, idx in cuts.items()}


def class_histogram(samples: Sequence[FeatureSample]) -> np.ndarray:
    """Numero di segmenti per classe"""
    if not samples:
        return np.zeros(0, dtype=np.int64)
    return np.sum([s.seg_labels.sum(axis=0) for s in samples], axis=0).astype(np.int64)


# -----------------------------------------------------------------------------
# Mini-batch
# -----------------------------------------------------------------------------

def stack_samples(samples: Sequence[FeatureSample], background_index: int) -> Batch:
    derived = [derive_labels(s, background_index) for s in samples]
    return Batch(
        audio=np.stack([s.audio for s in samples]).astype(np.float64),
        visual=np.stack([s.visual for s in samples]).astype(np.float64),
        seg_labels=np.stack([s.seg_labels for s in samples]),
        video_label=np.stack([s.video_label for s in samples]),
        bg_mask=np.stack([d.bg_mask for d in derived]),
        cat_rows=np.stack([d.cat_rows for d in derived]),
        bg_l1=np.stack([d.bg_l1 for d in derived]),
        degenerate=np.array([d.degenerate for d in derived]),
        ids=[s.id for s in samples],
    )


def batch(samples: Sequence[FeatureSample], batch_size: int, shuffle: bool = False,
          seed: int = 0, background_index: Optional[int] = None) -> List[Batch]:
    """Divide in batch; l'ultimo batch parziale viene tenuto"""
    if batch_size < 1:
        raise LabelError(f"batch_size >= 1 richiesto (trovato {batch_size})")
    if not samples:
        raise LabelError("batch: dataset vuoto")
    bg = samples[0].seg_labels.shape[1] - 1 if background_index is None else background_index
    order = np.arange(len(samples))
    if shuffle:
        order = np.random.default_rng(seed).permutation(len(samples))
    return [stack_samples([samples[i] for i in order[start:start + batch_size]], bg)
            for start in range(0, len(samples), batch_size)]

