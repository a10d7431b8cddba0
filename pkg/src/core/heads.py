# =============================================================================
# File 7: src/core/heads.py
# =============================================================================

"""
Teste di classificazione e obiettivi.

Fully-supervised: rilevanza evento O_t, categorie O_c, similarità S e la
negative pair filter loss; decodifica con soglia τ_b.
Weakly-supervised: testa pesata sui segmenti, smooth loss e decodifica
per argmax di f^h.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .datapack import LabelError
from .numkit import (
    L1_EPS, DegenerateInputError, DiffValue, DimensionError, Module, Parameter, ValueLike,
    as_value, bce, concat, l1_normalize, log, log_softmax, matmul, mul, reduce_max,
    reduce_mean, reduce_sum, relu, reshape, scale, sigmoid, softmax, square,
)


# -----------------------------------------------------------------------------
# Parametri
# -----------------------------------------------------------------------------

class FullyHeadParams(Module):
    def __init__(self, rng: np.random.Generator, d_f: int, C: int):
        self.W_3 = Parameter.uniform(rng, (d_f, 1), fan_in=d_f)
        self.W_4 = Parameter.uniform(rng, (d_f, C - 1), fan_in=d_f)


class WeakHeadParams(Module):
    def __init__(self, rng: np.random.Generator, d_f: int, d_h: int, C: int):
        self.W_4 = Parameter.uniform(rng, (d_f, d_h), fan_in=d_f)
        self.W_5 = Parameter.uniform(rng, (d_h, C), fan_in=d_h)
        self.W_6 = Parameter.uniform(rng, (C, 1), fan_in=C)


@dataclass
class FullyOutput:
    O_t: DiffValue            # B×T in (0, 1)
    O_c: DiffValue            # B×(C−1) logit
    S: DiffValue              # B×T, righe l1-normalizzate o nulle
    s_valid: np.ndarray       # B, False dove ‖s‖₁ è degenere
    n_clamped: int = 0        # prodotti negativi portati a 0


@dataclass
class WeakOutput:
    f_h: DiffValue            # B×T×C
    O_w: DiffValue            # B×C


def _label_array(values: np.ndarray, ndim: int) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    return arr[None] if arr.ndim == ndim - 1 else arr


# -----------------------------------------------------------------------------
# Fully-supervised
# -----------------------------------------------------------------------------

def fully_forward(f_av: ValueLike, a_isce: ValueLike, v_isce: ValueLike, params: FullyHeadParams,
                  skip_degenerate: bool = False) -> FullyOutput:
    """
    O_t = sigmoid(squeeze(f·W_3)), O_c = maxpool_T(f)·W_4,
    S = l1(relu(Σ_d a⊙v)) lungo T.

    Con `skip_degenerate` i campioni con ‖s‖₁ nullo restano a zero e sono
    marcati in `s_valid`; altrimenti sollevano DegenerateInputError.
    """
    f_av = as_value(f_av)
    if f_av.ndim != 3:
        raise DimensionError(f"fully_forward: f_av {f_av.shape}, atteso B×T×d_f")
    B, T, _ = f_av.shape
    O_t = sigmoid(reshape(matmul(f_av, params.W_3), (B, T)))
    O_c = matmul(reduce_max(f_av, axis=1), params.W_4)

    s = reduce_sum(mul(a_isce, v_isce), axis=-1)
    n_clamped = int(np.sum(s.data < 0))
    s = relu(s)
    s_valid = s.data.sum(axis=-1) > L1_EPS
    if not skip_degenerate and not s_valid.all():
        bad = np.flatnonzero(~s_valid).tolist()
        raise DegenerateInputError(f"similarità degenere (‖s‖₁ < {L1_EPS}) per i campioni {bad}")
    S = l1_normalize(s, axis=-1, allow_zero=True)
    return FullyOutput(O_t, O_c, S, s_valid, n_clamped)


def category_loss(O_c: DiffValue, cat_rows: np.ndarray) -> DiffValue:
    """L_c: O_c video-level applicato a ogni riga Y_tc (righe background nulle)"""
    B, T, K = cat_rows.shape
    logp = reshape(log_softmax(O_c, axis=-1), (B, 1, K))
    return scale(reduce_sum(mul(logp, cat_rows)), -1.0 / (B * T * K))


def relevance_loss(O_t: DiffValue, bg_mask: np.ndarray) -> DiffValue:
    return reduce_mean(bce(O_t, bg_mask))


def avps_loss(S: DiffValue, bg_l1: np.ndarray, s_valid: Optional[np.ndarray] = None) -> DiffValue:
    """MSE tra S e Y_tl sui soli campioni con S valido"""
    B, T = bg_l1.shape
    valid = np.ones(B, dtype=bool) if s_valid is None else np.asarray(s_valid, dtype=bool)
    n_valid = int(valid.sum())
    if n_valid == 0:
        return DiffValue(0.0)
    weights = valid.astype(np.float64)[:, None] / (n_valid * T)
    return reduce_sum(mul(square(S - bg_l1), weights))


def composite_ce_loss(O_t: DiffValue, O_c: DiffValue, bg_mask: np.ndarray,
                      cat_rows: np.ndarray) -> DiffValue:
    """
    L_ce per segmento su C classi: p(bg) = 1 − O_t, p(c) = O_t·softmax(O_c)_c.
    """
    B, T, K = cat_rows.shape
    fg = mul(reshape(O_t, (B, T, 1)), reshape(softmax(O_c, axis=-1), (B, 1, K)))
    probs = concat([fg, reshape(1.0 - O_t, (B, T, 1))], axis=-1)
    target = np.concatenate([cat_rows, (1.0 - bg_mask)[..., None]], axis=-1)
    return scale(reduce_sum(mul(log(probs), target)), -1.0 / (B * T))


def loss_fully(out: FullyOutput, labels, variant: str = 'full', avps_weight: float = 100.0) -> DiffValue:
    """
    `labels` espone bg_mask, cat_rows, bg_l1 (Batch o DerivedLabels).

    full: L_c + L_t + L_avps; c_t_only: L_c + L_t;
    ce_avps: L_ce + avps_weight·L_avps.
    """
    bg_mask = _label_array(labels.bg_mask, 2)
    cat_rows = _label_array(labels.cat_rows, 3)
    bg_l1 = _label_array(labels.bg_l1, 2)
    if variant == 'ce_avps':
        return (composite_ce_loss(out.O_t, out.O_c, bg_mask, cat_rows)
                + scale(avps_loss(out.S, bg_l1, out.s_valid), avps_weight))
    loss = category_loss(out.O_c, cat_rows) + relevance_loss(out.O_t, bg_mask)
    if variant == 'full':
        return loss + avps_loss(out.S, bg_l1, out.s_valid)
    if variant == 'c_t_only':
        return loss
    raise LabelError(f"variante di loss non valida per mode=fully: {variant}")


def foreground_classes(C: int, background_index: int) -> np.ndarray:
    return np.array([c for c in range(C) if c != background_index], dtype=np.int64)


def infer_fully(O_t: ValueLike, O_c: ValueLike, tau_b: float, background_index: int) -> np.ndarray:
    """Background se O_t ≤ τ_b, altrimenti la categoria video argmax(O_c)"""
    o_t = as_value(O_t).data
    o_c = as_value(O_c).data
    squeeze = o_t.ndim == 1
    o_t = np.atleast_2d(o_t)
    o_c = np.atleast_2d(o_c)
    classes = foreground_classes(o_c.shape[-1] + 1, background_index)
    video_class = classes[np.argmax(o_c, axis=-1)]  # pareggi al primo indice
    labels = np.where(o_t > tau_b, video_class[:, None], background_index)
    return labels[0] if squeeze else labels


# -----------------------------------------------------------------------------
# Weakly-supervised
# -----------------------------------------------------------------------------

def weak_forward(f_av: ValueLike, params: WeakHeadParams) -> WeakOutput:
    """f^h = f·W_4·W_5; φ = sigmoid(f^h·W_6); O_w = softmax(mean_T(f^h ⊙ Φ))"""
    f_av = as_value(f_av)
    f_h = matmul(matmul(f_av, params.W_4), params.W_5)
    phi = sigmoid(matmul(f_h, params.W_6))          # B×T×1, replicato su C
    O_w = softmax(reduce_mean(mul(f_h, phi), axis=1), axis=-1)
    return WeakOutput(f_h, O_w)


def smooth_bce(O_w: ValueLike, Y_c: np.ndarray) -> DiffValue:
    """BCE sulla distribuzione ri-normalizzata s(O_w), più piatta di O_w"""
    return reduce_mean(bce(softmax(O_w, axis=-1), Y_c))


def loss_weak(O_w: ValueLike, Y_c, lam: float = 2.0, variant: str = 'full') -> DiffValue:
    """full: λ·BCE(O_w, Y_c) + BCE(s(O_w), Y_c); bce_only: BCE(O_w, Y_c)"""
    Y_c = _label_array(Y_c, 2)
    if not np.all((Y_c >= 0.0) & (Y_c <= 1.0)):
        raise LabelError("Y_c deve stare in [0, 1]")
    O_w = as_value(O_w)
    if O_w.ndim == 1:
        O_w = reshape(O_w, (1,) + O_w.shape)
    plain = reduce_mean(bce(O_w, Y_c))
    if variant == 'bce_only':
        return plain
    if variant != 'full':
        raise LabelError(f"variante di loss non valida per mode=weakly: {variant}")
    if lam <= 0:
        raise LabelError(f"λ > 0 richiesto (trovato {lam})")
    return scale(plain, lam) + smooth_bce(O_w, Y_c)


def infer_weak(f_h: ValueLike, background_index: int) -> np.ndarray:
    """argmax su C per segmento; il background compete come classe ordinaria"""
    scores = as_value(f_h).data
    if not 0 <= background_index < scores.shape[-1]:
        raise LabelError(f"background_index {background_index} fuori da [0, {scores.shape[-1]})")
    return np.argmax(scores, axis=-1)


