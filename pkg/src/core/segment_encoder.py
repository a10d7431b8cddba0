# =============================================================================
# File 5: src/core/segment_encoder.py
# =============================================================================

"""
Codifica a livello di segmento: attenzione visiva guidata dall'audio (AGVA),
Bi-LSTM a singolo strato, positive sample propagation (PSP) e i blocchi
project-and-norm che producono a^seg, v^seg.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..utils.config import ModelConfig
from .numkit import (
    DiffValue, DimensionError, LayerNormParams, Linear, Module, Parameter, ValueLike,
    as_value, concat, dropout, l1_normalize, matmul, relu, reshape, scale, sigmoid, softmax,
    stack, tanh, threshold, transpose,
)


# -----------------------------------------------------------------------------
# Parametri
# -----------------------------------------------------------------------------

class AgvaParams(Module):
    """Attenzione additiva: e_i = w_attᵀ·tanh(U_vᵀv_i + U_aᵀa)"""

    def __init__(self, rng: np.random.Generator, d_a: int, d_v: int, d_m: int):
        self.U_a = Parameter.uniform(rng, (d_a, d_m), fan_in=d_a)
        self.U_v = Parameter.uniform(rng, (d_v, d_m), fan_in=d_v)
        self.w_att = Parameter.uniform(rng, (d_m, 1), fan_in=d_m)


class LSTMDirection(Module):
    """Pesi di una direzione; gate nell'ordine i, f, g, o"""

    def __init__(self, rng: np.random.Generator, d_in: int, hidden: int):
        self.hidden = hidden
        self.W = Parameter.uniform(rng, (d_in, 4 * hidden), fan_in=d_in)
        self.U = Parameter.uniform(rng, (hidden, 4 * hidden), fan_in=hidden)
        self.b = Parameter.zeros((4 * hidden,))


class BiLSTM(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, hidden: int):
        self.forward = LSTMDirection(rng, d_in, hidden)
        self.backward = LSTMDirection(rng, d_in, hidden)


class PspParams(Module):
    def __init__(self, rng: np.random.Generator, d_l: int, d_p: int, d_s: int):
        self.W_a = Parameter.uniform(rng, (d_l, d_p), fan_in=d_l)
        self.W_v = Parameter.uniform(rng, (d_l, d_p), fan_in=d_l)
        self.agg_a = Linear(rng, d_l, d_s)
        self.agg_v = Linear(rng, d_l, d_s)


class ProjectNorm(Module):
    """x·W → ReLU → dropout → LayerNorm"""

    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int):
        self.linear = Linear(rng, d_in, d_out, bias=False)
        self.norm = LayerNormParams(d_out)


@dataclass
class SegmentEncoding:
    a_seg: DiffValue
    v_seg: DiffValue
    attention: DiffValue        # (B, T, H·W)
    psp_weights: np.ndarray     # (B, T, T) β normalizzato per righe audio


# -----------------------------------------------------------------------------
# Operazioni
# -----------------------------------------------------------------------------

def agva(visual: ValueLike, audio: ValueLike, params: AgvaParams) -> Tuple[DiffValue, DiffValue]:
    """Restituisce (visual pesato B×T×d_v, attenzione B×T×H·W)"""
    visual, audio = as_value(visual), as_value(audio)
    if visual.ndim != 5 or audio.ndim != 3 or visual.shape[:2] != audio.shape[:2]:
        raise DimensionError(f"agva: visual {visual.shape} e audio {audio.shape} incompatibili")
    B, T, H, W, d_v = visual.shape
    n = H * W
    v = reshape(visual, (B, T, n, d_v))
    proj_v = matmul(v, params.U_v)                                   # (B, T, n, d_m)
    proj_a = reshape(matmul(audio, params.U_a), (B, T, 1, -1))       # (B, T, 1, d_m)
    scores = reshape(matmul(tanh(proj_v + proj_a), params.w_att), (B, T, n))
    alpha = softmax(scores, axis=-1)
    attended = matmul(reshape(alpha, (B, T, 1, n)), v)
    return reshape(attended, (B, T, d_v)), alpha


def _lstm_direction(x: DiffValue, cell: LSTMDirection, reverse: bool) -> DiffValue:
    B, T, _ = x.shape
    hid = cell.hidden
    xw = matmul(x, cell.W) + cell.b                                  # (B, T, 4H)
    h = DiffValue(np.zeros((B, hid)))
    c = DiffValue(np.zeros((B, hid)))
    outputs = [None] * T
    for t in (reversed(range(T)) if reverse else range(T)):
        z = xw[:, t, :] + matmul(h, cell.U)
        i = sigmoid(z[:, :hid])
        f = sigmoid(z[:, hid:2 * hid])
        g = tanh(z[:, 2 * hid:3 * hid])
        o = sigmoid(z[:, 3 * hid:])
        c = f * c + i * g
        h = o * tanh(c)
        outputs[t] = h
    return stack(outputs, axis=1)


def bilstm_encode(x: ValueLike, params: BiLSTM) -> DiffValue:
    """Stati iniziali nulli; uscite avanti/indietro concatenate per passo"""
    x = as_value(x)
    if x.ndim != 3 or x.shape[-1] != params.forward.W.shape[0]:
        raise DimensionError(f"bilstm_encode: input {x.shape} vs d_in {params.forward.W.shape[0]}")
    fwd = _lstm_direction(x, params.forward, reverse=False)
    bwd = _lstm_direction(x, params.backward, reverse=True)
    return concat([fwd, bwd], axis=-1)


def _propagation_weights(beta: DiffValue, tau_psp: float) -> DiffValue:
    """relu → ℓ1 per righe → soglia τ → di nuovo ℓ1; le righe nulle restano nulle"""
    weights = l1_normalize(relu(beta), axis=-1, allow_zero=True)
    # Ogni riga non nulla ha il massimo ≥ 1/T, quindi τ < 1/T lo conserva
    weights = threshold(weights, tau_psp)
    return l1_normalize(weights, axis=-1, allow_zero=True)


def psp(a: ValueLike, v: ValueLike, params: PspParams, tau_psp: float) -> Tuple[DiffValue, DiffValue, np.ndarray]:
    """Similarità scalata, pesi di propagazione per direzione, aggregazione residua"""
    a, v = as_value(a), as_value(v)
    if a.shape != v.shape:
        raise DimensionError(f"psp: a {a.shape} e v {v.shape} devono coincidere")
    d_p = params.W_a.shape[1]
    pa = matmul(a, params.W_a)
    pv = matmul(v, params.W_v)
    beta = scale(matmul(pa, transpose(pv, (0, 2, 1))), 1.0 / np.sqrt(d_p))
    beta_av = _propagation_weights(beta, tau_psp)
    beta_va = _propagation_weights(transpose(beta, (0, 2, 1)), tau_psp)
    v_context = matmul(beta_av, v)
    a_context = matmul(beta_va, a)
    a_seg = relu(params.agg_a(a + v_context))
    v_seg = relu(params.agg_v(v + a_context))
    return a_seg, v_seg, beta_av.data


def project_norm_seg(x: ValueLike, params: ProjectNorm, rate: float, training: bool,
                     rng: Optional[np.random.Generator]) -> DiffValue:
    return params.norm(dropout(relu(params.linear(x)), rate, training, rng))


# -----------------------------------------------------------------------------
# Encoder completo
# -----------------------------------------------------------------------------

class SegmentEncoder(Module):
    """AGVA → Bi-LSTM → PSP → project-and-norm per modalità"""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.agva = AgvaParams(rng, cfg.d_a, cfg.d_v, cfg.d_m)
        self.lstm_a = BiLSTM(rng, cfg.d_a, cfg.lstm_hidden)
        self.lstm_v = BiLSTM(rng, cfg.d_v, cfg.lstm_hidden)
        self.psp = PspParams(rng, cfg.d_l, cfg.d_p, cfg.d_s)
        self.proj_a = ProjectNorm(rng, cfg.d_s, cfg.d_s)
        self.proj_v = ProjectNorm(rng, cfg.d_s, cfg.d_s)
        self.tau_psp = cfg.tau_psp
        self.r_s = cfg.r_s

    def __call__(self, audio: ValueLike, visual: ValueLike, training: bool = False,
                 rng: Optional[np.random.Generator] = None) -> SegmentEncoding:
        v_att, alpha = agva(visual, audio, self.agva)
        a_lstm = bilstm_encode(audio, self.lstm_a)
        v_lstm = bilstm_encode(v_att, self.lstm_v)
        a_psp, v_psp, weights = psp(a_lstm, v_lstm, self.psp, self.tau_psp)
        a_seg = project_norm_seg(a_psp, self.proj_a, self.r_s, training, rng)
        v_seg = project_norm_seg(v_psp, self.proj_v, self.r_s, training, rng)
        return SegmentEncoding(a_seg, v_seg, alpha, weights)
