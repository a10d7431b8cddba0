# =============================================================================
# File 6: src/core/escm.py
# =============================================================================

"""
Event Semantic Consistency Modeling.

CERE estrae rappresentazioni evento a livello video con due blocchi CNN
temporali condivisi tra audio e visual; la fusione produce AV^event, che
inizializza i GRU bidirezionali di ISCE. Chiude il modulo il project-norm
con late fusion.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..utils.config import ConfigError, ModelConfig
from .numkit import (
    DiffValue, DimensionError, LayerNormParams, Linear, Module, Parameter, ValueLike,
    as_value, concat, conv1d, dropout, matmul, maxpool1d, relu, scale, sigmoid, stack,
    tanh, transpose,
)

CERE_MIN_T = 4


# -----------------------------------------------------------------------------
# CERE
# -----------------------------------------------------------------------------

class CereParams(Module):
    """Due blocchi conv1d(k=⌈T/2⌉, same) → ReLU → maxpool(2, 2), d_e canali ciascuno"""

    def __init__(self, rng: np.random.Generator, d_s: int, d_e: int, T: int):
        k = math.ceil(T / 2)
        self.kernel1 = Parameter.uniform(rng, (d_e, d_s, k), fan_in=d_s * k)
        self.bias1 = Parameter.zeros((d_e,))
        self.kernel2 = Parameter.uniform(rng, (d_e, d_e, k), fan_in=d_e * k)
        self.bias2 = Parameter.zeros((d_e,))

    @property
    def kernel_size(self) -> int:
        return self.kernel1.shape[2]

    def clone(self) -> 'CereParams':
        """Copia indipendente con valori identici (ablazione w/o common CERE)"""
        twin = CereParams.__new__(CereParams)
        for key, value in vars(self).items():
            setattr(twin, key, Parameter(value.data))
        return twin


def cere(x_seg: ValueLike, params: CereParams) -> DiffValue:
    """B×T×d_s → B×d_e×L (L = 2 per T = 10)"""
    x = as_value(x_seg)
    if x.ndim != 3:
        raise DimensionError(f"cere: atteso B×T×d_s, trovato {x.shape}")
    if x.shape[1] < CERE_MIN_T:
        raise ConfigError(f"T >= {CERE_MIN_T} richiesto da CERE (trovato T={x.shape[1]})")
    h = transpose(x, (0, 2, 1))
    h = maxpool1d(relu(conv1d(h, params.kernel1, params.bias1, padding='same')))
    h = maxpool1d(relu(conv1d(h, params.kernel2, params.bias2, padding='same')))
    return h


def shared_cere_pair(a_seg: ValueLike, v_seg: ValueLike, params: CereParams,
                     params_v: Optional[CereParams] = None) -> Tuple[DiffValue, DiffValue]:
    """Stessi pesi per entrambi i rami salvo `params_v` esplicito"""
    a_seg, v_seg = as_value(a_seg), as_value(v_seg)
    if a_seg.shape != v_seg.shape:
        raise DimensionError(f"shared_cere_pair: {a_seg.shape} vs {v_seg.shape}")
    return cere(a_seg, params), cere(v_seg, params if params_v is None else params_v)


def fuse_event(a_event: ValueLike, v_event: ValueLike) -> DiffValue:
    """AV^event = ½(v^eventᵀ + a^eventᵀ): B×d_e×L → B×L×d_e"""
    a_event, v_event = as_value(a_event), as_value(v_event)
    if a_event.shape != v_event.shape:
        raise DimensionError(f"fuse_event: {a_event.shape} vs {v_event.shape}")
    return scale(transpose(v_event, (0, 2, 1)) + transpose(a_event, (0, 2, 1)), 0.5)


# -----------------------------------------------------------------------------
# ISCE
# -----------------------------------------------------------------------------

class GRUDirection(Module):
    """Pesi di una direzione; blocchi nell'ordine z, r, h"""

    def __init__(self, rng: np.random.Generator, d_in: int, hidden: int):
        self.hidden = hidden
        self.W = Parameter.uniform(rng, (d_in, 3 * hidden), fan_in=d_in)
        self.U = Parameter.uniform(rng, (hidden, 3 * hidden), fan_in=hidden)
        self.b = Parameter.zeros((3 * hidden,))


class BiGRU(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, hidden: int):
        self.forward = GRUDirection(rng, d_in, hidden)
        self.backward = GRUDirection(rng, d_in, hidden)


def gru_direction(x: DiffValue, cell: GRUDirection, h0: DiffValue, reverse: bool) -> DiffValue:
    """h' = (1−z)⊙h̃ + z⊙h, h̃ = tanh(xW_h + (r⊙h)U_h + b_h)"""
    B, T, _ = x.shape
    hid = cell.hidden
    if h0.shape != (B, hid):
        raise DimensionError(f"gru: stato iniziale {h0.shape}, atteso {(B, hid)}")
    xw = matmul(x, cell.W) + cell.b
    U_zr = cell.U[:, :2 * hid]
    U_h = cell.U[:, 2 * hid:]
    h = h0
    outputs = [None] * T
    for t in (reversed(range(T)) if reverse else range(T)):
        x_t = xw[:, t, :]
        zr = sigmoid(x_t[:, :2 * hid] + matmul(h, U_zr))
        z, r = zr[:, :hid], zr[:, hid:]
        candidate = tanh(x_t[:, 2 * hid:] + matmul(r * h, U_h))
        h = (1.0 - z) * candidate + z * h
        outputs[t] = h
    return stack(outputs, axis=1)


def bigru_encode(x: ValueLike, params: BiGRU, h0_forward: DiffValue, h0_backward: DiffValue) -> DiffValue:
    x = as_value(x)
    fwd = gru_direction(x, params.forward, as_value(h0_forward), reverse=False)
    bwd = gru_direction(x, params.backward, as_value(h0_backward), reverse=True)
    return concat([fwd, bwd], axis=-1)


class IsceParams(Module):
    """Due GRU bidirezionali indipendenti; condividono solo lo stato iniziale"""

    def __init__(self, rng: np.random.Generator, d_s: int, d_e: int):
        self.gru_a = BiGRU(rng, d_s, d_e)
        self.gru_v = BiGRU(rng, d_s, d_e)

    @property
    def hidden(self) -> int:
        return self.gru_a.forward.hidden


def isce(a_seg: ValueLike, v_seg: ValueLike, av_event: Optional[ValueLike], params: IsceParams,
         ablation: str = 'on') -> Tuple[DiffValue, DiffValue]:
    """
    Avanti parte dalla prima riga di AV^event, indietro dall'ultima
    (righe 0 e 1 per T = 10). Con `zero_init` entrambi gli stati sono nulli.
    """
    a_seg, v_seg = as_value(a_seg), as_value(v_seg)
    if a_seg.shape != v_seg.shape:
        raise DimensionError(f"isce: {a_seg.shape} vs {v_seg.shape}")
    B = a_seg.shape[0]
    hid = params.hidden
    if ablation == 'zero_init':
        h_fwd = h_bwd = DiffValue(np.zeros((B, hid)))
    elif ablation == 'on':
        if av_event is None:
            raise ConfigError("isce: AV^event richiesto salvo ablazione zero_init")
        av_event = as_value(av_event)
        if av_event.ndim != 3 or av_event.shape[0] != B or av_event.shape[2] != hid:
            raise DimensionError(f"isce: AV^event {av_event.shape}, atteso B×L×{hid}")
        h_fwd = av_event[:, 0, :]
        h_bwd = av_event[:, av_event.shape[1] - 1, :]
    else:
        raise ConfigError(f"isce: ablazione sconosciuta {ablation}")
    # h_a = h_v = AV^event
    a_isce = bigru_encode(a_seg, params.gru_a, h_fwd, h_bwd)
    v_isce = bigru_encode(v_seg, params.gru_v, h_fwd, h_bwd)
    return a_isce, v_isce


# -----------------------------------------------------------------------------
# Project-norm e late fusion
# -----------------------------------------------------------------------------

class ProjectFuse(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, d_f: int):
        self.W_a = Linear(rng, d_in, d_f, bias=False)
        self.W_v = Linear(rng, d_in, d_f, bias=False)
        self.norm_a = LayerNormParams(d_f)
        self.norm_v = LayerNormParams(d_f)


def project_fuse(a_isce: ValueLike, v_isce: ValueLike, params: ProjectFuse, r_i: float,
                 training: bool, rng: Optional[np.random.Generator] = None) -> DiffValue:
    """f^{v↔a} = ½[LN(f^a) + LN(f^v)], f^m = dropout(relu(m·W_1^m), r_i)"""
    f_a = dropout(relu(params.W_a(a_isce)), r_i, training, rng)
    f_v = dropout(relu(params.W_v(v_isce)), r_i, training, rng)
    return scale(params.norm_a(f_a) + params.norm_v(f_v), 0.5)


# -----------------------------------------------------------------------------
# Blocco completo
# -----------------------------------------------------------------------------

@dataclass
class EventRepr:
    a_event: DiffValue    # B×d_e×L
    v_event: DiffValue
    av_event: DiffValue   # B×L×d_e


@dataclass
class EscmOutput:
    a_isce: DiffValue
    v_isce: DiffValue
    event: Optional[EventRepr] = None


class EventSemanticConsistency(Module):
    """
    CERE (condiviso o duplicato) → fuse_event → ISCE.

    Con `cere='zero_init'` la parte CERE non viene costruita: ISCE parte da
    stati nulli e nessun parametro CERE compare nel modello.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.cere_mode = cfg.cere
        if cfg.cere == 'on':
            self.cere_a = CereParams(rng, cfg.d_s, cfg.d_e, cfg.T)
            self.cere_v = self.cere_a if cfg.shared_cere else self.cere_a.clone()
        else:
            self.cere_a = self.cere_v = None
        self.isce = IsceParams(rng, cfg.d_s, cfg.d_e)

    @property
    def shared(self) -> bool:
        return self.cere_a is not None and self.cere_a is self.cere_v

    def __call__(self, a_seg: ValueLike, v_seg: ValueLike) -> EscmOutput:
        if self.cere_mode == 'zero_init':
            a_isce, v_isce = isce(a_seg, v_seg, None, self.isce, ablation='zero_init')
            return EscmOutput(a_isce, v_isce)
        a_event, v_event = shared_cere_pair(a_seg, v_seg, self.cere_a, self.cere_v)
        av_event = fuse_event(a_event, v_event)
        a_isce, v_isce = isce(a_seg, v_seg, av_event, self.isce)
        return EscmOutput(a_isce, v_isce, EventRepr(a_event, v_event, av_event))
