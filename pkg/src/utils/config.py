# =============================================================================
# File 2: src/utils/config.py
# =============================================================================

import copy
import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Dict, Optional, Union


class ConfigError(ValueError):
    """Configurazione non valida (il messaggio nomina il vincolo violato)"""


MODES = ('fully', 'weakly')
VARIANTS = ('full', 'ce_avps', 'c_t_only', 'bce_only')
CERE_MODES = ('on', 'zero_init')


@dataclass(frozen=True)
class ModelConfig:
    """Tutte le dimensioni, i rate, le soglie, la loss, le ablazioni e il training"""

    # dims
    T: int = 10
    C: int = 6
    d_a: int = 16
    d_v: int = 24
    H: int = 3
    W: int = 3
    d_m: int = 32
    d_l: int = 128
    d_p: int = 128
    d_s: int = 128
    d_e: int = 64
    d_i: int = 128
    d_f: int = 128
    d_h: int = 64
    background_index: int = -1  # -1 = C-1
    # rates
    r_s: float = 0.2
    r_i: Optional[float] = None  # None = 0.2 fully / 0.5 weakly
    # thresholds
    tau_psp: float = 0.095
    tau_b: float = 0.7
    # loss
    lam: float = 2.0
    avps_weight: float = 100.0
    mode: str = 'fully'
    variant: str = 'full'
    # ablation
    escm: bool = True
    cere: str = 'on'
    shared_cere: bool = True
    # train
    lr: float = 1e-3
    batch_size: int = 128
    epochs: int = 300
    patience: int = 30
    seed: int = 0
    # data
    sigma: float = 0.1
    unmatched_rate: float = 0.25

    @property
    def bg_index(self) -> int:
        return self.C - 1 if self.background_index < 0 else self.background_index

    @property
    def dropout_isce(self) -> float:
        if self.r_i is not None:
            return self.r_i
        return 0.2 if self.mode == 'fully' else 0.5

    @property
    def lstm_hidden(self) -> int:
        return self.d_l // 2

    def replace(self, **changes) -> 'ModelConfig':
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> 'ModelConfig':
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"chiavi sconosciute: {', '.join(unknown)}")
        return cls(**values)

    def validate(self) -> 'ModelConfig':
        """Controlla i vincoli; restituisce self per concatenare"""
        for name in ('T', 'C', 'd_a', 'd_v', 'H', 'W', 'd_m', 'd_l', 'd_p', 'd_s',
                     'd_e', 'd_i', 'd_f', 'd_h', 'batch_size', 'epochs'):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} deve essere >= 1 (trovato {getattr(self, name)})")
        if self.C < 2:
            raise ConfigError("C >= 2 richiesto (almeno una classe evento + background)")
        if not 0 <= self.bg_index < self.C:
            raise ConfigError(f"background_index < C violato ({self.bg_index} vs C={self.C})")
        if self.d_l % 2:
            raise ConfigError(f"d_l = 2·hidden deve essere pari (trovato {self.d_l})")
        if self.d_i != 2 * self.d_e:
            raise ConfigError(f"d_i = 2·d_e violato (d_i={self.d_i}, d_e={self.d_e})")
        if self.escm and self.T < 4:
            raise ConfigError(f"T >= 4 richiesto da CERE (trovato T={self.T})")
        if not 0.0 < self.tau_b < 1.0:
            raise ConfigError(f"tau_b in (0,1) violato ({self.tau_b})")
        if not 0.0 <= self.tau_psp < 1.0:
            raise ConfigError(f"tau_psp in [0,1) violato ({self.tau_psp})")
        if self.lam <= 0:
            raise ConfigError(f"lam > 0 violato ({self.lam})")
        for name in ('r_s', 'dropout_isce'):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} in [0,1) violato ({getattr(self, name)})")
        if self.mode not in MODES:
            raise ConfigError(f"mode deve essere uno di {MODES} (trovato {self.mode})")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant deve essere uno di {VARIANTS} (trovato {self.variant})")
        if self.mode == 'fully' and self.variant == 'bce_only':
            raise ConfigError("variant bce_only vale solo per mode=weakly")
        if self.mode == 'weakly' and self.variant in ('ce_avps', 'c_t_only'):
            raise ConfigError(f"variant {self.variant} vale solo per mode=fully")
        if self.cere not in CERE_MODES:
            raise ConfigError(f"cere deve essere uno di {CERE_MODES} (trovato {self.cere})")
        if not self.escm and (self.cere != 'on' or not self.shared_cere):
            raise ConfigError("ablazioni CERE senza ESCM non definite (escm=off rimuove tutto)")
        if self.cere == 'zero_init' and not self.shared_cere:
            raise ConfigError("w/o CERE e w/o common CERE sono ablazioni alternative")
        if self.lr <= 0:
            raise ConfigError(f"lr > 0 violato ({self.lr})")
        return self


PRESETS: Dict[str, Dict[str, Any]] = {
    'desk': {},
    'paper': {'d_a': 128, 'd_v': 512, 'H': 7, 'W': 7, 'C': 29,
              'd_l': 256, 'd_p': 256, 'd_s': 256, 'd_e': 128, 'd_i': 256,
              'd_f': 256, 'd_h': 128, 'd_m': 512},
    'tiny': {'T': 6, 'C': 3, 'd_a': 4, 'd_v': 6, 'H': 2, 'W': 2, 'd_m': 4,
             'd_l': 6, 'd_p': 6, 'd_s': 6, 'd_e': 4, 'd_i': 8, 'd_f': 6, 'd_h': 4,
             'batch_size': 2, 'epochs': 2},
}
# Dimensioni del dataset AVE completo
PRESETS['ave'] = PRESETS['paper']


def preset(name: str, **changes) -> ModelConfig:
    if name not in PRESETS:
        raise ConfigError(f"preset sconosciuto: {name} (disponibili: {', '.join(PRESETS)})")
    return ModelConfig(**{**PRESETS[name], **changes})


# Sezione di ogni campo nel file di configurazione (chiavi 'sezione.campo')
SECTIONS: Dict[str, tuple] = {
    'dims': ('T', 'C', 'd_a', 'd_v', 'H', 'W', 'd_m', 'd_l', 'd_p', 'd_s',
             'd_e', 'd_i', 'd_f', 'd_h', 'background_index'),
    'rates': ('r_s', 'r_i'),
    'thresholds': ('tau_psp', 'tau_b'),
    'loss': ('lam', 'avps_weight', 'mode', 'variant'),
    'ablation': ('escm', 'cere', 'shared_cere'),
    'train': ('lr', 'batch_size', 'epochs', 'patience', 'seed'),
    'data': ('sigma', 'unmatched_rate'),
}

_FIELD_TYPES = {f.name: f.type for f in fields(ModelConfig)}


def _parse_value(key: str, raw: str) -> Any:
    field_name = key.split('.')[-1]
    kind = str(_FIELD_TYPES[field_name])
    text = raw.strip()
    try:
        if 'bool' in kind:
            lowered = text.lower()
            if lowered in ('true', 'on', 'yes', '1'):
                return True
            if lowered in ('false', 'off', 'no', '0'):
                return False
            raise ValueError(text)
        if 'Optional' in kind and text.lower() in ('none', ''):
            return None
        if 'int' in kind:
            return int(text)
        if 'float' in kind:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"valore non valido per {key}: {raw!r}") from None


class VSCGConfig:
    """Configurazione a sezioni con accesso puntato (es: 'train.lr')"""

    def __init__(self, base: Optional[ModelConfig] = None):
        base = base or ModelConfig()
        values = base.to_dict()

        # Configurazione default, raggruppata per sezione
        self.default_config = {
            section: {name: values[name] for name in names}
            for section, names in SECTIONS.items()
        }
        self.config = copy.deepcopy(self.default_config)

    def _merge_configs(self, default: Dict, loaded: Dict) -> Dict:
        """Merge configurazioni mantenendo le opzioni non specificate"""
        result = copy.deepcopy(default)
        for key, value in loaded.items():
            if key in result and isinstance(result[key], dict) and isinstance(value, dict):
                result[key] = self._merge_configs(result[key], value)
            else:
                result[key] = value
        return result

    def _check_key(self, key_path: str) -> tuple:
        keys = key_path.split('.')
        if len(keys) != 2 or keys[0] not in self.config or keys[1] not in self.config[keys[0]]:
            raise ConfigError(f"chiave di configurazione sconosciuta: {key_path}")
        return keys[0], keys[1]

    def get(self, key_path: str, default=None):
        """Ottieni valore configurazione (es: 'dims.T')"""
        value = self.config
        for key in key_path.split('.'):
            if isinstance(value, dict) and key in value:
                value = value[key]
            else:
                return default
        return value

    def set(self, key_path: str, value: Any) -> None:
        """Imposta valore; stringhe convertite al tipo del campo"""
        section, name = self._check_key(key_path)
        if isinstance(value, str):
            value = _parse_value(key_path, value)
        self.config[section][name] = value

    def load_file(self, path: Union[str, Path]) -> 'VSCGConfig':
        """Carica un file piatto 'sezione.campo = valore' con commenti '#'"""
        loaded: Dict[str, Dict[str, Any]] = {}
        try:
            text = Path(path).read_text(encoding='utf-8')
        except OSError as e:
            raise ConfigError(f"impossibile leggere {path}: {e}") from None
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.split('#', 1)[0].strip()
            if not stripped:
                continue
            if '=' not in stripped:
                raise ConfigError(f"{path}:{lineno}: atteso 'chiave = valore'")
            key, raw = (part.strip() for part in stripped.split('=', 1))
            section, name = self._check_key(key)
            loaded.setdefault(section, {})[name] = _parse_value(key, raw)
        self.config = self._merge_configs(self.config, loaded)
        return self

    def save_file(self, path: Union[str, Path]) -> None:
        lines = []
        for section, values in self.config.items():
            lines.append(f"# {section}")
            for name, value in values.items():
                lines.append(f"{section}.{name} = {value}")
        Path(path).write_text('\n'.join(lines) + '\n', encoding='utf-8')

    def to_model_config(self) -> ModelConfig:
        flat = {name: value for values in self.config.values() for name, value in values.items()}
        return ModelConfig.from_dict(flat).validate()

    def reset_to_defaults(self) -> None:
        self.config = copy.deepcopy(self.default_config)
