# =============================================================================
# File 9: src/utils/performance.py
# =============================================================================

import time
from collections import deque
from typing import Dict, Optional

import psutil


class PerformanceMonitor:
    """Monitor del training: tempi per step, throughput, memoria e CPU del processo"""

    def __init__(self, history_size: int = 100):
        self.history_size = history_size

        # Tempi per step
        self.step_times = deque(maxlen=history_size)
        self.current_step_time = 0.0
        self.samples_seen = 0
        self.steps = 0

        # Durata complessiva
        self.start_time: Optional[float] = None
        self.total_seconds = 0.0

        # Metriche processo
        self._process = psutil.Process()
        self.cpu_usage = 0.0
        self.rss_mb = 0.0

        self.is_monitoring = False

    def start_monitoring(self):
        """Avvia il cronometro (idempotente)"""
        if not self.is_monitoring:
            self.is_monitoring = True
            self.start_time = time.perf_counter()

    def stop_monitoring(self):
        """Ferma il cronometro e accumula il tempo trascorso"""
        if self.is_monitoring and self.start_time is not None:
            self.total_seconds += time.perf_counter() - self.start_time
        self.is_monitoring = False
        self.start_time = None

    @property
    def wall_seconds(self) -> float:
        running = time.perf_counter() - self.start_time if self.is_monitoring and self.start_time else 0.0
        return self.total_seconds + running

    def record_step(self, step_time: float, batch_size: int):
        self.current_step_time = step_time
        self.step_times.append(step_time)
        self.samples_seen += batch_size
        self.steps += 1

    def update_system_metrics(self):
        """Aggiorna CPU% e RSS del processo corrente"""
        try:
            self.cpu_usage = self._process.cpu_percent(interval=None)
            self.rss_mb = self._process.memory_info().rss / (1024 * 1024)
        except psutil.Error as e:
            print(f"⚠️ Errore metriche sistema: {e}")

    def get_stats(self) -> Dict:
        times = list(self.step_times)
        avg_step = sum(times) / len(times) if times else 0.0
        wall = self.wall_seconds
        return {
            'steps': {
                'count': self.steps,
                'current_ms': self.current_step_time * 1000,
                'average_ms': avg_step * 1000,
                'min_ms': min(times) * 1000 if times else 0,
                'max_ms': max(times) * 1000 if times else 0,
            },
            'throughput': {
                'samples': self.samples_seen,
                'samples_per_second': self.samples_seen / wall if wall > 0 else 0.0,
            },
            'system': {
                'cpu_percent': self.cpu_usage,
                'rss_mb': self.rss_mb,
            },
            'wall_seconds': wall,
        }

    def get_performance_grade(self) -> str:
        """Valutazione grossolana della velocità per step"""
        avg_ms = self.get_stats()['steps']['average_ms']
        if avg_ms <= 50:
            return "🟢 Eccellente"
        elif avg_ms <= 200:
            return "🟡 Buono"
        elif avg_ms <= 1000:
            return "🟠 Accettabile"
        else:
            return "🔴 Lento"
