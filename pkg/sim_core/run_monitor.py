from collections import Counter
from datetime import datetime
from typing import Dict, Optional

from shared.logging_utils import log_error, log_warning


class RunMonitor:
    """Counts recoverable problems during a run (skipped deposits, resampled chords, ...).

    Workers keep their own monitor and the parent merges them; the summary lands in the
    run manifest.
    """

    def __init__(self):
        self.start_time = datetime.now()
        self.counters: Counter = Counter()
        self.errors = []
        self.warnings = []

    def increment(self, context: str, key: str, n: int = 1):
        if n:
            self.counters[f"{context}.{key}"] += int(n)

    def count(self, context: str, key: str) -> int:
        return self.counters.get(f"{context}.{key}", 0)

    def log_error(self, error: Exception, context: str = ""):
        """Record a failure the run recovered from (a failed readout fit, a dropped scan point)."""
        self.errors.append({"time": datetime.now().isoformat(timespec="seconds"), "context": context,
                            "error": f"{type(error).__name__}: {error}"})
        log_error(error, context)

    def log_warning(self, message: str, context: str = ""):
        self.warnings.append({"time": datetime.now().isoformat(timespec="seconds"), "context": context,
                              "warning": message})
        log_warning(message, context)

    def merge(self, other: Optional["RunMonitor"]) -> "RunMonitor":
        if other is not None:
            self.counters.update(other.counters)
            self.errors.extend(other.errors)
            self.warnings.extend(other.warnings)
        return self

    def snapshot(self) -> Dict:
        """Picklable state for shipping back from a worker."""
        return {'counters': dict(self.counters), 'errors': list(self.errors), 'warnings': list(self.warnings)}

    @classmethod
    def from_snapshot(cls, snap: Dict) -> "RunMonitor":
        mon = cls()
        mon.counters.update(snap.get('counters', {}))
        mon.errors.extend(snap.get('errors', []))
        mon.warnings.extend(snap.get('warnings', []))
        return mon

    def get_summary(self):
        """Counters plus the last ten recorded failures and warnings, for the run manifest."""
        return {
            'counters': dict(sorted(self.counters.items())),
            'total_errors': len(self.errors),
            'total_warnings': len(self.warnings),
            'wall_time_s': (datetime.now() - self.start_time).total_seconds(),
            'recent_errors': self.errors[-10:],
            'recent_warnings': self.warnings[-10:],
        }
