"""Pull-model metrics: counters, histograms, and text exposition.

Exposition is the plain line grammar ``name{label="value",...} number`` with
histogram series suffixed ``_bucket{le="bound"}``, ``_sum`` and ``_count``,
ordered by metric name then label tuple so output is deterministic.
"""

from __future__ import annotations

import math
import re
import threading

from .errors import NegativeDelta, UnknownMetric

_NAME_RE = re.compile(r"^[a-z_]+$")

# Replaces the overflowing label value once a metric accumulates more than
# this many distinct label tuples.
MAX_SERIES_PER_METRIC = 100
OVERFLOW_LABEL = "other"


def _format_number(value) -> str:
    if isinstance(value, float):
        if math.isinf(value):
            return "+Inf" if value > 0 else "-Inf"
        if value.is_integer():
            return str(int(value))
        return repr(value)
    return str(value)


class _Metric:
    def __init__(self, name: str, label_names: tuple[str, ...]):
        if not _NAME_RE.match(name):
            raise ValueError(f"metric name must match [a-z_]+: {name!r}")
        self.name = name
        self.label_names = label_names
        self.series: dict[tuple[str, ...], object] = {}

    def _key(self, labels: dict | None) -> tuple[str, ...]:
        labels = labels or {}
        if set(labels) != set(self.label_names):
            raise ValueError(
                f"{self.name}: expected labels {self.label_names}, got {tuple(labels)}"
            )
        key = tuple(str(labels[n]) for n in self.label_names)
        if key not in self.series and len(self.series) >= MAX_SERIES_PER_METRIC:
            key = tuple(OVERFLOW_LABEL for _ in self.label_names)
        return key


class _Counter(_Metric):
    def inc(self, labels: dict | None, delta: int) -> None:
        key = self._key(labels)
        self.series[key] = self.series.get(key, 0) + delta


class _Histogram(_Metric):
    def __init__(self, name, label_names, buckets: tuple[float, ...]):
        super().__init__(name, label_names)
        if list(buckets) != sorted(buckets) or len(set(buckets)) != len(buckets):
            raise ValueError("bucket bounds must be strictly increasing")
        self.buckets = tuple(float(b) for b in buckets)

    def observe(self, labels: dict | None, sample: float) -> None:
        key = self._key(labels)
        series = self.series.get(key)
        if series is None:
            series = {"counts": [0] * (len(self.buckets) + 1), "sum": 0.0}
            self.series[key] = series
        idx = len(self.buckets)  # overflow bucket
        for i, bound in enumerate(self.buckets):
            if sample <= bound:
                idx = i
                break
        series["counts"][idx] += 1
        series["sum"] += sample


class MetricsRegistry:
    def __init__(self):
        self._metrics: dict[str, _Metric] = {}
        self._mutex = threading.Lock()

    def register_counter(self, name: str, label_names: tuple[str, ...] = ()) -> None:
        with self._mutex:
            if name in self._metrics:
                raise ValueError(f"metric {name!r} already registered")
            self._metrics[name] = _Counter(name, tuple(label_names))

    def register_histogram(
        self, name: str, buckets: tuple[float, ...], label_names: tuple[str, ...] = ()
    ) -> None:
        with self._mutex:
            if name in self._metrics:
                raise ValueError(f"metric {name!r} already registered")
            self._metrics[name] = _Histogram(name, tuple(label_names), buckets)

    def inc(self, name: str, labels: dict | None = None, delta: int = 1) -> None:
        if delta < 0:
            raise NegativeDelta(f"counter {name} delta {delta}")
        with self._mutex:
            metric = self._metrics.get(name)
            if not isinstance(metric, _Counter):
                raise UnknownMetric(f"no counter named {name!r}")
            metric.inc(labels, delta)

    def observe(self, name: str, sample: float, labels: dict | None = None) -> None:
        with self._mutex:
            metric = self._metrics.get(name)
            if not isinstance(metric, _Histogram):
                raise UnknownMetric(f"no histogram named {name!r}")
            metric.observe(labels, sample)

    def counter_value(self, name: str, labels: dict | None = None) -> int:
        with self._mutex:
            metric = self._metrics.get(name)
            if not isinstance(metric, _Counter):
                raise UnknownMetric(f"no counter named {name!r}")
            return metric.series.get(metric._key(labels), 0)

    def render_exposition(self) -> str:
        """One line per series; pure function of registry contents."""
        lines: list[str] = []
        with self._mutex:
            for name in sorted(self._metrics):
                metric = self._metrics[name]
                if isinstance(metric, _Counter):
                    for key in sorted(metric.series):
                        lines.append(
                            f"{name}{_label_str(metric.label_names, key)}"
                            f" {_format_number(metric.series[key])}"
                        )
                else:
                    assert isinstance(metric, _Histogram)
                    for key in sorted(metric.series):
                        series = metric.series[key]
                        cumulative = 0
                        bounds = [*metric.buckets, float("inf")]
                        for bound, count in zip(bounds, series["counts"]):
                            cumulative += count
                            le = ("le", _format_number(float(bound)))
                            labels = _label_str(
                                metric.label_names + ("le",), key + (le[1],)
                            )
                            lines.append(f"{name}_bucket{labels} {cumulative}")
                        base = _label_str(metric.label_names, key)
                        lines.append(f"{name}_sum{base} {_format_number(series['sum'])}")
                        lines.append(f"{name}_count{base} {cumulative}")
        return "\n".join(lines) + ("\n" if lines else "")


def _label_str(names: tuple[str, ...], values: tuple[str, ...]) -> str:
    if not names:
        return ""
    inner = ",".join(f'{n}="{v}"' for n, v in zip(names, values))
    return "{" + inner + "}"


REQUIRED_COUNTERS = {
    "soc_queries_total": ("outcome",),
    "soc_quota_rejections_total": (),
    "soc_reflections_total": ("substantive",),
    "soc_escalations_total": ("status",),
    "soc_injection_flags_total": ("severity", "layer"),
}

REQUIRED_HISTOGRAMS = {
    "soc_retrieval_seconds": (0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0),
    "soc_gateway_seconds": (0.05, 0.1, 0.5, 1.0, 5.0, 10.0, 30.0, 60.0),
}


def default_registry() -> MetricsRegistry:
    """Registry preloaded with the service's required metric set."""
    registry = MetricsRegistry()
    for name, labels in REQUIRED_COUNTERS.items():
        registry.register_counter(name, labels)
    for name, buckets in REQUIRED_HISTOGRAMS.items():
        registry.register_histogram(name, buckets)
    return registry
