"""
Metrics rows, their CSV format, and long-format aggregation across trials
"""
import csv
import logging
import math
from collections import OrderedDict
from dataclasses import astuple, dataclass

import numpy as np
from rest_framework import serializers

from mdp_core.exceptions import ConstraintViolation
from mdp_core.serializers import StrictSerializer

logger = logging.getLogger(__name__)

METRIC_FIELDS = ('experiment', 'trial', 'metric', 'iteration', 'value')
REPORT_FIELDS = ('metric', 'iteration', 'mean', 'std', 'n')
REPORT_KINDS = ('curve', 'summary')
BOUND_FIELDS = ('instance_id', 'variant', 'bound', 'true_diff', 'slack')


@dataclass(frozen=True)
class MetricsRow:
    experiment: str
    trial: int
    metric: str
    iteration: int
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ConstraintViolation(f'metric {self.metric} has a non-finite value',
                                      worst=self.metric)


class MetricsRowSerializer(StrictSerializer):
    experiment = serializers.CharField()
    trial = serializers.IntegerField()
    metric = serializers.CharField()
    iteration = serializers.IntegerField()
    value = serializers.FloatField()

    def validate_value(self, value):
        if not math.isfinite(value):
            raise serializers.ValidationError('Value must be finite.')
        return value


def _writer(stream, fields):
    writer = csv.writer(stream, lineterminator='\n')
    writer.writerow(fields)
    return writer


def write_metrics(rows, stream):
    writer = _writer(stream, METRIC_FIELDS)
    for row in rows:
        writer.writerow(astuple(row))


def read_metrics(stream):
    """Parse a metrics CSV; malformed rows fail with their line number"""
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or tuple(header) != METRIC_FIELDS:
        raise serializers.ValidationError(
            {'line 1': [f'Expected header {",".join(METRIC_FIELDS)}.']})
    rows = []
    for line_number, record in enumerate(reader, start=2):
        if not record:
            continue
        if len(record) != len(METRIC_FIELDS):
            raise serializers.ValidationError(
                {f'line {line_number}': [f'Expected {len(METRIC_FIELDS)} columns.']})
        serializer = MetricsRowSerializer(data=dict(zip(METRIC_FIELDS, record)))
        if not serializer.is_valid():
            raise serializers.ValidationError({f'line {line_number}': serializer.errors})
        rows.append(MetricsRow(**serializer.validated_data))
    return rows


def _final_values(rows):
    """(metric) -> (last iteration, values of each trial's last iteration)"""
    last = OrderedDict()
    for row in rows:
        key = (row.metric, row.trial)
        if key not in last or row.iteration >= last[key].iteration:
            last[key] = row
    grouped = OrderedDict()
    for (metric, _), row in last.items():
        iteration, values = grouped.get(metric, (row.iteration, []))
        grouped[metric] = (max(iteration, row.iteration), values + [row.value])
    return [(metric, iteration, values) for metric, (iteration, values) in grouped.items()]


def _curve_values(rows):
    grouped = OrderedDict()
    for row in rows:
        grouped.setdefault((row.metric, row.iteration), []).append(row.value)
    return [(metric, iteration, values) for (metric, iteration), values in grouped.items()]


def report(rows, kind='curve'):
    """
    Mean and population std across trials, one output row per metric and
    iteration (curve) or per metric over each trial's final value (summary).
    """
    if kind not in REPORT_KINDS:
        raise ConstraintViolation(f'unknown report kind {kind!r}')
    groups = _curve_values(rows) if kind == 'curve' else _final_values(rows)
    out = []
    for metric, iteration, values in sorted(groups, key=lambda item: (item[0], item[1])):
        values = np.asarray(values, dtype=float)
        out.append({'metric': metric, 'iteration': iteration, 'mean': float(values.mean()),
                    'std': float(values.std(ddof=0)), 'n': len(values)})
    logger.debug('aggregated %d rows into %d %s rows', len(rows), len(out), kind)
    return out


def write_report(aggregated, stream):
    writer = _writer(stream, REPORT_FIELDS)
    for row in aggregated:
        writer.writerow([row[field] for field in REPORT_FIELDS])


def write_bounds(instance_id, reports, stream):
    """One row per bound variant of a single instance"""
    writer = csv.DictWriter(stream, fieldnames=BOUND_FIELDS, lineterminator='\n')
    writer.writeheader()
    for bound_report in reports:
        writer.writerow({'instance_id': instance_id, **bound_report.to_dict()})
