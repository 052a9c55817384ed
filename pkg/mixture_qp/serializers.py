"""
Serializers for batch transition rows
"""
import math

from rest_framework import serializers

from mdp_core.serializers import StrictSerializer


class TransitionSerializer(StrictSerializer):
    """One JSONL row {s, a, cand, r, sp, src[, weight]}"""
    s = serializers.IntegerField(min_value=0)
    a = serializers.IntegerField(min_value=0)
    cand = serializers.ListField(child=serializers.IntegerField(min_value=0), min_length=1)
    r = serializers.FloatField()
    sp = serializers.IntegerField(min_value=0)
    src = serializers.IntegerField(min_value=1, default=1)
    weight = serializers.FloatField(required=False, default=1.0)

    def validate_r(self, value):
        if not math.isfinite(value):
            raise serializers.ValidationError('Reward must be finite.')
        return value

    def validate_weight(self, value):
        if not math.isfinite(value) or value <= 0:
            raise serializers.ValidationError('Weight must be a positive finite number.')
        return value

    def validate(self, attrs):
        if attrs['a'] not in attrs['cand']:
            raise serializers.ValidationError({'a': ['Action is not in the candidate set.']})
        if len(set(attrs['cand'])) != len(attrs['cand']):
            raise serializers.ValidationError({'cand': ['Candidate set has duplicates.']})
        return attrs
