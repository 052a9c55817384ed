"""
Serializers for MoE-MDP transition rows
"""
import math

from rest_framework import serializers

from mdp_core.serializers import StrictSerializer


class ManagerTransitionSerializer(StrictSerializer):
    """One JSONL row {s, cand, j, r, sp, cand_next}"""
    s = serializers.IntegerField(min_value=0)
    cand = serializers.ListField(child=serializers.IntegerField(min_value=0), min_length=1)
    j = serializers.IntegerField(min_value=0)
    r = serializers.FloatField()
    sp = serializers.IntegerField(min_value=0)
    cand_next = serializers.ListField(child=serializers.IntegerField(min_value=0), min_length=1)

    def validate_r(self, value):
        if not math.isfinite(value):
            raise serializers.ValidationError('Reward must be finite.')
        return value

    def validate(self, attrs):
        if attrs['j'] >= len(attrs['cand']):
            raise serializers.ValidationError({'j': ['Expert index outside the candidate list.']})
        if len(attrs['cand']) != len(attrs['cand_next']):
            raise serializers.ValidationError(
                {'cand_next': ['Must have one candidate per expert.']})
        return attrs
