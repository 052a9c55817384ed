"""
Django REST Framework serializers for MDP and policy documents
"""
import numpy as np
from rest_framework import serializers

from .tabular import FiniteMdp, TabularPolicy


class StrictSerializer(serializers.Serializer):
    """Serializer that rejects keys it does not declare"""

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ['Unknown field.'] for key in unknown})
        return super().to_internal_value(data)


def finite_array(value, shape, name):
    """Convert to a float array of the given shape or fail validation"""
    try:
        array = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise serializers.ValidationError({name: ['Ragged or non-numeric array.']})
    if array.shape != shape:
        raise serializers.ValidationError({name: [f'Expected shape {shape}, got {array.shape}.']})
    if not np.all(np.isfinite(array)):
        raise serializers.ValidationError({name: ['Non-finite value.']})
    return array


class FiniteMdpSerializer(StrictSerializer):
    """MDP document {n_states, n_actions, gamma, P0, R, T}"""
    n_states = serializers.IntegerField(min_value=1)
    n_actions = serializers.IntegerField(min_value=1)
    gamma = serializers.FloatField(min_value=0.0)
    P0 = serializers.ListField(child=serializers.FloatField())
    R = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()))
    T = serializers.ListField(
        child=serializers.ListField(child=serializers.ListField(child=serializers.FloatField())))

    def validate_gamma(self, value):
        if value >= 1.0:
            raise serializers.ValidationError('gamma must be strictly below 1.')
        return value

    def validate(self, attrs):
        n_states, n_actions = attrs['n_states'], attrs['n_actions']
        attrs['P0'] = finite_array(attrs['P0'], (n_states,), 'P0')
        attrs['R'] = finite_array(attrs['R'], (n_states, n_actions), 'R')
        attrs['T'] = finite_array(attrs['T'], (n_states, n_actions, n_states), 'T')
        return attrs

    def to_mdp(self):
        return FiniteMdp.from_dict(self.validated_data)


class TabularPolicySerializer(StrictSerializer):
    """Policy document {probs: [[...]]}"""
    probs = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()))

    def validate_probs(self, value):
        rows = {len(row) for row in value}
        if not value or len(rows) != 1:
            raise serializers.ValidationError('probs must be a non-empty rectangular table.')
        return value

    def to_policy(self):
        return TabularPolicy(self.validated_data['probs'])
