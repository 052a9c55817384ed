"""
Serializers for mixture weights and base ensembles
"""
import numpy as np
from rest_framework import serializers

from mdp_core.serializers import StrictSerializer
from mdp_core.tabular import TabularPolicy

from .mixture import DEFAULT_SUPPORT_FLOOR, BaseEnsemble, MixtureWeights


class MixtureWeightsSerializer(StrictSerializer):
    """Nested arrays lam[s][a][i]"""
    lam = serializers.ListField(
        child=serializers.ListField(child=serializers.ListField(child=serializers.FloatField())))

    def validate_lam(self, value):
        try:
            array = np.array(value, dtype=float)
        except ValueError:
            raise serializers.ValidationError('lam must be a rectangular [s][a][i] array.')
        if array.ndim != 3 or array.shape[2] < 1:
            raise serializers.ValidationError('lam must be a rectangular [s][a][i] array.')
        return array

    def to_weights(self):
        return MixtureWeights(self.validated_data['lam'])


class BaseEnsembleSerializer(StrictSerializer):
    """List of policy tables plus the support floor"""
    bases = serializers.ListField(
        child=serializers.ListField(child=serializers.ListField(child=serializers.FloatField())),
        min_length=2)
    support_floor = serializers.FloatField(min_value=0.0, default=DEFAULT_SUPPORT_FLOOR)

    def to_ensemble(self):
        data = self.validated_data
        return BaseEnsemble([TabularPolicy(probs) for probs in data['bases']],
                            support_floor=data['support_floor'])
