"""
Serializers for expert parameter files and label configs
"""
from rest_framework import serializers

from mdp_core.serializers import StrictSerializer, finite_array

from .labels import LABEL_KINDS, LabelFunction
from .latent import SIGMA_MIN, GaussianLatent


class GaussianLatentSerializer(StrictSerializer):
    """{"contexts": n, "d": d, "mean": [[..]], "std": [[..]]}"""
    contexts = serializers.IntegerField(min_value=1)
    d = serializers.IntegerField(min_value=1)
    mean = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()))
    std = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()))

    def validate(self, attrs):
        shape = (attrs['contexts'], attrs['d'])
        attrs['mean'] = finite_array(attrs['mean'], shape, 'mean')
        attrs['std'] = finite_array(attrs['std'], shape, 'std')
        if (attrs['std'] < SIGMA_MIN).any():
            raise serializers.ValidationError({'std': [f'Must be at least {SIGMA_MIN}.']})
        return attrs

    def to_latent(self):
        return GaussianLatent.from_dict(self.validated_data)


class LabelFunctionSerializer(StrictSerializer):
    kind = serializers.ChoiceField(choices=LABEL_KINDS)
    params = serializers.DictField(required=False, default=dict)

    def to_label(self):
        return LabelFunction(kind=self.validated_data['kind'],
                             params=self.validated_data['params'])
