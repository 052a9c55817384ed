"""
Experiment configuration documents
"""
import numpy as np
from rest_framework import serializers

from expert_forge.labels import LAMBDA1, LAMBDA2, LabelFunction
from expert_forge.serializers import LabelFunctionSerializer
from mdp_core.exceptions import ConstraintViolation
from mdp_core.serializers import StrictSerializer, finite_array

EXPERIMENT_KINDS = ('bounds', 'qp', 'critic', 'manager', 'expert', 'train_loop')
GENERATORS = ('random', 'mood_chain')
MANAGER_METHODS = ('dqn', 'cql', 'mbrl')


class EnvSpecSerializer(StrictSerializer):
    generator = serializers.ChoiceField(choices=GENERATORS)
    n_states = serializers.IntegerField(min_value=1, default=4)
    n_actions = serializers.IntegerField(min_value=1, default=3)
    n_levels = serializers.IntegerField(min_value=2, default=5)
    slip = serializers.FloatField(min_value=0.0, default=0.1)
    gamma = serializers.FloatField(min_value=0.0, default=0.8)
    reward_range = serializers.ListField(child=serializers.FloatField(), min_length=2,
                                         max_length=2, default=[0.0, 1.0])

    def validate_gamma(self, value):
        if value >= 1.0:
            raise serializers.ValidationError('gamma must be strictly below 1.')
        return value

    def validate_slip(self, value):
        if value >= 1.0:
            raise serializers.ValidationError('slip must be strictly below 1.')
        return value


class EnsembleSpecSerializer(StrictSerializer):
    m = serializers.IntegerField(min_value=2, default=2)
    support_floor = serializers.FloatField(min_value=0.0, default=1e-6)
    alpha = serializers.ListField(child=serializers.FloatField(min_value=0.0), required=False)

    def validate(self, attrs):
        alpha = attrs.get('alpha')
        if alpha is not None:
            if len(alpha) != attrs['m']:
                raise serializers.ValidationError({'alpha': ['Needs one weight per base.']})
            if abs(sum(alpha) - 1.0) > 1e-9:
                raise serializers.ValidationError({'alpha': ['Weights must sum to 1.']})
        return attrs


class MethodSpecSerializer(StrictSerializer):
    """Hyperparameters; each experiment kind reads the ones it needs"""
    name = serializers.ChoiceField(choices=MANAGER_METHODS, required=False)
    n_transitions = serializers.IntegerField(min_value=1, default=500)
    horizon = serializers.IntegerField(min_value=1, default=5)
    lr = serializers.FloatField(min_value=0.0, default=0.1)
    tau = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.05)
    epochs = serializers.IntegerField(min_value=0, default=100)
    steps = serializers.IntegerField(min_value=0, default=1000)
    episodes = serializers.IntegerField(min_value=0, default=500)
    sweeps = serializers.IntegerField(min_value=0, default=200)
    batch_size = serializers.IntegerField(min_value=1, default=32)
    alpha = serializers.FloatField(min_value=0.0, default=1.0)
    rollout_budget = serializers.IntegerField(min_value=0, default=2000)
    mu_grid = serializers.ListField(child=serializers.FloatField(min_value=0.0, max_value=1.0),
                                    default=[0.0, 0.5, 1.0])
    advantage = serializers.ChoiceField(choices=('exact', 'batch'), default='exact')
    n_experts = serializers.IntegerField(min_value=1, required=False)
    mu_mix = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.0)
    eta = serializers.FloatField(min_value=0.0, default=1.0)


class ExpertSpecSerializer(StrictSerializer):
    """
    A toy latent expert: decoder weight (outputs, d), a label config whose
    value on each output is the next sentiment fed to compose_reward, and
    the primitive-fit and REINFORCE hyperparameters.
    """
    contexts = serializers.IntegerField(min_value=1, default=1)
    decoder = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()),
                                    min_length=2)
    label = LabelFunctionSerializer()
    history = serializers.ListField(child=serializers.FloatField(), min_length=1, default=[0.0])
    reward_gamma = serializers.FloatField(default=0.8)
    lambda1 = serializers.FloatField(default=LAMBDA1)
    lambda2 = serializers.FloatField(default=LAMBDA2)
    beta_kl = serializers.FloatField(min_value=0.0, default=0.1)
    primitive_steps = serializers.IntegerField(min_value=0, default=100)
    primitive_lr = serializers.FloatField(min_value=0.0, default=0.1)
    steps = serializers.IntegerField(min_value=0, default=100)
    lr = serializers.FloatField(min_value=0.0, default=0.1)
    n_samples = serializers.IntegerField(min_value=2, default=64)

    def validate_reward_gamma(self, value):
        if not 0.0 < value < 1.0:
            raise serializers.ValidationError('reward_gamma must lie in (0, 1).')
        return value

    def validate(self, attrs):
        rows = attrs['decoder']
        attrs['decoder'] = finite_array(rows, (len(rows), len(rows[0]) if rows else 0),
                                        'decoder')
        if attrs['decoder'].shape[1] == 0:
            raise serializers.ValidationError({'decoder': ['Needs at least one latent dimension.']})
        label = attrs['label']
        try:
            function = LabelFunction(kind=label['kind'], params=label['params'])
            values = np.array([function(y) for y in range(len(rows))], dtype=float)
        except (KeyError, IndexError, TypeError, ValueError, ConstraintViolation) as exc:
            raise serializers.ValidationError(
                {'label': [f'Cannot label every decoder output: {exc}']})
        if not np.all(np.isfinite(values)):
            raise serializers.ValidationError({'label': ['Non-finite label value.']})
        attrs['label'] = function
        return attrs


class ExperimentConfigSerializer(StrictSerializer):
    """A single JSON experiment document; unknown keys fail validation"""
    id = serializers.CharField(max_length=100)
    kind = serializers.ChoiceField(choices=EXPERIMENT_KINDS)
    env = EnvSpecSerializer(required=False)
    ensemble = EnsembleSpecSerializer(required=False)
    method = MethodSpecSerializer(required=False)
    expert = ExpertSpecSerializer(required=False)
    trials = serializers.ListField(child=serializers.IntegerField(min_value=0), min_length=1)

    def validate(self, attrs):
        kind = attrs['kind']
        if kind == 'manager' and not attrs.get('method', {}).get('name'):
            raise serializers.ValidationError({'method': ['Manager experiments need a method name.']})
        if kind == 'expert' and 'expert' not in attrs:
            raise serializers.ValidationError({'expert': ['Expert experiments need an expert spec.']})
        if kind != 'expert' and 'env' not in attrs:
            raise serializers.ValidationError({'env': ['This field is required.']})
        attrs.setdefault('ensemble', EnsembleSpecSerializer().run_validation({}))
        attrs.setdefault('method', MethodSpecSerializer().run_validation({}))
        return attrs
