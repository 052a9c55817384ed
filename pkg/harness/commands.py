"""
Shared plumbing for the toolkit's management commands
"""
import json
import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers

from mdp_core.exceptions import ConstraintViolation, MoeToolkitError, NumericalFailure
from mdp_core.serializers import FiniteMdpSerializer, TabularPolicySerializer
from mixture_qp.batch import BatchDataset
from moe_policy.serializers import BaseEnsembleSerializer

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def read_json(path):
    with open(path) as stream:
        return json.load(stream)


def validated(serializer_class, data, label):
    serializer = serializer_class(data=data)
    if not serializer.is_valid():
        raise serializers.ValidationError({label: serializer.errors})
    return serializer


def load_mdp(path):
    return validated(FiniteMdpSerializer, read_json(path), str(path)).to_mdp()


def load_policy(path):
    return validated(TabularPolicySerializer, read_json(path), str(path)).to_policy()


def load_ensemble(path):
    """Ensemble document; a missing support_floor takes the configured default"""
    data = read_json(path)
    if isinstance(data, dict):
        data.setdefault('support_floor', settings.MOE_TOOLKIT['SUPPORT_FLOOR'])
    return validated(BaseEnsembleSerializer, data, str(path)).to_ensemble()


def load_batch(path, mdp=None):
    with open(path) as stream:
        if mdp is None:
            return BatchDataset.from_jsonl(stream)
        return BatchDataset.from_jsonl(stream, mdp.n_states, mdp.n_actions)


def dump_json(data):
    return json.dumps(data, indent=2, sort_keys=True) + '\n'


class ToolkitCommand(BaseCommand):
    """
    Adds --seed/--out/--config and maps toolkit errors to exit codes:
    2 config, 3 numerical, 4 I/O. Subclasses implement run(**options).
    """

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--out', default=None,
                            help='output file or directory (stdout when omitted)')
        parser.add_argument('--config', default=None,
                            help='JSON object of option defaults')
        return parser

    def apply_config(self, options):
        if not options.get('config'):
            return options
        overrides = read_json(options['config'])
        if not isinstance(overrides, dict):
            raise serializers.ValidationError({'config': ['Must be a JSON object.']})
        unknown = sorted(set(overrides) - set(options))
        if unknown:
            raise serializers.ValidationError({key: ['Unknown option.'] for key in unknown})
        return {**options, **overrides}

    def emit(self, text, out=None, name=None):
        """Write to --out (a file, or a directory when name is given) or stdout"""
        if out is None:
            self.stdout.write(text, ending='')
            return None
        path = Path(out)
        if name is not None:
            path.mkdir(parents=True, exist_ok=True)
            path = path / name
        else:
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        logger.info('wrote %s', path)
        return path

    def output_dir(self, options):
        return Path(options['out']) if options.get('out') else Path(settings.MOE_TOOLKIT['OUTPUT_DIR'])

    def handle(self, *args, **options):
        try:
            return self.run(**self.apply_config(options))
        except (serializers.ValidationError, ConstraintViolation) as exc:
            detail = getattr(exc, 'detail', exc)
            logger.error('configuration error: %s', detail)
            raise CommandError(f'configuration error: {detail}', returncode=EXIT_CONFIG)
        except NumericalFailure as exc:
            logger.error('numerical failure: %s', exc)
            raise CommandError(f'numerical failure: {exc}', returncode=EXIT_NUMERICAL)
        except MoeToolkitError as exc:
            raise CommandError(str(exc), returncode=EXIT_CONFIG)
        except (OSError, json.JSONDecodeError) as exc:
            logger.error('I/O error: %s', exc)
            raise CommandError(f'I/O error: {exc}', returncode=EXIT_IO)

    def run(self, **options):
        raise NotImplementedError
