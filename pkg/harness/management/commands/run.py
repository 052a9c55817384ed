"""
run: execute an experiment config end to end
"""
from rest_framework import serializers

from harness.commands import ToolkitCommand, dump_json, read_json, validated
from harness.experiments import run_experiment
from harness.serializers import ExperimentConfigSerializer


class Command(ToolkitCommand):
    help = 'Run an experiment JSON (--config) and write metrics CSV plus JSON summary under --out'

    def apply_config(self, options):
        # --config is the experiment document here
        if not options.get('config'):
            raise serializers.ValidationError({'config': ['An experiment config is required.']})
        return options

    def run(self, **options):
        config = validated(ExperimentConfigSerializer, read_json(options['config']),
                           options['config']).validated_data
        result = run_experiment(config, self.output_dir(options))
        self.stdout.write(dump_json(result.summary), ending='')
