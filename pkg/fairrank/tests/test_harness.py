import json
import tempfile
from pathlib import Path
from unittest import mock

import pandas as pd
from django.conf import settings
from django.test import TestCase

from fairrank.exceptions import (ConfigError, DataFormatError, FairRankError, IncompleteRunError,
                                 UnknownIdError)
from fairrank.harness import (SUMMARY_COLUMNS, SWEEP_COLUMNS, ExperimentConfig, emit_report,
                              ingest_config, load_config_file, merge_config, run_experiment,
                              select_model, settings_defaults, sweep, sweep_points)
from fairrank.ingest import build_dataset
from fairrank.models import ExperimentRun
from fairrank.recommenders import TrainConfig

from .fixtures import experiment_mapping, write_generic_dataset


class HarnessTestCase(TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self._tmp.cleanup)
        self.tmp = Path(self._tmp.name)
        self.data_dir = write_generic_dataset(self.tmp / 'data')

    def config(self, out='run', **sections):
        return ExperimentConfig.from_mapping(experiment_mapping(self.data_dir, self.tmp / out, **sections))

    def summary(self, run_dir):
        return pd.read_csv(Path(run_dir) / 'report.csv').set_index(['attribute', 'ranking'])


class ExperimentTests(HarnessTestCase):
    def test_run_directory_contents(self):
        run_dir = run_experiment(self.config())
        names = {p.name for p in run_dir.iterdir()}
        self.assertTrue({'dataset', 'scores.tsv', 'original.tsv', 'profile_gender.json',
                         'reranked_gender.tsv', 'category_proportions_gender.csv', 'bias_report.json',
                         'accuracy_report.json', 'report.csv', 'manifest.json'} <= names)

        manifest = json.loads((run_dir / 'manifest.json').read_text(encoding='utf-8'))
        self.assertEqual(manifest['status'], 'completed')
        self.assertEqual(manifest['attributes'], ['gender'])
        self.assertEqual(manifest['config']['rerank']['k'], 5)

        reranked = pd.read_csv(run_dir / 'reranked_gender.tsv', sep='\t', dtype={'user': str})
        self.assertLessEqual(reranked.groupby('user').size().max(), 5)
        self.assertEqual(list(reranked.columns), ['user', 'rank', 'item', 'raw_score'])

        summary = pd.read_csv(run_dir / 'report.csv')
        self.assertEqual(list(summary.columns), SUMMARY_COLUMNS)
        self.assertEqual(sorted(summary['ranking']), ['fair', 'original'])

        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, 'completed')
        self.assertEqual(run.kind, 'experiment')
        self.assertEqual(run.dataset_hash, manifest['dataset']['fingerprint'])
        self.assertIsNotNone(run.finished_at)

    def test_beta_zero_reproduces_baseline(self):
        run_dir = run_experiment(self.config(rerank={'beta': 0.0}))
        self.assertEqual((run_dir / 'reranked_gender.tsv').read_bytes(),
                         (run_dir / 'original.tsv').read_bytes())
        summary = self.summary(run_dir)
        self.assertEqual(summary.loc[('gender', 'original')].tolist(),
                         summary.loc[('gender', 'fair')].tolist())

    def test_missing_users_file_aborts_at_ingest(self):
        (self.data_dir / 'users.tsv').unlink()
        config = self.config()
        with self.assertRaises(DataFormatError) as ctx:
            run_experiment(config)
        self.assertEqual(ctx.exception.stage, 'ingest')
        self.assertIn('users.tsv', str(ctx.exception))
        self.assertFalse(config.out_dir.exists())
        self.assertEqual(list(self.tmp.glob('.run-*')), [])

        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, 'failed')
        self.assertEqual(run.stage, 'ingest')

    def test_failed_rerun_keeps_previous_results(self):
        config = self.config()
        run_experiment(config)
        before = (config.out_dir / 'report.csv').read_bytes()
        (self.data_dir / 'users.tsv').unlink()
        with self.assertRaises(DataFormatError):
            run_experiment(config)
        self.assertEqual((config.out_dir / 'report.csv').read_bytes(), before)

    def test_thread_count_does_not_change_results(self):
        single = run_experiment(self.config(out='single', threads=1))
        multi = run_experiment(self.config(out='multi', threads=2))
        for name in ('bias_report.json', 'accuracy_report.json', 'report.csv', 'reranked_gender.tsv',
                     'category_proportions_gender.csv'):
            self.assertEqual((single / name).read_bytes(), (multi / name).read_bytes(), name)

    def test_unknown_attribute(self):
        with self.assertRaises(UnknownIdError) as ctx:
            run_experiment(self.config(attributes=['age']))
        self.assertIn('age', str(ctx.exception))
        run = ExperimentRun.objects.get()
        self.assertEqual((run.status, run.stage), ('failed', 'ingest'))


class SweepTests(HarnessTestCase):
    def test_beta_sweep(self):
        path = sweep(self.config(out='sweep'), 'beta')
        frame = pd.read_csv(path)
        self.assertEqual(list(frame.columns), SWEEP_COLUMNS)
        self.assertEqual(frame['value'].tolist(), [0.0, 0.4, 0.8])
        self.assertTrue((frame['gamma'] == 0.1).all())

        baseline = self.summary(run_experiment(self.config(out='run')))
        original = baseline.loc[('gender', 'original')]
        first = frame.iloc[0]
        for column in ('NDCG', 'HitRatio', 'CC-bias', 'CDCG-bias'):
            self.assertEqual(first[column], original[column], column)
        self.assertEqual(ExperimentRun.objects.filter(kind='sweep', status='completed').count(), 1)

    def test_gamma_and_cross_grids(self):
        config = self.config(out='sweep')
        self.assertEqual(sweep_points(config, 'gamma'), [(0.5, 0.0), (0.5, 0.5)])
        self.assertEqual(len(sweep_points(config, 'beta', cross=True)), 6)
        frame = pd.read_csv(sweep(config, 'gamma', cross=True))
        self.assertEqual(len(frame), 6)
        self.assertEqual(set(frame['parameter']), {'beta x gamma'})
        with self.assertRaises(ConfigError):
            sweep_points(config, 'alpha')

    def test_worker_failure_keeps_its_own_stage(self):
        with mock.patch('fairrank.harness.bias_report', side_effect=RuntimeError('boom')):
            with self.assertRaises(FairRankError) as ctx:
                sweep(self.config(out='sweep', threads=4), 'beta')
        self.assertEqual(ctx.exception.stage, 'evaluate')
        self.assertIn('RuntimeError: boom', str(ctx.exception))
        run = ExperimentRun.objects.get()
        self.assertEqual((run.status, run.stage), ('failed', 'evaluate'))
        self.assertFalse((self.tmp / 'sweep').exists())


class ReportTests(HarnessTestCase):
    def test_report_is_reproducible(self):
        run_dir = run_experiment(self.config())
        first = emit_report(run_dir).read_bytes()
        summary = (run_dir / 'report.csv').read_bytes()
        second = emit_report(run_dir).read_bytes()
        self.assertEqual(first, second)
        self.assertEqual((run_dir / 'report.csv').read_bytes(), summary)
        text = first.decode('utf-8')
        for needle in ('## Original vs Fair', 'NDCG Orig', 'CDCG Fair', 'Category proportions: gender'):
            self.assertIn(needle, text)
        self.assertNotIn('Published reference values', text)

    def test_incomplete_run(self):
        run_dir = run_experiment(self.config())
        (run_dir / 'bias_report.json').unlink()
        with self.assertRaises(IncompleteRunError):
            emit_report(run_dir)
        with self.assertRaises(IncompleteRunError):
            emit_report(self.tmp / 'empty')


class ConfigTests(HarnessTestCase):
    def test_unknown_keys_rejected(self):
        with self.assertRaises(ConfigError):
            merge_config(settings_defaults(), {'colour': 'red'})
        with self.assertRaises(ConfigError):
            merge_config(settings_defaults(), {'rerank': {'delta': 1}})
        with self.assertRaises(ConfigError):
            merge_config(settings_defaults(), {'rerank': 0.5})

    def test_layers_and_none(self):
        merged = merge_config(settings_defaults(), {'rerank': {'beta': 0.2}}, {'rerank': {'beta': None, 'k': 7}})
        self.assertEqual(merged['rerank']['beta'], 0.2)
        self.assertEqual(merged['rerank']['k'], 7)
        self.assertEqual(merged['rerank']['gamma'], 0.1)

    def test_toml_and_json_files(self):
        toml = self.tmp / 'config.toml'
        toml.write_text('seed = 3\n\n[rerank]\nbeta = 0.7\n', encoding='utf-8')
        self.assertEqual(load_config_file(toml), {'seed': 3, 'rerank': {'beta': 0.7}})
        broken = self.tmp / 'config.json'
        broken.write_text('{"seed": ', encoding='utf-8')
        with self.assertRaises(ConfigError):
            load_config_file(broken)
        with self.assertRaises(ConfigError):
            load_config_file(self.tmp / 'absent.json')

    def test_default_output_directory(self):
        with self.settings(FAIRRANK={**settings.FAIRRANK, 'RUNS_DIR': Path('/tmp/fr')}):
            config = ExperimentConfig.from_mapping({'dataset': {'dir': str(self.data_dir), 'format': 'generic-tsv'}})
        self.assertEqual(config.out_dir, Path('/tmp/fr/latest'))

    def test_invalid_values(self):
        with self.assertRaises(ConfigError):
            self.config(rerank={'beta': 1.5})
        with self.assertRaises(ConfigError):
            self.config(model={'name': 'svd'})
        with self.assertRaises(ConfigError):
            self.config(sweep={'beta_grid': []})


class ModelSelectionTests(HarnessTestCase):
    def test_best_grid_point(self):
        section = dict(experiment_mapping(self.data_dir, self.tmp / 'run')['dataset'])
        defaults = settings_defaults()['dataset']
        dataset = build_dataset(ingest_config({**defaults, **section}))
        model, table = select_model(dataset, 'wmf', TrainConfig(factors=4, als_sweeps=3), [2, 4],
                                    [0.01, 0.5], k=5)
        self.assertEqual(len(table), 4)
        best = max(table, key=lambda row: (row['HitRatio'], row['NDCG']))
        chosen = next(row for row in table if (row['factors'], row['regularization'])
                      == (model.config.factors, model.config.regularization))
        self.assertEqual((chosen['HitRatio'], chosen['NDCG']), (best['HitRatio'], best['NDCG']))

    def test_grid_search_recorded_in_manifest(self):
        run_dir = run_experiment(self.config(model={'grid_search': True, 'grid_factors': [2, 4],
                                                    'grid_regularization': [0.05]}))
        manifest = json.loads((run_dir / 'manifest.json').read_text(encoding='utf-8'))
        self.assertEqual(len(manifest['model_selection']), 2)
        self.assertIn(manifest['selected']['factors'], (2, 4))
