"""
Checks against the real MovieLens 100K files.

Skipped unless FAIRRANK_ML100K_DIR points at an extracted ``ml-100k``
directory (u.data, u.user, u.item).
"""
import json
import tempfile
import unittest
from pathlib import Path

import pandas as pd
from django.test import TestCase

from fairrank.harness import ExperimentConfig, run_experiment, sweep
from fairrank.ingest import IngestConfig, build_dataset

from .fixtures import ML100K_DIR


def ml100k_mapping(out_dir, **rerank):
    return {
        'out': str(out_dir),
        'seed': 42,
        'dataset': {'format': 'movielens-100k', 'dir': ML100K_DIR},
        'model': {'name': 'wmf'},
        'rerank': {'k': 20, 'beta': 0.5, 'gamma': 0.1, **rerank},
    }


@unittest.skipUnless(ML100K_DIR, 'FAIRRANK_ML100K_DIR is not set')
class MovieLens100KIngestTests(TestCase):
    def test_five_core_counts(self):
        dataset = build_dataset(IngestConfig.for_directory('movielens-100k', ML100K_DIR))
        self.assertEqual(dataset.n_users, 943)
        self.assertEqual(dataset.n_items, 1348)
        self.assertEqual(len(dataset.interactions), 99278)
        self.assertEqual(dataset.catalog.n_categories, 18)
        self.assertNotIn('unknown', dataset.catalog.names)

        classes = {name: len(dataset.attributes[name].labels) for name in ('gender', 'age', 'occupation')}
        self.assertEqual(classes, {'gender': 2, 'age': 7, 'occupation': 21})


@unittest.skipUnless(ML100K_DIR, 'FAIRRANK_ML100K_DIR is not set')
class MovieLens100KExperimentTests(TestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls._tmp = tempfile.TemporaryDirectory()
        cls.tmp = Path(cls._tmp.name)
        cls.run_dir = run_experiment(ExperimentConfig.from_mapping(ml100k_mapping(cls.tmp / 'run')))
        cls.summary = pd.read_csv(cls.run_dir / 'report.csv').set_index(['attribute', 'ranking'])

    @classmethod
    def tearDownClass(cls):
        cls._tmp.cleanup()
        super().tearDownClass()

    def test_bias_is_reduced(self):
        for attribute, ceiling in (('gender', 0.5), ('age', 0.6), ('occupation', 0.6)):
            original = self.summary.loc[(attribute, 'original')]
            fair = self.summary.loc[(attribute, 'fair')]
            for column in ('CC-bias', 'CDCG-bias'):
                self.assertLessEqual(fair[column], ceiling * original[column], f'{attribute} {column}')

    def test_accuracy_is_preserved(self):
        for attribute in ('gender', 'age', 'occupation'):
            original = self.summary.loc[(attribute, 'original')]
            fair = self.summary.loc[(attribute, 'fair')]
            for column in ('NDCG', 'HitRatio'):
                self.assertGreaterEqual(fair[column], 0.9 * original[column], f'{attribute} {column}')

    def test_beta_zero_is_identity(self):
        run_dir = run_experiment(ExperimentConfig.from_mapping(
            {**ml100k_mapping(self.tmp / 'beta0', beta=0.0), 'attributes': ['gender']}))
        self.assertEqual((run_dir / 'reranked_gender.tsv').read_bytes(),
                         (run_dir / 'original.tsv').read_bytes())

    def test_thread_count_does_not_change_reports(self):
        mapping = {**ml100k_mapping(self.tmp / 'threads'), 'threads': 4}
        run_dir = run_experiment(ExperimentConfig.from_mapping(mapping))
        for name in ('bias_report.json', 'accuracy_report.json', 'report.csv'):
            self.assertEqual((run_dir / name).read_bytes(), (self.run_dir / name).read_bytes(), name)
        manifest = json.loads((run_dir / 'manifest.json').read_text(encoding='utf-8'))
        self.assertEqual(manifest['config']['threads'], 4)

    def test_beta_sweep_has_interior_minimum(self):
        mapping = {**ml100k_mapping(self.tmp / 'sweep'), 'attributes': ['gender'],
                   'sweep': {'beta_grid': [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]}}
        frame = pd.read_csv(sweep(ExperimentConfig.from_mapping(mapping), 'beta'))
        best = frame.loc[frame['CC-bias'].idxmin()]
        self.assertLess(best['CC-bias'], frame.loc[frame['beta'] == 0.0, 'CC-bias'].iloc[0])
        self.assertTrue(0.2 <= best['beta'] <= 0.7, best['beta'])
