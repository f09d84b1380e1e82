import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st

from fairrank.domain import IdIndex
from fairrank.exceptions import ConfigError, DataFormatError, InvariantViolation
from fairrank.ingest import (IngestConfig, build_dataset, bucket_ages, dataset_fingerprint, k_core_filter,
                             load_bundle, load_item_categories, load_user_attributes, parse_interactions,
                             save_bundle, temporal_split)

from .fixtures import write_generic_dataset


def frame(rows):
    return pd.DataFrame(rows, columns=['user', 'item', 'rating', 'timestamp'])


def brute_force_core(edges, k):
    edges = set(edges)
    while True:
        users, items = {}, {}
        for u, i in edges:
            users[u] = users.get(u, 0) + 1
            items[i] = items.get(i, 0) + 1
        keep = {(u, i) for u, i in edges if users[u] >= k and items[i] >= k}
        if keep == edges:
            return edges
        edges = keep


class TempDirMixin:
    def setUp(self):
        super().setUp()
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()
        super().tearDown()

    def write(self, name, text, encoding='utf-8'):
        path = self.tmp / name
        path.write_text(text, encoding=encoding)
        return path


class ParseInteractionsTests(TempDirMixin, SimpleTestCase):
    def config(self, fmt='movielens-100k', **paths):
        return IngestConfig(format=fmt, interactions_path=paths.get('interactions', self.tmp / 'u.data'),
                            users_path=self.tmp / 'u.user', items_path=self.tmp / 'u.item')

    def test_movielens_100k_rows(self):
        self.write('u.data', '196\t242\t3\t881250949\n186\t302\t3\t891717742\n')
        parsed = parse_interactions(self.config())
        self.assertEqual(len(parsed), 2)
        self.assertEqual(parsed['user'].tolist(), ['196', '186'])
        self.assertEqual(parsed['timestamp'].tolist(), [881250949, 891717742])

    def test_malformed_field_names_line(self):
        self.write('u.data', '196\t242\t3\t881250949\n1\t5\tx\t881250949\n')
        with self.assertRaises(DataFormatError) as ctx:
            parse_interactions(self.config())
        self.assertEqual(ctx.exception.line, 2)
        self.assertIn('line 2', str(ctx.exception))

    def test_empty_file_warns(self):
        self.write('u.data', '')
        with self.assertLogs('fairrank', level='WARNING'):
            parsed = parse_interactions(self.config())
        self.assertTrue(parsed.empty)

    def test_missing_file(self):
        with self.assertRaises(DataFormatError) as ctx:
            parse_interactions(self.config())
        self.assertIn('u.data', str(ctx.exception))

    def test_movielens_1m_separator(self):
        path = self.write('ratings.dat', '1::1193::5::978300760\n1::661::3::978302109\n')
        parsed = parse_interactions(self.config('movielens-1m', interactions=path))
        self.assertEqual(parsed['item'].tolist(), ['1193', '661'])

    def test_generic_rating_optional(self):
        path = self.write('interactions.tsv', 'user\titem\ttimestamp\na\tx\t5\n')
        parsed = parse_interactions(self.config('generic-tsv', interactions=path))
        self.assertTrue(np.isnan(parsed['rating'].iloc[0]))

    def test_generic_missing_column(self):
        path = self.write('interactions.tsv', 'user\titem\na\tx\n')
        with self.assertRaises(DataFormatError):
            parse_interactions(self.config('generic-tsv', interactions=path))

    def test_invalid_config(self):
        with self.assertRaises(ConfigError):
            IngestConfig('movielens-100k', 'a', 'b', 'c', train_fraction=1.0)
        with self.assertRaises(ConfigError):
            IngestConfig('yelp', 'a', 'b', 'c')


class KCoreTests(SimpleTestCase):
    def test_zero_is_no_op(self):
        data = frame([('u1', 'i1', 1.0, 1), ('u2', 'i2', 1.0, 2)])
        self.assertIs(k_core_filter(data, 0), data)

    def test_chain_graph_has_empty_2_core(self):
        data = frame([('u1', 'i1', 1.0, 1), ('u2', 'i1', 1.0, 2), ('u2', 'i2', 1.0, 3)])
        self.assertEqual(brute_force_core([('u1', 'i1'), ('u2', 'i1'), ('u2', 'i2')], 2), set())
        with self.assertRaises(InvariantViolation):
            k_core_filter(data, 2)

    @given(st.sets(st.tuples(st.integers(0, 9), st.integers(0, 9)), min_size=1, max_size=60),
           st.integers(1, 3), st.randoms())
    @settings(max_examples=60, deadline=None)
    def test_matches_brute_force_and_is_order_independent(self, edges, k, rnd):
        edges = sorted(edges)
        expected = brute_force_core(edges, k)
        shuffled = list(edges)
        rnd.shuffle(shuffled)
        for order in (edges, shuffled):
            data = frame([(f'u{u}', f'i{i}', 1.0, 0) for u, i in order])
            if not expected:
                with self.assertRaises(InvariantViolation):
                    k_core_filter(data, k)
                continue
            core = k_core_filter(data, k)
            got = {(int(u[1:]), int(i[1:])) for u, i in zip(core['user'], core['item'])}
            self.assertEqual(got, expected)
            self.assertTrue((core.groupby('user').size() >= k).all())
            self.assertTrue((core.groupby('item').size() >= k).all())


class TemporalSplitTests(SimpleTestCase):
    def test_earliest_go_to_train(self):
        data = frame([('u', f'i{t}', 1.0, t) for t in (30, 10, 50, 20, 40)])
        train, test, _ = temporal_split(data, 0.8)
        self.assertEqual(sorted(train['timestamp']), [10, 20, 30, 40])
        self.assertEqual(test['timestamp'].tolist(), [50])

    def test_equal_timestamps_split_by_item(self):
        data = frame([('u', str(i), 1.0, 7) for i in (5, 3, 9, 1, 2)])
        train, test, _ = temporal_split(data, 0.6)
        self.assertEqual(train['item'].tolist(), ['1', '2', '3'])
        self.assertEqual(test['item'].tolist(), ['5', '9'])

    def test_mixed_ids_tie_break_in_index_order(self):
        data = frame([('u', i, 1.0, 7) for i in ('x', '10', '9', '2')])
        train, test, _ = temporal_split(data, 0.5)
        self.assertEqual(train['item'].tolist(), ['2', '9'])
        self.assertEqual(test['item'].tolist(), ['10', 'x'])
        self.assertEqual(IdIndex.from_values(data['item']).originals, ('2', '9', '10', 'x'))

    def test_single_interaction_stays_in_train(self):
        data = frame([('a', 'x', 1.0, 1), ('b', 'x', 1.0, 2), ('b', 'y', 1.0, 3)])
        with self.assertLogs('fairrank', level='WARNING'):
            train, test, warnings = temporal_split(data, 0.5)
        self.assertEqual(len(warnings), 1)
        self.assertNotIn('a', set(test['user']))

    def test_recount_and_multiset(self):
        rng = np.random.default_rng(0)
        rows = [(f'u{u}', f'i{i}', 1.0, int(rng.integers(0, 100)))
                for u in range(20) for i in range(int(rng.integers(1, 15)))]
        data = frame(rows)
        train, test, _ = temporal_split(data, 0.8)
        sizes = data.groupby('user').size()
        self.assertEqual(len(train), int(sum(max(1, np.ceil(0.8 * n - 1e-9)) for n in sizes)))
        combined = pd.concat([train, test]).sort_values(['user', 'item']).reset_index(drop=True)
        self.assertTrue(combined.equals(data.sort_values(['user', 'item']).reset_index(drop=True)))

    def test_global_split_moves_late_users_to_train(self):
        data = frame([('a', 'x', 1.0, 1), ('a', 'y', 1.0, 2), ('b', 'x', 1.0, 9)])
        with self.assertLogs('fairrank', level='WARNING'):
            train, test, warnings = temporal_split(data, 0.5, 'temporal-global')
        self.assertIn('b', set(train['user']))
        self.assertEqual(len(warnings), 1)


class AttributeTests(TempDirMixin, SimpleTestCase):
    def ml100k_config(self):
        return IngestConfig('movielens-100k', self.tmp / 'u.data', self.tmp / 'u.user', self.tmp / 'u.item')

    def test_age_buckets(self):
        self.assertEqual(bucket_ages([1, 17, 18, 24, 25, 49, 50, 56, 73], (1, 18, 25, 35, 45, 50, 56)),
                         ['under 18', 'under 18', '18-24', '18-24', '25-34', '45-49', '50-55', '56+', '56+'])

    def test_movielens_100k_users(self):
        self.write('u.user', '1|24|M|technician|85711\n2|53|F|other|94043\n3|23|M|writer|32067\n'
                             '9|29|M|student|01002\n', encoding='latin-1')
        with self.assertLogs('fairrank', level='WARNING'):
            attributes, warnings = load_user_attributes(self.tmp / 'u.user', self.ml100k_config(),
                                                        IdIndex(('1', '2', '3')))
        self.assertEqual(len(warnings), 1)
        self.assertEqual(attributes['gender'].labels, ('F', 'M'))
        self.assertEqual(attributes['age'].labels, ('18-24', '50-55'))
        self.assertEqual(attributes['occupation'].value_of(2), 'writer')

    def test_missing_value_names_user(self):
        path = self.write('users.tsv', 'user\tgender\na\tM\nb\t\nc\tF\n')
        config = IngestConfig('generic-tsv', self.tmp / 'i.tsv', path, self.tmp / 'c.tsv')
        with self.assertRaises(DataFormatError) as ctx:
            load_user_attributes(path, config, IdIndex(('a', 'b', 'c')))
        self.assertIn("'b'", str(ctx.exception))

    def test_single_class_rejected(self):
        path = self.write('users.tsv', 'user\tgender\na\tM\nb\tM\n')
        config = IngestConfig('generic-tsv', self.tmp / 'i.tsv', path, self.tmp / 'c.tsv')
        with self.assertRaises(InvariantViolation):
            load_user_attributes(path, config, IdIndex(('a', 'b')))


class CategoryTests(TempDirMixin, SimpleTestCase):
    def generic_config(self, path):
        return IngestConfig('generic-tsv', self.tmp / 'i.tsv', self.tmp / 'u.tsv', path)

    def test_pipe_separated_row(self):
        path = self.write('movies.txt', "Toy Story|Animation|Children's|Comedy\nHeat|Action\n")
        catalog = load_item_categories(path, self.generic_config(path), IdIndex(('Toy Story',)))
        self.assertEqual(len(catalog.categories_of(0)), 3)

    def test_movielens_100k_flags(self):
        flags_a = '|'.join(['0', '0', '0', '1', '1', '1'] + ['0'] * 13)
        flags_b = '|'.join(['1'] + ['0'] * 18)
        self.write('u.item', f'1|Toy Story (1995)|01-Jan-1995||http://x|{flags_a}\n'
                             f'2|Mystery (1995)|01-Jan-1995||http://y|{flags_b}\n', encoding='latin-1')
        config = IngestConfig('movielens-100k', self.tmp / 'u.data', self.tmp / 'u.user', self.tmp / 'u.item')
        catalog = load_item_categories(self.tmp / 'u.item', config, IdIndex(('1',)))
        self.assertEqual(catalog.n_categories, 18)
        self.assertEqual([catalog.names[c] for c in sorted(catalog.categories_of(0))],
                         ['Animation', "Children's", 'Comedy'])
        with self.assertRaises(InvariantViolation):
            load_item_categories(self.tmp / 'u.item', config, IdIndex(('1', '2')))
        keep = IngestConfig('movielens-100k', self.tmp / 'u.data', self.tmp / 'u.user', self.tmp / 'u.item',
                            keep_unknown_genre=True)
        self.assertEqual(load_item_categories(self.tmp / 'u.item', keep).n_categories, 19)

    def test_duplicate_item_rows(self):
        path = self.write('cats.tsv', 'item\tcategories\na\tx\na\ty\n')
        with self.assertRaises(DataFormatError):
            load_item_categories(path, self.generic_config(path))

    def test_expected_count(self):
        path = self.write('cats.tsv', 'a\tx|y\nb\tz\n')
        config = IngestConfig('generic-tsv', self.tmp / 'i.tsv', self.tmp / 'u.tsv', path,
                              expected_categories=21)
        with self.assertRaises(InvariantViolation):
            load_item_categories(path, config)


class DatasetImportTests(TempDirMixin, SimpleTestCase):
    def test_generic_import_and_bundle_round_trip(self):
        write_generic_dataset(self.tmp / 'raw')
        config = IngestConfig.for_directory('generic-tsv', self.tmp / 'raw', k_core=2)
        dataset = build_dataset(config)
        counts = dataset.manifest['counts']
        self.assertEqual(counts['train'] + counts['test'], counts['interactions'])
        self.assertEqual(dataset.catalog.names, ('Action', 'Comedy', 'Drama'))
        self.assertEqual(dataset.attributes['gender'].labels, ('F', 'M'))

        save_bundle(dataset, self.tmp / 'bundle')
        reloaded = load_bundle(self.tmp / 'bundle')
        self.assertEqual(dataset_fingerprint(reloaded), dataset.manifest['fingerprint'])
        self.assertEqual(reloaded.users.originals, dataset.users.originals)

    def test_min_rating_filter(self):
        write_generic_dataset(self.tmp / 'raw')
        config = IngestConfig.for_directory('generic-tsv', self.tmp / 'raw', k_core=0, min_rating=3)
        dataset = build_dataset(config)
        self.assertTrue((dataset.interactions.rating >= 3).all())

    def test_missing_attribute_file_names_path(self):
        write_generic_dataset(self.tmp / 'raw')
        (self.tmp / 'raw' / 'users.tsv').unlink()
        config = IngestConfig.for_directory('generic-tsv', self.tmp / 'raw', k_core=2)
        with self.assertRaises(DataFormatError) as ctx:
            build_dataset(config)
        self.assertIn('users.tsv', str(ctx.exception))
        self.assertEqual(ctx.exception.stage, 'ingest')
