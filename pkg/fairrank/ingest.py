"""
Dataset ingestion: raw MovieLens / generic files -> validated :class:`Dataset`.

The pipeline is parse -> (optional rating filter) -> k-core -> dense indexing
-> attributes and categories -> temporal split. The canonical bundle written
by :func:`save_bundle` (three TSVs plus ``manifest.json``) is what every
later command reads back through :func:`load_bundle`.
"""
import hashlib
import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .domain import Attribute, CategoryCatalog, Dataset, IdIndex, Interactions, UserAttributes, natural_key
from .exceptions import ConfigError, DataFormatError, InvariantViolation

logger = logging.getLogger('fairrank')

FORMATS = ('movielens-100k', 'movielens-1m', 'generic-tsv')
SPLITS = ('temporal-per-user', 'temporal-global')

INTERACTION_COLUMNS = ['user', 'item', 'rating', 'timestamp']

MOVIELENS_GENRES = (
    'Action', 'Adventure', 'Animation', "Children's", 'Comedy', 'Crime',
    'Documentary', 'Drama', 'Fantasy', 'Film-Noir', 'Horror', 'Musical',
    'Mystery', 'Romance', 'Sci-Fi', 'Thriller', 'War', 'Western',
)

ML1M_OCCUPATIONS = (
    'other', 'academic/educator', 'artist', 'clerical/admin', 'college/grad student',
    'customer service', 'doctor/health care', 'executive/managerial', 'farmer',
    'homemaker', 'K-12 student', 'lawyer', 'programmer', 'retired', 'sales/marketing',
    'scientist', 'self-employed', 'technician/engineer', 'tradesman/craftsman',
    'unemployed', 'writer',
)

DEFAULT_AGE_EDGES = (1, 18, 25, 35, 45, 50, 56)


@dataclass(frozen=True)
class IngestConfig:
    format: str
    interactions_path: Path
    users_path: Path
    items_path: Path
    k_core: int = 5
    split: str = 'temporal-per-user'
    train_fraction: float = 0.8
    keep_unknown_genre: bool = False
    age_edges: Tuple[int, ...] = DEFAULT_AGE_EDGES
    min_rating: Optional[float] = None
    expected_categories: Optional[int] = None

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ConfigError(f'Unknown dataset format {self.format!r}; expected one of {FORMATS}')
        if self.split not in SPLITS:
            raise ConfigError(f'Unknown split {self.split!r}; expected one of {SPLITS}')
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f'train_fraction must lie in (0, 1), got {self.train_fraction}')
        if self.k_core < 0:
            raise ConfigError(f'k_core must be >= 0, got {self.k_core}')
        edges = tuple(int(e) for e in self.age_edges)
        if len(edges) < 2 or list(edges) != sorted(set(edges)):
            raise ConfigError(f'age_edges must be strictly increasing, got {self.age_edges}')
        for name in ('interactions_path', 'users_path', 'items_path'):
            object.__setattr__(self, name, Path(getattr(self, name)))
        object.__setattr__(self, 'age_edges', edges)

    @property
    def category_count(self) -> Optional[int]:
        if self.expected_categories is not None:
            return self.expected_categories
        if self.format.startswith('movielens'):
            extra = 1 if self.keep_unknown_genre and self.format == 'movielens-100k' else 0
            return len(MOVIELENS_GENRES) + extra
        return None

    def to_manifest(self) -> dict:
        out = asdict(self)
        for name in ('interactions_path', 'users_path', 'items_path'):
            out[name] = str(out[name])
        out['age_edges'] = list(self.age_edges)
        return out

    @classmethod
    def for_directory(cls, format: str, directory, **overrides) -> 'IngestConfig':
        """Standard file names of the MovieLens distributions."""
        directory = Path(directory)
        names = {
            'movielens-100k': ('u.data', 'u.user', 'u.item'),
            'movielens-1m': ('ratings.dat', 'users.dat', 'movies.dat'),
            'generic-tsv': ('interactions.tsv', 'users.tsv', 'item_categories.tsv'),
        }
        if format not in names:
            raise ConfigError(f'Unknown dataset format {format!r}; expected one of {FORMATS}')
        inter, users, items = names[format]
        return cls(format=format, interactions_path=directory / inter,
                   users_path=directory / users, items_path=directory / items, **overrides)


def _require_file(path: Path):
    if not path.exists():
        raise DataFormatError('file does not exist', path=path)


def _read_table(path: Path, sep: str, names=None, encoding='utf-8') -> pd.DataFrame:
    """Read every field as text; raise DataFormatError with the line number."""
    _require_file(path)
    options = dict(sep=sep, dtype=str, keep_default_na=False, encoding=encoding)
    if names is None:
        options['header'] = 0
    else:
        options.update(header=None, names=names)
    if len(sep) > 1:
        options['engine'] = 'python'
    try:
        return pd.read_csv(path, **options)
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=names or [])
    except pd.errors.ParserError as e:
        line = re.search(r'line (\d+)', str(e))
        raise DataFormatError(f'malformed line: {e}', path=path,
                              line=int(line.group(1)) if line else None) from e
    except UnicodeDecodeError as e:
        raise DataFormatError(f'file is not valid {encoding}: {e}', path=path) from e


def _numeric_column(frame, column, path, header_lines, integer=False, required=True):
    text = frame[column].fillna('').astype(str).str.strip()
    values = pd.to_numeric(text, errors='coerce')
    bad = values.isna() & (text != '' if not required else True)
    if integer:
        bad |= values.notna() & (values != np.floor(values))
    if bad.any():
        position = int(np.flatnonzero(bad.to_numpy())[0])
        raise DataFormatError(
            f'non-numeric {column} value {frame[column].iloc[position]!r}',
            path=path, line=position + 1 + header_lines,
        )
    return values


def parse_interactions(config: IngestConfig) -> pd.DataFrame:
    """One row per raw interaction, with the original string identifiers."""
    path = config.interactions_path
    if config.format == 'movielens-100k':
        frame, header_lines = _read_table(path, '\t', INTERACTION_COLUMNS), 0
    elif config.format == 'movielens-1m':
        frame, header_lines = _read_table(path, '::', INTERACTION_COLUMNS), 0
    else:
        frame, header_lines = _read_table(path, '\t'), 1
        if len(frame.columns):
            missing = {'user', 'item', 'timestamp'} - set(frame.columns)
            if missing:
                raise DataFormatError(f'missing required columns: {", ".join(sorted(missing))}',
                                      path=path, line=1)
        if 'rating' not in frame.columns:
            frame['rating'] = ''
        frame = frame.reindex(columns=INTERACTION_COLUMNS)

    if frame.empty:
        logger.warning(f'No interactions found in {path}')
        return pd.DataFrame({
            'user': pd.Series(dtype=str), 'item': pd.Series(dtype=str),
            'rating': pd.Series(dtype=float), 'timestamp': pd.Series(dtype=np.int64),
        })

    for column in ('user', 'item'):
        blank = frame[column].isna() | (frame[column].astype(str).str.strip() == '')
        if blank.any():
            position = int(np.flatnonzero(blank.to_numpy())[0])
            raise DataFormatError(f'missing {column}', path=path, line=position + 1 + header_lines)

    required_rating = config.format != 'generic-tsv'
    ratings = _numeric_column(frame, 'rating', path, header_lines, required=required_rating)
    timestamps = _numeric_column(frame, 'timestamp', path, header_lines, integer=True)
    if (timestamps < 0).any():
        position = int(np.flatnonzero((timestamps < 0).to_numpy())[0])
        raise DataFormatError('negative timestamp', path=path, line=position + 1 + header_lines)

    out = pd.DataFrame({
        'user': frame['user'].astype(str).str.strip(),
        'item': frame['item'].astype(str).str.strip(),
        'rating': ratings.astype(float),
        'timestamp': timestamps.astype(np.int64),
    })
    logger.info(f'Parsed {len(out)} interactions from {path} '
                f'({out["user"].nunique()} users, {out["item"].nunique()} items)')
    return out


def k_core_filter(interactions: pd.DataFrame, k: int) -> pd.DataFrame:
    """Maximal sub-table where every user and item has at least k interactions.

    The k-core is unique, so the result does not depend on removal order.
    """
    if k < 0:
        raise ConfigError(f'k must be >= 0, got {k}')
    if k == 0 or interactions.empty:
        return interactions
    current = interactions
    rounds = 0
    while True:
        user_degree = current.groupby('user')['user'].transform('size')
        item_degree = current.groupby('item')['item'].transform('size')
        keep = (user_degree >= k) & (item_degree >= k)
        if keep.all():
            break
        current = current[keep]
        rounds += 1
        if current.empty:
            raise InvariantViolation(f'The {k}-core of the interaction graph is empty', stage='ingest')
    logger.info(f'{k}-core after {rounds} rounds: {current["user"].nunique()} users, '
                f'{current["item"].nunique()} items, {len(current)} interactions')
    return current


def _train_quota(n, fraction):
    # guard against 0.8 * 5 == 4.000000000000001
    return np.maximum(1, np.ceil(n * fraction - 1e-9)).astype(np.int64)


def temporal_split(interactions: pd.DataFrame, fraction: float,
                   mode: str = 'temporal-per-user') -> Tuple[pd.DataFrame, pd.DataFrame, List[str]]:
    """Split into (train, test, warnings); earliest interactions go to train."""
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f'train fraction must lie in (0, 1), got {fraction}')
    if mode not in SPLITS:
        raise ConfigError(f'Unknown split {mode!r}; expected one of {SPLITS}')
    warnings = []
    if interactions.empty:
        return interactions, interactions, warnings

    frame = interactions.copy()
    frame['_user_key'] = _sortable(frame['user'])
    frame['_item_key'] = _sortable(frame['item'])

    if mode == 'temporal-per-user':
        frame = frame.sort_values(['_user_key', 'timestamp', '_item_key'], kind='mergesort')
        position = frame.groupby('user').cumcount().to_numpy()
        size = frame.groupby('user')['user'].transform('size').to_numpy()
        in_train = position < _train_quota(size, fraction)
        singles = int(frame.loc[size == 1, 'user'].nunique())
        if singles:
            message = f'{singles} users have a single interaction; kept in train, excluded from test metrics'
            logger.warning(message)
            warnings.append(message)
    else:
        frame = frame.sort_values(['timestamp', '_user_key', '_item_key'], kind='mergesort')
        in_train = np.arange(len(frame)) < _train_quota(len(frame), fraction)
        train_users = set(frame.loc[in_train, 'user'])
        orphan = ~in_train & ~frame['user'].isin(train_users).to_numpy()
        if orphan.any():
            message = (f'{frame.loc[orphan, "user"].nunique()} users only occur after the global '
                       f'cutoff; their interactions were moved to train')
            logger.warning(message)
            warnings.append(message)
            in_train = in_train | orphan

    frame = frame.drop(columns=['_user_key', '_item_key'])
    return frame[in_train], frame[~in_train], warnings


def _sortable(series: pd.Series) -> pd.Series:
    """Rank of each id in IdIndex order (numeric ids before the rest)."""
    order = sorted(series.unique(), key=natural_key)
    return series.map({value: rank for rank, value in enumerate(order)}).astype(np.int64)


def _age_labels(edges: Sequence[int]) -> List[str]:
    labels = [f'under {edges[1]}']
    for low, high in zip(edges[1:-1], edges[2:]):
        labels.append(f'{low}-{high - 1}')
    labels.append(f'{edges[-1]}+')
    return labels


def bucket_ages(ages: Iterable, edges: Sequence[int]) -> List[str]:
    """Map raw integer ages onto the bands delimited by ``edges``."""
    labels = _age_labels(edges)
    positions = np.searchsorted(np.asarray(edges), np.asarray(list(ages), dtype=float), side='right') - 1
    return [labels[p] for p in np.clip(positions, 0, len(labels) - 1)]


def load_user_attributes(path, config: IngestConfig, users: IdIndex) -> Tuple[UserAttributes, List[str]]:
    """Attribute table for the indexed users, plus warnings."""
    path = Path(path)
    warnings = []
    if config.format == 'movielens-100k':
        frame = _read_table(path, '|', ['user', 'age', 'gender', 'occupation', 'zip'], encoding='latin-1')
        ages = _numeric_column(frame, 'age', path, 0, integer=True)
        frame['age'] = bucket_ages(ages.astype(int), config.age_edges)
        frame = frame[['user', 'gender', 'age', 'occupation']]
    elif config.format == 'movielens-1m':
        frame = _read_table(path, '::', ['user', 'gender', 'age', 'occupation', 'zip'], encoding='latin-1')
        ages = _numeric_column(frame, 'age', path, 0, integer=True)
        frame['age'] = bucket_ages(ages.astype(int), config.age_edges)
        codes = _numeric_column(frame, 'occupation', path, 0, integer=True).astype(int)
        if ((codes < 0) | (codes >= len(ML1M_OCCUPATIONS))).any():
            raise DataFormatError('occupation code outside 0..20', path=path)
        frame['occupation'] = [ML1M_OCCUPATIONS[c] for c in codes]
        frame = frame[['user', 'gender', 'age', 'occupation']]
    else:
        frame = _read_table(path, '\t')
        if 'user' not in frame.columns:
            raise DataFormatError('missing required column: user', path=path, line=1)

    frame = frame.copy()
    frame['user'] = frame['user'].astype(str).str.strip()
    duplicated = frame['user'].duplicated()
    if duplicated.any():
        raise DataFormatError(f'duplicate user {frame.loc[duplicated, "user"].iloc[0]!r}', path=path)

    known = frame['user'].isin(users.originals)
    if (~known).any():
        message = f'{int((~known).sum())} users in {path.name} have no interactions; dropped'
        logger.warning(message)
        warnings.append(message)
    frame = frame[known].set_index('user')

    missing_users = [u for u in users.originals if u not in frame.index]
    if missing_users:
        raise DataFormatError(f'user {missing_users[0]!r} has no attribute row '
                              f'({len(missing_users)} users missing)', path=path)
    frame = frame.loc[list(users.originals)]

    attributes = {}
    for name in frame.columns:
        values = frame[name].fillna('').astype(str).str.strip()
        blank = values == ''
        if blank.any():
            raise DataFormatError(f'user {values.index[blank.to_numpy()][0]!r} is missing {name}', path=path)
        if name == 'age' and config.format.startswith('movielens'):
            order = [label for label in _age_labels(config.age_edges) if label in set(values)]
        else:
            order = sorted(set(values))
        if len(order) < 2:
            raise InvariantViolation(f'Attribute {name!r} has fewer than two classes: {order}',
                                     stage='ingest')
        position = {label: i for i, label in enumerate(order)}
        attributes[name] = Attribute(name, tuple(order), values.map(position).to_numpy())
        logger.info(f"Attribute '{name}': {len(order)} classes")
    return UserAttributes(attributes), warnings


def _movielens_100k_categories(path, config):
    genres = ('unknown',) + MOVIELENS_GENRES
    names = ['item', 'title', 'release', 'video_release', 'url'] + list(genres)
    frame = _read_table(path, '|', names, encoding='latin-1')
    flags = frame[list(genres)].apply(pd.to_numeric, errors='coerce')
    if flags.isna().any().any():
        line = int(np.flatnonzero(flags.isna().any(axis=1).to_numpy())[0]) + 1
        raise DataFormatError('genre flags must be 0/1', path=path, line=line)
    if not config.keep_unknown_genre:
        flags = flags.drop(columns=['unknown'])
    return frame['item'].astype(str).str.strip(), tuple(flags.columns), flags.to_numpy(dtype=np.int8)


def _movielens_1m_categories(path):
    frame = _read_table(path, '::', ['item', 'title', 'genres'], encoding='latin-1')
    membership = np.zeros((len(frame), len(MOVIELENS_GENRES)), dtype=np.int8)
    position = {g: i for i, g in enumerate(MOVIELENS_GENRES)}
    for row, genres in enumerate(frame['genres']):
        for genre in filter(None, str(genres).split('|')):
            if genre not in position:
                raise DataFormatError(f'unknown genre {genre!r}', path=path, line=row + 1)
            membership[row, position[genre]] = 1
    return frame['item'].astype(str).str.strip(), MOVIELENS_GENRES, membership


def _generic_categories(path):
    _require_file(path)
    items, lists = [], []
    with open(path, 'r', encoding='utf-8') as handle:
        for line_number, raw in enumerate(handle, start=1):
            line = raw.rstrip('\n').rstrip('\r')
            if not line.strip():
                continue
            if line_number == 1 and line.lower().split('\t')[:2] == ['item', 'categories']:
                continue
            if '\t' in line:
                item, rest = line.split('\t', 1)
                categories = re.split(r'[|,]', rest)
            else:
                item, *categories = line.split('|')
            items.append(item.strip())
            lists.append([c.strip() for c in categories if c.strip()])
    names = tuple(sorted({c for cats in lists for c in cats}))
    position = {c: i for i, c in enumerate(names)}
    membership = np.zeros((len(items), len(names)), dtype=np.int8)
    for row, cats in enumerate(lists):
        membership[row, [position[c] for c in cats]] = 1
    return pd.Series(items, dtype=str), names, membership


def load_item_categories(path, config: IngestConfig, items: Optional[IdIndex] = None) -> CategoryCatalog:
    """Category catalog aligned to ``items`` (or to the file's items when None).

    Items absent from ``items`` are ignored before validation, so raw rows for
    items removed by k-core filtering cannot fail the zero-category check.
    """
    path = Path(path)
    if config.format == 'movielens-100k':
        ids, names, membership = _movielens_100k_categories(path, config)
    elif config.format == 'movielens-1m':
        ids, names, membership = _movielens_1m_categories(path)
    else:
        ids, names, membership = _generic_categories(path)

    duplicated = ids.duplicated()
    if duplicated.any():
        raise DataFormatError(f'duplicate item row {ids[duplicated].iloc[0]!r}', path=path)
    expected = config.category_count
    if expected is not None and len(names) != expected:
        raise InvariantViolation(f'Expected {expected} categories, found {len(names)}', stage='ingest')

    row_of = {item: row for row, item in enumerate(ids)}
    if items is None:
        items = IdIndex.from_values(ids)
    missing = [item for item in items.originals if item not in row_of]
    if missing:
        raise InvariantViolation(f'{len(missing)} items have no category row, e.g. {missing[:10]}',
                                 stage='ingest')
    aligned = membership[[row_of[item] for item in items.originals]] if len(items) else \
        np.zeros((0, len(names)), dtype=np.int8)
    empty = np.flatnonzero(aligned.sum(axis=1) == 0)
    if len(empty):
        offenders = [items.original(int(i)) for i in empty[:20]]
        raise InvariantViolation(f'{len(empty)} items have zero categories: {offenders}', stage='ingest')
    logger.info(f'Loaded {len(names)} categories for {len(items)} items')
    return CategoryCatalog(tuple(names), aligned)


class DatasetImporter:
    """Runs the ingestion pipeline and keeps counts for the manifest."""

    def __init__(self, config: IngestConfig):
        self.config = config
        self.results = {
            'raw_interactions': 0,
            'filtered_interactions': 0,
            'train_interactions': 0,
            'test_interactions': 0,
            'warnings': [],
        }

    def build(self) -> Dataset:
        config = self.config
        logger.info(f'Starting ingest: format={config.format}, k_core={config.k_core}, '
                    f'split={config.split}, train_fraction={config.train_fraction}')
        frame = parse_interactions(config)
        self.results['raw_interactions'] = len(frame)
        if config.min_rating is not None:
            frame = frame[frame['rating'] >= config.min_rating]
            logger.info(f'{len(frame)} interactions with rating >= {config.min_rating}')
        if frame.empty:
            raise InvariantViolation('No interactions to ingest', stage='ingest')
        frame = k_core_filter(frame, config.k_core)
        self.results['filtered_interactions'] = len(frame)

        users = IdIndex.from_values(frame['user'])
        items = IdIndex.from_values(frame['item'])
        attributes, warnings = load_user_attributes(config.users_path, config, users)
        self.results['warnings'].extend(warnings)
        catalog = load_item_categories(config.items_path, config, items)

        train, test, warnings = temporal_split(frame, config.train_fraction, config.split)
        self.results['warnings'].extend(warnings)
        self.results['train_interactions'] = len(train)
        self.results['test_interactions'] = len(test)

        combined = pd.concat([train.assign(_train=True), test.assign(_train=False)])
        interactions = Interactions(
            users.dense_many(combined['user']),
            items.dense_many(combined['item']),
            combined['rating'].to_numpy(dtype=float),
            combined['timestamp'].to_numpy(dtype=np.int64),
        )
        dataset = Dataset(users, items, interactions, combined['_train'].to_numpy(), catalog,
                          attributes, manifest={})
        manifest = build_manifest(dataset, config.to_manifest(), self.results)
        logger.info(f'Import completed: {len(users)} users, {len(items)} items, '
                    f'{len(interactions)} interactions, {len(catalog.names)} categories')
        return _with_manifest(dataset, manifest)


def build_dataset(config: IngestConfig) -> Dataset:
    return DatasetImporter(config).build()


def _with_manifest(dataset: Dataset, manifest: dict) -> Dataset:
    return Dataset(dataset.users, dataset.items, dataset.interactions, dataset.is_train,
                   dataset.catalog, dataset.attributes, manifest=manifest)


def build_manifest(dataset: Dataset, ingest_config: dict, results: Optional[dict] = None) -> dict:
    return {
        'counts': {
            'users': dataset.n_users,
            'items': dataset.n_items,
            'interactions': len(dataset.interactions),
            'train': int(dataset.is_train.sum()),
            'test': int((~dataset.is_train).sum()),
            'categories': dataset.catalog.n_categories,
        },
        'categories': list(dataset.catalog.names),
        'attributes': {name: list(attr.labels) for name, attr in dataset.attributes.attributes.items()},
        'ingest': ingest_config,
        'warnings': list((results or {}).get('warnings', [])),
        'fingerprint': dataset_fingerprint(dataset),
    }


def dataset_fingerprint(dataset: Dataset) -> str:
    """Content hash over ids, interactions, split, categories and attributes."""
    digest = hashlib.sha256()
    for table in (dataset.users.originals, dataset.items.originals, dataset.catalog.names):
        digest.update('\x1f'.join(table).encode('utf-8'))
        digest.update(b'\x1e')
    inter = dataset.interactions
    for array in (inter.user, inter.item, np.nan_to_num(inter.rating, nan=-1.0), inter.timestamp,
                  dataset.is_train, dataset.catalog.membership):
        digest.update(np.ascontiguousarray(array).tobytes())
    for name, attr in dataset.attributes.attributes.items():
        digest.update(name.encode('utf-8'))
        digest.update('\x1f'.join(attr.labels).encode('utf-8'))
        digest.update(np.ascontiguousarray(attr.codes).tobytes())
    return digest.hexdigest()


def save_bundle(dataset: Dataset, out_dir) -> Path:
    """Write the canonical bundle: interactions/users/item_categories TSVs + manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    inter = dataset.interactions
    pd.DataFrame({
        'user': [dataset.users.original(int(u)) for u in inter.user],
        'item': [dataset.items.original(int(i)) for i in inter.item],
        'rating': inter.rating,
        'timestamp': inter.timestamp,
        'split': np.where(dataset.is_train, 'train', 'test'),
    }).to_csv(out_dir / 'interactions.tsv', sep='\t', index=False, float_format='%.17g',
              lineterminator='\n')

    users = pd.DataFrame({'user': list(dataset.users.originals)})
    for name, attr in dataset.attributes.attributes.items():
        users[name] = [attr.labels[c] for c in attr.codes]
    users.to_csv(out_dir / 'users.tsv', sep='\t', index=False, lineterminator='\n')

    names = dataset.catalog.names
    pd.DataFrame({
        'item': list(dataset.items.originals),
        'categories': ['|'.join(names[c] for c in np.flatnonzero(row)) for row in dataset.catalog.membership],
    }).to_csv(out_dir / 'item_categories.tsv', sep='\t', index=False, lineterminator='\n')

    manifest = dict(dataset.manifest) or build_manifest(dataset, {})
    with open(out_dir / 'manifest.json', 'w', encoding='utf-8') as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write('\n')
    logger.info(f'Wrote dataset bundle to {out_dir}')
    return out_dir


def load_bundle(bundle_dir) -> Dataset:
    bundle_dir = Path(bundle_dir)
    manifest_path = bundle_dir / 'manifest.json'
    _require_file(manifest_path)
    try:
        with open(manifest_path, 'r', encoding='utf-8') as handle:
            manifest = json.load(handle)
    except json.JSONDecodeError as e:
        raise DataFormatError(f'invalid JSON: {e}', path=manifest_path) from e

    frame = _read_table(bundle_dir / 'interactions.tsv', '\t')
    users_frame = _read_table(bundle_dir / 'users.tsv', '\t')
    items_frame = _read_table(bundle_dir / 'item_categories.tsv', '\t')

    users = IdIndex.from_values(users_frame['user'])
    items = IdIndex.from_values(items_frame['item'])
    names = tuple(manifest['categories'])
    position = {c: i for i, c in enumerate(names)}
    membership = np.zeros((len(items), len(names)), dtype=np.int8)
    for item, cats in zip(items_frame['item'], items_frame['categories']):
        for cat in filter(None, cats.split('|')):
            membership[items.dense(item), position[cat]] = 1

    users_frame = users_frame.set_index('user').loc[list(users.originals)]
    attributes = {}
    for name, labels in manifest['attributes'].items():
        index = {label: i for i, label in enumerate(labels)}
        attributes[name] = Attribute(name, tuple(labels), users_frame[name].map(index).to_numpy())

    ratings = pd.to_numeric(frame['rating'], errors='coerce').to_numpy(dtype=float)
    interactions = Interactions(
        users.dense_many(frame['user']), items.dense_many(frame['item']),
        ratings, frame['timestamp'].astype(np.int64).to_numpy(),
    )
    dataset = Dataset(users, items, interactions, (frame['split'] == 'train').to_numpy(),
                      CategoryCatalog(names, membership), UserAttributes(attributes), manifest=manifest)
    if manifest.get('fingerprint') and manifest['fingerprint'] != dataset_fingerprint(dataset):
        logger.warning(f'Bundle {bundle_dir} does not match its manifest fingerprint')
    return dataset
