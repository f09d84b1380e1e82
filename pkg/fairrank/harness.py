"""
End-to-end orchestration: experiments, β/γ sweeps, model selection and the
markdown report.

A run directory is assembled in a hidden sibling directory and moved into
place only when every stage succeeded, so a failed run leaves nothing behind.
"""
import copy
import json
import logging
import os
import shutil
import sys
import tempfile

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import pandas as pd
from django.conf import settings
from django.db import DatabaseError
from django.utils import timezone

from .domain import Dataset, RankedList, ScoreSet
from .exceptions import ConfigError, DataFormatError, FairRankError, IncompleteRunError, UnknownIdError
from .fairness import (CounterfactualProfile, RerankConfig, baseline_lists, profile_for, rerank_all,
                       write_rankings)
from .ingest import FORMATS, IngestConfig, build_dataset, dataset_fingerprint, load_bundle, save_bundle
from .metrics import AccuracyReport, BiasReport, accuracy_report, bias_report, category_proportions
from .recommenders import (MODELS, FactorModel, TrainConfig, export_scores, load_external_scores,
                           top_n_candidates, train_model)

logger = logging.getLogger('fairrank')

PARAMETERS = ('beta', 'gamma')

SWEEP_COLUMNS = ['parameter', 'value', 'attribute', 'beta', 'gamma',
                 'NDCG', 'HitRatio', 'CC-bias', 'CDCG-bias']

SUMMARY_COLUMNS = ['attribute', 'ranking', 'NDCG', 'HitRatio', 'CC-bias', 'CDCG-bias']

REQUIRED_RUN_FILES = ('manifest.json', 'bias_report.json', 'accuracy_report.json')

# Published ML-100K numbers (k=20, γ=0.1) for directional comparison.
PUBLISHED_ML100K = {
    'biased-mf': {
        'original': {'NDCG': 0.0397, 'HitRatio': 0.3924},
        'age': {'NDCG': 0.0423, 'HitRatio': 0.4210, 'CC': (0.1254, 0.0297), 'CDCG': (0.0485, 0.0107)},
        'gender': {'NDCG': 0.0405, 'HitRatio': 0.4019, 'CC': (0.1300, 0.0624), 'CDCG': (0.0507, 0.0166)},
        'occupation': {'NDCG': 0.0430, 'HitRatio': 0.4231, 'CC': (0.1688, 0.0335), 'CDCG': (0.0650, 0.0121)},
    },
    'wmf': {
        'original': {'NDCG': 0.0372, 'HitRatio': 0.3924},
        'age': {'NDCG': 0.0490, 'HitRatio': 0.4708, 'CC': (0.2055, 0.0302), 'CDCG': (0.0745, 0.0109)},
        'gender': {'NDCG': 0.0405, 'HitRatio': 0.4210, 'CC': (0.1888, 0.0409), 'CDCG': (0.0736, 0.0131)},
        'occupation': {'NDCG': 0.0483, 'HitRatio': 0.4719, 'CC': (0.2248, 0.0331), 'CDCG': (0.0830, 0.0112)},
    },
}


def settings_defaults() -> dict:
    """Nested configuration defaults taken from ``settings.FAIRRANK``."""
    conf = settings.FAIRRANK
    return {
        'seed': conf['SEED'],
        'threads': conf['THREADS'],
        'out': None,
        'attributes': None,
        'dataset': {
            'format': 'movielens-100k',
            'dir': str(conf['DATA_DIR']),
            'interactions': None,
            'users': None,
            'items': None,
            'bundle': None,
            'k_core': conf['K_CORE'],
            'split': conf['SPLIT'],
            'train_fraction': conf['TRAIN_FRACTION'],
            'keep_unknown_genre': False,
            'age_edges': list(conf['AGE_EDGES']),
            'min_rating': None,
        },
        'model': {
            'name': conf['MODEL'],
            'scores': None,
            'factors': conf['FACTORS'],
            'epochs': conf['EPOCHS'],
            'als_sweeps': conf['ALS_SWEEPS'],
            'learning_rate': conf['LEARNING_RATE'],
            'regularization': conf['REGULARIZATION'],
            'confidence': conf['CONFIDENCE'],
            'grid_search': False,
            'grid_factors': list(conf['GRID_FACTORS']),
            'grid_regularization': list(conf['GRID_REGULARIZATION']),
        },
        'rerank': {
            'beta': conf['BETA'],
            'gamma': conf['GAMMA'],
            'alpha': conf['ALPHA'],
            'k': conf['K'],
            'top_n': conf['TOP_N'],
            'normalization': conf['NORMALIZATION'],
            'timestamp_mode': conf['TIMESTAMP_MODE'],
            'smoothing': conf['SMOOTHING'],
            'exhaustive_budget': conf['EXHAUSTIVE_BUDGET'],
        },
        'sweep': {
            'beta_grid': list(conf['BETA_GRID']),
            'gamma_grid': list(conf['GAMMA_GRID']),
        },
    }


def load_config_file(path) -> dict:
    """Read a JSON or TOML config file, chosen by suffix."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f'Config file {path} does not exist')
    try:
        if path.suffix == '.toml':
            with open(path, 'rb') as handle:
                return tomllib.load(handle)
        with open(path, 'r', encoding='utf-8') as handle:
            return json.load(handle)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f'Cannot parse config file {path}: {e}') from e


def merge_config(base: Mapping, *layers: Optional[Mapping]) -> dict:
    """Overlay ``layers`` onto ``base``; ``None`` values never override."""
    merged = copy.deepcopy(dict(base))
    for layer in layers:
        for key, value in (layer or {}).items():
            if key not in merged:
                raise ConfigError(f'Unknown configuration key {key!r}')
            if isinstance(merged[key], dict):
                if not isinstance(value, Mapping):
                    raise ConfigError(f'Configuration section {key!r} must be a table')
                merged[key] = merge_config(merged[key], value)
            elif value is not None:
                merged[key] = value
    return merged


def ingest_config(section: Mapping) -> IngestConfig:
    fmt = section['format']
    if fmt not in FORMATS:
        raise ConfigError(f'Unknown dataset format {fmt!r}; expected one of {FORMATS}')
    options = dict(
        k_core=int(section['k_core']),
        split=section['split'],
        train_fraction=float(section['train_fraction']),
        keep_unknown_genre=bool(section['keep_unknown_genre']),
        age_edges=tuple(section['age_edges']),
        min_rating=section['min_rating'],
    )
    base = IngestConfig.for_directory(fmt, section['dir'], **options)
    explicit = {name: Path(section[key]) for name, key in
                (('interactions_path', 'interactions'), ('users_path', 'users'), ('items_path', 'items'))
                if section.get(key)}
    return replace(base, **explicit)


def train_config(section: Mapping, seed: int) -> TrainConfig:
    return TrainConfig(
        factors=int(section['factors']),
        epochs=int(section['epochs']),
        als_sweeps=int(section['als_sweeps']),
        learning_rate=float(section['learning_rate']),
        regularization=float(section['regularization']),
        confidence=float(section['confidence']),
        seed=int(seed),
    )


def rerank_config(section: Mapping) -> RerankConfig:
    top_n = section.get('top_n')
    return RerankConfig(
        beta=float(section['beta']),
        gamma=float(section['gamma']),
        alpha=float(section['alpha']),
        k=int(section['k']),
        n=None if top_n is None else int(top_n),
        normalization=section['normalization'],
        timestamp_mode=section['timestamp_mode'],
        smoothing=float(section['smoothing']),
        exhaustive_budget=int(section['exhaustive_budget']),
    )


def _grid(values, name) -> Tuple[float, ...]:
    grid = tuple(float(v) for v in values)
    if not grid:
        raise ConfigError(f'{name} must not be empty')
    if any(not 0.0 <= v <= 1.0 for v in grid):
        raise ConfigError(f'{name} values must lie in [0, 1], got {list(grid)}')
    return grid


@dataclass(frozen=True)
class ExperimentConfig:
    ingest: Optional[IngestConfig]
    train: TrainConfig
    rerank: RerankConfig
    out_dir: Path
    model: str = 'wmf'
    bundle_dir: Optional[Path] = None
    scores_path: Optional[Path] = None
    attributes: Tuple[str, ...] = ()
    beta_grid: Tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)
    gamma_grid: Tuple[float, ...] = (0.0, 0.1, 0.25, 0.5, 0.75, 1.0)
    grid_search: bool = False
    grid_factors: Tuple[int, ...] = (16, 32, 64)
    grid_regularization: Tuple[float, ...] = (0.01, 0.05, 0.1)
    seed: int = 42
    threads: int = 1

    def __post_init__(self):
        if self.ingest is None and self.bundle_dir is None:
            raise ConfigError('Either dataset files or a dataset bundle must be configured')
        if self.scores_path is None and self.model not in MODELS:
            raise ConfigError(f'Unknown model {self.model!r}; expected one of {MODELS}')
        if self.threads < 1:
            raise ConfigError(f'threads must be >= 1, got {self.threads}')
        object.__setattr__(self, 'out_dir', Path(self.out_dir))
        object.__setattr__(self, 'beta_grid', _grid(self.beta_grid, 'beta grid'))
        object.__setattr__(self, 'gamma_grid', _grid(self.gamma_grid, 'gamma grid'))
        object.__setattr__(self, 'attributes', tuple(self.attributes))
        if self.grid_search and (not self.grid_factors or not self.grid_regularization):
            raise ConfigError('Grid search needs non-empty factor and regularization grids')

    @classmethod
    def from_mapping(cls, data: Mapping) -> 'ExperimentConfig':
        """Build from a nested mapping shaped like :func:`settings_defaults`."""
        data = merge_config(settings_defaults(), data)
        dataset, model = data['dataset'], data['model']
        out = data['out'] or Path(settings.FAIRRANK['RUNS_DIR']) / 'latest'
        return cls(
            ingest=None if dataset['bundle'] else ingest_config(dataset),
            bundle_dir=Path(dataset['bundle']) if dataset['bundle'] else None,
            train=train_config(model, data['seed']),
            rerank=rerank_config(data['rerank']),
            out_dir=Path(out),
            model=model['name'],
            scores_path=Path(model['scores']) if model['scores'] else None,
            attributes=tuple(data['attributes'] or ()),
            beta_grid=tuple(data['sweep']['beta_grid']),
            gamma_grid=tuple(data['sweep']['gamma_grid']),
            grid_search=bool(model['grid_search']),
            grid_factors=tuple(int(v) for v in model['grid_factors']),
            grid_regularization=tuple(float(v) for v in model['grid_regularization']),
            seed=int(data['seed']),
            threads=int(data['threads']),
        )

    def to_json(self) -> dict:
        out = {
            'dataset': self.ingest.to_manifest() if self.ingest else {'bundle': str(self.bundle_dir)},
            'model': self.model if self.scores_path is None else 'external',
            'scores': str(self.scores_path) if self.scores_path else None,
            'train': asdict(self.train),
            'rerank': asdict(self.rerank),
            'attributes': list(self.attributes),
            'beta_grid': list(self.beta_grid),
            'gamma_grid': list(self.gamma_grid),
            'grid_search': self.grid_search,
            'seed': self.seed,
            'threads': self.threads,
        }
        if self.grid_search:
            out['grid_factors'] = list(self.grid_factors)
            out['grid_regularization'] = list(self.grid_regularization)
        return out


def _write_json(path: Path, data) -> Path:
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(data, handle, indent=2, default=str)
        handle.write('\n')
    return path


def _read_json(path: Path) -> dict:
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            return json.load(handle)
    except json.JSONDecodeError as e:
        raise DataFormatError(f'invalid JSON: {e}', path=path, stage='report') from e


def resolve_attributes(dataset: Dataset, requested: Sequence[str] = ()) -> Tuple[str, ...]:
    """Requested attributes, or the per-format defaults present in the dataset."""
    if requested:
        unknown = [name for name in requested if name not in dataset.attributes]
        if unknown:
            raise UnknownIdError(f'Unknown attributes {unknown}; declared: {list(dataset.attributes.names)}')
        return tuple(requested)
    fmt = (dataset.manifest.get('ingest') or {}).get('format')
    defaults = settings.FAIRRANK['DEFAULT_ATTRIBUTES'].get(fmt)
    names = dataset.attributes.names
    return tuple(a for a in defaults if a in names) if defaults else names


def select_model(dataset: Dataset, kind: str, base: TrainConfig, factors: Sequence[int],
                 regularization: Sequence[float], k: int = 20,
                 threads: int = 1) -> Tuple[FactorModel, List[dict]]:
    """Grid search over (d, λ): best HitRatio@k, ties broken by NDCG@k, then grid order."""
    best, best_key, table = None, None, []
    for d in factors:
        for reg in regularization:
            config = replace(base, factors=int(d), regularization=float(reg))
            model = train_model(kind, dataset, config, threads=threads)
            lists = baseline_lists(top_n_candidates(model, dataset, k=k), k)
            report = accuracy_report(lists, dataset.test_items, k)
            table.append({'factors': int(d), 'regularization': float(reg),
                          'NDCG': round(report.ndcg, 10), 'HitRatio': round(report.hit_ratio, 10)})
            key = (report.hit_ratio, report.ndcg)
            logger.info(f'Grid point d={d}, lambda={reg}: HitRatio@{k}={report.hit_ratio:.4f}, '
                        f'NDCG@{k}={report.ndcg:.4f}')
            if best_key is None or key > best_key:
                best, best_key = model, key
    return best, table


class ExperimentRunner:
    """Runs the stages of one experiment; failures carry the stage they happened in."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.results = {'warnings': [], 'grid': []}
        self.dataset: Optional[Dataset] = None
        self.scores: Optional[ScoreSet] = None
        self._profiles: Dict[str, CounterfactualProfile] = {}

    @contextmanager
    def staged(self, stage: str):
        logger.info(f'Stage {stage} started')
        try:
            yield
        except FairRankError as e:
            if e.stage is None:
                e.stage = stage
            raise
        except (OSError, ValueError, KeyError) as e:
            raise FairRankError(str(e), stage=stage) from e
        except Exception as e:
            raise FairRankError(f'{type(e).__name__}: {e}', stage=stage) from e

    def load_dataset(self) -> Dataset:
        with self.staged('ingest'):
            if self.config.bundle_dir is not None:
                self.dataset = load_bundle(self.config.bundle_dir)
            else:
                self.dataset = build_dataset(self.config.ingest)
            self.results['warnings'].extend(self.dataset.manifest.get('warnings', []))
        return self.dataset

    def attributes(self) -> Tuple[str, ...]:
        with self.staged('ingest'):
            return resolve_attributes(self.dataset, self.config.attributes)

    def score(self) -> ScoreSet:
        config = self.config
        with self.staged('train'):
            if config.scores_path is not None:
                self.scores = load_external_scores(config.scores_path, self.dataset, config.rerank.n)
            else:
                if config.grid_search:
                    model, self.results['grid'] = select_model(
                        self.dataset, config.model, config.train, config.grid_factors,
                        config.grid_regularization, config.rerank.k, config.threads)
                else:
                    model = train_model(config.model, self.dataset, config.train, threads=config.threads)
                self.results['selected'] = {'factors': model.config.factors,
                                            'regularization': model.config.regularization}
                self.scores = top_n_candidates(model, self.dataset, config.rerank.n, config.rerank.k)
            self.results['warnings'].extend(self.scores.warnings)
        return self.scores

    def profile(self, attribute: str) -> CounterfactualProfile:
        if attribute not in self._profiles:
            with self.staged('rerank'):
                self._profiles[attribute] = profile_for(self.dataset, attribute, self.config.rerank)
        return self._profiles[attribute]

    def rerank(self, attribute: str, config: RerankConfig, threads: int) -> Dict[int, RankedList]:
        profile = self.profile(attribute)
        with self.staged('rerank'):
            return rerank_all(self.scores, profile, self.dataset.catalog, config, threads)

    def evaluate(self, attribute: str, lists) -> Tuple[BiasReport, AccuracyReport]:
        with self.staged('evaluate'):
            k = self.config.rerank.k
            return (bias_report(attribute, lists, self.dataset.attributes, self.dataset.catalog),
                    accuracy_report(lists, self.dataset.test_items, k))


def _registry_start(kind: str, run_dir: Path, config: ExperimentConfig):
    from .models import ExperimentRun

    try:
        return ExperimentRun.objects.create(kind=kind, run_dir=str(run_dir), config=config.to_json())
    except DatabaseError:
        logger.debug('Run registry unavailable; run not recorded')
        return None


def _registry_finish(run, status: str, dataset_hash: str = '', stage: str = None, error: str = None):
    if run is None:
        return
    run.status = status
    run.stage = stage
    run.error = error[:5000] if error else None
    run.dataset_hash = dataset_hash
    run.finished_at = timezone.now()
    try:
        run.save()
    except DatabaseError:
        logger.debug('Run registry unavailable; run status not recorded')


@contextmanager
def _staging(out_dir: Path):
    """Yield a scratch directory that replaces ``out_dir`` on success."""
    out_dir = Path(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    scratch = Path(tempfile.mkdtemp(prefix=f'.{out_dir.name}-', dir=out_dir.parent))
    try:
        yield scratch
    except BaseException:
        shutil.rmtree(scratch, ignore_errors=True)
        raise
    if out_dir.exists():
        shutil.rmtree(out_dir)
    os.replace(scratch, out_dir)


def _summary_rows(attribute, original_bias, original_acc, fair_bias, fair_acc) -> List[dict]:
    return [
        {'attribute': attribute, 'ranking': ranking, 'NDCG': round(acc.ndcg, 10),
         'HitRatio': round(acc.hit_ratio, 10), 'CC-bias': round(bias.cc_bias, 10),
         'CDCG-bias': round(bias.cdcg_bias, 10)}
        for ranking, bias, acc in (('original', original_bias, original_acc),
                                   ('fair', fair_bias, fair_acc))
    ]


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False, lineterminator='\n')
    return path


def _tracked(kind: str, config: ExperimentConfig, runner: ExperimentRunner, body):
    """Run ``body(scratch)`` inside a staging directory with registry bookkeeping."""
    run = _registry_start(kind, config.out_dir, config)
    try:
        with _staging(config.out_dir) as scratch:
            body(scratch)
    except FairRankError as e:
        logger.error(f'{kind} failed at stage {e.stage}: {e}', exc_info=True)
        _registry_finish(run, 'failed', stage=e.stage, error=str(e))
        raise
    except Exception as e:
        logger.error(f'{kind} failed outside any stage: {e}', exc_info=True)
        _registry_finish(run, 'failed', stage='config', error=str(e))
        raise
    fingerprint = runner.dataset.manifest.get('fingerprint') or dataset_fingerprint(runner.dataset)
    _registry_finish(run, 'completed', dataset_hash=fingerprint)
    return config.out_dir


def _manifest(kind: str, runner: ExperimentRunner, attributes, files) -> dict:
    dataset = runner.dataset
    return {
        'kind': kind,
        'status': 'completed',
        'config': runner.config.to_json(),
        'dataset': {
            'fingerprint': dataset.manifest.get('fingerprint') or dataset_fingerprint(dataset),
            'counts': dataset.manifest.get('counts', {}),
            'ingest': dataset.manifest.get('ingest', {}),
            'categories': list(dataset.catalog.names),
        },
        'attributes': list(attributes),
        'model_selection': runner.results['grid'],
        'selected': runner.results.get('selected'),
        'warnings': runner.results['warnings'],
        'files': sorted(files),
    }


def run_experiment(config: ExperimentConfig) -> Path:
    """Ingest, score, re-rank per attribute, evaluate and write the run directory."""
    runner = ExperimentRunner(config)

    def body(scratch: Path):
        dataset = runner.load_dataset()
        attributes = runner.attributes()
        with runner.staged('ingest'):
            save_bundle(dataset, scratch / 'dataset')
        scores = runner.score()
        k = config.rerank.k
        with runner.staged('train'):
            export_scores(scores, dataset, scratch / 'scores.tsv')
        original = baseline_lists(scores, k)
        with runner.staged('rerank'):
            write_rankings(original, scores, dataset, scratch / 'original.tsv')
        original_acc = None
        bias, accuracy, summary = {}, {}, []
        for attribute in attributes:
            profile = runner.profile(attribute)
            fair = runner.rerank(attribute, config.rerank, config.threads)
            with runner.staged('rerank'):
                profile.save(scratch / f'profile_{attribute}.json')
                write_rankings(fair, scores, dataset, scratch / f'reranked_{attribute}.tsv')
            original_bias, acc = runner.evaluate(attribute, original)
            original_acc = original_acc or acc
            fair_bias, fair_acc = runner.evaluate(attribute, fair)
            with runner.staged('evaluate'):
                bias[attribute] = {'original': original_bias.to_json(), 'fair': fair_bias.to_json()}
                accuracy[attribute] = fair_acc.to_json(dataset.users.originals)
                summary.extend(_summary_rows(attribute, original_bias, original_acc, fair_bias, fair_acc))
                _write_csv(category_proportions(attribute, dataset.train, original, fair,
                                                dataset.attributes, dataset.catalog),
                           scratch / f'category_proportions_{attribute}.csv')
        with runner.staged('evaluate'):
            _write_json(scratch / 'bias_report.json', bias)
            _write_json(scratch / 'accuracy_report.json', {
                'k': k,
                'original': original_acc.to_json(dataset.users.originals) if original_acc else None,
                'fair': accuracy,
            })
            _write_csv(pd.DataFrame(summary, columns=SUMMARY_COLUMNS), scratch / 'report.csv')
            files = [p.name for p in scratch.iterdir()] + ['manifest.json']
            _write_json(scratch / 'manifest.json', _manifest('experiment', runner, attributes, files))
        logger.info(f'Experiment finished: {len(attributes)} attributes, {len(scores)} users')

    return _tracked('experiment', config, runner, body)


def sweep_points(config: ExperimentConfig, parameter: str, cross: bool = False) -> List[Tuple[float, float]]:
    """(β, γ) pairs in output order."""
    if parameter not in PARAMETERS:
        raise ConfigError(f'Sweep parameter must be one of {PARAMETERS}, got {parameter!r}')
    if cross:
        return [(b, g) for g in config.gamma_grid for b in config.beta_grid]
    if parameter == 'beta':
        return [(b, config.rerank.gamma) for b in config.beta_grid]
    return [(config.rerank.beta, g) for g in config.gamma_grid]


def sweep(config: ExperimentConfig, parameter: str = 'beta', cross: bool = False) -> Path:
    """Long-format ``sweep.csv``: one row per grid point per attribute.

    Scores and profiles are computed once and shared by every grid point.
    """
    runner = ExperimentRunner(config)
    points = sweep_points(config, parameter, cross)

    def evaluate_point(attribute, beta, gamma):
        point = replace(config.rerank, beta=beta, gamma=gamma)
        lists = runner.rerank(attribute, point, threads=1)
        bias, acc = runner.evaluate(attribute, lists)
        return {
            'parameter': 'beta x gamma' if cross else parameter,
            'value': beta if (parameter == 'beta' and not cross) else gamma,
            'attribute': attribute,
            'beta': beta,
            'gamma': gamma,
            'NDCG': round(acc.ndcg, 10),
            'HitRatio': round(acc.hit_ratio, 10),
            'CC-bias': round(bias.cc_bias, 10),
            'CDCG-bias': round(bias.cdcg_bias, 10),
        }

    def body(scratch: Path):
        runner.load_dataset()
        attributes = runner.attributes()
        runner.score()
        for attribute in attributes:
            runner.profile(attribute)
        jobs = [(a, b, g) for a in attributes for b, g in points]
        if config.threads > 1:
            with ThreadPoolExecutor(max_workers=config.threads) as pool:
                rows = list(pool.map(lambda job: evaluate_point(*job), jobs))
        else:
            rows = [evaluate_point(*job) for job in jobs]
        with runner.staged('evaluate'):
            _write_csv(pd.DataFrame(rows, columns=SWEEP_COLUMNS), scratch / 'sweep.csv')
            manifest = _manifest('sweep', runner, attributes, ['sweep.csv', 'manifest.json'])
            manifest['sweep'] = {'parameter': parameter, 'cross': cross,
                                 'points': [list(p) for p in points]}
            _write_json(scratch / 'manifest.json', manifest)
        logger.info(f'Sweep finished: {len(rows)} rows')

    _tracked('sweep', config, runner, body)
    return config.out_dir / 'sweep.csv'


def _fmt(value) -> str:
    return '-' if value is None else f'{value:.4f}'


def _markdown_table(header: Sequence[str], rows: Sequence[Sequence]) -> List[str]:
    lines = ['| ' + ' | '.join(header) + ' |', '|' + '|'.join('---' for _ in header) + '|']
    lines.extend('| ' + ' | '.join(str(cell) for cell in row) + ' |' for row in rows)
    return lines


_RESULT_HEADER = ['Attribute', 'NDCG Orig', 'NDCG Fair', 'HitRatio Orig', 'HitRatio Fair',
                  'CC Orig', 'CC Fair', 'CDCG Orig', 'CDCG Fair']


def _published_section(model: str, attributes: Sequence[str]) -> List[str]:
    published = PUBLISHED_ML100K.get(model)
    if not published:
        return []
    rows = []
    for attribute in attributes:
        values = published.get(attribute)
        if not values:
            continue
        rows.append([attribute, _fmt(published['original']['NDCG']), _fmt(values['NDCG']),
                     _fmt(published['original']['HitRatio']), _fmt(values['HitRatio']),
                     _fmt(values['CC'][0]), _fmt(values['CC'][1]),
                     _fmt(values['CDCG'][0]), _fmt(values['CDCG'][1])])
    if not rows:
        return []
    lines = ['', '## Published reference values (ML-100K)', '',
             'Directional comparison only; model hyper-parameters behind these numbers are unreported.', '']
    lines.extend(_markdown_table(_RESULT_HEADER, rows))
    return lines


def emit_report(run_dir) -> Path:
    """Write ``report.md`` and refresh ``report.csv`` from a completed run directory."""
    run_dir = Path(run_dir)
    missing = [name for name in REQUIRED_RUN_FILES if not (run_dir / name).exists()]
    if missing:
        raise IncompleteRunError(f'Run directory {run_dir} is incomplete; missing {missing}')
    manifest = _read_json(run_dir / 'manifest.json')
    if manifest.get('status') != 'completed' or manifest.get('kind') != 'experiment':
        raise IncompleteRunError(f'Run directory {run_dir} does not hold a completed experiment')
    bias = _read_json(run_dir / 'bias_report.json')
    accuracy = _read_json(run_dir / 'accuracy_report.json')
    attributes = manifest['attributes']
    absent = [a for a in attributes if a not in bias or a not in accuracy['fair']
              or not (run_dir / f'category_proportions_{a}.csv').exists()]
    if absent:
        raise IncompleteRunError(f'Run directory {run_dir} lacks results for {absent}')

    config = manifest['config']
    rerank = config['rerank']
    counts = manifest['dataset'].get('counts', {})
    fmt = manifest['dataset'].get('ingest', {}).get('format', 'bundle')
    original = accuracy['original']

    lines = ['# Fair re-ranking report', '']
    lines.append(f"Dataset: {fmt}, {counts.get('users', '?')} users, {counts.get('items', '?')} items, "
                 f"{counts.get('interactions', '?')} interactions "
                 f"(fingerprint {manifest['dataset']['fingerprint'][:12]})")
    lines.append(f"Model: {config['model']}; k={rerank['k']}, beta={rerank['beta']}, gamma={rerank['gamma']}, "
                 f"alpha={rerank['alpha']}, normalization={rerank['normalization']}, "
                 f"timestamps={rerank['timestamp_mode']}")
    lines.extend(['', '## Original vs Fair', ''])

    rows, summary = [], []
    for attribute in attributes:
        fair_acc = accuracy['fair'][attribute]
        orig_bias, fair_bias = bias[attribute]['original'], bias[attribute]['fair']
        rows.append([attribute, _fmt(original['NDCG']), _fmt(fair_acc['NDCG']),
                     _fmt(original['HitRatio']), _fmt(fair_acc['HitRatio']),
                     _fmt(orig_bias['CC']['total']), _fmt(fair_bias['CC']['total']),
                     _fmt(orig_bias['CDCG']['total']), _fmt(fair_bias['CDCG']['total'])])
        for ranking, acc, report in (('original', original, orig_bias), ('fair', fair_acc, fair_bias)):
            summary.append({'attribute': attribute, 'ranking': ranking, 'NDCG': acc['NDCG'],
                            'HitRatio': acc['HitRatio'], 'CC-bias': report['CC']['total'],
                            'CDCG-bias': report['CDCG']['total']})
    lines.extend(_markdown_table(_RESULT_HEADER, rows))
    if fmt == 'movielens-100k':
        lines.extend(_published_section(config['model'], attributes))

    for attribute in attributes:
        table = pd.read_csv(run_dir / f'category_proportions_{attribute}.csv', dtype={'class': str})
        classes = list(dict.fromkeys(table['class']))
        header = ['Category'] + [f'{c} {column}' for c in classes for column in ('training', 'original', 'fair')]
        body = []
        for category, group in table.groupby('category', sort=False):
            by_class = group.set_index('class')
            body.append([category] + [_fmt(by_class.loc[c, column]) for c in classes
                                      for column in ('training', 'original', 'fair')])
        lines.extend(['', f'## Category proportions: {attribute}', ''])
        lines.extend(_markdown_table(header, body))

    warnings = manifest.get('warnings') or []
    if warnings:
        lines.extend(['', '## Warnings', ''])
        lines.extend(f'- {w}' for w in warnings)

    _write_csv(pd.DataFrame(summary, columns=SUMMARY_COLUMNS), run_dir / 'report.csv')
    path = run_dir / 'report.md'
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write('\n'.join(lines) + '\n')
    logger.info(f'Report written to {path}')
    return path
