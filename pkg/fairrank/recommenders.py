"""
Baseline recommenders and candidate generation.

Two native factor models are provided, biased matrix factorization trained
with SGD on explicit ratings and weighted matrix factorization trained with
alternating least squares on implicit confidence weights. Scores produced
elsewhere (deep models) enter through :func:`load_external_scores`.
"""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd
import scipy.linalg
import scipy.sparse as sp

from .domain import Candidates, Dataset, Interactions, ScoreSet, order_candidates
from .exceptions import ConfigError, DataFormatError, InvariantViolation, TrainingDivergedError

logger = logging.getLogger('fairrank')

MODELS = ('biased-mf', 'wmf')


@dataclass(frozen=True)
class TrainConfig:
    factors: int = 32
    epochs: int = 50
    learning_rate: float = 0.005
    regularization: float = 0.05
    confidence: float = 40.0
    als_sweeps: int = 15
    init_scale: float = 0.1
    seed: int = 42
    conditioning_limit: float = 1e12

    def __post_init__(self):
        if self.factors < 1:
            raise ConfigError(f'factors must be >= 1, got {self.factors}')
        for name in ('epochs', 'als_sweeps'):
            if getattr(self, name) < 1:
                raise ConfigError(f'{name} must be >= 1, got {getattr(self, name)}')
        for name in ('learning_rate', 'confidence', 'init_scale'):
            if not getattr(self, name) > 0:
                raise ConfigError(f'{name} must be positive, got {getattr(self, name)}')
        if self.regularization < 0:
            raise ConfigError(f'regularization must be >= 0, got {self.regularization}')


@dataclass(frozen=True, eq=False)
class FactorModel:
    kind: str
    user_factors: np.ndarray
    item_factors: np.ndarray
    user_bias: np.ndarray
    item_bias: np.ndarray
    global_mean: float = 0.0
    loss_history: Tuple[float, ...] = ()
    config: Optional[TrainConfig] = field(default=None, compare=False)

    def __post_init__(self):
        if self.user_factors.shape[1] != self.item_factors.shape[1] or self.user_factors.shape[1] < 1:
            raise InvariantViolation('Factor matrices must share a latent dimension >= 1')
        for array in (self.user_factors, self.item_factors, self.user_bias, self.item_bias):
            if not np.all(np.isfinite(array)):
                raise TrainingDivergedError(f'{self.kind} model has non-finite parameters')

    @property
    def n_users(self):
        return self.user_factors.shape[0]

    @property
    def n_items(self):
        return self.item_factors.shape[0]

    def score_matrix(self, users) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        return (self.user_factors[users] @ self.item_factors.T
                + self.user_bias[users, None] + self.item_bias[None, :] + self.global_mean)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'wb') as handle:
            np.savez(handle, user_factors=self.user_factors, item_factors=self.item_factors,
                     user_bias=self.user_bias, item_bias=self.item_bias,
                     global_mean=np.float64(self.global_mean),
                     loss_history=np.asarray(self.loss_history, dtype=np.float64),
                     kind=np.str_(self.kind),
                     config=np.str_(json.dumps(asdict(self.config) if self.config else {})))
        return path

    @classmethod
    def load(cls, path) -> 'FactorModel':
        path = Path(path)
        if not path.exists():
            raise DataFormatError('model file does not exist', path=path, stage='train')
        with np.load(path, allow_pickle=False) as data:
            config = json.loads(str(data['config']))
            return cls(
                kind=str(data['kind']),
                user_factors=data['user_factors'], item_factors=data['item_factors'],
                user_bias=data['user_bias'], item_bias=data['item_bias'],
                global_mean=float(data['global_mean']),
                loss_history=tuple(data['loss_history'].tolist()),
                config=TrainConfig(**config) if config else None,
            )


def _shape(train: Interactions, n_users, n_items):
    if n_users is None:
        n_users = int(train.user.max()) + 1 if len(train) else 0
    if n_items is None:
        n_items = int(train.item.max()) + 1 if len(train) else 0
    return n_users, n_items


def latest_ratings(train: Interactions) -> pd.DataFrame:
    """One row per (user, item): the latest-timestamp rating."""
    frame = pd.DataFrame({'user': train.user, 'item': train.item,
                          'rating': train.rating, 'timestamp': train.timestamp})
    frame = frame.sort_values(['user', 'item', 'timestamp'], kind='mergesort')
    return frame.drop_duplicates(['user', 'item'], keep='last').reset_index(drop=True)


def train_biased_mf(train: Interactions, config: TrainConfig = TrainConfig(),
                    n_users: Optional[int] = None, n_items: Optional[int] = None) -> FactorModel:
    """SGD on observed ratings: r ≈ μ + b_u + b_i + p_u·q_i with L2 regularization."""
    if len(train) == 0:
        raise InvariantViolation('Cannot train on an empty interaction table', stage='train')
    if np.isnan(train.rating).any():
        raise InvariantViolation('Biased MF needs a rating on every interaction', stage='train')
    n_users, n_items = _shape(train, n_users, n_items)
    cells = latest_ratings(train)
    users = cells['user'].to_numpy()
    items = cells['item'].to_numpy()
    ratings = cells['rating'].to_numpy(dtype=np.float64)

    rng = np.random.default_rng(config.seed)
    P = rng.normal(0.0, config.init_scale, (n_users, config.factors))
    Q = rng.normal(0.0, config.init_scale, (n_items, config.factors))
    bu = np.zeros(n_users)
    bi = np.zeros(n_items)
    mu = float(ratings.mean())
    lr, reg = config.learning_rate, config.regularization

    history = []
    logger.info(f'Training biased MF: {len(ratings)} ratings, d={config.factors}, '
                f'epochs={config.epochs}, lr={lr}, reg={reg}')
    for epoch in range(config.epochs):
        for idx in rng.permutation(len(ratings)):
            u, i = users[idx], items[idx]
            pu, qi = P[u], Q[i]
            err = ratings[idx] - (mu + bu[u] + bi[i] + pu @ qi)
            bu[u] += lr * (err - reg * bu[u])
            bi[i] += lr * (err - reg * bi[i])
            P[u], Q[i] = pu + lr * (err * qi - reg * pu), qi + lr * (err * pu - reg * qi)
        residual = ratings - (mu + bu[users] + bi[items] + np.einsum('ij,ij->i', P[users], Q[items]))
        loss = float(residual @ residual + reg * ((P ** 2).sum() + (Q ** 2).sum() + bu @ bu + bi @ bi))
        if not np.isfinite(loss):
            raise TrainingDivergedError(
                f'Biased MF loss diverged at epoch {epoch + 1}; try a smaller learning rate '
                f'than {lr}')
        history.append(loss)
        logger.debug(f'epoch {epoch + 1}: loss={loss:.6f}')
    logger.info(f'Biased MF finished: loss={history[-1]:.4f}')
    return FactorModel('biased-mf', P, Q, bu, bi, mu, tuple(history), config)


def confidence_matrix(train: Interactions, n_users: int, n_items: int, alpha: float) -> sp.csr_matrix:
    """C - 1 = α·count for observed cells (preference 1), zero elsewhere."""
    counts = sp.coo_matrix(
        (np.ones(len(train)), (train.user, train.item)), shape=(n_users, n_items)
    ).tocsr()
    counts.sum_duplicates()
    counts.sort_indices()
    return (counts * alpha).tocsr()


def _solve_rows(rows, other, gram, extra, reg, out):
    """Exact ridge solves for ``rows`` of one ALS half-step."""
    k = other.shape[1]
    regI = reg * np.eye(k)
    for row in rows:
        start, end = extra.indptr[row], extra.indptr[row + 1]
        if start == end:
            out[row] = 0.0
            continue
        cols = extra.indices[start:end]
        c_minus_1 = extra.data[start:end]
        Y = other[cols]
        A = gram + (Y.T * c_minus_1) @ Y + regI
        b = Y.T @ (c_minus_1 + 1.0)
        out[row] = scipy.linalg.solve(A, b, assume_a='pos')


def _half_step(extra: sp.csr_matrix, other: np.ndarray, reg: float, threads: int,
               limit: float) -> np.ndarray:
    gram = other.T @ other
    base = gram + reg * np.eye(other.shape[1])
    condition = np.linalg.cond(base)
    if condition > limit:
        logger.warning(f'ALS normal equations are ill-conditioned (cond={condition:.3g})')
    out = np.zeros((extra.shape[0], other.shape[1]))
    chunks = np.array_split(np.arange(extra.shape[0]), max(1, threads))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda rows: _solve_rows(rows, other, gram, extra, reg, out), chunks))
    else:
        _solve_rows(chunks[0], other, gram, extra, reg, out)
    return out


def wmf_objective(X: np.ndarray, Y: np.ndarray, extra: sp.csr_matrix, reg: float) -> float:
    """Σ c_ui (p_ui - x_u·y_i)² + λ(‖X‖² + ‖Y‖²)."""
    dense_part = float(np.sum((X.T @ X) * (Y.T @ Y)))
    coo = extra.tocoo()
    pred = np.einsum('ij,ij->i', X[coo.row], Y[coo.col])
    correction = float(np.sum((coo.data + 1.0) * (1.0 - pred) ** 2 - pred ** 2))
    return dense_part + correction + reg * float((X ** 2).sum() + (Y ** 2).sum())


def train_wmf(train: Interactions, config: TrainConfig = TrainConfig(),
              n_users: Optional[int] = None, n_items: Optional[int] = None,
              threads: int = 1) -> FactorModel:
    """Implicit-feedback ALS; every half-step solves its ridge problem exactly."""
    if len(train) == 0:
        raise InvariantViolation('Cannot train on an empty interaction table', stage='train')
    n_users, n_items = _shape(train, n_users, n_items)
    extra = confidence_matrix(train, n_users, n_items, config.confidence)
    extra_t = extra.T.tocsr()
    extra_t.sort_indices()

    rng = np.random.default_rng(config.seed)
    X = np.zeros((n_users, config.factors))
    Y = rng.normal(0.0, config.init_scale, (n_items, config.factors))
    reg = config.regularization
    if reg <= 0:
        logger.warning('WMF without regularization; normal equations may be singular')

    history = []
    logger.info(f'Training WMF: {extra.nnz} cells, d={config.factors}, sweeps={config.als_sweeps}, '
                f'alpha={config.confidence}, reg={reg}')
    for sweep in range(config.als_sweeps):
        X = _half_step(extra, Y, reg, threads, config.conditioning_limit)
        Y = _half_step(extra_t, X, reg, threads, config.conditioning_limit)
        objective = wmf_objective(X, Y, extra, reg)
        if not np.isfinite(objective):
            raise TrainingDivergedError(f'WMF objective became non-finite at sweep {sweep + 1}')
        history.append(objective)
        logger.debug(f'sweep {sweep + 1}: objective={objective:.6f}')
    logger.info(f'WMF finished: objective={history[-1]:.4f}')
    return FactorModel('wmf', X, Y, np.zeros(n_users), np.zeros(n_items), 0.0, tuple(history), config)


def train_model(kind: str, dataset: Dataset, config: TrainConfig, threads: int = 1) -> FactorModel:
    if kind == 'biased-mf':
        return train_biased_mf(dataset.train, config, dataset.n_users, dataset.n_items)
    if kind == 'wmf':
        return train_wmf(dataset.train, config, dataset.n_users, dataset.n_items, threads=threads)
    raise ConfigError(f'Unknown model {kind!r}; expected one of {MODELS}')


def score_candidates(model: FactorModel, user: int) -> np.ndarray:
    """Predicted score of every item for one user."""
    return model.score_matrix([user])[0]


def _truncate(user, scores, seen, n, warnings) -> Optional[Candidates]:
    mask = np.ones(len(scores), dtype=bool)
    if seen is not None:
        mask[seen] = False
    items = np.flatnonzero(mask)
    if not len(items):
        message = f'User {user} has interacted with every item; no candidates, excluded from re-ranking'
        logger.warning(message)
        warnings.append(message)
        return None
    if np.isnan(scores[items]).any():
        raise InvariantViolation(f'User {user} has NaN scores', stage='score')
    ranked = order_candidates(items, scores[items])
    return Candidates(ranked.items[:n], ranked.scores[:n])


def top_n_candidates(model: FactorModel, dataset: Dataset, n: Optional[int] = None,
                     k: Optional[int] = None, batch_size: int = 1024) -> ScoreSet:
    """TopN_u for every user: unseen items by descending score, ties by item index."""
    n = dataset.n_items if n is None else n
    if k is not None and n < k:
        raise ConfigError(f'top-n ({n}) must be >= k ({k})')
    if model.n_users != dataset.n_users or model.n_items != dataset.n_items:
        raise InvariantViolation('Model shape does not match the dataset', stage='score')
    seen = dataset.train_items
    warnings = []
    candidates = {}
    users = np.arange(dataset.n_users)
    for start in range(0, len(users), batch_size):
        batch = users[start:start + batch_size]
        matrix = model.score_matrix(batch)
        for row, user in enumerate(batch):
            found = _truncate(int(user), matrix[row], seen.get(int(user)), n, warnings)
            if found is not None:
                candidates[int(user)] = found
    logger.info(f'Scored {len(candidates)} users, top-n={n}')
    return ScoreSet(candidates, tuple(warnings))


def export_scores(scores: ScoreSet, dataset: Dataset, path) -> Path:
    """Sparse TSV export ``user \\t item \\t score`` with original ids."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows_user, rows_item, rows_score = [], [], []
    for user, (items, values) in scores.candidates.items():
        original = dataset.users.original(user)
        rows_user.extend([original] * len(items))
        rows_item.extend(dataset.items.original(int(i)) for i in items)
        rows_score.extend(values.tolist())
    pd.DataFrame({'user': rows_user, 'item': rows_item, 'score': rows_score}).to_csv(
        path, sep='\t', index=False, float_format='%.17g', lineterminator='\n')
    logger.info(f'Exported {len(rows_score)} scores to {path}')
    return path


def export_dense_scores(model: FactorModel, dataset: Dataset, path) -> Path:
    """Dense float64 matrix plus a JSON header (shape, dtype, id maps)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data_path = path.with_suffix('.bin')
    matrix = np.ascontiguousarray(model.score_matrix(np.arange(dataset.n_users)), dtype='<f8')
    matrix.tofile(data_path)
    header = {
        'shape': list(matrix.shape),
        'dtype': '<f8',
        'data': data_path.name,
        'users': list(dataset.users.originals),
        'items': list(dataset.items.originals),
    }
    with open(path.with_suffix('.json'), 'w', encoding='utf-8') as handle:
        json.dump(header, handle, indent=2)
        handle.write('\n')
    return path.with_suffix('.json')


def _load_dense(path: Path, dataset: Dataset, n: int) -> ScoreSet:
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            header = json.load(handle)
        shape = tuple(header['shape'])
        matrix = np.fromfile(path.parent / header['data'], dtype=header.get('dtype', '<f8'))
    except (OSError, KeyError, ValueError) as e:
        raise DataFormatError(f'invalid dense score file: {e}', path=path, stage='score') from e
    if matrix.size != shape[0] * shape[1] or len(header['users']) != shape[0] \
            or len(header['items']) != shape[1]:
        raise DataFormatError('dense score header does not match the data', path=path, stage='score')
    matrix = matrix.reshape(shape)
    if np.isnan(matrix).any():
        row = int(np.flatnonzero(np.isnan(matrix).any(axis=1))[0])
        raise DataFormatError(f'NaN score for user {header["users"][row]!r}', path=path, stage='score')
    try:
        item_cols = dataset.items.dense_many(header['items'])
        user_rows = dataset.users.dense_many(header['users'])
    except KeyError as e:
        raise DataFormatError(f'unknown id {e}', path=path, stage='score') from e
    seen = dataset.train_items
    warnings, candidates = [], {}
    for row, user in sorted(enumerate(user_rows), key=lambda pair: pair[1]):
        scores = np.full(dataset.n_items, np.nan)
        scores[item_cols] = matrix[row]
        available = np.flatnonzero(~np.isnan(scores))
        excluded = np.setdiff1d(np.arange(dataset.n_items), available)
        hidden = np.union1d(excluded, seen.get(int(user), np.empty(0, dtype=np.int64))).astype(np.int64)
        found = _truncate(int(user), np.nan_to_num(scores, nan=-np.inf), hidden, n, warnings)
        if found is not None:
            candidates[int(user)] = found
    return ScoreSet(candidates, tuple(warnings))


def _is_header(row) -> bool:
    # 'nan' parses as a float, so a NaN first row is data and is rejected below
    try:
        float(row['score'])
    except ValueError:
        return True
    return False


def load_external_scores(path, dataset: Dataset, n: Optional[int] = None) -> ScoreSet:
    """Score file -> validated ScoreSet (train items removed, truncated to N).

    ``*.json`` selects the dense binary format; anything else is read as a
    ``user \\t item \\t score`` TSV with an optional header row.
    """
    path = Path(path)
    if not path.exists():
        raise DataFormatError('score file does not exist', path=path, stage='score')
    n = dataset.n_items if n is None else n
    if path.suffix == '.json':
        return _load_dense(path, dataset, n)

    try:
        frame = pd.read_csv(path, sep='\t', header=None, names=['user', 'item', 'score'],
                            dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        frame = pd.DataFrame(columns=['user', 'item', 'score'])
    except pd.errors.ParserError as e:
        raise DataFormatError(f'malformed score file: {e}', path=path, stage='score') from e
    offset = 1
    if len(frame) and _is_header(frame.iloc[0]):
        frame, offset = frame.iloc[1:], 2

    user_ids, item_ids, values = [], [], []
    for line, (user, item, score) in enumerate(frame.itertuples(index=False), start=offset):
        if user not in dataset.users:
            raise DataFormatError(f'unknown user {user!r}', path=path, line=line, stage='score')
        if item not in dataset.items:
            raise DataFormatError(f'unknown item {item!r}', path=path, line=line, stage='score')
        try:
            value = float(score)
        except ValueError:
            raise DataFormatError(f'non-numeric score {score!r}', path=path, line=line,
                                  stage='score') from None
        if np.isnan(value):
            raise DataFormatError('NaN score', path=path, line=line, stage='score')
        user_ids.append(dataset.users.dense(user))
        item_ids.append(dataset.items.dense(item))
        values.append(value)

    table = pd.DataFrame({'user': user_ids, 'item': item_ids, 'score': values}, dtype=object)
    if table.duplicated(['user', 'item']).any():
        first = table[table.duplicated(['user', 'item'])].iloc[0]
        raise DataFormatError(f'duplicate score for user {dataset.users.original(int(first["user"]))!r}, '
                              f'item {dataset.items.original(int(first["item"]))!r}', path=path, stage='score')

    seen = dataset.train_items
    candidates: Dict[int, Candidates] = {}
    dropped = 0
    for user, group in table.groupby('user', sort=True):
        items = group['item'].to_numpy(dtype=np.int64)
        scores = group['score'].to_numpy(dtype=np.float64)
        keep = ~np.isin(items, seen.get(int(user), np.empty(0, dtype=np.int64)))
        dropped += int((~keep).sum())
        if keep.any():
            ranked = order_candidates(items[keep], scores[keep])
            candidates[int(user)] = Candidates(ranked.items[:n], ranked.scores[:n])
    if dropped:
        logger.info(f'Dropped {dropped} external scores for training items')
    logger.info(f'Loaded external scores for {len(candidates)} users from {path}')
    return ScoreSet(candidates)
