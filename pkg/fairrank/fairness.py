"""
Counterfactually fair, category-aware re-ranking.

Each user's list is steered towards o(·|s_u), the average training-history
category distribution of the users who do NOT share the user's sensitive
attribute value. The re-ranker greedily maximizes

    (1 - β)·rel(I, u) + β·Σ_c o(c|s_u)·log Σ_j j^(-γ)·r̃(c|v_j)

with r̃(c|v) = (1 - α)·C_{v,c}/|C_v| + α·o(c|s_u). The log-sum reward is a
submodular surrogate of the KL penalty between o and the list's category
proportions, so the greedy keeps the 1 - 1/e approximation guarantee.
"""
import itertools
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.special import rel_entr

from .domain import Candidates, CategoryCatalog, Dataset, Interactions, RankedList, ScoreSet, UserAttributes
from .exceptions import (BudgetExceededError, ConfigError, DataFormatError, InvariantViolation,
                         UnknownIdError)

logger = logging.getLogger('fairrank')

NORMALIZATIONS = ('minmax', 'global', 'none')
TIMESTAMP_MODES = ('raw', 'minmax-recency')

# A CategoryDistribution is a 1-d float array over the catalog's categories.
CategoryDistribution = np.ndarray


@dataclass(frozen=True)
class RerankConfig:
    beta: float = 0.5
    gamma: float = 0.1
    alpha: float = 0.01
    k: int = 20
    n: Optional[int] = None
    normalization: str = 'minmax'
    smoothing: float = 1e-6
    timestamp_mode: str = 'raw'
    recency_floor: float = 0.01
    exhaustive_budget: int = 10 ** 6

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f'beta must lie in [0, 1], got {self.beta}')
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f'gamma must lie in [0, 1], got {self.gamma}')
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f'alpha must lie in (0, 1), got {self.alpha}')
        if self.k < 1:
            raise ConfigError(f'k must be >= 1, got {self.k}')
        if self.n is not None and self.n < self.k:
            raise ConfigError(f'top-n ({self.n}) must be >= k ({self.k})')
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f'normalization must be one of {NORMALIZATIONS}, got {self.normalization!r}')
        if self.timestamp_mode not in TIMESTAMP_MODES:
            raise ConfigError(f'timestamp_mode must be one of {TIMESTAMP_MODES}, got {self.timestamp_mode!r}')
        if not self.smoothing > 0:
            raise ConfigError(f'smoothing must be positive, got {self.smoothing}')
        if not 0.0 < self.recency_floor <= 1.0:
            raise ConfigError(f'recency_floor must lie in (0, 1], got {self.recency_floor}')


def _interaction_weights(train: Interactions, mode: str, floor: float) -> np.ndarray:
    weights = train.timestamp.astype(np.float64)
    if mode == 'raw' or not len(weights):
        return weights
    frame = pd.DataFrame({'user': train.user, 't': weights})
    low = frame.groupby('user')['t'].transform('min').to_numpy()
    high = frame.groupby('user')['t'].transform('max').to_numpy()
    span = high - low
    scaled = np.divide(weights - low, span, out=np.ones_like(weights), where=span > 0)
    return floor + (1.0 - floor) * scaled


def history_distributions(train: Interactions, catalog: CategoryCatalog, n_users: int,
                          mode: str = 'raw', floor: float = 0.01) -> np.ndarray:
    """m(c|u) for every user (rows of users without history are NaN)."""
    if mode not in TIMESTAMP_MODES:
        raise ConfigError(f'timestamp_mode must be one of {TIMESTAMP_MODES}, got {mode!r}')
    weights = _interaction_weights(train, mode, floor)
    W = sp.csr_matrix((weights, (train.user, train.item)), shape=(n_users, catalog.n_items))
    counts = sp.csr_matrix((np.ones(len(train)), (train.user, train.item)),
                           shape=(n_users, catalog.n_items))
    totals = np.asarray(W.sum(axis=1)).ravel()
    has_history = np.asarray(counts.sum(axis=1)).ravel() > 0

    zero_weight = has_history & (totals <= 0)
    if zero_weight.any():
        logger.warning(f'{int(zero_weight.sum())} users have all-zero timestamp weights; '
                       f'using uniform weights for them')
        W = W.tolil()
        uniform = counts.tolil()
        for user in np.flatnonzero(zero_weight):
            W.rows[user], W.data[user] = uniform.rows[user], uniform.data[user]
        W = W.tocsr()
        totals = np.asarray(W.sum(axis=1)).ravel()

    weighted = np.asarray(W @ catalog.fractions)
    out = np.full((n_users, catalog.n_categories), np.nan)
    out[has_history] = weighted[has_history] / totals[has_history, None]
    return out


def history_distribution(user: int, train: Interactions, catalog: CategoryCatalog,
                         mode: str = 'raw', floor: float = 0.01) -> CategoryDistribution:
    """m(c|u): timestamp-weighted category proportion of one user's training history."""
    mask = train.user == user
    if not mask.any():
        raise InvariantViolation(f'User {user} has no training interactions', stage='rerank')
    own = train.select(mask)
    local = Interactions(np.zeros(len(own)), own.item, own.rating, own.timestamp)
    return history_distributions(local, catalog, 1, mode, floor)[0]


def smooth(distribution: np.ndarray, constant: float) -> np.ndarray:
    """Add a small constant to every entry and renormalize."""
    shifted = np.asarray(distribution, dtype=np.float64) + constant
    return shifted / shifted.sum()


@dataclass(frozen=True, eq=False)
class CounterfactualProfile:
    """o(·|s) for every class s of one attribute, built from training data."""

    attribute: str
    categories: Tuple[str, ...]
    labels: Tuple[str, ...]
    distributions: np.ndarray  # (n_classes, n_categories)
    user_codes: np.ndarray
    smoothing: float = 1e-6
    timestamp_mode: str = 'raw'

    def __post_init__(self):
        distributions = np.array(self.distributions, dtype=np.float64)
        distributions.setflags(write=False)
        if distributions.shape != (len(self.labels), len(self.categories)):
            raise InvariantViolation('Profile shape does not match labels and categories')
        if (distributions <= 0).any():
            raise InvariantViolation('Profile distributions must be strictly positive')
        object.__setattr__(self, 'distributions', distributions)

    def for_class(self, label: str) -> CategoryDistribution:
        try:
            return self.distributions[self.labels.index(label)]
        except ValueError:
            raise UnknownIdError(f'Profile for {self.attribute!r} has no class {label!r}') from None

    def target(self, user: int) -> CategoryDistribution:
        """o(·|s_u) for one user."""
        if not 0 <= user < len(self.user_codes):
            raise UnknownIdError(f'User {user} is absent from the {self.attribute!r} attribute map')
        return self.distributions[int(self.user_codes[user])]

    def to_json(self) -> dict:
        return {
            'attribute': self.attribute,
            'categories': list(self.categories),
            'smoothing': self.smoothing,
            'timestamp_mode': self.timestamp_mode,
            'classes': {label: row.tolist() for label, row in zip(self.labels, self.distributions)},
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as handle:
            json.dump(self.to_json(), handle, indent=2)
            handle.write('\n')
        return path


def load_profile(path, attributes: UserAttributes) -> CounterfactualProfile:
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            data = json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        raise DataFormatError(f'cannot read profile: {e}', path=path, stage='rerank') from e
    attribute = attributes[data['attribute']]
    missing = set(attribute.labels) - set(data['classes'])
    if missing:
        raise InvariantViolation(f'Profile {path} lacks classes {sorted(missing)}', stage='rerank')
    return CounterfactualProfile(
        attribute=data['attribute'],
        categories=tuple(data['categories']),
        labels=attribute.labels,
        distributions=np.array([data['classes'][label] for label in attribute.labels]),
        user_codes=attribute.codes,
        smoothing=data.get('smoothing', 1e-6),
        timestamp_mode=data.get('timestamp_mode', 'raw'),
    )


def build_counterfactual_profile(train: Interactions, attributes: UserAttributes, attribute: str,
                                 catalog: CategoryCatalog, config: RerankConfig = RerankConfig()
                                 ) -> CounterfactualProfile:
    """o(c|s) = mean of m(c|u) over the users whose class is not s, then smoothed."""
    attr = attributes[attribute]
    n_users = len(attr.codes)
    histories = history_distributions(train, catalog, n_users, config.timestamp_mode,
                                      config.recency_floor)
    active = ~np.isnan(histories).any(axis=1)
    codes = attr.codes[active]
    present = np.unique(codes)
    if len(present) < 2:
        raise InvariantViolation(
            f'Attribute {attribute!r} needs at least two classes with training users; '
            f'found {[attr.labels[c] for c in present]}', stage='rerank')

    rows = []
    for code, label in enumerate(attr.labels):
        complement = histories[active][codes != code]
        if not len(complement):
            raise InvariantViolation(f'Class {label!r} of {attribute!r} has an empty complement set',
                                     stage='rerank')
        rows.append(smooth(complement.mean(axis=0), config.smoothing))
    logger.info(f"Built counterfactual profile for '{attribute}' over {int(active.sum())} users, "
                f"{len(attr.labels)} classes")
    return CounterfactualProfile(attribute, catalog.names, attr.labels, np.vstack(rows), attr.codes,
                                 config.smoothing, config.timestamp_mode)


def rank_weights(length: int, gamma: float) -> np.ndarray:
    """j^(-γ) for ranks j = 1..length."""
    return np.arange(1, length + 1, dtype=np.float64) ** -gamma


def recommended_category_proportion(items: Sequence[int], catalog: CategoryCatalog,
                                    gamma: float) -> CategoryDistribution:
    """r(c|u,I): rank-discounted category proportion of a list."""
    if isinstance(items, RankedList):
        items = items.items
    items = np.asarray(items, dtype=np.int64)
    if not len(items):
        raise InvariantViolation('Cannot compute category proportions of an empty list', stage='rerank')
    weights = rank_weights(len(items), gamma)
    return weights @ catalog.fractions[items] / weights.sum()


def kl_divergence(o: CategoryDistribution, r: CategoryDistribution, alpha: float) -> float:
    """D(o ‖ r̃) with r̃ = (1-α)·r + α·o, natural log."""
    o = np.asarray(o, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if o.shape != r.shape:
        raise InvariantViolation(f'Distribution shapes differ: {o.shape} vs {r.shape}')
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f'alpha must lie in (0, 1), got {alpha}')
    r_tilde = (1.0 - alpha) * r + alpha * o
    return max(0.0, float(rel_entr(o, r_tilde).sum()))


def fairness_value(items: Sequence[int], target: CategoryDistribution, catalog: CategoryCatalog,
                   gamma: float, alpha: float) -> float:
    """Σ_c o(c)·log Σ_j j^(-γ)·r̃(c|v_j) for a list in rank order."""
    items = np.asarray(items, dtype=np.int64)
    if not len(items):
        return -math.inf
    r_tilde = (1.0 - alpha) * catalog.fractions[items] + alpha * target
    inner = rank_weights(len(items), gamma) @ r_tilde
    return float(np.log(inner) @ target)


def minmax(values: np.ndarray) -> np.ndarray:
    """Scale to [0, 1]; a constant pool maps to 0.5."""
    values = np.asarray(values, dtype=np.float64)
    low, high = values.min(), values.max()
    if high == low:
        return np.full_like(values, 0.5)
    return (values - low) / (high - low)


def _relevance_scores(candidates: Candidates, normalization: str) -> np.ndarray:
    if normalization == 'none':
        return np.asarray(candidates.scores, dtype=np.float64)
    return minmax(candidates.scores)


def objective_value(items: Sequence[int], user: int, candidates: Candidates,
                    profile: CounterfactualProfile, catalog: CategoryCatalog,
                    config: RerankConfig) -> float:
    """(1-β)·rel(I,u) + β·fairness for a list evaluated in the given order.

    With ``minmax`` or ``global`` normalization the relevance term sums scores
    min-max scaled over the user's candidate pool. The fairness term is never
    rescaled here: the per-step scaling of ``minmax`` belongs to the greedy
    selection rule and has no list-level counterpart.
    """
    if isinstance(items, RankedList):
        items = items.items
    position = {int(v): i for i, v in enumerate(candidates.items)}
    missing = [v for v in items if int(v) not in position]
    if missing:
        raise UnknownIdError(f'Items {missing} are not candidates of user {user}')
    relevance = _relevance_scores(candidates, config.normalization)
    rel = float(sum(relevance[position[int(v)]] for v in items))
    if config.beta == 0.0:
        return rel
    fair = fairness_value(items, profile.target(user), catalog, config.gamma, config.alpha)
    if config.beta == 1.0:
        return fair
    return (1.0 - config.beta) * rel + config.beta * fair


def greedy_rerank(user: int, candidates: Candidates, profile: CounterfactualProfile,
                  catalog: CategoryCatalog, config: RerankConfig) -> RankedList:
    """Greedy fair top-k selection.

    At step t the candidate is scored as if placed at rank t + 1. Ties go to
    the higher raw score, then the lower item index, which is the candidate
    order of the score set.

    With ``global`` or ``none`` normalization and gamma = 0 each step takes the
    largest marginal gain of :func:`objective_value`, so the (1 - 1/e) bound
    holds relative to the worst k-set. ``minmax`` compares per-step rescaled
    gains and usually, but not always, meets it.
    """
    target = profile.target(user)
    items = np.asarray(candidates.items, dtype=np.int64)
    if not len(items):
        return RankedList(user, ())
    beta = config.beta
    relevance = _relevance_scores(candidates, 'none' if config.normalization == 'minmax'
                                  else config.normalization)
    r_tilde = (1.0 - config.alpha) * catalog.fractions[items] + config.alpha * target

    remaining = np.arange(len(items))
    accumulated = np.zeros(len(target))
    chosen = []
    for step in range(min(config.k, len(items))):
        weight = (step + 1.0) ** -config.gamma
        rel = relevance[remaining]
        if beta > 0.0:
            fair = np.log(accumulated + weight * r_tilde[remaining]) @ target
        else:
            fair = np.zeros(len(remaining))
        if config.normalization == 'minmax':
            rel, fair = minmax(rel), minmax(fair)
        combined = (1.0 - beta) * rel + beta * fair
        best = int(np.argmax(combined))
        pick = remaining[best]
        chosen.append(int(items[pick]))
        accumulated += weight * r_tilde[pick]
        remaining = np.delete(remaining, best)
    return RankedList(user, tuple(chosen))


class ExhaustiveResult(NamedTuple):
    ranking: RankedList
    best_value: float
    worst_value: float
    evaluated: int


def exhaustive_rerank(user: int, candidates: Candidates, profile: CounterfactualProfile,
                      catalog: CategoryCatalog, config: RerankConfig) -> ExhaustiveResult:
    """Brute-force argmax of :func:`objective_value` over all k-subsets.

    Each subset is evaluated in candidate order (descending score). Used as a
    test oracle for the greedy re-ranker.
    """
    size = min(config.k, len(candidates.items))
    total = math.comb(len(candidates.items), size)
    if total > config.exhaustive_budget:
        raise BudgetExceededError(
            f'{total} subsets exceed the exhaustive budget of {config.exhaustive_budget}')
    best, best_value, worst_value = None, -math.inf, math.inf
    for subset in itertools.combinations(candidates.items.tolist(), size):
        value = objective_value(subset, user, candidates, profile, catalog, config)
        if value > best_value:
            best, best_value = subset, value
        worst_value = min(worst_value, value)
    return ExhaustiveResult(RankedList(user, tuple(best or ())), best_value, worst_value, total)


def rerank_all(scores: ScoreSet, profile: CounterfactualProfile, catalog: CategoryCatalog,
               config: RerankConfig, threads: int = 1) -> Dict[int, RankedList]:
    """Greedy re-ranking of every user in ``scores``; output order is by user."""
    users = scores.users()

    def work(user):
        return greedy_rerank(user, scores[user], profile, catalog, config)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            lists = list(pool.map(work, users))
    else:
        lists = [work(user) for user in users]
    logger.info(f"Re-ranked {len(lists)} users for '{profile.attribute}' "
                f"(beta={config.beta}, gamma={config.gamma}, k={config.k})")
    return {ranked.user: ranked for ranked in lists}


def baseline_lists(scores: ScoreSet, k: int) -> Dict[int, RankedList]:
    """The Original ranking: top-k by score."""
    return {user: RankedList(user, items) for user, items in scores.top_k(k).items()}


def profile_for(dataset: Dataset, attribute: str, config: RerankConfig) -> CounterfactualProfile:
    return build_counterfactual_profile(dataset.train, dataset.attributes, attribute,
                                        dataset.catalog, config)


def write_rankings(rankings: Mapping[int, RankedList], scores: ScoreSet, dataset: Dataset, path) -> Path:
    """``user, rank, item, raw_score`` TSV with original ids."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    for user in sorted(rankings):
        candidates = scores[user]
        lookup = dict(zip(candidates.items.tolist(), candidates.scores.tolist()))
        for rank, item in enumerate(rankings[user].items, start=1):
            rows.append((dataset.users.original(user), rank, dataset.items.original(item), lookup[item]))
    pd.DataFrame(rows, columns=['user', 'rank', 'item', 'raw_score']).to_csv(
        path, sep='\t', index=False, float_format='%.17g', lineterminator='\n')
    return path


def read_rankings(path, dataset: Dataset) -> Dict[int, RankedList]:
    path = Path(path)
    if not path.exists():
        raise DataFormatError('ranking file does not exist', path=path, stage='evaluate')
    frame = pd.read_csv(path, sep='\t', dtype={'user': str, 'item': str})
    out = {}
    for user, group in frame.sort_values(['user', 'rank'], kind='mergesort').groupby('user', sort=False):
        dense = dataset.users.dense(user)
        out[dense] = RankedList(dense, tuple(dataset.items.dense_many(group['item']).tolist()))
    return dict(sorted(out.items()))
