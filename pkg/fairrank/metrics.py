"""
Bias metrics (CC, CDCG and their pairwise aggregation over attribute classes)
and accuracy metrics (NDCG@k, HitRatio@k).
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.sparse as sp

from .domain import CategoryCatalog, Interactions, RankedList, UserAttributes
from .exceptions import InvariantViolation, UnknownIdError

logger = logging.getLogger('fairrank')

METRICS = ('CC', 'CDCG')

Lists = Mapping[int, Union[RankedList, Sequence[int]]]


def _items(lists: Lists, user: int) -> np.ndarray:
    try:
        entry = lists[user]
    except KeyError:
        raise UnknownIdError(f'User {user} has no top-k list') from None
    items = entry.items if isinstance(entry, RankedList) else entry
    return np.asarray(items, dtype=np.int64)


def _discounts(length: int, metric: str) -> np.ndarray:
    if metric == 'CC':
        return np.ones(length)
    if metric == 'CDCG':
        return 1.0 / np.log2(np.arange(2, length + 2))
    raise InvariantViolation(f'Unknown bias metric {metric!r}; expected one of {METRICS}')


def user_category_values(users: Iterable[int], lists: Lists, catalog: CategoryCatalog,
                         metric: str = 'CC') -> np.ndarray:
    """Per-user (1/|TopK_u|)·Σ_j d_j·C_{v_j,c}/|C_{v_j}|, one row per user."""
    rows = []
    for user in users:
        items = _items(lists, user)
        if not len(items):
            raise InvariantViolation(f'User {user} has an empty top-k list')
        rows.append(_discounts(len(items), metric) @ catalog.fractions[items] / len(items))
    return np.array(rows).reshape(-1, catalog.n_categories)


def _group_values(users, lists, catalog, metric) -> np.ndarray:
    users = list(users)
    if not users:
        raise InvariantViolation(f'{metric} is undefined for an empty group')
    return user_category_values(users, lists, catalog, metric).mean(axis=0)


def cc(category: int, users: Iterable[int], lists: Lists, catalog: CategoryCatalog) -> float:
    """Category coverage of ``category`` within a user group."""
    return float(_group_values(users, lists, catalog, 'CC')[category])


def cdcg(category: int, users: Iterable[int], lists: Lists, catalog: CategoryCatalog) -> float:
    """Rank-discounted category coverage, log base 2."""
    return float(_group_values(users, lists, catalog, 'CDCG')[category])


@dataclass
class BiasReport:
    attribute: str
    categories: Tuple[str, ...]
    classes: Tuple[str, ...]
    values: Dict[str, np.ndarray]  # metric -> (n_classes, n_categories)
    group_sizes: Dict[str, int]
    excluded: Tuple[str, ...] = ()

    def pairwise(self, metric: str) -> np.ndarray:
        """Per-category Σ over unordered class pairs of |M(c,g1) - M(c,g2)|."""
        table = self.values[metric]
        out = np.zeros(len(self.categories))
        for a, b in itertools.combinations(range(len(self.classes)), 2):
            out += np.abs(table[a] - table[b])
        return out

    def total(self, metric: str) -> float:
        return float(self.pairwise(metric).sum())

    @property
    def cc_bias(self) -> float:
        return self.total('CC')

    @property
    def cdcg_bias(self) -> float:
        return self.total('CDCG')

    def to_json(self) -> dict:
        out = {
            'attribute': self.attribute,
            'categories': list(self.categories),
            'classes': list(self.classes),
            'group_sizes': self.group_sizes,
            'excluded_classes': list(self.excluded),
        }
        for metric in METRICS:
            table = self.values[metric]
            out[metric] = {
                'per_class': {
                    label: {cat: round(float(v), 10) for cat, v in zip(self.categories, row)}
                    for label, row in zip(self.classes, table)
                },
                'pairwise_by_category': {
                    cat: round(float(v), 10) for cat, v in zip(self.categories, self.pairwise(metric))
                },
                'total': round(self.total(metric), 10),
            }
        return out


def bias_report(attribute: str, lists: Lists, attributes: UserAttributes,
                catalog: CategoryCatalog) -> BiasReport:
    """CC and CDCG per (category, class) over the users that have a list."""
    attr = attributes[attribute]
    users = sorted(u for u in lists if len(_items(lists, u)))
    groups: Dict[str, List[int]] = {label: [] for label in attr.labels}
    for user in users:
        groups[attr.value_of(user)].append(user)
    excluded = tuple(label for label, members in groups.items() if not members)
    if excluded:
        logger.warning(f"Attribute '{attribute}': classes {list(excluded)} have no evaluated users "
                       f"and are excluded from the bias totals")
    classes = tuple(label for label in attr.labels if groups[label])
    if len(classes) < 2:
        raise InvariantViolation(
            f"Attribute '{attribute}' needs at least two evaluated classes, found {list(classes)}",
            stage='evaluate')
    values = {}
    for metric in METRICS:
        per_user = user_category_values(users, lists, catalog, metric)
        position = {u: i for i, u in enumerate(users)}
        values[metric] = np.vstack([
            per_user[[position[u] for u in groups[label]]].mean(axis=0) for label in classes
        ])
    return BiasReport(attribute, catalog.names, classes, values,
                      {label: len(groups[label]) for label in classes}, excluded)


def pairwise_bias(metric: str, attribute: str, lists: Lists, attributes: UserAttributes,
                  catalog: CategoryCatalog) -> float:
    if metric not in METRICS:
        raise InvariantViolation(f'Unknown bias metric {metric!r}; expected one of {METRICS}')
    return bias_report(attribute, lists, attributes, catalog).total(metric)


def _eligible(test: Mapping[int, np.ndarray]) -> List[int]:
    users = sorted(u for u, items in test.items() if len(items))
    if not users:
        raise InvariantViolation('No user has a non-empty test set', stage='evaluate')
    return users


def _user_ndcg(items: np.ndarray, relevant: np.ndarray, k: int) -> float:
    items = items[:k]
    gains = np.isin(items, relevant).astype(np.float64)
    discounts = 1.0 / np.log2(np.arange(2, len(items) + 2))
    ideal = 1.0 / np.log2(np.arange(2, min(k, len(relevant)) + 2))
    return float(gains @ discounts / ideal.sum())


def _user_items(lists: Lists, user: int) -> np.ndarray:
    return _items(lists, user) if user in lists else np.empty(0, dtype=np.int64)


def ndcg_at_k(lists: Lists, test: Mapping[int, np.ndarray], k: int) -> float:
    """Mean binary-relevance NDCG@k over users with a non-empty test set."""
    users = _eligible(test)
    return float(np.mean([_user_ndcg(_user_items(lists, u), test[u], k) for u in users]))


def hit_ratio_at_k(lists: Lists, test: Mapping[int, np.ndarray], k: int) -> float:
    """Share of users with a non-empty test set that get at least one test item in the top k."""
    users = _eligible(test)
    hits = [np.isin(_user_items(lists, u)[:k], test[u]).any() for u in users]
    return float(np.mean(hits))


@dataclass
class AccuracyReport:
    k: int
    ndcg: float
    hit_ratio: float
    per_user: Dict[int, Tuple[float, bool]] = field(default_factory=dict, repr=False)

    def to_json(self, user_ids: Sequence[str] = None) -> dict:
        label = (lambda u: user_ids[u]) if user_ids is not None else str
        return {
            'k': self.k,
            'NDCG': round(self.ndcg, 10),
            'HitRatio': round(self.hit_ratio, 10),
            'users': len(self.per_user),
            'per_user': {label(u): {'NDCG': round(n, 10), 'hit': bool(h)}
                         for u, (n, h) in self.per_user.items()},
        }


def accuracy_report(lists: Lists, test: Mapping[int, np.ndarray], k: int) -> AccuracyReport:
    users = _eligible(test)
    per_user = {}
    for user in users:
        items = _user_items(lists, user)
        per_user[user] = (_user_ndcg(items, test[user], k), bool(np.isin(items[:k], test[user]).any()))
    ndcg = float(np.mean([v[0] for v in per_user.values()]))
    hit_ratio = float(np.mean([v[1] for v in per_user.values()]))
    return AccuracyReport(k, ndcg, hit_ratio, per_user)


def training_category_values(train: Interactions, catalog: CategoryCatalog, n_users: int) -> np.ndarray:
    """Unweighted per-user category proportion of training histories (NaN without history)."""
    counts = sp.csr_matrix((np.ones(len(train)), (train.user, train.item)),
                           shape=(n_users, catalog.n_items))
    totals = np.asarray(counts.sum(axis=1)).ravel()
    out = np.full((n_users, catalog.n_categories), np.nan)
    active = totals > 0
    out[active] = np.asarray(counts @ catalog.fractions)[active] / totals[active, None]
    return out


def category_proportions(attribute: str, train: Interactions, original: Lists, fair: Lists,
                         attributes: UserAttributes, catalog: CategoryCatalog) -> pd.DataFrame:
    """Per (class, category) share of training histories, original lists and fair lists."""
    attr = attributes[attribute]
    history = training_category_values(train, catalog, len(attr.codes))
    users = sorted(u for u in original if len(_items(original, u)) and u in fair)
    orig_values = user_category_values(users, original, catalog, 'CC')
    fair_values = user_category_values(users, fair, catalog, 'CC')
    codes = attr.codes[np.asarray(users, dtype=np.int64)]
    rows = []
    for code, label in enumerate(attr.labels):
        members = codes == code
        if not members.any():
            continue
        hist = history[np.asarray(users)[members]]
        hist = np.nanmean(hist, axis=0)
        for c, category in enumerate(catalog.names):
            rows.append({
                'class': label,
                'category': category,
                'training': round(float(hist[c]), 10),
                'original': round(float(orig_values[members, c].mean()), 10),
                'fair': round(float(fair_values[members, c].mean()), 10),
            })
    return pd.DataFrame(rows, columns=['class', 'category', 'training', 'original', 'fair'])
