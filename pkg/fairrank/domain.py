"""
Core immutable data model shared by every other module.

Users, items and categories are addressed by dense integer indices assigned
at ingestion; the original string identifiers stay in :class:`IdIndex` side
tables so reports can print them. All arrays held by these types are marked
read-only, which makes the values safe to share between worker threads.
"""
import logging
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, Iterator, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .exceptions import InvariantViolation, UnknownIdError

logger = logging.getLogger('fairrank')


def _frozen(array, dtype=None):
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def natural_key(value):
    text = str(value)
    return (0, int(text), text) if re.fullmatch(r'-?[0-9]+', text) else (1, 0, text)


@dataclass(frozen=True)
class IdIndex:
    """Bijective map between original identifiers and dense indices 0..n-1."""

    originals: Tuple[str, ...]
    _lookup: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lookup = {}
        for position, original in enumerate(self.originals):
            if original in lookup:
                raise InvariantViolation(f'Duplicate identifier {original!r} in index')
            lookup[original] = position
        object.__setattr__(self, '_lookup', lookup)

    @classmethod
    def from_values(cls, values: Iterable) -> 'IdIndex':
        """Index the distinct values, numeric ids in numeric order."""
        distinct = {str(v) for v in values}
        return cls(tuple(sorted(distinct, key=natural_key)))

    def __len__(self):
        return len(self.originals)

    def __contains__(self, original):
        return str(original) in self._lookup

    def dense(self, original) -> int:
        try:
            return self._lookup[str(original)]
        except KeyError:
            raise UnknownIdError(f'Unknown identifier {original!r}') from None

    def dense_many(self, originals: Iterable) -> np.ndarray:
        return np.fromiter((self.dense(o) for o in originals), dtype=np.int64)

    def original(self, dense: int) -> str:
        if not 0 <= dense < len(self.originals):
            raise UnknownIdError(f'Dense index {dense} out of range 0..{len(self.originals) - 1}')
        return self.originals[dense]


class Interaction(NamedTuple):
    user: int
    item: int
    rating: Optional[float]
    timestamp: int


@dataclass(frozen=True, eq=False)
class Interactions:
    """Column-oriented, read-only table of interactions (dense ids)."""

    user: np.ndarray
    item: np.ndarray
    rating: np.ndarray
    timestamp: np.ndarray

    def __post_init__(self):
        n = len(self.user)
        if not (len(self.item) == len(self.rating) == len(self.timestamp) == n):
            raise InvariantViolation('Interaction columns have different lengths')
        if n and int(np.min(self.timestamp)) < 0:
            raise InvariantViolation('Interaction timestamps must be non-negative')
        object.__setattr__(self, 'user', _frozen(self.user, np.int64))
        object.__setattr__(self, 'item', _frozen(self.item, np.int64))
        object.__setattr__(self, 'rating', _frozen(self.rating, np.float64))
        object.__setattr__(self, 'timestamp', _frozen(self.timestamp, np.int64))

    @classmethod
    def empty(cls):
        return cls(np.empty(0), np.empty(0), np.empty(0), np.empty(0))

    def __len__(self):
        return len(self.user)

    def __iter__(self) -> Iterator[Interaction]:
        for u, i, r, t in zip(self.user, self.item, self.rating, self.timestamp):
            yield Interaction(int(u), int(i), None if np.isnan(r) else float(r), int(t))

    def select(self, mask) -> 'Interactions':
        return Interactions(self.user[mask], self.item[mask], self.rating[mask], self.timestamp[mask])

    def items_by_user(self) -> Dict[int, np.ndarray]:
        """Distinct items per user, ascending."""
        order = np.lexsort((self.item, self.user))
        users, items = self.user[order], self.item[order]
        bounds = np.flatnonzero(np.diff(users)) + 1
        out = {}
        for chunk_users, chunk_items in zip(np.split(users, bounds), np.split(items, bounds)):
            if len(chunk_users):
                out[int(chunk_users[0])] = np.unique(chunk_items)
        return out


@dataclass(frozen=True, eq=False)
class CategoryCatalog:
    """Item × category incidence matrix C and the category list."""

    names: Tuple[str, ...]
    membership: np.ndarray  # shape (n_items, n_categories), 0/1

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise InvariantViolation('Category names must be unique')
        membership = _frozen(self.membership, np.int8)
        if membership.ndim != 2 or membership.shape[1] != len(self.names):
            raise InvariantViolation('Membership matrix does not match the category list')
        empty = np.flatnonzero(membership.sum(axis=1) == 0)
        if len(empty):
            raise InvariantViolation(
                f'{len(empty)} items have no category: {empty[:20].tolist()}'
            )
        object.__setattr__(self, 'membership', membership)

    @property
    def n_items(self):
        return self.membership.shape[0]

    @property
    def n_categories(self):
        return len(self.names)

    @cached_property
    def fractions(self) -> np.ndarray:
        """C_{v,c} / |C_v| for every item, rows sum to one."""
        counts = self.membership.sum(axis=1, keepdims=True)
        out = self.membership / counts
        out.setflags(write=False)
        return out

    def categories_of(self, item: int) -> FrozenSet[int]:
        self._check_item(item)
        return frozenset(np.flatnonzero(self.membership[item]).tolist())

    def _check_item(self, item):
        if not 0 <= item < self.n_items:
            raise UnknownIdError(f'Unknown item {item}')


@dataclass(frozen=True, eq=False)
class Attribute:
    """One sensitive attribute: class labels plus a class code per user."""

    name: str
    labels: Tuple[str, ...]
    codes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'codes', _frozen(self.codes, np.int64))

    def value_of(self, user: int) -> str:
        return self.labels[int(self.codes[user])]

    def class_counts(self) -> Dict[str, int]:
        counts = np.bincount(self.codes, minlength=len(self.labels))
        return {label: int(c) for label, c in zip(self.labels, counts)}


@dataclass(frozen=True, eq=False)
class UserAttributes:
    attributes: Mapping[str, Attribute]

    def __getitem__(self, name) -> Attribute:
        try:
            return self.attributes[name]
        except KeyError:
            raise UnknownIdError(
                f'Unknown attribute {name!r}; declared: {sorted(self.attributes)}'
            ) from None

    def __contains__(self, name):
        return name in self.attributes

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(self.attributes)


@dataclass(frozen=True, eq=False)
class Dataset:
    users: IdIndex
    items: IdIndex
    interactions: Interactions
    is_train: np.ndarray
    catalog: CategoryCatalog
    attributes: UserAttributes
    manifest: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, 'is_train', _frozen(self.is_train, bool))
        if len(self.is_train) != len(self.interactions):
            raise InvariantViolation('Split tags do not match the interactions')
        if self.catalog.n_items != len(self.items):
            raise InvariantViolation('Category catalog does not cover the item index')
        inter = self.interactions
        if len(inter) and (inter.user.max() >= len(self.users) or inter.item.max() >= len(self.items)):
            raise InvariantViolation('Interaction references an index outside the id tables')
        train_users = set(np.unique(inter.user[self.is_train]).tolist())
        test_users = set(np.unique(inter.user[~self.is_train]).tolist())
        missing = test_users - train_users
        if missing:
            raise InvariantViolation(f'{len(missing)} test users have no train interactions')

    @property
    def n_users(self):
        return len(self.users)

    @property
    def n_items(self):
        return len(self.items)

    @cached_property
    def train(self) -> Interactions:
        return self.interactions.select(self.is_train)

    @cached_property
    def test(self) -> Interactions:
        return self.interactions.select(~self.is_train)

    @cached_property
    def train_items(self) -> Dict[int, np.ndarray]:
        return self.train.items_by_user()

    @cached_property
    def test_items(self) -> Dict[int, np.ndarray]:
        return self.test.items_by_user()


class Candidates(NamedTuple):
    """TopN_u: candidate items with their predicted scores, best first."""

    items: np.ndarray
    scores: np.ndarray


@dataclass(frozen=True, eq=False)
class ScoreSet:
    candidates: Mapping[int, Candidates]
    warnings: Tuple[str, ...] = ()

    def __post_init__(self):
        frozen = {}
        for user, (items, scores) in self.candidates.items():
            items = _frozen(items, np.int64)
            scores = _frozen(scores, np.float64)
            if len(items) != len(scores):
                raise InvariantViolation(f'User {user}: items and scores differ in length')
            if len(np.unique(items)) != len(items):
                raise InvariantViolation(f'User {user}: duplicate candidate items')
            if len(items) > 1:
                ds = np.diff(scores)
                bad = (ds > 0) | ((ds == 0) & (np.diff(items) <= 0))
                if bad.any():
                    raise InvariantViolation(
                        f'User {user}: candidates not ordered by score desc, item asc'
                    )
            frozen[int(user)] = Candidates(items, scores)
        object.__setattr__(self, 'candidates', dict(sorted(frozen.items())))

    def __getitem__(self, user) -> Candidates:
        try:
            return self.candidates[user]
        except KeyError:
            raise UnknownIdError(f'User {user} has no candidate list') from None

    def __contains__(self, user):
        return user in self.candidates

    def __len__(self):
        return len(self.candidates)

    def users(self):
        return list(self.candidates)

    def top_k(self, k: int) -> Dict[int, Tuple[int, ...]]:
        """The baseline ranking: first k candidates of every user."""
        return {u: tuple(c.items[:k].tolist()) for u, c in self.candidates.items()}

    def equals(self, other: 'ScoreSet') -> bool:
        if self.candidates.keys() != other.candidates.keys():
            return False
        return all(
            np.array_equal(a.items, b.items) and np.array_equal(a.scores, b.scores)
            for a, b in zip(self.candidates.values(), other.candidates.values())
        )


class RankedList(NamedTuple):
    user: int
    items: Tuple[int, ...]


def order_candidates(items, scores) -> Candidates:
    """Sort by score descending, ties by ascending item index."""
    items = np.asarray(items, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    order = np.lexsort((items, -scores))
    return Candidates(items[order], scores[order])


def item_category_fractions(item: int, catalog: CategoryCatalog) -> Dict[int, float]:
    """Non-zero C_{v,c}/|C_v| entries of one item."""
    cats = sorted(catalog.categories_of(item))
    if not cats:
        raise InvariantViolation(f'Item {item} has no category')
    share = 1.0 / len(cats)
    return {c: share for c in cats}


@dataclass(frozen=True)
class AttributePartition:
    attribute: str
    groups: Mapping[str, FrozenSet[int]]

    @property
    def degenerate(self) -> bool:
        return len(self.groups) < 2

    def complement(self, value: str) -> FrozenSet[int]:
        """U_{¬s}: every partitioned user whose class is not ``value``."""
        if value not in self.groups:
            raise UnknownIdError(f'Attribute {self.attribute!r} has no class {value!r}')
        return frozenset().union(*(g for v, g in self.groups.items() if v != value))


def partition_by_attribute(users: Iterable[int], attributes: UserAttributes,
                           attribute: str) -> AttributePartition:
    attr = attributes[attribute]
    groups: Dict[str, set] = {}
    for user in users:
        groups.setdefault(attr.value_of(int(user)), set()).add(int(user))
    partition = AttributePartition(
        attribute, {v: frozenset(groups[v]) for v in attr.labels if v in groups}
    )
    if partition.degenerate:
        logger.warning(f"Attribute '{attribute}' has a single class over these users; "
                       f"complement sets are empty")
    return partition


