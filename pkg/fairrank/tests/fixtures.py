"""Small datasets shared by the test modules."""
import os
from pathlib import Path

import numpy as np

from fairrank.domain import (Attribute, CategoryCatalog, Dataset, IdIndex, Interactions, UserAttributes)

ML100K_DIR = os.environ.get('FAIRRANK_ML100K_DIR')


def make_dataset(rows, membership, genders, category_names=None):
    """Dataset from ``(user, item, timestamp, is_train)`` rows with dense ids.

    ``membership`` is the 0/1 item x category matrix, ``genders`` one label
    per user.
    """
    membership = np.asarray(membership, dtype=np.int8)
    n_users, n_items = len(genders), membership.shape[0]
    names = tuple(category_names or [f'c{c}' for c in range(membership.shape[1])])
    users = np.array([r[0] for r in rows])
    items = np.array([r[1] for r in rows])
    timestamps = np.array([r[2] for r in rows])
    is_train = np.array([r[3] for r in rows], dtype=bool)
    labels = tuple(sorted(set(genders)))
    attribute = Attribute('gender', labels, [labels.index(g) for g in genders])
    return Dataset(
        IdIndex(tuple(str(u) for u in range(n_users))),
        IdIndex(tuple(str(i) for i in range(n_items))),
        Interactions(users, items, np.full(len(rows), np.nan), timestamps),
        is_train,
        CategoryCatalog(names, membership),
        UserAttributes({'gender': attribute}),
    )


def write_generic_dataset(directory, n_users=40, n_items=30, per_user=12, seed=7):
    """Synthetic generic-tsv files where men lean to 'Action' and women to 'Drama'.

    Returns the directory. Items 0-9 are Action, 10-19 Drama, 20-29 Comedy;
    every fifth item also carries a second category.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    names = ['Action', 'Drama', 'Comedy']
    item_cats = []
    for item in range(n_items):
        cats = [names[(item * 3) // n_items]]
        if item % 5 == 0:
            cats.append(names[((item * 3) // n_items + 1) % 3])
        item_cats.append(cats)

    rows, genders = [], []
    for user in range(n_users):
        gender = 'M' if user % 2 == 0 else 'F'
        genders.append(gender)
        preferred = 'Action' if gender == 'M' else 'Drama'
        weights = np.array([4.0 if preferred in cats else 1.0 for cats in item_cats])
        chosen = rng.choice(n_items, size=per_user, replace=False, p=weights / weights.sum())
        for step, item in enumerate(chosen):
            rows.append((f'u{user}', f'i{item}', float(rng.integers(1, 6)), 1000 + 10 * step + user))

    with open(directory / 'interactions.tsv', 'w', encoding='utf-8') as handle:
        handle.write('user\titem\trating\ttimestamp\n')
        for user, item, rating, timestamp in rows:
            handle.write(f'{user}\t{item}\t{rating:g}\t{timestamp}\n')
    with open(directory / 'users.tsv', 'w', encoding='utf-8') as handle:
        handle.write('user\tgender\n')
        for user, gender in enumerate(genders):
            handle.write(f'u{user}\t{gender}\n')
    with open(directory / 'item_categories.tsv', 'w', encoding='utf-8') as handle:
        handle.write('item\tcategories\n')
        for item, cats in enumerate(item_cats):
            handle.write(f"i{item}\t{'|'.join(cats)}\n")
    return directory


def experiment_mapping(data_dir, out_dir, **sections):
    """Nested config for a fast experiment on the synthetic generic dataset."""
    mapping = {
        'out': str(out_dir),
        'threads': 1,
        'dataset': {'format': 'generic-tsv', 'dir': str(data_dir), 'k_core': 2},
        'model': {'name': 'wmf', 'factors': 4, 'als_sweeps': 4},
        'rerank': {'k': 5, 'beta': 0.5, 'gamma': 0.1},
        'sweep': {'beta_grid': [0.0, 0.4, 0.8], 'gamma_grid': [0.0, 0.5]},
    }
    for name, values in sections.items():
        if isinstance(values, dict):
            mapping.setdefault(name, {}).update(values)
        else:
            mapping[name] = values
    return mapping
