"""Loading interaction data and producing hold-out splits.

Two file layouts are understood:

* ``pairs``: one interaction per line, ``user<sep>item[<sep>extra ...]``.
  The separator is sniffed per file (tab, then comma, then whitespace).
  Extra columns (ratings, timestamps) are ignored; presence is what counts.
* ``adjacency``: one user per line, ``user item item item ...``, the layout
  used by the public splits that ship with the reference graph CF codebases.

Users and items are remapped to dense indices in first-appearance order.
Duplicate pairs collapse to one interaction (keep-first).
"""

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DependencyError, EmptyDatasetError, ParseError


@dataclass
class InteractionSet:
    """A set of (user, item) interactions over a fixed index universe.

    ``users`` and ``items`` are parallel int64 arrays; ``user_ids`` and
    ``item_ids`` map dense index -> raw identifier. Split parts share the
    universe of the parent set, so a part may leave some indices unused.
    """

    num_users: int
    num_items: int
    users: np.ndarray
    items: np.ndarray
    user_ids: list = field(repr=False)
    item_ids: list = field(repr=False)

    @property
    def num_pairs(self) -> int:
        return int(self.users.shape[0])

    def pair_list(self):
        return list(zip(self.users.tolist(), self.items.tolist()))

    def user_map(self) -> dict:
        return {raw: idx for idx, raw in enumerate(self.user_ids)}

    def item_map(self) -> dict:
        return {raw: idx for idx, raw in enumerate(self.item_ids)}

    def validate(self, strict: bool = False) -> None:
        """Check index ranges, duplicate-freeness and (strict) min degree."""
        if self.num_pairs == 0:
            raise EmptyDatasetError("interaction set has no pairs")
        if self.users.min() < 0 or self.users.max() >= self.num_users:
            raise DataError("user index out of range")
        if self.items.min() < 0 or self.items.max() >= self.num_items:
            raise DataError("item index out of range")
        keys = self.users.astype(np.int64) * self.num_items + self.items
        if np.unique(keys).shape[0] != keys.shape[0]:
            raise DataError("duplicate (user, item) pairs present")
        if strict:
            if np.unique(self.users).shape[0] != self.num_users:
                raise DataError("some users have no interactions")
            if np.unique(self.items).shape[0] != self.num_items:
                raise DataError("some items have no interactions")


@dataclass
class Split:
    """Train / optional validation / test parts over one shared index universe."""

    train: InteractionSet
    test: InteractionSet
    validation: InteractionSet | None = None
    seed: int | None = None
    validation_seed: int | None = None
    train_ratio: float | None = None
    validation_ratio: float | None = None


@dataclass
class DatasetStats:
    num_users: int
    num_items: int
    num_interactions: int
    density: float
    avg_user_degree: float
    avg_item_degree: float


def _dedup_first(raw_pairs):
    seen = set()
    out = []
    for p in raw_pairs:
        if p not in seen:
            seen.add(p)
            out.append(p)
    return out


def from_pairs(raw_pairs) -> InteractionSet:
    """Build an InteractionSet from raw (user, item) pairs.

    Indices are assigned in first-appearance order; duplicates keep-first.
    """
    raw_pairs = _dedup_first(raw_pairs)
    if not raw_pairs:
        raise EmptyDatasetError("no interactions after deduplication")
    user_map: dict = {}
    item_map: dict = {}
    u_idx = np.empty(len(raw_pairs), dtype=np.int64)
    i_idx = np.empty(len(raw_pairs), dtype=np.int64)
    for n, (u, i) in enumerate(raw_pairs):
        u_idx[n] = user_map.setdefault(u, len(user_map))
        i_idx[n] = item_map.setdefault(i, len(item_map))
    return InteractionSet(
        num_users=len(user_map),
        num_items=len(item_map),
        users=u_idx,
        items=i_idx,
        user_ids=list(user_map),
        item_ids=list(item_map),
    )


def _sniff_delimiter(line: str) -> str | None:
    if "\t" in line:
        return "\t"
    if "," in line:
        return ","
    return None  # any whitespace


def _parse_pairs_lines(lines) -> list:
    pairs = []
    delim = None
    sniffed = False
    for no, line in enumerate(lines, start=1):
        line = line.rstrip("\n").rstrip("\r")
        if not line.strip():
            continue
        if not sniffed:
            delim = _sniff_delimiter(line)
            sniffed = True
        cols = line.split(delim) if delim else line.split()
        cols = [c.strip() for c in cols if c.strip() != ""]
        if len(cols) < 2:
            raise ParseError(f"expected at least 2 columns, got {len(cols)}", line_no=no)
        pairs.append((cols[0], cols[1]))
    return pairs


def _parse_adjacency_lines(lines) -> list:
    pairs = []
    for no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        cols = line.split()
        user = cols[0]
        # A bare user id with no items is tolerated: some published test
        # files keep such lines for users whose test part came out empty.
        for item in cols[1:]:
            pairs.append((user, item))
    return pairs


def load_interactions(path, fmt: str = "pairs") -> InteractionSet:
    """Load a whole interaction file into an InteractionSet."""
    if fmt not in ("pairs", "adjacency"):
        raise DataError(f"unknown interaction format: {fmt!r}")
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    if fmt == "pairs":
        raw = _parse_pairs_lines(lines)
    else:
        raw = _parse_adjacency_lines(lines)
    if not raw:
        raise EmptyDatasetError(f"no interactions in {path}")
    return from_pairs(raw)


def load_split_files(train_path, test_path, fmt: str = "adjacency") -> Split:
    """Load a pre-published train/test split.

    The index universe comes from the train file alone. Test pairs whose
    user or item never occurs in train are dropped (they cannot be scored).
    """
    train = load_interactions(train_path, fmt=fmt)
    umap, imap = train.user_map(), train.item_map()
    with open(test_path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    raw = _parse_pairs_lines(lines) if fmt == "pairs" else _parse_adjacency_lines(lines)
    raw = _dedup_first(raw)
    tu, ti = [], []
    dropped = 0
    for u, i in raw:
        if u in umap and i in imap:
            tu.append(umap[u])
            ti.append(imap[i])
        else:
            dropped += 1
    if not tu:
        raise EmptyDatasetError(f"no usable test interactions in {test_path}")
    test = InteractionSet(
        num_users=train.num_users,
        num_items=train.num_items,
        users=np.asarray(tu, dtype=np.int64),
        items=np.asarray(ti, dtype=np.int64),
        user_ids=train.user_ids,
        item_ids=train.item_ids,
    )
    split = Split(train=train, test=test)
    split.dropped_test_pairs = dropped
    return split


def compute_stats(iset: InteractionSet) -> DatasetStats:
    if iset.num_pairs == 0:
        raise EmptyDatasetError("cannot compute stats of an empty set")
    n = iset.num_pairs
    return DatasetStats(
        num_users=iset.num_users,
        num_items=iset.num_items,
        num_interactions=n,
        density=n / (iset.num_users * iset.num_items),
        avg_user_degree=n / iset.num_users,
        avg_item_degree=n / iset.num_items,
    )


def format_stats(stats: DatasetStats, name: str = "dataset") -> str:
    """Render stats with ratios rounded to 4 decimals, at display time only."""
    return (
        f"{name}: users={stats.num_users} items={stats.num_items} "
        f"interactions={stats.num_interactions} density={stats.density:.4f} "
        f"avg_user_degree={stats.avg_user_degree:.4f} "
        f"avg_item_degree={stats.avg_item_degree:.4f}"
    )


def _per_user_order(iset: InteractionSet):
    """Yield (user, positions) with positions in file order, users ascending."""
    order = np.argsort(iset.users, kind="stable")
    sorted_users = iset.users[order]
    bounds = np.flatnonzero(np.diff(sorted_users)) + 1
    starts = np.concatenate(([0], bounds))
    ends = np.concatenate((bounds, [len(order)]))
    for s, e in zip(starts, ends):
        yield int(sorted_users[s]), order[s:e]


def _take_per_user(iset: InteractionSet, keep_ratio: float, seed: int):
    """Split pair positions per user: first ceil(n*keep_ratio) of a seeded
    shuffle stay, the rest go. Users with a single pair keep it."""
    rng = np.random.default_rng(seed)
    keep_mask = np.zeros(iset.num_pairs, dtype=bool)
    for _, pos in _per_user_order(iset):
        n = len(pos)
        if n == 1:
            keep_mask[pos] = True
            continue
        perm = rng.permutation(n)
        k = math.ceil(n * keep_ratio)
        keep_mask[pos[perm[:k]]] = True
    return keep_mask


def _subset(iset: InteractionSet, mask) -> InteractionSet:
    return InteractionSet(
        num_users=iset.num_users,
        num_items=iset.num_items,
        users=iset.users[mask],
        items=iset.items[mask],
        user_ids=iset.user_ids,
        item_ids=iset.item_ids,
    )


def holdout_split(iset: InteractionSet, train_ratio: float = 0.8, seed: int = 0) -> Split:
    """Per-user hold-out: ceil(n * train_ratio) pairs to train, rest to test."""
    if not 0.0 < train_ratio < 1.0:
        raise DataError(f"train_ratio must be in (0, 1), got {train_ratio}")
    keep = _take_per_user(iset, train_ratio, seed)
    return Split(
        train=_subset(iset, keep),
        test=_subset(iset, ~keep),
        seed=seed,
        train_ratio=train_ratio,
    )


def carve_validation(split: Split, validation_ratio: float = 0.1, seed: int = 1) -> Split:
    """Move a per-user fraction of the train part into a validation part.

    The carve-out uses its own seed, independent of the train/test seed.
    """
    if not 0.0 < validation_ratio < 1.0:
        raise DataError(f"validation_ratio must be in (0, 1), got {validation_ratio}")
    keep = _take_per_user(split.train, 1.0 - validation_ratio, seed)
    return Split(
        train=_subset(split.train, keep),
        test=split.test,
        validation=_subset(split.train, ~keep),
        seed=split.seed,
        validation_seed=seed,
        train_ratio=split.train_ratio,
        validation_ratio=validation_ratio,
    )


def _write_pairs(iset: InteractionSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for u, i in zip(iset.users.tolist(), iset.items.tolist()):
            fh.write(f"{iset.user_ids[u]}\t{iset.item_ids[i]}\n")


def write_split(split: Split, out_dir) -> None:
    """Write train/validation/test pair files plus a JSON sidecar.

    The sidecar freezes the index maps and the seeds/ratios that made the
    split, so a later stage can rebuild the exact same universe.
    """
    os.makedirs(out_dir, exist_ok=True)
    _write_pairs(split.train, os.path.join(out_dir, "train.tsv"))
    _write_pairs(split.test, os.path.join(out_dir, "test.tsv"))
    if split.validation is not None:
        _write_pairs(split.validation, os.path.join(out_dir, "validation.tsv"))
    sidecar = {
        "seed": split.seed,
        "validation_seed": split.validation_seed,
        "train_ratio": split.train_ratio,
        "validation_ratio": split.validation_ratio,
        "num_users": split.train.num_users,
        "num_items": split.train.num_items,
        "user_ids": [str(x) for x in split.train.user_ids],
        "item_ids": [str(x) for x in split.train.item_ids],
    }
    with open(os.path.join(out_dir, "split.json"), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=1, sort_keys=True)


def read_split(in_dir) -> Split:
    """Rebuild a Split written by write_split, preserving the index maps."""
    sidecar_path = os.path.join(in_dir, "split.json")
    if not os.path.exists(sidecar_path):
        raise DependencyError(f"missing split sidecar: {sidecar_path}")
    with open(sidecar_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    umap = {raw: idx for idx, raw in enumerate(meta["user_ids"])}
    imap = {raw: idx for idx, raw in enumerate(meta["item_ids"])}

    def load_part(name):
        path = os.path.join(in_dir, name)
        if not os.path.exists(path):
            return None
        with open(path, "r", encoding="utf-8") as fh:
            raw = _parse_pairs_lines(fh.readlines())
        users = np.asarray([umap[u] for u, _ in raw], dtype=np.int64)
        items = np.asarray([imap[i] for _, i in raw], dtype=np.int64)
        return InteractionSet(
            num_users=meta["num_users"],
            num_items=meta["num_items"],
            users=users,
            items=items,
            user_ids=meta["user_ids"],
            item_ids=meta["item_ids"],
        )

    train = load_part("train.tsv")
    test = load_part("test.tsv")
    if train is None or test is None:
        raise DependencyError(f"split directory {in_dir} lacks train.tsv or test.tsv")
    return Split(
        train=train,
        test=test,
        validation=load_part("validation.tsv"),
        seed=meta.get("seed"),
        validation_seed=meta.get("validation_seed"),
        train_ratio=meta.get("train_ratio"),
        validation_ratio=meta.get("validation_ratio"),
    )
