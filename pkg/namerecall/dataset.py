""" Corpus ingestion and preprocessing.

    Raw corpora are UTF-8 text, one `name<TAB>nationality` record per line.
    Preprocessing drops rare nationalities, caps frequent ones by seeded
    subsampling, splits each class 8:1:1 and bins the labels by training
    frequency into head, mid and tail thirds.
"""
from fractions import Fraction
import logging
import os
from typing import Any, Iterable, NamedTuple, Sequence

import numpy as np
import pandas as pd

from .errors import DataError, DatasetError
from .taxonomy import Taxonomy
from .utils import read_json, read_lines, save_result, write_json


SPLITS = ('train', 'validation', 'test')
DEFAULT_RATIOS = (0.8, 0.1, 0.1)


class LabeledName(NamedTuple):
    name: str
    nationality: str


class DatasetSplit(NamedTuple):
    train: list[LabeledName]
    validation: list[LabeledName]
    test: list[LabeledName]
    seed: int

    def parts(self) -> dict[str, list[LabeledName]]:
        return {'train': self.train, 'validation': self.validation, 'test': self.test}


class FrequencyBins(NamedTuple):
    head: frozenset[str]
    mid: frozenset[str]
    tail: frozenset[str]
    frequency_order: tuple[str, ...]

    def bin_of(self, label: str) -> str|None:
        for name in ('head', 'mid', 'tail'):
            if label in getattr(self, name):
                return name
        return None

    def to_json(self) -> dict[str, Any]:
        return {
            'head': sorted(self.head),
            'mid': sorted(self.mid),
            'tail': sorted(self.tail),
            'frequency_order': list(self.frequency_order),
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> 'FrequencyBins':
        return cls(frozenset(data['head']), frozenset(data['mid']), frozenset(data['tail']),
                   tuple(data['frequency_order']))


def _frame(data: Iterable[Sequence[str]]) -> pd.DataFrame:
    df = pd.DataFrame([(str(n).strip(), str(y).strip()) for n, y in data], columns=['name', 'nationality'])
    blank = (df['name'] == '') | (df['nationality'] == '')
    if blank.any():
        logging.warning(f'Dropping {int(blank.sum())} records with an empty name or nationality')
        df = df[~blank]
    return df.reset_index(drop=True)


def _records(df: pd.DataFrame) -> list[LabeledName]:
    return [LabeledName(n, y) for n, y in zip(df['name'], df['nationality'])]


def label_counts(data: Iterable[LabeledName]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for item in data:
        counts[item.nationality] = counts.get(item.nationality, 0) + 1
    return counts


def preprocess(raw: Sequence[Sequence[str]], min_count: int = 500, max_count: int = 800, seed: int = 42,
               taxonomy: Taxonomy|None = None) -> list[LabeledName]:
    """ Drop classes with fewer than `min_count` samples and subsample those
        with more than `max_count` down to exactly `max_count`. Retained
        samples keep their input order.

        With a taxonomy, raw labels are first canonicalised and every
        surviving label must belong to it.
    """
    if not raw:
        raise DatasetError('Cannot preprocess an empty corpus')
    if min_count < 1 or max_count < min_count:
        raise DatasetError(f'Invalid class size bounds: min {min_count}, max {max_count}')
    df = _frame(raw)
    if taxonomy is not None:
        df['nationality'] = [taxonomy.normalize(y) or y for y in df['nationality']]

    counts = df['nationality'].value_counts()
    keep = sorted(counts[counts >= min_count].index)
    if not keep:
        raise DatasetError(f'No nationality has {min_count} or more samples')
    dropped = len(counts) - len(keep)
    if dropped:
        logging.info(f'Dropped {dropped} nationalities with fewer than {min_count} samples')

    if taxonomy is not None:
        unknown = [y for y in keep if taxonomy.normalize(y) is None]
        if unknown:
            raise DatasetError(f'Frequent labels missing from the taxonomy: {", ".join(unknown)}')

    rng = np.random.default_rng(seed)
    chosen = []
    for label in keep:
        idx = df.index[df['nationality'] == label].to_numpy()
        if len(idx) > max_count:
            idx = rng.choice(idx, size=max_count, replace=False)
        chosen.append(idx)
    rtn = _records(df.loc[np.sort(np.concatenate(chosen))])
    logging.info(f'Preprocessed corpus: {len(keep)} classes, {len(rtn)} samples')
    return rtn


def allocate(n: int, ratios: Sequence[float] = DEFAULT_RATIOS) -> list[int]:
    """ Largest-remainder allocation of `n` samples to the splits. Ties in
        the fractional parts favour the earlier split.
    """
    shares = [n * Fraction(r).limit_denominator(10**6) for r in ratios]
    sizes = [int(s) for s in shares]
    order = sorted(range(len(shares)), key=lambda i: (-(shares[i] - sizes[i]), i))
    for i in order[:n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def stratified_split(data: Sequence[LabeledName], ratios: Sequence[float] = DEFAULT_RATIOS,
                     seed: int = 42) -> DatasetSplit:
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise DatasetError(f'Split ratios must be three positive numbers summing to 1, got {ratios}')
    df = _frame(data)
    if df.empty:
        raise DatasetError('Cannot split an empty corpus')
    rng = np.random.default_rng(seed)
    parts: list[list[int]] = [[], [], []]
    for label in sorted(df['nationality'].unique()):
        idx = rng.permutation(df.index[df['nationality'] == label].to_numpy())
        sizes = allocate(len(idx), ratios)
        if min(sizes) < 1:
            raise DatasetError(f'Class {label!r} has {len(idx)} samples, too few for all three splits')
        start = 0
        for part, size in zip(parts, sizes):
            part.extend(idx[start:start + size])
            start += size
    # Shuffle again after splitting so classes are interleaved.
    shuffled = [_records(df.loc[rng.permutation(np.array(p, dtype=int))]) for p in parts]
    split = DatasetSplit(shuffled[0], shuffled[1], shuffled[2], seed)
    logging.info(f'Split sizes: {len(split.train)} / {len(split.validation)} / {len(split.test)}')
    return split


def assign_frequency_bins(train: Sequence[LabeledName], taxonomy: Taxonomy|None = None,
                          bin_size: int = 33) -> FrequencyBins:
    """ Order labels by training count, descending, ties by label name, and
        cut the order into head, mid and tail of `bin_size` labels each.
    """
    counts = label_counts(train)
    labels = list(taxonomy.nationalities) if taxonomy is not None else list(counts)
    if len(labels) != 3 * bin_size:
        raise DatasetError(f'Expected {3 * bin_size} labels for frequency bins, found {len(labels)}')
    missing = [y for y in labels if y not in counts]
    if missing:
        raise DatasetError(f'Training data has no samples for: {", ".join(sorted(missing))}')
    order = sorted(labels, key=lambda y: (-counts[y], y))
    return FrequencyBins(frozenset(order[:bin_size]), frozenset(order[bin_size:2 * bin_size]),
                         frozenset(order[2 * bin_size:]), tuple(order))


def parse_records(lines: Iterable[str], source: str = '<input>',
                  require_label: bool = True) -> list[tuple[str, str|None]]:
    rtn: list[tuple[str, str|None]] = []
    for lnum, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        fields = line.split('\t')
        if len(fields) > 2 or (require_label and len(fields) != 2):
            raise DataError(f'{source} line {lnum}: expected name<TAB>nationality')
        if not fields[0].strip():
            raise DataError(f'{source} line {lnum}: empty name')
        label = fields[1].strip() if len(fields) == 2 else None
        rtn.append((fields[0].strip(), label or None))
    return rtn


def read_raw(path: str) -> list[tuple[str, str]]:
    return [(n, y) for n, y in parse_records(read_lines(path), path) if y is not None]


def read_names(path: str) -> list[tuple[str, str|None]]:
    """ Names to predict, optionally followed by a gold label. """
    return parse_records(read_lines(path), path, require_label=False)


def read_split_file(path: str) -> list[LabeledName]:
    return [LabeledName(n, y) for n, y in read_raw(path)]


def format_records(data: Iterable[LabeledName]) -> str:
    return ''.join(f'{d.name}\t{d.nationality}\n' for d in data)


def make_manifest(split: DatasetSplit, bins: FrequencyBins|None = None, ratios: Sequence[float] = DEFAULT_RATIOS,
                  min_count: int = 500, max_count: int = 800,
                  taxonomy_fingerprint: str|None = None) -> dict[str, Any]:
    per_split = {name: label_counts(part) for name, part in split.parts().items()}
    labels = sorted(set().union(*per_split.values()))
    manifest: dict[str, Any] = {
        'seed': split.seed,
        'ratios': list(ratios),
        'min_count': min_count,
        'max_count': max_count,
        'totals': {name: len(part) for name, part in split.parts().items()},
        'counts': {y: {name: per_split[name].get(y, 0) for name in SPLITS} for y in labels},
    }
    manifest['totals']['all'] = sum(manifest['totals'].values())
    manifest['classes'] = len(labels)
    if bins is not None:
        manifest['bins'] = bins.to_json()
    if taxonomy_fingerprint:
        manifest['taxonomy_fingerprint'] = taxonomy_fingerprint
    return manifest


def write_split(out_dir: str, split: DatasetSplit, manifest: dict[str, Any]) -> None:
    for name, part in split.parts().items():
        save_result(os.path.join(out_dir, f'{name}.tsv'), format_records(part))
    write_json(os.path.join(out_dir, 'manifest.json'), manifest)


def load_manifest(path: str) -> dict[str, Any]:
    manifest = read_json(path)
    if not isinstance(manifest, dict) or 'totals' not in manifest:
        raise DataError(f'{path} is not a split manifest')
    return manifest


def bins_from_manifest(manifest: dict[str, Any]) -> FrequencyBins|None:
    data = manifest.get('bins')
    return FrequencyBins.from_json(data) if data else None
