""" The closed label sets: nationalities, regions and continents, and the
    hierarchy between them.

    Labels are plain canonical strings. A string is a label of a taxonomy
    if and only if `Taxonomy.label` (or `normalize_label`) accepts it.
"""
from collections import Counter
from enum import Enum
import hashlib
import logging
import os

from .errors import TaxonomyError, UnknownLabelError
from .utils import read_lines


_DATA_FOLDER = os.path.join(os.path.dirname(__file__), 'data')
DEFAULT_TAXONOMY = os.path.join(_DATA_FOLDER, 'taxonomy.tsv')
MINI_TAXONOMY = os.path.join(_DATA_FOLDER, 'mini_taxonomy.tsv')

_HEADER = ['nationality', 'region', 'continent']


class Granularity(Enum):
    NATIONALITY = 'nationality'
    REGION = 'region14'
    CONTINENT = 'continent6'

    @property
    def noun(self) -> str:
        """ The attribute word used in prompts and JSON keys. """
        return _NOUNS[self][0]

    @property
    def plural(self) -> str:
        return _NOUNS[self][1]

    @property
    def default_k(self) -> int:
        return 5 if self is Granularity.NATIONALITY else 3

    @classmethod
    def parse(cls, value: 'str|Granularity') -> 'Granularity':
        if isinstance(value, Granularity):
            return value
        for g in cls:
            if str(value).lower() in (g.value, g.noun):
                return g
        raise ValueError(f'Unknown granularity {value!r}; expected one of '
                         f'{", ".join(g.value for g in cls)}')


_NOUNS = {
    Granularity.NATIONALITY: ('nationality', 'nationalities'),
    Granularity.REGION: ('region', 'regions'),
    Granularity.CONTINENT: ('continent', 'continents'),
}


class Taxonomy:
    """ Immutable after construction; safe to share between tasks. """

    def __init__(self, nationalities: tuple[str, ...], region_of_nationality: dict[str, str],
                 continent_of_region: dict[str, str], fingerprint: str = ''):
        self.nationalities = tuple(nationalities)
        self.region_of_nationality = dict(region_of_nationality)
        self.continent_of_region = dict(continent_of_region)
        self.fingerprint = fingerprint
        self.regions = tuple(dict.fromkeys(self.region_of_nationality[n] for n in self.nationalities))
        self.continents = tuple(dict.fromkeys(self.continent_of_region[r] for r in self.regions))
        self._folded = {
            g: {l.casefold(): l for l in self.labels(g)} for g in Granularity
        }

    def __repr__(self) -> str:
        return (f'Taxonomy({len(self.nationalities)} nationalities, {len(self.regions)} regions, '
                f'{len(self.continents)} continents)')

    def labels(self, granularity: Granularity = Granularity.NATIONALITY) -> tuple[str, ...]:
        if granularity is Granularity.NATIONALITY:
            return self.nationalities
        if granularity is Granularity.REGION:
            return self.regions
        return self.continents

    def normalize(self, raw: object, granularity: Granularity = Granularity.NATIONALITY) -> str|None:
        if not isinstance(raw, str):
            return None
        return self._folded[granularity].get(raw.strip().casefold())

    def label(self, raw: str, granularity: Granularity = Granularity.NATIONALITY) -> str:
        rtn = self.normalize(raw, granularity)
        if rtn is None:
            raise UnknownLabelError(f'{raw!r} is not a valid {granularity.noun} label')
        return rtn

    def region_of(self, nationality: str) -> str:
        return self.region_of_nationality[nationality]

    def continent_of(self, nationality: str) -> str:
        return self.continent_of_region[self.region_of_nationality[nationality]]

    def coarsen(self, nationality: str, granularity: Granularity) -> str:
        if granularity is Granularity.NATIONALITY:
            return nationality
        if granularity is Granularity.REGION:
            return self.region_of(nationality)
        return self.continent_of(nationality)


def normalize_label(raw: object, taxonomy: Taxonomy,
                    granularity: Granularity = Granularity.NATIONALITY) -> str|None:
    """ Trim and case-insensitively match `raw` against the canonical labels.
        Returns the canonical label, or None if there is no exact match.
    """
    return taxonomy.normalize(raw, granularity)


def region_of(nationality: str, taxonomy: Taxonomy) -> str:
    return taxonomy.region_of(nationality)


def continent_of(nationality: str, taxonomy: Taxonomy) -> str:
    return taxonomy.continent_of(nationality)


def _parse_declaration(parts: list[str], path: str, lnum: int) -> tuple[str, int]:
    try:
        if parts[0] == 'region' and len(parts) == 3:
            return f'region:{parts[1]}', int(parts[2])
        if parts[0] in ('total', 'regions', 'continents') and len(parts) == 2:
            return parts[0], int(parts[1])
    except ValueError:
        pass
    raise TaxonomyError(f'{path} line {lnum}: malformed count declaration')


def build_taxonomy(rows: list[tuple[str, str, str]], declared: dict[str, int]|None = None,
                   source: str = '<memory>', fingerprint: str = '') -> Taxonomy:
    """ Validate (nationality, region, continent) rows against the hierarchy
        rules and any declared counts, and build the Taxonomy.
    """
    region_of: dict[str, str] = {}
    continent_of: dict[str, str] = {}
    seen: set[str] = set()
    for nationality, region, continent in rows:
        if not nationality or not region or not continent:
            raise TaxonomyError(f'{source}: {nationality or "<blank>"} has no region or continent')
        folded = nationality.casefold()
        if folded in seen:
            raise TaxonomyError(f'{source}: duplicate mapping for {nationality!r}')
        seen.add(folded)
        region_of[nationality] = region
        if continent_of.setdefault(region, continent) != continent:
            raise TaxonomyError(f'{source}: region {region!r} maps to both '
                                f'{continent_of[region]!r} and {continent!r}')
    if len({r.casefold() for r in continent_of}) != len(continent_of):
        raise TaxonomyError(f'{source}: region names differ only by case')

    if declared:
        per_region = Counter(region_of.values())
        actual = {
            'total': len(region_of),
            'regions': len(continent_of),
            'continents': len(set(continent_of.values())),
        }
        for key, expected in declared.items():
            if key.startswith('region:'):
                got = per_region.get(key[7:], 0)
                what = f'region {key[7:]!r}'
            else:
                got = actual[key]
                what = {'total': 'nationalities'}.get(key, key)
            if got != expected:
                raise TaxonomyError(f'{source}: count mismatch for {what}: expected {expected}, found {got}')
        undeclared = [r for r in per_region if f'region:{r}' not in declared]
        if undeclared and any(k.startswith('region:') for k in declared):
            raise TaxonomyError(f'{source}: regions without declared counts: {", ".join(undeclared)}')

    return Taxonomy(tuple(region_of), region_of, continent_of, fingerprint)


def load_taxonomy(path: str) -> Taxonomy:
    """ Load a `nationality<TAB>region<TAB>continent` file with a header row.
        Lines starting with `#@` declare expected counts; other `#` lines are comments.
    """
    lines = read_lines(path)
    rows: list[tuple[str, str, str]] = []
    declared: dict[str, int] = {}
    header_seen = False
    for lnum, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if line.startswith('#@'):
            key, value = _parse_declaration(line[2:].strip().split('\t'), path, lnum)
            declared[key] = value
            continue
        if line.startswith('#'):
            continue
        parts = [p.strip() for p in line.split('\t')]
        if not header_seen:
            if [p.lower() for p in parts] != _HEADER:
                raise TaxonomyError(f'{path} line {lnum}: expected header {"<TAB>".join(_HEADER)}')
            header_seen = True
            continue
        if len(parts) != 3:
            raise TaxonomyError(f'{path} line {lnum}: expected 3 tab-separated fields, got {len(parts)}')
        rows.append((parts[0], parts[1], parts[2]))
    if not header_seen:
        raise TaxonomyError(f'{path}: missing header row')

    fingerprint = hashlib.sha256('\n'.join(lines).encode('utf-8')).hexdigest()
    taxonomy = build_taxonomy(rows, declared, path, fingerprint)
    logging.info(f'Loaded taxonomy {path}: {len(taxonomy.nationalities)} nationalities, '
                 f'{len(taxonomy.regions)} regions, {len(taxonomy.continents)} continents')
    return taxonomy


def load_default_taxonomy() -> Taxonomy:
    return load_taxonomy(DEFAULT_TAXONOMY)


def load_mini_taxonomy() -> Taxonomy:
    return load_taxonomy(MINI_TAXONOMY)
