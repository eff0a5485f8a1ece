import pytest
from hamcrest import assert_that, calling, contains_exactly, equal_to, has_length, is_, none, raises

from namerecall.errors import TaxonomyError, UnknownLabelError
from namerecall.taxonomy import (Granularity, build_taxonomy, continent_of, load_default_taxonomy,
                                 load_mini_taxonomy, load_taxonomy, normalize_label, region_of)
from .helpers import five_label_taxonomy, write_file


REGION_COUNTS = [
    ('East Asia', 5), ('Southeast Asia', 7), ('South Asia', 6), ('Caucasus & Central Asia', 2),
    ('Western Europe', 11), ('Northern Europe', 1), ('Southern Europe', 5), ('Eastern Europe', 15),
    ('North America', 3), ('Central America & Caribbean', 7), ('South America', 10),
    ('Middle East', 10), ('Africa', 15), ('Oceania', 2),
]


def test_shipped_taxonomy_counts():
    taxonomy = load_default_taxonomy()
    assert_that(taxonomy.nationalities, has_length(99))
    assert_that(taxonomy.regions, has_length(14))
    assert_that(taxonomy.continents, has_length(6))
    for region, count in REGION_COUNTS:
        members = [n for n in taxonomy.nationalities if taxonomy.region_of(n) == region]
        assert_that(len(members), equal_to(count), region)
    assert_that(len(taxonomy.fingerprint), equal_to(64))


def test_shipped_taxonomy_confusable_pairs():
    taxonomy = load_default_taxonomy()
    for a, b in [('Belarusian', 'Russian'), ('Taiwanese', 'Chinese'), ('Catalan', 'French'),
                 ('Samoan', 'Australian'), ('Egyptian', 'Iraqi'), ('Cypriot', 'Greek'),
                 ('Canadian', 'American')]:
        assert_that(taxonomy.region_of(a), equal_to(taxonomy.region_of(b)), f'{a}/{b}')
    for a, b in [('Cuban', 'Mexican'), ('Australian', 'American'), ('Algerian', 'French')]:
        assert_that(taxonomy.region_of(a) != taxonomy.region_of(b), f'{a}/{b}')


def test_normalize_label():
    taxonomy = load_default_taxonomy()
    assert_that(normalize_label('  japanese ', taxonomy), equal_to('Japanese'))
    assert_that(normalize_label('JAPANESE', taxonomy), equal_to('Japanese'))
    assert_that(normalize_label('Japan', taxonomy), is_(none()))
    assert_that(normalize_label('', taxonomy), is_(none()))
    assert_that(normalize_label(None, taxonomy), is_(none()))
    assert_that(normalize_label(42, taxonomy), is_(none()))
    assert_that(normalize_label('east asia', taxonomy, Granularity.REGION), equal_to('East Asia'))


def test_region_and_continent_lookup():
    taxonomy = load_default_taxonomy()
    assert_that(region_of('Japanese', taxonomy), equal_to('East Asia'))
    assert_that(continent_of('Japanese', taxonomy), equal_to('Asia'))
    assert_that(taxonomy.coarsen('Japanese', Granularity.NATIONALITY), equal_to('Japanese'))
    assert_that(taxonomy.coarsen('Japanese', Granularity.REGION), equal_to('East Asia'))
    assert_that(taxonomy.coarsen('Japanese', Granularity.CONTINENT), equal_to('Asia'))


def test_strict_label_construction():
    taxonomy = load_mini_taxonomy()
    assert_that(taxonomy.label('french'), equal_to('French'))
    assert_that(calling(taxonomy.label).with_args('Martian'), raises(UnknownLabelError))


def test_labels_per_granularity():
    taxonomy = five_label_taxonomy()
    assert_that(taxonomy.labels(), contains_exactly('A', 'B', 'C', 'D', 'E'))
    assert_that(taxonomy.labels(Granularity.REGION), contains_exactly('R1', 'R2', 'R3'))
    assert_that(taxonomy.labels(Granularity.CONTINENT), contains_exactly('C1', 'C2'))


def test_granularity_parse():
    assert_that(Granularity.parse('region14'), equal_to(Granularity.REGION))
    assert_that(Granularity.parse('continent'), equal_to(Granularity.CONTINENT))
    assert_that(Granularity.REGION.default_k, equal_to(3))
    assert_that(calling(Granularity.parse).with_args('galaxy'), raises(ValueError))


def test_duplicate_nationality_rejected():
    rows = [('A', 'R1', 'C1'), ('a', 'R2', 'C1')]
    assert_that(calling(build_taxonomy).with_args(rows), raises(TaxonomyError, 'duplicate mapping'))


def test_region_with_two_continents_rejected():
    rows = [('A', 'R1', 'C1'), ('B', 'R1', 'C2')]
    assert_that(calling(build_taxonomy).with_args(rows), raises(TaxonomyError, 'maps to both'))


def test_blank_region_rejected():
    assert_that(calling(build_taxonomy).with_args([('A', '', 'C1')]), raises(TaxonomyError))


def test_declared_counts_checked():
    declared = {'total': 99}
    assert_that(calling(build_taxonomy).with_args([('A', 'R1', 'C1')], declared),
                raises(TaxonomyError, 'expected 99, found 1'))


def test_file_missing_a_nationality(tmp_path):
    text = '#@ total\t3\nnationality\tregion\tcontinent\nFrench\tWestern Europe\tEurope\n' \
           'German\tWestern Europe\tEurope\n'
    path = write_file(tmp_path, 'short.tsv', text)
    assert_that(calling(load_taxonomy).with_args(path), raises(TaxonomyError, 'count mismatch'))


def test_file_without_header(tmp_path):
    path = write_file(tmp_path, 'bad.tsv', 'French\tWestern Europe\tEurope\n')
    assert_that(calling(load_taxonomy).with_args(path), raises(TaxonomyError, 'header'))


def test_file_with_short_row(tmp_path):
    path = write_file(tmp_path, 'bad.tsv', 'nationality\tregion\tcontinent\nFrench\tWestern Europe\n')
    assert_that(calling(load_taxonomy).with_args(path), raises(TaxonomyError, '3 tab-separated'))


def test_file_without_declarations(tmp_path):
    path = write_file(tmp_path, 'free.tsv', 'nationality\tregion\tcontinent\nFrench\tWestern Europe\tEurope\n')
    taxonomy = load_taxonomy(path)
    assert_that(taxonomy.nationalities, contains_exactly('French'))


@pytest.mark.parametrize('granularity', list(Granularity))
def test_every_label_coarsens(granularity):
    taxonomy = load_default_taxonomy()
    coarse = {taxonomy.coarsen(n, granularity) for n in taxonomy.nationalities}
    assert_that(coarse, equal_to(set(taxonomy.labels(granularity))))
