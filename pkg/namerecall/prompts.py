""" System and user prompt templates for the four model calls: the two
    recall agents, direct prediction, and rank completion.

    Templates are rendered from the granularity's attribute noun, the recall
    limit M and the ranking depth K. At nationality granularity with M=4 and
    K=5 the rendered text is exactly the published wording.
"""
from enum import Enum
import json
from typing import Iterable, NamedTuple

from .taxonomy import Granularity


class PromptKind(Enum):
    PERSON_RECALL = 'person_recall'
    MEDIA_RECALL = 'media_recall'
    DIRECT = 'direct'
    COMPLETION = 'completion'


_PERSON_RECALL = """\
You are recalling real people based on a given name.
Think of REAL, ACTUAL famous people who have this exact name or a very similar name.

For each person:
1. Full name
2. {Noun} (from valid list only)

Valid {plural}: {labels}

Output JSON array of up to {m} people:
[{{"name": "Full Name", "{noun}": "{Noun}"}}]

Be honest - only include people you are CONFIDENT actually exist."""

_MEDIA_RECALL = """\
You are recalling athletes and entertainers based on a given name.
Think of REAL people from sports, movies, music, or TV who have this exact name or similar.

For each person:
1. Full name
2. {Noun} (from valid list only)

Valid {plural}: {labels}

Output JSON array of up to {m} people:
[{{"name": "Full Name", "{noun}": "{Noun}"}}]

Be honest - only include people you are CONFIDENT actually exist."""

_DIRECT = """\
You are an expert in identifying the {noun} of people based on their names.
Predict the TOP {k} most likely {plural} for the given name.

Valid {plural}: {labels}
Output a JSON array of {k} {plural}."""

_COMPLETION = """\
Given a name and the most likely {noun} (rank 1), suggest {more} more {plural} that could also be possible.

Consider:
1. Culturally/geographically similar countries
2. Countries where this name pattern might also appear
3. Historical migration patterns

The rank 1 {noun} is already determined. Suggest {ranks}.

Valid {plural}: {labels}
Output a JSON array of exactly {more} {plural} for {ranks}."""

_RECALL_USER = """\
Name: {name}

Recall real people with this name."""

_DIRECT_USER = "Name: {name}"

_COMPLETION_USER_RECALLED = """\
Name: {name}

Recalled people: {recalled}
Rank 1 (from recall): {top1}

Suggest {more} more {plural} for {ranks}."""

_COMPLETION_USER_FALLBACK = """\
Name: {name}
Rank 1 (confirmed): {top1}

Suggest {more} more {plural} for {ranks}."""


# First lines identify the prompt; they do not depend on the granularity
# except through the noun, so match on the fixed prefix.
_SIGNATURES = [
    ('You are recalling real people based on a given name.', PromptKind.PERSON_RECALL),
    ('You are recalling athletes and entertainers based on a given name.', PromptKind.MEDIA_RECALL),
    ('You are an expert in identifying the ', PromptKind.DIRECT),
    ('Given a name and the most likely ', PromptKind.COMPLETION),
]


def _fields(granularity: Granularity, labels: Iterable[str]) -> dict[str, str]:
    return {
        'noun': granularity.noun,
        'Noun': granularity.noun.capitalize(),
        'plural': granularity.plural,
        'labels': ', '.join(labels),
    }


def _ranks(k: int) -> str:
    return 'rank 2' if k == 2 else f'ranks 2-{k}'


def person_recall_prompt(labels: Iterable[str], m: int = 4,
                         granularity: Granularity = Granularity.NATIONALITY) -> str:
    return _PERSON_RECALL.format(m=m, **_fields(granularity, labels))


def media_recall_prompt(labels: Iterable[str], m: int = 4,
                        granularity: Granularity = Granularity.NATIONALITY) -> str:
    return _MEDIA_RECALL.format(m=m, **_fields(granularity, labels))


def recall_user_prompt(name: str) -> str:
    return _RECALL_USER.format(name=name)


def direct_prompt(labels: Iterable[str], k: int = 5,
                  granularity: Granularity = Granularity.NATIONALITY) -> str:
    return _DIRECT.format(k=k, **_fields(granularity, labels))


def direct_user_prompt(name: str) -> str:
    return _DIRECT_USER.format(name=name)


def completion_prompt(labels: Iterable[str], k: int = 5,
                      granularity: Granularity = Granularity.NATIONALITY) -> str:
    return _COMPLETION.format(more=k - 1, ranks=_ranks(k), **_fields(granularity, labels))


def completion_user_prompt(name: str, top1: str, recalled: list[dict[str, str]]|None,
                           k: int = 5, granularity: Granularity = Granularity.NATIONALITY) -> str:
    """ The recall-success variant carries the recalled people as JSON;
        with no recalled people the shorter 'confirmed' variant is used.
    """
    common = dict(name=name, top1=top1, more=k - 1, ranks=_ranks(k), plural=granularity.plural)
    if recalled:
        return _COMPLETION_USER_RECALLED.format(recalled=json.dumps(recalled, ensure_ascii=False), **common)
    return _COMPLETION_USER_FALLBACK.format(**common)


class PromptInfo(NamedTuple):
    kind: PromptKind
    granularity: Granularity
    labels: list[str]


def identify_prompt(system_prompt: str) -> PromptInfo|None:
    """ Work out which of the four system prompts this is, at which
        granularity, and the valid labels it lists.
    """
    kind = None
    for prefix, k in _SIGNATURES:
        if system_prompt.startswith(prefix):
            kind = k
            break
    if kind is None:
        return None
    for line in system_prompt.splitlines():
        for g in Granularity:
            marker = f'Valid {g.plural}: '
            if line.startswith(marker):
                labels = [l.strip() for l in line[len(marker):].split(',') if l.strip()]
                return PromptInfo(kind, g, labels)
    return None


def name_from_user_prompt(user_prompt: str) -> str|None:
    first = user_prompt.splitlines()[0] if user_prompt else ''
    return first[6:].strip() if first.startswith('Name: ') else None


def rank1_from_user_prompt(user_prompt: str) -> str|None:
    for line in user_prompt.splitlines():
        for marker in ('Rank 1 (from recall): ', 'Rank 1 (confirmed): '):
            if line.startswith(marker):
                return line[len(marker):].strip()
    return None
