""" Memory aggregation: merge both agents' recalls and vote on labels.

    Recall order, used to break ties, is Person-agent entries in emit order
    followed by Media-agent entries in emit order.
"""
from collections import Counter
from typing import NamedTuple

from .recall_agents import AgentRecall, RecallEntry


class RecallSet(NamedTuple):
    entries: tuple[RecallEntry, ...] = ()

    def is_empty(self) -> bool:
        return not self.entries


class VoteTally(NamedTuple):
    counts: Counter[str]
    first_seen: dict[str, int]

    def total(self) -> int:
        return sum(self.counts.values())


def merge_recalls(person: AgentRecall, media: AgentRecall) -> RecallSet:
    """ Simple union; the same individual recalled by both agents is kept twice. """
    return RecallSet(tuple(person.entries) + tuple(media.entries))


def tally_votes(recall_set: RecallSet) -> VoteTally:
    counts: Counter[str] = Counter()
    first_seen: dict[str, int] = {}
    for i, entry in enumerate(recall_set.entries):
        counts[entry.nationality] += 1
        first_seen.setdefault(entry.nationality, i)
    return VoteTally(counts, first_seen)


def _vote_order(tally: VoteTally) -> list[str]:
    return sorted((y for y, c in tally.counts.items() if c > 0),
                  key=lambda y: (-tally.counts[y], tally.first_seen[y]))


def select_top1(tally: VoteTally) -> str|None:
    """ The most voted label; ties go to the label recalled first. """
    order = _vote_order(tally)
    return order[0] if order else None


def positive_labels(tally: VoteTally) -> list[str]:
    """ Every label with a positive count, by count descending then first occurrence. """
    return _vote_order(tally)
