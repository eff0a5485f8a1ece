""" Conditional prediction and Top-K assembly.

    `predict` runs the whole per-name pipeline:

      1. both recall agents, concurrently
      2. vote tally over the merged recall set
      3. rank 1 from the vote, or from direct prediction when nothing was recalled
      4. completion of ranks 2..K, then assembly as
         (rank 1) + unique(recalled labels by vote order + completion)

    Short rankings are padded from a frequency order so every prediction has
    exactly K distinct labels.
"""
import asyncio
from dataclasses import dataclass, field, replace
from enum import Enum
from itertools import chain
import logging
import time
from typing import Any, Iterable, NamedTuple, Sequence

from .aggregation import RecallSet, merge_recalls, positive_labels, select_top1, tally_votes
from .backend import ChatBackend, ChatRequest, extract_json_array
from .errors import BackendError, ConfigError, PaddingError
from .prompts import completion_prompt, completion_user_prompt, direct_prompt, direct_user_prompt
from .recall_agents import DEFAULT_M, AgentKind, RecallEntry, run_dual_recall
from .taxonomy import Granularity, Taxonomy


class Provenance(Enum):
    VOTE = 'vote'
    RECALL_RESIDUAL = 'recall_residual'
    COMPLETION = 'completion'
    DIRECT = 'direct'
    PAD = 'pad'


class RegionMode(Enum):
    NATIVE_PROMPT = 'native_prompt'
    MAPPED = 'mapped_from_nationality'


class PredictionRanking(NamedTuple):
    ranks: tuple[str, ...]
    provenance: tuple[Provenance, ...]
    used_fallback: bool = False


@dataclass
class CallAccounting:
    """ API calls for one prediction, or summed over many. Re-prompts after
        malformed output are kept apart from `total`.
    """
    recall_calls: int = 0
    direct_calls: int = 0
    completion_calls: int = 0
    reprompts: int = 0

    @property
    def total(self) -> int:
        return self.recall_calls + self.direct_calls + self.completion_calls

    def __add__(self, other: 'CallAccounting') -> 'CallAccounting':
        return CallAccounting(self.recall_calls + other.recall_calls,
                              self.direct_calls + other.direct_calls,
                              self.completion_calls + other.completion_calls,
                              self.reprompts + other.reprompts)

    def to_json(self) -> dict[str, int]:
        return {
            'recall': self.recall_calls,
            'direct': self.direct_calls,
            'completion': self.completion_calls,
            'reprompts': self.reprompts,
            'total': self.total,
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> 'CallAccounting':
        return cls(data.get('recall', 0), data.get('direct', 0), data.get('completion', 0),
                   data.get('reprompts', 0))


@dataclass(frozen=True)
class Ablation:
    drop_person_agent: bool = False
    drop_media_agent: bool = False
    drop_completion: bool = False
    drop_recall: bool = False

    @property
    def agents(self) -> tuple[AgentKind, ...]:
        if self.drop_recall:
            return ()
        return tuple(a for a, dropped in [(AgentKind.PERSON, self.drop_person_agent),
                                          (AgentKind.MEDIA, self.drop_media_agent)] if not dropped)

    @property
    def name(self) -> str:
        for name, preset in ABLATIONS.items():
            if preset == self:
                return name
        flags = [f for f in ('drop_person_agent', 'drop_media_agent', 'drop_completion', 'drop_recall')
                 if getattr(self, f)]
        return '+'.join(flags) or 'full'

    def to_json(self) -> dict[str, bool]:
        return {
            'drop_person_agent': self.drop_person_agent,
            'drop_media_agent': self.drop_media_agent,
            'drop_completion': self.drop_completion,
            'drop_recall': self.drop_recall,
        }


ABLATIONS = {
    'full': Ablation(),
    'wo-person': Ablation(drop_person_agent=True),
    'wo-media': Ablation(drop_media_agent=True),
    'wo-completion': Ablation(drop_completion=True),
    'wo-recall': Ablation(drop_recall=True),
}


def parse_ablation(name: str) -> Ablation:
    try:
        return ABLATIONS[name.strip().lower()]
    except KeyError:
        raise ConfigError(f'Unknown ablation {name!r}; valid configurations are {", ".join(ABLATIONS)}')


@dataclass(frozen=True)
class PredictConfig:
    m: int = DEFAULT_M
    k: int = 5
    granularity: Granularity = Granularity.NATIONALITY
    region_mode: RegionMode = RegionMode.NATIVE_PROMPT
    ablation: Ablation = field(default_factory=Ablation)
    reprompt: bool = True

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError(f'M must be >= 1, got {self.m}')
        if self.k < 1:
            raise ConfigError(f'K must be >= 1, got {self.k}')


class Prediction(NamedTuple):
    ranking: PredictionRanking
    recall: RecallSet
    calls: CallAccounting
    elapsed: float = 0.0


def frequency_order_at(taxonomy: Taxonomy, granularity: Granularity,
                       frequency_order: Sequence[str]|None = None) -> list[str]:
    """ Turn a frequency order into a total order over the labels of
        `granularity`. The order may list nationalities, which are coarsened,
        or labels of `granularity` itself. Labels it misses follow in
        taxonomy order.
    """
    valid = set(taxonomy.labels(granularity))
    order: list[str] = []
    for label in frequency_order or ():
        if label in taxonomy.region_of_nationality:
            order.append(taxonomy.coarsen(label, granularity))
        elif label in valid:
            order.append(label)
    return list(dict.fromkeys(chain(order, taxonomy.labels(granularity))))


def pad_ranking(existing: Sequence[str], k: int, taxonomy: Taxonomy,
                frequency_order: Sequence[str]|None = None,
                granularity: Granularity = Granularity.NATIONALITY) -> list[str]:
    """ Append the most frequent absent labels until there are `k`. """
    labels = taxonomy.labels(granularity)
    if k > len(labels):
        raise PaddingError(f'Cannot pad a ranking to {k} labels; only {len(labels)} {granularity.plural} exist')
    rtn = list(existing)
    if len(rtn) >= k:
        return rtn
    present = set(rtn)
    for label in frequency_order_at(taxonomy, granularity, frequency_order):
        if len(rtn) == k:
            break
        if label not in present:
            rtn.append(label)
            present.add(label)
    return rtn


def assemble_ranking(top1: str, y_plus_residual: Sequence[str], completion: Sequence[str], k: int,
                     taxonomy: Taxonomy, frequency_order: Sequence[str]|None = None,
                     granularity: Granularity = Granularity.NATIONALITY,
                     top1_provenance: Provenance = Provenance.VOTE,
                     completion_provenance: Provenance = Provenance.COMPLETION,
                     used_fallback: bool = False) -> PredictionRanking:
    """ (top1) + unique(residual + completion), cut to k and padded to k. """
    if top1 in y_plus_residual:
        raise ValueError(f'{top1!r} appears in the residual labels')
    ranks = [top1]
    provenance = [top1_provenance]
    candidates = chain(((l, Provenance.RECALL_RESIDUAL) for l in y_plus_residual),
                       ((l, completion_provenance) for l in completion))
    for label, source in candidates:
        if len(ranks) >= k:
            break
        if label not in ranks:
            ranks.append(label)
            provenance.append(source)
    ranks, provenance = ranks[:k], provenance[:k]
    if len(ranks) < k:
        padded = pad_ranking(ranks, k, taxonomy, frequency_order, granularity)
        provenance.extend([Provenance.PAD] * (len(padded) - len(ranks)))
        ranks = padded
    return PredictionRanking(tuple(ranks), tuple(provenance), used_fallback)


def _labels_from(text: str, taxonomy: Taxonomy, granularity: Granularity,
                 exclude: Iterable[str] = ()) -> list[str]|None:
    """ Valid, de-duplicated labels from a JSON array answer, or None if the
        answer holds no array at all.
    """
    items = extract_json_array(text)
    if items is None:
        return None
    skip = set(exclude)
    rtn: list[str] = []
    for item in items:
        label = taxonomy.normalize(item, granularity)
        if label is not None and label not in skip and label not in rtn:
            rtn.append(label)
    return rtn


async def _ask_direct(name: str, backend: ChatBackend, taxonomy: Taxonomy, k: int,
                      granularity: Granularity, calls: CallAccounting, reprompt: bool) -> list[str]:
    request = ChatRequest(direct_prompt(taxonomy.labels(granularity), k, granularity),
                          direct_user_prompt(name))
    calls.direct_calls += 1
    response = await backend.complete(request)
    labels = (_labels_from(response.text, taxonomy, granularity) or [])[:k]
    if len(labels) < k and reprompt:
        logging.info(f'Direct prediction for {name!r} gave {len(labels)} of {k} labels; asking again')
        calls.reprompts += 1
        retry = await backend.complete(request, attempt=1)
        again = (_labels_from(retry.text, taxonomy, granularity) or [])[:k]
        if len(again) > len(labels):
            labels = again
    return labels


async def direct_predict(name: str, backend: ChatBackend, taxonomy: Taxonomy, k: int = 5,
                         frequency_order: Sequence[str]|None = None,
                         granularity: Granularity = Granularity.NATIONALITY,
                         calls: CallAccounting|None = None, reprompt: bool = True) -> list[str]:
    """ Zero-shot Top-K for `name`, padded to exactly k labels. Backend
        errors propagate to the caller.
    """
    if k < 1:
        raise ValueError(f'K must be >= 1, got {k}')
    labels = await _ask_direct(name, backend, taxonomy, k, granularity,
                               calls if calls is not None else CallAccounting(), reprompt)
    return pad_ranking(labels, k, taxonomy, frequency_order, granularity)


def _recalled_people(recall_set: RecallSet, granularity: Granularity) -> list[dict[str, str]]:
    return [{'name': e.person, granularity.noun: e.nationality} for e in recall_set.entries]


async def complete_ranks(name: str, recall_set: RecallSet, top1: str, backend: ChatBackend,
                         taxonomy: Taxonomy, k: int = 5,
                         granularity: Granularity = Granularity.NATIONALITY,
                         calls: CallAccounting|None = None, reprompt: bool = True) -> list[str]:
    """ Ask for ranks 2..k given a fixed rank 1. Invalid labels and rank 1
        itself are dropped. Backend errors give an empty completion.
    """
    if taxonomy.normalize(top1, granularity) != top1:
        raise ValueError(f'{top1!r} is not a valid {granularity.noun} label')
    calls = calls if calls is not None else CallAccounting()
    request = ChatRequest(completion_prompt(taxonomy.labels(granularity), k, granularity),
                          completion_user_prompt(name, top1, _recalled_people(recall_set, granularity),
                                                 k, granularity))
    calls.completion_calls += 1
    try:
        response = await backend.complete(request)
        labels = _labels_from(response.text, taxonomy, granularity, exclude=[top1])
        if labels is None and reprompt:
            logging.info(f'Completion output for {name!r} has no JSON array; re-prompting')
            calls.reprompts += 1
            response = await backend.complete(request, attempt=1)
            labels = _labels_from(response.text, taxonomy, granularity, exclude=[top1])
    except BackendError as e:
        logging.warning(f'Completion failed for {name!r}; ranks will be padded: {e}')
        return []
    return (labels or [])[:k - 1]


def coarsen_ranking(ranking: PredictionRanking, taxonomy: Taxonomy, granularity: Granularity, k: int,
                    frequency_order: Sequence[str]|None = None) -> PredictionRanking:
    """ Map a nationality ranking to region or continent labels, keeping the
        first occurrence of each.
    """
    ranks: list[str] = []
    provenance: list[Provenance] = []
    for label, source in zip(ranking.ranks, ranking.provenance):
        coarse = taxonomy.coarsen(label, granularity)
        if coarse not in ranks:
            ranks.append(coarse)
            provenance.append(source)
    ranks, provenance = ranks[:k], provenance[:k]
    if len(ranks) < k:
        padded = pad_ranking(ranks, k, taxonomy, frequency_order, granularity)
        provenance.extend([Provenance.PAD] * (len(padded) - len(ranks)))
        ranks = padded
    return PredictionRanking(tuple(ranks), tuple(provenance), ranking.used_fallback)


async def predict(name: str, config: PredictConfig, backend: ChatBackend, taxonomy: Taxonomy,
                  frequency_order: Sequence[str]|None = None) -> Prediction:
    if not name or not name.strip():
        raise ValueError('Input name must be non-empty')
    name = name.strip()
    if config.region_mode is RegionMode.MAPPED and config.granularity is not Granularity.NATIONALITY:
        inner = replace(config, granularity=Granularity.NATIONALITY, k=Granularity.NATIONALITY.default_k,
                        region_mode=RegionMode.NATIVE_PROMPT)
        prediction = await predict(name, inner, backend, taxonomy, frequency_order)
        ranking = coarsen_ranking(prediction.ranking, taxonomy, config.granularity, config.k, frequency_order)
        return prediction._replace(ranking=ranking)

    start = time.perf_counter()
    g, k = config.granularity, config.k
    calls = CallAccounting()

    agents = config.ablation.agents
    if agents:
        dual = await run_dual_recall(name, backend, taxonomy, config.m, g, agents, config.reprompt)
        calls.recall_calls += dual.calls
        calls.reprompts += dual.reprompts
        recall_set = merge_recalls(dual.person, dual.media)
    else:
        recall_set = RecallSet()

    tally = tally_votes(recall_set)
    used_fallback = recall_set.is_empty()
    completion_provenance = Provenance.COMPLETION
    direct: list[str] = []
    residual: list[str] = []
    if used_fallback:
        direct = await _ask_direct(name, backend, taxonomy, k, g, calls, config.reprompt)
        if not direct:
            # Nothing valid even after asking again; rank 1 is the most frequent label.
            direct = pad_ranking([], 1, taxonomy, frequency_order, g)
        top1, top1_provenance = direct[0], Provenance.DIRECT
    else:
        top1 = select_top1(tally)
        assert top1 is not None
        top1_provenance = Provenance.VOTE
        residual = [y for y in positive_labels(tally) if y != top1]

    if config.ablation.drop_completion:
        # Voting alone on the recall path; the direct list as-is on the fallback path.
        completion = direct[1:]
        completion_provenance = Provenance.DIRECT
    elif k == 1:
        completion = []
    else:
        completion = await complete_ranks(name, recall_set, top1, backend, taxonomy, k, g, calls,
                                          config.reprompt)

    ranking = assemble_ranking(top1, residual, completion, k, taxonomy, frequency_order, g,
                               top1_provenance, completion_provenance, used_fallback)
    return Prediction(ranking, recall_set, calls, time.perf_counter() - start)


async def predict_many(names: Sequence[str], config: PredictConfig, backend: ChatBackend,
                       taxonomy: Taxonomy, frequency_order: Sequence[str]|None = None,
                       concurrency_limit: int = 8) -> list[Prediction]:
    """ Predict every name, at most `concurrency_limit` names at a time.
        Results come back in input order.
    """
    if concurrency_limit < 1:
        raise ConfigError(f'concurrency limit must be >= 1, got {concurrency_limit}')
    semaphore = asyncio.Semaphore(concurrency_limit)
    done = 0

    async def one(name: str) -> Prediction:
        nonlocal done
        async with semaphore:
            rtn = await predict(name, config, backend, taxonomy, frequency_order)
        done += 1
        if done % 50 == 0:
            logging.info(f'Predicted {done}/{len(names)} names')
        return rtn

    return list(await asyncio.gather(*[one(n) for n in names]))


class PredictionRecord(NamedTuple):
    """ One line of a predictions file. """
    name: str
    gold: str|None
    granularity: Granularity
    ranks: tuple[str, ...]
    provenance: tuple[Provenance, ...]
    recall: tuple[RecallEntry, ...]
    used_fallback: bool
    calls: CallAccounting
    elapsed: float|None = None
    config_fingerprint: str = ''

    def to_json(self) -> dict[str, Any]:
        rtn: dict[str, Any] = {
            'name': self.name,
            'gold': self.gold,
            'granularity': self.granularity.value,
            'ranks': list(self.ranks),
            'provenance': [p.value for p in self.provenance],
            'recall': [e.to_json() for e in self.recall],
            'used_fallback': self.used_fallback,
            'calls': self.calls.to_json(),
        }
        if self.elapsed is not None:
            rtn['elapsed'] = round(self.elapsed, 4)
        if self.config_fingerprint:
            rtn['config_fingerprint'] = self.config_fingerprint
        return rtn

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> 'PredictionRecord':
        return cls(
            name=data['name'],
            gold=data.get('gold'),
            granularity=Granularity.parse(data.get('granularity', 'nationality')),
            ranks=tuple(data['ranks']),
            provenance=tuple(Provenance(p) for p in data.get('provenance', [])),
            recall=tuple(RecallEntry.from_json(e) for e in data.get('recall', [])),
            used_fallback=bool(data.get('used_fallback', False)),
            calls=CallAccounting.from_json(data.get('calls', {})),
            elapsed=data.get('elapsed'),
            config_fingerprint=data.get('config_fingerprint', ''),
        )


def make_record(name: str, gold: str|None, prediction: Prediction, granularity: Granularity,
                timing: bool = True, config_fingerprint: str = '') -> PredictionRecord:
    return PredictionRecord(name, gold, granularity, prediction.ranking.ranks, prediction.ranking.provenance,
                            prediction.recall.entries, prediction.ranking.used_fallback, prediction.calls,
                            prediction.elapsed if timing else None, config_fingerprint)
