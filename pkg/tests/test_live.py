""" End-to-end run against a live OpenAI-compatible endpoint. Runs only when
    an API key is present in the environment and NAMERECALL_TEST_SPLIT
    names a test split written by `namerecall prepare-data`.
"""
import os
import time

import pytest
from hamcrest import assert_that, greater_than_or_equal_to, has_length, less_than
from sklearn.model_selection import train_test_split

from namerecall.backend import BackendConfig, HttpChatBackend, ThrottledBackend
from namerecall.dataset import read_split_file
from namerecall.evaluation import accuracy
from namerecall.prediction import PredictConfig, predict_many
from namerecall.taxonomy import load_default_taxonomy
from .helpers import run


SPLIT = os.environ.get('NAMERECALL_TEST_SPLIT', '')

pytestmark = [
    pytest.mark.skipif(not os.environ.get('OPENAI_API_KEY'), reason='OPENAI_API_KEY is not set'),
    pytest.mark.skipif(not os.path.exists(SPLIT), reason='NAMERECALL_TEST_SPLIT does not name a test split'),
]


def test_live_subsample():
    taxonomy = load_default_taxonomy()
    test_set = read_split_file(SPLIT)
    sample, _ = train_test_split(test_set, train_size=100, random_state=42,
                                 stratify=[item.nationality for item in test_set])

    async def predict_sample():
        backend = ThrottledBackend(HttpChatBackend(BackendConfig()), 8)
        try:
            return await predict_many([item.name for item in sample], PredictConfig(), backend, taxonomy,
                                      concurrency_limit=8)
        finally:
            await backend.aclose()

    start = time.perf_counter()
    predictions = run(predict_sample())
    elapsed = time.perf_counter() - start

    assert_that(predictions, has_length(100))
    parsed = sum(p.calls.reprompts == 0 for p in predictions) / len(predictions)
    assert_that(parsed, greater_than_or_equal_to(0.95))
    top1 = accuracy([(item.nationality, p.ranking.ranks) for item, p in zip(sample, predictions)])
    assert_that(top1, greater_than_or_equal_to(0.60))
    assert_that(elapsed, less_than(600))
