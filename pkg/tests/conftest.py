import pytest

from breaknet.data import NewsArticle
from breaknet.embedding import HashVectorizer
from tests.util import make_rng


@pytest.fixture
def rng():
    return make_rng(20240817)


@pytest.fixture
def channel_pair():
    # distinct seeds: the two channels must never share a source
    return HashVectorizer(11, 8), HashVectorizer(12, 8)


@pytest.fixture
def text_article():
    return NewsArticle(
        "a-1",
        ["quake hits the coast.", "officials deny reports.", "markets shrug it off."],
        None,
        1,
    )
