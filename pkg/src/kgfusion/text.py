"""Text normalization shared by the graph loader, the BM25 index and the keyword extractor."""

import re
import unicodedata

_WS = re.compile(r"\s+")
_NON_ALNUM = re.compile(r"[\W_]+")

# Small English list; kept deliberately short so domain words survive.
STOPWORDS = frozenset(
    """
    a about above after again against all also am an and any are as at be because
    been before being below between both but by can could did do does doing down
    during each either few for from further had has have having he her here hers
    herself him himself his how however i if in into is it its itself just me
    more most my myself no nor not now of off on once only or other our ours
    ourselves out over own same she should so some such than that the their
    theirs them themselves then there these they this those through to too
    under until up upon us very was we were what when where which while who
    whom why will with within without would you your yours yourself yourselves
    may might must shall since thus whether via among per
    """.split()
)


def _is_punct(ch):
    return unicodedata.category(ch)[0] in "PS"


def normalize_label(raw: str) -> str:
    """Lowercase, collapse whitespace and strip surrounding punctuation.

    >>> normalize_label("  High   Blood Pressure. ")
    'high blood pressure'
    """
    text = _WS.sub(" ", raw.lower()).strip()
    start, end = 0, len(text)
    while start < end and (_is_punct(text[start]) or text[start].isspace()):
        start += 1
    while end > start and (_is_punct(text[end - 1]) or text[end - 1].isspace()):
        end -= 1
    return text[start:end]


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return [tok for tok in _NON_ALNUM.split(text.lower()) if tok]


def is_stopword(token: str) -> bool:
    return token in STOPWORDS
