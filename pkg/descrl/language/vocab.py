"""
Closed description vocabulary.
Ids are dense; BOS=0, EOS=1, PAD=2.
"""

from typing import Dict, Iterable, List, Sequence

from ..env.world import SEMANTIC_NAMES
from ..exceptions import ValidationError

BOS, EOS, PAD = 0, 1, 2

SPECIAL_TOKENS = ("<bos>", "<eos>", "<pad>")
VERBS = ("go", "turn", "pass", "enter", "stop", "wait")
DIRECTIONS = ("left", "right", "forward")
SPATIAL = ("near", "toward", "into", "past", "the")


class Vocabulary:
    """Bidirectional token <-> id map."""

    def __init__(self, tokens: Sequence[str]):
        if len(set(tokens)) != len(tokens):
            raise ValidationError("Duplicate tokens in vocabulary", field="tokens")
        self.tokens: List[str] = list(tokens)
        self._ids: Dict[str, int] = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def id(self, token: str) -> int:
        try:
            return self._ids[token]
        except KeyError:
            raise ValidationError(f"Token '{token}' not in vocabulary", field="token") from None

    def encode(self, words: Iterable[str]) -> List[int]:
        return [self.id(w) for w in words]

    def decode(self, ids: Iterable[int], strip: bool = True) -> List[str]:
        """Tokens for ids; with strip, stops at EOS and drops BOS/PAD."""
        words = []
        for i in ids:
            i = int(i)
            if not 0 <= i < len(self.tokens):
                raise ValidationError(f"Token id {i} out of range", field="ids")
            if strip and i == EOS:
                break
            if strip and i in (BOS, PAD):
                continue
            words.append(self.tokens[i])
        return words

    def text(self, ids: Iterable[int]) -> str:
        return " ".join(self.decode(ids))


def default_vocabulary() -> Vocabulary:
    return Vocabulary(SPECIAL_TOKENS + VERBS + DIRECTIONS + SPATIAL + SEMANTIC_NAMES)


VOCAB = default_vocabulary()
VOCAB_SIZE = len(VOCAB)
