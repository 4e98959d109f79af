"""Character-level vocabulary."""

from __future__ import annotations

from typing import Iterable, Sequence

from .errors import TokenOutOfRange

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
SPECIALS = (PAD, BOS, EOS, UNK)


class Vocab:
    """Maps characters to ids. Ids 0-3 are reserved for pad/bos/eos/unk."""

    def __init__(self, chars: Iterable[str]):
        seen = []
        for ch in chars:
            if len(ch) != 1:
                raise ValueError(f"vocabulary entries must be single characters, got {ch!r}")
            if ch not in seen:
                seen.append(ch)
        self.tokens: list[str] = list(SPECIALS) + seen
        self._index = {t: i for i, t in enumerate(self.tokens)}

    pad_id, bos_id, eos_id, unk_id = 0, 1, 2, 3

    @classmethod
    def default(cls) -> "Vocab":
        """Latin-1 bytes plus the Arabic block (U+0600-U+06FF)."""
        chars = [chr(c) for c in range(0x20, 0x100) if chr(c).isprintable()]
        chars += [chr(c) for c in range(0x0600, 0x0700)]
        return cls(chars)

    @classmethod
    def from_tokens(cls, tokens: Sequence[str]) -> "Vocab":
        if tuple(tokens[: len(SPECIALS)]) != SPECIALS:
            raise ValueError("token list must start with the special tokens")
        return cls(tokens[len(SPECIALS):])

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.tokens == other.tokens

    def encode(self, text: str) -> list[int]:
        return [self._index.get(ch, self.unk_id) for ch in text]

    def decode(self, ids: Iterable[int]) -> str:
        out = []
        for i in ids:
            if not 0 <= i < len(self.tokens):
                raise TokenOutOfRange(f"token id {i} outside vocabulary of size {len(self.tokens)}")
            if i >= len(SPECIALS):
                out.append(self.tokens[i])
        return "".join(out)
