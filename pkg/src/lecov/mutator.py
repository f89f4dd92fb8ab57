"""Seeded text-mutation operators: synonym replacement, random deletion,
random insertion, random swap, and punctuation insertion."""
from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

PUNCTUATION_MARKS = (".", ",", "!", "?", ";", ":")

# Trailing punctuation stripped before synonym lookup and restored after.
_TRAILING = "".join(PUNCTUATION_MARKS) + "'\")"


class MutationOp(Enum):
    SYNONYM_REPLACE = "synonym_replace"
    RANDOM_DELETE = "random_delete"
    RANDOM_INSERT = "random_insert"
    RANDOM_SWAP = "random_swap"
    PUNCTUATION_INSERT = "punctuation_insert"


ALL_OPS = tuple(MutationOp)


class NoOpApplicable(Exception):
    """The chosen operator cannot apply to this text (too few tokens, or no
    token has a known synonym). The caller resamples an operator."""

    def __init__(self, op: MutationOp, reason: str):
        super().__init__(f"{op.value}: {reason}")
        self.op = op


@dataclass(frozen=True)
class SynonymProvider:
    lookup: dict[str, tuple[str, ...]]
    source_id: str

    def synonyms(self, word: str) -> tuple[str, ...]:
        return self.lookup.get(word.lower(), ())

    @classmethod
    def from_text(cls, text: str, source_id: str) -> "SynonymProvider":
        """Parse `word: syn1, syn2` lines; blank lines and # comments skipped."""
        lookup: dict[str, tuple[str, ...]] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if ":" not in line:
                raise ValueError(f"synonym file line {lineno}: missing ':'")
            word, _, rest = line.partition(":")
            word = word.strip().lower()
            syns = tuple(
                s for s in (p.strip().lower() for p in rest.split(",")) if s and s != word
            )
            if word and syns:
                lookup[word] = syns
        return cls(lookup=lookup, source_id=source_id)

    @classmethod
    def from_file(cls, path: str | Path) -> "SynonymProvider":
        path = Path(path)
        return cls.from_text(path.read_text(encoding="utf-8"), source_id=str(path))

    @classmethod
    def bundled(cls) -> "SynonymProvider":
        text = resources.files("lecov.data").joinpath("synonyms.txt").read_text("utf-8")
        return cls.from_text(text, source_id="bundled")


def tokenize(text: str) -> list[str]:
    return text.split()


def pick_operator(rng_seed: int) -> MutationOp:
    return ALL_OPS[random.Random(rng_seed).randrange(len(ALL_OPS))]


def mutate(
    text: str,
    op: MutationOp,
    rng_seed: int,
    provider: SynonymProvider | None = None,
) -> str:
    """Apply one operator with randomness fully determined by rng_seed."""
    rng = random.Random(rng_seed)
    tokens = tokenize(text)
    n = len(tokens)

    if op is MutationOp.RANDOM_DELETE:
        if n < 2:
            raise NoOpApplicable(op, "needs at least 2 tokens")
        del tokens[rng.randrange(n)]
    elif op is MutationOp.RANDOM_INSERT:
        if n < 1:
            raise NoOpApplicable(op, "needs at least 1 token to duplicate")
        tokens.insert(rng.randrange(n + 1), tokens[rng.randrange(n)])
    elif op is MutationOp.RANDOM_SWAP:
        if n < 2:
            raise NoOpApplicable(op, "needs at least 2 tokens")
        i = rng.randrange(n)
        j = rng.randrange(n - 1)
        if j >= i:
            j += 1
        tokens[i], tokens[j] = tokens[j], tokens[i]
    elif op is MutationOp.PUNCTUATION_INSERT:
        tokens.insert(rng.randrange(n + 1), PUNCTUATION_MARKS[rng.randrange(len(PUNCTUATION_MARKS))])
    elif op is MutationOp.SYNONYM_REPLACE:
        if provider is None:
            raise NoOpApplicable(op, "no synonym provider configured")
        eligible = [
            i for i, tok in enumerate(tokens) if provider.synonyms(tok.rstrip(_TRAILING))
        ]
        if not eligible:
            raise NoOpApplicable(op, "no token has a known synonym")
        i = eligible[rng.randrange(len(eligible))]
        word = tokens[i].rstrip(_TRAILING)
        suffix = tokens[i][len(word):]
        syns = provider.synonyms(word)
        tokens[i] = syns[rng.randrange(len(syns))] + suffix
    else:  # pragma: no cover
        raise AssertionError(f"unknown operator {op}")

    return " ".join(tokens)
