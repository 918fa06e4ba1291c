"""Sentence encoders: tokens -> fixed-size embeddings.

One bidirectional LSTM encoder is shared by user utterances, system actions,
candidate templates and rule conditions, so all of them live in the same
embedding space (the cosine matcher depends on that).  A hash-based stub
encoder with orthonormal outputs stands in for it in analytic tests.
"""

from __future__ import annotations

import hashlib
import re
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import FormatError
from .optim import Parameter, Rng, xavier_uniform

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

# placeholders like <cuisine> or <weather_attribute> stay single tokens
_TOKEN_RE = re.compile(r"<[a-z][a-z0-9_]*>|[a-z0-9]+(?:'[a-z0-9]+)?|[^\sa-z0-9]")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, detach punctuation, keep `<slot>` atomic."""
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    """Token -> index map with reserved padding and unknown entries."""

    def __init__(self, tokens: Iterable[str] = ()):
        self._index: dict[str, int] = {}
        for tok in (PAD_TOKEN, UNK_TOKEN):
            self._index[tok] = len(self._index)
        for tok in tokens:
            if tok not in self._index:
                self._index[tok] = len(self._index)

    @classmethod
    def from_texts(cls, texts: Iterable[str]) -> "Vocabulary":
        seen: dict[str, None] = {}
        for text in texts:
            for tok in tokenize(text):
                seen.setdefault(tok)
        return cls(seen)

    def index(self, token: str) -> int:
        return self._index.get(token, self._index[UNK_TOKEN])

    def indices(self, tokens: Sequence[str]) -> list[int]:
        return [self.index(t) for t in tokens]

    def tokens(self) -> list[str]:
        return list(self._index)

    def __len__(self) -> int:
        return len(self._index)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self._index) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        vocab = cls.__new__(cls)
        vocab._index = {tok: i for i, tok in enumerate(lines)}
        if vocab._index.get(PAD_TOKEN) != 0 or vocab._index.get(UNK_TOKEN) != 1:
            raise FormatError(f"{path}: missing reserved vocabulary entries")
        return vocab


class LstmCell:
    """Parameter bundle for one LSTM direction."""

    def __init__(self, name: str, d_in: int, d_hidden: int, rng: Rng):
        self.d_in = d_in
        self.d_hidden = d_hidden
        w_x = np.concatenate(
            [xavier_uniform(d_in, d_hidden, rng.child(k)) for k in range(4)], axis=1)
        w_h = np.concatenate(
            [xavier_uniform(d_hidden, d_hidden, rng.child(4 + k)) for k in range(4)], axis=1)
        self.w_x = Parameter(f"{name}.w_x", w_x)
        self.w_h = Parameter(f"{name}.w_h", w_h)
        self.b = Parameter(f"{name}.b", np.zeros(4 * d_hidden))

    def parameters(self) -> list[Parameter]:
        return [self.w_x, self.w_h, self.b]

    def step(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        return ad.lstm_step(x, h, c, self.w_x, self.w_h, self.b)


class SentenceEncoder:
    """Bidirectional LSTM over word embeddings; output is the concatenation
    of the final forward and final backward hidden states (2 * d_hidden)."""

    def __init__(self, vocab: Vocabulary, word_emb: Parameter,
                 fwd: LstmCell, bwd: LstmCell):
        self.vocab = vocab
        self.word_emb = word_emb
        self.fwd = fwd
        self.bwd = bwd

    @property
    def dim(self) -> int:
        return self.fwd.d_hidden + self.bwd.d_hidden

    def parameters(self) -> list[Parameter]:
        return [self.word_emb] + self.fwd.parameters() + self.bwd.parameters()

    def encode_tokens(self, tokens: Sequence[str]) -> Tensor:
        if not tokens:
            return ad.zeros(self.dim)
        idx = self.vocab.indices(tokens)
        embs = [self.word_emb[i] for i in idx]
        return ad.concat([self._run(self.fwd, embs),
                          self._run(self.bwd, embs[::-1])])

    def encode(self, text: str, cache: dict | None = None) -> Tensor:
        """Encode raw text; `cache` shares nodes within one forward pass."""
        if cache is not None and text in cache:
            return cache[text]
        out = self.encode_tokens(tokenize(text))
        if cache is not None:
            cache[text] = out
        return out

    @staticmethod
    def _run(cell: LstmCell, embs: list[Tensor]) -> Tensor:
        h = ad.zeros(cell.d_hidden)
        c = ad.zeros(cell.d_hidden)
        for x in embs:
            h, c = cell.step(x, h, c)
        return h


class StubEncoder:
    """Deterministic text -> unit basis vector map for analytic tests.

    Distinct strings land on (almost surely distinct) orthonormal basis
    vectors, so matcher math has closed forms.  Parameter-free.
    """

    def __init__(self, dim: int = 200):
        self.dim = dim

    def basis_index(self, text: str) -> int:
        digest = hashlib.sha1(text.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "big") % self.dim

    def encode(self, text: str, cache: dict | None = None) -> Tensor:
        v = np.zeros(self.dim)
        if text:
            v[self.basis_index(text)] = 1.0
        return Tensor(v)

    def parameters(self) -> list[Parameter]:
        return []


def load_word_vectors(path, vocab: Vocabulary, dim: int,
                      rng: Rng) -> tuple[np.ndarray, float]:
    """Read GloVe-style text vectors (token then `dim` floats per line).

    Rows for tokens present in the file are copied; everything else falls
    back to uniform [-0.1, 0.1].  Returns (matrix |V| x dim, coverage ratio).
    """
    table = rng.uniform(-0.1, 0.1, size=(len(vocab), dim))
    covered = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2 and not line.strip():
                continue
            token, values = parts[0], parts[1:]
            if len(values) != dim:
                raise FormatError(
                    f"{path}:{lineno}: expected {dim} values, got {len(values)}")
            try:
                row = np.array([float(v) for v in values])
            except ValueError as e:
                raise FormatError(f"{path}:{lineno}: {e}") from e
            if token in vocab:
                table[vocab.index(token)] = row
                covered += 1
    coverage = covered / max(1, len(vocab) - 2)  # reserved tokens excluded
    return table, coverage


def encode_catalog(templates: Sequence[str], encoder,
                   cache: dict | None = None) -> Tensor:
    """Embeddings for an ordered template list as a (K, dim) tensor."""
    rows = [encoder.encode(t, cache) for t in templates]
    return ad.stack_rows(rows, width=encoder.dim)
