"""Mention dictionary: normalization, prior probabilities, longest-match scan."""

from __future__ import annotations

import re
import sqlite3
import struct
import threading
from dataclasses import dataclass
from typing import NamedTuple

from .errors import DataError

_MAGIC = b"GWDICT1"
_WS_RE = re.compile(r"\s+")


class Candidate(NamedTuple):
    article: int
    count: int
    prior: float


@dataclass(frozen=True)
class DictEntry:
    mention: str                       # already normalized
    candidates: tuple[Candidate, ...]  # sorted by descending prior, ties by id

    @property
    def top(self) -> Candidate:
        return self.candidates[0]


def normalize_mention(raw: str) -> str:
    """Lowercase, drop parenthesized text, collapse whitespace, trim.

    Nested parentheses are removed up to the matching closer; an unmatched
    opener removes everything to the end of the string. Returns "" when
    nothing survives, which callers treat as no-mention.
    """
    out = []
    depth = 0
    for ch in raw:
        if ch == "(":
            depth += 1
        elif ch == ")" and depth > 0:
            depth -= 1
        elif depth == 0:
            out.append(ch)
    return _WS_RE.sub(" ", "".join(out)).strip().lower()


def _make_entries(counts: dict[str, dict[int, int]]) -> dict[str, DictEntry]:
    """Merge raw-mention counts under normalization and compute priors."""
    merged: dict[str, dict[int, int]] = {}
    for raw, per_article in counts.items():
        m = normalize_mention(raw)
        if not m:
            continue
        slot = merged.setdefault(m, {})
        for article, count in per_article.items():
            if count > 0:
                slot[article] = slot.get(article, 0) + count
    entries: dict[str, DictEntry] = {}
    for m in sorted(merged):
        per_article = merged[m]
        total = sum(per_article.values())
        if total <= 0:
            continue
        cands = sorted(((a, c, c / total) for a, c in per_article.items()),
                       key=lambda t: (-t[2], t[0]))
        entries[m] = DictEntry(m, tuple(Candidate(*t) for t in cands))
    return entries


class Dictionary:
    """In-memory mention -> candidate-article store with prior probabilities."""

    def __init__(self, entries: dict[str, DictEntry]):
        self.entries = entries
        self.max_token_len = max((len(m.split()) for m in entries), default=0)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, mention: str) -> bool:
        return mention in self.entries

    def get(self, mention: str):
        """Exact lookup by already-normalized mention."""
        return self.entries.get(mention)

    def lookup(self, raw: str):
        """Normalize then look up; None when absent or nothing survives."""
        m = normalize_mention(raw)
        return self.entries.get(m) if m else None

    @classmethod
    def from_counts(cls, counts: dict[str, dict[int, int]]) -> "Dictionary":
        return cls(_make_entries(counts))

    @classmethod
    def build(cls, counts_path: str, n_nodes: int | None = None) -> "Dictionary":
        """Load a ``dict_counts.tsv`` file (mention, article_id, count)."""
        counts: dict[str, dict[int, int]] = {}
        with open(counts_path, encoding="utf-8") as fh:
            fh.readline()  # header
            for lineno, line in enumerate(fh, start=2):
                line = line.rstrip("\n")
                if not line:
                    continue
                cols = line.split("\t")
                if len(cols) != 3:
                    raise DataError(f"{counts_path}:{lineno}: expected 3 columns")
                try:
                    article, count = int(cols[1]), int(cols[2])
                except ValueError:
                    raise DataError(f"{counts_path}:{lineno}: bad integer") from None
                if n_nodes is not None and not 0 <= article < n_nodes:
                    raise DataError(f"{counts_path}:{lineno}: unknown article id {article}")
                slot = counts.setdefault(cols[0], {})
                slot[article] = slot.get(article, 0) + count
        return cls.from_counts(counts)

    def save(self, path: str) -> None:
        """Write the binary snapshot: string table, entry offsets, triples."""
        mentions = sorted(self.entries)
        strtab = bytearray()
        offsets = bytearray()
        triples = bytearray()
        n_triples = 0
        for m in mentions:
            mb = m.encode("utf-8")
            offsets += struct.pack("<QII", len(strtab), len(mb),
                                   len(self.entries[m].candidates))
            strtab += mb
            for c in self.entries[m].candidates:
                triples += struct.pack("<IQd", c.article, c.count, c.prior)
                n_triples += 1
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<QQQQ", len(mentions), self.max_token_len,
                                 len(strtab), n_triples))
            fh.write(bytes(offsets))
            fh.write(bytes(strtab))
            fh.write(bytes(triples))

    @classmethod
    def load(cls, path: str) -> "Dictionary":
        with open(path, "rb") as fh:
            if fh.read(len(_MAGIC)) != _MAGIC:
                raise DataError(f"{path}: not a dictionary snapshot")
            n_entries, _max_len, strtab_len, n_triples = struct.unpack("<QQQQ", fh.read(32))
            offs = [struct.unpack("<QII", fh.read(16)) for _ in range(n_entries)]
            strtab = fh.read(strtab_len)
            blob = fh.read(n_triples * 20)
        entries: dict[str, DictEntry] = {}
        pos = 0
        for str_off, str_len, n_cand in offs:
            m = strtab[str_off:str_off + str_len].decode("utf-8")
            cands = [Candidate(*struct.unpack_from("<IQd", blob, (pos + i) * 20))
                     for i in range(n_cand)]
            pos += n_cand
            entries[m] = DictEntry(m, tuple(cands))
        if pos != n_triples:
            raise DataError(f"{path}: truncated dictionary snapshot")
        return cls(entries)


class SqliteDictionary:
    """Dictionary served from a sqlite file without loading it into memory.

    Read-only and safe for concurrent readers (one connection per thread).
    """

    def __init__(self, path: str):
        self._path = path
        self._local = threading.local()
        row = self._conn().execute(
            "SELECT value FROM meta WHERE key='max_token_len'").fetchone()
        if row is None:
            raise DataError(f"{path}: not a dictionary database")
        self.max_token_len = int(row[0])

    def _conn(self) -> sqlite3.Connection:
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = sqlite3.connect(f"file:{self._path}?mode=ro", uri=True)
            self._local.conn = conn
        return conn

    def get(self, mention: str):
        row = self._conn().execute(
            "SELECT candidates FROM entries WHERE mention=?", (mention,)).fetchone()
        if row is None:
            return None
        blob = row[0]
        (n,) = struct.unpack_from("<I", blob, 0)
        cands = [Candidate(*struct.unpack_from("<IQd", blob, 4 + i * 20))
                 for i in range(n)]
        return DictEntry(mention, tuple(cands))

    def lookup(self, raw: str):
        m = normalize_mention(raw)
        return self.get(m) if m else None

    def __contains__(self, mention: str) -> bool:
        return self.get(mention) is not None

    @classmethod
    def create(cls, dictionary: Dictionary, path: str) -> "SqliteDictionary":
        conn = sqlite3.connect(path)
        try:
            conn.execute("DROP TABLE IF EXISTS entries")
            conn.execute("DROP TABLE IF EXISTS meta")
            conn.execute("CREATE TABLE meta (key TEXT PRIMARY KEY, value TEXT)")
            conn.execute("CREATE TABLE entries (mention TEXT PRIMARY KEY, candidates BLOB)")
            conn.execute("INSERT INTO meta VALUES ('max_token_len', ?)",
                         (str(dictionary.max_token_len),))
            for m in sorted(dictionary.entries):
                cands = dictionary.entries[m].candidates
                blob = struct.pack("<I", len(cands)) + b"".join(
                    struct.pack("<IQd", c.article, c.count, c.prior) for c in cands)
                conn.execute("INSERT INTO entries VALUES (?, ?)", (m, blob))
            conn.commit()
        finally:
            conn.close()
        return cls(path)


def longest_match_scan(store, tokens: list[str]):
    """Greedy left-to-right extraction of the longest dictionary mentions.

    Returns a list of ((start, end), DictEntry) with disjoint, ordered spans
    over ``tokens``. Candidate spans are joined on single spaces and
    normalized before lookup, so raw tokens may carry case or parenthesized
    noise; tokens that match nothing are consumed one at a time.
    """
    matches = []
    i, n = 0, len(tokens)
    max_len = store.max_token_len
    while i < n:
        hit = None
        for length in range(min(max_len, n - i), 0, -1):
            m = normalize_mention(" ".join(tokens[i:i + length]))
            if not m:
                continue
            entry = store.get(m)
            if entry is not None:
                hit = ((i, i + length), entry)
                break
        if hit is not None:
            matches.append(hit)
            i = hit[0][1]
        else:
            i += 1
    return matches
