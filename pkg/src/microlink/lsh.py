"""MinHash signatures, banded LSH, and the adaptive candidate search.

Signatures are vectors of 64-bit minima under a seeded hash family.  A
banding scheme splits a signature into ``bands`` slices of ``rows`` values;
two records become candidates when any slice matches exactly, which happens
with probability ``1 - (1 - S^r)^b`` at Jaccard similarity ``S``.  The
adaptive search probes a schedule of schemes from strict to loose and stops
at the first scheme that yields candidates.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import SchemeMismatchError

DEFAULT_N_HASHES = 100
_U64 = np.uint64
_SENTINEL = np.iinfo(np.uint64).max


@dataclass(frozen=True)
class BandingScheme:
    """A split of the signature into ``bands`` slices of ``rows`` values."""

    bands: int
    rows: int

    def __post_init__(self):
        if self.bands < 1 or self.rows < 1:
            raise ValueError("bands and rows must be positive")

    @property
    def signature_length(self):
        return self.bands * self.rows


@dataclass(frozen=True)
class AdaptiveSchedule:
    """Ordered banding schemes probed strict-to-loose, sharing one signature."""

    schemes: tuple
    n_hashes: int = DEFAULT_N_HASHES

    def __post_init__(self):
        if not self.schemes:
            raise ValueError("schedule must not be empty")
        for scheme in self.schemes:
            if scheme.signature_length != self.n_hashes:
                raise SchemeMismatchError(
                    f"scheme {scheme.bands}x{scheme.rows} does not factor "
                    f"signature length {self.n_hashes}"
                )

    def __iter__(self):
        return iter(self.schemes)

    @classmethod
    def default(cls):
        """Bands {4, 5, 10, 20} zipped with rows {25, 20, 10, 5}."""
        return cls(
            schemes=(
                BandingScheme(4, 25),
                BandingScheme(5, 20),
                BandingScheme(10, 10),
                BandingScheme(20, 5),
            ),
            n_hashes=DEFAULT_N_HASHES,
        )


@dataclass(frozen=True)
class MinHashSignature:
    """Per-hash minima for one record; empty sets get a non-colliding sentinel."""

    record_id: str
    minima: np.ndarray
    is_empty: bool = False

    def __len__(self):
        return len(self.minima)

    def __eq__(self, other):
        if not isinstance(other, MinHashSignature):
            return NotImplemented
        return (
            self.record_id == other.record_id
            and self.is_empty == other.is_empty
            and np.array_equal(self.minima, other.minima)
        )


@dataclass(frozen=True)
class CandidatePair:
    """An (open record, support record) pair with its exact Jaccard score."""

    open_id: str
    support_id: str
    score: float


def jaccard(a, b):
    """Exact Jaccard similarity |a n b| / |a u b|; 0.0 when both are empty."""
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


def s_curve(s, scheme):
    """Probability of sharing at least one bucket: 1 - (1 - S^r)^b."""
    if not 0.0 <= s <= 1.0:
        raise ValueError("similarity must lie in [0, 1]")
    return 1.0 - (1.0 - s ** scheme.rows) ** scheme.bands


def s_curve_table(schedule, grid):
    """(S, bands, rows, probability) rows for every scheme, for plotting."""
    rows = []
    for scheme in schedule:
        for s in grid:
            rows.append((float(s), scheme.bands, scheme.rows, s_curve(s, scheme)))
    return rows


def write_s_curve_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["S", "bands", "rows", "probability"])
        for s, bands, nrows, p in rows:
            writer.writerow([repr(s), bands, nrows, repr(p)])


def _token_hash(token):
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _mix64(v):
    # splitmix64 finalizer; uint64 arithmetic wraps mod 2^64 by design
    v = (v ^ (v >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
    v = (v ^ (v >> _U64(27))) * _U64(0x94D049BB133111EB)
    return v ^ (v >> _U64(31))


def hash_seeds(seed, n_hashes):
    """The per-position keys of the seeded hash family."""
    rng = np.random.default_rng(seed)
    return rng.integers(0, 2 ** 64, size=n_hashes, dtype=np.uint64)


def minhash_signature(shingles, seed, n_hashes=DEFAULT_N_HASHES, record_id="", _seeds=None):
    """MinHash signature of a shingle set under a seeded hash family.

    Deterministic for a fixed (shingles, seed) pair.  An empty set yields
    the sentinel signature, which never shares a bucket with anything.
    """
    if n_hashes < 1:
        raise ValueError("n_hashes must be positive")
    keys = hash_seeds(seed, n_hashes) if _seeds is None else _seeds
    if not shingles:
        minima = np.full(n_hashes, _SENTINEL, dtype=np.uint64)
        return MinHashSignature(record_id, minima, is_empty=True)
    base = np.fromiter(
        (_token_hash(t) for t in shingles), dtype=np.uint64, count=len(shingles)
    )
    minima = _mix64(base[None, :] ^ keys[:, None]).min(axis=1)
    return MinHashSignature(record_id, minima, is_empty=False)


def band_keys(signature, scheme):
    """Bucket key per band: the raw bytes of the band's row slice."""
    r = scheme.rows
    view = signature.minima
    return [view[k * r:(k + 1) * r].tobytes() for k in range(scheme.bands)]


class LshIndex:
    """Per-band buckets mapping a band key to the record ids that share it.

    Immutable once built; empty-set sentinel signatures are stored but
    never bucketed, so they cannot collide.
    """

    def __init__(self, scheme, signatures):
        self.scheme = scheme
        self.signatures = {}
        self.buckets = [dict() for _ in range(scheme.bands)]
        for sig in signatures:
            self._insert(sig)

    def _insert(self, sig):
        if len(sig) != self.scheme.signature_length:
            raise SchemeMismatchError(
                f"scheme {self.scheme.bands}x{self.scheme.rows} needs signature "
                f"length {self.scheme.signature_length}, got {len(sig)}"
            )
        if sig.record_id in self.signatures:
            raise ValueError(f"duplicate record id {sig.record_id!r}")
        self.signatures[sig.record_id] = sig
        if sig.is_empty:
            return
        for band, key in enumerate(band_keys(sig, self.scheme)):
            self.buckets[band].setdefault(key, set()).add(sig.record_id)

    def query(self, sig):
        """Ids sharing at least one band bucket with the probe signature."""
        if len(sig) != self.scheme.signature_length:
            raise SchemeMismatchError(
                f"probe length {len(sig)} does not match scheme "
                f"{self.scheme.bands}x{self.scheme.rows}"
            )
        if sig.is_empty:
            return set()
        found = set()
        for band, key in enumerate(band_keys(sig, self.scheme)):
            found |= self.buckets[band].get(key, set())
        found.discard(sig.record_id)
        return found

    def candidate_pairs(self):
        """All unordered id pairs that share at least one bucket."""
        pairs = set()
        for band in self.buckets:
            for ids in band.values():
                if len(ids) < 2:
                    continue
                members = sorted(ids)
                for i, a in enumerate(members):
                    for b in members[i + 1:]:
                        pairs.add((a, b))
        return pairs


def build_index(signatures, scheme):
    """Index signatures under one banding scheme."""
    return LshIndex(scheme, signatures)


class SupportIndex:
    """A support corpus indexed under every scheme of an adaptive schedule.

    Holds the original shingle sets (for exact Jaccard scores), the shared
    signatures, and one ``LshIndex`` per scheme.  Queries are read-only.
    """

    def __init__(self, shingle_sets, schedule=None, seed=0):
        self.schedule = schedule or AdaptiveSchedule.default()
        self.seed = seed
        self.n_hashes = self.schedule.n_hashes
        self.shingle_sets = dict(shingle_sets)
        self._seeds = hash_seeds(seed, self.n_hashes)
        self.signatures = {
            rid: minhash_signature(tokens, seed, self.n_hashes, rid, _seeds=self._seeds)
            for rid, tokens in self.shingle_sets.items()
        }
        self._indexes = {}
        for scheme in self.schedule:
            self._indexes[scheme] = build_index(self.signatures.values(), scheme)

    def index_for(self, scheme):
        """The per-scheme index, built on demand for novel schemes."""
        if scheme not in self._indexes:
            self._indexes[scheme] = build_index(self.signatures.values(), scheme)
        return self._indexes[scheme]

    def signature_of(self, shingles, record_id=""):
        return minhash_signature(
            shingles, self.seed, self.n_hashes, record_id, _seeds=self._seeds
        )

    def candidate_ids(self, sig, scheme):
        """Bucket probe of one scheme; the adaptive query's unit step."""
        return self.index_for(scheme).query(sig)


def query_adaptive(shingles, corpus, schedule=None, open_id="", min_score=0.0):
    """Probe the schedule strict-to-loose, returning the first non-empty hit.

    Candidates carry exact Jaccard scores computed on the original shingle
    sets and come sorted by descending score, ties broken by ascending
    support id.  Returns the empty list when every scheme misses.
    """
    schedule = schedule or corpus.schedule
    if not shingles:
        return []
    sig = corpus.signature_of(shingles, open_id)
    for scheme in schedule:
        ids = corpus.candidate_ids(sig, scheme)
        if ids:
            pairs = [
                CandidatePair(open_id, rid, jaccard(shingles, corpus.shingle_sets[rid]))
                for rid in sorted(ids)
            ]
            pairs.sort(key=lambda p: (-p.score, p.support_id))
            if min_score > 0.0:
                pairs = [p for p in pairs if p.score >= min_score]
            return pairs
    return []


def write_candidates_csv(pairs, path):
    """Candidate table in the (open_id, support_id, score) layout."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["open_id", "support_id", "score"])
        for p in pairs:
            writer.writerow([p.open_id, p.support_id, repr(p.score)])
