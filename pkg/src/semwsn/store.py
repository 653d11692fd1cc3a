"""Indexed in-memory triple store."""

from __future__ import annotations

import threading
from collections import defaultdict
from typing import Dict, Iterable, Iterator, List, Set, Tuple

from .errors import NonGroundTriple
from .terms import IRI, GroundTerm, Term, Triple, Variable

Pattern = Tuple[Term, Term, Term]

_Index = Dict[GroundTerm, Dict[GroundTerm, Set[GroundTerm]]]


def _nested() -> _Index:
    return defaultdict(lambda: defaultdict(set))


class TripleStore:
    """Set of ground triples with SPO, POS and OSP indexes.

    Readers may run concurrently; ``add`` and ``discard`` take a lock so
    writes are serialized.
    """

    def __init__(self, triples: Iterable[Triple] = ()):
        self._triples: Set[Triple] = set()
        self._spo: _Index = _nested()
        self._pos: _Index = _nested()
        self._osp: _Index = _nested()
        self._lock = threading.RLock()
        for t in triples:
            self.add(t)

    def __len__(self) -> int:
        return len(self._triples)

    def __iter__(self) -> Iterator[Triple]:
        return iter(list(self._triples))

    def __contains__(self, t: object) -> bool:
        return t in self._triples

    def __eq__(self, other: object) -> bool:
        if isinstance(other, TripleStore):
            return self._triples == other._triples
        if isinstance(other, (set, frozenset)):
            return self._triples == other
        return NotImplemented

    def __repr__(self) -> str:
        return f"TripleStore({len(self)} triples)"

    def add(self, t: Triple) -> bool:
        """Insert ``t``; returns True when the store grew."""
        if any(isinstance(x, Variable) for x in t):
            raise NonGroundTriple(repr(t))
        with self._lock:
            if t in self._triples:
                return False
            self._triples.add(t)
            s, p, o = t.subject, t.predicate, t.object
            self._spo[s][p].add(o)
            self._pos[p][o].add(s)
            self._osp[o][s].add(p)
            return True

    def update(self, triples: Iterable[Triple]) -> int:
        return sum(1 for t in triples if self.add(t))

    def discard(self, t: Triple) -> None:
        with self._lock:
            if t not in self._triples:
                return
            self._triples.remove(t)
            s, p, o = t.subject, t.predicate, t.object
            for index, a, b, c in ((self._spo, s, p, o), (self._pos, p, o, s), (self._osp, o, s, p)):
                index[a][b].discard(c)
                if not index[a][b]:
                    del index[a][b]
                if not index[a]:
                    del index[a]

    def copy(self) -> "TripleStore":
        return TripleStore(self._triples)

    def triples(self) -> Set[Triple]:
        return set(self._triples)

    def sorted(self) -> List[Triple]:
        return sorted(self._triples, key=Triple.sort_key)

    def union(self, other: Iterable[Triple]) -> "TripleStore":
        result = self.copy()
        result.update(other)
        return result

    def match(self, pattern: Pattern) -> Set[Triple]:
        """All triples agreeing with the ground positions of ``pattern``."""
        s, p, o = (None if isinstance(x, Variable) else x for x in pattern)
        # a join can bind a literal into subject or predicate position
        if (s is not None and not isinstance(s, IRI)) or (p is not None and not isinstance(p, IRI)):
            return set()
        with self._lock:
            if s is not None and p is not None and o is not None:
                t = Triple(s, p, o)
                return {t} if t in self._triples else set()
            if s is not None:
                by_p = self._spo.get(s, {})
                if p is not None:
                    return {Triple(s, p, oo) for oo in by_p.get(p, ())}
                if o is not None:
                    return {Triple(s, pp, o) for pp in self._osp.get(o, {}).get(s, ())}
                return {Triple(s, pp, oo) for pp, objs in by_p.items() for oo in objs}
            if p is not None:
                by_o = self._pos.get(p, {})
                if o is not None:
                    return {Triple(ss, p, o) for ss in by_o.get(o, ())}
                return {Triple(ss, p, oo) for oo, subs in by_o.items() for ss in subs}
            if o is not None:
                return {Triple(ss, pp, o) for ss, preds in self._osp.get(o, {}).items() for pp in preds}
            return set(self._triples)

    def objects(self, s: GroundTerm, p: GroundTerm) -> Set[GroundTerm]:
        return set(self._spo.get(s, {}).get(p, ()))

    def subjects(self, p: GroundTerm, o: GroundTerm) -> Set[GroundTerm]:
        return set(self._pos.get(p, {}).get(o, ()))

    def check_indexes(self) -> bool:
        """Rebuild every index from the triple set and compare."""
        spo = {(s, p, o) for s, ps in self._spo.items() for p, os in ps.items() for o in os}
        pos = {(s, p, o) for p, os in self._pos.items() for o, ss in os.items() for s in ss}
        osp = {(s, p, o) for o, ss in self._osp.items() for s, ps in ss.items() for p in ps}
        flat = {(t.subject, t.predicate, t.object) for t in self._triples}
        return spo == pos == osp == flat


def store_insert(store: TripleStore, t: Triple) -> TripleStore:
    store.add(t)
    return store


def store_match(store: TripleStore, pattern: Pattern) -> Set[Triple]:
    return store.match(pattern)
