"""Deliberately naive reference implementations used to check the real ones.

None of these share code with the library beyond the term and triple
types: matching is a linear scan, closure enumerates every variable
assignment over the active domain, and queries try every combination of
triples.
"""

from __future__ import annotations

import itertools
import re
from collections import Counter
from decimal import Decimal, InvalidOperation

from semwsn.terms import IRI, Literal, Triple, Variable


def linear_match(triples, pattern):
    out = set()
    for t in triples:
        if all(p is None or p == v for p, v in zip(pattern, t)):
            out.add(t)
    return out


def _num(term):
    if not isinstance(term, Literal):
        return None
    try:
        value = Decimal(term.lexical.strip())
    except InvalidOperation:
        return None
    return value if value.is_finite() else None


_CMP = {
    "greaterThan": lambda a, b: a > b,
    "lessThan": lambda a, b: a < b,
    "ge": lambda a, b: a >= b,
    "le": lambda a, b: a <= b,
}


def _rule_parts(rule):
    patterns = [c for c in rule.body if isinstance(c, tuple)]
    builtins = [c for c in rule.body if not isinstance(c, tuple)]
    return patterns, builtins


def _vars(rule):
    names = []
    for clause in list(rule.body) + list(rule.head):
        terms = clause if isinstance(clause, tuple) else clause.args
        for t in terms:
            if isinstance(t, Variable) and t.name not in names:
                names.append(t.name)
    return names


def _subst(term, env):
    return env[term.name] if isinstance(term, Variable) else term


def brute_force_closure(triples, rules):
    """Fixpoint by trying every assignment of every variable to every term."""
    facts = set(triples)
    while True:
        domain = sorted({x for t in facts for x in t} | {
            x for r in rules for c in list(r.body) + list(r.head)
            for x in (c if isinstance(c, tuple) else c.args) if not isinstance(x, Variable)
        }, key=lambda x: (type(x).__name__, str(x)))
        new = set()
        for rule in rules:
            patterns, builtins = _rule_parts(rule)
            names = _vars(rule)
            for combo in itertools.product(domain, repeat=len(names)):
                env = dict(zip(names, combo))
                ok = True
                for b in builtins:
                    a, c = _num(_subst(b.args[0], env)), _num(_subst(b.args[1], env))
                    if a is None or c is None or not _CMP[b.name](a, c):
                        ok = False
                        break
                if not ok:
                    continue
                grounded = []
                for p in patterns:
                    s, pr, o = (_subst(x, env) for x in p)
                    if not isinstance(s, IRI) or not isinstance(pr, IRI):
                        ok = False
                        break
                    grounded.append(Triple(s, pr, o))
                if not ok or not all(g in facts for g in grounded):
                    continue
                for h in rule.head:
                    s, pr, o = (_subst(x, env) for x in h)
                    if isinstance(s, IRI) and isinstance(pr, IRI):
                        t = Triple(s, pr, o)
                        if t not in facts:
                            new.add(t)
        if not new:
            return facts
        facts |= new


def _text(term):
    return term.value if isinstance(term, IRI) else term.lexical


def nested_loop_query(triples, query):
    """Every k-tuple of triples for k patterns; returns a Counter of rows."""
    triples = list(triples)
    rows = Counter()
    for combo in itertools.product(triples, repeat=len(query.patterns)):
        env = {}
        ok = True
        for pattern, t in zip(query.patterns, combo):
            for p, v in zip(pattern, t):
                if isinstance(p, Variable):
                    if env.setdefault(p.name, v) != v:
                        ok = False
                        break
                elif p != v:
                    ok = False
                    break
            if not ok:
                break
        if not ok:
            continue
        for f in query.filters:
            if not re.search(f.pattern, _text(env[f.var]), re.I if "i" in f.flags else 0):
                ok = False
                break
        if ok:
            rows[tuple(env[name] for name in query.select)] += 1
    return rows
