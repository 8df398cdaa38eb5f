"""Toy statement grammar used by the compilability constraint.

    program := stmt+
    stmt    := ID '=' expr ';'
    expr    := term (('+' | '*') term)*
    term    := NUM | ID | '(' expr ')'

``parses`` is a recursive-descent recogniser; ``ll1_parses`` is an independent
table-driven LL(1) recogniser used to cross-check it.
"""

from __future__ import annotations

from typing import Sequence

TERMINALS = ("ID", "NUM", "+", "*", "(", ")", "=", ";")
GRAMMARS = ("toy-infix",)


class _Fail(Exception):
    pass


class _Descent:
    def __init__(self, toks: Sequence[str]):
        self.toks = list(toks)
        self.pos = 0

    def peek(self):
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def expect(self, tok):
        if self.peek() != tok:
            raise _Fail
        self.pos += 1

    def program(self):
        self.stmt()
        while self.peek() is not None:
            self.stmt()

    def stmt(self):
        self.expect("ID")
        self.expect("=")
        self.expr()
        self.expect(";")

    def expr(self):
        self.term()
        while self.peek() in ("+", "*"):
            self.pos += 1
            self.term()

    def term(self):
        tok = self.peek()
        if tok in ("NUM", "ID"):
            self.pos += 1
        elif tok == "(":
            self.pos += 1
            self.expr()
            self.expect(")")
        else:
            raise _Fail


def parses(tokens: Sequence[str]) -> bool:
    """True iff ``tokens`` is one or more complete statements."""
    p = _Descent(tokens)
    try:
        p.program()
    except _Fail:
        return False
    return p.pos == len(p.toks)


# LL(1) form:  P -> S P' ; P' -> S P' | eps ; S -> ID = E ; ;
#              E -> T E' ; E' -> + T E' | * T E' | eps ; T -> NUM | ID | ( E )
_END = "$"
_TABLE = {
    ("P", "ID"): ["S", "P'"],
    ("P'", "ID"): ["S", "P'"],
    ("P'", _END): [],
    ("S", "ID"): ["ID", "=", "E", ";"],
    ("E", "NUM"): ["T", "E'"],
    ("E", "ID"): ["T", "E'"],
    ("E", "("): ["T", "E'"],
    ("E'", "+"): ["+", "T", "E'"],
    ("E'", "*"): ["*", "T", "E'"],
    ("E'", ";"): [],
    ("E'", ")"): [],
    ("T", "NUM"): ["NUM"],
    ("T", "ID"): ["ID"],
    ("T", "("): ["(", "E", ")"],
}
_NONTERMINALS = {"P", "P'", "S", "E", "E'", "T"}


def ll1_parses(tokens: Sequence[str]) -> bool:
    stream = list(tokens) + [_END]
    stack = [_END, "P"]
    i = 0
    while stack:
        top = stack.pop()
        look = stream[i]
        if top in _NONTERMINALS:
            rule = _TABLE.get((top, look))
            if rule is None:
                return False
            stack.extend(reversed(rule))
        elif top == look:
            i += 1
        else:
            return False
    return i == len(stream)
