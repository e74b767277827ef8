"""Concrete text syntax for goals.

::

    goal  := "FALSE" | seq ("|" seq)*
    seq   := "<" basic ("," basic)* ">"
    basic := ("NOW" | "NEXT" | "EV") "[" pred "]"
    pred  := "TRUE" | term ("," term)*
    term  := ("S" | "A") ("=" | "!=") (name | "{" name ("," name)* "}")
           | "{" [ "(" name "," name ")" ("," "(" name "," name ")")* ] "}"

Whitespace is ignored. Names are resolved against a world's name tables;
without a world only integer indices are accepted.
"""

from __future__ import annotations

import re

from .goals import BasicGoal, Goal, Lit, Op, PairSet, Pred, SequentialGoal

_TOKEN = re.compile(r"\s*(?:(!=|[<>\[\](){},|=])|([A-Za-z0-9_][A-Za-z0-9_.'+\-]*))")


class GoalSyntaxError(ValueError):
    def __init__(self, msg: str, pos: int, text: str = ""):
        super().__init__(f"{msg} at position {pos}" + (f": {text[:pos]}<<here>>{text[pos:]}" if text else ""))
        self.pos = pos


def _tokenize(text: str) -> list[tuple[str, int]]:
    toks = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise GoalSyntaxError(f"unexpected character {text[start]!r}", start, text)
        tok = m.group(1) or m.group(2)
        toks.append((tok, m.start(1) if m.group(1) else m.start(2)))
        pos = m.end()
    toks.append(("", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str, world):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.world = world

    def peek(self) -> str:
        return self.toks[self.i][0]

    def pos(self) -> int:
        return self.toks[self.i][1]

    def error(self, msg):
        raise GoalSyntaxError(msg, self.pos(), self.text)

    def take(self, expected: str | None = None) -> str:
        tok = self.peek()
        if expected is not None and tok != expected:
            self.error(f"expected {expected!r}, found {tok or 'end of input'!r}")
        if tok == "":
            self.error("unexpected end of input")
        self.i += 1
        return tok

    def name(self, kind: str) -> int:
        pos = self.pos()
        tok = self.take()
        if not re.match(r"[A-Za-z0-9_]", tok):
            self.i -= 1
            self.error(f"expected a {kind} name")
        try:
            if self.world is None:
                if not tok.isdigit():
                    raise ValueError(f"unknown {kind} {tok!r} (no world to resolve names)")
                return int(tok)
            return self.world.state_index(tok) if kind == "state" else self.world.action_index(tok)
        except ValueError as e:
            raise GoalSyntaxError(str(e), pos, self.text) from None

    def goal(self) -> Goal:
        if self.peek() == "FALSE":
            self.take()
            out = Goal(())
        else:
            items = [self.seq()]
            while self.peek() == "|":
                self.take()
                items.append(self.seq())
            out = Goal(tuple(items))
        if self.peek() != "":
            self.error("trailing input")
        return out

    def seq(self) -> SequentialGoal:
        self.take("<")
        parts = [self.basic()]
        while self.peek() == ",":
            self.take()
            parts.append(self.basic())
        self.take(">")
        return SequentialGoal(tuple(parts))

    def basic(self) -> BasicGoal:
        tok = self.peek()
        if tok not in ("NOW", "NEXT", "EV"):
            self.error("expected NOW, NEXT or EV")
        self.take()
        self.take("[")
        p = self.pred()
        self.take("]")
        return BasicGoal(Op[tok], p)

    def pred(self) -> Pred:
        if self.peek() == "TRUE":
            self.take()
            return Pred(())
        terms = [self.term()]
        while self.peek() == ",":
            self.take()
            terms.append(self.term())
        return Pred(tuple(terms))

    def term(self):
        tok = self.peek()
        if tok == "{":
            self.take()
            if self.peek() == "}":
                self.take()
                return PairSet(frozenset())
            pairs = [self.pair()]
            while self.peek() == ",":
                self.take()
                pairs.append(self.pair())
            self.take("}")
            return PairSet(frozenset(pairs))
        if tok not in ("S", "A"):
            self.error("expected S, A or a pair set")
        self.take()
        op = self.take()
        if op not in ("=", "!="):
            self.i -= 1
            self.error("expected '=' or '!='")
        kind = "state" if tok == "S" else "action"
        if self.peek() == "{":
            self.take()
            vals = [self.name(kind)]
            while self.peek() == ",":
                self.take()
                vals.append(self.name(kind))
            self.take("}")
            return Lit(tok, frozenset(vals), op == "!=")
        return Lit(tok, frozenset([self.name(kind)]), op == "!=")

    def pair(self):
        self.take("(")
        s = self.name("state")
        self.take(",")
        a = self.name("action")
        self.take(")")
        return (s, a)


def parse_goal(text: str, world=None) -> Goal:
    """Parse the goal DSL; raises :class:`GoalSyntaxError` with a position."""
    return _Parser(text, world).goal()


def format_goal(goal: Goal | SequentialGoal, world=None) -> str:
    if isinstance(goal, SequentialGoal):
        goal = Goal((goal,))
    if goal.is_false:
        return "FALSE"
    sname = (lambda i: world.state_names[i]) if world is not None else str
    aname = (lambda i: world.action_names[i]) if world is not None else str

    def term(t):
        if isinstance(t, PairSet):
            return "{" + ",".join(f"({sname(s)},{aname(a)})" for s, a in sorted(t.pairs)) + "}"
        name = sname if t.var == "S" else aname
        vals = sorted(t.values)
        rhs = name(vals[0]) if len(vals) == 1 else "{" + ",".join(name(v) for v in vals) + "}"
        return f"{t.var}{'!=' if t.negated else '='}{rhs}"

    def basic(g):
        body = ", ".join(term(t) for t in g.pred.terms) if g.pred.terms else "TRUE"
        return f"{g.op.name}[{body}]"

    return " | ".join("<" + ", ".join(basic(g) for g in d.parts) + ">" for d in goal.disjuncts)
