"""Minimal SMT-LIB2 server over stdin/stdout, backed by the built-in
decision procedure.  Supports the command subset the checker's client
emits: set-logic, set-option, set-info, declare-const, declare-fun (0-ary),
assert, push, pop, check-sat, get-model, reset, exit.

Run as `python -m lrcheck.smt_server`.
"""

from __future__ import annotations

import sys
from typing import Dict, List, Optional, Tuple, Union

from .oracle import Query, _decide
from .syntax import (
    BinArith,
    BinBool,
    BoolConst,
    Cmp,
    Eq,
    IntConst,
    Not,
    RefExpr,
    Sort,
    Var,
)

SExpr = Union[str, List["SExpr"]]


def tokenize(text: str) -> List[str]:
    out: List[str] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "()":
            out.append(c)
            i += 1
        elif c == "|":
            j = text.index("|", i + 1)
            out.append(text[i : j + 1])
            i = j + 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()":
                j += 1
            out.append(text[i:j])
            i = j
    return out


def parse_sexprs(tokens: List[str]) -> List[SExpr]:
    out: List[SExpr] = []
    stack: List[List[SExpr]] = []
    for tok in tokens:
        if tok == "(":
            stack.append([])
        elif tok == ")":
            done = stack.pop()
            if stack:
                stack[-1].append(done)
            else:
                out.append(done)
        else:
            if stack:
                stack[-1].append(tok)
            else:
                out.append(tok)
    if stack:
        raise ValueError("unbalanced parentheses")
    return out


def _name(atom: str) -> str:
    return atom[1:-1] if atom.startswith("|") and atom.endswith("|") else atom


def to_refexpr(s: SExpr) -> RefExpr:
    if isinstance(s, str):
        if s == "true":
            return BoolConst(True)
        if s == "false":
            return BoolConst(False)
        try:
            return IntConst(int(s))
        except ValueError:
            return Var(_name(s))
    head = s[0]
    args = [to_refexpr(a) for a in s[1:]]
    if head == "not":
        return Not(args[0])
    if head in ("and", "or"):
        if not args:
            return BoolConst(head == "and")
        out = args[0]
        for a in args[1:]:
            out = BinBool("and" if head == "and" else "or", out, a)
        return out
    if head == "=":
        return Eq(args[0], args[1])
    if head in ("<", "<=", ">", ">="):
        return Cmp(head, args[0], args[1])
    if head in ("+", "*"):
        out = args[0]
        for a in args[1:]:
            out = BinArith(head, out, a)
        return out
    if head == "-":
        if len(args) == 1:
            return BinArith("-", IntConst(0), args[0])
        out = args[0]
        for a in args[1:]:
            out = BinArith("-", out, a)
        return out
    if head == "=>":
        return BinBool("or", Not(args[0]), args[1])
    raise ValueError(f"unsupported operator {head!r}")


class Frame:
    def __init__(self):
        self.decls: List[Tuple[str, Sort]] = []
        self.asserts: List[RefExpr] = []


class Server:
    def __init__(self, out=sys.stdout):
        self.frames = [Frame()]
        self.out = out
        self.last_model: Optional[Dict[str, Union[int, bool]]] = None

    def reply(self, text: str):
        self.out.write(text + "\n")
        self.out.flush()

    def all_decls(self) -> List[Tuple[str, Sort]]:
        out = []
        for f in self.frames:
            out.extend(f.decls)
        return out

    def all_asserts(self) -> List[RefExpr]:
        out = []
        for f in self.frames:
            out.extend(f.asserts)
        return out

    def handle(self, cmd: SExpr):
        if isinstance(cmd, str):
            self.reply(f'(error "stray token {cmd}")')
            return
        head = cmd[0]
        if head in ("set-logic", "set-option", "set-info"):
            return
        if head == "push":
            count = int(cmd[1]) if len(cmd) > 1 else 1
            for _ in range(count):
                self.frames.append(Frame())
            return
        if head == "pop":
            count = int(cmd[1]) if len(cmd) > 1 else 1
            for _ in range(count):
                if len(self.frames) > 1:
                    self.frames.pop()
            return
        if head in ("declare-const", "declare-fun"):
            name = _name(cmd[1])
            sort_atom = cmd[-1]
            sort = Sort.BOOL if sort_atom == "Bool" else Sort.INT
            self.frames[-1].decls.append((name, sort))
            return
        if head == "assert":
            self.frames[-1].asserts.append(to_refexpr(cmd[1]))
            return
        if head == "check-sat":
            self.check_sat()
            return
        if head == "get-model":
            self.get_model()
            return
        if head == "reset":
            self.frames = [Frame()]
            return
        if head == "exit":
            raise SystemExit(0)
        self.reply(f'(error "unsupported command {head}")')

    def check_sat(self):
        # the asserted formula is satisfiable iff (asserts |- false) is not valid
        query = Query(
            tuple(self.all_decls()), tuple(self.all_asserts()), BoolConst(False)
        )
        try:
            verdict = _decide(query)
        except Exception as exc:  # malformed input from the client
            self.reply(f'(error "{exc}")')
            return
        if verdict.is_valid:
            self.last_model = None
            self.reply("unsat")
        elif verdict.is_invalid:
            self.last_model = verdict.model
            self.reply("sat")
        else:
            self.last_model = None
            self.reply("unknown")

    def get_model(self):
        if self.last_model is None:
            self.reply('(error "no model available")')
            return
        lines = ["("]
        for name, value in self.last_model.items():
            if isinstance(value, bool):
                lines.append(
                    f"  (define-fun |{name}| () Bool {'true' if value else 'false'})"
                )
            else:
                rendered = str(value) if value >= 0 else f"(- {-value})"
                lines.append(f"  (define-fun |{name}| () Int {rendered})")
        lines.append(")")
        self.reply("\n".join(lines))


def main():
    server = Server()
    buffer = ""
    depth = 0
    for line in sys.stdin:
        buffer += line
        depth = buffer.count("(") - buffer.count(")")
        if depth > 0:
            continue
        try:
            for cmd in parse_sexprs(tokenize(buffer)):
                server.handle(cmd)
        except SystemExit:
            return
        except ValueError as exc:
            server.reply(f'(error "{exc}")')
        buffer = ""


if __name__ == "__main__":
    main()
