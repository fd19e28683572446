"""Algorithmic subtyping and location-context inclusion.

Both judgments emit constraints instead of deciding validity inline.
Structural mismatches (pointer vs integer, differing strong-pointer
targets) raise StructuralError; refinement obligations become Heads.
"""

from __future__ import annotations

from typing import Dict, Optional

from .constraints import Conj, Constraint, ForAll, Head, Implies, Provenance, TRIVIAL
from .errors import StructuralError
from .logic import RefCtx, contains_kapp, getsort, subst
from .printer import print_loc, print_type
from .syntax import (
    BoolBase,
    BoolConst,
    Eq,
    Exists,
    FnSig,
    Indexed,
    IntBase,
    LocCtx,
    Ref,
    StrongPtr,
    Type,
    Uninit,
    Var,
    VecBase,
)


class NameSupply:
    """Deterministic fresh-name source; one per checked function."""

    def __init__(self):
        self.counters: Dict[str, int] = {}

    def fresh(self, base: str) -> str:
        base = base.split("%", 1)[0]
        n = self.counters.get(base, 0)
        self.counters[base] = n + 1
        return f"{base}%{n}"


def subtype(
    ctx: RefCtx,
    lhs: Type,
    rhs: Type,
    prov: Provenance,
    names: Optional[NameSupply] = None,
) -> Constraint:
    names = names or NameSupply()
    return _sub(ctx, lhs, rhs, prov, names)


def _base_compatible(b1, b2) -> bool:
    if isinstance(b1, IntBase) and isinstance(b2, IntBase):
        return True
    if isinstance(b1, BoolBase) and isinstance(b2, BoolBase):
        return True
    return isinstance(b1, VecBase) and isinstance(b2, VecBase)


def _sub(ctx, lhs, rhs, prov, names) -> Constraint:
    match (lhs, rhs):
        case (Indexed(b1, e1), Indexed(b2, e2)):
            if not _base_compatible(b1, b2):
                raise StructuralError(
                    f"base mismatch: {print_type(lhs)} vs {print_type(rhs)}"
                )
            parts = [Head(Eq(e1, e2), prov)]
            if isinstance(b1, VecBase):
                parts.append(_sub(ctx, b1.elem, b2.elem, prov, names))
            return Conj(tuple(parts))

        case (Exists(a, b1, p), _):
            if not isinstance(rhs, (Indexed, Exists)):
                raise StructuralError(
                    f"cannot relate {print_type(lhs)} to {print_type(rhs)}"
                )
            fresh = names.fresh(a)
            sort = getsort(b1)
            hyp = subst(p, a, Var(fresh))
            inner_ctx = ctx.bind(fresh, sort).assume(hyp)
            body = _sub(inner_ctx, Indexed(b1, Var(fresh)), rhs, prov, names)
            return ForAll(fresh, sort, hyp, body)

        case (Indexed(b1, e1), Exists(a, b2, p)):
            if not _base_compatible(b1, b2):
                raise StructuralError(
                    f"base mismatch: {print_type(lhs)} vs {print_type(rhs)}"
                )
            parts = []
            if isinstance(b1, VecBase):
                parts.append(_sub(ctx, b1.elem, b2.elem, prov, names))
            if contains_kapp(p) and not isinstance(e1, Var):
                # keep unknown predicates applied to a plain binder
                fresh = names.fresh("v")
                sort = getsort(b1)
                hyp = Eq(Var(fresh), e1)
                parts.append(
                    ForAll(fresh, sort, hyp, Head(subst(p, a, Var(fresh)), prov))
                )
            else:
                parts.append(Head(subst(p, a, e1), prov))
            return Conj(tuple(parts)) if len(parts) > 1 else parts[0]

        case (StrongPtr(l1), StrongPtr(l2)):
            if l1 != l2:
                raise StructuralError(
                    f"strong pointers to different locations: "
                    f"{print_loc(l1)} vs {print_loc(l2)}"
                )
            return TRIVIAL

        case (Uninit(n1), Uninit(n2)):
            if n1 != n2:
                raise StructuralError(f"uninit sizes differ: {n1} vs {n2}")
            return TRIVIAL

        case (Ref("shr", t1), Ref("shr", t2)):
            return _sub(ctx, t1, t2, prov, names)

        case (Ref("mut", t1), Ref("mut", t2)):
            return Conj(
                (
                    _sub(ctx, t1, t2, prov, names),
                    _sub(ctx, t2, t1, prov, names),
                )
            )

        case (FnSig() as f1, FnSig() as f2):
            return _sub_fun(ctx, f1, f2, prov, names)

        case _:
            raise StructuralError(
                f"cannot relate {print_type(lhs)} to {print_type(rhs)}"
            )


def _sub_fun(ctx, f1: FnSig, f2: FnSig, prov, names) -> Constraint:
    if len(f1.refparams) != len(f2.refparams):
        raise StructuralError("signatures declare different refinement parameters")
    for (_, s1), (_, s2) in zip(f1.refparams, f2.refparams):
        if s1 != s2:
            raise StructuralError("refinement parameter sorts differ")
    if len(f1.args) != len(f2.args):
        raise StructuralError("signatures take different argument counts")

    # alpha-normalize both signatures onto a shared parameter list
    shared = [(names.fresh(n), s) for n, s in f1.refparams]

    def rename(sig: FnSig):
        req, in_locs, args, ret, out_locs = (
            sig.requires,
            sig.in_locs,
            sig.args,
            sig.ret,
            sig.out_locs,
        )
        for (old, _), (new, _) in zip(sig.refparams, shared):
            repl = Var(new)
            req = subst(req, old, repl)
            in_locs = subst(in_locs, old, repl)
            args = tuple(subst(a, old, repl) for a in args)
            ret = subst(ret, old, repl)
            out_locs = subst(out_locs, old, repl)
        return req, in_locs, args, ret, out_locs

    req1, in1, args1, ret1, out1 = rename(f1)
    req2, in2, args2, ret2, out2 = rename(f2)

    inner_ctx = ctx
    for n, s in shared:
        inner_ctx = inner_ctx.bind(n, s)

    parts = [Implies(req2, Head(req1, prov))]
    parts.append(ctx_include(inner_ctx, in2, in1, prov, names))
    for a2, a1 in zip(args2, args1):
        parts.append(_sub(inner_ctx, a2, a1, prov, names))
    parts.append(_sub(inner_ctx, ret1, ret2, prov, names))
    parts.append(ctx_include(inner_ctx, out1, out2, prov, names))

    body: Constraint = Conj(tuple(parts))
    for n, s in reversed(shared):
        body = ForAll(n, s, BoolConst(True), body)
    return body


def ctx_include(
    ctx: RefCtx,
    lhs: LocCtx,
    rhs: LocCtx,
    prov: Provenance,
    names: Optional[NameSupply] = None,
) -> Constraint:
    """Inclusion of location contexts: free reordering, dropping of extra
    bindings on the left, pointwise subtyping on the shared domain."""
    names = names or NameSupply()
    missing = [l for l in rhs.domain() if lhs.lookup(l) is None]
    if missing:
        raise StructuralError(
            "missing locations: " + ", ".join(print_loc(l) for l in missing)
        )
    parts = []
    for loc, want in rhs:
        have = lhs.lookup(loc)
        assert have is not None
        parts.append(_sub(ctx, have, want, prov, names))
    return Conj(tuple(parts))
