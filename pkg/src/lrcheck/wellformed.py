"""Well-formedness checks for types and the four kinds of contexts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

from .logic import RefCtx, SortError, getsort, sortcheck
from .syntax import (
    AbstractLoc,
    ConcreteLoc,
    Exists,
    FnSig,
    Indexed,
    Loc,
    LocCtx,
    Ref,
    Sort,
    StrongPtr,
    Type,
    Uninit,
    VecBase,
)


class WfError(Exception):
    def __init__(self, rule: str, msg: str):
        super().__init__(f"{rule}: {msg}")
        self.rule = rule
        self.msg = msg


@dataclass(frozen=True)
class ValCtx:
    """Ordered value context; duplicate names are rejected on extension."""

    items: Tuple[Tuple[str, Type], ...] = ()

    def lookup(self, name: str) -> Optional[Type]:
        for n, t in self.items:
            if n == name:
                return t
        return None

    def bind(self, name: str, typ: Type) -> "ValCtx":
        return ValCtx(self.items + ((name, typ),))

    def update(self, name: str, typ: Type) -> "ValCtx":
        return ValCtx(tuple((n, typ if n == name else t) for n, t in self.items))

    def domain(self) -> Tuple[str, ...]:
        return tuple(n for n, _ in self.items)

    def __iter__(self):
        return iter(self.items)


EMPTY_VALCTX = ValCtx()

# Dynamic context: (concrete location, tag) -> pointer type.
DynCtx = Dict[Tuple[int, int], Type]


def _check_loc(ctx: RefCtx, loc: Loc) -> None:
    if isinstance(loc, ConcreteLoc):
        return
    if isinstance(loc, AbstractLoc):
        sort = ctx.sort_of(loc.name)
        if sort is None:
            raise WfError("wf-ptr", f"unbound location variable '{loc.name}'")
        if sort != Sort.LOC:
            raise WfError("wf-ptr", f"'{loc.name}' has sort {sort}, expected loc")
        return
    raise WfError("wf-ptr", f"bad location {loc!r}")


def wf_type(ctx: RefCtx, typ: Type) -> None:
    match typ:
        case Indexed(base, idx):
            if isinstance(base, VecBase):
                wf_type(ctx, base.elem)
            try:
                got = sortcheck(ctx, idx)
            except SortError as exc:
                raise WfError("wf-idx", str(exc)) from exc
            want = getsort(base)
            if got != want:
                raise WfError("wf-idx", f"index has sort {got}, expected {want}")
        case Exists(binder, base, pred):
            if isinstance(base, VecBase):
                wf_type(ctx, base.elem)
            inner = ctx.bind(binder, getsort(base))
            try:
                got = sortcheck(inner, pred)
            except SortError as exc:
                raise WfError("wf-ex", str(exc)) from exc
            if got != Sort.BOOL:
                raise WfError("wf-ex", f"predicate has sort {got}, expected bool")
        case StrongPtr(loc):
            _check_loc(ctx, loc)
        case Ref(_, pointee):
            wf_type(ctx, pointee)
        case Uninit(n):
            if n <= 0:
                raise WfError("wf-mem", f"uninit size must be positive, got {n}")
        case FnSig(refparams, requires, in_locs, args, ret, out_locs):
            seen = set()
            inner = ctx
            for name, sort in refparams:
                if name in seen:
                    raise WfError("wf-fun", f"duplicate refinement parameter '{name}'")
                seen.add(name)
                inner = inner.bind(name, sort)
            try:
                got = sortcheck(inner, requires)
            except SortError as exc:
                raise WfError("wf-fun", str(exc)) from exc
            if got != Sort.BOOL:
                raise WfError("wf-fun", "requires clause must be boolean")
            out_dom = set(out_locs.domain())
            in_dom = set(in_locs.domain())
            if not out_dom <= in_dom:
                missing = out_dom - in_dom
                raise WfError(
                    "wf-fun",
                    "output locations not covered by inputs: "
                    + ", ".join(sorted(str(l) for l in missing)),
                )
            wf_locctx(inner, in_locs)
            for a in args:
                wf_type(inner, a)
            wf_type(inner, ret)
            wf_locctx(inner, out_locs)
        case _:
            raise WfError("wf", f"unknown type {typ!r}")


def wf_valctx(ctx: RefCtx, vals: ValCtx) -> None:
    seen = set()
    for name, typ in vals:
        if name in seen:
            raise WfError("wf-bind", f"duplicate binding '{name}'")
        seen.add(name)
        wf_type(ctx, typ)


def wf_locctx(ctx: RefCtx, locs: LocCtx) -> None:
    seen = set()
    for loc, typ in locs:
        if loc in seen:
            raise WfError("wf-bind", f"duplicate location {loc!r}")
        seen.add(loc)
        _check_loc(ctx, loc)
        wf_type(ctx, typ)


def wf_dynctx(ctx: RefCtx, dyn: DynCtx) -> None:
    for (loc_id, tag), typ in dyn.items():
        if not isinstance(typ, (StrongPtr, Ref)):
            raise WfError(
                "wf-dyn", f"({loc_id},{tag}) maps to a non-pointer type"
            )
        wf_type(ctx, typ)


def wf_refctx(ctx: RefCtx) -> None:
    from .logic import Assume, Bind

    prefix = RefCtx()
    for entry in ctx:
        if isinstance(entry, Bind):
            if prefix.sort_of(entry.name) is not None:
                raise WfError("wf-refctx", f"duplicate binder '{entry.name}'")
            prefix = prefix.bind(entry.name, entry.sort)
        elif isinstance(entry, Assume):
            try:
                got = sortcheck(prefix, entry.pred)
            except SortError as exc:
                raise WfError("wf-refctx", str(exc)) from exc
            if got != Sort.BOOL:
                raise WfError("wf-refctx", "assumption must be boolean")
            prefix = prefix.assume(entry.pred)
