"""Well-formedness judgments for types and contexts."""

import pytest

from lrcheck.logic import RefCtx
from lrcheck.parser import parse_refexpr as R
from lrcheck.parser import parse_type
from lrcheck.syntax import (
    AbstractLoc,
    Indexed,
    IntBase,
    IntConst,
    LocCtx,
    Ref,
    Sort,
    StrongPtr,
    Uninit,
)
from lrcheck.wellformed import (
    ValCtx,
    WfError,
    wf_dynctx,
    wf_locctx,
    wf_refctx,
    wf_type,
    wf_valctx,
)


def test_indexed_int_ok():
    ctx = RefCtx().bind("n", Sort.INT)
    wf_type(ctx, parse_type("int[n + 1]"))


def test_nat_existential_ok():
    wf_type(RefCtx(), parse_type("{a. int[a] | a >= 0}"))


def test_index_sort_mismatch():
    with pytest.raises(WfError):
        wf_type(RefCtx(), parse_type("int[true]"))
    with pytest.raises(WfError):
        wf_type(RefCtx().bind("b", Sort.BOOL), parse_type("int[b]"))


def test_existential_body_must_be_bool():
    with pytest.raises(WfError):
        wf_type(RefCtx(), parse_type("{a. int[a] | a + 1}"))


def test_fnsig_out_locs_must_be_subset_of_in():
    sig = parse_type("fn {l: loc}( ptr(l) ) -> uninit(1); l -> int[0]")
    with pytest.raises(WfError) as err:
        wf_type(RefCtx(), sig)
    assert "output locations" in str(err.value)


def test_fnsig_incr_shape_ok():
    sig = parse_type(
        "fn {a: int, l: loc | true | l -> int[a]}( ptr(l) ) -> uninit(1); "
        "l -> int[a + 1]"
    )
    wf_type(RefCtx(), sig)


def test_ptr_requires_loc_sorted_binder():
    with pytest.raises(WfError):
        wf_type(RefCtx(), parse_type("ptr(l)"))
    with pytest.raises(WfError):
        wf_type(RefCtx().bind("l", Sort.INT), parse_type("ptr(l)"))
    wf_type(RefCtx().bind("l", Sort.LOC), parse_type("ptr(l)"))


def test_locctx_ok_and_duplicates():
    ctx = RefCtx().bind("l", Sort.LOC)
    wf_locctx(ctx, LocCtx(((AbstractLoc("l"), Uninit(1)),)))
    dup = LocCtx(
        ((AbstractLoc("l"), Uninit(1)), (AbstractLoc("l"), Uninit(1)))
    )
    with pytest.raises(WfError) as err:
        wf_locctx(ctx, dup)
    assert "duplicate" in str(err.value)


def test_refctx_duplicate_binder():
    bad = RefCtx().bind("a", Sort.INT).bind("a", Sort.BOOL)
    with pytest.raises(WfError):
        wf_refctx(bad)


def test_refctx_assumption_sorts():
    ok = RefCtx().bind("a", Sort.INT).assume(R("a >= 0"))
    wf_refctx(ok)
    bad = RefCtx().bind("a", Sort.INT).assume(R("a + 1"))
    with pytest.raises(WfError):
        wf_refctx(bad)


def test_valctx_duplicates():
    ctx = RefCtx()
    good = ValCtx().bind("x", Uninit(1)).bind("y", Uninit(1))
    wf_valctx(ctx, good)
    bad = ValCtx(((("x"), Uninit(1)), (("x"), Uninit(1))))
    with pytest.raises(WfError):
        wf_valctx(ctx, bad)


def test_dynctx_requires_pointer_types():
    from lrcheck.syntax import ConcreteLoc

    ctx = RefCtx()
    wf_dynctx(ctx, {(0, 0): StrongPtr(ConcreteLoc(0))})
    wf_dynctx(ctx, {(0, 1): Ref("mut", Uninit(1))})
    with pytest.raises(WfError):
        wf_dynctx(ctx, {(0, 0): Indexed(IntBase(), IntConst(1))})


def test_wf_implies_free_vars_in_domain():
    # Lemma: wf types mention only bound refinement variables
    import random

    from gen import any_type, ctx_with_vars
    from lrcheck.logic import free_vars

    rng = random.Random(9)
    checked = 0
    for _ in range(300):
        ctx, ints, bools, locs = ctx_with_vars(rng, 2, 1, 1)
        t = any_type(rng, ints, locs, ["p"], 2)
        try:
            wf_type(ctx, t)
        except WfError:
            continue
        assert free_vars(t) <= set(ctx.domain())
        checked += 1
    assert checked >= 150
