from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from faultforge.ltl import (
    And, Always, Eventually, Implies, LassoWord, LtlSyntaxError, Next, Not,
    Or, Prop, TRUE, Until, atoms, eval_word, expand_derived, parse_formula,
    pretty,
)


def word(prefix, cycle):
    return LassoWord(tuple(frozenset(x) for x in prefix),
                     tuple(frozenset(x) for x in cycle))


class TestParser:
    def test_always_implies_eventually(self):
        f = parse_formula("G (p -> F q)")
        assert f == Always(Implies(Prop("p"), Eventually(Prop("q"))))

    def test_until_right_associative(self):
        assert parse_formula("p U q U r") == Until(Prop("p"), Until(Prop("q"), Prop("r")))

    def test_missing_operand_is_syntax_error(self):
        with pytest.raises(LtlSyntaxError):
            parse_formula("G F")

    def test_precedence_unary_over_until_over_and_over_or_over_implies(self):
        f = parse_formula("!p U q && r || s -> t")
        expected = Implies(Or(And(Until(Not(Prop("p")), Prop("q")), Prop("r")), Prop("s")), Prop("t"))
        assert f == expected

    def test_channel_predicates(self):
        assert parse_formula("empty(AtoB)") == Prop("empty(AtoB)")
        assert parse_formula("len(AtoB) == 2") == Prop("len(AtoB)==2")

    def test_qualified_atoms_and_equality(self):
        assert parse_formula("A.Closed") == Prop("A.Closed")
        assert parse_formula("A.hs == 1") == Prop("A.hs==1")
        assert parse_formula("A.pa != B.pb") == Not(Prop("A.pa==B.pb"))

    def test_trailing_garbage_rejected(self):
        with pytest.raises(LtlSyntaxError):
            parse_formula("p q")

    def test_error_carries_position(self):
        with pytest.raises(LtlSyntaxError) as err:
            parse_formula("p && $")
        assert err.value.position == 5


formulas = st.deferred(lambda: st.one_of(
    st.just(TRUE),
    st.sampled_from([Prop("p"), Prop("q"), Prop("r")]),
    st.builds(Not, formulas),
    st.builds(Next, formulas),
    st.builds(Eventually, formulas),
    st.builds(Always, formulas),
    st.builds(And, formulas, formulas),
    st.builds(Or, formulas, formulas),
    st.builds(Implies, formulas, formulas),
    st.builds(Until, formulas, formulas),
))

letters = st.frozensets(st.sampled_from(["p", "q", "r"]))
words = st.builds(
    LassoWord,
    st.lists(letters, max_size=4).map(tuple),
    st.lists(letters, min_size=1, max_size=4).map(tuple),
)


class TestRoundTrip:
    @settings(max_examples=300, deadline=None)
    @given(formulas)
    def test_parse_pretty_fixpoint(self, f):
        assert parse_formula(pretty(f)) == f

    def test_corpus_round_trip(self):
        corpus = [
            "G !(A.Closed && B.Established)",
            "F (A.Closed && B.Closed)",
            "G ((A.FinWait1 && B.FinWait1) -> F (A.Closed && B.Closed))",
            "G (A.SynReceived -> F (A.Established || A.FinWait1 || A.Closed))",
            "G (A.pa != B.pb -> F A.pa == B.pb)",
            "p U (q U r) && !empty(AtoB)",
            "X X p -> len(BtoA) == 1",
        ]
        for text in corpus:
            f = parse_formula(text)
            assert parse_formula(pretty(f)) == f


class TestEvalWord:
    def test_always_on_constant_cycle(self):
        assert eval_word(parse_formula("G p"), word([], [{"p"}]))

    def test_next_looks_one_step_ahead(self):
        assert eval_word(parse_formula("X p"), word([set()], [{"p"}]))

    def test_until_needs_a_witness(self):
        assert not eval_word(parse_formula("p U q"), word([{"p"}], [set()]))

    def test_until_witness_in_cycle(self):
        assert eval_word(parse_formula("p U q"), word([{"p"}, {"p"}], [{"q"}]))

    def test_eventually_only_in_prefix(self):
        assert eval_word(parse_formula("F q"), word([{"q"}], [set()]))

    def test_always_fails_on_prefix_gap(self):
        assert not eval_word(parse_formula("G p"), word([set()], [{"p"}]))

    def test_position_argument(self):
        w = word([set(), {"p"}], [{"q"}])
        assert not eval_word(parse_formula("p"), w, 0)
        assert eval_word(parse_formula("p"), w, 1)
        assert eval_word(parse_formula("q"), w, 2)

    def test_position_out_of_range(self):
        with pytest.raises(ValueError):
            eval_word(TRUE, word([], [set()]), 5)


class TestSemanticProperties:
    @settings(max_examples=300, deadline=None)
    @given(formulas, words)
    def test_double_negation(self, f, w):
        assert eval_word(Not(Not(f)), w) == eval_word(f, w)

    @settings(max_examples=300, deadline=None)
    @given(formulas, words)
    def test_always_is_not_eventually_not(self, f, w):
        assert eval_word(Always(f), w) == eval_word(Not(Eventually(Not(f))), w)

    @settings(max_examples=300, deadline=None)
    @given(formulas, words)
    def test_eventually_is_true_until(self, f, w):
        assert eval_word(Eventually(f), w) == eval_word(Until(TRUE, f), w)

    @settings(max_examples=300, deadline=None)
    @given(formulas, words)
    def test_expansion_preserves_semantics(self, f, w):
        assert eval_word(expand_derived(f), w) == eval_word(f, w)


class TestExpand:
    def test_eventually(self):
        assert expand_derived(Eventually(Prop("p"))) == Until(TRUE, Prop("p"))

    def test_always(self):
        assert expand_derived(Always(Prop("p"))) == Not(Until(TRUE, Not(Prop("p"))))

    def test_core_is_fixpoint(self):
        f = Until(Prop("p"), And(Not(Prop("q")), Next(TRUE)))
        assert expand_derived(f) == f

    @settings(max_examples=200, deadline=None)
    @given(formulas)
    def test_output_is_core_syntax(self, f):
        def core_only(g):
            if isinstance(g, (Or, Implies, Eventually, Always)):
                return False
            if isinstance(g, (Not, Next)):
                return core_only(g.child)
            if isinstance(g, (And, Until)):
                return core_only(g.left) and core_only(g.right)
            return True
        assert core_only(expand_derived(f))

    def test_atoms_helper(self):
        assert atoms(parse_formula("G (p -> F q) && r")) == {"p", "q", "r"}
