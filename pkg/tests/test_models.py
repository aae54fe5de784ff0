import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_sh_model
from hiersel import EMPTY, InvalidMove, ModelAlpha, MoveKind, apply_move, check_strong_hierarchy
from hiersel.models import (add_interaction, add_main, enumerate_models, move_for_element,
                            neighborhood, remove_interaction, remove_main, search_elements,
                            size_after)


def test_sh_definition():
    assert check_strong_hierarchy(ModelAlpha((1, 2), ((1, 2),)))
    assert not check_strong_hierarchy(ModelAlpha((1,), ((1, 2),)))
    assert check_strong_hierarchy(EMPTY)


def test_canonical_form():
    a = ModelAlpha((3, 1, 2, 1), ((2, 1), (3, 1)))
    assert a.mains == (1, 2, 3)
    assert a.interactions == ((1, 2), (1, 3))
    assert a == ModelAlpha((1, 2, 3), ((1, 3), (1, 2)))
    assert hash(a) == hash(ModelAlpha((2, 3, 1), ((1, 2), (3, 1))))
    assert a.terms() == [1, 2, 3, (1, 2), (1, 3)]
    assert a.size == 5


def test_remove_main_cascades():
    assert apply_move(ModelAlpha((1, 2), ((1, 2),)), remove_main(1)) == ModelAlpha((2,))


def test_add_interaction_pulls_in_mains():
    assert apply_move(EMPTY, add_interaction(3, 7)) == ModelAlpha((3, 7), ((3, 7),))
    assert apply_move(ModelAlpha((3,)), add_interaction(7, 3)) == ModelAlpha((3, 7), ((3, 7),))


def test_remove_interaction_drops_only_pair():
    assert apply_move(ModelAlpha((1, 2), ((1, 2),)), remove_interaction(1, 2)) == ModelAlpha((1, 2))


def test_add_main_adds_only_main():
    assert apply_move(ModelAlpha((1,)), add_main(4)) == ModelAlpha((1, 4))


@pytest.mark.parametrize("alpha, move", [
    (ModelAlpha((1,)), add_main(1)),
    (ModelAlpha((1,)), remove_main(2)),
    (ModelAlpha((1, 2), ((1, 2),)), add_interaction(1, 2)),
    (ModelAlpha((1, 2)), remove_interaction(1, 2)),
])
def test_inapplicable_move(alpha, move):
    with pytest.raises(InvalidMove):
        apply_move(alpha, move)


def test_move_validation():
    with pytest.raises(ValueError):
        add_interaction(2, 2)
    with pytest.raises(ValueError):
        add_main(1).__class__(MoveKind.ADD_MAIN, 1, 2)


def test_neighborhood_of_empty_pair():
    moves = neighborhood(EMPTY, [1, 2])
    assert set(moves) == {add_main(1), add_main(2), add_interaction(1, 2)}
    # same set by brute force: SH models reachable by one diff element
    oracle = {m for m in enumerate_models([1, 2]) if _is_neighbor(EMPTY, m)}
    assert {apply_move(EMPTY, mv) for mv in moves} == oracle


def test_neighborhood_shrink_only():
    assert neighborhood(ModelAlpha((1,)), [1]) == [remove_main(1)]


@pytest.mark.parametrize("d", range(0, 8))
def test_neighborhood_count_from_empty(d):
    assert len(neighborhood(EMPTY, range(d))) == d + d * (d - 1) // 2


def test_neighborhood_requires_mains_in_universe():
    with pytest.raises(ValueError):
        neighborhood(ModelAlpha((1, 5)), [1, 2])


def test_neighborhood_size_cap():
    alpha = ModelAlpha((0, 1), ((0, 1),))
    capped = neighborhood(alpha, range(4), max_size=3)
    assert all(apply_move(alpha, mv).size <= 3 for mv in capped)
    full = neighborhood(alpha, range(4))
    assert {mv for mv in full if apply_move(alpha, mv).size <= 3} == set(capped)


def test_113_models_at_p4():
    models = list(enumerate_models(range(4)))
    assert len(models) == 113
    assert len(set(models)) == 113
    assert all(check_strong_hierarchy(m) for m in models)


def _is_neighbor(a, b):
    """Brute-force neighborhood relation: one diff element separates a and b."""
    for e in search_elements(set(a.mains) | set(b.mains) | {v for pr in b.interactions for v in pr}):
        if apply_move(a, move_for_element(a, e)) == b:
            return True
    return False


def _closure_check(universe):
    models = list(enumerate_models(universe))
    for alpha in models:
        moves = neighborhood(alpha, universe)
        results = [apply_move(alpha, mv) for mv in moves]
        assert len(set(results)) == len(results)  # uniqueness
        for mv, new in zip(moves, results):
            assert check_strong_hierarchy(new)
            assert size_after(alpha, mv) == new.size
            e = mv.element
            if mv.kind in (MoveKind.ADD_MAIN, MoveKind.ADD_INTERACTION):
                # smallest SH model containing alpha and the element
                assert alpha < new and e in new
                between = [m for m in models if alpha <= m < new and e in m]
                assert between == []
            else:
                # largest SH model inside alpha without the element
                assert new < alpha and e not in new
                between = [m for m in models if new < m <= alpha and e not in m]
                assert between == []


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_closure_exhaustive(d):
    _closure_check(range(d))


def test_involution_on_pairs():
    for alpha in enumerate_models(range(4)):
        for j, k in alpha.interactions:
            back = apply_move(apply_move(alpha, remove_interaction(j, k)), add_interaction(j, k))
            assert back == alpha


def test_remove_then_add_main():
    for alpha in enumerate_models(range(4)):
        for j in alpha.mains:
            back = apply_move(apply_move(alpha, remove_main(j)), add_main(j))
            touching = any(j in pr for pr in alpha.interactions)
            assert (back == alpha) == (not touching)


def test_move_for_element_toggles():
    alpha = ModelAlpha((0, 2), ((0, 2),))
    assert move_for_element(alpha, 0) == remove_main(0)
    assert move_for_element(alpha, 1) == add_main(1)
    assert move_for_element(alpha, (0, 2)) == remove_interaction(0, 2)
    assert move_for_element(alpha, (1, 2)) == add_interaction(1, 2)


def test_search_elements_order():
    assert search_elements([2, 0, 1]) == [0, 1, 2, (0, 1), (0, 2), (1, 2)]


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), steps=st.integers(1, 30))
def test_random_walks_stay_hierarchical(seed, steps):
    rng = np.random.default_rng(seed)
    p = 7
    alpha = random_sh_model(rng, p)
    for _ in range(steps):
        moves = neighborhood(alpha, range(p))
        alpha = apply_move(alpha, moves[rng.integers(len(moves))])
        assert check_strong_hierarchy(alpha)


@settings(max_examples=100, deadline=None)
@given(mains=st.sets(st.integers(0, 9), max_size=6), data=st.data())
def test_sh_check_matches_definition(mains, data):
    pairs = data.draw(st.sets(st.tuples(st.integers(0, 9), st.integers(0, 9))
                              .filter(lambda t: t[0] != t[1]), max_size=6))
    alpha = ModelAlpha(tuple(mains), tuple(pairs))
    expected = all(j in mains and k in mains for j, k in pairs)
    assert check_strong_hierarchy(alpha) == expected


def test_enumerate_models_matches_brute_force():
    # every SH subset of mains + pairs over 4 variables, from the raw power set
    mains = range(4)
    pairs = list(itertools.combinations(mains, 2))
    count = 0
    for r in range(5):
        for ms in itertools.combinations(mains, r):
            for s in range(len(pairs) + 1):
                for ps in itertools.combinations(pairs, s):
                    if check_strong_hierarchy(ModelAlpha(ms, ps)):
                        count += 1
    assert count == 113
