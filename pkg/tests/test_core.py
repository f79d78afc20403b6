import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gauntlet.core import (
    DeletionRequest,
    MechanismTranscript,
    Multiset,
    Release,
    STAR,
    exact_median,
    rank_error,
    remove,
    star_count,
)
from gauntlet.errors import EmptyDatasetError, UnderflowError


class TestRemove:
    def test_remove_to_empty(self):
        T = Multiset({1: 3})
        out = remove(T, 1, 3)
        assert out.total_size == 0
        assert out.count(1) == 0

    def test_remove_stars(self):
        T = Multiset({1: 3, STAR: 6})
        out = remove(T, STAR, 2)
        assert out.count(1) == 3
        assert out.count(STAR) == 4
        assert out.total_size == 7

    def test_underflow(self):
        T = Multiset({5: 1})
        with pytest.raises(UnderflowError):
            remove(T, 5, 2)

    def test_absent_element_rejected(self):
        with pytest.raises(UnderflowError):
            remove(Multiset({1: 1}), 2, 1)

    def test_original_untouched(self):
        T = Multiset({1: 3})
        remove(T, 1, 1)
        assert T.count(1) == 3


class TestStarCount:
    def test_empty(self):
        assert star_count(Multiset()) == 0

    def test_direct_read(self):
        assert star_count(Multiset({STAR: 12, 3: 1})) == 12

    def test_padded_dataset(self):
        # k=2, r=2: padding has 3*k*r = 12 stars
        k, r = 2, 2
        T = Multiset({1: 1, 2: 1, STAR: 3 * k * r})
        assert star_count(T) == 12


class TestExactMedian:
    def test_odd(self):
        assert exact_median(Multiset.from_iterable([1, 2, 3])) == 2

    def test_even_takes_lower(self):
        assert exact_median(Multiset.from_iterable([1, 2, 3, 4])) == 2

    @pytest.mark.parametrize("w", [0.25, 0.75])
    def test_middle_point_exposed_by_deletion(self, w):
        D = Multiset({0.0: 10, w: 1, 1.0: 12})
        assert exact_median(D) == 1.0
        assert exact_median(remove(D, 1.0, 1)) == w

    def test_empty_raises(self):
        with pytest.raises(EmptyDatasetError):
            exact_median(Multiset())


class TestRankError:
    def test_at_median(self):
        assert rank_error(Multiset.from_iterable([1, 2, 3, 4, 5]), 3) == 0

    def test_above(self):
        assert rank_error(Multiset.from_iterable([1, 2, 3, 4, 5]), 5) == 1

    def test_below(self):
        assert rank_error(Multiset.from_iterable([1, 2, 3, 4, 5]), 0) == 2


elements = st.integers(min_value=1, max_value=30)
msets = st.dictionaries(elements, st.integers(min_value=1, max_value=5), min_size=1, max_size=10)


@given(msets, st.data())
def test_removal_conserves_total(counts, data):
    T = Multiset(dict(counts))
    start = T.total_size
    removed = 0
    for _ in range(data.draw(st.integers(0, 5))):
        if T.total_size == 0:
            break
        x = data.draw(st.sampled_from(T.support()))
        m = data.draw(st.integers(1, T.count(x)))
        T = remove(T, x, m)
        removed += m
    assert T.total_size + removed == start


@given(st.lists(st.integers(-50, 50), min_size=1, max_size=30), st.randoms())
def test_median_permutation_invariant(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert exact_median(Multiset.from_iterable(values)) == exact_median(
        Multiset.from_iterable(shuffled)
    )


@given(msets)
def test_rank_error_of_median_is_zero(counts):
    D = Multiset(dict(counts))
    assert rank_error(D, exact_median(D)) == 0


@given(msets, st.data())
@settings(max_examples=50)
def test_remove_reinsert_round_trip(counts, data):
    T = Multiset(dict(counts))
    x = data.draw(st.sampled_from(T.support()))
    m = data.draw(st.integers(1, T.count(x)))
    assert remove(T, x, m).add(x, m) == T


class TestTranscriptJson:
    def test_schema(self):
        tr = MechanismTranscript(initial=Release.scalar(1.5))
        tr.steps.append((DeletionRequest(STAR, 2), Release.vector([1.0, 2.0])))
        tr.steps.append((DeletionRequest(3, 1), Release.scalar(0.5)))
        obj = tr.to_json()
        assert obj["initial"] == 1.5
        assert obj["steps"][0] == {"delete": {"elem": "star", "mult": 2}, "release": [1.0, 2.0]}
        assert obj["steps"][1]["delete"] == {"elem": 3, "mult": 1}
        json.dumps(obj)  # serializable

    def test_pair_and_structure_payloads(self):
        assert Release.pair(1.0, 2.0).to_json() == {"c1": 1.0, "c2": 2.0}
        assert Release.structure({"bits": 2}).to_json() == {"structure": {"bits": 2}}

    def test_deleted_values_expand_multiplicity(self):
        tr = MechanismTranscript(initial=Release.scalar(0))
        tr.steps.append((DeletionRequest(7, 3), Release.scalar(0)))
        assert tr.deleted_values() == [7, 7, 7]


def test_multiset_domain_validation():
    with pytest.raises(ValueError):
        Multiset({9: 1}, n=8)
    Multiset({8: 1, STAR: 2}, n=8)  # stars always allowed


def test_deletion_request_validation():
    with pytest.raises(ValueError):
        DeletionRequest(1, 0)
