import pytest

from spatial_rag.entities import Entity, GeoPoint, PropertyValue
from spatial_rag.grading import (
    AmbiguousTitle,
    AnswerSet,
    EmptySamples,
    VerdictValue,
    extract_answer_set,
    fold_text,
    grade,
    grade_top_k,
    latency_stats,
)

from oracles import median_low_oracle


def titled(suffix: str, title: str, **props) -> Entity:
    properties = {"title": PropertyValue(value=title)}
    properties.update({k: PropertyValue(value=v) for k, v in props.items()})
    return Entity(
        id=f"urn:ngsi-ld:PoI:{suffix}",
        type="PointOfInterest",
        location=GeoPoint(0.0, 0.0),
        properties=properties,
    )


def answers(*ids, out=(), cant_find=False) -> AnswerSet:
    return AnswerSet(mentions=tuple(ids), out_of_context=tuple(out), cant_find=cant_find)


UNIVERSE = [
    titled("1", "El Retiro"),
    titled("2", "Restaurante Botín"),
    titled("3", "Restaurante Sobrino de Botín"),
    titled("4", "Iglesia de Santa María de La Almudena"),
]


class TestFolding:
    def test_diacritics_and_case(self):
        assert fold_text("Botín") == "botin"
        assert fold_text("ALMUDENA") == "almudena"
        assert fold_text("María") == fold_text("maria")


class TestExtraction:
    def test_finds_titles_in_order(self):
        text = "Try Restaurante Botín first, then El Retiro."
        result = extract_answer_set(text, UNIVERSE)
        assert result.mentions == ("urn:ngsi-ld:PoI:2", "urn:ngsi-ld:PoI:1")
        assert not result.cant_find

    def test_diacritic_insensitive_matching(self):
        result = extract_answer_set("visit iglesia de santa maria de la almudena!",
                                    UNIVERSE)
        assert result.mentions == ("urn:ngsi-ld:PoI:4",)

    def test_duplicates_counted(self):
        result = extract_answer_set("El Retiro, lovely El Retiro, El Retiro again",
                                    UNIVERSE)
        assert result.mentions == ("urn:ngsi-ld:PoI:1",) * 3
        assert result.answered_count == 3
        assert result.distinct_ids == ("urn:ngsi-ld:PoI:1",)
        assert result.has_duplicates

    def test_longer_title_wins_over_contained_one(self):
        # "Restaurante Sobrino de Botín" must not double-count as plain "Botín"
        universe = UNIVERSE + [titled("5", "Botín")]
        result = extract_answer_set("Go to Restaurante Sobrino de Botín.", universe)
        assert result.mentions == ("urn:ngsi-ld:PoI:3",)

    def test_overlapping_unrelated_titles_raise(self):
        universe = [titled("a", "casa grande"), titled("b", "grande vista")]
        with pytest.raises(AmbiguousTitle):
            extract_answer_set("welcome to casa grande vista", universe)

    def test_cant_find_markers(self):
        result = extract_answer_set("I'm afraid I can't find anything like that!", UNIVERSE)
        assert result.cant_find and result.mentions == ()

    def test_out_of_context_names_flagged(self):
        catalog = UNIVERSE + [titled("99", "Museo del Prado")]
        result = extract_answer_set(
            "El Retiro and Museo del Prado are lovely.",
            UNIVERSE[:1], catalog=catalog,
        )
        assert result.mentions == ("urn:ngsi-ld:PoI:1",)
        assert result.out_of_context == ("museo del prado",)

    def test_duplicate_universe_titles_rejected(self):
        universe = [titled("1", "Retiro"), titled("2", "retiro")]
        with pytest.raises(ValueError):
            extract_answer_set("x", universe)


class TestGradeRubric:
    def test_full_cover_no_violations_is_correct(self):
        truth = UNIVERSE[:3]
        verdict = grade(answers(*[e.id for e in truth]), truth)
        assert verdict.value is VerdictValue.CORRECT
        assert verdict.violations_count == 0 and verdict.omissions_count == 0

    def test_ten_of_many_is_correct(self):
        truth = [titled(str(i), f"Place {i:03d}") for i in range(40)]
        named = [e.id for e in truth[:10]]
        verdict = grade(answers(*named), truth)
        assert verdict.value is VerdictValue.CORRECT

    def test_nine_of_many_is_not_correct(self):
        truth = [titled(str(i), f"Place {i:03d}") for i in range(40)]
        verdict = grade(answers(*[e.id for e in truth[:9]]), truth)
        assert verdict.value is VerdictValue.PARTIAL  # >=5 hits, no violations

    def test_repeated_mentions_downgrade_correct_to_partial(self):
        truth = [titled(str(i), f"Place {i:03d}") for i in range(40)]
        named = [e.id for e in truth[:10]] + [truth[0].id] * 3
        verdict = grade(answers(*named), truth)
        assert verdict.value is VerdictValue.PARTIAL

    def test_one_of_three_is_incorrect(self):
        truth = [titled("1", "A"), titled("2", "B"), titled("3", "C")]
        verdict = grade(answers("urn:ngsi-ld:PoI:1"), truth)
        assert verdict.value is VerdictValue.INCORRECT

    def test_sixty_four_answers_five_violations_is_partial(self):
        truth = [titled(str(i), f"P {i:03d}") for i in range(90)]
        outside = [titled(f"x{i}", f"X {i}") for i in range(5)]
        named = [e.id for e in truth[:59]] + [e.id for e in outside]
        verdict = grade(answers(*named), truth)
        assert verdict.answered_count == 64
        assert verdict.violations_count == 5
        assert verdict.value is VerdictValue.PARTIAL

    def test_four_of_seven_is_partial(self):
        truth = [titled(str(i), f"P {i}") for i in range(7)]
        verdict = grade(answers(*[e.id for e in truth[:4]]), truth)
        assert verdict.value is VerdictValue.PARTIAL

    def test_violations_at_ten_percent_not_tolerated(self):
        truth = [titled(str(i), f"P {i:03d}") for i in range(30)]
        outside = [titled("x", "X 1")]
        named = [e.id for e in truth[:9]] + [outside[0].id]  # 1 of 10 = 10%
        verdict = grade(answers(*named), truth)
        assert verdict.value is VerdictValue.INCORRECT

    def test_empty_truth_needs_explicit_cant_find(self):
        assert grade(answers(cant_find=True), []).value is VerdictValue.CORRECT
        assert grade(answers(), []).value is VerdictValue.INCORRECT
        assert grade(answers("urn:ngsi-ld:PoI:1", cant_find=True), []).value \
            is VerdictValue.INCORRECT

    def test_out_of_context_counts_as_violation(self):
        truth = UNIVERSE[:2]
        verdict = grade(answers(*[e.id for e in truth], out=("museo del prado",)), truth)
        assert verdict.violations_count == 1
        assert verdict.value is not VerdictValue.CORRECT

    def test_symbols(self):
        assert VerdictValue.CORRECT.symbol == "✓"
        assert VerdictValue.PARTIAL.symbol == "≈"
        assert VerdictValue.INCORRECT.symbol == "✗"


class TestGradeTopK:
    TIER = [titled(str(i), f"T {i}") for i in range(12)]

    def test_five_from_tier_is_correct(self):
        verdict = grade_top_k(answers(*[e.id for e in self.TIER[:5]]), self.TIER, 5)
        assert verdict.value is VerdictValue.CORRECT

    def test_fewer_than_k_still_correct(self):
        verdict = grade_top_k(answers(*[e.id for e in self.TIER[:3]]), self.TIER, 5)
        assert verdict.value is VerdictValue.CORRECT

    def test_more_than_k_not_correct(self):
        verdict = grade_top_k(answers(*[e.id for e in self.TIER[:7]]), self.TIER, 5)
        assert verdict.value is not VerdictValue.CORRECT

    def test_out_of_tier_names_are_violations(self):
        outside = titled("x", "Somewhere Else")
        named = [e.id for e in self.TIER[:4]] + [outside.id]
        verdict = grade_top_k(answers(*named), self.TIER, 5)
        assert verdict.value is VerdictValue.INCORRECT  # 1/5 = 20% violations

    def test_empty_tier_wants_cant_find(self):
        assert grade_top_k(answers(cant_find=True), [], 5).value is VerdictValue.CORRECT
        assert grade_top_k(answers("urn:x:1"), [], 5).value is VerdictValue.INCORRECT


class TestLatencyStats:
    def test_median_is_lower_middle(self):
        stats = latency_stats([4.0, 1.0, 3.0, 2.0])
        assert stats.median == 2.0  # lower middle of even-sized series
        assert stats.min == 1.0 and stats.max == 4.0 and stats.count == 4

    def test_matches_oracle(self):
        import random

        rng = random.Random(8)
        for _ in range(50):
            samples = [rng.uniform(0, 100) for _ in range(rng.randint(1, 21))]
            assert latency_stats(samples).median == median_low_oracle(samples)

    def test_empty_rejected(self):
        with pytest.raises(EmptySamples):
            latency_stats([])

    def test_min_le_median_le_max(self):
        stats = latency_stats([10.0, 20.0, 15.0])
        assert stats.min <= stats.median <= stats.max
