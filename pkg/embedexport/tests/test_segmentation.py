import pytest

from embedexport.segmentation import segment_sentences


def test_two_sentences():
    assert segment_sentences("Fever noted. Cough present.") == [
        "Fever noted.",
        "Cough present.",
    ]


def test_decimal_point_is_not_a_boundary():
    assert segment_sentences("Temp 38.5 noted.") == ["Temp 38.5 noted."]


def test_empty_text():
    assert segment_sentences("") == []
    assert segment_sentences("   \n ") == []


def test_abbreviation_protected():
    assert segment_sentences("Seen by Dr. Smith today. Advised rest.") == [
        "Seen by Dr. Smith today.",
        "Advised rest.",
    ]


def test_exclamation_and_question():
    assert segment_sentences("No fever! Any cough? None reported.") == [
        "No fever!",
        "Any cough?",
        "None reported.",
    ]


def test_nonempty_text_never_yields_empty_list():
    assert segment_sentences("no terminal punctuation") == ["no terminal punctuation"]
    assert segment_sentences("e.g.") == ["e.g."]


@pytest.mark.parametrize("text", ["One. Two. Three.", "a? b! c."])
def test_deterministic(text):
    assert segment_sentences(text) == segment_sentences(text)
