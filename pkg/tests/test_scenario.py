import pytest

from spqkd.errors import ScenarioError
from spqkd.scenario import (
    BUNDLED,
    KEYS,
    REQUIRED,
    bundled_text,
    load_bundled,
    parse_scenario,
    resolve,
    serialize_scenario,
)

MINIMAL = """\
label = test
clock_hz = 40e6
source.emission_rate_hz = 4e6
source.g2 = 0.85
channel.length_km = 2
"""


def test_empty_file_lists_required_keys():
    with pytest.raises(ScenarioError) as exc:
        parse_scenario("")
    for key in REQUIRED:
        assert key in str(exc.value)


def test_minimal_uses_defaults():
    s = parse_scenario(MINIMAL)
    assert s.link.fiber_length_km == 2.0
    assert s.detector.efficiency == 0.4
    assert s.gate.offset_ps is None
    assert s.mu == pytest.approx(0.1)


def test_bundled_2km_high_flux():
    s = load_bundled("paper-2km-5uW")
    assert s.link.fiber_length_km == 2.0
    assert s.source.g2 == 0.85
    assert s.source.emission_rate_hz == 4e6


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_round_trip(name):
    s = load_bundled(name)
    assert parse_scenario(serialize_scenario(s)) == s
    assert s.label == name
    assert resolve(name) == s


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_files_are_commented(name):
    text = bundled_text(name)
    assert text.startswith("#")


def test_negative_g2_names_line_and_field():
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(MINIMAL.replace("source.g2 = 0.85", "source.g2 = -1"))
    msg = str(exc.value)
    assert "line 4" in msg and "g2" in msg and ">= 0" in msg


@pytest.mark.parametrize("text, line", [
    (MINIMAL + "bogus.key = 1\n", 6),
    (MINIMAL + "source.g2 = 0.3\n", 6),
    (MINIMAL + "detector.efficiency = lots\n", 6),
    (MINIMAL + "no equals sign\n", 6),
])
def test_errors_carry_line_numbers(text, line):
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(text)
    assert exc.value.line == line


def test_comments_and_auto_offset():
    s = parse_scenario("# header\n" + MINIMAL + "gate.offset_ps = auto  # calibrate\nseed = 12\n")
    assert s.gate.offset_ps is None and s.seed == 12
    s = parse_scenario(MINIMAL + "gate.offset_ps = -150\n")
    assert s.gate.offset_ps == -150.0


def test_infinite_extinction_round_trips():
    s = parse_scenario(MINIMAL + "alice.extinction_ratio = inf\n")
    assert parse_scenario(serialize_scenario(s)) == s


def test_with_value_and_get():
    s = parse_scenario(MINIMAL)
    t = s.with_value("channel.length_km", 5.0)
    assert t.get("channel.length_km") == 5.0 and s.get("channel.length_km") == 2.0
    with pytest.raises(ScenarioError):
        s.with_value("source.g2", -2.0)
    with pytest.raises(ScenarioError):
        s.with_value("nope", 1.0)


def test_every_key_serialised():
    text = serialize_scenario(parse_scenario(MINIMAL))
    for key in KEYS:
        assert f"\n{key} = " in "\n" + text
