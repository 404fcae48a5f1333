import io
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gnss_ncr.nmea import (
    Constellation, Epoch, EpochAssembler, GsvParseError, RawSentence, Skip, SkipReason,
    assemble_epochs, build_sentence, iter_sentences, parse_gsv, parse_sentence,
    parse_time_of_day, read_epochs, validate_checksum, write_epochs_jsonl,
)


def rmc(t):
    return build_sentence(f"GNRMC,{t},A,2751.62,N,11253.84,E,0.0,0.0,161026,,,A")


def gsv(talker, blocks, total=None, idx=1, count=1, signal=None):
    n = total if total is not None else len(blocks)
    parts = [f"{talker}GSV", str(count), str(idx), "%02d" % n]
    for b in blocks:
        parts += [str(x) for x in b]
    if signal is not None:
        parts.append(signal)
    return build_sentence(",".join(parts))


@pytest.mark.parametrize("line, ok", [
    ("$A*41", True),
    ("$A*42", False),
    ("$AB*03", True),
    ("$ab*03", True),
    ("$AB*3", False),
    ("AB*03", False),
    ("$AB03", False),
    ("$AB*zz", False),
    ("", False),
])
def test_validate_checksum(line, ok):
    assert validate_checksum(line) is ok


def test_checksum_hex_case_insensitive():
    s = build_sentence("GPGSV,1,1,01,23,12,045,")
    assert validate_checksum(s[:-2] + s[-2:].lower())


def test_parse_sentence_gsv():
    line = build_sentence("GPGSV,2,1,08,01,40,083,46,02,17,308,41")
    s = parse_sentence(line + "\r\n")
    assert isinstance(s, RawSentence)
    assert (s.talker, s.type_code) == ("GP", "GSV")
    assert s.fields == ("2", "1", "08", "01", "40", "083", "46", "02", "17", "308", "41")
    assert s.checksum_ok


def test_parse_sentence_empty_fields_absent():
    s = parse_sentence(build_sentence("GPGSV,1,1,01,23,12,045,"))
    assert s.fields[-1] is None


@pytest.mark.parametrize("line, reason", [
    ("garbage", SkipReason.MALFORMED),
    (build_sentence("XXGSV,1,1,00"), SkipReason.UNKNOWN_TALKER),
    ("$GPGSV,1,1,00*00", SkipReason.BAD_CHECKSUM),
    ("$GP*00", SkipReason.MALFORMED),
    ("$GPGSV,1,1,00\xff*00", SkipReason.MALFORMED),
])
def test_parse_sentence_skips(line, reason):
    s = parse_sentence(line)
    assert isinstance(s, Skip) and s.reason is reason


def test_parse_gsv_two_sats():
    s = RawSentence("GP", "GSV", ("2", "1", "08", "01", "40", "083", "46", "02", "17", "308", "41"))
    g = parse_gsv(s)
    assert (g.msg_index, g.msg_count, g.sats_in_view) == (1, 2, 8)
    assert [(o.prn, o.elevation, o.azimuth, o.cn0) for o in g.observations] == [(1, 40, 83, 46), (2, 17, 308, 41)]
    assert all(o.constellation is Constellation.GPS for o in g.observations)


def test_parse_gsv_empty_snr():
    g = parse_gsv(RawSentence("GP", "GSV", ("1", "1", "01", "23", "12", "045", None)))
    (o,) = g.observations
    assert (o.prn, o.elevation, o.azimuth, o.cn0) == (23, 12, 45, None)
    assert not o.available


def test_parse_gsv_bad_prn():
    with pytest.raises(GsvParseError, match="PRN"):
        parse_gsv(RawSentence("GP", "GSV", ("1", "1", "01", "xx", "12", "045", "30")))


def test_parse_gsv_bad_field_count():
    with pytest.raises(GsvParseError, match="3 \\+ 4k"):
        parse_gsv(RawSentence("GP", "GSV", ("1", "1", "01", "23", "12")))


def test_parse_gsv_signal_id():
    g = parse_gsv(RawSentence("GA", "GSV", ("1", "1", "01", "05", "40", "100", "44", "7")))
    assert g.signal_id == "7"
    assert g.observations[0].constellation is Constellation.GALILEO
    assert g.observations[0].signal_id == "7"


def test_parse_gsv_azimuth_normalized():
    g = parse_gsv(RawSentence("GP", "GSV", ("1", "1", "01", "05", "40", "360", "44")))
    assert g.observations[0].azimuth == 0.0


def test_gn_talker_maps_by_prn():
    g = parse_gsv(RawSentence("GN", "GSV", ("1", "1", "02", "70", "40", "10", "44", "05", "40", "20", "40")))
    assert [o.constellation for o in g.observations] == [Constellation.GLONASS, Constellation.GPS]


def test_time_of_day():
    assert parse_time_of_day("120500.20") == pytest.approx(43500.2)
    assert parse_time_of_day(None) is None
    assert parse_time_of_day("12") is None


def test_assemble_one_epoch_multiple_talkers():
    gp = [(1, 40, 10, 40), (2, 30, 20, 41), (3, 20, 30, 42), (4, 10, 40, 43), (5, 50, 50, 44)]
    lines = [
        rmc("120500.00"),
        gsv("GP", gp[:4], total=5, idx=1, count=2),
        gsv("GP", gp[4:], total=5, idx=2, count=2),
        gsv("GL", [(65, 10, 100, 30), (66, 20, 110, 31), (67, 30, 120, 32)]),
        rmc("120500.20"),
    ]
    eps = read_epochs("\r\n".join(lines) + "\r\n")
    assert len(eps) == 2
    first = eps[0]
    assert first.timestamp == pytest.approx(43500.0)
    assert len(first.observations) == 8
    assert not first.partial
    assert eps[1].observations == [] and eps[1].partial


def test_assemble_max_cn0_across_signals():
    lines = [rmc("120500.00"),
             gsv("GP", [(5, 40, 10, 40)], signal="1"),
             gsv("GP", [(5, 40, 10, 44)], signal="6"),
             rmc("120500.20")]
    ep = read_epochs("\n".join(lines))[0]
    assert len(ep.observations) == 1
    assert ep.observations[0].cn0 == 44


def test_assemble_keeps_tracked_over_untracked_duplicate():
    lines = [rmc("120500.00"),
             gsv("GP", [(5, 40, 10, 38)], signal="1"),
             gsv("GP", [(5, 40, 10, "")], signal="6"),
             rmc("120500.20")]
    ep = read_epochs("\n".join(lines))[0]
    assert ep.observations[0].cn0 == 38


def test_assemble_empty_epoch():
    eps = read_epochs("\n".join([rmc("120500.00"), rmc("120500.20")]))
    assert eps[0].observations == []
    assert len(eps) == 2


def test_gga_fallback_when_no_rmc():
    gga = lambda t: build_sentence(f"GPGGA,{t},2751.62,N,11253.84,E,1,08,1.0,50.0,M,0.0,M,,")
    lines = [gga("000001.00"), gsv("GP", [(1, 40, 10, 40)]), gga("000001.20"), gsv("GP", [(2, 40, 10, 40)])]
    eps = read_epochs("\n".join(lines))
    assert [e.timestamp for e in eps] == [1.0, 1.2]
    assert [o.prn for o in eps[0].observations] == [1]


def test_rmc_takes_over_from_gga_within_cycle():
    gga = lambda t: build_sentence(f"GPGGA,{t},2751.62,N,11253.84,E,1,08,1.0,50.0,M,0.0,M,,")
    lines = [gga("000001.00"), rmc("000001.00"), gsv("GP", [(1, 40, 10, 40)]),
             gga("000001.20"), rmc("000001.20"), gsv("GP", [(2, 40, 10, 40)])]
    eps = read_epochs("\n".join(lines))
    assert [e.timestamp for e in eps] == [1.0, 1.2]


def test_gsv_before_first_delimiter_dropped():
    eps = read_epochs("\n".join([gsv("GP", [(1, 40, 10, 40)]), rmc("000001.00")]))
    assert len(eps) == 1 and eps[0].observations == []


def test_bad_gsv_counted_not_fatal():
    asm = EpochAssembler()
    asm.push(parse_sentence(rmc("000001.00")))
    asm.push(parse_sentence(build_sentence("GPGSV,1,1,01,xx,12,045,30")))
    assert asm.gsv_errors == 1
    assert asm.finish().observations == []


def test_iter_sentences_stats_and_binary_input():
    data = (rmc("000001.00") + "\r\nnoise\r\n$GPGSV,1,1,00*00\r\n").encode()
    stats = {}
    out = list(iter_sentences(io.BytesIO(data), stats))
    assert len(out) == 1
    assert stats == {"ok": 1, "malformed": 1, "bad-checksum": 1}


def test_epoch_jsonl_round_trip():
    lines = [rmc("120500.00"), gsv("GP", [(1, 40, 10, 40), (2, 12, 45, "")]), rmc("120500.20")]
    eps = read_epochs("\n".join(lines))
    buf = io.StringIO()
    write_epochs_jsonl(eps, buf)
    rows = buf.getvalue().splitlines()
    assert json.loads(rows[0])["observations"][1] == {"const": "GPS", "prn": 2, "el": 12.0, "az": 45.0, "cn0": None}
    back = [Epoch.from_json(r) for r in rows]
    assert [b.observations for b in back] == [e.observations for e in eps]


def test_read_epochs_from_path(tmp_path):
    p = tmp_path / "log.nmea"
    p.write_text("\r\n".join([rmc("000001.00"), gsv("GP", [(1, 40, 10, 40)])]) + "\r\n")
    assert len(read_epochs(p)) == 1
    assert len(read_epochs(str(p))) == 1


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=400))
def test_parsing_is_total(blob):
    eps = list(assemble_epochs(iter_sentences(io.BytesIO(blob))))
    for ep in eps:
        keys = [o.key for o in ep.observations]
        assert len(keys) == len(set(keys))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 32), st.integers(0, 90), st.integers(0, 359),
                          st.one_of(st.none(), st.integers(0, 99))), max_size=12, unique_by=lambda t: t[0]))
def test_epoch_invariants(sats):
    lines = [rmc("000001.00")]
    for i in range(0, len(sats), 4):
        lines.append(gsv("GP", [(p, e, a, "" if c is None else c) for p, e, a, c in sats[i:i + 4]],
                         total=len(sats)))
    (ep,) = read_epochs("\n".join(lines))
    assert len(ep.observations) == len(sats)
    assert all(0 <= o.azimuth < 360 for o in ep.observations)
    assert all(o.cn0 is None or 0 <= o.cn0 <= 99 for o in ep.observations)
    assert ep.num_available == sum(c is not None for *_, c in sats)
