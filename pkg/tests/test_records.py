import json

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from rfiqkd import BASIS_PAIRS, ChannelParams, ProtocolParams, SessionParams, TallyTable
from rfiqkd.records import (
    ExperimentRecord,
    RecordError,
    bundled_dataset_dir,
    channel_from_dict,
    channel_to_dict,
    load_dataset,
    load_record,
    save_record,
    tallies_from_dict,
    tallies_to_dict,
)


@st.composite
def integer_tallies(draw):
    n, m = {}, {}
    for b in BASIS_PAIRS:
        for k in ("mu", "nu"):
            n[b, k] = float(draw(st.integers(0, 10**12)))
            m[b, k] = float(draw(st.integers(0, int(n[b, k]))))
    return TallyTable(n, m)


@st.composite
def records_strategy(draw):
    p_z = draw(st.floats(0.02, 0.96))
    mu = draw(st.floats(0.05, 1.0))
    pp = ProtocolParams.symmetric(mu, draw(st.floats(0.001, mu * 0.9)), draw(st.floats(0.01, 0.99)), p_z)
    pp = ProtocolParams(*(float(v) for v in pp.as_dict().values()))
    published = draw(st.dictionaries(st.sampled_from(["C", "E_ZZ", "skr_bits_per_second"]),
                                     st.floats(1e-6, 1e6)))
    return ExperimentRecord(
        fiber_km=draw(st.one_of(st.none(), st.floats(0, 500))),
        loss_db=draw(st.floats(0, 80)),
        protocol=pp,
        session=SessionParams(draw(st.floats(1, 1e13)), draw(st.floats(1, 1e10))),
        tallies=draw(integer_tallies()),
        published=published,
    )


def test_bundled_dataset_has_five_distances():
    recs = load_dataset()
    assert [r.fiber_km for r in recs] == [50, 100, 150, 200, 250]
    assert [r.loss_db for r in recs] == [8.95, 19.08, 29.71, 39.29, 47.10]
    assert all(r.tallies.is_integral() for r in recs)
    assert all(r.session.n_tot == 8.1e11 for r in recs)


def test_bundled_long_link_counts(records):
    t = records[250].tallies
    assert t.n["ZZ", "mu"] == 93130
    assert t.n_total("ZZ") == 124317
    assert t.m_total("ZZ") == 2198


def test_bundled_key_basis_error_matches_published_column(records):
    for rec in records.values():
        assert rec.tallies.qber("ZZ") == pytest.approx(rec.published["E_ZZ"], abs=1e-4)


@settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(records_strategy())
def test_record_round_trip(tmp_path, rec):
    path = tmp_path / "rec.json"
    save_record(path, rec)
    back = load_record(path)
    assert back.to_dict() == rec.to_dict()
    assert back.tallies == rec.tallies


@settings(max_examples=100, deadline=None)
@given(integer_tallies())
def test_tally_dict_round_trip(t):
    assert tallies_from_dict(json.loads(json.dumps(tallies_to_dict(t))), integral=True) == t


def test_tally_keys_use_dotted_names(records):
    d = tallies_to_dict(records[250].tallies)
    assert sorted(d["n"]) == sorted(f"{b}.{k}" for b in BASIS_PAIRS for k in ("mu", "nu"))


def test_channel_round_trip():
    ch = ChannelParams(eta_d=0.5, p_d=1e-7, e_d_z=0.01, e_d_xy=0.02, loss_db=12.5, theta=0.3)
    assert channel_from_dict(channel_to_dict(ch)) == ch


def _bundled(km):
    return json.loads((bundled_dataset_dir() / f"{km:03d}km.json").read_text())


@pytest.mark.parametrize("mutate, message", [
    (lambda d: d["tallies"]["m"].__setitem__("ZZ.mu", d["tallies"]["n"]["ZZ.mu"] + 1), "exceeds"),
    (lambda d: d["tallies"]["n"].__setitem__("ZZ.mu", 10.5), "integer"),
    (lambda d: d["tallies"]["n"].pop("YY.nu"), "missing"),
    (lambda d: d["tallies"]["n"].__setitem__("ZX.mu", 1), "unknown"),
    (lambda d: d["published"].__setitem__("C", -1.0), "positive"),
    (lambda d: d["published"].__setitem__("Q", 1.0), "unknown"),
    (lambda d: d.pop("protocol"), "protocol"),
    (lambda d: d["protocol"].__setitem__("nu", 0.9), "protocol"),
    (lambda d: d.__setitem__("loss_db", -3), "loss_db"),
])
def test_invalid_records_rejected(tmp_path, mutate, message):
    d = _bundled(250)
    mutate(d)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(d))
    with pytest.raises(RecordError, match=message):
        load_record(path)


def test_malformed_json_rejected(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(RecordError):
        load_record(path)


def test_missing_file_rejected(tmp_path):
    with pytest.raises(RecordError):
        load_record(tmp_path / "absent.json")


def test_empty_dataset_directory_rejected(tmp_path):
    with pytest.raises(RecordError):
        load_dataset(tmp_path)
    with pytest.raises(RecordError):
        load_dataset(tmp_path / "absent")
