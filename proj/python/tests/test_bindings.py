import json

import pytest

import starfl


def small_config(**over):
    cfg = json.loads(starfl.default_config())
    cfg["network"]["num_elements"] = 4
    cfg["learning"]["rounds"] = 10
    cfg["optimizer"]["L_a"] = 2
    for path, value in over.items():
        section, field = path.split(".")
        cfg[section][field] = value
    return json.dumps(cfg)


def test_default_config_round_trip():
    text = starfl.default_config()
    assert starfl.normalize_config(text) == text
    cfg = json.loads(text)
    assert cfg["network"]["num_noma"] == 3
    assert cfg["learning"]["rounds"] == 200


def test_config_error_names_field():
    with pytest.raises(ValueError, match=r"config\.power\.peak_dbm: unknown field"):
        starfl.normalize_config('{"power": {"peak_dbm": 23}}')


def test_run_rows_and_determinism():
    cfg = small_config()
    rec = starfl.run(cfg, "equal_power", 2)
    assert rec["scheme"] == "equal_power"
    assert len(rec["rows"]) == 10
    assert all(r["gap"] >= 0 for r in rec["rows"])
    assert starfl.run_csv(cfg, "equal_power", 2) == starfl.run_csv(cfg, "equal_power", 2)


def test_unknown_scheme():
    with pytest.raises(Exception, match="valid: proposed"):
        starfl.run(small_config(), "fastest", 1)


def test_gap_terms_match_closed_form():
    l3 = starfl.lambda3([1.0], 1.0, 1.0, 0.1, 1)
    assert l3 == pytest.approx(0.81)
    l4 = starfl.lambda4([0.0], 2.0, 0.1, 1, 0.0, 10, 0.5)
    assert l4 == pytest.approx(2.0 * 10 * 0.01 * 0.5 / 2.0)
    assert starfl.upsilon([0.5], [0.2], 3.0) == pytest.approx(1.7)


def test_verify_suite_report():
    rep = json.loads(starfl.verify("gradients"))
    assert rep["total"] >= 2
    assert rep["failed"] == 0
    with pytest.raises(Exception, match="valid: identities"):
        starfl.verify("everything")


def test_figure_names():
    assert set(starfl.figure_names()) == {
        "gap_schemes", "gap_vs_M", "obstacle", "rate_vs_location", "rate_vs_M"}
