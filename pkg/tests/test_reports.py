import json

import pytest

from services.btf_protocol.ledger import Phase, TimingEntry, TransmissionLedger
from services.btf_protocol.messages import Artifact, Channel, Model
from tools.btf_harness import reports
from utils.errors import IncompleteRun
from utils.params import DESK


def _kdp_ledger(model, params="desk", c_to_s=100, l_w=64):
    ledger = TransmissionLedger(model, params, l_w)
    ledger.record(Phase.KDP, Channel.C_TO_S, Artifact.IV, c_to_s)
    return ledger


@pytest.mark.parametrize("nbytes,text", [
    (999, "999 B"),
    (2048, "2.00 KB"),
    (201920, "197.19 KB"),
    (43888640, "41.86 MB"),
])
def test_format_bytes(nbytes, text):
    assert reports.format_bytes(nbytes) == text


def test_unit_sizes_follow_size_laws():
    units = reports.unit_sizes(DESK, 64)
    assert units[Artifact.PK_C] == 64 * 260
    assert units[Artifact.E_DK] == units[Artifact.K_PRIME] == 80 * 260
    assert units[Artifact.C] == 8
    assert units[Artifact.IV] == 10
    assert units[Artifact.R] == 1


def test_setup_report_requires_every_model():
    with pytest.raises(IncompleteRun):
        reports.report_setup([_kdp_ledger(Model.BTF), _kdp_ledger(Model.ST_FHE)])


def test_setup_report_requires_key_distribution():
    empty = TransmissionLedger(Model.ORIG_TC, "desk", 64)
    with pytest.raises(IncompleteRun):
        reports.report_setup([_kdp_ledger(Model.BTF), _kdp_ledger(Model.ST_FHE), empty])


def test_setup_report_rejects_mixed_params():
    with pytest.raises(IncompleteRun):
        reports.report_setup([
            _kdp_ledger(Model.BTF), _kdp_ledger(Model.ST_FHE), _kdp_ledger(Model.ORIG_TC, "tfhe80"),
        ])


def test_setup_report_rejects_mixed_feature_lengths():
    with pytest.raises(IncompleteRun, match="feature lengths"):
        reports.report_setup([
            _kdp_ledger(Model.BTF), _kdp_ledger(Model.ST_FHE), _kdp_ledger(Model.ORIG_TC, l_w=2048),
        ])


def test_setup_report_ratios_and_printout(capsys):
    report = reports.report_setup([
        _kdp_ledger(Model.BTF, c_to_s=100),
        _kdp_ledger(Model.ST_FHE, c_to_s=250),
        _kdp_ledger(Model.ORIG_TC, c_to_s=300),
    ])
    assert report["ratios"] == {"st-fhe": 2.5, "orig-tc": 3.0}
    assert report["l_w"] == 64 and report["reference_setting"] is False
    reports.print_setup_table(report)
    out = capsys.readouterr().out
    assert "C→S reduction vs st-fhe: 2.50x" in out
    assert "l_w=64" in out
    assert "Note: ratios depend on the parameter set and l_w" in out


def test_setup_report_at_full_size_has_no_note(capsys):
    report = reports.report_setup([
        _kdp_ledger(model, "tfhe128", l_w=2048) for model in (Model.BTF, Model.ST_FHE, Model.ORIG_TC)
    ])
    assert report["reference_setting"] is True
    reports.print_setup_table(report)
    assert "Note:" not in capsys.readouterr().out


def test_scaling_keeps_one_btf_key_set():
    one = reports.report_scaling(1, "tfhe128")
    many = reports.report_scaling(100, "tfhe128")
    assert many.server_evk["btf"] == one.server_evk["btf"]
    assert many.server_evk["st-fhe"] == 100 * one.server_evk["st-fhe"]
    assert many.setup_traffic["btf"]["TP→S"] == one.setup_traffic["btf"]["TP→S"]
    assert many.setup_traffic["btf"]["C→S"] == 100 * 403850
    assert many.client_storage["btf"] == 20
    assert many.server_storage["btf"] < many.server_storage["st-fhe"] < many.server_storage["orig-tc"]
    with pytest.raises(ValueError):
        reports.report_scaling(0, "tfhe128")


def test_timing_summary_and_ordinal_checks():
    ledger = TransmissionLedger(Model.BTF, "desk", 64)
    assert reports.ordinal_checks(ledger) == {"setup": None, "registration": None}
    ledger.timings.extend([
        TimingEntry(Phase.KDP, "TP", "Enc.KeyGen", 0.5),
        TimingEntry(Phase.INP, "S", "E^FHE.Init", 2.0),
        TimingEntry(Phase.INP, "S", "E^FHE.KeyStream", 0.2),
        TimingEntry(Phase.RS, "S", "Eval(E⁻¹)", 0.1),
        TimingEntry(Phase.RS, "client-1", "E.KeyStream", 0.001),
        TimingEntry(Phase.RS, "S", "Enc(c, pk_c)", 0.3),
        TimingEntry(Phase.RS, "S", "Eval(E⁻¹)", 0.1),
    ])
    assert reports.ordinal_checks(ledger) == {"setup": True, "registration": False}
    summary = reports.timing_summary(ledger)
    assert summary[3] == {"phase": "RS", "party": "S", "label": "Eval(E⁻¹)", "seconds": pytest.approx(0.2)}
    assert len(summary) == 6


def test_print_expansion_and_scaling(capsys):
    reports.print_expansion(reports.report_template_expansion("tfhe128"))
    reports.print_scaling_table(reports.report_scaling(3, "desk", 64))
    out = capsys.readouterr().out
    assert "9,860x" in out
    assert "Scaling to 3 clients" in out


def test_write_json_creates_parents(tmp_path):
    path = reports.write_json(tmp_path / "a" / "b.json", {"ratio": 1.5})
    assert json.loads(path.read_text(encoding="utf-8")) == {"ratio": 1.5}
