import json

import pytest

from services.btf_protocol.ledger import Phase, TransmissionLedger
from services.btf_protocol.messages import Artifact, Channel, Model
from tools.btf_harness.cli_btf_harness import main
from utils.params import DESK, default_bootstrap

DESK_ARGS = ["--params", "desk", "--lw", "64", "--seed", "5"]


@pytest.fixture(autouse=True)
def report_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("BTF_REPORT_DIR", str(tmp_path / "reports"))
    return tmp_path / "reports"


def test_keygen_writes_headed_blobs(tmp_path, capsys):
    out = tmp_path / "keys"
    assert main(["keygen", *DESK_ARGS, "--out", str(out)]) == 0
    assert (out / "sk.bin").stat().st_size == 8 + DESK.secret_key_bytes
    assert (out / "evk.bin").stat().st_size == 8 + default_bootstrap(DESK).evaluation_key_bytes
    assert (out / "pk_c.bin").stat().st_size == 8 + 64 * DESK.ciphertext_bytes
    assert (out / "evk.bin").read_bytes()[:4] == b"BTF1"
    assert "Keys written to" in capsys.readouterr().out


def test_verify_accepts_genuine_query(tmp_path, capsys):
    out = tmp_path / "verify.json"
    assert main(["verify", *DESK_ARGS, "--flips", "16", "--out", str(out)]) == 0
    assert "r = 1" in capsys.readouterr().out
    data = json.loads(out.read_text(encoding="utf-8"))
    assert data["summary"]["result"] == 1
    assert data["summary"]["totals"]["TP→C"] == 80 * DESK.ciphertext_bytes + 1
    assert "timings" not in data


def test_verify_rejection_exit_code(report_dir):
    assert main(["verify", *DESK_ARGS, "--flips", "17"]) == 3
    assert (report_dir / "verify_btf_desk_64.json").is_file()


def test_report_from_saved_ledgers(tmp_path, capsys):
    paths = []
    for model, c_to_s in ((Model.BTF, 1000), (Model.ST_FHE, 5000), (Model.ORIG_TC, 6000)):
        ledger = TransmissionLedger(model, "desk", 64)
        ledger.record(Phase.KDP, Channel.C_TO_S, Artifact.IV, c_to_s)
        paths.append(str(ledger.save_json(tmp_path / f"{model.value}.json")))
    out = tmp_path / "report.json"
    assert main(["report", "--ledger", *paths, "--out", str(out)]) == 0
    data = json.loads(out.read_text(encoding="utf-8"))
    assert data["setup"]["ratios"] == {"st-fhe": 5.0, "orig-tc": 6.0}
    assert data["template_expansion"]["l_w"] == 2048
    assert "C→S reduction vs orig-tc: 6.00x" in capsys.readouterr().out


def test_report_runs_key_distribution(tmp_path):
    out = tmp_path / "report.json"
    assert main(["report", *DESK_ARGS, "--out", str(out)]) == 0
    data = json.loads(out.read_text(encoding="utf-8"))
    ct = DESK.ciphertext_bytes
    assert data["setup"]["models"]["btf"]["c_to_s"] == 2 * 80 * ct + 10
    assert data["setup"]["models"]["st-fhe"]["c_to_s"] == default_bootstrap(DESK).evaluation_key_bytes
    assert len(data["ledgers"]) == 3


def test_report_defaults_to_full_feature_length(tmp_path, capsys):
    out = tmp_path / "report.json"
    assert main(["report", "--params", "desk", "--seed", "5", "--out", str(out)]) == 0
    data = json.loads(out.read_text(encoding="utf-8"))
    ct = DESK.ciphertext_bytes
    assert data["setup"]["l_w"] == 2048
    assert all(model["l_w"] == 2048 for model in data["setup"]["models"].values())
    evk = default_bootstrap(DESK).evaluation_key_bytes
    assert data["setup"]["models"]["orig-tc"]["c_to_s"] == 2048 * ct + evk + 80 * ct + 10
    assert "(desk, l_w=2048)" in capsys.readouterr().out


def test_report_from_ledgers_with_mixed_lengths_is_an_error(tmp_path, capsys):
    paths = []
    for model, l_w in ((Model.BTF, 64), (Model.ST_FHE, 64), (Model.ORIG_TC, 2048)):
        ledger = TransmissionLedger(model, "desk", l_w)
        ledger.record(Phase.KDP, Channel.C_TO_S, Artifact.IV, 10)
        paths.append(str(ledger.save_json(tmp_path / f"{model.value}.json")))
    assert main(["report", "--ledger", *paths]) == 1
    assert "feature lengths" in capsys.readouterr().out


def test_scaling_command(tmp_path):
    out = tmp_path / "scaling.json"
    assert main(["scaling", "--params", "tfhe128", "--full", "--clients", "10", "--out", str(out)]) == 0
    data = json.loads(out.read_text(encoding="utf-8"))
    assert data["n_c"] == 10
    assert data["setup_traffic"]["btf"]["C→S"] == 10 * 403850


def test_incomplete_report_is_an_error(tmp_path, capsys):
    ledger = TransmissionLedger(Model.BTF, "desk", 64)
    path = ledger.save_json(tmp_path / "btf.json")
    assert main(["report", "--ledger", str(path)]) == 1
    assert "Error:" in capsys.readouterr().out


def test_invalid_feature_length(capsys):
    assert main(["setup", "--params", "desk", "--lw", "60"]) == 1
    assert "multiple of 8" in capsys.readouterr().out


def test_usage_errors_exit_with_two():
    with pytest.raises(SystemExit) as exc:
        main(["enroll"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["setup", "--params", "tfhe256"])
    assert exc.value.code == 2
