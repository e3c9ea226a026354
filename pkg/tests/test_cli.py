import json

import jsonschema
import numpy as np
import pytest

from zcaria import PairSet, cli


def run(tmp_path, *argv, name="out.json"):
    out = tmp_path / name
    code = cli.main(["--out", str(out), *argv])
    return code, (json.loads(out.read_text()) if out.exists() else None)


def check(schema, payload):
    jsonschema.validate(payload, cli.load_schema(schema))


def test_verify_zc_default(tmp_path):
    code, rep = run(tmp_path, "verify-zc")
    check("verify_zc", rep)
    assert rep["hull_input_cells"] == [3, 4, 10, 13]
    assert rep["claimed"]["4"]["witness"] == [3, 4, 10]
    # cell 15 has no contradiction witness, so the claim check fails
    assert rep["claimed"]["15"]["proved"] is False and rep["verified"] is False
    assert code == 1


def test_verify_zc_bad_profile(tmp_path):
    bad = tmp_path / "bad.profile"
    bad.write_text("width = 4\nsbox1 = 00\n")
    assert cli.main(["--profile", str(bad), "verify-zc"]) == 2


def test_plan_json_and_table(tmp_path, capsys):
    code, rep = run(tmp_path, "plan", "--all")
    assert code == 0
    check("plan", rep)
    assert [p["variant"] for p in rep["plans"]] == ["6r-ps", "6r-fft", "7r-ps", "7r-fft"]
    assert cli.main(["plan", "--variant", "7r-fft", "--format", "table"]) == 0
    assert "ZC.FFT" in capsys.readouterr().out
    code, rep = run(tmp_path, "plan", "--variant", "6r-ps", "--beta1", "-60", name="b.json")
    assert rep["plans"][0]["log2_beta1"] == -60


def test_plan_usage_errors(capsys):
    with pytest.raises(SystemExit) as err:
        cli.main(["plan", "--variant", "9r-ps"])
    assert err.value.code == 2
    assert cli.main(["plan"]) == 2


def test_gen_is_reproducible(tmp_path):
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    code, rep = run(tmp_path, "--seed", "1", "gen", "--count", "2^10", "--pairs", str(a), "--keys-out",
                    str(tmp_path / "k.json"))
    assert code == 0
    check("gen", rep)
    run(tmp_path, "--seed", "1", "gen", "--count", "1024", "--pairs", str(b), name="g2.json")
    assert a.read_bytes() == b.read_bytes()
    assert len(PairSet.read(a)) == 1024


@pytest.fixture
def dataset(tmp_path):
    pairs, keys = tmp_path / "p.bin", tmp_path / "k.json"
    assert cli.main(["--profile", "toy2", "--seed", "4", "gen", "--count", "4096", "--pairs", str(pairs),
                     "--keys-out", str(keys), "--rounds", "7"]) == 0
    return pairs, keys


def test_attack_techniques_agree(tmp_path, dataset):
    pairs, keys = dataset
    common = ["--profile", "toy2", "attack", "--pairs", str(pairs), "--keys", str(keys), "--free", "k1[0],k8[12],k7,5"]
    code_ps, ps = run(tmp_path, *common, "--technique", "ps", name="ps.json")
    code_ff, ff = run(tmp_path, *common, "--technique", "fft", name="ff.json")
    assert code_ps == code_ff == 0
    check("attack", ps)
    check("attack", ff)
    assert ps["keys"] == ["k1[0]", "k8[12]", "k7,5"]
    assert ps["survivors"] == ff["survivors"]
    assert ps["right_key_rank"] == ff["right_key_rank"]


def test_attack_report_dir(tmp_path, dataset):
    pairs, keys = dataset
    code, _ = run(tmp_path, "--profile", "toy2", "attack", "--pairs", str(pairs), "--keys", str(keys),
                  "--free", "k1[15]", "--report-dir", str(tmp_path / "rep"), "--count", "2^11")
    assert code == 0
    assert (tmp_path / "rep" / "attack.csv").read_text().count("\n") == 5
    assert (tmp_path / "rep" / "attack.png").read_bytes()[:4] == b"\x89PNG"


def test_attack_errors(tmp_path, dataset):
    pairs, keys = dataset
    empty = tmp_path / "empty.bin"
    PairSet(2, 7, np.zeros((0, 16)), np.zeros((0, 16))).write(empty)
    assert cli.main(["--profile", "toy2", "attack", "--pairs", str(empty)]) == 2
    assert cli.main(["--profile", "toy2", "attack", "--pairs", str(tmp_path / "missing.bin")]) == 2
    assert cli.main(["--profile", "toy4", "attack", "--pairs", str(pairs), "--keys", str(keys),
                     "--free", "k1[0]"]) == 2
    assert cli.main(["--profile", "toy2", "attack", "--pairs", str(pairs), "--free", "k1[0]"]) == 2
    assert cli.main(["--profile", "toy2", "attack", "--pairs", str(pairs), "--pin", "k1[0]"]) == 2
    assert cli.main(["--profile", "toy2", "attack", "--pairs", str(pairs), "--keys", str(keys),
                     "--free", "k9[0]"]) == 2


def test_calibrate(tmp_path):
    code, rep = run(tmp_path, "--seed", "3", "calibrate", "--n", "16", "--l", "16", "--N", "2^12", "--trials", "100",
                    "--report-dir", str(tmp_path / "cal"))
    assert code == 0
    check("calibrate", rep)
    assert rep["trials"] == 100
    assert (tmp_path / "cal" / "calibration.png").exists()
    _, again = run(tmp_path, "--seed", "3", "calibrate", "--n", "16", "--l", "16", "--N", "2^12", "--trials", "100",
                   name="again.json")
    assert {k: v for k, v in rep.items() if k != "invocation"} == {k: v for k, v in again.items() if k != "invocation"}
    assert cli.main(["calibrate", "--n", "8", "--N", "2^9"]) == 2


def test_fwht_selftest(tmp_path):
    code, rep = run(tmp_path, "fwht-selftest", "--instances", "25", "--max-m", "8")
    assert code == 0
    check("fwht_selftest", rep)
    assert rep["failures"] == 0 and rep["max_addition_ratio"] <= 1


def test_report_writes_tables_and_figures(tmp_path):
    code, rep = run(tmp_path, "report", "--outdir", str(tmp_path / "r"), "--trials", "100", "--n", "16",
                    "--N", "2^12")
    assert code == 0
    check("report", rep)
    files = set(rep["files"])
    assert {"plans.csv", "plan_steps.csv", "plan_steps.png", "calibration.csv", "calibration.png"} <= files
    check("plan", json.loads((tmp_path / "r" / "plans.json").read_text()))
    header = (tmp_path / "r" / "plans.csv").read_text().splitlines()[0]
    assert header.startswith("variant,rounds,log2_data")


def test_default_profile_env(monkeypatch, tmp_path):
    monkeypatch.setenv(cli.DEFAULT_PROFILE_ENV, "toy2")
    assert cli.build_parser().parse_args(["plan"]).profile == "toy2"
