import json

import pytest

from rts_lab.cli import main
from rts_lab.core import system_to_document
from rts_lab.gallery import (
    binary_ternary_family,
    first_order_family,
    mixed_tier_system,
    tier_merge_system,
)

DELTA1_DOC = json.dumps({"chi": [{"value": 1, "weight": "1"}],
                         "h": [{"value": 0, "threshold": 1},
                               {"value": 1, "threshold": 1}]})

BINARY_TERNARY_FAMILY_DOC = json.dumps({
    "chi": [{"value": 2, "weight_poly": ["1/2", "1"]},
            {"value": 3, "weight_poly": ["1/2", "-1"]}],
    "h": [{"value": 0, "threshold": 1}, {"value": 2, "threshold": 1},
          {"value": 3, "threshold": 3}],
    "t_min": 0.0, "t_max": 0.5,
})


@pytest.fixture
def quartic_path(tmp_path):
    p = tmp_path / "quartic.json"
    p.write_text(system_to_document(tier_merge_system()), encoding="utf-8")
    return str(p)


@pytest.fixture
def critical_path(tmp_path):
    p = tmp_path / "critical.json"
    p.write_text(system_to_document(first_order_family().system_at(0)), encoding="utf-8")
    return str(p)


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestAnalyze:
    def test_quartic_report(self, capsys, quartic_path):
        code, out, err = run(capsys, "analyze", quartic_path)
        assert code == 0
        report = json.loads(out)
        nz = [p for p in report["fixed_points"] if p["x"] > 0]
        assert len(nz) == 1
        assert abs(nz[0]["x"] - 0.8850) < 1e-3
        assert nz[0]["interpretable"] is True

    def test_identity_continuum(self, capsys, tmp_path):
        p = tmp_path / "delta1.json"
        p.write_text(DELTA1_DOC, encoding="utf-8")
        code, out, _ = run(capsys, "analyze", str(p))
        assert code == 0
        assert json.loads(out)["continuum"] is True

    def test_critical_member(self, capsys, critical_path):
        code, out, _ = run(capsys, "analyze", critical_path)
        report = json.loads(out)
        assert report["critical"] is True
        xs = sorted(p["x"] for p in report["fixed_points"])
        assert abs(xs[1] - 0.73) < 0.01 and abs(xs[2] - 0.93) < 0.01

    def test_round_trip_serialization(self, capsys, quartic_path):
        _, out, _ = run(capsys, "analyze", quartic_path)
        again = json.dumps(json.loads(out), sort_keys=True) + "\n"
        assert again == out

    def test_deterministic(self, capsys, quartic_path):
        _, first, _ = run(capsys, "analyze", quartic_path)
        _, second, _ = run(capsys, "analyze", quartic_path)
        assert first == second


class TestCurve:
    def test_header_and_zero_row(self, capsys, quartic_path):
        code, out, _ = run(capsys, "curve", quartic_path, "--samples", "101")
        assert code == 0
        lines = out.strip().split("\n")
        assert lines[0] == "x,psi_minus_x"
        assert len(lines) == 102
        assert lines[1] == "0,0"

    def test_midpoint_value(self, capsys, quartic_path):
        _, out, _ = run(capsys, "curve", quartic_path, "--samples", "5")
        middle = out.strip().split("\n")[3].split(",")
        assert float(middle[0]) == 0.5
        assert abs(float(middle[1]) - 0.1125) < 1e-12

    def test_family_at_t(self, capsys, tmp_path):
        p = tmp_path / "family.json"
        p.write_text(BINARY_TERNARY_FAMILY_DOC, encoding="utf-8")
        code, out, _ = run(capsys, "curve", str(p), "--t", "0.1", "--samples", "11")
        assert code == 0
        assert len(out.strip().split("\n")) == 12

    def test_near_tangency_curve_is_flat_at_one(self, capsys, tmp_path):
        p = tmp_path / "family.json"
        p.write_text(BINARY_TERNARY_FAMILY_DOC, encoding="utf-8")
        _, out, _ = run(capsys, "curve", str(p), "--t", "0.16666666666666666",
                        "--samples", "1001")
        rows = [tuple(map(float, line.split(","))) for line in out.strip().split("\n")[1:]]
        assert max(abs(v) for x, v in rows if x >= 0.95) <= 1e-3

    def test_bad_samples(self, capsys, quartic_path):
        code, _, err = run(capsys, "curve", quartic_path, "--samples", "1")
        assert code == 1 and err


class TestSweep:
    def test_writes_curves_and_index(self, capsys, tmp_path):
        fam = tmp_path / "family.json"
        fam.write_text(BINARY_TERNARY_FAMILY_DOC, encoding="utf-8")
        out_dir = tmp_path / "sweep"
        code, out, _ = run(capsys, "sweep", str(fam), "--t-list", "0,0.1,0.2",
                           "--samples", "11", "--out", str(out_dir))
        assert code == 0
        names = sorted(f.name for f in out_dir.iterdir())
        assert names == ["curve_000.csv", "curve_001.csv", "curve_002.csv", "index.csv"]
        index = (out_dir / "index.csv").read_text(encoding="utf-8")
        assert index.startswith("t,file\n")
        assert index == out

    def test_bad_t_list(self, capsys, tmp_path):
        fam = tmp_path / "family.json"
        fam.write_text(BINARY_TERNARY_FAMILY_DOC, encoding="utf-8")
        code, _, err = run(capsys, "sweep", str(fam), "--t-list", "0,zap",
                           "--out", str(tmp_path / "x"))
        assert code == 1 and "t-list" in err


class TestCritAndDecompose:
    def test_crit_table(self, capsys):
        code, out, _ = run(capsys, "crit", "2", "4")
        assert code == 0
        assert out == "0: 5/12\n2: 1/2\n4: 1/12\n"

    def test_crit_json(self, capsys):
        _, out, _ = run(capsys, "crit", "2", "4", "--json")
        doc = json.loads(out)
        assert doc["weights"]["2"] == "1/2"

    def test_crit_bad_sequence(self, capsys):
        code, _, err = run(capsys, "crit", "4", "2")
        assert code == 1 and err

    def test_decompose_table(self, capsys, tmp_path):
        p = tmp_path / "mixed.json"
        p.write_text(system_to_document(mixed_tier_system()), encoding="utf-8")
        code, out, _ = run(capsys, "decompose", str(p))
        assert code == 0
        assert out.splitlines() == ["2/9 * crit(2,4)", "4/9 * crit(2,5)",
                                    "1/9 * crit(3,4)", "2/9 * crit(3,5)"]

    def test_decompose_json(self, capsys, tmp_path):
        p = tmp_path / "mixed.json"
        p.write_text(system_to_document(mixed_tier_system()), encoding="utf-8")
        _, out, _ = run(capsys, "decompose", str(p), "--json")
        doc = json.loads(out)
        assert [t["coefficient"] for t in doc["terms"]] == ["2/9", "4/9", "1/9", "2/9"]

    def test_decompose_rejects_noncritical(self, capsys, quartic_path):
        code, _, err = run(capsys, "decompose", quartic_path)
        assert code == 1 and "critical" in err


class TestSimulateAndGrowth:
    def test_simulate_admissible(self, capsys, quartic_path):
        code, out, _ = run(capsys, "simulate", quartic_path, "--depth", "6",
                           "--trials", "400", "--seed", "3")
        assert code == 0
        doc = json.loads(out)
        assert doc["trials"] == 400
        assert abs(doc["z"]) <= 4

    def test_simulate_deterministic(self, capsys, quartic_path):
        args = ("simulate", quartic_path, "--depth", "6", "--trials", "400", "--seed", "3")
        _, a, _ = run(capsys, *args)
        _, b, _ = run(capsys, *args)
        assert a == b

    def test_bounded_tier_needs_m_and_level(self, capsys, critical_path):
        code, _, err = run(capsys, "simulate", critical_path, "--event", "bounded_tier",
                           "--depth", "6", "--trials", "100")
        assert code == 1 and "--m" in err

    def test_growth_csv(self, capsys):
        code, out, _ = run(capsys, "growth", "minplus", "--depth", "4",
                           "--trials", "200", "--seed", "1")
        assert code == 0
        lines = out.strip().split("\n")
        assert lines[0] == "level,mean,stderr,p50,p90,n"
        assert len(lines) == 6

    def test_growth_missing_t(self, capsys):
        code, _, err = run(capsys, "growth", "binary_ternary", "--depth", "3",
                           "--trials", "100")
        assert code == 1 and err


class TestFindCritical:
    def test_first_order_merge(self, capsys, tmp_path):
        p = tmp_path / "family.json"
        p.write_text(BINARY_TERNARY_FAMILY_DOC, encoding="utf-8")
        code, out, _ = run(capsys, "find-critical", str(p), "--t-range", "0.01", "0.3")
        assert code == 0
        doc = json.loads(out)
        assert doc["kind"] == "first_order"
        assert abs(doc["t_star"] - 1 / 6) < 1e-4
        assert abs(doc["x_star"] - 1.0) < 1e-3


class TestExitCodes:
    def test_missing_file(self, capsys):
        code, _, err = run(capsys, "analyze", "/nonexistent/system.json")
        assert code == 3 and err

    def test_bad_json(self, capsys, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json", encoding="utf-8")
        assert run(capsys, "analyze", str(p))[0] == 1

    def test_missing_h(self, capsys, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"chi": [{"value": 0, "weight": "1"}]}), encoding="utf-8")
        assert run(capsys, "analyze", str(p))[0] == 1

    def test_bad_sum(self, capsys, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"chi": [{"value": 0, "weight": "2"}],
                                 "h": [{"value": 0, "threshold": 1}]}), encoding="utf-8")
        assert run(capsys, "analyze", str(p))[0] == 1

    def test_bad_rational(self, capsys, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"chi": [{"value": 0, "weight": "1/0"}],
                                 "h": [{"value": 0, "threshold": 1}]}), encoding="utf-8")
        assert run(capsys, "analyze", str(p))[0] == 1

    def test_machine_output_kept_off_stderr(self, capsys, quartic_path):
        _, out, err = run(capsys, "analyze", quartic_path)
        assert err == ""
        json.loads(out)  # stdout is pure JSON
