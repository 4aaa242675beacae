import json

import numpy as np
import pytest

from tvnash.cli import main
from tvnash.errors import CertificateError
from tvnash.experiments import ExperimentSpec, build_cells, preset, run_experiment


def test_generate_writes_game_and_summary(tmp_path, capsys):
    out = tmp_path / "g.json"
    assert main(["generate", "--N", "6", "--m", "3", "--seed", "2", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["summary"]["N"] == 6 and len(doc["game"]["dims"]) == 6
    assert "mu=" in capsys.readouterr().out


def test_generate_to_stdout(capsys):
    assert main(["generate", "--N", "3", "--m", "2"]) == 0
    captured = capsys.readouterr()
    assert json.loads(captured.out)["summary"]["N"] == 3
    assert "ell0/mu" in captured.err


def test_bounds_report_keys(tmp_path, capsys):
    g = tmp_path / "g.json"
    main(["generate", "--N", "5", "--m", "3", "--out", str(g)])
    capsys.readouterr()
    assert main(["bounds", "--game", str(g), "--graph", "er:0.5", "--family-size", "3"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert {"alpha_star", "lemma2", "rho_at_alpha_star", "alg2"} <= set(doc)
    assert set(doc["lemma2"]) == {"a", "b", "c", "min"}
    assert {"gamma_max", "mu_bar", "tau_max", "rho"} <= set(doc["alg2"])
    assert doc["rho_at_alpha_star"] == pytest.approx(1.0, abs=1e-8)


def test_bounds_on_ring_has_no_alg1_section(capsys):
    assert main(["bounds", "--N", "4", "--m", "2", "--graph", "ring-skip"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["alpha_star"] is None and doc["alg2"]["rho"] < 1


def test_run_and_manifest(tmp_path, capsys):
    out = tmp_path / "r"
    assert main(["run", "--N", "5", "--m", "3", "--graph", "er:0.6", "--out", str(out),
                 "--max-iters", "20000"]) == 0
    s = json.loads(capsys.readouterr().out)
    assert s["status"] == "Converged" and s["audit_violations"] == 0
    assert (out / "alg1.csv").exists() and (out / "manifest.json").exists()


def test_run_rejects_uncertified_step(capsys):
    rc = main(["run", "--N", "4", "--m", "2", "--alpha", "1.0", "--max-iters", "5"])
    assert rc == 2
    assert "rho_alpha" in capsys.readouterr().err


def test_run_uncertified_override(tmp_path, capsys):
    rc = main(["run", "--N", "4", "--m", "2", "--alpha", "1.0", "--max-iters", "5",
               "--uncertified", "--out", str(tmp_path)])
    assert rc == 0


def test_config_file_sets_defaults(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"N": 4, "m": 2, "graph": "complete", "max_iters": 7}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert json.loads(capsys.readouterr().out)["iters"] <= 7


def test_verify_subcommand(capsys):
    assert main(["verify", "--only", "pythagoras", "metropolis"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 2


def test_compare_fig1(tmp_path, capsys):
    out = tmp_path / "f1"
    assert main(["compare", "--preset", "fig1_compare", "--max-iters", "3000",
                 "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    labels = {c["label"] for c in summary["cells"]}
    assert labels == {"alg1_N20_s0", "alg2_N20_s0"}
    man = json.loads((out / "manifest.json").read_text())
    assert man["seeds"] == [0] and "version" in man and man["spec"]["preset"] == "fig1_compare"


def test_empty_algorithm_list_is_rejected():
    with pytest.raises(ValueError):
        ExperimentSpec(algorithms=[]).validate()


def test_fig4_preset_graphs():
    spec = preset("fig4_balanced_ring", N=7, max_iters=10, audit_samples=10)
    cells = build_cells(spec)
    assert [c.cfg.algorithm for c in cells] == ["alg2"]
    fam = cells[0].seq.family
    assert len(fam) == 2
    i = np.arange(7)
    ring = np.zeros((7, 7))
    ring[(i + 1) % 7, i] = 1
    skip = ring.copy()
    skip[(i + 2) % 7, i] = 1
    np.testing.assert_array_equal(fam[0].weights, ring)
    np.testing.assert_array_equal(fam[1].weights, skip)
    assert cells[0].audit["passed"]


def test_fig4_dashed_cell_needs_override():
    spec = preset("fig4_balanced_ring", N=6, max_iters=10, audit_samples=10, uncertified=True)
    cells = build_cells(spec)
    assert len(cells) == 2
    assert cells[1].cfg.tau == pytest.approx(1000 * cells[0].cfg.tau)


def test_certified_failure_names_bound():
    spec = ExperimentSpec(N=4, m=2, algorithms=["alg1"], graph="complete",
                          steps={"alg1": {"alpha": 10.0}}, max_iters=5)
    with pytest.raises(CertificateError) as err:
        build_cells(spec)
    assert err.value.bound == "rho_alpha"
    spec = ExperimentSpec(N=4, m=2, algorithms=["alg1"], graph="ring-skip", max_iters=5)
    with pytest.raises(CertificateError) as err:
        build_cells(spec)
    assert err.value.bound == "sigma_bar"


def test_fig3_sizes_and_workers(tmp_path):
    spec = preset("fig3_scaling", sizes=[4, 6], m=3, max_iters=200, workers=2,
                  audit_samples=10, out=str(tmp_path))
    report = run_experiment(spec)
    ns = sorted({c["label"].split("_")[1] for c in report["cells"]})
    assert ns == ["N4", "N6"]
    assert all(c["contraction_audit_passed"] for c in report["cells"])
    assert len(list(tmp_path.glob("*.csv"))) == 4


def test_experiment_is_reproducible(tmp_path):
    a = run_experiment(preset("fig1_compare", N=5, m=3, max_iters=500, out=str(tmp_path / "a")))
    b = run_experiment(preset("fig1_compare", N=5, m=3, max_iters=500, out=str(tmp_path / "b")))
    assert a["cells"] == b["cells"]
    assert (tmp_path / "a" / "alg1_N5_s0.csv").read_bytes() == \
        (tmp_path / "b" / "alg1_N5_s0.csv").read_bytes()


def test_fig2_unconstrained_cell(tmp_path):
    spec = preset("fig2_unconstrained", N=5, m=3, max_iters=2000, uncertified=True,
                  out=str(tmp_path))
    labels = [c.label for c in build_cells(spec)]
    assert labels == ["alg1_N5_s0", "unconstrained_a2e-3_N5_s0"]
    assert all(c.game.is_unbounded for c in build_cells(spec))
