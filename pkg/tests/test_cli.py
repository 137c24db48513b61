import csv
import io
import math
import shutil

import numpy as np
import pytest

from isnrestore.cli import (REPORT_HEADER, RunConfig, case_seed, cmd_degrade, cmd_eval, cmd_restore, cmd_verify,
                            main, worker_count)
from isnrestore.degrade import synthetic_scene
from isnrestore.imaging import Image, load_ppm, save_ppm
from isnrestore.metrics import psnr
from isnrestore.network import seed_model, zero_residual
from isnrestore.verify import GOLDEN_DIR
from isnrestore.weights import save_weights

GOLDEN_HEADER = "clean_path,restored_path,status,psnr_rgb,psnr_y,ssim_y,loss_spatial,loss_freq,loss_total"


@pytest.fixture
def clean_dir(tmp_path):
    d = tmp_path / "clean"
    d.mkdir()
    for k in range(3):
        save_ppm(synthetic_scene(16, 20, seed=k), d / f"im{k}.ppm")
    (d / "notes.txt").write_text("ignored")
    return d


def snapshot(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_empty_dir(tmp_path):
    (tmp_path / "in").mkdir()
    assert cmd_degrade(tmp_path / "in", tmp_path / "out") == 0
    assert (tmp_path / "out" / "manifest.tsv").read_text() == ""


def test_zero_spec_is_byte_identical(clean_dir, tmp_path):
    assert cmd_degrade(clean_dir, tmp_path / "out") == 0
    for src in clean_dir.glob("*.ppm"):
        assert (tmp_path / "out" / src.name).read_bytes() == src.read_bytes()
    rows = (tmp_path / "out" / "manifest.tsv").read_text().splitlines()
    assert [r.split("\t")[0] for r in rows] == [str(p) for p in sorted(clean_dir.glob("*.ppm"))]
    assert all(len(r.split("\t")) == 6 for r in rows)


def test_degrade_deterministic_and_thread_independent(clean_dir, tmp_path, monkeypatch):
    cmd_degrade(clean_dir, tmp_path / "a", 40, 20, 10, seed=5)
    monkeypatch.setenv("INTERIR_THREADS", "3")
    assert worker_count() == 3
    cmd_degrade(clean_dir, tmp_path / "b", 40, 20, 10, seed=5)
    a, b = snapshot(tmp_path / "a"), snapshot(tmp_path / "b")
    assert a.keys() == b.keys()
    for k in a:
        if k.name == "manifest.tsv":
            assert a[k].replace(b"/a/", b"/b/") == b[k]
        else:
            assert a[k] == b[k]
    assert case_seed(5, 0) != case_seed(5, 1)


def test_degrade_unreadable_file_continues(clean_dir, tmp_path):
    (clean_dir / "bad.ppm").write_bytes(b"P6\n2 2\n255\n\x00")
    assert cmd_degrade(clean_dir, tmp_path / "out", noise=5) == 1
    assert len((tmp_path / "out" / "manifest.tsv").read_text().splitlines()) == 3


def test_restore_clean_image_is_nearly_untouched(tmp_path):
    d = tmp_path / "clean"
    d.mkdir()
    save_ppm(synthetic_scene(32, 32, seed=0), d / "a.ppm")
    cmd_degrade(d, tmp_path / "deg")
    cfg = RunConfig(freeze_ab=True, out=str(tmp_path / "res"))
    assert cmd_restore(tmp_path / "deg" / "manifest.tsv", cfg) == 0
    assert psnr(load_ppm(tmp_path / "res" / "a.ppm"), load_ppm(d / "a.ppm")) >= 30.0
    trace = (tmp_path / "res" / "a.trace.csv").read_text().splitlines()
    assert trace[0] == "iter,lagrangian,f_norm,primal_residual,eta" and len(trace) == 17
    assert (tmp_path / "res" / "summary.tsv").read_text().splitlines()[1] == "a\tok\t0"


def test_restore_zero_residual_model_is_identity(clean_dir, tmp_path):
    cmd_degrade(clean_dir, tmp_path / "deg", noise=20, seed=1)
    weights = tmp_path / "zero.iirw"
    save_weights(zero_residual(seed_model(n=1, seed=0)), weights)
    cfg = RunConfig(mode="unfolded", weights_path=str(weights), out=str(tmp_path / "res"))
    assert cmd_restore(tmp_path / "deg" / "manifest.tsv", cfg) == 0
    for name in ("im0.ppm", "im1.ppm", "im2.ppm"):
        assert (tmp_path / "res" / name).read_bytes() == (tmp_path / "deg" / name).read_bytes()


def test_restore_stall_emits_degraded_copy(clean_dir, tmp_path):
    cmd_degrade(clean_dir, tmp_path / "deg", noise=20, seed=1)
    cfg = RunConfig(eta=1e-9, outer_iters=2, inner_iters=2, out=str(tmp_path / "res"))
    assert cmd_restore(tmp_path / "deg" / "manifest.tsv", cfg) == 0
    assert (tmp_path / "res" / "im0.ppm").read_bytes() == (tmp_path / "deg" / "im0.ppm").read_bytes()
    assert "im0\tstalled\t4" in (tmp_path / "res" / "summary.tsv").read_text()


def test_restore_missing_input_fails(tmp_path):
    (tmp_path / "m.tsv").write_text("c.ppm\tmissing.ppm\t0\t0\t0\t0\n")
    assert cmd_restore(tmp_path / "m.tsv", RunConfig(out=str(tmp_path / "res"))) == 1
    assert "unreadable" in (tmp_path / "res" / "summary.tsv").read_text()


def test_eval_identical_pairs(clean_dir, tmp_path):
    pairs = tmp_path / "pairs.tsv"
    files = sorted(clean_dir.glob("*.ppm"))
    pairs.write_text("".join(f"{p}\t{p}\n" for p in files))
    assert cmd_eval(pairs, tmp_path / "r.csv", stream=io.StringIO()) == 0
    rows = list(csv.DictReader((tmp_path / "r.csv").open()))
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == REPORT_HEADER == GOLDEN_HEADER
    assert all(r["psnr_rgb"] == "inf" and float(r["ssim_y"]) == 1.0 for r in rows[:-1])
    assert rows[-1]["clean_path"] == "mean" and rows[-1]["psnr_rgb"] == "inf"


def test_eval_mean_row_and_mismatch(clean_dir, tmp_path):
    files = sorted(clean_dir.glob("*.ppm"))
    noisy = tmp_path / "noisy.ppm"
    save_ppm(Image(np.clip(load_ppm(files[0]).pixels + 0.05, 0, 1)), noisy)
    small = tmp_path / "small.ppm"
    save_ppm(synthetic_scene(12, 12), small)
    pairs = tmp_path / "pairs.tsv"
    pairs.write_text(f"{files[0]}\t{noisy}\n{files[1]}\t{files[1]}\n{files[2]}\t{small}\n")
    out = io.StringIO()
    assert cmd_eval(pairs, stream=out) == 1
    text = out.getvalue()
    table = list(csv.DictReader(io.StringIO(text[text.index(GOLDEN_HEADER):])))
    assert table[2]["status"] == "error:size-mismatch"
    finite = [float(table[k]["loss_total"]) for k in (0, 1)]
    assert float(table[-1]["loss_total"]) == pytest.approx(np.mean(finite), abs=1e-6)
    assert float(table[-1]["psnr_rgb"]) == pytest.approx(float(table[0]["psnr_rgb"]), abs=1e-6)
    assert math.isinf(float(table[1]["psnr_rgb"]))


def test_verify_selected_suites_pass():
    out = io.StringIO()
    assert cmd_verify(["kronecker", "adjoint"], stream=out) == 0
    assert "PASS kronecker" in out.getvalue() and "2/2 suites passed" in out.getvalue()


def test_verify_corrupted_golden_names_suite(tmp_path, capsys):
    bad = tmp_path / "golden"
    shutil.copytree(GOLDEN_DIR, bad)
    data = bytearray((bad / "forward_output.npy").read_bytes())
    data[-1] ^= 0xFF
    (bad / "forward_output.npy").write_bytes(bytes(data))
    assert main(["verify", "--suite", "unfolded_forward", "--golden-dir", str(bad)]) != 0
    out = capsys.readouterr().out
    assert "FAIL unfolded_forward" in out and "first failure: unfolded_forward" in out


def test_main_degrade_and_usage_errors(clean_dir, tmp_path):
    assert main(["degrade", str(clean_dir), "--out", str(tmp_path / "o"), "--noise", "5"]) == 0
    assert main(["degrade", str(clean_dir), "--out", str(tmp_path / "o"), "--noise", "99"]) == 2
    with pytest.raises(SystemExit):
        main(["restore"])
