import json
from pathlib import Path

import numpy as np
import pytest
import scipy.io

import matconvert
from matconvert import cli
from matconvert.convert import ArchiveMap, MapEntry, read_channel


def make_cwru_mat(path, file_id, samples, rng):
    sig = rng.normal(size=samples)
    scipy.io.savemat(path, {
        f"X{file_id:03d}_DE_time": sig.reshape(-1, 1),
        f"X{file_id:03d}_FE_time": rng.normal(size=samples).reshape(-1, 1),
        f"X{file_id:03d}RPM": np.array([[1772.0]]),
    })
    return sig


def make_pu_mat(path, stem, samples, rng):
    sig = rng.normal(size=samples)
    y = np.zeros((1, 3), dtype=[("Name", "O"), ("Data", "O")])
    y[0, 0]["Name"] = "force"
    y[0, 0]["Data"] = rng.normal(size=16)
    y[0, 1]["Name"] = "phase_current_1"
    y[0, 1]["Data"] = rng.normal(size=16)
    y[0, 2]["Name"] = "vibration_1"
    y[0, 2]["Data"] = sig.reshape(1, -1)
    scipy.io.savemat(path, {stem: {"Y": y}})
    return sig


def small_map(**overrides):
    base = dict(
        dataset="CWRU", sampling_rate_hz=12000, window_length=64,
        window_step=32, conditions=["A", "B"],
        classes={"N": "normal", "IRF7": "inner"},
        channel="DE_time", channel_style="suffix",
        entries=[
            MapEntry("97.mat", "A", "N"), MapEntry("98.mat", "B", "N"),
            MapEntry("105.mat", "A", "IRF7"), MapEntry("106.mat", "B", "IRF7"),
        ],
    )
    base.update(overrides)
    return ArchiveMap(**base)


@pytest.fixture
def cwru_archive(tmp_path):
    archive = tmp_path / "archive"
    archive.mkdir()
    rng = np.random.default_rng(0)
    signals = {}
    for fid in (97, 98, 105, 106):
        signals[f"{fid}.mat"] = make_cwru_mat(archive / f"{fid}.mat", fid,
                                              400 + fid, rng)
    return archive, signals


def test_builtin_maps_cover_full_label_grid():
    cwru = matconvert.load_builtin_map("cwru")
    cwru.validate()
    assert len(cwru.classes) == 10 and len(cwru.conditions) == 4
    covered = {(e.condition, e.class_id) for e in cwru.entries}
    assert len(covered) == 40
    assert cwru.window_length == 1024 and cwru.window_step == 475

    pu = matconvert.load_builtin_map("pu")
    pu.validate()
    assert len(pu.classes) == 9 and len(pu.conditions) == 4
    assert {(e.condition, e.class_id) for e in pu.entries} == {
        (c, k) for c in pu.conditions for k in pu.classes}
    assert pu.window_step == pu.window_length == 1024


def test_cwru_roundtrip_exact(cwru_archive, tmp_path):
    archive, signals = cwru_archive
    out = tmp_path / "out"
    manifest_path, report = matconvert.convert_archive(archive, small_map(), out)
    assert not report.errors and not report.skipped
    manifest = json.loads(manifest_path.read_text())
    assert len(manifest["recordings"]) == 4
    for rec in manifest["recordings"]:
        raw = out / rec["path"]
        assert raw.stat().st_size == 4 * rec["sample_count"]
        values = np.fromfile(raw, dtype="<f4")
        mat_name = rec["path"].split("_")[-1].replace(".f32", ".mat")
        expected = signals[mat_name].astype(np.float32)
        np.testing.assert_array_equal(values[:100], expected[:100])
        np.testing.assert_array_equal(values[-100:], expected[-100:])


def test_pu_style_channel_extraction(tmp_path):
    rng = np.random.default_rng(1)
    stem = "N09_M07_F10_K001_1"
    path = tmp_path / f"{stem}.mat"
    sig = make_pu_mat(path, stem, 333, rng)
    out = read_channel(path, "vibration_1", "named_y")
    np.testing.assert_array_equal(out, sig)


def test_pu_pattern_matching(tmp_path):
    archive = tmp_path / "archive"
    archive.mkdir()
    rng = np.random.default_rng(2)
    for rep in (1, 2):
        stem = f"N09_M07_F10_K001_{rep}"
        make_pu_mat(archive / f"{stem}.mat", stem, 200, rng)
    amap = ArchiveMap(
        dataset="PU", sampling_rate_hz=64000, window_length=64, window_step=64,
        conditions=["E"], classes={"K001": "healthy"},
        channel="vibration_1", channel_style="named_y",
        entries=[MapEntry("N09_M07_F10_K001_*.mat", "E", "K001")])
    manifest_path, report = matconvert.convert_archive(archive, amap, tmp_path / "out")
    assert len(report.converted) == 2
    manifest = json.loads(manifest_path.read_text())
    assert {r["path"] for r in manifest["recordings"]} == {
        "E_K001_N09_M07_F10_K001_1.f32", "E_K001_N09_M07_F10_K001_2.f32"}


def test_unmapped_files_skipped_with_warning(cwru_archive, tmp_path):
    archive, _ = cwru_archive
    make_cwru_mat(archive / "999.mat", 999, 100, np.random.default_rng(3))
    _, report = matconvert.convert_archive(archive, small_map(), tmp_path / "out")
    assert report.skipped == ["999.mat"]
    assert len(report.converted) == 4


def test_parse_failure_recorded_and_conversion_continues(cwru_archive, tmp_path):
    archive, _ = cwru_archive
    (archive / "105.mat").write_bytes(b"this is not a mat file")
    _, report = matconvert.convert_archive(archive, small_map(), tmp_path / "out")
    assert len(report.errors) == 1 and report.errors[0][0] == "105.mat"
    assert len(report.converted) == 3


def test_wrong_channel_is_per_file_error(cwru_archive, tmp_path):
    archive, _ = cwru_archive
    bad = small_map(channel="BA_time")
    _, report = matconvert.convert_archive(archive, bad, tmp_path / "out")
    assert len(report.errors) == 4
    assert "BA_time" in report.errors[0][1]


def test_conversion_idempotent(cwru_archive, tmp_path):
    archive, _ = cwru_archive
    out = tmp_path / "out"
    matconvert.convert_archive(archive, small_map(), out)
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    matconvert.convert_archive(archive, small_map(), out)
    second = {p.name: p.read_bytes() for p in out.iterdir()}
    assert first == second


def test_map_validation():
    with pytest.raises(matconvert.ConvertError, match="condition"):
        small_map(entries=[MapEntry("97.mat", "Z", "N")]).validate()
    with pytest.raises(matconvert.ConvertError, match="class"):
        small_map(entries=[MapEntry("97.mat", "A", "XX")]).validate()
    with pytest.raises(matconvert.ConvertError):
        matconvert.load_builtin_map("nope")


def test_cli_convert(cwru_archive, tmp_path, capsys):
    archive, _ = cwru_archive
    map_path = tmp_path / "map.json"
    amap = small_map()
    map_path.write_text(json.dumps({
        "dataset": amap.dataset, "sampling_rate_hz": amap.sampling_rate_hz,
        "window_length": amap.window_length, "window_step": amap.window_step,
        "conditions": amap.conditions, "classes": amap.classes,
        "channel": amap.channel, "channel_style": amap.channel_style,
        "files": [{"pattern": e.pattern, "condition": e.condition,
                   "class": e.class_id} for e in amap.entries],
    }))
    out = tmp_path / "out"
    code = cli.main(["convert", "--dataset", "cwru", "--in", str(archive),
                     "--out", str(out), "--map", str(map_path)])
    assert code == 0
    assert (out / "manifest.json").exists()
    assert "manifest:" in capsys.readouterr().out


def test_converted_output_feeds_the_diagnosis_pipeline(cwru_archive, tmp_path):
    # the manifest + raw format is the contract with the training package
    pytest.importorskip("dsagcn")
    from dsagcn import data as dd

    archive, _ = cwru_archive
    out = tmp_path / "out"
    manifest_path, _ = matconvert.convert_archive(archive, small_map(), out)
    manifest = dd.load_manifest(manifest_path)
    splits = dd.make_splits(manifest, dd.SplitSpec(8, 2, seed=0), out)
    assert len(splits["A"].train) == 16
    assert sorted(manifest.classes) == ["IRF7", "N"]
