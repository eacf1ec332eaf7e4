"""Command-line interface: subcommands, determinism, exit codes."""

import json

import numpy as np
import pytest

import markersim as ms
from markersim import bench, imgio
from markersim.cli import main


@pytest.fixture
def camera_file(tmp_path):
    path = tmp_path / "logitech.json"
    ms.save_camera(ms.logitech_c270(), path)
    return path


def run(*argv):
    return main([str(a) for a in argv])


class TestRenderCommand:
    def test_render_writes_image_and_sidecar(self, tmp_path, camera_file, capsys):
        out = tmp_path / "frame.png"
        code = run(
            "render", "--camera", camera_file, "--marker", "square:50",
            "--pose", "0,0,700,0,0,0", "--out", out,
        )
        assert code == 0
        img = imgio.read_image(out)
        assert img.shape == (480, 640) and img.dtype == np.uint8
        sidecar = imgio.read_sidecar(out)
        assert sidecar["pose"]["z"] == 700.0
        assert "camera" in sidecar and "samples_per_refined_pixel" in sidecar

    def test_byte_identical_rerun(self, tmp_path, camera_file):
        a = tmp_path / "a.png"
        b = tmp_path / "b.png"
        for out in (a, b):
            assert run(
                "render", "--camera", camera_file, "--marker", "square:50",
                "--pose", "0,0,700,0,0,0", "--out", out,
            ) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_missing_camera_file_names_path(self, tmp_path, capsys):
        code = run(
            "render", "--camera", tmp_path / "absent.json", "--marker", "square:50",
            "--pose", "0,0,700,0,0,0", "--out", tmp_path / "x.png",
        )
        assert code == 2
        assert "absent.json" in capsys.readouterr().err

    def test_bad_pose_is_validation_error(self, tmp_path, camera_file, capsys):
        code = run(
            "render", "--camera", camera_file, "--marker", "square:50",
            "--pose", "0,0,700", "--out", tmp_path / "x.png",
        )
        assert code == 1

    def test_config_file_fills_missing_flags(self, tmp_path, camera_file):
        config = tmp_path / "job.json"
        config.write_text(json.dumps({"spp_max": 16, "workers": 2}))
        out = tmp_path / "frame.png"
        code = run(
            "render", "--camera", camera_file, "--marker", "square:50",
            "--pose", "0,0,700,0,0,0", "--out", out, "--config", config,
        )
        assert code == 0
        assert imgio.read_sidecar(out)["samples_per_refined_pixel"] == 16

    def test_scene_file_alone_drives_render(self, tmp_path, camera_file):
        # full scene description from the config document, no scene flags
        scene = tmp_path / "scene.json"
        scene.write_text(json.dumps({
            "camera": str(camera_file),
            "marker": "square:50",
            "pose": "0,0,700,0,0,0",
        }))
        out = tmp_path / "frame.png"
        assert run("render", "--config", scene, "--out", out) == 0
        assert imgio.read_sidecar(out)["pose"]["z"] == 700.0

    def test_missing_scene_params_reported(self, tmp_path, capsys):
        code = run("render", "--out", tmp_path / "x.png")
        assert code == 1
        assert "--camera" in capsys.readouterr().err

    def test_explicit_flag_beats_config(self, tmp_path, camera_file):
        config = tmp_path / "job.json"
        config.write_text(json.dumps({"spp_max": 16}))
        out = tmp_path / "frame.png"
        run(
            "render", "--camera", camera_file, "--marker", "square:50",
            "--pose", "0,0,700,0,0,0", "--out", out, "--config", config,
            "--spp-max", "32",
        )
        assert imgio.read_sidecar(out)["samples_per_refined_pixel"] == 32


class TestCloudCommand:
    def test_cloud_writes_images_and_csv(self, tmp_path, camera_file):
        out = tmp_path / "cloud"
        code = run(
            "cloud", "--camera", camera_file, "--marker", "square:50",
            "--cloud-size", "3", "--out", out,
        )
        assert code == 0
        assert sorted(p.name for p in out.glob("*.png")) == [
            "pose_0000.png", "pose_0001.png", "pose_0002.png",
        ]
        poses = bench.read_poses_csv(out / "poses.csv")
        assert len(poses) == 3

    def test_rerun_identical_csv(self, tmp_path, camera_file):
        out1 = tmp_path / "c1"
        out2 = tmp_path / "c2"
        for out in (out1, out2):
            run(
                "cloud", "--camera", camera_file, "--marker", "square:50",
                "--cloud-size", "2", "--out", out,
            )
        assert (out1 / "poses.csv").read_bytes() == (out2 / "poses.csv").read_bytes()


class TestBenchCommand:
    def test_closed_loop_smoke(self, tmp_path, camera_file, capsys):
        out = tmp_path / "bench"
        code = run(
            "bench", "--camera", camera_file, "--marker", "square:50",
            "--cloud-size", "6", "--out", out, "--workers", "2",
        )
        assert code == 0
        assert (out / "report.txt").exists()
        assert (out / "correlation.csv").exists()
        assert (out / "scatter.svg").exists()
        assert (out / "detections.csv").exists()
        assert "detected" in capsys.readouterr().out.lower()

    def test_external_detections_all_undetected(self, tmp_path, camera_file, capsys):
        out = tmp_path / "bench"
        out.mkdir()
        poses = bench.sample_pose_cloud(
            3, bench.PoseRanges(), ms.logitech_c270(), ms.generate_square_marker(50.0)
        )
        bench.write_poses_csv(poses, tmp_path / "poses.csv")
        det = tmp_path / "det.csv"
        det.write_text(
            ",".join(bench.DETECTIONS_HEADER) + "\n0,0,,,,,,\n1,0,,,,,,\n2,0,,,,,,\n"
        )
        code = run(
            "bench", "--camera", camera_file, "--marker", "square:50",
            "--poses", tmp_path / "poses.csv", "--detections", det, "--out", out,
        )
        assert code == 1
        assert "no detected records" in capsys.readouterr().err

    def test_two_detection_files_common_subset(self, tmp_path, camera_file, capsys):
        out = tmp_path / "bench"
        rig = ms.logitech_c270()
        marker = ms.generate_square_marker(50.0)
        poses = bench.sample_pose_cloud(4, bench.PoseRanges(), rig, marker)
        bench.write_poses_csv(poses, tmp_path / "poses.csv")

        def det_file(name, detected_ids):
            rows = [",".join(bench.DETECTIONS_HEADER)]
            for i, p in enumerate(poses):
                if i in detected_ids:
                    rows.append(f"{i},1,{p.x},{p.y},{p.z},{p.roll},{p.pitch},{p.yaw}")
                else:
                    rows.append(f"{i},0,,,,,,")
            path = tmp_path / name
            path.write_text("\n".join(rows) + "\n")
            return path

        a = det_file("a.csv", {0, 1, 2})
        b = det_file("b.csv", {1, 2, 3})
        code = run(
            "bench", "--camera", camera_file, "--marker", "square:50",
            "--poses", tmp_path / "poses.csv", "--detections", a, b, "--out", out,
        )
        assert code == 0
        out_text = capsys.readouterr().out
        assert "common subset: 2 of 4" in out_text


class TestDiffCommand:
    def test_identical_grayscale_and_swapped_colors(self, tmp_path, camera_file):
        img_a = tmp_path / "a.png"
        img_b = tmp_path / "b.png"
        imgio.write_image(img_a, np.full((8, 8), 250, dtype=np.uint8), 8)
        imgio.write_image(img_b, np.full((8, 8), 10, dtype=np.uint8), 8)
        out = tmp_path / "d.png"
        assert run("diff", img_a, img_b, "--out", out) == 0
        from PIL import Image

        rgb = np.asarray(Image.open(out))
        assert np.all(rgb[..., 0] > rgb[..., 1])
        assert run("diff", img_b, img_a, "--out", out) == 0
        rgb = np.asarray(Image.open(out))
        assert np.all(rgb[..., 1] > rgb[..., 0])

    def test_size_mismatch(self, tmp_path, capsys):
        img_a = tmp_path / "a.png"
        img_b = tmp_path / "b.png"
        imgio.write_image(img_a, np.zeros((8, 8), dtype=np.uint8), 8)
        imgio.write_image(img_b, np.zeros((8, 9), dtype=np.uint8), 8)
        assert run("diff", img_a, img_b, "--out", tmp_path / "d.png") == 1


class TestSequenceAndKernel:
    def test_sobol_dump(self, tmp_path):
        out = tmp_path / "seq.csv"
        assert run("sequence", "--kind", "sobol", "--count", "4", "--dims", "2", "--out", out) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "dim0,dim1"
        assert lines[1] == "0.0,0.0"
        assert lines[2] == "0.5,0.5"

    def test_halton_dump(self, tmp_path):
        out = tmp_path / "seq.csv"
        assert run("sequence", "--kind", "halton", "--count", "3", "--dims", "2", "--plain", "--out", out) == 0
        lines = out.read_text().splitlines()
        assert lines[1] == "0.0,0.0"
        assert lines[2].startswith("0.5,0.333")

    def test_kernel_dump(self, tmp_path, camera_file):
        out = tmp_path / "kernel.csv"
        assert run("kernel", "--camera", camera_file, "--out", out) == 0
        taps = np.loadtxt(out, delimiter=",")
        assert taps.shape[0] == taps.shape[1]
        assert abs(taps.sum() - 1.0) < 1e-6


class TestDetectCommand:
    def test_detect_prints_corners(self, tmp_path, camera_file, capsys):
        out = tmp_path / "frame.png"
        run(
            "render", "--camera", camera_file, "--marker", "square:50",
            "--pose", "0,0,700,0,0,0", "--out", out,
        )
        capsys.readouterr()
        assert run("detect", "--camera", camera_file, out) == 0
        assert capsys.readouterr().out.count("corner") == 4
