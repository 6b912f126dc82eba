import json
import math
import subprocess
import sys

import numpy as np
import pytest

from dmpfem import io
from dmpfem.cli import dispatch, parse_angle
from dmpfem.generators import fig5_mesh, three_line_mesh


class TestIO:
    def test_mesh_round_trip(self, tmp_path):
        m = fig5_mesh().mesh
        io.write_mesh(tmp_path / "m.json", m)
        back = io.read_mesh(tmp_path / "m.json")
        np.testing.assert_array_equal(back.vertices, m.vertices)
        np.testing.assert_array_equal(back.triangles, m.triangles)
        assert back.labels == m.labels

    def test_patches_round_trip(self, tmp_path):
        dm = fig5_mesh()
        io.write_json(tmp_path / "p.json", io.patches_to_dict(dm.patches))
        back = io.read_patches(dm.mesh, tmp_path / "p.json")
        assert [sorted(p.triangle_ids) for p in back] == [sorted(p.triangle_ids) for p in dm.patches]
        assert [p.interior_parent for p in back] == [p.interior_parent for p in dm.patches]

    def test_bad_mesh_json(self):
        with pytest.raises(ValueError):
            io.mesh_from_dict({"vertices": []})

    def test_floats_exact(self, tmp_path):
        x = [0.1, 1 / 3, math.pi, 1e-300]
        io.write_json(tmp_path / "x.json", {"x": x})
        assert io.read_json(tmp_path / "x.json")["x"] == x
        assert io.dumps({"v": float("nan")}) == '{\n  "v": null\n}\n'

    def test_read_vector(self, tmp_path):
        np.testing.assert_array_equal(io.read_vector("2.5", 3), [2.5] * 3)
        (tmp_path / "v.json").write_text("[1, 2, 3]")
        np.testing.assert_array_equal(io.read_vector(str(tmp_path / "v.json"), 3), [1, 2, 3])
        m = three_line_mesh(1)
        io.write_solution_csv(tmp_path / "u.csv", m, np.arange(4.0))
        np.testing.assert_array_equal(io.read_vector(str(tmp_path / "u.csv"), 4), np.arange(4.0))
        with pytest.raises(ValueError):
            io.read_vector(str(tmp_path / "v.json"), 4)
        with pytest.raises(ValueError):
            io.read_vector("nope", 2)


class TestParse:
    @pytest.mark.parametrize("text,value", [("pi/3", math.pi / 3), ("0.3pi", 0.3 * math.pi),
                                            ("1.25", 1.25), ("2*pi/5", 2 * math.pi / 5)])
    def test_angles(self, text, value):
        assert parse_angle(text) == pytest.approx(value)


def run(tmp_path, *args):
    return dispatch([*args, "--out", str(tmp_path)])


class TestCLI:
    def test_mesh_gen_and_certify(self, tmp_path):
        assert run(tmp_path / "g", "mesh-gen", "gk", "--k", "1", "--theta", "pi/3") == 0
        mesh = str(tmp_path / "g" / "mesh.json")
        assert run(tmp_path / "c", "certify", "--mesh", mesh, "--mode", "sdmp-a") == 0
        cert = json.loads((tmp_path / "c" / "certificate.json").read_text())
        assert cert["status"] == "certified"
        manifest = json.loads((tmp_path / "c" / "manifest.json").read_text())
        assert manifest["subcommand"] == "certify"
        assert "certificate.json" in manifest["outputs"]

    def test_certify_failure_exit(self, tmp_path):
        assert run(tmp_path / "g", "mesh-gen", "three-line", "--n", "5") == 0
        mesh = str(tmp_path / "g" / "mesh.json")
        assert run(tmp_path / "a", "certify", "--mesh", mesh, "--mode", "sdmp-a") == 1
        assert run(tmp_path / "w", "certify", "--mesh", mesh, "--mode", "wdmp-a") == 0

    def test_defect_preset_with_patches(self, tmp_path):
        assert run(tmp_path / "g", "mesh-gen", "defect", "--preset", "fig5") == 0
        g = tmp_path / "g"
        assert run(tmp_path / "c", "certify", "--mesh", str(g / "mesh.json"), "--mode", "sdmp-a",
                   "--patches", str(g / "patches.json")) == 0

    def test_solve_green_assemble(self, tmp_path):
        run(tmp_path / "g", "mesh-gen", "three-line", "--n", "4")
        mesh = str(tmp_path / "g" / "mesh.json")
        assert run(tmp_path / "s", "solve", "--mesh", mesh, "--bc", "1", "--f", "0") == 0
        sol = np.loadtxt(tmp_path / "s" / "solution.csv", delimiter=",", skiprows=1)
        np.testing.assert_allclose(sol[:, 3], 1.0, atol=1e-12)
        assert run(tmp_path / "gr", "green", "--mesh", mesh, "--source", "6") == 0
        assert run(tmp_path / "as", "assemble", "--mesh", mesh, "--format", "csv", "--check-cotangent") == 0
        assert (tmp_path / "as" / "A.csv").exists()

    def test_semilinear_solve(self, tmp_path):
        run(tmp_path / "g", "mesh-gen", "rhombus", "--theta", "pi/3", "--n", "4", "--trim-corners")
        mesh = str(tmp_path / "g" / "mesh.json")
        assert run(tmp_path / "s", "solve", "--mesh", mesh, "--reaction", "tanh", "--f", "1") == 0
        assert run(tmp_path / "c", "certify", "--mesh", mesh, "--mode", "semilinear", "--lc", "1") == 0

    def test_dmp_test_deterministic(self, tmp_path):
        run(tmp_path / "g", "mesh-gen", "rhombus", "--theta", "pi/3", "--n", "4", "--trim-corners")
        mesh = str(tmp_path / "g" / "mesh.json")
        for d in ("a", "b"):
            assert run(tmp_path / d, "dmp-test", "--mesh", mesh, "--mode", "sdmp-a", "--trials", "30",
                       "--seed", "7") == 0
        assert (tmp_path / "a" / "dmp_test.json").read_bytes() == (tmp_path / "b" / "dmp_test.json").read_bytes()
        assert (tmp_path / "a" / "manifest.json").read_text().replace(str(tmp_path / "a"), "") == \
            (tmp_path / "b" / "manifest.json").read_text().replace(str(tmp_path / "b"), "")

    def test_dmp_test_violation_exit(self, tmp_path):
        run(tmp_path / "g", "mesh-gen", "three-line", "--n", "5")
        mesh = str(tmp_path / "g" / "mesh.json")
        assert run(tmp_path / "t", "dmp-test", "--mesh", mesh, "--mode", "sdmp-a", "--trials", "10",
                   "--adversarial") == 1

    @pytest.mark.parametrize("study", [["fig4", "--k", "1", "--theta-grid", "0.3pi,0.49pi"],
                                       ["fig8", "--alpha-grid", "0.01,0.1"], ["appendix"], ["fig10"]])
    def test_studies(self, tmp_path, study):
        assert run(tmp_path, "study", *study) == 0
        assert any(p.suffix == ".json" and p.name != "manifest.json" for p in tmp_path.iterdir())

    @pytest.mark.parametrize("args", [["mesh-gen", "three-line", "--n", "0"], ["bogus"],
                                      ["certify", "--mesh", "/nonexistent.json", "--mode", "sdmp-a"],
                                      ["mesh-gen", "degenerate", "--alpha", "1.0"]])
    def test_usage_errors(self, tmp_path, args):
        assert run(tmp_path, *args) == 2

    def test_help_entry_point(self):
        out = subprocess.run([sys.executable, "-m", "dmpfem.cli", "--help"], capture_output=True, text=True)
        assert out.returncode == 0
        for cmd in ("mesh-gen", "assemble", "certify", "solve", "green", "dmp-test", "study"):
            assert cmd in out.stdout
