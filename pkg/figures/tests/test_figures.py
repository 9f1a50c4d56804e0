import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from pmd_figures.jobs import FIGURE_IDS, FigureInputError, make_all

CASES = ("stationary", "presync", "sync", "postsync")


def write_results_tree(root: Path, n_theta=32, n_modes=4) -> None:
    """Synthetic results tree with the documented CSV schemas."""
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    rng = np.random.default_rng(0)
    for cid in CASES:
        case = root / cid
        case.mkdir(parents=True)

        with open(case / "surface_modes.csv", "w") as fh:
            fh.write("# config_hash=test\n")
            cols = ["theta", "p_mean", "p_mean_sin", "p_mean_cos"]
            for i in range(1, n_modes + 1):
                cols += [f"psi_{i}", f"psi_{i}_sin", f"psi_{i}_cos"]
            fh.write(",".join(cols) + "\n")
            for j, th in enumerate(theta):
                vals = [th, -np.cos(th), np.cos(th) * np.sin(th), np.cos(th) ** 2]
                for i in range(1, n_modes + 1):
                    psi = np.sin(i * th)
                    vals += [psi, -psi * np.sin(th), -psi * np.cos(th)]
                fh.write(",".join(repr(float(v)) for v in vals) + "\n")

        with open(case / "ldc_ddc.csv", "w") as fh:
            fh.write("# config_hash=test\nmode,L_i,D_i\n")
            fh.write("0,0.001,1.05\n")
            for i in range(1, 11):
                fh.write(f"{i},{1.0 / i},{0.5 / i}\n")

        with open(case / "forces.csv", "w") as fh:
            fh.write("# config_hash=test\n")
            fh.write("t,cl_p,cl_v,cl,cd_p,cd_v,cd,y,ydot,yddot\n")
            t = np.arange(0.0, 120.0, 0.05)
            cl = 0.6 * np.sin(2 * np.pi * 0.19 * t)
            y = 0.1 * np.sin(2 * np.pi * 0.18 * t)
            for k in range(len(t)):
                row = [t[k], 0.9 * cl[k], 0.1 * cl[k], cl[k], 1.0, 0.3, 1.3, y[k], 0.0, 0.0]
                fh.write(",".join(repr(float(v)) for v in row) + "\n")

        with open(case / "mean_field.csv", "w") as fh:
            fh.write("# config_hash=test\nx,y,p\n")
            r = np.linspace(0.5, 8.0, 12)
            for ri in r:
                for th in theta:
                    x, ycoord = ri * np.cos(th), ri * np.sin(th)
                    p = -np.cos(th) / ri + 0.01 * rng.normal()
                    fh.write(f"{float(x)!r},{float(ycoord)!r},{float(p)!r}\n")


@pytest.fixture()
def results_tree(tmp_path):
    write_results_tree(tmp_path)
    return tmp_path


def test_make_all_renders_six_figures(results_tree):
    written = make_all(results_tree)
    assert len(written) == 12  # six analogs, PNG + SVG each
    stems = {p.stem for p in written}
    assert stems == set(FIGURE_IDS)
    for p in written:
        assert p.exists() and p.stat().st_size > 0


def test_missing_input_named(results_tree):
    (results_tree / "sync" / "surface_modes.csv").unlink()
    with pytest.raises(FigureInputError) as exc:
        make_all(results_tree)
    assert "sync" in str(exc.value) and "surface_modes.csv" in str(exc.value)
    assert not (results_tree / "figures").exists()


def test_missing_column_named(results_tree):
    path = results_tree / "stationary" / "ldc_ddc.csv"
    path.write_text("# x\nmode,L_i\n1,0.5\n")
    with pytest.raises(FigureInputError) as exc:
        make_all(results_tree, only="fig4")
    assert "D_i" in str(exc.value)


def test_only_filter(results_tree):
    written = make_all(results_tree, only="fig4")
    assert {p.stem for p in written} == {"fig4_ldc_ddc_stationary"}


def test_unknown_only_rejected(results_tree):
    with pytest.raises(FigureInputError):
        make_all(results_tree, only="fig99")


def test_cli_empty_directory_nonzero(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "pmd_figures.cli", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 1
    assert "missing required input" in proc.stderr
    assert not list(tmp_path.glob("figures/*"))


def test_cli_renders(results_tree):
    proc = subprocess.run(
        [sys.executable, "-m", "pmd_figures.cli", str(results_tree), "--only", "fig5"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "fig5_lift_histories.png" in proc.stdout
