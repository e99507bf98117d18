"""Golden-output tests for the figure renderer.

The input CSVs under tests/data are frozen sweep outputs; the rendered PNGs
must be byte-identical run to run, which is asserted via pinned sha256
hashes.  Hashes are tied to the matplotlib version they were generated
with, so a version bump legitimately refreshes them.
"""

import hashlib
from pathlib import Path

import matplotlib
import pytest

from risfigs import FigureSpec, MissingColumnError, load_table, render
from risfigs.cli import main as cli_main

DATA = Path(__file__).parent / "data"
BOUNDS_CSV = str(DATA / "bounds_snr_metrics.csv")
MASK_CSV = str(DATA / "mask_demo.csv")
TRACE_CSV = str(DATA / "trace_demo_trials.csv")

PINNED_MPL = "3.10.9"

GOLDEN = {
    "bounds_sweep.png": "b8735563f3448c963ea2f5178af8adb5d9084c8d0be61a763650aeb3f8626681",
    "mask_heatmap.png": "2f4dc79c471521965e07b66274cb7fd11808c28f7f4a810f1ccf1c51afd1a078",
    "iteration_trace.png": "e612683d2589c6d54999adff0b3c5dc82ed2c2487e9054c84349c2077c3f5040",
}


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def bounds_spec(out: Path) -> FigureSpec:
    return FigureSpec(
        inputs=(BOUNDS_CSV,),
        kind="line-sweep",
        x="snr_db",
        y=("sqrt_crb_perfect", "sqrt_crb_knownloc", "sqrt_lb"),
        output=str(out),
        logy=True,
        ylabel="position error bound (m)",
    )


def mask_spec(out: Path) -> FigureSpec:
    return FigureSpec(
        inputs=(MASK_CSV,),
        kind="mask-heatmap",
        x="x",
        y=("m_true_re", "m_l1_re", "m_succ_re"),
        output=str(out),
    )


def trace_spec(out: Path) -> FigureSpec:
    return FigureSpec(
        inputs=(TRACE_CSV,),
        kind="iteration-trace",
        x="iteration",
        y=("pos_err",),
        output=str(out),
        logy=True,
    )


class TestGoldenHashes:
    @pytest.fixture(autouse=True)
    def _pin(self):
        if matplotlib.__version__ != PINNED_MPL:
            pytest.skip(
                f"golden hashes pinned to matplotlib {PINNED_MPL}, "
                f"found {matplotlib.__version__}"
            )

    def test_bounds_sweep_golden(self, tmp_path):
        out = render(bounds_spec(tmp_path / "bounds_sweep.png"))
        assert sha256(out) == GOLDEN["bounds_sweep.png"]

    def test_mask_heatmap_golden(self, tmp_path):
        out = render(mask_spec(tmp_path / "mask_heatmap.png"))
        assert sha256(out) == GOLDEN["mask_heatmap.png"]

    def test_iteration_trace_golden(self, tmp_path):
        out = render(trace_spec(tmp_path / "iteration_trace.png"))
        assert sha256(out) == GOLDEN["iteration_trace.png"]


class TestDeterminism:
    def test_repeat_render_is_byte_identical(self, tmp_path):
        a = render(bounds_spec(tmp_path / "a.png"))
        b = render(bounds_spec(tmp_path / "b.png"))
        assert a.read_bytes() == b.read_bytes()

    def test_mask_repeat_render_is_byte_identical(self, tmp_path):
        a = render(mask_spec(tmp_path / "a.png"))
        b = render(mask_spec(tmp_path / "b.png"))
        assert a.read_bytes() == b.read_bytes()


class TestValidation:
    def test_missing_column_raises_with_filename(self, tmp_path):
        spec = FigureSpec(
            inputs=(BOUNDS_CSV,),
            kind="line-sweep",
            x="snr_db",
            y=("no_such_column",),
            output=str(tmp_path / "x.png"),
        )
        with pytest.raises(MissingColumnError, match="no_such_column"):
            render(spec)

    def test_unknown_kind_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="kind"):
            FigureSpec(
                inputs=(BOUNDS_CSV,),
                kind="scatter",
                x="snr_db",
                y=("sqrt_lb",),
                output=str(tmp_path / "x.png"),
            )

    def test_empty_y_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="y column"):
            FigureSpec(
                inputs=(BOUNDS_CSV,),
                kind="line-sweep",
                x="snr_db",
                y=(),
                output=str(tmp_path / "x.png"),
            )

    def test_load_table_skips_unit_comment_block(self):
        df = load_table(BOUNDS_CSV)
        assert "snr_db" in df.columns
        assert len(df) == 7


class TestCli:
    def test_line_sweep_subcommand(self, tmp_path, capsys):
        out = tmp_path / "cli.png"
        rc = cli_main(
            [
                "line-sweep",
                BOUNDS_CSV,
                "-o",
                str(out),
                "--x",
                "snr_db",
                "--y",
                "sqrt_crb_perfect",
                "sqrt_lb",
                "--logy",
            ]
        )
        assert rc == 0
        assert out.exists()
        assert str(out) in capsys.readouterr().out

    def test_mask_heatmap_subcommand(self, tmp_path):
        out = tmp_path / "mask.png"
        rc = cli_main(["mask-heatmap", MASK_CSV, "-o", str(out)])
        assert rc == 0
        assert out.exists()

    def test_iteration_trace_subcommand(self, tmp_path):
        out = tmp_path / "trace.png"
        rc = cli_main(["iteration-trace", TRACE_CSV, "-o", str(out), "--logy"])
        assert rc == 0
        assert out.exists()

    def test_missing_column_exits_2_with_diagnostic(self, tmp_path, capsys):
        rc = cli_main(
            [
                "line-sweep",
                BOUNDS_CSV,
                "-o",
                str(tmp_path / "x.png"),
                "--x",
                "snr_db",
                "--y",
                "bogus_col",
            ]
        )
        assert rc == 2
        err = capsys.readouterr().err
        assert "bogus_col" in err
        assert "bounds_snr_metrics.csv" in err

    def test_missing_file_exits_2(self, tmp_path, capsys):
        rc = cli_main(
            [
                "line-sweep",
                str(tmp_path / "nope.csv"),
                "-o",
                str(tmp_path / "x.png"),
                "--x",
                "snr_db",
                "--y",
                "sqrt_lb",
            ]
        )
        assert rc == 2
        assert "nope.csv" in capsys.readouterr().err
