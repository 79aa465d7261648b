"""Evaluation: ellipse fits, pupil-center preservation, objective parity, speed."""

from eye_purify.metrics.bench import BenchRow, bench, render_table, write_bench_csv  # noqa: F401
from eye_purify.metrics.ellipse import Ellipse, fit_ellipse  # noqa: F401
from eye_purify.metrics.parity import (  # noqa: F401
    ParityCurve, median_crossover, objective_parity, parity_batch, write_parity_csv,
)
from eye_purify.metrics.pupil import pupil_boundary, pupil_center_batch, pupil_center_diff  # noqa: F401
