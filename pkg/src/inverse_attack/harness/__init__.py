from .experiments import box_survey, frame_sensitivity, heading_modes, max_mode_separation, single_frame_attack
from .metrics import format_ratio, is_success, metric_atd, metric_cr, metric_pre
from .report import collision_rates, render_plots, summarize, write_summary
from .scenarios import BudgetError, SuiteConfig, derive_seed, generate_scenario, load_suite, suite_scenarios
from .suite import Row, parse_method, read_rows, run_attack, run_scene, run_suite, write_rows

__all__ = [
    "BudgetError", "Row", "SuiteConfig", "box_survey", "collision_rates", "derive_seed", "format_ratio",
    "frame_sensitivity", "generate_scenario", "heading_modes", "is_success", "load_suite", "max_mode_separation",
    "metric_atd", "metric_cr", "metric_pre", "parse_method", "read_rows", "render_plots", "run_attack",
    "run_scene", "run_suite", "single_frame_attack", "suite_scenarios", "summarize", "write_rows",
    "write_summary",
]
