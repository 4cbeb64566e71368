"""Broadband-source polarization BB84 link simulator."""

from ._core import (
    ConfigError,
    DomainError,
    Error,
    IoError,
    Scenario,
    SyncError,
    __version__,
    binary_entropy,
    calibrate,
    degree_of_polarization,
    drift_trace,
    expected_rates,
    headroom_db,
    launch_power_dbm,
    qber_threshold,
    run_single,
    secure_fraction,
    spearman,
    sweep_bandwidth,
    sweep_length,
    sweep_ob,
)

__all__ = [
    "ConfigError",
    "DomainError",
    "Error",
    "IoError",
    "Scenario",
    "SyncError",
    "__version__",
    "binary_entropy",
    "calibrate",
    "degree_of_polarization",
    "drift_trace",
    "expected_rates",
    "headroom_db",
    "launch_power_dbm",
    "qber_threshold",
    "run_single",
    "secure_fraction",
    "spearman",
    "sweep_bandwidth",
    "sweep_length",
    "sweep_ob",
]
