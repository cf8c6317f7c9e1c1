"""Verification harness: calibration, suites, reports."""
