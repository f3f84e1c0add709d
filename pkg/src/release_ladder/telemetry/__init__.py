"""Synthetic telemetry panels and the signature estimators."""
from .estimators import (adoption_rd, cascade_hazard, event_study, patch_hazard, plateau_test)
from .panel import Panel, build_panel, patch_spells, post_reset_metrics, simulate_firms
from .replicate import replicate_s1_s3, signature_estimates

__all__ = ["Panel", "adoption_rd", "build_panel", "cascade_hazard", "event_study", "patch_hazard",
           "patch_spells", "plateau_test", "post_reset_metrics", "replicate_s1_s3", "signature_estimates",
           "simulate_firms"]
