"""Simulation examples, ground-truth oracles and coverage studies."""

from __future__ import annotations

from decorrvi.simlab.coverage import CoverageReport, StudyConfig, run_coverage
from decorrvi.simlab.generators import EXAMPLES, GeneratorConfig, generate
from decorrvi.simlab.oracle import mc_psi0, mc_psi_L, true_psi

__all__ = ["EXAMPLES", "CoverageReport", "GeneratorConfig", "StudyConfig", "generate", "mc_psi0",
           "mc_psi_L", "run_coverage", "true_psi"]
