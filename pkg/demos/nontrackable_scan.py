"""
Finding non-trackable realizations
==================================

For some channels the learner fits the response very well while its
parameter estimates wander from step to step. Different parameter sets
then produce nearly the same response, so no stable solution exists.

This script scans noiseless scenarios for seeds where the worst relative
response residual stays below ``NONTRACKABLE_RESIDUAL`` while some
section other than the perturbed one drifts by more than
``NONTRACKABLE_DRIFT`` per step on average. The seeds found with
``range(60)`` are committed in ``nontrackable_seeds.txt``.
"""

import sys

from polsense.harness import (NONTRACKABLE_DRIFT, NONTRACKABLE_RESIDUAL, ExperimentConfig,
                              scan_nontrackable)

stop = int(sys.argv[1]) if len(sys.argv) > 1 else 60
print(f"residual < {NONTRACKABLE_RESIDUAL}, drift > {NONTRACKABLE_DRIFT}")
seeds = scan_nontrackable(ExperimentConfig(estimator="learn"), range(stop))
print("non-trackable seeds:", seeds)
