"""Desk-scale closed-loop visuomotor control testbed.

A conditional diffusion planner proposes sub-goal observation frames, an
inverse-dynamics policy measures errors in a learned embedding space and
decodes corrective actions, and a feedback executor transitions between
sub-goals and replans when generated plans look unreliable. Everything runs
on a deterministic 2-D tabletop simulator small enough to train and benchmark
on a CPU in minutes.
"""

__version__ = "0.1.0"
