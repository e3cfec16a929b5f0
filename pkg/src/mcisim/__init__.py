"""mcisim: mass-casualty-incident command simulation and decision support.

Procedurally generates incident scenarios, runs a deterministic
patient/hospital/ambulance simulation, scores assignment decisions with a
multi-objective reward model, trains and serves suggestion policies, and
exposes live sessions over an HTTP service for a commander dashboard.
"""

__version__ = "0.1.0"
