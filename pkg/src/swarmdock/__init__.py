"""Deterministic multi-chaser rendezvous and docking simulator.

A small library plus CLI that flies a swarm of quantized-move chaser
vehicles toward a spinning target mockup: a synthetic depth camera detects
the target's body and solar panels, guidance rebuilds an attractive/repulsive
node field from the detections, and every 0.25 s each chaser's field
acceleration is quantized into the vehicles' minimum-move command language
and delivered over an inspectable datagram protocol.
"""

from .frames import Pose, Vec3
from .guidance import ApfConfig, ChaserState, ChaserStatus
from .runner import RunReport, batch, run
from .scenario import Scenario, bundled_scenario_dir, load_scenario, load_scenario_dir

__version__ = "0.1.0"

__all__ = [
    "ApfConfig",
    "ChaserState",
    "ChaserStatus",
    "Pose",
    "RunReport",
    "Scenario",
    "Vec3",
    "batch",
    "bundled_scenario_dir",
    "load_scenario",
    "load_scenario_dir",
    "run",
    "__version__",
]
