"""Robustness of velocity-tracking and reach-avoid rollouts, specialised vs tree evaluator.

    python3 demos/02_robustness_measures.py
"""

import numpy as np

from gapcert.domain import SeededRng, TestDomain
from gapcert.robustness import ReachAvoidSpec, VelocitySpec, eval_reach_avoid, eval_velocity_spec
from gapcert.systems import Turtlebot, TurtlebotParams, VelocityTracker, VelocityTrackerParams


def main():
    dom = TestDomain([-0.2], [0.3])
    for zeta in (0.3, 0.7):
        plant = VelocityTracker(VelocityTrackerParams(order=2, omega=10.0, zeta=zeta), dom)
        for v_d in (-0.1, 0.2):
            s = plant.rollout(np.array([v_d]), SeededRng(0))
            spec = VelocitySpec(v_d=v_d, delta_o=0.1, delta_s=0.03)
            rho = eval_velocity_spec(spec, s)
            tree = spec.to_measure()(s)
            print(f"velocity  zeta={zeta} v_d={v_d:+.2f}: rho={rho:+.4f} tree={tree:+.4f} peak vx={s.samples[:, 0].max():+.4f}")

    obst = TestDomain([-0.6, 0.3], [0.6, 0.8])
    bot = Turtlebot(TurtlebotParams(), obst, horizon=4.0, dt=0.02)
    p = TurtlebotParams()
    # the goal term is a min over the whole window, so the goal disk must cover the path
    for o in ((0.0, 0.3), (0.0, 0.5), (0.5, 0.7)):
        s = bot.rollout(np.array(o), SeededRng(0))
        spec = ReachAvoidSpec(g=p.goal, delta_g=1.2, o=o, delta_o=0.15, T=4.0)
        print(f"reach-avoid obstacle={o}: rho={eval_reach_avoid(spec, s):+.4f} tree={spec.to_measure()(s):+.4f}")


if __name__ == "__main__":
    main()
