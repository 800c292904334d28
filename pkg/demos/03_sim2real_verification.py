"""End-to-end bound on a pair with a known injected gap, checked against the grid oracle.

    python3 demos/03_sim2real_verification.py
"""

from pathlib import Path

from gapcert import config, verifier

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "injected_gap.json"


def main():
    res = config.load(CONFIG)
    cfg = config.build(res)
    rep = verifier.verify(cfg)
    print(f"rho_hat_e (sim lower bound) : {rep.rho_hat_e:+.4f}")
    print(f"e_e (gap upper bound)       : {rep.e_e:+.4f}")
    print(f"rho_e                       : {rep.rho_e:+.4f} within epsilon {rep.epsilon:.4f}")
    print(f"confidence                  : {rep.confidence:.4f}")

    o = verifier.oracle_values(cfg, 200, 1)
    print(f"oracle rho*  = {o['rho_star']:+.4f} at {o['rho_star_arg']}")
    print(f"oracle e*    = {o['e_star']:+.4f} at {o['e_star_arg']}")
    print(f"rho_e <= rho*          : {rep.rho_e <= o['rho_star']}")
    print(f"rho* - rho_e <= epsilon: {o['rho_star'] - rep.rho_e <= rep.epsilon}")


if __name__ == "__main__":
    main()
