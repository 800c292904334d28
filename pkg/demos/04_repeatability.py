"""Small repeatability study: rho_hat_e across seeds and RKHS norm bounds.

The full study (6 B values x 20 runs) is ``gapcert repeat configs/repeatability.json``.

    python3 demos/04_repeatability.py
"""

from pathlib import Path

from gapcert import config, verifier

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "repeatability.json"


def main():
    cfg = config.build(config.load(CONFIG))
    out = verifier.repeatability_study(cfg, (1.0, 3.5), runs_per_B=5)
    for r in out.runs:
        print(f"B={r.B:.1f} seed={r.seed:>20d} rho_hat_e={r.rho_hat_e:+.4f} iterations={r.iterations} {r.status}")
    s = out.summary()
    print(f"spread {s['spread']:.4f} vs tolerance {s['tolerance']} -> {s['verdict']}")


if __name__ == "__main__":
    main()
