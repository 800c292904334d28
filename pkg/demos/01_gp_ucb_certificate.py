"""Certify the maximum of a known RKHS function and compare with a dense grid.

    python3 demos/01_gp_ucb_certificate.py
"""

from gapcert import bo, gp
from gapcert.domain import SeededRng, TestDomain
from gapcert.oracles import GridSpec, grid_optimum, random_rkhs_function


def main():
    dom = TestDomain([0.0], [1.0])
    k = gp.KernelSpec("squared-exponential", (0.2,), 1.0)
    J = random_rkhs_function(k, dom, 3, SeededRng(3))
    p = bo.BoParams(B=1.05 * J.norm, R=0.01, delta=0.05, epsilon=0.05, lam=1e-6)
    cert = bo.run(bo.objective_from_function(J, dom), p, k, None, SeededRng(4))
    z_star, j_star = grid_optimum(J, GridSpec(10_001, dom))

    print(f"RKHS norm of J        : {J.norm:.4f} (B = {p.B:.4f})")
    print(f"certified upper bound : {cert.bound:.5f} after {cert.iterations} iterations")
    print(f"grid maximum          : {j_star:.5f} at z = {z_star[0]:.4f}")
    print(f"bound - truth         : {cert.bound - j_star:.5f} (epsilon {p.epsilon})")
    print("iteration  z       beta   F")
    for i, r in enumerate(cert.trace, 1):
        print(f"{i:9d}  {r.z[0]:.4f}  {r.beta:.3f}  {r.F:.4f}")


if __name__ == "__main__":
    main()
