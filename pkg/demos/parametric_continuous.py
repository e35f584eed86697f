"""Continuous intermediate with constant control value: when is the probit fit identified?

DGP2 makes S1 a nonlinear (quadratic) function of W, so the treated-arm
regression of S on W leaves signal outside span{1, W} and the probit
coefficients are recovered. DGP1 has a linear g(W), the diagnostic fires and
the estimator refuses instead of returning an arbitrary answer.
"""

from pstrata.core import LinearDependence
from pstrata.dgp import DgpSpec, generate
from pstrata.parametric import OutcomeModelSpec, fit_prop2_probit


def main():
    spec = OutcomeModelSpec(family="probit", g_degree=2)
    sim = generate(DgpSpec("DGP2", 20000, seed=2))
    fit = fit_prop2_probit(sim.dataset, spec)
    print("DGP2 treated coefficients", fit.beta1.round(3), "truth", sim.truth["beta1"])
    print("DGP2 control coefficients", fit.beta0.round(3), "truth", sim.truth["beta0"])

    d1 = generate(DgpSpec("DGP1", 20000, seed=2)).dataset
    try:
        fit_prop2_probit(d1, spec)
    except LinearDependence as exc:
        print(f"DGP1: {exc.condition} fails (p = {exc.margin['p_value']:.2f}); no estimate reported")


if __name__ == "__main__":
    main()
