// Draws one sample from the simulation design and prints the true curve next
// to DR-learner and second-order estimates built from simulated nuisances.
#include <cstdio>
#include <random>

#include "drcurve/drcurve.hpp"

int main() {
    using namespace drcurve;
    const DoseResponseDGP dgp;
    std::mt19937_64 rng(7);
    const Sample s = dgp.draw(500, rng);
    const NuisanceFit nuis = simulated_nuisances(SimulatedNuisanceConfig{4.0, 500, 11}, dgp, s.x);
    const PseudoOutcomeSet pseudo = build_pseudo(s, nuis);
    const BasisSpec basis = BasisSpec::uniform(1, 11);

    std::printf("%6s %9s %9s %9s\n", "t", "truth", "dr", "hoif2");
    for (double t = -0.5; t <= 0.51; t += 0.25) {
        HoifConfig cfg;
        cfg.t = t;
        cfg.h = 0.2;
        const double dr = dr_learner_estimate(pseudo, t, 0.2, 1);
        const double hoif = hoif_estimate(s, nuis, cfg, basis).estimate;
        std::printf("%6.2f %9.4f %9.4f %9.4f\n", t, dgp.theta(t), dr, hoif);
    }
}
