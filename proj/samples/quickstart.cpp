// Fits a contaminated synthetic problem with the spectral estimator and the
// least-squares baseline and prints both errors.

#include <iostream>

#include "smom/baselines.hpp"
#include "smom/datagen.hpp"
#include "smom/descent.hpp"

int main() {
  using namespace smom;
  GenSpec g;
  g.n = 5000;
  g.d = 20;
  g.epsilon = 0.005;
  g.attack = AttackKind::Mixed;
  g.seed = 3;
  const Dataset data = generate(g);

  DescentConfig cfg = DescentConfig::practical(100);
  cfg.seed = 1;
  const FitResult fit = robust_regression(data, ProblemSpec::from_sigma(g.second_moment()), cfg);

  std::cout << "outliers:        " << data.outlier_count() << '\n'
            << "spectral error:  " << (fit.beta_hat - *data.truth).norm() << '\n'
            << "ols error:       " << (ols(data).beta - *data.truth).norm() << '\n';
}
