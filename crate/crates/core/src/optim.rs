//! Derivative-free Nelder-Mead simplex minimizer.

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct NelderMead {
    pub max_iter: usize,
    /// Convergence once the spread of simplex values falls below
    /// `f_tol * (1 + |f_best|)` ...
    pub f_tol: f64,
    /// ... and every vertex lies within `x_tol` of the best one.
    pub x_tol: f64,
    reflect: f64,
    expand: f64,
    contract: f64,
    shrink: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            f_tol: 1e-10,
            x_tol: 1e-7,
            reflect: 1.0,
            expand: 2.0,
            contract: 0.5,
            shrink: 0.5,
        }
    }
}

impl NelderMead {
    pub fn with_max_iter(mut self, n: usize) -> Self {
        self.max_iter = n;
        self
    }

    /// Minimizes `f` from `x0` using an axis-aligned initial simplex with
    /// edge lengths `steps`. On non-convergence the best vertex found is
    /// returned in the `Err` variant.
    pub fn minimize<F>(&self, f: F, x0: &[f64], steps: &[f64]) -> Result<Minimum, Minimum>
    where
        F: Fn(&[f64]) -> f64,
    {
        let n = x0.len();
        assert_eq!(steps.len(), n, "one step per coordinate");
        let mut evals = 0usize;
        let mut eval = |x: &[f64]| {
            evals += 1;
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };
        if n == 0 {
            let value = eval(x0);
            return Ok(Minimum {
                x: vec![],
                value,
                iterations: 0,
                evaluations: 1,
            });
        }

        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((x0.to_vec(), eval(x0)));
        for i in 0..n {
            let mut x = x0.to_vec();
            x[i] += steps[i];
            let v = eval(&x);
            simplex.push((x, v));
        }

        let mut iterations = 0;
        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = simplex[0].1;
            let worst = simplex[n].1;
            let f_spread = worst - best;
            let x_spread = simplex[1..]
                .iter()
                .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if (f_spread <= self.f_tol * (1.0 + best.abs()) && x_spread <= self.x_tol)
                || (best.is_finite() && f_spread == 0.0)
            {
                return Ok(self.result(simplex, iterations, evals));
            }
            if iterations >= self.max_iter {
                return Err(self.result(simplex, iterations, evals));
            }
            iterations += 1;

            let mut centroid = vec![0.0; n];
            for (x, _) in &simplex[..n] {
                for (c, xi) in centroid.iter_mut().zip(x) {
                    *c += xi / n as f64;
                }
            }
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[n].0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };

            let xr = along(self.reflect);
            let fr = eval(&xr);
            if fr < simplex[0].1 {
                let xe = along(self.reflect * self.expand);
                let fe = eval(&xe);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(self.reflect * self.contract);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(-self.contract);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < fr.min(simplex[n].1) {
                simplex[n] = (xc, fc);
                continue;
            }
            let x_best = simplex[0].0.clone();
            for vertex in simplex.iter_mut().skip(1) {
                let x: Vec<f64> = x_best
                    .iter()
                    .zip(&vertex.0)
                    .map(|(b, xi)| b + self.shrink * (xi - b))
                    .collect();
                let v = eval(&x);
                *vertex = (x, v);
            }
        }
    }

    fn result(&self, mut simplex: Vec<(Vec<f64>, f64)>, iterations: usize, evaluations: usize) -> Minimum {
        let (x, value) = simplex.swap_remove(0);
        Minimum {
            x,
            value,
            iterations,
            evaluations,
        }
    }
}
