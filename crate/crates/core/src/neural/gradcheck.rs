use super::{Matrix, ParamStore};

pub const FD_STEP: f64 = 1e-5;

/// Per-parameter worst relative error between analytic and central
/// finite-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub per_param: Vec<(String, f64)>,
    pub max_rel_err: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Perturbs every scalar of every parameter by `±FD_STEP` and compares
/// the central difference of `loss` with `analytic`.
pub fn grad_check(params: &ParamStore, analytic: &[Matrix], loss: impl Fn(&ParamStore) -> f64) -> GradCheckReport {
    assert_eq!(analytic.len(), params.len(), "one gradient per parameter");
    let mut probe = params.clone();
    let mut per_param = Vec::with_capacity(params.len());
    let mut max_rel_err: f64 = 0.0;
    for id in params.ids() {
        let mut worst: f64 = 0.0;
        for k in 0..params.get(id).len() {
            let orig = params.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = orig + FD_STEP;
            let up = loss(&probe);
            probe.get_mut(id).data_mut()[k] = orig - FD_STEP;
            let down = loss(&probe);
            probe.get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(analytic[id.index()].data()[k], numeric));
        }
        max_rel_err = max_rel_err.max(worst);
        per_param.push((params.name(id).to_string(), worst));
    }
    GradCheckReport { per_param, max_rel_err }
}
