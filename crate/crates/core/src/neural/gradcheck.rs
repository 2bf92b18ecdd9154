use super::tensor::ParamTensor;

/// Perturbation used for central differences.
pub const PERTURBATION: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(tensor name, flat index)` of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Relative error with the denominator floored at `1e-6 * max(1, |f|)`,
/// so round-off in a large loss is not mistaken for a gradient error.
pub fn relative_error(analytic: f64, numeric: f64, loss_scale: f64) -> f64 {
    let floor = 1e-6 * loss_scale.abs().max(1.0);
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic[k][i]` against central differences of `loss` with
/// respect to `params[k].values[i]`.
pub fn grad_check<F>(params: &[ParamTensor], analytic: &[Vec<f64>], mut loss: F) -> GradCheckReport
where
    F: FnMut(&[ParamTensor]) -> f64,
{
    let mut work = params.to_vec();
    let scale = loss(&work);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for k in 0..work.len() {
        for i in 0..work[k].values.len() {
            let orig = work[k].values[i];
            work[k].values[i] = orig + PERTURBATION;
            let up = loss(&work);
            work[k].values[i] = orig - PERTURBATION;
            let down = loss(&work);
            work[k].values[i] = orig;
            let numeric = (up - down) / (2.0 * PERTURBATION);
            let mut err = relative_error(analytic[k][i], numeric, scale);
            if err.is_nan() {
                err = f64::INFINITY;
            }
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((work[k].name.clone(), i));
            }
        }
    }
    report
}

/// Central-difference check of a gradient with respect to a plain vector.
pub fn grad_check_vec<F>(x: &[f64], analytic: &[f64], mut f: F) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    let t = ParamTensor::from_values("x", &[x.len()], x.to_vec()).expect("shape from length");
    grad_check(&[t], &[analytic.to_vec()], |p| f(&p[0].values))
}
