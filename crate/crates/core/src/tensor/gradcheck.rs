use crate::error::Result;

use super::{Tape, Tensor, Var};

/// Denominator floor for the relative error, so that coordinates whose true
/// gradient is numerically zero are compared on an absolute scale.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Outcome of comparing reverse-mode gradients against central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub passed: bool,
    /// `max |g_ad - g_fd| / max(|g_ad|, |g_fd|, REL_ERROR_FLOOR)`.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// `(input index, flat coordinate)` attaining `max_rel_error`.
    pub worst: Option<(usize, usize)>,
    pub coordinates: usize,
}

/// Checks `f` at `points` coordinate by coordinate with step `h`.
///
/// `f` receives a fresh tape and one var per point (all requiring
/// gradients) and must return a 1x1 var.
pub fn gradcheck<F>(f: F, points: &[Tensor], h: f64, tol: f64) -> Result<GradcheckReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let eval = |pts: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = pts.iter().map(|p| tape.param(p)).collect();
        Ok(f(&tape, &vars)?.item())
    };

    let analytic: Vec<Vec<f64>> = {
        let tape = Tape::new();
        let owned: Vec<Tensor> = points.iter().map(|p| p.clone().requiring_grad()).collect();
        let vars: Vec<Var<'_>> = owned.iter().map(|p| tape.param(p)).collect();
        let loss = f(&tape, &vars)?;
        let grads = tape.backward(loss)?;
        vars.iter().map(|&v| grads.get_or_zeros(v)).collect()
    };

    let mut work: Vec<Tensor> = points.to_vec();
    let mut report = GradcheckReport {
        passed: true,
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    for p in 0..work.len() {
        for c in 0..work[p].len() {
            let x0 = work[p].data()[c];
            work[p].data_mut()[c] = x0 + h;
            let fp = eval(&work)?;
            work[p].data_mut()[c] = x0 - h;
            let fm = eval(&work)?;
            work[p].data_mut()[c] = x0;

            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[p][c];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
            report.coordinates += 1;
            report.max_abs_error = report.max_abs_error.max(abs);
            if !(rel <= report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst = Some((p, c));
            }
        }
    }
    report.passed = report.max_rel_error <= tol;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    #[test]
    fn linear_function_agrees_exactly() {
        let w = Tensor::new(2, 3, vec![0.5, -1.0, 2.0, 0.25, 3.0, -0.75]).unwrap();
        let c = Matrix::from_vec(3, 1, vec![1.0, 2.0, -3.0]).unwrap();
        let r = gradcheck(
            |tape, v| Ok(v[0].matmul(tape.constant(&c))?.sum()),
            &[w],
            1e-5,
            1e-10,
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.coordinates, 6);
    }

    #[test]
    fn detects_wrong_gradient() {
        // relu at exactly 0 has a one-sided derivative mismatch.
        let w = Tensor::new(1, 1, vec![0.0]).unwrap();
        let r = gradcheck(|_, v| Ok(v[0].relu().sum()), &[w], 1e-5, 1e-4).unwrap();
        assert!(!r.passed);
    }
}
