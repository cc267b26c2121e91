//! Central finite-difference gradient checking.

use super::tensor::Tensor;

/// Threshold above which a coordinate is flagged.
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// One loss evaluation. `signature` identifies the active branch of every
/// piecewise-linear unit (e.g. the ReLU sign pattern); a coordinate whose
/// `±eps` probes land on a different branch than the base point straddles a
/// kink and its finite difference is not a derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub signature: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub coords: usize,
    pub max_rel_err: f64,
    pub worst_index: usize,
    /// Coordinates whose error exceeds the tolerance.
    pub flagged: Vec<usize>,
    /// Coordinates skipped because a probe crossed a kink.
    pub kinks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub eps: f64,
    pub tolerance: f64,
    pub max_rel_err: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }

    pub fn flagged_count(&self) -> usize {
        self.tensors.iter().map(|t| t.flagged.len()).sum()
    }

    pub fn kink_count(&self) -> usize {
        self.tensors.iter().map(|t| t.kinks.len()).sum()
    }

    /// One line per tensor plus a summary line.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for t in &self.tensors {
            s.push_str(&format!(
                "tensor={} coords={} max_rel_err={:.3e} worst={} flagged={} kinks={}\n",
                t.name,
                t.coords,
                t.max_rel_err,
                t.worst_index,
                t.flagged.len(),
                t.kinks.len()
            ));
        }
        s.push_str(&format!(
            "gradcheck eps={:e} tol={:e} max_rel_err={:.3e} flagged={} kinks={} status={}\n",
            self.eps,
            self.tolerance,
            self.max_rel_err,
            self.flagged_count(),
            self.kink_count(),
            if self.passed() { "pass" } else { "fail" }
        ));
        s
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` gradients of `f` at `params` against central
/// differences with step `eps`, one coordinate at a time.
pub fn grad_check<F>(
    names: &[String],
    params: &[Tensor],
    analytic: &[Tensor],
    eps: f64,
    tolerance: f64,
    mut f: F,
) -> GradCheckReport
where
    F: FnMut(&[Tensor]) -> Evaluation,
{
    let base = f(params).signature;
    let mut work = params.to_vec();
    let mut tensors = Vec::with_capacity(params.len());
    let mut overall: f64 = 0.0;
    for (ti, grad) in analytic.iter().enumerate() {
        let mut check = TensorCheck {
            name: names.get(ti).cloned().unwrap_or_else(|| format!("t{ti}")),
            coords: grad.len(),
            max_rel_err: 0.0,
            worst_index: 0,
            flagged: Vec::new(),
            kinks: Vec::new(),
        };
        for k in 0..grad.len() {
            let orig = work[ti].data()[k];
            work[ti].data_mut()[k] = orig + eps;
            let hi = f(&work);
            work[ti].data_mut()[k] = orig - eps;
            let lo = f(&work);
            work[ti].data_mut()[k] = orig;
            if hi.signature != base || lo.signature != base {
                check.kinks.push(k);
                continue;
            }
            let numeric = (hi.loss - lo.loss) / (2.0 * eps);
            let err = relative_error(grad.data()[k], numeric);
            if err > check.max_rel_err {
                check.max_rel_err = err;
                check.worst_index = k;
            }
            if err > tolerance {
                check.flagged.push(k);
            }
        }
        overall = overall.max(check.max_rel_err);
        tensors.push(check);
    }
    GradCheckReport {
        eps,
        tolerance,
        max_rel_err: overall,
        tensors,
    }
}
