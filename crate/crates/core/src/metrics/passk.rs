use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Samples drawn and passed for one problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub problem_id: String,
    pub n: u64,
    /// Samples that pass the functional check.
    pub c: u64,
    /// Samples that compile.
    pub compile_ok: u64,
}

/// Unbiased Pass@k estimate `1 - C(n-c, k) / C(n, k)`.
///
/// Evaluated as `1 - prod_{i=n-c+1}^{n} (1 - k/i)`, which never forms a
/// binomial coefficient and so cannot overflow.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, MetricsError> {
    if k == 0 || k > n {
        return Err(MetricsError::BadK { n, k });
    }
    if c > n {
        return Err(MetricsError::BadCount { n, c });
    }
    if n - c < k {
        return Ok(1.0);
    }
    let prod: f64 = (n - c + 1..=n).map(|i| 1.0 - k as f64 / i as f64).product();
    Ok(1.0 - prod)
}

/// Mean of the per-problem Pass@k values.
pub fn aggregate_pass_at_k(outcomes: &[SampleOutcome], k: u64) -> Result<f64, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut sum = 0.0;
    for o in outcomes {
        sum += pass_at_k(o.n, o.c, k)?;
    }
    Ok(sum / outcomes.len() as f64)
}

/// Fraction of all sampled translations that compile.
pub fn cpass(outcomes: &[SampleOutcome]) -> Result<f64, MetricsError> {
    let n: u64 = outcomes.iter().map(|o| o.n).sum();
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    for o in outcomes {
        if o.compile_ok > o.n {
            return Err(MetricsError::BadCount { n: o.n, c: o.compile_ok });
        }
    }
    let ok: u64 = outcomes.iter().map(|o| o.compile_ok).sum();
    Ok(ok as f64 / n as f64)
}
