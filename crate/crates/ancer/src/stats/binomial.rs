use crate::error::{Error, Result};
use statrs::function::beta::beta_reg;

/// One-sided Clopper-Pearson lower confidence bound: the largest p such that
/// observing at least `k` successes in `n` trials has probability at most
/// `alpha` under Binomial(n, p).
///
/// Uses P(X >= k) = I_p(k, n-k+1) (regularized incomplete beta) and bisects
/// to a bracket narrower than 1e-10, returning the bracket's lower end so the
/// reported bound never exceeds the exact one.
pub fn clopper_pearson_lower(k: u64, n: u64, alpha: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput(
            "confidence bound needs at least one trial".into(),
    ));
    }
    if k > n {
        return Err(Error::InvalidInput(format!(
            "successes {k} exceed trials {n}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "confidence level requires alpha in (0, 1), got {alpha}"
        )));
    }
    if k == 0 {
        return Ok(0.0);
    }
    let tail = |p: f64| beta_reg(k as f64, (n - k + 1) as f64, p);
    // tail(p) grows from 0 to 1; find where it crosses alpha.
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo >= 1e-10 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) > alpha {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(lo)
}
