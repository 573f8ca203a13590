use crate::error::{Error, Result};

/// Surrogate utility `f` of a variance share; must be strictly increasing
/// and strictly concave on `(0, ∞)`.
pub trait Utility: Sync {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
    fn name(&self) -> &str {
        "custom"
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LogUtility;

impl Utility for LogUtility {
    fn value(&self, x: f64) -> f64 {
        x.ln()
    }
    fn derivative(&self, x: f64) -> f64 {
        1.0 / x
    }
    fn name(&self) -> &str {
        "log"
    }
}

/// `x^p` for `p ∈ (0, 1)`.
#[derive(Debug, Clone, Copy)]
pub struct PowerUtility(pub f64);

impl Utility for PowerUtility {
    fn value(&self, x: f64) -> f64 {
        x.max(0.0).powf(self.0)
    }
    fn derivative(&self, x: f64) -> f64 {
        self.0 * x.powf(self.0 - 1.0)
    }
    fn name(&self) -> &str {
        "power"
    }
}

/// Numeric spot-check on a log grid over `(0, span]`: positive, decreasing
/// derivative and negative second differences.
pub fn check_concavity(u: &dyn Utility, span: f64) -> Result<()> {
    let points: Vec<f64> = (0..=40)
        .map(|i| span * 10f64.powf(-4.0 + 0.1 * i as f64))
        .collect();
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (da, db) = (u.derivative(a), u.derivative(b));
        let mid = 0.5 * (a + b);
        let second = u.value(a) + u.value(b) - 2.0 * u.value(mid);
        if !(da > 0.0 && db > 0.0 && db < da && second < 0.0 && u.value(b) > u.value(a)) {
            return Err(Error::InvalidArgument(format!(
                "utility '{}' is not strictly increasing and concave near x = {a:.3e}",
                u.name()
            )));
        }
    }
    Ok(())
}
