//! Zero-inflated beta density and link functions.

use crate::error::{Error, Result};
use crate::special::{inv_logit, ln_gamma};

/// log p(y | pi, mu, phi): point mass `pi` at zero, Beta(mu·phi, (1−mu)·phi) otherwise.
pub fn zib_logdensity(y: f64, pi: f64, mu: f64, phi: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&y) {
        return Err(Error::Domain(format!("outcome {y} outside [0, 1)")));
    }
    if !(pi > 0.0 && pi < 1.0 && mu > 0.0 && mu < 1.0 && phi > 0.0) {
        return Err(Error::Domain(format!("invalid parameters pi={pi} mu={mu} phi={phi}")));
    }
    if y == 0.0 {
        return Ok(pi.ln());
    }
    let a = mu * phi;
    let b = (1.0 - mu) * phi;
    Ok((1.0 - pi).ln() + ln_gamma(phi) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * y.ln() + (b - 1.0) * (-y).ln_1p())
}

/// Mean, zero probability and precision from the three linear predictors.
pub fn links(eta_mu: f64, eta_zi: f64, eta_phi: f64) -> (f64, f64, f64) {
    (inv_logit(eta_mu), inv_logit(eta_zi), eta_phi.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use statrs::distribution::{Beta, Continuous};

    #[test]
    fn examples() {
        assert_abs_diff_eq!(zib_logdensity(0.0, 0.2, 0.4, 3.0).unwrap(), 0.2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(zib_logdensity(0.5, 0.2, 0.5, 2.0).unwrap(), 0.8f64.ln(), epsilon = 1e-12);
        assert!(zib_logdensity(1.0, 0.2, 0.5, 2.0).is_err());
        assert!(zib_logdensity(-0.1, 0.2, 0.5, 2.0).is_err());
        assert_eq!(links(0.0, 0.0, 0.0), (0.5, 0.5, 1.0));
    }

    #[test]
    fn matches_statrs_beta() {
        for &(y, mu, phi) in &[(0.3, 0.6, 5.0), (0.01, 0.2, 0.7), (0.97, 0.9, 40.0)] {
            let beta = Beta::new(mu * phi, (1.0 - mu) * phi).unwrap();
            let want = 0.7f64.ln() + beta.ln_pdf(y);
            assert_abs_diff_eq!(zib_logdensity(y, 0.3, mu, phi).unwrap(), want, epsilon = 1e-10);
        }
    }
}
