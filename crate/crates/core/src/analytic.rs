//! Closed-form BER of square M-QAM over Rayleigh fading with `K`
//! co-channel interferers, for a receiver that neither cancels nor
//! coordinates.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticParams {
    /// Square QAM order (4, 16, 64, ...).
    pub order: u32,
    /// One SIR per interferer in dB; the interferer count is the length.
    pub sir_db: Vec<f64>,
    pub ebno_db: f64,
}

impl AnalyticParams {
    pub fn qpsk(sir_db: Vec<f64>, ebno_db: f64) -> Self {
        AnalyticParams { order: 4, sir_db, ebno_db }
    }

    pub fn interferers(&self) -> usize {
        self.sir_db.len()
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn sqrt_order(order: u32) -> Option<u32> {
    let r = f64::from(order).sqrt().round() as u32;
    (order >= 4 && r * r == order).then_some(r)
}

/// Evaluates
///
/// ```text
/// Pe = 1/log2(√M) · (1 − 1/√M) · [1 − 1/√((M−1)/3 · (Σ 1/SIR_j + 2/(log2(M)·Eb/N0)) + 1)]
/// ```
///
/// with SIR and Eb/N0 converted from dB. `ebno_db = +inf` and
/// `sir_db = +inf` entries are the noiseless and silent-interferer limits.
pub fn ber_closed_form(p: &AnalyticParams) -> Result<f64> {
    let root = sqrt_order(p.order).ok_or(Error::UnsupportedModulation(p.order))?;
    if p.ebno_db.is_nan() || p.ebno_db == f64::NEG_INFINITY {
        return Err(Error::Domain(format!("Eb/N0 must be > -inf dB, got {}", p.ebno_db)));
    }
    let mut inv_sir = 0.0;
    for &s in &p.sir_db {
        let lin = db_to_linear(s);
        if lin == 0.0 || s.is_nan() {
            return Err(Error::Domain(format!("SIR of {s} dB is zero in linear scale")));
        }
        inv_sir += 1.0 / lin;
    }

    let m = f64::from(p.order);
    let bits = m.log2();
    let gamma = db_to_linear(p.ebno_db);
    let disturbance = inv_sir + 2.0 / (bits * gamma);
    let inner = (m - 1.0) / 3.0 * disturbance + 1.0;
    let sqrt_m = f64::from(root);
    Ok(1.0 / sqrt_m.log2() * (1.0 - 1.0 / sqrt_m) * (1.0 - 1.0 / inner.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rayleigh_qpsk(gamma: f64) -> f64 {
        0.5 * (1.0 - (gamma / (1.0 + gamma)).sqrt())
    }

    #[test]
    fn noiseless_limit() {
        let p = AnalyticParams::qpsk(vec![], f64::INFINITY);
        assert_eq!(ber_closed_form(&p).unwrap(), 0.0);
    }

    #[test]
    fn zero_db_matches_rayleigh() {
        let p = AnalyticParams::qpsk(vec![], 0.0);
        let v = ber_closed_form(&p).unwrap();
        assert!((v - 0.5 * (1.0 - std::f64::consts::FRAC_1_SQRT_2)).abs() < 1e-15);
        assert!((v - 0.14645).abs() < 1e-5);
    }

    #[test]
    fn single_interferer_value() {
        // hand evaluation: 0.5 · (1 − 1/√(1 + 0.1 + 1/10^1.8))
        let p = AnalyticParams::qpsk(vec![10.0], 18.0);
        let v = ber_closed_form(&p).unwrap();
        assert!((v - 2.6667e-2).abs() < 5e-6, "{v}");
    }

    #[test]
    fn reduces_to_rayleigh_formula() {
        for i in 0..20 {
            let gamma = 10f64.powf(-2.0 + 6.0 * i as f64 / 19.0);
            let p = AnalyticParams::qpsk(vec![], 10.0 * gamma.log10());
            let v = ber_closed_form(&p).unwrap();
            assert!((v - rayleigh_qpsk(gamma)).abs() < 1e-12);
        }
    }

    #[test]
    fn monotone_and_bounded() {
        let f = |sir: Vec<f64>, eb: f64| ber_closed_form(&AnalyticParams::qpsk(sir, eb)).unwrap();
        let mut last = 1.0;
        for eb in (-10..=40).map(f64::from) {
            let v = f(vec![10.0, 5.0], eb);
            assert!(v < last && v > 0.0 && v <= 0.5);
            last = v;
        }
        assert!(f(vec![10.0], 18.0) > f(vec![12.0], 18.0));
        assert!(f(vec![10.0, 20.0], 18.0) > f(vec![10.0], 18.0));
        // supremum for M = 16 is (1/2)(1 - 1/4)
        let v = ber_closed_form(&AnalyticParams { order: 16, sir_db: vec![0.0], ebno_db: 0.0 }).unwrap();
        assert!(v > 0.0 && v <= 0.375);
    }

    #[test]
    fn domain_errors() {
        let p = AnalyticParams::qpsk(vec![f64::NEG_INFINITY], 10.0);
        assert!(matches!(ber_closed_form(&p), Err(Error::Domain(_))));
        let p = AnalyticParams { order: 8, sir_db: vec![], ebno_db: 10.0 };
        assert_eq!(ber_closed_form(&p), Err(Error::UnsupportedModulation(8)));
        let p = AnalyticParams { order: 1, sir_db: vec![], ebno_db: 10.0 };
        assert_eq!(ber_closed_form(&p), Err(Error::UnsupportedModulation(1)));
    }

    #[test]
    fn silent_interferer_is_no_interferer() {
        let a = ber_closed_form(&AnalyticParams::qpsk(vec![f64::INFINITY], 7.0)).unwrap();
        let b = ber_closed_form(&AnalyticParams::qpsk(vec![], 7.0)).unwrap();
        assert_eq!(a, b);
    }
}
