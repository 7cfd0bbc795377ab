//! Bjøntegaard-delta metrics over piecewise cubic Hermite interpolants, and
//! per-segment ladder comparison reports.

mod pchip;
mod report;

pub use pchip::{gauss_legendre, Pchip, GAUSS_NODES};
pub use report::{compare_ladders, ComparisonReport, ReportRow, REPORT_HEADER};

use crate::{Error, Result};

pub const MIN_POINTS: usize = 4;

/// Anchor points `(rate_kbps, value)` with strictly increasing rate.
#[derive(Debug, Clone, PartialEq)]
pub struct RdCurve {
    rates: Vec<f64>,
    values: Vec<f64>,
}

impl RdCurve {
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < MIN_POINTS {
            return Err(Error::Data(format!(
                "rate curve needs at least {MIN_POINTS} points, got {}",
                points.len()
            )));
        }
        if points
            .iter()
            .any(|(r, v)| !(r.is_finite() && *r > 0.0 && v.is_finite()))
        {
            return Err(Error::Data(
                "rate curve points must be finite with positive rate".into(),
            ));
        }
        if points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Data("rate curve rates must be strictly increasing".into()));
        }
        Ok(Self {
            rates: points.iter().map(|p| p.0).collect(),
            values: points.iter().map(|p| p.1).collect(),
        })
    }

    /// Sort by rate and merge points of equal rate with `merge`.
    pub fn from_unsorted(points: &[(f64, f64)], merge: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
        let mut i = 0;
        while i < pts.len() {
            let j = i + pts[i..].iter().take_while(|p| p.0 == pts[i].0).count();
            let vals: Vec<f64> = pts[i..j].iter().map(|p| p.1).collect();
            merged.push((pts[i].0, merge(&vals)));
            i = j;
        }
        Self::new(&merged)
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn is_monotone(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1])
    }

    /// Cumulative maximum along the value axis, and how many points changed.
    pub fn repaired(&self) -> (Self, usize) {
        let mut best = f64::NEG_INFINITY;
        let mut changed = 0;
        let values = self
            .values
            .iter()
            .map(|&v| {
                if v < best {
                    changed += 1;
                    best
                } else {
                    best = v;
                    v
                }
            })
            .collect();
        (
            Self {
                rates: self.rates.clone(),
                values,
            },
            changed,
        )
    }

    fn log_rates(&self) -> Vec<f64> {
        self.rates.iter().map(|r| r.log10()).collect()
    }

    /// Value as a function of log10(rate).
    pub fn value_interpolant(&self) -> Result<Pchip> {
        Pchip::new(&self.log_rates(), &self.values)
    }

    /// log10(rate) as a function of value, on the repaired curve. Points on
    /// a flat stretch collapse to the lowest rate reaching that value.
    pub fn rate_interpolant(&self) -> Result<Pchip> {
        let (rep, _) = self.repaired();
        let logs = rep.log_rates();
        let mut xs: Vec<f64> = Vec::with_capacity(rep.len());
        let mut ys: Vec<f64> = Vec::with_capacity(rep.len());
        for (v, lr) in rep.values.iter().zip(logs) {
            if xs.last() != Some(v) {
                xs.push(*v);
                ys.push(lr);
            }
        }
        if xs.len() < MIN_POINTS {
            return Err(Error::Data(format!(
                "rate curve has {} distinct values, needs {MIN_POINTS}",
                xs.len()
            )));
        }
        Pchip::new(&xs, &ys)
    }
}

fn overlap(a: (f64, f64), b: (f64, f64)) -> Result<(f64, f64)> {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    if hi <= lo {
        return Err(Error::Data("curves do not overlap".into()));
    }
    Ok((lo, hi))
}

fn mean_difference(reference: &Pchip, test: &Pchip) -> Result<f64> {
    let (lo, hi) = overlap(reference.domain(), test.domain())?;
    let diff = test.integrate(lo, hi) - reference.integrate(lo, hi);
    Ok(diff / (hi - lo))
}

/// Average bitrate change (percent) of `test` against `reference` at equal
/// quality; negative when the test curve needs fewer bits.
pub fn bd_rate(reference: &RdCurve, test: &RdCurve) -> Result<f64> {
    let d = mean_difference(&reference.rate_interpolant()?, &test.rate_interpolant()?)?;
    Ok((10f64.powf(d) - 1.0) * 100.0)
}

/// Average quality change of `test` against `reference` over their common
/// log-rate range. Both curves are monotone-repaired first.
pub fn bd_metric(reference: &RdCurve, test: &RdCurve) -> Result<f64> {
    mean_difference(
        &reference.repaired().0.value_interpolant()?,
        &test.repaired().0.value_interpolant()?,
    )
}

/// Average change of a time axis (encoding or decoding seconds) over the
/// common log-rate range. No repair: time need not be monotone in rate.
pub fn bd_time(reference: &RdCurve, test: &RdCurve) -> Result<f64> {
    mean_difference(&reference.value_interpolant()?, &test.value_interpolant()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(rates: &[f64], f: impl Fn(f64) -> f64) -> RdCurve {
        RdCurve::new(&rates.iter().map(|&r| (r, f(r))).collect::<Vec<_>>()).unwrap()
    }

    const RATES: [f64; 6] = [200.0, 500.0, 1200.0, 3000.0, 7000.0, 15000.0];

    fn psnr(r: f64) -> f64 {
        20.0 + 6.0 * r.log10()
    }

    #[test]
    fn identical_curves_give_zero() {
        let a = curve(&RATES, psnr);
        assert_eq!(bd_rate(&a, &a).unwrap(), 0.0);
        assert_eq!(bd_metric(&a, &a).unwrap(), 0.0);
        assert_eq!(bd_time(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn ten_percent_more_rate() {
        let a = curve(&RATES, psnr);
        let scaled: Vec<(f64, f64)> = RATES.iter().map(|&r| (1.1 * r, psnr(r))).collect();
        let b = RdCurve::new(&scaled).unwrap();
        assert!((bd_rate(&a, &b).unwrap() - 10.0).abs() < 0.01);
        assert!((bd_rate(&b, &a).unwrap() + 100.0 / 11.0).abs() < 0.01);
    }

    #[test]
    fn constant_offsets() {
        let a = curve(&RATES, psnr);
        let b = curve(&RATES, |r| psnr(r) + 1.0);
        assert!((bd_metric(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let t = curve(&RATES, |r| r / 1000.0);
        let t2 = curve(&RATES, |r| r / 1000.0 + 2.0);
        assert!((bd_time(&t, &t2).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn repair_is_cumulative_max_and_idempotent() {
        let c = curve(&RATES, |r| if r == 1200.0 { 0.0 } else { psnr(r) });
        let (rep, n) = c.repaired();
        assert_eq!(n, 1);
        assert_eq!(rep.values()[2], rep.values()[1]);
        let (again, m) = rep.repaired();
        assert_eq!((again, m), (rep, 0));
    }

    #[test]
    fn errors() {
        assert!(RdCurve::new(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]).is_err());
        assert!(RdCurve::new(&[(1.0, 1.0), (1.0, 2.0), (3.0, 3.0), (4.0, 4.0)]).is_err());
        let a = curve(&[100.0, 200.0, 300.0, 400.0], |r| r);
        let b = curve(&[1000.0, 2000.0, 3000.0, 4000.0], |r| r);
        assert!(bd_rate(&a, &b).is_err());
        assert!(bd_metric(&a, &b).is_err());
        let flat = curve(&RATES, |_| 30.0);
        assert!(bd_rate(&flat, &flat).is_err());
    }

    #[test]
    fn from_unsorted_merges_duplicates() {
        let c = RdCurve::from_unsorted(
            &[(300.0, 3.0), (100.0, 1.0), (200.0, 2.0), (200.0, 2.5), (400.0, 4.0)],
            |v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
        .unwrap();
        assert_eq!(c.rates(), &[100.0, 200.0, 300.0, 400.0]);
        assert_eq!(c.values()[1], 2.5);
    }
}
