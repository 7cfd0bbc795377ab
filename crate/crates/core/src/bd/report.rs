use serde::Serialize;
use std::collections::BTreeMap;

use super::{bd_metric, bd_rate, bd_time, RdCurve};
use crate::domain::{
    resolution_switch_score, validate_ladder, ConfigSpace, EncodingOutcome, Ladder, QualityMetric, SegmentFeatures,
};
use crate::environment::{Environment, MeasuredPoint};
use crate::{io, Error, Result};

pub const REPORT_HEADER: [&str; 9] = [
    "segment_id",
    "bd_rate_pct",
    "bd_metric",
    "bd_entime_s",
    "bd_detime_s",
    "switch_A",
    "switch_B",
    "violations_A",
    "violations_B",
];

/// One comparison row, B measured against A. BD values are `None` when a
/// curve is too degenerate to interpolate (fewer than four distinct
/// points, or no overlap). Violation columns are the share of rungs that
/// break the bitrate cap or quality monotonicity on measured outcomes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub segment_id: String,
    pub bd_rate_pct: Option<f64>,
    pub bd_metric: Option<f64>,
    pub bd_entime_s: Option<f64>,
    pub bd_detime_s: Option<f64>,
    pub switch_a: f64,
    pub switch_b: f64,
    pub violations_a: f64,
    pub violations_b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub metric: QualityMetric,
    pub rows: Vec<ReportRow>,
    pub mean: ReportRow,
    /// Share of rungs violating constraints on the ladders' own predicted
    /// outcomes.
    pub predicted_violations_a: f64,
    pub predicted_violations_b: f64,
    /// Points lifted by the monotone repair of measured quality curves.
    pub repairs_a: usize,
    pub repairs_b: usize,
}

impl ComparisonReport {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        io::csv_bytes_with_header(&REPORT_HEADER, self.rows.iter().chain(std::iter::once(&self.mean)))
    }
}

struct Measured {
    ladder: Ladder,
    points: Vec<MeasuredPoint>,
}

fn measure(env: &dyn Environment, seg: &SegmentFeatures, ladder: &Ladder, metric: QualityMetric) -> Result<Measured> {
    let points = ladder
        .rungs
        .iter()
        .map(|r| env.measure_point(seg, r.action()))
        .collect::<Result<Vec<_>>>()?;
    let mut measured = ladder.clone();
    for (r, p) in measured.rungs.iter_mut().zip(&points) {
        r.predicted = EncodingOutcome {
            enc_time_s: p.enc_time_s,
            ..p.outcome(metric)
        };
    }
    Ok(Measured {
        ladder: measured,
        points,
    })
}

fn violation_rate(ladder: &Ladder, space: &ConfigSpace) -> f64 {
    validate_ladder(ladder, space).len() as f64 / ladder.rungs.len().max(1) as f64
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn mean_of(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn curve(points: &[MeasuredPoint], value: impl Fn(&MeasuredPoint) -> f64, merge: fn(&[f64]) -> f64) -> Result<RdCurve> {
    let pts: Vec<(f64, f64)> = points.iter().map(|p| (p.bitrate_kbps, value(p))).collect();
    RdCurve::from_unsorted(&pts, merge)
}

/// Compare ladders B against A segment by segment on measured outcomes.
pub fn compare_ladders(
    env: &dyn Environment,
    segments: &[SegmentFeatures],
    a: &[Ladder],
    b: &[Ladder],
    metric: QualityMetric,
    space: &ConfigSpace,
) -> Result<ComparisonReport> {
    let index = |ls: &[Ladder]| -> Result<BTreeMap<String, Ladder>> {
        let mut m = BTreeMap::new();
        for l in ls {
            if m.insert(l.segment_id.clone(), l.clone()).is_some() {
                return Err(Error::Data(format!("segment {} appears twice", l.segment_id)));
            }
        }
        Ok(m)
    };
    let (ma, mb) = (index(a)?, index(b)?);
    if ma.is_empty() {
        return Err(Error::Data("no ladders to compare".into()));
    }
    if !ma.keys().eq(mb.keys()) {
        return Err(Error::Data("ladder sets cover different segments".into()));
    }
    let feats: BTreeMap<&str, &SegmentFeatures> = segments.iter().map(|s| (s.segment_id.as_str(), s)).collect();

    let mut rows = Vec::with_capacity(ma.len());
    let (mut pva, mut pvb, mut rep_a, mut rep_b) = (0.0, 0.0, 0, 0);
    for (id, la) in &ma {
        let lb = &mb[id];
        let tbs = |l: &Ladder| l.rungs.iter().map(|r| r.tb).collect::<Vec<_>>();
        if tbs(la) != tbs(lb) {
            return Err(Error::Data(format!("ladders for {id} use different target bitrates")));
        }
        let seg = feats
            .get(id.as_str())
            .ok_or_else(|| Error::UnknownSegment(id.clone()))?;
        let xa = measure(env, seg, la, metric)?;
        let xb = measure(env, seg, lb, metric)?;
        pva += violation_rate(la, space);
        pvb += violation_rate(lb, space);

        let q = |m: &Measured| curve(&m.points, |p| p.quality(metric), max_of);
        let enc = |m: &Measured| curve(&m.points, |p| p.enc_time_s, mean_of);
        let dec = |m: &Measured| curve(&m.points, |p| p.dec_time_s, mean_of);
        let (qa, qb) = (q(&xa), q(&xb));
        if let Ok(c) = &qa {
            rep_a += c.repaired().1;
        }
        if let Ok(c) = &qb {
            rep_b += c.repaired().1;
        }
        let both = |x: &Result<RdCurve>, y: &Result<RdCurve>, f: fn(&RdCurve, &RdCurve) -> Result<f64>| match (x, y) {
            (Ok(x), Ok(y)) => f(x, y).ok(),
            _ => None,
        };
        rows.push(ReportRow {
            segment_id: id.clone(),
            bd_rate_pct: both(&qa, &qb, bd_rate),
            bd_metric: both(&qa, &qb, bd_metric),
            bd_entime_s: both(&enc(&xa), &enc(&xb), bd_time),
            bd_detime_s: both(&dec(&xa), &dec(&xb), bd_time),
            switch_a: resolution_switch_score(la)?,
            switch_b: resolution_switch_score(lb)?,
            violations_a: violation_rate(&xa.ladder, space),
            violations_b: violation_rate(&xb.ladder, space),
        });
    }
    let n = rows.len() as f64;
    let avg_opt = |f: fn(&ReportRow) -> Option<f64>| {
        let v: Vec<f64> = rows.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| mean_of(&v))
    };
    let avg = |f: fn(&ReportRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let mean = ReportRow {
        segment_id: "mean".into(),
        bd_rate_pct: avg_opt(|r| r.bd_rate_pct),
        bd_metric: avg_opt(|r| r.bd_metric),
        bd_entime_s: avg_opt(|r| r.bd_entime_s),
        bd_detime_s: avg_opt(|r| r.bd_detime_s),
        switch_a: avg(|r| r.switch_a),
        switch_b: avg(|r| r.switch_b),
        violations_a: avg(|r| r.violations_a),
        violations_b: avg(|r| r.violations_b),
    };
    Ok(ComparisonReport {
        metric,
        rows,
        mean,
        predicted_violations_a: pva / n,
        predicted_violations_b: pvb / n,
        repairs_a: rep_a,
        repairs_b: rep_b,
    })
}
