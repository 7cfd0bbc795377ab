use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

use super::{Environment, MeasuredPoint};
use crate::domain::{Action, ConfigSpace, SegmentFeatures};
use crate::io::{csv_bytes, read_csv, read_csv_from, write_atomic};
use crate::{Error, Result};

/// One row of the measurement CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRow {
    pub segment_id: String,
    pub resolution: u32,
    pub qp: u32,
    pub bitrate_kbps: f64,
    pub xpsnr_db: f64,
    pub vmaf: f64,
    pub dec_time_s: f64,
    pub enc_time_s: f64,
}

/// One row of the features CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub segment_id: String,
    pub e_y: f64,
    pub h: f64,
    pub l_y: f64,
}

/// Replayed measurements over a complete (segment × resolution × QP) grid.
///
/// Completeness is checked at construction; lookups never miss.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementLog {
    space: ConfigSpace,
    segments: Vec<SegmentFeatures>,
    index: HashMap<String, usize>,
    // points[segment][action_index]
    points: Vec<Vec<MeasuredPoint>>,
}

impl MeasurementLog {
    pub fn from_rows(space: ConfigSpace, features: Vec<FeatureRow>, rows: Vec<MeasurementRow>) -> Result<Self> {
        let mut segments = Vec::with_capacity(features.len());
        let mut index = HashMap::with_capacity(features.len());
        for f in features {
            let seg = SegmentFeatures::new(f.segment_id, f.e_y, f.h, f.l_y)?;
            if index.insert(seg.segment_id.clone(), segments.len()).is_some() {
                return Err(Error::Data(format!(
                    "duplicate features for segment `{}`",
                    seg.segment_id
                )));
            }
            segments.push(seg);
        }
        let n_actions = space.n_actions();
        let mut slots: Vec<Vec<Option<MeasuredPoint>>> = vec![vec![None; n_actions]; segments.len()];
        for row in rows {
            let &s = index.get(&row.segment_id).ok_or_else(|| {
                Error::Data(format!(
                    "measurements for segment `{}` without features",
                    row.segment_id
                ))
            })?;
            let action = Action {
                resolution: row.resolution,
                qp: row.qp,
            };
            let a = space.action_index(action).ok_or_else(|| {
                Error::Data(format!(
                    "segment `{}`: {action} lies outside the configured grid",
                    row.segment_id
                ))
            })?;
            let point = MeasuredPoint {
                bitrate_kbps: row.bitrate_kbps,
                xpsnr_db: row.xpsnr_db,
                vmaf: row.vmaf,
                dec_time_s: row.dec_time_s,
                enc_time_s: row.enc_time_s,
            };
            validate_point(&row.segment_id, action, &point)?;
            if slots[s][a].replace(point).is_some() {
                return Err(Error::Data(format!(
                    "segment `{}`: duplicate row for {action}",
                    row.segment_id
                )));
            }
        }
        let mut points = Vec::with_capacity(segments.len());
        for (seg, grid) in segments.iter().zip(slots) {
            let mut complete = Vec::with_capacity(n_actions);
            for (a, p) in grid.into_iter().enumerate() {
                match p {
                    Some(p) => complete.push(p),
                    None => {
                        return Err(Error::Data(format!(
                            "segment `{}`: missing grid point {}",
                            seg.segment_id,
                            space.action(a)
                        )))
                    }
                }
            }
            points.push(complete);
        }
        Ok(Self {
            space,
            segments,
            index,
            points,
        })
    }

    /// Build a log by measuring every grid point of every segment.
    pub fn from_environment(space: ConfigSpace, segments: Vec<SegmentFeatures>, env: &dyn Environment) -> Result<Self> {
        let mut index = HashMap::with_capacity(segments.len());
        let mut points = Vec::with_capacity(segments.len());
        for (i, seg) in segments.iter().enumerate() {
            seg.validate()?;
            if index.insert(seg.segment_id.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate segment `{}`", seg.segment_id)));
            }
            let grid = space
                .actions()
                .map(|a| {
                    let p = env.measure_point(seg, a)?;
                    validate_point(&seg.segment_id, a, &p)?;
                    Ok(p)
                })
                .collect::<Result<Vec<_>>>()?;
            points.push(grid);
        }
        Ok(Self {
            space,
            segments,
            index,
            points,
        })
    }

    pub fn load(space: ConfigSpace, features_csv: &Path, measurements_csv: &Path) -> Result<Self> {
        Self::from_rows(space, read_csv(features_csv)?, read_csv(measurements_csv)?)
    }

    pub fn load_from_readers(
        space: ConfigSpace,
        features: impl std::io::Read,
        measurements: impl std::io::Read,
    ) -> Result<Self> {
        Self::from_rows(space, read_csv_from(features)?, read_csv_from(measurements)?)
    }

    pub fn space(&self) -> &ConfigSpace {
        &self.space
    }

    pub fn segments(&self) -> &[SegmentFeatures] {
        &self.segments
    }

    pub fn segment(&self, id: &str) -> Option<&SegmentFeatures> {
        self.index.get(id).map(|&i| &self.segments[i])
    }

    /// Number of stored grid points.
    pub fn len(&self) -> usize {
        self.points.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Measurements of one segment, indexed by action index.
    pub fn grid(&self, segment_id: &str) -> Result<&[MeasuredPoint]> {
        self.index
            .get(segment_id)
            .map(|&i| self.points[i].as_slice())
            .ok_or_else(|| Error::UnknownSegment(segment_id.to_string()))
    }

    pub fn points(&self) -> impl Iterator<Item = (&SegmentFeatures, Action, &MeasuredPoint)> {
        self.segments.iter().zip(&self.points).flat_map(move |(seg, grid)| {
            grid.iter()
                .enumerate()
                .map(move |(a, p)| (seg, self.space.action(a), p))
        })
    }

    /// Restrict to a subset of segments, preserving the given order.
    pub fn subset(&self, ids: &[String]) -> Result<Self> {
        let mut segments = Vec::with_capacity(ids.len());
        let mut points = Vec::with_capacity(ids.len());
        let mut index = HashMap::with_capacity(ids.len());
        for id in ids {
            let &i = self.index.get(id).ok_or_else(|| Error::UnknownSegment(id.clone()))?;
            index.insert(id.clone(), segments.len());
            segments.push(self.segments[i].clone());
            points.push(self.points[i].clone());
        }
        Ok(Self {
            space: self.space.clone(),
            segments,
            index,
            points,
        })
    }

    pub fn feature_rows(&self) -> Vec<FeatureRow> {
        self.segments
            .iter()
            .map(|s| FeatureRow {
                segment_id: s.segment_id.clone(),
                e_y: s.e_y,
                h: s.h,
                l_y: s.l_y,
            })
            .collect()
    }

    pub fn measurement_rows(&self) -> Vec<MeasurementRow> {
        self.points()
            .map(|(seg, a, p)| MeasurementRow {
                segment_id: seg.segment_id.clone(),
                resolution: a.resolution,
                qp: a.qp,
                bitrate_kbps: p.bitrate_kbps,
                xpsnr_db: p.xpsnr_db,
                vmaf: p.vmaf,
                dec_time_s: p.dec_time_s,
                enc_time_s: p.enc_time_s,
            })
            .collect()
    }

    pub fn features_csv(&self) -> Result<Vec<u8>> {
        csv_bytes(self.feature_rows())
    }

    pub fn measurements_csv(&self) -> Result<Vec<u8>> {
        csv_bytes(self.measurement_rows())
    }

    pub fn save(&self, features_csv: &Path, measurements_csv: &Path) -> Result<()> {
        let f = self.features_csv()?;
        let m = self.measurements_csv()?;
        write_atomic(features_csv, &f)?;
        write_atomic(measurements_csv, &m)
    }
}

fn validate_point(segment_id: &str, action: Action, p: &MeasuredPoint) -> Result<()> {
    let ok = p.bitrate_kbps.is_finite()
        && p.bitrate_kbps > 0.0
        && p.dec_time_s.is_finite()
        && p.dec_time_s > 0.0
        && p.enc_time_s.is_finite()
        && p.enc_time_s >= 0.0
        && p.xpsnr_db.is_finite()
        && p.vmaf.is_finite()
        && (0.0..=100.0).contains(&p.vmaf);
    if ok {
        Ok(())
    } else {
        Err(Error::Data(format!(
            "segment `{segment_id}` {action}: measurement out of range {p:?}"
        )))
    }
}

impl Environment for MeasurementLog {
    fn measure_point(&self, segment: &SegmentFeatures, action: Action) -> Result<MeasuredPoint> {
        let grid = self.grid(&segment.segment_id)?;
        let a = self
            .space
            .action_index(action)
            .ok_or_else(|| Error::Data(format!("{action} lies outside the configured grid")))?;
        Ok(grid[a])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FEATURES: &str = "segment_id,e_y,h,l_y\nA,10,2,100\n";

    fn small_space() -> ConfigSpace {
        ConfigSpace::new(vec![360, 720], vec![20, 30], vec![500.0]).unwrap()
    }

    fn rows_csv(skip: Option<(u32, u32)>) -> String {
        let mut s = String::from("segment_id,resolution,qp,bitrate_kbps,xpsnr_db,vmaf,dec_time_s,enc_time_s\n");
        for r in [360, 720] {
            for q in [20, 30] {
                if skip == Some((r, q)) {
                    continue;
                }
                s.push_str(&format!(
                    "A,{r},{q},{},{},{},{},{}\n",
                    r * 10 + q,
                    30 + q,
                    50 + q,
                    1.5,
                    9.0
                ));
            }
        }
        s
    }

    #[test]
    fn lookup_returns_ingested_row() {
        let log =
            MeasurementLog::load_from_readers(small_space(), FEATURES.as_bytes(), rows_csv(None).as_bytes()).unwrap();
        assert_eq!(log.len(), 4);
        let seg = log.segment("A").unwrap().clone();
        let p = log
            .measure_point(
                &seg,
                Action {
                    resolution: 720,
                    qp: 30,
                },
            )
            .unwrap();
        assert_eq!(p.bitrate_kbps, 7230.0);
        assert_eq!(p.xpsnr_db, 60.0);
        assert_eq!(p.vmaf, 80.0);
        assert_eq!(p.dec_time_s, 1.5);
        assert_eq!(p.enc_time_s, 9.0);
        assert_eq!(
            p,
            log.measure_point(
                &seg,
                Action {
                    resolution: 720,
                    qp: 30
                }
            )
            .unwrap()
        );
    }

    #[test]
    fn incomplete_grid_rejected_at_load() {
        let err =
            MeasurementLog::load_from_readers(small_space(), FEATURES.as_bytes(), rows_csv(Some((720, 20))).as_bytes())
                .unwrap_err();
        assert!(err.to_string().contains("missing grid point"), "{err}");
    }

    #[test]
    fn unknown_segment_is_an_error() {
        let log =
            MeasurementLog::load_from_readers(small_space(), FEATURES.as_bytes(), rows_csv(None).as_bytes()).unwrap();
        let other = SegmentFeatures::new("B", 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            log.measure_point(
                &other,
                Action {
                    resolution: 360,
                    qp: 20
                }
            ),
            Err(Error::UnknownSegment(_))
        ));
    }

    #[test]
    fn duplicate_and_out_of_grid_rows_rejected() {
        let mut dup = rows_csv(None);
        dup.push_str("A,360,20,1,1,1,1,1\n");
        assert!(MeasurementLog::load_from_readers(small_space(), FEATURES.as_bytes(), dup.as_bytes()).is_err());
        let mut extra = rows_csv(None);
        extra.push_str("A,1080,20,1,1,1,1,1\n");
        assert!(MeasurementLog::load_from_readers(small_space(), FEATURES.as_bytes(), extra.as_bytes()).is_err());
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let log =
            MeasurementLog::load_from_readers(small_space(), FEATURES.as_bytes(), rows_csv(None).as_bytes()).unwrap();
        let f = log.features_csv().unwrap();
        let m = log.measurements_csv().unwrap();
        let back = MeasurementLog::load_from_readers(small_space(), f.as_slice(), m.as_slice()).unwrap();
        assert_eq!(back, log);
        let header = String::from_utf8(m).unwrap();
        assert!(header.starts_with("segment_id,resolution,qp,bitrate_kbps,xpsnr_db,vmaf,dec_time_s,enc_time_s\n"));
    }
}
