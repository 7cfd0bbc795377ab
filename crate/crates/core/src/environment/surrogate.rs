//! Parametric stand-in for a real encoder/decoder.
//!
//! Rate is exponential in QP and linear in pixel rate, scaled by a content
//! complexity multiplier. Quality is a logistic curve in log2 bits-per-pixel
//! whose ceiling grows with resolution, so low resolutions win at low
//! bitrates and lose at high ones. Decoding time is affine in pixel count and
//! bitrate with a content-dependent per-pixel cost.

use serde::{Deserialize, Serialize};

use super::{Environment, MeasuredPoint};
use crate::domain::{pixel_count, Action, SegmentFeatures};
use crate::rng::{derive_seed, hash_str, unit_from_key};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    pub fps: f64,
    /// Bits per pixel at QP 0 for content with zero complexity.
    pub base_bpp: f64,
    /// Per-QP rate multiplier, in (0, 1).
    pub qp_base: f64,
    pub texture_gain: f64,
    pub motion_gain: f64,
    pub texture_ref: f64,
    pub motion_ref: f64,

    pub xpsnr_floor: f64,
    /// (resolution, ceiling dB), interpolated in log2(resolution).
    pub xpsnr_ceilings: Vec<(u32, f64)>,
    pub xpsnr_slope: f64,
    pub xpsnr_midpoint: f64,
    pub vmaf_ceilings: Vec<(u32, f64)>,
    pub vmaf_slope: f64,
    pub vmaf_midpoint: f64,
    /// Midpoint shift per doubling of resolution.
    pub midpoint_resolution_shift: f64,
    /// Texture reduces the effective bits-per-pixel seen by the quality curve.
    pub texture_quality_gain: f64,
    /// dB offset per unit of (l_y / 128 - 1).
    pub brightness_gain: f64,

    pub dec_per_pixel: f64,
    pub dec_per_kbps: f64,
    pub dec_offset: f64,
    pub dec_motion_gain: f64,
    pub dec_texture_gain: f64,
    pub enc_per_pixel: f64,
    pub enc_qp_gain: f64,
    /// Relative half-width of the deterministic timing jitter.
    pub time_jitter: f64,
    pub noise_seed: u64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        Self {
            fps: 60.0,
            // 0.0024 bpp at QP 50, rate halves every 6 QP.
            base_bpp: 0.0024 * 2f64.powf(50.0 / 6.0),
            qp_base: 2f64.powf(-1.0 / 6.0),
            texture_gain: 0.5,
            motion_gain: 0.4,
            texture_ref: 100.0,
            motion_ref: 50.0,
            xpsnr_floor: 24.0,
            xpsnr_ceilings: vec![
                (360, 36.0),
                (540, 39.5),
                (720, 42.5),
                (1080, 46.0),
                (1440, 48.5),
                (2160, 51.0),
            ],
            xpsnr_slope: 1.1,
            xpsnr_midpoint: -6.3,
            vmaf_ceilings: vec![
                (360, 72.0),
                (540, 82.0),
                (720, 88.0),
                (1080, 95.0),
                (1440, 98.0),
                (2160, 100.0),
            ],
            vmaf_slope: 0.9,
            vmaf_midpoint: -8.2,
            midpoint_resolution_shift: 0.4,
            texture_quality_gain: 0.35,
            brightness_gain: 0.5,
            dec_per_pixel: 5e-6,
            dec_per_kbps: 2e-4,
            dec_offset: 0.3,
            dec_motion_gain: 0.3,
            dec_texture_gain: 0.2,
            enc_per_pixel: 1.2e-5,
            enc_qp_gain: 0.04,
            time_jitter: 0.03,
            noise_seed: 0,
        }
    }
}

impl SurrogateParams {
    pub fn validate(&self) -> Result<()> {
        let scalars = [
            self.fps,
            self.base_bpp,
            self.qp_base,
            self.texture_gain,
            self.motion_gain,
            self.texture_ref,
            self.motion_ref,
            self.xpsnr_floor,
            self.xpsnr_slope,
            self.xpsnr_midpoint,
            self.vmaf_slope,
            self.vmaf_midpoint,
            self.midpoint_resolution_shift,
            self.texture_quality_gain,
            self.brightness_gain,
            self.dec_per_pixel,
            self.dec_per_kbps,
            self.dec_offset,
            self.dec_motion_gain,
            self.dec_texture_gain,
            self.enc_per_pixel,
            self.enc_qp_gain,
            self.time_jitter,
        ];
        if scalars.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("surrogate coefficients must be finite".into()));
        }
        if !(self.qp_base > 0.0 && self.qp_base < 1.0) {
            return Err(Error::Config("surrogate qp_base must lie in (0, 1)".into()));
        }
        if self.fps <= 0.0 || self.base_bpp <= 0.0 || self.texture_ref <= 0.0 || self.motion_ref <= 0.0 {
            return Err(Error::Config("surrogate scales must be positive".into()));
        }
        if self.texture_gain < 0.0 || self.motion_gain < 0.0 || self.xpsnr_slope <= 0.0 || self.vmaf_slope <= 0.0 {
            return Err(Error::Config(
                "surrogate gains must be nonnegative, slopes positive".into(),
            ));
        }
        if self.dec_per_pixel <= 0.0 || self.dec_offset <= 0.0 || self.dec_per_kbps < 0.0 {
            return Err(Error::Config("decoding-time coefficients must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.time_jitter) {
            return Err(Error::Config("time_jitter must lie in [0, 0.5)".into()));
        }
        for table in [&self.xpsnr_ceilings, &self.vmaf_ceilings] {
            if table.is_empty() || table.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(Error::Config(
                    "ceiling tables must be non-empty with increasing resolutions".into(),
                ));
            }
        }
        if self.xpsnr_ceilings.iter().any(|&(_, c)| c <= self.xpsnr_floor) {
            return Err(Error::Config("xpsnr ceilings must exceed the floor".into()));
        }
        if self.vmaf_ceilings.iter().any(|&(_, c)| !(0.0..=100.0).contains(&c)) {
            return Err(Error::Config("vmaf ceilings must lie in [0, 100]".into()));
        }
        Ok(())
    }
}

/// Piecewise-linear in log2(resolution), flat outside the table.
fn ceiling(table: &[(u32, f64)], resolution: u32) -> f64 {
    let x = f64::from(resolution).log2();
    let first = table[0];
    let last = table[table.len() - 1];
    if resolution <= first.0 {
        return first.1;
    }
    if resolution >= last.0 {
        return last.1;
    }
    for w in table.windows(2) {
        let (r0, c0) = w[0];
        let (r1, c1) = w[1];
        if resolution <= r1 {
            let x0 = f64::from(r0).log2();
            let x1 = f64::from(r1).log2();
            return c0 + (c1 - c0) * (x - x0) / (x1 - x0);
        }
    }
    last.1
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    params: SurrogateParams,
}

impl Surrogate {
    pub fn new(params: SurrogateParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &SurrogateParams {
        &self.params
    }

    fn normalized(&self, seg: &SegmentFeatures) -> (f64, f64) {
        (seg.e_y / self.params.texture_ref, seg.h / self.params.motion_ref)
    }

    fn complexity(&self, seg: &SegmentFeatures) -> f64 {
        let (e, h) = self.normalized(seg);
        1.0 + self.params.texture_gain * e + self.params.motion_gain * h
    }

    pub fn bitrate_kbps(&self, seg: &SegmentFeatures, action: Action) -> f64 {
        let p = &self.params;
        p.base_bpp
            * pixel_count(action.resolution)
            * p.fps
            * p.qp_base.powf(f64::from(action.qp))
            * self.complexity(seg)
            / 1000.0
    }

    /// log2 of the content-adjusted bits-per-pixel, shifted by resolution.
    fn quality_axis(&self, seg: &SegmentFeatures, action: Action) -> f64 {
        let p = &self.params;
        let (e, _) = self.normalized(seg);
        let bpp = p.base_bpp * p.qp_base.powf(f64::from(action.qp)) / (1.0 + p.texture_quality_gain * e);
        bpp.log2() + p.midpoint_resolution_shift * (f64::from(action.resolution) / 360.0).log2()
    }

    pub fn xpsnr_db(&self, seg: &SegmentFeatures, action: Action) -> f64 {
        let p = &self.params;
        let x = self.quality_axis(seg, action);
        let top = ceiling(&p.xpsnr_ceilings, action.resolution);
        p.xpsnr_floor
            + (top - p.xpsnr_floor) * logistic(p.xpsnr_slope * (x - p.xpsnr_midpoint))
            + p.brightness_gain * (seg.l_y / 128.0 - 1.0)
    }

    pub fn vmaf(&self, seg: &SegmentFeatures, action: Action) -> f64 {
        let p = &self.params;
        let x = self.quality_axis(seg, action);
        let top = ceiling(&p.vmaf_ceilings, action.resolution);
        (top * logistic(p.vmaf_slope * (x - p.vmaf_midpoint))).clamp(0.0, 100.0)
    }

    fn jitter(&self, seg: &SegmentFeatures, action: Action, channel: u64) -> f64 {
        let key = derive_seed(
            self.params.noise_seed,
            hash_str(&seg.segment_id) ^ (u64::from(action.resolution) << 32) ^ (u64::from(action.qp) << 8) ^ channel,
        );
        1.0 + self.params.time_jitter * (2.0 * unit_from_key(key) - 1.0)
    }

    pub fn dec_time_s(&self, seg: &SegmentFeatures, action: Action) -> f64 {
        let p = &self.params;
        let (e, h) = self.normalized(seg);
        let per_pixel = p.dec_per_pixel * (1.0 + p.dec_motion_gain * h + p.dec_texture_gain * e);
        let t =
            per_pixel * pixel_count(action.resolution) + p.dec_per_kbps * self.bitrate_kbps(seg, action) + p.dec_offset;
        t * self.jitter(seg, action, 1)
    }

    pub fn enc_time_s(&self, seg: &SegmentFeatures, action: Action) -> f64 {
        let p = &self.params;
        let qp_span = (50.0 - f64::from(action.qp)).max(0.0);
        let t =
            p.enc_per_pixel * pixel_count(action.resolution) * self.complexity(seg) * (1.0 + p.enc_qp_gain * qp_span);
        t * self.jitter(seg, action, 2)
    }
}

impl Environment for Surrogate {
    fn measure_point(&self, segment: &SegmentFeatures, action: Action) -> Result<MeasuredPoint> {
        Ok(MeasuredPoint {
            bitrate_kbps: self.bitrate_kbps(segment, action),
            xpsnr_db: self.xpsnr_db(segment, action),
            vmaf: self.vmaf(segment, action),
            dec_time_s: self.dec_time_s(segment, action),
            enc_time_s: self.enc_time_s(segment, action),
        })
    }
}
