//! Saleh-Valenzuela MISO channel generation and dataset persistence.
//!
//! A channel is a sum of `L` planar paths leaving a half-wave spaced uniform
//! linear array. The first path is the line-of-sight component. The stored
//! vector `h` is the column whose conjugate transpose is the channel row
//! `h^H = sqrt(N_t / L) * sum_l alpha_l * a_t(phi_l)^H`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::{self, HashWriter, Payload};
use crate::error::{Error, Result};
use crate::rng::{self, complex_gaussian};

pub const DATASET_MAGIC: &[u8; 8] = b"BFNNDS1\n";
pub const DATASET_VERSION: u32 = 1;
pub const CHANNEL_RECORD: &str = "CHN1";

/// Relative tolerance used when checking stored vectors against their path reconstruction.
pub const RECONSTRUCTION_TOL: f64 = 1e-12;

/// Array response `a_t(phi)` of an `n_t`-element half-wave spaced ULA.
///
/// Element `k` is `exp(j*pi*k*sin(phi)) / sqrt(n_t)`, so the vector has unit norm.
pub fn array_response(aod: f64, n_t: usize) -> Result<Vec<Complex64>> {
    if n_t == 0 {
        return Err(Error::domain("array needs at least one antenna"));
    }
    if !(-FRAC_PI_2..=FRAC_PI_2).contains(&aod) {
        return Err(Error::domain(format!("angle {aod} outside [-pi/2, pi/2]")));
    }
    Ok(steering(aod.sin(), n_t))
}

/// Array response parameterised by spatial frequency `u = sin(phi)`.
pub(crate) fn steering(u: f64, n_t: usize) -> Vec<Complex64> {
    let norm = 1.0 / (n_t as f64).sqrt();
    (0..n_t)
        .map(|k| Complex64::from_polar(norm, PI * k as f64 * u))
        .collect()
}

/// Inner product `a^H b`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub gain: Complex64,
    /// Azimuth angle of departure in radians, within `[-pi/2, pi/2]`.
    pub aod: f64,
    pub is_los: bool,
}

/// `h = sqrt(n_t / L) * sum_l conj(alpha_l) * a_t(phi_l)` for `L = paths.len()`.
pub fn reconstruct(paths: &[(f64, Complex64)], n_t: usize) -> Vec<Complex64> {
    let mut h = vec![Complex64::new(0.0, 0.0); n_t];
    if paths.is_empty() {
        return h;
    }
    let scale = (n_t as f64 / paths.len() as f64).sqrt();
    for &(aod, gain) in paths {
        let a = steering(aod.sin(), n_t);
        let c = gain.conj() * scale;
        for (hk, ak) in h.iter_mut().zip(&a) {
            *hk += c * ak;
        }
    }
    h
}

/// Relative distance `||a - b|| / ||b||`, or the absolute distance if `b` is zero.
pub fn relative_error(a: &[Complex64], b: &[Complex64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let scale = norm(b);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// How the per-sample SNR is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SnrRule {
    /// SNR in dB uniform on `[min_db, max_db]`.
    UniformDb {
        min_db: f64,
        max_db: f64,
    },
    FixedDb {
        db: f64,
    },
}

impl Default for SnrRule {
    fn default() -> Self {
        SnrRule::UniformDb {
            min_db: -20.0,
            max_db: 20.0,
        }
    }
}

/// Generation parameters for a channel dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub n_t: usize,
    pub l_paths: usize,
    pub los_gain_variance: f64,
    pub nlos_gain_variance: f64,
    pub aod_min: f64,
    pub aod_max: f64,
    pub snr: SnrRule,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            n_t: 64,
            l_paths: 3,
            los_gain_variance: 1.0,
            nlos_gain_variance: 10f64.powf(-0.5),
            aod_min: -FRAC_PI_2,
            aod_max: FRAC_PI_2,
            snr: SnrRule::default(),
        }
    }
}

impl ChannelConfig {
    pub fn with_n_t(mut self, n_t: usize) -> Self {
        self.n_t = n_t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0 {
            return Err(Error::Config("n_t must be at least 1".into()));
        }
        if self.l_paths == 0 {
            return Err(Error::Config("l_paths must be at least 1".into()));
        }
        if !(self.los_gain_variance > 0.0 && self.nlos_gain_variance > 0.0) {
            return Err(Error::Config("path gain variances must be positive".into()));
        }
        if !(-FRAC_PI_2 <= self.aod_min
            && self.aod_min <= self.aod_max
            && self.aod_max <= FRAC_PI_2)
        {
            return Err(Error::Config(
                "angle range must lie within [-pi/2, pi/2]".into(),
            ));
        }
        match self.snr {
            SnrRule::UniformDb { min_db, max_db }
                if !(min_db <= max_db && min_db.is_finite() && max_db.is_finite()) =>
            {
                Err(Error::Config(
                    "snr range must be finite with min <= max".into(),
                ))
            }
            SnrRule::FixedDb { db } if !db.is_finite() => {
                Err(Error::Config("fixed snr must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    fn gain_variance(&self, path: usize) -> f64 {
        if path == 0 {
            self.los_gain_variance
        } else {
            self.nlos_gain_variance
        }
    }
}

/// One channel realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    pub h: Vec<Complex64>,
    pub paths: Vec<PathParams>,
    /// Linear SNR `gamma = P / sigma^2`.
    pub snr: f64,
    pub seed: u64,
}

impl ChannelSample {
    /// Builds a sample whose `h` is assembled from `paths`.
    pub fn from_paths(paths: Vec<PathParams>, n_t: usize, snr: f64, seed: u64) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::domain("a channel needs at least one path"));
        }
        if snr.is_nan() || snr <= 0.0 {
            return Err(Error::domain(format!("snr must be positive, got {snr}")));
        }
        for p in &paths {
            if !(-FRAC_PI_2..=FRAC_PI_2).contains(&p.aod) {
                return Err(Error::domain(format!(
                    "angle {} outside [-pi/2, pi/2]",
                    p.aod
                )));
            }
        }
        let pairs: Vec<_> = paths.iter().map(|p| (p.aod, p.gain)).collect();
        let h = reconstruct(&pairs, n_t);
        Ok(Self {
            h,
            paths,
            snr,
            seed,
        })
    }

    pub fn n_t(&self) -> usize {
        self.h.len()
    }

    /// Reassembles `h` from the stored paths.
    pub fn reconstruct(&self) -> Vec<Complex64> {
        let pairs: Vec<_> = self.paths.iter().map(|p| (p.aod, p.gain)).collect();
        reconstruct(&pairs, self.h.len())
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * self.snr.log10()
    }
}

/// Draws one channel from `config` using the stream keyed by `seed`.
///
/// Draw order per path: gain (two normals), then angle; the SNR is drawn last.
pub fn generate_channel(config: &ChannelConfig, seed: u64) -> ChannelSample {
    let mut rng = rng::rng_from_seed(seed);
    let paths: Vec<PathParams> = (0..config.l_paths)
        .map(|l| {
            let gain = complex_gaussian(&mut rng, config.gain_variance(l));
            let aod = rng::uniform(&mut rng, config.aod_min, config.aod_max);
            PathParams {
                gain,
                aod,
                is_los: l == 0,
            }
        })
        .collect();
    let snr_db = match config.snr {
        SnrRule::UniformDb { min_db, max_db } => rng::uniform(&mut rng, min_db, max_db),
        SnrRule::FixedDb { db } => db,
    };
    let snr = 10f64.powf(snr_db / 10.0);
    let pairs: Vec<_> = paths.iter().map(|p| (p.aod, p.gain)).collect();
    let h = reconstruct(&pairs, config.n_t);
    ChannelSample {
        h,
        paths,
        snr,
        seed,
    }
}

/// A collection of channel samples sharing one generation config.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDataset {
    pub samples: Vec<ChannelSample>,
    pub config: ChannelConfig,
    pub master_seed: u64,
    /// Hash of the run configuration that produced this dataset, when known.
    pub provenance: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetHeader {
    version: u32,
    record: String,
    n_t: usize,
    l_paths: usize,
    count: usize,
    config: ChannelConfig,
    master_seed: u64,
    #[serde(default)]
    provenance: Option<String>,
}

/// Generates `count` samples whose seeds are derived from `master_seed` by index.
pub fn generate_dataset(
    config: &ChannelConfig,
    master_seed: u64,
    count: usize,
) -> Result<ChannelDataset> {
    config.validate()?;
    if count == 0 {
        return Err(Error::domain("dataset count must be at least 1"));
    }
    let samples = (0..count as u64)
        .into_par_iter()
        .map(|i| generate_channel(config, rng::derive_seed(master_seed, i)))
        .collect();
    Ok(ChannelDataset {
        samples,
        config: config.clone(),
        master_seed,
        provenance: None,
    })
}

impl ChannelDataset {
    /// Wraps hand-built samples, checking they agree with `config` on shape.
    pub fn from_samples(
        config: ChannelConfig,
        master_seed: u64,
        samples: Vec<ChannelSample>,
    ) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if s.h.len() != config.n_t || s.paths.len() != config.l_paths {
                return Err(Error::structural(format!(
                    "sample {i} has n_t={} L={}, dataset expects n_t={} L={}",
                    s.h.len(),
                    s.paths.len(),
                    config.n_t,
                    config.l_paths
                )));
            }
        }
        Ok(Self {
            samples,
            config,
            master_seed,
            provenance: None,
        })
    }

    pub fn n_t(&self) -> usize {
        self.config.n_t
    }

    pub fn l_paths(&self) -> usize {
        self.config.l_paths
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn header(&self) -> DatasetHeader {
        DatasetHeader {
            version: DATASET_VERSION,
            record: CHANNEL_RECORD.into(),
            n_t: self.n_t(),
            l_paths: self.l_paths(),
            count: self.samples.len(),
            config: self.config.clone(),
            master_seed: self.master_seed,
            provenance: self.provenance.clone(),
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        container::write_header(w, DATASET_MAGIC, &self.header())?;
        let mut buf = Vec::with_capacity(2 * self.n_t());
        for s in &self.samples {
            container::put_u64(w, s.seed)?;
            container::put_f64(w, s.snr)?;
            for p in &s.paths {
                container::put_f64s(w, &[p.gain.re, p.gain.im, p.aod])?;
            }
            buf.clear();
            buf.extend(s.h.iter().flat_map(|z| [z.re, z.im]));
            container::put_f64s(w, &buf)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let header: DatasetHeader = container::read_header(r, DATASET_MAGIC)?;
        if header.version != DATASET_VERSION || header.record != CHANNEL_RECORD {
            return Err(Error::CorruptHeader(format!(
                "unsupported dataset version {} / record {:?}",
                header.version, header.record
            )));
        }
        if header.n_t != header.config.n_t || header.l_paths != header.config.l_paths {
            return Err(Error::DimensionMismatch(
                "header dimensions disagree with embedded config".into(),
            ));
        }
        let (n_t, l) = (header.n_t, header.l_paths);
        let mut payload = Payload::new(r);
        let mut samples = Vec::with_capacity(header.count.min(1 << 20));
        let mut hbuf = vec![0.0; 2 * n_t];
        for _ in 0..header.count {
            let seed = payload.u64()?;
            let snr = payload.f64()?;
            let mut paths = Vec::with_capacity(l);
            for i in 0..l {
                let mut rec = [0.0; 3];
                payload.f64s(&mut rec)?;
                paths.push(PathParams {
                    gain: Complex64::new(rec[0], rec[1]),
                    aod: rec[2],
                    is_los: i == 0,
                });
            }
            payload.f64s(&mut hbuf)?;
            let h = hbuf
                .chunks_exact(2)
                .map(|c| Complex64::new(c[0], c[1]))
                .collect();
            samples.push(ChannelSample {
                h,
                paths,
                snr,
                seed,
            });
        }
        payload.finish()?;
        Ok(Self {
            samples,
            config: header.config,
            master_seed: header.master_seed,
            provenance: header.provenance,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = container::create(path.as_ref())?;
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = container::open(path.as_ref())?;
        Self::read_from(&mut r)
    }

    /// SHA-256 of the serialized file contents.
    pub fn content_hash(&self) -> String {
        let mut hw = HashWriter::default();
        self.write_to(&mut hw).expect("hashing sink cannot fail");
        hw.hex()
    }
}
