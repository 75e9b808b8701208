//! Pilot-based hierarchical channel estimation.
//!
//! The transmitter sounds the channel through a binary tree of sector beams.
//! At each stage the two child sectors of the current sector are measured and
//! the user feeds back which one returned the stronger pilot; after
//! `log2(G)` stages the search has narrowed to a single grid cell. A final
//! pilot through the steering vector of that cell estimates the path gain.
//! Paths are found one at a time, and the contribution of every path found so
//! far is subtracted from later measurements.
//!
//! The angle grid is uniform in spatial frequency `u = sin(phi)`: cell `g` of
//! `G` spans `[-1 + 2g/G, -1 + 2(g+1)/G]` and its grid angle is the arcsine of
//! the cell centre.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{self, inner, steering, ChannelDataset, ChannelSample};
use crate::container::{self, HashWriter, Payload};
use crate::error::{Error, Result};
use crate::rng::{self, complex_gaussian};

pub const ESTIMATE_RECORD: &str = "EST1";

const UNIT_NORM_TOL: f64 = 1e-9;

/// Estimator settings. `pnr_db = +inf` disables pilot noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    #[serde(with = "pnr_serde")]
    pub pnr_db: f64,
    pub l_est: usize,
    pub grid_size: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            pnr_db: 20.0,
            l_est: 3,
            grid_size: 256,
        }
    }
}

impl EstimatorConfig {
    pub fn new(pnr_db: f64, l_est: usize) -> Self {
        Self {
            pnr_db,
            l_est,
            ..Self::default()
        }
    }

    pub fn noiseless(l_est: usize) -> Self {
        Self::new(f64::INFINITY, l_est)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l_est == 0 {
            return Err(Error::Config("l_est must be at least 1".into()));
        }
        if self.grid_size < 2 || !self.grid_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "grid size {} must be a power of two >= 2",
                self.grid_size
            )));
        }
        if self.pnr_db.is_nan() || self.pnr_db == f64::NEG_INFINITY {
            return Err(Error::Config("pnr_db must be a number or +inf".into()));
        }
        Ok(())
    }

    /// Number of bisection stages, `log2(G)`.
    pub fn stages(&self) -> usize {
        self.grid_size.trailing_zeros() as usize
    }

    pub fn noise_variance(&self) -> f64 {
        noise_variance(self.pnr_db)
    }
}

fn noise_variance(pnr_db: f64) -> f64 {
    if pnr_db == f64::INFINITY {
        0.0
    } else {
        10f64.powf(-pnr_db / 10.0)
    }
}

/// JSON has no infinity; noiseless estimation is written as the string `"inf"`.
/// `null` is also accepted on input.
pub(crate) mod pnr_serde {
    use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    pub(crate) enum Repr {
        Num(f64),
        Text(String),
    }

    pub(crate) fn to_repr(v: f64) -> Repr {
        if v == f64::INFINITY {
            Repr::Text("inf".into())
        } else {
            Repr::Num(v)
        }
    }

    pub(crate) fn from_repr<E: de::Error>(r: Option<Repr>) -> Result<f64, E> {
        match r {
            None => Ok(f64::INFINITY),
            Some(Repr::Num(v)) => Ok(v),
            Some(Repr::Text(t)) if matches!(t.as_str(), "inf" | "+inf" | "infinity") => {
                Ok(f64::INFINITY)
            }
            Some(Repr::Text(t)) => Err(E::custom(format!("invalid pnr {t:?}"))),
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Option::<Repr>::deserialize(d)?)
    }
}

/// Centre angle of grid cell `g`.
pub fn grid_angle(g: usize, grid_size: usize) -> f64 {
    grid_u(g, grid_size).asin()
}

fn grid_u(g: usize, grid_size: usize) -> f64 {
    -1.0 + (2 * g + 1) as f64 / grid_size as f64
}

/// Index of the grid cell containing `aod`.
pub fn grid_index(aod: f64, grid_size: usize) -> usize {
    let u = aod.sin();
    let g = ((u + 1.0) * grid_size as f64 / 2.0).floor() as isize;
    g.clamp(0, grid_size as isize - 1) as usize
}

/// Unit-norm sector beam whose gain is roughly flat over `[lo, hi]`.
///
/// Sums steering vectors on a grid of cell centres spaced at most
/// `1 / (2 n_t)` apart in `u`. Each term is phase-referenced to the interval
/// centre so that the beam response is a sum of real Dirichlet kernels.
/// A zero-width interval returns `a_t(lo)`.
pub fn sounding_beam(lo: f64, hi: f64, n_t: usize) -> Result<Vec<Complex64>> {
    if n_t == 0 {
        return Err(Error::domain("array needs at least one antenna"));
    }
    if !(-FRAC_PI_2 <= lo && lo <= hi && hi <= FRAC_PI_2) {
        return Err(Error::domain(format!(
            "empty or out-of-range interval [{lo}, {hi}]"
        )));
    }
    Ok(sector_beam(lo.sin(), hi.sin(), 1, n_t))
}

fn sector_beam(u_lo: f64, u_hi: f64, min_points: usize, n_t: usize) -> Vec<Complex64> {
    let width = u_hi - u_lo;
    let by_resolution = (width * 2.0 * n_t as f64 - 1e-9).ceil().max(0.0) as usize;
    let points = min_points.max(by_resolution).max(1);
    let centre = 0.5 * (u_lo + u_hi);
    let mut beam = vec![Complex64::new(0.0, 0.0); n_t];
    for m in 0..points {
        let u = if width == 0.0 {
            u_lo
        } else {
            u_lo + width * (m as f64 + 0.5) / points as f64
        };
        let weight = Complex64::from_polar(1.0, -PI * (n_t as f64 - 1.0) * (u - centre) / 2.0);
        for (b, a) in beam.iter_mut().zip(steering(u, n_t)) {
            *b += weight * a;
        }
    }
    let norm = channel::norm(&beam);
    beam.iter_mut().for_each(|b| *b /= norm);
    beam
}

/// One pilot observation `h^H f + n` with `E|n|^2 = 10^(-pnr_db/10)`.
pub fn pilot_measure<R: Rng + ?Sized>(
    h: &[Complex64],
    f: &[Complex64],
    pnr_db: f64,
    rng: &mut R,
) -> Result<Complex64> {
    if h.len() != f.len() {
        return Err(Error::domain(format!(
            "channel length {} vs beam length {}",
            h.len(),
            f.len()
        )));
    }
    let fnorm = channel::norm(f);
    if (fnorm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::domain(format!("pilot beam norm {fnorm} is not 1")));
    }
    let clean = inner(h, f);
    let var = noise_variance(pnr_db);
    Ok(if var > 0.0 {
        clean + complex_gaussian(rng, var)
    } else {
        clean
    })
}

/// Estimated path: angle and gain on the `sqrt(n_t / l_est)` scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatedPath {
    pub aod: f64,
    pub gain: Complex64,
}

/// Imperfect CSI for one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub h_est: Vec<Complex64>,
    pub paths_est: Vec<EstimatedPath>,
    pub pnr_db: f64,
    /// Seed of the channel sample this estimate was made from.
    pub source_seed: u64,
}

impl ChannelEstimate {
    pub fn reconstruct(&self) -> Vec<Complex64> {
        let pairs: Vec<_> = self.paths_est.iter().map(|p| (p.aod, p.gain)).collect();
        channel::reconstruct(&pairs, self.h_est.len())
    }
}

/// Hierarchical sector codebook for one array size and grid, stored as an
/// implicit binary tree: node 1 covers all cells, node `i` has children `2i`
/// and `2i + 1`, and leaf `G + g` covers cell `g`.
#[derive(Debug, Clone)]
pub struct Codebook {
    n_t: usize,
    grid_size: usize,
    nodes: Vec<Vec<Complex64>>,
    leaves: Vec<Vec<Complex64>>,
}

impl Codebook {
    pub fn new(n_t: usize, grid_size: usize) -> Self {
        let mut nodes = vec![Vec::new(); 2 * grid_size];
        for (idx, node) in nodes.iter_mut().enumerate().skip(1) {
            let level = usize::BITS - 1 - idx.leading_zeros();
            let span = grid_size >> level;
            let first = (idx - (1 << level)) * span;
            let u_lo = -1.0 + 2.0 * first as f64 / grid_size as f64;
            let u_hi = -1.0 + 2.0 * (first + span) as f64 / grid_size as f64;
            *node = sector_beam(u_lo, u_hi, span, n_t);
        }
        let leaves = (0..grid_size)
            .map(|g| steering(grid_u(g, grid_size), n_t))
            .collect();
        Self {
            n_t,
            grid_size,
            nodes,
            leaves,
        }
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    /// Sector beam of tree node `idx`.
    pub fn beam(&self, idx: usize) -> &[Complex64] {
        &self.nodes[idx]
    }

    /// Steering vector at the centre of cell `g`.
    pub fn steering(&self, g: usize) -> &[Complex64] {
        &self.leaves[g]
    }
}

/// Estimator bound to a configuration and array size.
#[derive(Debug, Clone)]
pub struct Estimator {
    cfg: EstimatorConfig,
    codebook: Codebook,
}

impl Estimator {
    pub fn new(cfg: EstimatorConfig, n_t: usize) -> Result<Self> {
        cfg.validate()?;
        if n_t == 0 {
            return Err(Error::domain("array needs at least one antenna"));
        }
        Ok(Self {
            cfg,
            codebook: Codebook::new(n_t, cfg.grid_size),
        })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.cfg
    }

    /// Estimates `sample.h`, touching it only through [`pilot_measure`].
    pub fn estimate(&self, sample: &ChannelSample, seed: u64) -> Result<ChannelEstimate> {
        let n_t = self.codebook.n_t;
        if sample.h.len() != n_t {
            return Err(Error::structural(format!(
                "channel has {} antennas, estimator {n_t}",
                sample.h.len()
            )));
        }
        let mut rng = rng::rng_from_seed(seed);
        let pnr_db = self.cfg.pnr_db;
        let scale = (n_t as f64 / self.cfg.l_est as f64).sqrt();
        let grid = self.cfg.grid_size;

        // Reconstruction of the paths found so far; subtracted from every observation.
        let mut known = vec![Complex64::new(0.0, 0.0); n_t];
        let mut paths = Vec::with_capacity(self.cfg.l_est);
        let mut observe = |f: &[Complex64], known: &[Complex64]| -> Result<Complex64> {
            Ok(pilot_measure(&sample.h, f, pnr_db, &mut rng)? - inner(known, f))
        };

        for _ in 0..self.cfg.l_est {
            let mut node = 1usize;
            for _ in 0..self.cfg.stages() {
                let left = observe(self.codebook.beam(2 * node), &known)?;
                let right = observe(self.codebook.beam(2 * node + 1), &known)?;
                // Ties go left.
                node = if right.norm() > left.norm() {
                    2 * node + 1
                } else {
                    2 * node
                };
            }
            let cell = node - grid;
            let a = self.codebook.steering(cell);
            // a^H a = 1, so the observation divided by the path prefactor is the gain.
            let gain = observe(a, &known)? / scale;
            let c = gain.conj() * scale;
            for (k, ak) in known.iter_mut().zip(a) {
                *k += c * ak;
            }
            paths.push(EstimatedPath {
                aod: grid_angle(cell, grid),
                gain,
            });
        }

        let pairs: Vec<_> = paths.iter().map(|p| (p.aod, p.gain)).collect();
        let h_est = channel::reconstruct(&pairs, n_t);
        Ok(ChannelEstimate {
            h_est,
            paths_est: paths,
            pnr_db,
            source_seed: sample.seed,
        })
    }

    /// Estimates every sample; sample `i` uses the stream `derive_seed(master_seed, seed_i)`.
    pub fn estimate_batch(
        &self,
        dataset: &ChannelDataset,
        master_seed: u64,
    ) -> Result<Vec<ChannelEstimate>> {
        dataset
            .samples
            .par_iter()
            .map(|s| self.estimate(s, rng::derive_seed(master_seed, s.seed)))
            .collect()
    }
}

/// One-shot estimate; builds a codebook per call.
pub fn estimate_channel(
    sample: &ChannelSample,
    cfg: &EstimatorConfig,
    seed: u64,
) -> Result<ChannelEstimate> {
    Estimator::new(*cfg, sample.h.len())?.estimate(sample, seed)
}

pub fn estimate_batch(
    dataset: &ChannelDataset,
    cfg: &EstimatorConfig,
    master_seed: u64,
) -> Result<Vec<ChannelEstimate>> {
    Estimator::new(*cfg, dataset.n_t())?.estimate_batch(dataset, master_seed)
}

/// Estimates of a dataset together with the settings that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSet {
    pub estimates: Vec<ChannelEstimate>,
    pub config: EstimatorConfig,
    pub n_t: usize,
    pub master_seed: u64,
    pub provenance: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateHeader {
    version: u32,
    record: String,
    n_t: usize,
    l_est: usize,
    count: usize,
    config: EstimatorConfig,
    master_seed: u64,
    #[serde(default)]
    provenance: Option<String>,
}

impl EstimateSet {
    pub fn generate(
        dataset: &ChannelDataset,
        cfg: &EstimatorConfig,
        master_seed: u64,
    ) -> Result<Self> {
        Ok(Self {
            estimates: estimate_batch(dataset, cfg, master_seed)?,
            config: *cfg,
            n_t: dataset.n_t(),
            master_seed,
            provenance: dataset.provenance.clone(),
        })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let header = EstimateHeader {
            version: channel::DATASET_VERSION,
            record: ESTIMATE_RECORD.into(),
            n_t: self.n_t,
            l_est: self.config.l_est,
            count: self.estimates.len(),
            config: self.config,
            master_seed: self.master_seed,
            provenance: self.provenance.clone(),
        };
        container::write_header(w, channel::DATASET_MAGIC, &header)?;
        let mut buf = Vec::with_capacity(2 * self.n_t);
        for e in &self.estimates {
            if e.h_est.len() != self.n_t || e.paths_est.len() != self.config.l_est {
                return Err(Error::structural("estimate shape disagrees with set"));
            }
            container::put_u64(w, e.source_seed)?;
            container::put_f64(w, e.pnr_db)?;
            for p in &e.paths_est {
                container::put_f64s(w, &[p.gain.re, p.gain.im, p.aod])?;
            }
            buf.clear();
            buf.extend(e.h_est.iter().flat_map(|z| [z.re, z.im]));
            container::put_f64s(w, &buf)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let header: EstimateHeader = container::read_header(r, channel::DATASET_MAGIC)?;
        if header.version != channel::DATASET_VERSION || header.record != ESTIMATE_RECORD {
            return Err(Error::CorruptHeader(format!(
                "expected {ESTIMATE_RECORD} records, found version {} / {:?}",
                header.version, header.record
            )));
        }
        if header.l_est != header.config.l_est {
            return Err(Error::DimensionMismatch(
                "header l_est disagrees with config".into(),
            ));
        }
        let mut payload = Payload::new(r);
        let mut estimates = Vec::with_capacity(header.count.min(1 << 20));
        let mut hbuf = vec![0.0; 2 * header.n_t];
        for _ in 0..header.count {
            let source_seed = payload.u64()?;
            let pnr_db = payload.f64()?;
            let mut paths_est = Vec::with_capacity(header.l_est);
            for _ in 0..header.l_est {
                let mut rec = [0.0; 3];
                payload.f64s(&mut rec)?;
                paths_est.push(EstimatedPath {
                    gain: Complex64::new(rec[0], rec[1]),
                    aod: rec[2],
                });
            }
            payload.f64s(&mut hbuf)?;
            let h_est = hbuf
                .chunks_exact(2)
                .map(|c| Complex64::new(c[0], c[1]))
                .collect();
            estimates.push(ChannelEstimate {
                h_est,
                paths_est,
                pnr_db,
                source_seed,
            });
        }
        payload.finish()?;
        Ok(Self {
            estimates,
            config: header.config,
            n_t: header.n_t,
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
        Self::read_from(&mut container::open(path.as_ref())?)
    }

    pub fn content_hash(&self) -> String {
        let mut hw = HashWriter::default();
        self.write_to(&mut hw).expect("hashing sink cannot fail");
        hw.hex()
    }

    /// Checks the estimates line up index-wise with `dataset`.
    pub fn check_aligned(&self, dataset: &ChannelDataset) -> Result<()> {
        if self.n_t != dataset.n_t() {
            return Err(Error::structural(format!(
                "estimates n_t={} vs dataset n_t={}",
                self.n_t,
                dataset.n_t()
            )));
        }
        if self.estimates.len() != dataset.len() {
            return Err(Error::structural(format!(
                "{} estimates for {} samples",
                self.estimates.len(),
                dataset.len()
            )));
        }
        if let Some(i) = self
            .estimates
            .iter()
            .zip(&dataset.samples)
            .position(|(e, s)| e.source_seed != s.seed)
        {
            return Err(Error::structural(format!(
                "estimate {i} was made from a different sample"
            )));
        }
        Ok(())
    }
}
