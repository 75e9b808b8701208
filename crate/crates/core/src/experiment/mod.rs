//! SE-versus-SNR sweeps over estimation conditions, plus report output.

mod plot;
mod report;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::baseline::{baseline_on_estimate, perfect_csi_bound, se_unchecked};
use crate::channel::ChannelDataset;
use crate::error::{Error, Result};
use crate::estimator::{estimate_batch, ChannelEstimate, EstimatorConfig};
use crate::nn::{model_hash, pack_batch, BfnnModel, TrainCondition};

pub use plot::{emit_plot, render_svg};
pub use report::{
    emit_csv, gain_at_target_se, read_csv, snr_at_se, write_csv, EvalReport, EvalRow, ReportMeta,
    CSV_HEADER,
};

const INFER_CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bfnn,
    EgtOnEstimate,
    PerfectBound,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Bfnn, Method::EgtOnEstimate, Method::PerfectBound];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Bfnn => "bfnn",
            Method::EgtOnEstimate => "egt_on_estimate",
            Method::PerfectBound => "perfect_bound",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSeeds {
    /// Master seed for pilot noise during test-set estimation.
    pub estimate: u64,
}

impl Default for SweepSeeds {
    fn default() -> Self {
        Self { estimate: 0x7e57 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub snr_grid_db: Vec<f64>,
    #[serde(with = "pnr_list_serde")]
    pub pnr_list_db: Vec<f64>,
    pub l_est_list: Vec<usize>,
    pub methods: Vec<Method>,
    pub test_count: usize,
    pub grid_size: usize,
    pub seeds: SweepSeeds,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            snr_grid_db: (0..=8).map(|i| -20.0 + 5.0 * i as f64).collect(),
            pnr_list_db: vec![-20.0, 0.0, 20.0],
            l_est_list: vec![1, 2, 3],
            methods: Method::ALL.to_vec(),
            test_count: 10_000,
            grid_size: EstimatorConfig::default().grid_size,
            seeds: SweepSeeds::default(),
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.snr_grid_db.is_empty() || self.pnr_list_db.is_empty() || self.l_est_list.is_empty()
        {
            return bad("sweep grids must be nonempty");
        }
        if self.methods.is_empty() {
            return bad("at least one method is required");
        }
        if self.test_count == 0 {
            return bad("test_count must be at least 1");
        }
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return bad("snr grid values must be finite");
        }
        if self
            .pnr_list_db
            .iter()
            .any(|p| p.is_nan() || *p == f64::NEG_INFINITY)
        {
            return bad("pnr values must be finite or +inf");
        }
        for &l in &self.l_est_list {
            EstimatorConfig {
                pnr_db: 0.0,
                l_est: l,
                grid_size: self.grid_size,
            }
            .validate()?;
        }
        Ok(())
    }

    pub fn conditions(&self) -> impl Iterator<Item = TrainCondition> + '_ {
        self.pnr_list_db.iter().flat_map(move |&pnr_db| {
            self.l_est_list
                .iter()
                .map(move |&l_est| TrainCondition { pnr_db, l_est })
        })
    }
}

/// List form of the estimator's PNR encoding.
mod pnr_list_serde {
    use super::*;
    use crate::estimator::pnr_serde::{from_repr, to_repr, Repr};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|p| to_repr(*p))
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Option<Repr>>::deserialize(d)?
            .into_iter()
            .map(from_repr)
            .collect()
    }
}

/// Trained models keyed by the condition they were trained for.
///
/// A set holding exactly one model serves every condition.
#[derive(Debug, Clone, Default)]
pub struct ModelSet {
    models: Vec<BfnnModel>,
}

impl ModelSet {
    pub fn new(models: Vec<BfnnModel>) -> Result<Self> {
        if let Some(first) = models.first() {
            if let Some(m) = models.iter().find(|m| m.n_t() != first.n_t()) {
                return Err(Error::Structural(format!(
                    "models for n_t {} and {} in one set",
                    first.n_t(),
                    m.n_t()
                )));
            }
        }
        Ok(Self { models })
    }

    pub fn single(model: BfnnModel) -> Self {
        Self {
            models: vec![model],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn models(&self) -> &[BfnnModel] {
        &self.models
    }

    pub fn n_t(&self) -> Option<usize> {
        self.models.first().map(BfnnModel::n_t)
    }

    pub fn lookup(&self, cond: TrainCondition) -> Result<&BfnnModel> {
        if let [only] = self.models.as_slice() {
            return Ok(only);
        }
        self.models
            .iter()
            .find(|m| m.meta.condition.is_some_and(|c| same_condition(c, cond)))
            .ok_or_else(|| {
                Error::Structural(format!(
                    "no model trained for pnr {} dB, l_est {}",
                    cond.pnr_db, cond.l_est
                ))
            })
    }
}

fn same_condition(a: TrainCondition, b: TrainCondition) -> bool {
    a.l_est == b.l_est && (a.pnr_db == b.pnr_db || (a.pnr_db - b.pnr_db).abs() < 1e-9)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-sample SE for one method at one SNR.
fn method_se(
    method: Method,
    model: Option<&BfnnModel>,
    dataset: &ChannelDataset,
    estimates: &[ChannelEstimate],
    gamma: f64,
) -> Result<Vec<f64>> {
    let samples = &dataset.samples[..estimates.len()];
    match method {
        Method::PerfectBound => Ok(samples
            .par_iter()
            .map(|s| perfect_csi_bound(&s.h, gamma))
            .collect()),
        Method::EgtOnEstimate => Ok(samples
            .par_iter()
            .zip(estimates)
            .map(|(s, e)| se_unchecked(&s.h, &baseline_on_estimate(&e.h_est).v_rf, gamma))
            .collect()),
        Method::Bfnn => {
            let model =
                model.ok_or_else(|| Error::Structural("bfnn requested without a model".into()))?;
            let n_t = dataset.n_t();
            let mut out = Vec::with_capacity(samples.len());
            for (chunk_s, chunk_e) in samples
                .chunks(INFER_CHUNK)
                .zip(estimates.chunks(INFER_CHUNK))
            {
                let x = pack_batch(n_t, chunk_e.iter().map(|e| (&e.h_est[..], gamma)))?;
                let bfs = model.infer(x.view())?;
                out.extend(
                    chunk_s
                        .par_iter()
                        .zip(bfs.par_iter())
                        .map(|(s, b)| se_unchecked(&s.h, &b.v_rf, gamma))
                        .collect::<Vec<_>>(),
                );
            }
            Ok(out)
        }
    }
}

/// Evaluates every method over the SNR grid for each (PNR, L_est) condition.
///
/// Channels are estimated once per condition; SE is always measured on the
/// true channel, and the network sees `gamma_est = gamma`.
pub fn run_sweep(
    spec: &SweepSpec,
    models: &ModelSet,
    dataset: &ChannelDataset,
) -> Result<EvalReport> {
    spec.validate()?;
    let n_t = dataset.n_t();
    let needs_model = spec.methods.contains(&Method::Bfnn);
    if needs_model && models.is_empty() {
        return Err(Error::Structural(
            "bfnn requested but no model supplied".into(),
        ));
    }
    if let Some(m_nt) = models.n_t() {
        if m_nt != n_t {
            return Err(Error::Structural(format!(
                "model expects n_t {m_nt}, dataset has n_t {n_t}"
            )));
        }
    }
    if dataset.len() < spec.test_count {
        return Err(Error::Structural(format!(
            "test set has {} samples, sweep needs {}",
            dataset.len(),
            spec.test_count
        )));
    }
    let head = ChannelDataset {
        samples: dataset.samples[..spec.test_count].to_vec(),
        ..dataset.clone()
    };

    let mut rows = Vec::new();
    for cond in spec.conditions() {
        let model = if needs_model {
            Some(models.lookup(cond)?)
        } else {
            None
        };
        let est_cfg = EstimatorConfig {
            pnr_db: cond.pnr_db,
            l_est: cond.l_est,
            grid_size: spec.grid_size,
        };
        let estimates = estimate_batch(&head, &est_cfg, spec.seeds.estimate)?;
        for &snr_db in &spec.snr_grid_db {
            let gamma = 10f64.powf(snr_db / 10.0);
            for &method in &spec.methods {
                let se = method_se(method, model, &head, &estimates, gamma)?;
                let (mean_se, std_se) = mean_std(&se);
                rows.push(EvalRow {
                    method,
                    snr_db,
                    pnr_db: cond.pnr_db,
                    l_est: cond.l_est,
                    mean_se,
                    std_se,
                    n_samples: se.len(),
                    seed: spec.seeds.estimate,
                });
            }
        }
    }

    let meta = ReportMeta {
        dataset_hash: dataset.content_hash(),
        model_hashes: models.models().iter().map(model_hash).collect(),
        spec: spec.clone(),
    };
    Ok(EvalReport { rows, meta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_dataset, ChannelConfig, ChannelSample, PathParams};
    use crate::estimator::grid_angle;
    use num_complex::Complex64;

    fn small_spec(methods: Vec<Method>) -> SweepSpec {
        SweepSpec {
            pnr_list_db: vec![0.0],
            l_est_list: vec![1],
            methods,
            test_count: 200,
            ..SweepSpec::default()
        }
    }

    #[test]
    fn bound_only_is_increasing_in_snr() {
        let ds = generate_dataset(&ChannelConfig::default().with_n_t(16), 1, 200).unwrap();
        let report = run_sweep(
            &small_spec(vec![Method::PerfectBound]),
            &ModelSet::default(),
            &ds,
        )
        .unwrap();
        assert_eq!(report.rows.len(), 9);
        for w in report.rows.windows(2) {
            assert!(w[1].mean_se > w[0].mean_se);
        }
    }

    #[test]
    fn noiseless_grid_aligned_estimation_reaches_bound() {
        let n_t = 32;
        let samples: Vec<ChannelSample> = (0..100u64)
            .map(|i| {
                let g = (i as usize * 37) % 256;
                let path = PathParams {
                    gain: Complex64::from_polar(1.0, i as f64 * 0.3),
                    aod: grid_angle(g, 256),
                    is_los: true,
                };
                ChannelSample::from_paths(vec![path], n_t, 1.0, i).unwrap()
            })
            .collect();
        let cfg = ChannelConfig {
            l_paths: 1,
            ..ChannelConfig::default().with_n_t(n_t)
        };
        let ds = ChannelDataset::from_samples(cfg, 0, samples).unwrap();
        let spec = SweepSpec {
            pnr_list_db: vec![f64::INFINITY],
            test_count: 100,
            ..small_spec(vec![Method::EgtOnEstimate, Method::PerfectBound])
        };
        let report = run_sweep(&spec, &ModelSet::default(), &ds).unwrap();
        for pair in report.rows.chunks(2) {
            assert!((pair[0].mean_se - pair[1].mean_se).abs() < 0.05, "{pair:?}");
        }
    }

    #[test]
    fn mismatched_model_is_structural() {
        let ds = generate_dataset(&ChannelConfig::default().with_n_t(8), 1, 200).unwrap();
        let models = ModelSet::single(BfnnModel::with_hidden(4, &[8], 0).unwrap());
        let err = run_sweep(&small_spec(Method::ALL.to_vec()), &models, &ds).unwrap_err();
        assert!(matches!(err, Error::Structural(_)));
    }

    #[test]
    fn bound_dominates_and_sweep_is_deterministic() {
        let ds = generate_dataset(&ChannelConfig::default().with_n_t(8), 4, 200).unwrap();
        let models = ModelSet::single(BfnnModel::with_hidden(8, &[16], 3).unwrap());
        let spec = small_spec(Method::ALL.to_vec());
        let a = run_sweep(&spec, &models, &ds).unwrap();
        let b = run_sweep(&spec, &models, &ds).unwrap();
        assert_eq!(a.rows, b.rows);
        for triple in a.rows.chunks(3) {
            let bound = triple[2].mean_se;
            assert!(triple[0].mean_se >= 0.0);
            assert!(bound + 1e-9 >= triple[0].mean_se && bound + 1e-9 >= triple[1].mean_se);
        }
    }

    #[test]
    fn lookup_by_condition() {
        let mut a = BfnnModel::with_hidden(4, &[4], 0).unwrap();
        a.meta.condition = Some(TrainCondition {
            pnr_db: 0.0,
            l_est: 1,
        });
        let mut b = a.clone();
        b.meta.condition = Some(TrainCondition {
            pnr_db: 20.0,
            l_est: 1,
        });
        let set = ModelSet::new(vec![a, b]).unwrap();
        let got = set
            .lookup(TrainCondition {
                pnr_db: 20.0,
                l_est: 1,
            })
            .unwrap();
        assert_eq!(got.meta.condition.unwrap().pnr_db, 20.0);
        assert!(set
            .lookup(TrainCondition {
                pnr_db: -20.0,
                l_est: 1
            })
            .is_err());
    }

    #[test]
    fn spec_round_trips_with_infinite_pnr() {
        let spec = SweepSpec {
            pnr_list_db: vec![f64::INFINITY, 0.0],
            ..SweepSpec::default()
        };
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"inf\""));
        assert_eq!(serde_json::from_str::<SweepSpec>(&json).unwrap(), spec);
    }

    #[test]
    fn method_names_parse() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("omp".parse::<Method>().is_err());
    }
}
