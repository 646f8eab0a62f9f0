//! Pairwise distance runs over a corpus.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use cwass::density::ConformalDensity;
use cwass::flatten::{flatten_to_disk, load_mesh, mobius_normalize, MeshFormat};
use cwass::hyperbolic::MobiusTransform;
use cwass::localcost::CostConfig;
use cwass::quotient::{quotient_distance, QuotientConfig};
use cwass::transport::{generalized_distance, TransportPlan};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA: &str = "cwass-matrix/1";
pub const PAIR_SCHEMA: &str = "cwass-pair/1";
/// Environment variable capping the worker count.
pub const THREADS_VAR: &str = "CWASS_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Trd,
    Quotient,
}

impl std::str::FromStr for Method {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trd" => Ok(Method::Trd),
            "quotient" => Ok(Method::Quotient),
            other => bail!("unknown method {other:?} (expected trd or quotient)"),
        }
    }
}

fn default_points() -> usize {
    64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    /// Density files (`.json`) or meshes (`.off`, `.obj`); relative paths are
    /// taken from the manifest's directory.
    pub inputs: Vec<PathBuf>,
    pub method: Method,
    /// Display names; defaults to the file stems.
    #[serde(default)]
    pub labels: Option<Vec<String>>,
    #[serde(default)]
    pub cost: CostConfig,
    #[serde(default)]
    pub quotient: QuotientConfig,
    /// Support points per density for the transport step of `trd`.
    #[serde(default = "default_points")]
    pub n_points: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl RunManifest {
    pub fn new(inputs: Vec<PathBuf>, method: Method) -> Self {
        RunManifest {
            inputs,
            method,
            labels: None,
            cost: CostConfig::default(),
            quotient: QuotientConfig::default(),
            n_points: default_points(),
            output: None,
            seed: 0,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let mut manifest: RunManifest =
            serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for input in &mut manifest.inputs {
            if input.is_relative() {
                *input = base.join(&*input);
            }
        }
        if let Some(out) = &mut manifest.output {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.len() < 2 {
            bail!("a pairwise run needs at least two inputs, got {}", self.inputs.len());
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.inputs.len() {
                bail!("{} labels for {} inputs", labels.len(), self.inputs.len());
            }
        }
        if self.n_points == 0 {
            bail!("n_points must be positive");
        }
        self.cost.validate()?;
        self.quotient.validate()?;
        Ok(())
    }

    pub fn labels(&self) -> Vec<String> {
        self.labels.clone().unwrap_or_else(|| {
            self.inputs
                .iter()
                .map(|p| p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned()))
                .collect()
        })
    }
}

/// Reads a density file, or flattens and centers a mesh.
pub fn load_input(path: &Path) -> Result<ConformalDensity> {
    match MeshFormat::from_path(path) {
        Some(format) => {
            let mesh = load_mesh(path, format)?;
            Ok(mobius_normalize(&flatten_to_disk(&mesh)?)?.density)
        }
        None => Ok(ConformalDensity::load(path)?),
    }
}

/// One direction of a pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub source: usize,
    pub target: usize,
    pub method: Method,
    pub distance: f64,
    pub row_support: Vec<usize>,
    pub col_support: Vec<usize>,
    pub plan: TransportPlan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_star: Option<MobiusTransform>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub i: usize,
    pub j: usize,
    pub distance: Option<f64>,
    pub forward: Option<f64>,
    pub backward: Option<f64>,
    /// `|d(i, j) - d(j, i)|` before averaging.
    pub asymmetry: Option<f64>,
    pub plan_flows: Option<usize>,
    pub is_permutation: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputFailure {
    pub index: usize,
    pub label: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: Method,
    pub cost: CostConfig,
    pub quotient: QuotientConfig,
    pub n_points: usize,
    pub seed: u64,
}

/// Symmetric distance matrix with per-pair metadata. Entries of failed
/// inputs are `null`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrixReport {
    pub schema: String,
    pub labels: Vec<String>,
    pub matrix: Vec<Vec<Option<f64>>>,
    pub pairs: Vec<PairRecord>,
    pub failed_inputs: Vec<InputFailure>,
    pub config: RunConfig,
}

impl DistanceMatrixReport {
    pub fn is_complete(&self) -> bool {
        self.failed_inputs.is_empty() && self.pairs.iter().all(|p| p.error.is_none())
    }

    /// The matrix with every entry present.
    pub fn dense(&self) -> Result<Vec<Vec<f64>>> {
        self.matrix
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, d)| d.with_context(|| format!("missing distance between {} and {}", i, j)))
                    .collect()
            })
            .collect()
    }

    pub fn max_asymmetry(&self) -> f64 {
        self.pairs.iter().filter_map(|p| p.asymmetry).fold(0.0, f64::max)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let report: DistanceMatrixReport = serde_json::from_str(&text)?;
        if report.schema != REPORT_SCHEMA {
            bail!("unsupported schema {:?}", report.schema);
        }
        Ok(report)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairTiming {
    pub i: usize,
    pub j: usize,
    pub seconds: f64,
}

/// Wall-clock timings, kept apart from the deterministic report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub load_seconds: f64,
    pub pairs: Vec<PairTiming>,
    pub total_seconds: f64,
    pub threads: usize,
}

pub struct RunOutput {
    pub report: DistanceMatrixReport,
    /// Forward direction `i → j` of each computed pair, in pair order.
    pub pair_results: Vec<PairResult>,
    pub timings: Timings,
}

fn one_direction(
    manifest: &RunManifest,
    mu: &ConformalDensity,
    nu: &ConformalDensity,
    source: usize,
    target: usize,
) -> Result<PairResult> {
    Ok(match manifest.method {
        Method::Trd => {
            let g = generalized_distance(mu, nu, &manifest.cost, manifest.n_points)?;
            PairResult {
                source,
                target,
                method: Method::Trd,
                distance: g.distance,
                row_support: g.row_support,
                col_support: g.col_support,
                plan: g.plan,
                m_star: None,
            }
        }
        Method::Quotient => {
            let q = quotient_distance(mu, nu, &manifest.quotient)?;
            PairResult {
                source,
                target,
                method: Method::Quotient,
                distance: q.distance,
                row_support: q.row_support,
                col_support: q.col_support,
                plan: q.plan,
                m_star: Some(q.m_star),
            }
        }
    })
}

/// Worker count from `CWASS_THREADS`, or rayon's default.
pub fn thread_count() -> usize {
    std::env::var(THREADS_VAR)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

/// Computes every pair of the manifest in both directions.
pub fn run(manifest: &RunManifest) -> Result<RunOutput> {
    manifest.validate()?;
    let threads = thread_count();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    pool.install(|| run_in_pool(manifest, threads))
}

fn run_in_pool(manifest: &RunManifest, threads: usize) -> Result<RunOutput> {
    let start = Instant::now();
    let labels = manifest.labels();
    let n = manifest.inputs.len();
    let densities: Vec<Result<ConformalDensity, String>> = manifest
        .inputs
        .par_iter()
        .map(|p| load_input(p).map_err(|e| format!("{e:#}")))
        .collect();
    let load_seconds = start.elapsed().as_secs_f64();
    let failed_inputs: Vec<InputFailure> = densities
        .iter()
        .enumerate()
        .filter_map(|(index, d)| {
            d.as_ref().err().map(|e| InputFailure { index, label: labels[index].clone(), error: e.clone() })
        })
        .collect();

    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let computed: Vec<(Option<Result<(PairResult, PairResult), String>>, f64)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let t = Instant::now();
            let result = match (&densities[i], &densities[j]) {
                (Ok(mu), Ok(nu)) => Some(
                    one_direction(manifest, mu, nu, i, j)
                        .and_then(|f| Ok((f, one_direction(manifest, nu, mu, j, i)?)))
                        .map_err(|e| format!("{e:#}")),
                ),
                _ => None,
            };
            (result, t.elapsed().as_secs_f64())
        })
        .collect();

    let mut matrix: Vec<Vec<Option<f64>>> = (0..n)
        .map(|i| (0..n).map(|j| (i == j && densities[i].is_ok()).then_some(0.0)).collect())
        .collect();
    let mut records = Vec::with_capacity(pairs.len());
    let mut pair_results = Vec::new();
    let mut timing = Vec::with_capacity(pairs.len());
    for (&(i, j), (result, seconds)) in pairs.iter().zip(computed) {
        timing.push(PairTiming { i, j, seconds });
        let record = match result {
            None => PairRecord {
                i,
                j,
                distance: None,
                forward: None,
                backward: None,
                asymmetry: None,
                plan_flows: None,
                is_permutation: None,
                error: Some("input failed to load".into()),
            },
            Some(Err(e)) => PairRecord {
                i,
                j,
                distance: None,
                forward: None,
                backward: None,
                asymmetry: None,
                plan_flows: None,
                is_permutation: None,
                error: Some(e),
            },
            Some(Ok((fwd, bwd))) => {
                let d = 0.5 * (fwd.distance + bwd.distance);
                matrix[i][j] = Some(d);
                matrix[j][i] = Some(d);
                let record = PairRecord {
                    i,
                    j,
                    distance: Some(d),
                    forward: Some(fwd.distance),
                    backward: Some(bwd.distance),
                    asymmetry: Some((fwd.distance - bwd.distance).abs()),
                    plan_flows: Some(fwd.plan.coupling.len()),
                    is_permutation: Some(fwd.plan.is_permutation),
                    error: None,
                };
                pair_results.push(fwd);
                record
            }
        };
        records.push(record);
    }

    let report = DistanceMatrixReport {
        schema: REPORT_SCHEMA.into(),
        labels,
        matrix,
        pairs: records,
        failed_inputs,
        config: RunConfig {
            method: manifest.method,
            cost: manifest.cost,
            quotient: manifest.quotient,
            n_points: manifest.n_points,
            seed: manifest.seed,
        },
    };
    Ok(RunOutput {
        report,
        pair_results,
        timings: Timings { load_seconds, pairs: timing, total_seconds: start.elapsed().as_secs_f64(), threads },
    })
}

#[derive(Serialize, Deserialize)]
struct PairFile {
    schema: String,
    #[serde(flatten)]
    pair: PairResult,
}

impl RunOutput {
    /// Writes `matrix.json`, `timings.json` and one `pair_i_j.json` per
    /// computed pair.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join("matrix.json"), serde_json::to_string_pretty(&self.report)?)?;
        fs::write(dir.join("timings.json"), serde_json::to_string_pretty(&self.timings)?)?;
        for p in &self.pair_results {
            let file = PairFile { schema: PAIR_SCHEMA.into(), pair: p.clone() };
            fs::write(
                dir.join(format!("pair_{}_{}.json", p.source, p.target)),
                serde_json::to_string_pretty(&file)?,
            )?;
        }
        Ok(())
    }
}

pub fn load_pair(path: &Path) -> Result<PairResult> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: PairFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if file.schema != PAIR_SCHEMA {
        bail!("unsupported schema {:?}", file.schema);
    }
    Ok(file.pair)
}

/// Correspondence CSV with `source,target,mass` rows in sample indices of
/// the two densities.
pub fn export_correspondence(pair: &PairResult) -> String {
    let mut out = String::from("source,target,mass\n");
    for f in &pair.plan.coupling {
        out.push_str(&format!("{},{},{}\n", pair.row_support[f.row], pair.col_support[f.col], f.mass));
    }
    out
}
