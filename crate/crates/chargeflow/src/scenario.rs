//! Reproducible experiments: a versioned TOML scenario drives the whole
//! pipeline (representation data, orbits, volume, spectra, trace fits) and
//! writes CSV/JSON artifacts plus a summary in which every number carries
//! its tolerance and the acceptance criterion it serves.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{self, Model, ModelFile};
use crate::reduction::{self, OrbitAtlas, SamplerConfig, ShootingConfig};
use crate::spectrum::{self, CollocationOptions, SpectrumTable};
use crate::trace::{self, TestFunction, TraceSeries};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;
/// Float tolerance for golden-file comparison.
pub const GOLDEN_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Model file, relative to the scenario file.
    pub model: String,
    pub seed: u64,
    pub energy: f64,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub levels: Option<LevelRange>,
    #[serde(default)]
    pub test_function: Option<TestFunctionConfig>,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub orbits: Option<OrbitConfig>,
    #[serde(default)]
    pub volume: Option<VolumeConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub gutzwiller: Option<GutzwillerConfig>,
    #[serde(default)]
    pub positivity: Option<PositivityConfig>,
    #[serde(default)]
    pub factorization: Option<FactorizationConfig>,
    #[serde(default, rename = "check")]
    pub checks: Vec<Check>,
}

/// Inclusive level range.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelRange {
    pub start: u32,
    pub end: u32,
}

impl LevelRange {
    pub fn levels(&self) -> Vec<u32> {
        (self.start..=self.end).collect()
    }
}

/// Gaussian test function; without `t0` it is centred on the first orbit's period.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunctionConfig {
    #[serde(default)]
    pub t0: Option<f64>,
    pub sigma: f64,
    #[serde(default)]
    pub omega0: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumMethod {
    #[default]
    ClosedForm,
    Discretized,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    #[serde(default)]
    pub method: SpectrumMethod,
    /// Collocation size per level, `max(grid_min, grid_factor * m)`.
    #[serde(default = "default_grid_factor")]
    pub grid_factor: f64,
    #[serde(default = "default_grid_min")]
    pub grid_min: usize,
    /// Certify every n-th level against the refined grid (0 = none).
    #[serde(default = "one")]
    pub certify_every: u32,
}

fn default_grid_factor() -> f64 {
    1.5
}
fn default_grid_min() -> usize {
    33
}
fn one() -> u32 {
    1
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            method: SpectrumMethod::ClosedForm,
            grid_factor: default_grid_factor(),
            grid_min: default_grid_min(),
            certify_every: 1,
        }
    }
}

impl SpectrumConfig {
    fn grid(&self, m: u32) -> usize {
        ((self.grid_factor * m as f64) as usize).max(self.grid_min) | 1
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitConfig {
    pub windings: Vec<i32>,
    #[serde(default)]
    pub newton_tol: Option<f64>,
    #[serde(default)]
    pub integrator_tol: Option<f64>,
    #[serde(default)]
    pub section_grid: Option<usize>,
    #[serde(default)]
    pub t_max: Option<f64>,
}

impl OrbitConfig {
    fn shooting(&self) -> ShootingConfig {
        let d = ShootingConfig::default();
        ShootingConfig {
            windings: self.windings.clone(),
            seeds: Vec::new(),
            newton_tol: self.newton_tol.unwrap_or(d.newton_tol),
            integrator_tol: self.integrator_tol.unwrap_or(d.integrator_tol),
            max_iterations: d.max_iterations,
            section_grid: self.section_grid.unwrap_or(d.section_grid),
            t_max: self.t_max.unwrap_or(d.t_max),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeConfig {
    #[serde(default)]
    pub max_samples: Option<usize>,
    #[serde(default)]
    pub target_rel_error: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub energies: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GutzwillerConfig {
    /// Peaks below this fraction of the largest DFT value are ignored.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Degree of the smooth polynomial removed before the DFT; none keeps the series.
    #[serde(default)]
    pub weyl_degree: Option<usize>,
    /// Abel damping for the generating-function peak.
    #[serde(default)]
    pub damping: Option<f64>,
    #[serde(default = "default_theta_grid")]
    pub theta_grid: usize,
}

fn default_threshold() -> f64 {
    0.3
}
fn default_theta_grid() -> usize {
    4096
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositivityConfig {
    pub m_max: u32,
    #[serde(default = "default_positivity_grid")]
    pub grid: usize,
}

fn default_positivity_grid() -> usize {
    33
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorizationConfig {
    pub levels: Vec<u32>,
    pub half_width: f64,
    #[serde(default = "default_factorization_grid")]
    pub grid: usize,
}

fn default_factorization_grid() -> usize {
    61
}

/// Acceptance check on one summary quantity.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Check {
    pub quantity: String,
    pub criterion: u8,
    #[serde(default)]
    pub expected: Option<f64>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
}

impl Check {
    fn passes(&self, v: f64) -> bool {
        let mut ok = v.is_finite();
        if let Some(e) = self.expected {
            ok &= (v - e).abs() <= self.tolerance.unwrap_or(0.0);
        }
        if let Some(lo) = self.min {
            ok &= v >= lo;
        }
        if let Some(hi) = self.max {
            ok &= v <= hi;
        }
        ok
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: toml::Value = toml::from_str(text)?;
        geometry::check_schema_version(&raw, text, SCENARIO_SCHEMA_VERSION)?;
        let s: Self = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let in_range = |name: &str, v: Option<f64>, lo: f64, hi: f64| -> Result<()> {
            match v {
                Some(v) if !(lo..=hi).contains(&v) => Err(Error::Config(format!(
                    "{name} = {v:e} outside [{lo:e}, {hi:e}]"
                ))),
                _ => Ok(()),
            }
        };
        if !(self.energy > 0.0) {
            return Err(Error::Config("energy must be positive".into()));
        }
        if let Some(o) = &self.orbits {
            in_range("orbits.newton_tol", o.newton_tol, 1e-14, 1e-6)?;
            in_range("orbits.integrator_tol", o.integrator_tol, 1e-13, 1e-6)?;
        }
        if let Some(v) = &self.volume {
            in_range("volume.target_rel_error", v.target_rel_error, 1e-5, 0.1)?;
        }
        if let Some(g) = &self.gutzwiller {
            in_range("gutzwiller.threshold", Some(g.threshold), 0.0, 1.0)?;
            if let Some(r) = g.damping {
                if !(r > 0.0 && r < 1.0) {
                    return Err(Error::Config(format!("gutzwiller.damping = {r} outside (0, 1)")));
                }
            }
        }
        if let Some(l) = &self.levels {
            if l.start == 0 || l.end < l.start {
                return Err(Error::Config("levels must satisfy 1 <= start <= end".into()));
            }
        }
        if let Some(t) = &self.test_function {
            if !(t.sigma > 0.0) {
                return Err(Error::Config("test_function.sigma must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Where a scenario and its model come from.
#[derive(Clone, Debug)]
pub struct ScenarioSource {
    pub scenario: Scenario,
    origin: Origin,
}

#[derive(Clone, Debug)]
enum Origin {
    File(PathBuf),
    Bundled,
}

impl ScenarioSource {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let scenario = Scenario::parse(&text).map_err(|e| anchor(path, e))?;
        Ok(Self {
            scenario,
            origin: Origin::File(path.parent().unwrap_or(Path::new(".")).to_path_buf()),
        })
    }

    pub fn bundled(name: &str) -> Result<Self> {
        let (_, text) = BUNDLED_SCENARIOS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::Config(format!("no bundled scenario `{name}`")))?;
        Ok(Self {
            scenario: Scenario::parse(text)?,
            origin: Origin::Bundled,
        })
    }

    pub fn model(&self) -> Result<Model> {
        match &self.origin {
            Origin::File(dir) => {
                let path = dir.join(&self.scenario.model);
                if path.exists() {
                    return Model::load(&path);
                }
                bundled_model(&self.scenario.model)
            }
            Origin::Bundled => bundled_model(&self.scenario.model),
        }
    }
}

fn anchor(path: &Path, e: Error) -> Error {
    match e {
        Error::Schema(msg) => Error::Schema(format!("{}: {msg}", path.display())),
        Error::Toml(t) => Error::Schema(format!("{}: {}", path.display(), t.to_string().trim())),
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    }
}

macro_rules! bundle {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../scenarios/", $name, ".toml")))),*]
    };
}

/// Scenarios shipped with the crate, by name.
pub const BUNDLED_SCENARIOS: &[(&str, &str)] = bundle![
    "flat-u1-weyl",
    "flat-u1-calibration",
    "flat-su2-weyl",
    "flat-su2-factorization",
    "flat-u1-holonomy",
    "lapse-gutzwiller",
    "positivity-u1",
    "positivity-su2",
];

const BUNDLED_MODELS: &[(&str, &str)] = &[
    ("models/flat-u1.toml", include_str!("../scenarios/models/flat-u1.toml")),
    ("models/flat-u1-q2.toml", include_str!("../scenarios/models/flat-u1-q2.toml")),
    ("models/flat-u1-flux.toml", include_str!("../scenarios/models/flat-u1-flux.toml")),
    ("models/flat-su2.toml", include_str!("../scenarios/models/flat-su2.toml")),
    ("models/lapse-u1.toml", include_str!("../scenarios/models/lapse-u1.toml")),
    ("models/well-u1.toml", include_str!("../scenarios/models/well-u1.toml")),
    ("models/well-su2.toml", include_str!("../scenarios/models/well-su2.toml")),
];

const BUNDLED_GOLDEN: &[(&str, &str)] = &[
    ("flat-u1-weyl", include_str!("../scenarios/golden/flat-u1-weyl.json")),
    ("flat-u1-calibration", include_str!("../scenarios/golden/flat-u1-calibration.json")),
    ("flat-su2-weyl", include_str!("../scenarios/golden/flat-su2-weyl.json")),
    ("flat-su2-factorization", include_str!("../scenarios/golden/flat-su2-factorization.json")),
    ("flat-u1-holonomy", include_str!("../scenarios/golden/flat-u1-holonomy.json")),
    ("lapse-gutzwiller", include_str!("../scenarios/golden/lapse-gutzwiller.json")),
    ("positivity-u1", include_str!("../scenarios/golden/positivity-u1.json")),
    ("positivity-su2", include_str!("../scenarios/golden/positivity-su2.json")),
];

fn bundled_model(name: &str) -> Result<Model> {
    let (_, text) = BUNDLED_MODELS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Config(format!("model file `{name}` not found")))?;
    ModelFile::parse(text)?.build(None)
}

/// Golden summary shipped for a bundled scenario.
pub fn bundled_golden(name: &str) -> Option<&'static str> {
    BUNDLED_GOLDEN.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// A summary number with its tolerance and the criterion it serves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: f64,
    pub tolerance: f64,
    pub criterion: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passed: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub schema_version: u32,
    pub seed: u64,
    pub energy: f64,
    pub quantities: BTreeMap<String, Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factorization: Option<FactorizationSummary>,
    pub artifacts: Vec<String>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizationSummary {
    pub exact: bool,
    pub levels: Vec<u32>,
    pub offending_levels: Vec<u32>,
}

impl Summary {
    /// 0 when every check holds, 2 when one is falsified.
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            2
        }
    }

    pub fn failed_checks(&self) -> Vec<(&str, &Quantity)> {
        self.quantities
            .iter()
            .filter(|(_, q)| q.passed == Some(false))
            .map(|(k, q)| (k.as_str(), q))
            .collect()
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

struct Recorder {
    quantities: BTreeMap<String, Quantity>,
    artifacts: Vec<String>,
    dir: PathBuf,
}

impl Recorder {
    fn put(&mut self, name: &str, value: f64, tolerance: f64, criterion: u8) {
        self.quantities.insert(
            name.to_string(),
            Quantity {
                value,
                tolerance,
                criterion,
                expected: None,
                min: None,
                max: None,
                passed: None,
            },
        );
    }

    fn file(&mut self, name: &str) -> Result<fs::File> {
        self.artifacts.push(name.to_string());
        Ok(fs::File::create(self.dir.join(name))?)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        self.artifacts.push(name.to_string());
        fs::write(self.dir.join(name), text + "\n")?;
        Ok(())
    }
}

/// Runs the pipeline of one scenario and writes its artifacts.
pub fn run(source: &ScenarioSource, opts: &RunOptions) -> Result<Summary> {
    let sc = &source.scenario;
    let model = source.model()?;
    let seed = opts.seed.unwrap_or(sc.seed);
    let dir = opts
        .out
        .clone()
        .or_else(|| sc.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(&sc.name));
    fs::create_dir_all(&dir)?;
    let mut rec = Recorder {
        quantities: BTreeMap::new(),
        artifacts: Vec::new(),
        dir,
    };
    let e = sc.energy;

    let model_text = model.to_file().to_toml()?;
    rec.artifacts.push("model.toml".into());
    fs::write(rec.dir.join("model.toml"), model_text)?;

    // Representation data.
    let ell = model.orbit_half_dimension();
    rec.put("n", 1.0, 0.0, 2);
    rec.put("ell", ell as f64, 0.0, 2);
    rec.put("weyl_exponent_expected", ell as f64, 0.0, 2);
    rec.put("dimension_level_1", model.weyl_dimension(1)? as f64, 0.0, 10);

    // Orbits.
    let atlas = match &sc.orbits {
        Some(cfg) => {
            let shooting = cfg.shooting();
            let orbits = reduction::find_periodic_orbits(&model, e, &shooting)?;
            let atlas = OrbitAtlas { energy: e, orbits };
            rec.put("orbit_count", atlas.orbits.len() as f64, 0.0, 4);
            for (i, o) in atlas.orbits.iter().enumerate() {
                rec.put(&format!("orbit_{i}_period"), o.period, shooting.newton_tol, 5);
                rec.put(&format!("orbit_{i}_det"), o.det_i_minus_p, 1e-6, 5);
                rec.put(&format!("orbit_{i}_holonomy_angle"), o.holonomy.arg(), 1e-8, 4);
            }
            rec.artifacts.push("orbits.json".into());
            fs::write(rec.dir.join("orbits.json"), atlas.to_json()? + "\n")?;
            Some(atlas)
        }
        None => None,
    };

    // Volume.
    let closed = reduction::flat_volume(&model, e);
    let volume = match &sc.volume {
        Some(v) => {
            let d = SamplerConfig::default();
            let cfg = SamplerConfig {
                seed,
                batch_size: d.batch_size,
                max_samples: v.max_samples.unwrap_or(d.max_samples),
                target_rel_error: v.target_rel_error.unwrap_or(d.target_rel_error),
            };
            let est = reduction::energy_surface_volume(&model, e, &cfg)?;
            rec.put("volume_mc", est.value, est.std_error, 3);
            if let Some(c) = closed {
                rec.put("volume_closed_form", c, 0.0, 3);
                rec.put("volume_rel_error", (est.value - c).abs() / c, 0.01, 3);
            }
            rec.json("volume.json", &est)?;
            Some(est.value)
        }
        None => closed,
    };

    // Spectra and the trace series.
    let series = match (&sc.levels, &sc.test_function) {
        (Some(levels), Some(tf)) => {
            let t0 = match (tf.t0, &atlas) {
                (Some(t0), _) => t0,
                (None, Some(a)) if !a.orbits.is_empty() => a.orbits[0].period,
                _ => {
                    return Err(Error::Config(
                        "test_function.t0 missing and no orbit to centre on".into(),
                    ))
                }
            };
            let phi = TestFunction {
                t0,
                sigma: tf.sigma,
                omega0: tf.omega0,
            };
            rec.put("test_function_t0", t0, 0.0, 5);
            let tables = spectra(&model, e, &phi, &levels.levels(), &sc.spectrum)?;
            spectrum::write_spectrum_csv(&tables, rec.file("spectrum.csv")?)?;
            spectrum::write_non_real_csv(&tables, rec.file("non_real.csv")?)?;
            let series = trace::mu(&tables, e, &phi, &model)?;
            series.write_csv(rec.file("series.csv")?)?;
            rec.json("series.json", &series)?;
            let max_tail = series.tail_bounds.iter().copied().fold(0.0, f64::max);
            rec.put("tail_bound_max", max_tail, 1e-10, 2);
            Some((series, phi))
        }
        _ => None,
    };

    if let Some((series, phi)) = &series {
        if series.len() >= 20 {
            let fit = trace::weyl_fit(series)?;
            rec.put("weyl_exponent", fit.exponent, fit.exponent_half_width, 2);
            rec.put("weyl_residual", fit.residual, 0.5, 2);
            rec.json("weyl_fit.json", &fit)?;
            if let (Some(vol), true) = (volume, fit.reliable && phi.value(0.0).norm() > 1e-8) {
                let cal = trace::calibrate_cnd(series, vol, phi)?;
                rec.put("calibrated_c", cal.c, cal.spread * cal.c, 3);
            }
        }
        if let (Some(g), Some(atlas)) = (&sc.gutzwiller, &atlas) {
            gutzwiller(&mut rec, series, atlas, g)?;
        }
    }

    if let (Some(sweep), Some((_, phi)), Some(levels)) = (&sc.sweep, &series, &sc.levels) {
        energy_sweep(&mut rec, &model, phi, &levels.levels(), &sc.spectrum, &sweep.energies)?;
    }

    if let Some(p) = &sc.positivity {
        let report = spectrum::positivity_threshold(&model, p.m_max, p.grid)?;
        let mut w = csv::Writer::from_writer(rec.file("positivity.csv")?);
        w.write_record(["m", "non_real", "min_energy", "passes"])?;
        for c in &report.levels {
            w.write_record([
                c.m.to_string(),
                c.non_real.to_string(),
                format!("{:.12e}", c.min_energy),
                c.passes.to_string(),
            ])?;
        }
        w.flush()?;
        rec.put("m0", report.m0 as f64, 0.0, 9);
        rec.put("positivity_witness", report.witness().is_some() as u8 as f64, 0.0, 9);
        let non_real: usize = report.levels.iter().map(|c| c.non_real).sum();
        rec.put("non_real_below_m0", non_real as f64, 0.0, 9);
    }

    let factorization = match &sc.factorization {
        Some(f) => {
            let mut reports = Vec::new();
            for &m in &f.levels {
                reports.push(spectrum::factorization_check(
                    &model,
                    m,
                    (-f.half_width, f.half_width),
                    f.grid,
                )?);
            }
            rec.json("factorization.json", &reports)?;
            let offending: Vec<u32> = reports.iter().filter(|r| !r.exact).map(|r| r.m).collect();
            let exact = offending.is_empty();
            rec.put("factorization_exact", exact as u8 as f64, 0.0, 7);
            let compared: usize = reports.iter().map(|r| r.entries.len()).sum();
            rec.put("factorization_eigenvalues", compared as f64, 0.0, 7);
            Some(FactorizationSummary {
                exact,
                levels: f.levels.clone(),
                offending_levels: offending,
            })
        }
        None => None,
    };

    let mut passed = true;
    for c in &sc.checks {
        let q = rec.quantities.get_mut(&c.quantity).ok_or_else(|| {
            Error::Config(format!("check refers to unknown quantity `{}`", c.quantity))
        })?;
        let ok = c.passes(q.value);
        q.criterion = c.criterion;
        q.expected = c.expected;
        q.min = c.min;
        q.max = c.max;
        if let Some(t) = c.tolerance {
            q.tolerance = t;
        }
        q.passed = Some(ok);
        passed &= ok;
    }

    rec.artifacts.push("summary.json".into());
    let summary = Summary {
        scenario: sc.name.clone(),
        schema_version: sc.schema_version,
        seed,
        energy: e,
        quantities: rec.quantities,
        factorization,
        artifacts: rec.artifacts,
        passed,
    };
    fs::write(
        rec.dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    Ok(summary)
}

fn spectra(
    model: &Model,
    e: f64,
    phi: &TestFunction,
    levels: &[u32],
    cfg: &SpectrumConfig,
) -> Result<Vec<SpectrumTable>> {
    use rayon::prelude::*;
    levels
        .par_iter()
        .map(|&m| {
            let window = trace::trace_window(e, m, phi);
            match cfg.method {
                SpectrumMethod::ClosedForm => spectrum::flat_spectrum(model, m, window, i64::MAX / 4),
                SpectrumMethod::Discretized => {
                    let certify = cfg.certify_every > 0 && (m - levels[0]) % cfg.certify_every == 0;
                    let opts = CollocationOptions {
                        grid: cfg.grid(m),
                        certify,
                    };
                    spectrum::generic_spectrum_1d_with(model, m, window, &opts)
                }
            }
        })
        .collect()
}

fn gutzwiller(
    rec: &mut Recorder,
    series: &TraceSeries,
    atlas: &OrbitAtlas,
    cfg: &GutzwillerConfig,
) -> Result<()> {
    let weyl = match cfg.weyl_degree {
        Some(d) => trace::smooth_part(series, d),
        None => vec![Complex64::new(0.0, 0.0); series.len()],
    };
    let fit = trace::gutzwiller_fit(series, &weyl, atlas, cfg.threshold)?;
    fit.write_csv(rec.file("peaks.csv")?)?;
    rec.json("gutzwiller.json", &fit)?;
    let bin = fit.bin_width;
    rec.put("dft_bin_width", bin, 0.0, 4);
    rec.put("peak_count", fit.peaks.len() as f64, 0.0, 4);
    rec.put("unmatched_peaks", fit.unmatched as f64, 0.0, 4);
    let offsets: Vec<f64> = fit
        .peaks
        .iter()
        .filter_map(|p| {
            let o = &atlas.orbits[p.matched_orbit?];
            let h = o.holonomy.arg();
            Some(ang_dist(p.angle, h).min(ang_dist(p.angle, -h)) / bin)
        })
        .collect();
    if !offsets.is_empty() {
        rec.put("max_peak_offset_bins", offsets.iter().copied().fold(0.0, f64::max), 1.0, 4);
    }
    if let Some(best) = fit
        .peaks
        .iter()
        .filter(|p| p.ratio.is_some())
        .max_by(|a, b| a.fitted_amplitude.partial_cmp(&b.fitted_amplitude).unwrap())
    {
        rec.put("dominant_peak_angle", best.angle, bin, 4);
        rec.put("dominant_peak_amplitude", best.fitted_amplitude.unwrap(), 0.0, 5);
        rec.put("dominant_peak_predicted", best.predicted_amplitude.unwrap(), 0.0, 5);
        rec.put("dominant_peak_ratio", best.ratio.unwrap(), 0.1, 5);
    }
    if let Some(r) = cfg.damping {
        let grid = trace::angle_grid(cfg.theta_grid);
        let y = trace::generating_function(series, &grid, r)?;
        let (i, _) = y
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap();
        let peak = grid[i];
        let offset = atlas
            .orbits
            .iter()
            .map(|o| {
                let h = o.holonomy.arg();
                ang_dist(peak, h).min(ang_dist(peak, -h))
            })
            .fold(f64::INFINITY, f64::min);
        rec.put("generating_peak_angle", peak, 2.0 * std::f64::consts::PI / cfg.theta_grid as f64, 4);
        rec.put("generating_peak_offset_bins", offset / bin, 1.0, 4);
    }
    Ok(())
}

fn ang_dist(a: f64, b: f64) -> f64 {
    let d = trace::wrap_angle(a - b);
    d.min(2.0 * std::f64::consts::PI - d)
}

fn energy_sweep(
    rec: &mut Recorder,
    model: &Model,
    phi: &TestFunction,
    levels: &[u32],
    cfg: &SpectrumConfig,
    energies: &[f64],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(rec.file("sweep.csv")?);
    w.write_record(["energy", "volume", "c"])?;
    let mut cs = Vec::new();
    let mut vols = Vec::new();
    for &e in energies {
        let vol = reduction::flat_volume(model, e)
            .ok_or_else(|| Error::Unsupported("energy sweep needs a flat model".into()))?;
        let tables = spectra(model, e, phi, levels, cfg)?;
        let series = trace::mu(&tables, e, phi, model)?;
        let cal = trace::calibrate_cnd(&series, vol, phi)?;
        w.write_record([format!("{e:.12e}"), format!("{vol:.12e}"), format!("{:.12e}", cal.c)])?;
        cs.push(cal.c);
        vols.push(vol);
    }
    w.flush()?;
    let (lo, hi) = min_max(&cs);
    let (vlo, vhi) = min_max(&vols);
    rec.put("sweep_c_spread", (hi - lo) / lo, 0.02, 3);
    rec.put("sweep_volume_ratio", vhi / vlo, 0.0, 3);
    rec.put("sweep_c_mean", cs.iter().sum::<f64>() / cs.len() as f64, 0.0, 3);
    Ok(())
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

/// Field-by-field comparison of two summaries; floats within `GOLDEN_TOL`
/// (relative above 1). Returns the differing field paths.
pub fn golden_diff(expected: &Value, actual: &Value) -> Vec<String> {
    let mut out = Vec::new();
    diff_into("", expected, actual, &mut out);
    out
}

fn diff_into(path: &str, a: &Value, b: &Value, out: &mut Vec<String>) {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            for (k, va) in x {
                let p = format!("{path}/{k}");
                match y.get(k) {
                    Some(vb) => diff_into(&p, va, vb, out),
                    None => out.push(format!("{p}: missing")),
                }
            }
            for k in y.keys().filter(|k| !x.contains_key(*k)) {
                out.push(format!("{path}/{k}: unexpected"));
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            if x.len() != y.len() {
                out.push(format!("{path}: length {} != {}", x.len(), y.len()));
                return;
            }
            for (i, (va, vb)) in x.iter().zip(y).enumerate() {
                diff_into(&format!("{path}/{i}"), va, vb, out);
            }
        }
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            if (x - y).abs() > GOLDEN_TOL * x.abs().max(1.0) {
                out.push(format!("{path}: expected {x:e}, got {y:e}"));
            }
        }
        _ => {
            if a != b {
                out.push(format!("{path}: expected {a}, got {b}"));
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioResult {
    pub name: String,
    pub exit_code: i32,
    pub error: Option<String>,
    pub golden_diffs: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub scenarios: Vec<ScenarioResult>,
    /// Pass/fail per acceptance criterion touched by the bundled scenarios.
    pub criteria: BTreeMap<u8, bool>,
    /// Relative spread of `calibrated_c` across scenarios sharing `(n, l, d)`.
    pub c_consistency: Vec<(String, f64)>,
}

impl VerifyReport {
    pub fn exit_code(&self) -> i32 {
        if self.scenarios.iter().any(|s| s.exit_code == 1) {
            1
        } else if self.criteria.values().all(|&v| v) {
            0
        } else {
            2
        }
    }
}

/// Runs every bundled scenario sequentially (outputs under `out/<name>`),
/// compares each summary with its golden file and aggregates per criterion.
pub fn verify_all(out: &Path, seed: Option<u64>) -> VerifyReport {
    let mut scenarios = Vec::new();
    let mut criteria: BTreeMap<u8, bool> = BTreeMap::new();
    let mut cs: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (name, _) in BUNDLED_SCENARIOS {
        let opts = RunOptions {
            out: Some(out.join(name)),
            seed,
        };
        let result = ScenarioSource::bundled(name).and_then(|s| {
            let model = s.model()?;
            let summary = run(&s, &opts)?;
            Ok((model, summary))
        });
        match result {
            Ok((model, summary)) => {
                for q in summary.quantities.values() {
                    if let Some(p) = q.passed {
                        *criteria.entry(q.criterion).or_insert(true) &= p;
                    }
                }
                if let Some(c) = summary.quantities.get("calibrated_c") {
                    let key = format!(
                        "n=1,l={},d={}",
                        model.orbit_half_dimension(),
                        model.group.dim
                    );
                    cs.entry(key).or_default().push(c.value);
                }
                let mut diffs = Vec::new();
                if seed.is_none() {
                    if let Some(g) = bundled_golden(name) {
                        match (serde_json::from_str::<Value>(g), serde_json::to_value(&summary)) {
                            (Ok(g), Ok(s)) => diffs = golden_diff(&g, &s),
                            (Err(e), _) | (_, Err(e)) => diffs.push(format!("golden parse: {e}")),
                        }
                    }
                }
                let code = if !diffs.is_empty() { 2 } else { summary.exit_code() };
                scenarios.push(ScenarioResult {
                    name: name.to_string(),
                    exit_code: code,
                    error: None,
                    golden_diffs: diffs,
                });
            }
            Err(e) => scenarios.push(ScenarioResult {
                name: name.to_string(),
                exit_code: 1,
                error: Some(e.to_string()),
                golden_diffs: Vec::new(),
            }),
        }
    }
    let mut c_consistency = Vec::new();
    for (key, v) in cs {
        if v.len() > 1 {
            let (lo, hi) = min_max(&v);
            let spread = (hi - lo) / lo;
            *criteria.entry(3).or_insert(true) &= spread <= 0.02;
            c_consistency.push((key, spread));
        }
    }
    if scenarios.iter().any(|s| !s.golden_diffs.is_empty()) {
        criteria.insert(0, false);
    }
    VerifyReport {
        scenarios,
        criteria,
        c_consistency,
    }
}
