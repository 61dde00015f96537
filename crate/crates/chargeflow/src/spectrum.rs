//! Frequencies of the stationary wave operator on the isotypic space `H_m`.
//!
//! A mode `u = e^{-i lambda t} v(x)` at level `m` solves the quadratic pencil
//!
//! ```text
//! lambda^2 v + lambda B v + C v = 0,
//! B = i nu (w D + D w),                w = sqrt(h) beta / N,  nu = N / sqrt(h)
//! C = nu D (N sqrt(h) g^xx D) - N^2 (c_m + V),  g^xx = 1/h - beta^2/N^2
//! ```
//!
//! with `D = d/dx - i <A(x), xi_m>`. Flat models are solved in closed form;
//! everything else by Fourier collocation on an odd grid.

use faer::{c64, Mat, Side};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::Model;

/// Absolute clustering tolerance for discretized multiplicities.
pub const CLUSTER_TOL: f64 = 1e-7;
/// Imaginary parts above this are reported as non-real.
pub const NONREAL_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedForm,
    Discretized,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub lambda: f64,
    pub multiplicity: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub grid: Option<usize>,
    pub refined_grid: Option<usize>,
    /// Largest in-window eigenvalue change between the two grids.
    pub refinement_error: Option<f64>,
    pub k_cutoff: Option<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTable {
    pub m: u32,
    pub eigenvalues: Vec<Eigenvalue>,
    pub window: (f64, f64),
    pub method: Method,
    pub resolution: Resolution,
    pub non_real: Vec<Complex64>,
}

impl SpectrumTable {
    /// Eigenvalue count with multiplicity in `[a, b]`.
    pub fn count_in(&self, a: f64, b: f64) -> u64 {
        self.eigenvalues
            .iter()
            .filter(|e| e.lambda >= a && e.lambda <= b)
            .map(|e| e.multiplicity)
            .sum()
    }

    pub fn total(&self) -> u64 {
        self.eigenvalues.iter().map(|e| e.multiplicity).sum()
    }

    /// Eigenvalues repeated by multiplicity.
    pub fn expanded(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .flat_map(|e| std::iter::repeat_n(e.lambda, e.multiplicity as usize))
            .collect()
    }

    /// Whether `[a, b]` lies inside the certified window.
    pub fn covers(&self, a: f64, b: f64) -> bool {
        self.window.0 <= a && b <= self.window.1
    }
}

/// A discretized mode on the collocation grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeFunction {
    pub m: u32,
    /// Position of the mode in the sorted eigen-decomposition.
    pub k: usize,
    pub lambda: Complex64,
    /// Values `v(x_j)` on the grid `x_j = j L / K`.
    pub values: Vec<Complex64>,
}

/// `<A(x), xi_m>` coupling and the Casimir for level `m`.
fn level_data(model: &Model, m: u32) -> Result<(Vec<f64>, f64, u64)> {
    if !model.connection_is_cartan() {
        return Err(Error::Unsupported(
            "spectra need a connection valued in the Cartan directions".into(),
        ));
    }
    let xi = model.group.charge_covector(&model.weight.at_level(m))?;
    Ok((xi, model.casimir(m)?, model.weyl_dimension(m)?))
}

struct FlatParams {
    beta: f64,
    shift: f64,
    c: f64,
    dim: u64,
}

fn flat_params(model: &Model, m: u32) -> Result<FlatParams> {
    let g = &model.geometry;
    let unit = |s: &crate::geometry::TrigSeries| s.is_constant() && (s.a0 - 1.0).abs() < 1e-15;
    let consts = g.shift.is_constant() && g.potential.is_constant() && model.connection.is_constant();
    if !unit(&g.lapse) || !unit(&g.metric) || !consts {
        return Err(Error::Unsupported(
            "closed-form spectra need N = h = 1 and constant shift, potential and connection".into(),
        ));
    }
    if (g.circumference - 2.0 * PI).abs() > 1e-12 {
        return Err(Error::Unsupported("closed-form spectra assume circumference 2 pi".into()));
    }
    let (xi, cas, dim) = level_data(model, m)?;
    let a = model.connection_at(0.0);
    Ok(FlatParams {
        beta: g.shift.a0,
        shift: a.iter().zip(&xi).map(|(u, v)| u * v).sum(),
        c: cas + g.potential.a0,
        dim,
    })
}

/// Closed-form spectrum of a flat model: `lambda = beta k~ +- sqrt(k~^2 + c_m + V)`
/// with `k~ = k - <A, xi_m>`, each `(k, sign)` carrying `d_m` states.
pub fn flat_spectrum(model: &Model, m: u32, window: (f64, f64), k_cutoff: i64) -> Result<SpectrumTable> {
    let fp = flat_params(model, m)?;
    let reach = window.0.abs().max(window.1.abs()) + (-fp.c).max(0.0).sqrt();
    let need = (reach / (1.0 - fp.beta.abs())).ceil() as i64 + 1;
    if need > k_cutoff {
        return Err(Error::IncompleteWindow {
            m,
            detail: format!("window needs |k~| up to {need}, cutoff is {k_cutoff}"),
        });
    }
    let a = fp.shift;
    let mirror = fp.beta == 0.0 && (2.0 * a - (2.0 * a).round()).abs() < 1e-12;
    let two_a = (2.0 * a).round() as i64;
    let centre = a.round() as i64;
    let mut keyed: std::collections::BTreeMap<(i64, i8), (f64, u64)> = Default::default();
    let mut non_real = Vec::new();
    for k in centre - need - 1..=centre + need + 1 {
        let kt = k as f64 - a;
        let disc = kt * kt + fp.c;
        if disc < 0.0 {
            let z = Complex64::new(fp.beta * kt, (-disc).sqrt());
            if z.re >= window.0 && z.re <= window.1 {
                non_real.push(z);
                non_real.push(z.conj());
            }
            continue;
        }
        for sign in [-1i8, 1] {
            let lambda = fp.beta * kt + sign as f64 * disc.sqrt();
            if lambda < window.0 || lambda > window.1 {
                continue;
            }
            // Under beta = 0 and half-integral 2a, k and 2a - k share |k~|.
            let key = if mirror { ((2 * k - two_a).abs(), sign) } else { (k, sign) };
            let sign_key = if disc == 0.0 { (key.0, 0) } else { key };
            let entry = keyed.entry(sign_key).or_insert((lambda, 0));
            entry.1 += fp.dim;
        }
    }
    let mut eigenvalues: Vec<Eigenvalue> = keyed
        .into_values()
        .map(|(lambda, multiplicity)| Eigenvalue { lambda, multiplicity })
        .collect();
    eigenvalues.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    non_real.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(SpectrumTable {
        m,
        eigenvalues,
        window,
        method: Method::ClosedForm,
        resolution: Resolution {
            k_cutoff: Some(k_cutoff),
            ..Default::default()
        },
        non_real,
    })
}

/// Fourier differentiation matrix on `K` (odd) equispaced points of `[0, L)`.
pub fn differentiation_matrix(k: usize, l: f64) -> Mat<f64> {
    assert!(k % 2 == 1, "collocation grid must be odd");
    Mat::from_fn(k, k, |i, j| {
        if i == j {
            0.0
        } else {
            let d = i as f64 - j as f64;
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            PI / l * sign / (PI * d / k as f64).sin()
        }
    })
}

struct Collocation {
    x: Vec<f64>,
    /// Covariant derivative `D - i a(x)`.
    da: Mat<c64>,
    lapse: Vec<f64>,
    metric: Vec<f64>,
    beta: Vec<f64>,
    mass: Vec<f64>,
}

impl Collocation {
    fn new(model: &Model, m: u32, k: usize) -> Result<Self> {
        let (xi, cas, _) = level_data(model, m)?;
        let l = model.circumference();
        let x: Vec<f64> = (0..k).map(|j| j as f64 * l / k as f64).collect();
        let a: Vec<f64> = x
            .iter()
            .map(|&x| model.connection_at(x).iter().zip(&xi).map(|(u, v)| u * v).sum())
            .collect();
        let d = differentiation_matrix(k, l);
        let da = Mat::from_fn(k, k, |i, j| {
            let mut z = c64::new(d[(i, j)], 0.0);
            if i == j {
                z.im -= a[i];
            }
            z
        });
        Ok(Self {
            lapse: x.iter().map(|&x| model.lapse(x)).collect(),
            metric: x.iter().map(|&x| model.metric(x)).collect(),
            beta: x.iter().map(|&x| model.shift_vector(x)).collect(),
            mass: x.iter().map(|&x| cas + model.potential(x)).collect(),
            x,
            da,
        })
    }

    fn k(&self) -> usize {
        self.x.len()
    }

    fn nu(&self, j: usize) -> f64 {
        self.lapse[j] / self.metric[j].sqrt()
    }

    fn shift_free(&self) -> bool {
        self.beta.iter().all(|b| *b == 0.0)
    }

    /// `M = -S D nu D S + N^2 (c + V)` with `S = sqrt(nu)`; `lambda^2` are its eigenvalues.
    fn hermitian(&self) -> Mat<c64> {
        let k = self.k();
        let s: Vec<f64> = (0..k).map(|j| self.nu(j).sqrt()).collect();
        let t = Mat::from_fn(k, k, |i, j| self.da[(i, j)] * (s[i] * s[j]));
        let mut m = -(&t * &t);
        for j in 0..k {
            m[(j, j)] += c64::new(self.lapse[j].powi(2) * self.mass[j], 0.0);
        }
        m
    }

    /// First-order companion form of the pencil.
    fn companion(&self) -> Mat<c64> {
        let k = self.k();
        let i = c64::new(0.0, 1.0);
        let w: Vec<f64> = (0..k)
            .map(|j| self.metric[j].sqrt() * self.beta[j] / self.lapse[j])
            .collect();
        let gxx: Vec<f64> = (0..k)
            .map(|j| {
                let n = self.lapse[j];
                n * self.metric[j].sqrt() * (1.0 / self.metric[j] - self.beta[j].powi(2) / (n * n))
            })
            .collect();
        let dgd = {
            let scaled = Mat::from_fn(k, k, |r, c| self.da[(r, c)] * gxx[r]);
            &self.da * &scaled
        };
        let mut a = Mat::<c64>::zeros(2 * k, 2 * k);
        for r in 0..k {
            a[(r, k + r)] = c64::new(1.0, 0.0);
            let nu = self.nu(r);
            for c in 0..k {
                let mut cc = nu * dgd[(r, c)];
                let bb = i * nu * self.da[(r, c)] * (w[r] + w[c]);
                if r == c {
                    cc -= c64::new(self.lapse[r].powi(2) * self.mass[r], 0.0);
                }
                a[(k + r, c)] = -cc;
                a[(k + r, k + c)] = -bb;
            }
        }
        a
    }

    fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        if self.shift_free() {
            let evs = self
                .hermitian()
                .self_adjoint_eigenvalues(Side::Lower)
                .map_err(|e| Error::Resolution(format!("eigensolver: {e:?}")))?;
            Ok(evs.into_iter().flat_map(square_roots).collect())
        } else {
            let evs = self
                .companion()
                .eigenvalues()
                .map_err(|e| Error::Resolution(format!("eigensolver: {e:?}")))?;
            Ok(evs.into_iter().map(|z| Complex64::new(z.re, z.im)).collect())
        }
    }

    fn modes(&self, m: u32) -> Result<Vec<ModeFunction>> {
        let k = self.k();
        let mut out = Vec::new();
        if self.shift_free() {
            let eig = self
                .hermitian()
                .self_adjoint_eigen(Side::Lower)
                .map_err(|e| Error::Resolution(format!("eigensolver: {e:?}")))?;
            let u = eig.U();
            let s = eig.S();
            for col in 0..k {
                let values: Vec<Complex64> =
                    (0..k).map(|j| u[(j, col)] * self.nu(j).sqrt()).collect();
                for lambda in square_roots(s[col].re) {
                    out.push(ModeFunction {
                        m,
                        k: out.len(),
                        lambda,
                        values: values.clone(),
                    });
                }
            }
        } else {
            let eig = self
                .companion()
                .eigen()
                .map_err(|e| Error::Resolution(format!("eigensolver: {e:?}")))?;
            let u = eig.U();
            let s = eig.S();
            let mut order: Vec<usize> = (0..2 * k).collect();
            order.sort_by(|&a, &b| s[a].re.total_cmp(&s[b].re));
            for col in order {
                out.push(ModeFunction {
                    m,
                    k: out.len(),
                    lambda: s[col],
                    values: (0..k).map(|j| u[(j, col)]).collect(),
                });
            }
        }
        Ok(out)
    }
}

fn square_roots(e: f64) -> [Complex64; 2] {
    if e >= 0.0 {
        let r = e.sqrt();
        [Complex64::new(-r, 0.0), Complex64::new(r, 0.0)]
    } else {
        let r = (-e).sqrt();
        [Complex64::new(0.0, -r), Complex64::new(0.0, r)]
    }
}

fn is_real(z: &Complex64) -> bool {
    z.im.abs() <= NONREAL_TOL
}

/// Clusters sorted real values with the absolute tolerance.
fn cluster(values: &[f64], weight: u64) -> Vec<Eigenvalue> {
    let mut out: Vec<Eigenvalue> = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] - values[i - 1] > CLUSTER_TOL {
            if i > start {
                let group = &values[start..i];
                out.push(Eigenvalue {
                    lambda: group.iter().sum::<f64>() / group.len() as f64,
                    multiplicity: group.len() as u64 * weight,
                });
            }
            start = i;
        }
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CollocationOptions {
    /// Odd collocation size `K`; even values are bumped by one.
    pub grid: usize,
    /// Compare against grid `2K + 1` and fail on count mismatch.
    pub certify: bool,
}

impl CollocationOptions {
    pub fn new(grid: usize) -> Self {
        Self { grid, certify: true }
    }
}

/// Discretized spectrum of `H_m`, certified against a refined grid.
pub fn generic_spectrum_1d(model: &Model, m: u32, window: (f64, f64), grid_size: usize) -> Result<SpectrumTable> {
    generic_spectrum_1d_with(model, m, window, &CollocationOptions::new(grid_size))
}

pub fn generic_spectrum_1d_with(
    model: &Model,
    m: u32,
    window: (f64, f64),
    opts: &CollocationOptions,
) -> Result<SpectrumTable> {
    let k = opts.grid | 1;
    let (_, _, dim) = level_data(model, m)?;
    let coarse = Collocation::new(model, m, k)?.eigenvalues()?;
    let (reals, mut non_real) = split(&coarse, window);
    let mut resolution = Resolution {
        grid: Some(k),
        ..Default::default()
    };
    let mut chosen = reals;
    if opts.certify {
        let k2 = 2 * k + 1;
        let fine = Collocation::new(model, m, k2)?.eigenvalues()?;
        let (fine_reals, fine_non_real) = split(&fine, window);
        if fine_reals.len() != chosen.len() {
            return Err(Error::IncompleteWindow {
                m,
                detail: format!(
                    "{} eigenvalues in window at grid {k}, {} at grid {k2}",
                    chosen.len(),
                    fine_reals.len()
                ),
            });
        }
        let err = chosen
            .iter()
            .zip(&fine_reals)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        resolution.refined_grid = Some(k2);
        resolution.refinement_error = Some(err);
        chosen = fine_reals;
        non_real = fine_non_real;
    }
    Ok(SpectrumTable {
        m,
        eigenvalues: cluster(&chosen, dim),
        window,
        method: Method::Discretized,
        resolution,
        non_real,
    })
}

fn split(values: &[Complex64], window: (f64, f64)) -> (Vec<f64>, Vec<Complex64>) {
    let mut reals: Vec<f64> = values
        .iter()
        .filter(|z| is_real(z) && z.re >= window.0 && z.re <= window.1)
        .map(|z| z.re)
        .collect();
    reals.sort_by(f64::total_cmp);
    let mut non_real: Vec<Complex64> = values
        .iter()
        .filter(|z| !is_real(z) && z.re >= window.0 && z.re <= window.1)
        .copied()
        .collect();
    non_real.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    (reals, non_real)
}

/// Spectra for many levels in parallel; `window(m)` gives each level's window.
pub fn spectra_for_levels<F>(model: &Model, levels: &[u32], window: F, opts: &CollocationOptions) -> Result<Vec<SpectrumTable>>
where
    F: Fn(u32) -> (f64, f64) + Sync,
{
    levels
        .par_iter()
        .map(|&m| generic_spectrum_1d_with(model, m, window(m), opts))
        .collect()
}

/// All discretized modes at level `m`, normalized to `Q = 1` where `Q > 0`.
pub fn generic_modes(model: &Model, m: u32, grid: usize) -> Result<Vec<ModeFunction>> {
    let col = Collocation::new(model, m, grid | 1)?;
    let mut modes = col.modes(m)?;
    for mode in &mut modes {
        let q = energy_form(model, mode)?;
        if q > 0.0 {
            let s = 1.0 / q.sqrt();
            for v in &mut mode.values {
                *v *= s;
            }
        }
    }
    Ok(modes)
}

/// Conserved energy `Q(u)` of `u = e^{-i lambda t} v` over one time slice:
///
/// `int [ (|d_t u|^2 + (N^2/h - beta^2) |D u|^2) / 2N + N (V + c_m) |u|^2 / 2 ] sqrt(h) dx`.
pub fn energy_form(model: &Model, mode: &ModeFunction) -> Result<f64> {
    let k = mode.values.len();
    if k == 0 {
        return Ok(0.0);
    }
    if k % 2 == 0 {
        return Err(Error::Resolution("mode grid must be odd".into()));
    }
    let col = Collocation::new(model, mode.m, k)?;
    let v = Mat::from_fn(k, 1, |j, _| mode.values[j]);
    let dv = &col.da * &v;
    let l = model.circumference();
    let lam2 = mode.lambda.norm_sqr();
    let mut q = 0.0;
    for j in 0..k {
        let n = col.lapse[j];
        let h = col.metric[j];
        let b = col.beta[j];
        let density = (lam2 * mode.values[j].norm_sqr() + (n * n / h - b * b) * dv[(j, 0)].norm_sqr())
            / (2.0 * n)
            + 0.5 * n * col.mass[j] * mode.values[j].norm_sqr();
        q += density * h.sqrt();
    }
    let q = q * l / k as f64;
    if !q.is_finite() {
        return Err(Error::Resolution("energy quadrature is not finite".into()));
    }
    Ok(q)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelCertificate {
    pub m: u32,
    pub non_real: usize,
    pub min_energy: f64,
    pub passes: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub m0: u32,
    pub levels: Vec<LevelCertificate>,
}

impl PositivityReport {
    /// A level below `m0` with a non-real eigenvalue or `Q <= 0`, if any.
    pub fn witness(&self) -> Option<&LevelCertificate> {
        self.levels.iter().find(|c| c.m < self.m0 && !c.passes)
    }
}

/// Smallest `m <= m_max` above which every mode is real with `Q > 0`.
pub fn positivity_threshold(model: &Model, m_max: u32, grid: usize) -> Result<PositivityReport> {
    let levels: Vec<u32> = (1..=m_max).collect();
    let levels: Vec<LevelCertificate> = levels
        .par_iter()
        .map(|&m| {
            let modes = generic_modes(model, m, grid)?;
            let mut non_real = 0;
            let mut min_energy = f64::INFINITY;
            for mode in &modes {
                if !is_real(&mode.lambda) {
                    non_real += 1;
                } else {
                    min_energy = min_energy.min(energy_form(model, mode)?);
                }
            }
            Ok(LevelCertificate {
                m,
                non_real,
                min_energy,
                passes: non_real == 0 && min_energy > 0.0,
            })
        })
        .collect::<Result<_>>()?;
    let mut m0 = None;
    for c in levels.iter().rev() {
        if c.passes {
            m0 = Some(c.m);
        } else {
            break;
        }
    }
    let Some(m0) = m0 else {
        let last = levels.last().unwrap();
        return Err(Error::ThresholdNotFound(format!(
            "level {} has {} non-real eigenvalues, min Q = {:.3e}",
            last.m, last.non_real, last.min_energy
        )));
    };
    Ok(PositivityReport { m0, levels })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizationEntry {
    pub lambda: f64,
    pub isotypic: u64,
    pub bundle: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizationReport {
    pub m: u32,
    pub dimension: u64,
    pub exact: bool,
    pub entries: Vec<FactorizationEntry>,
    pub offending: Vec<f64>,
}

/// Compares `H_m` multiplicities (closed form) with `d_m` times the
/// multiplicities of the scalar bundle operator (discretized, independent).
pub fn factorization_check(model: &Model, m: u32, window: (f64, f64), grid: usize) -> Result<FactorizationReport> {
    let iso = flat_spectrum(model, m, window, 1 << 20)?;
    let dim = model.weyl_dimension(m)?;
    let col = Collocation::new(model, m, grid | 1)?;
    let (mut reals, _) = split(&col.eigenvalues()?, window);
    reals.sort_by(f64::total_cmp);
    let bundle = cluster(&reals, 1);
    let mut entries = Vec::new();
    let mut offending = Vec::new();
    let mut j = 0;
    for e in &iso.eigenvalues {
        while j < bundle.len() && bundle[j].lambda < e.lambda - 1e-6 {
            offending.push(bundle[j].lambda);
            j += 1;
        }
        let b = if j < bundle.len() && (bundle[j].lambda - e.lambda).abs() <= 1e-6 {
            j += 1;
            bundle[j - 1].multiplicity
        } else {
            0
        };
        if e.multiplicity != dim * b {
            offending.push(e.lambda);
        }
        entries.push(FactorizationEntry {
            lambda: e.lambda,
            isotypic: e.multiplicity,
            bundle: b,
        });
    }
    offending.extend(bundle[j..].iter().map(|b| b.lambda));
    Ok(FactorizationReport {
        m,
        dimension: dim,
        exact: offending.is_empty(),
        entries,
        offending,
    })
}

/// CSV rows `m, lambda, multiplicity, method`.
pub fn write_spectrum_csv<W: std::io::Write>(tables: &[SpectrumTable], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["m", "lambda", "multiplicity", "method"])?;
    for t in tables {
        let method = match t.method {
            Method::ClosedForm => "closed-form",
            Method::Discretized => "discretized",
        };
        for e in &t.eigenvalues {
            w.write_record([
                t.m.to_string(),
                format!("{:.17e}", e.lambda),
                e.multiplicity.to_string(),
                method.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// CSV rows `m, re, im` of the non-real eigenvalues.
pub fn write_non_real_csv<W: std::io::Write>(tables: &[SpectrumTable], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["m", "re", "im"])?;
    for t in tables {
        for z in &t.non_real {
            w.write_record([t.m.to_string(), format!("{:.17e}", z.re), format!("{:.17e}", z.im)])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BaseGeometry, ConnectionSpec, TrigSeries};
    use crate::lie::GroupData;
    use approx::assert_relative_eq;

    fn lookup(t: &SpectrumTable, lambda: f64) -> Option<u64> {
        t.eigenvalues
            .iter()
            .find(|e| (e.lambda - lambda).abs() < 1e-9)
            .map(|e| e.multiplicity)
    }

    #[test]
    fn flat_examples() {
        let t = flat_spectrum(&Model::flat_u1(1.0, 0.0, 0.0), 1, (-1.2, 1.2), 1000).unwrap();
        assert_eq!(t.expanded(), vec![-1.0, 1.0]);
        let t = flat_spectrum(&Model::flat_u1(2.0, 0.0, 0.0), 2, (-6.0, 6.0), 1000).unwrap();
        // k = +-3 both give 5.
        assert_eq!(lookup(&t, 5.0), Some(2));
        assert_eq!(lookup(&t, -5.0), Some(2));
        let t = flat_spectrum(&Model::flat_u1(1.0, 0.5, 0.0), 2, (-10.0, 10.0), 1000).unwrap();
        for k in -5..=5 {
            let l = (((k - 1) as f64).powi(2) + 4.0).sqrt();
            if l < 10.0 {
                assert!(lookup(&t, l).is_some(), "k = {k}");
            }
        }
        // k = 1 is the unpaired mode.
        assert_eq!(lookup(&t, 2.0), Some(1));
        assert!(matches!(
            flat_spectrum(&Model::flat_u1(1.0, 0.0, 0.0), 1, (-1e4, 1e4), 100),
            Err(Error::IncompleteWindow { .. })
        ));
    }

    /// Dense finite-difference oracle for the flat U(1) torus operator.
    #[test]
    fn flat_matches_finite_difference_oracle() {
        let model = Model::flat_u1(2.0, 0.0, 0.0);
        let n = 4000;
        let h = 2.0 * PI / n as f64;
        // Second-order FD eigenvalues of -d^2/dx^2 are (2 - 2 cos(k h)) / h^2.
        for k in [0i32, 1, 3] {
            let fd = (2.0 - 2.0 * (k as f64 * h).cos()) / (h * h);
            let lam = (fd + 16.0).sqrt();
            let t = flat_spectrum(&model, 2, (0.0, 10.0), 1000).unwrap();
            let closest = t
                .eigenvalues
                .iter()
                .map(|e| (e.lambda - lam).abs())
                .fold(f64::INFINITY, f64::min);
            assert!(closest < 1e-4 * (1 + k * k) as f64);
        }
    }

    #[test]
    fn collocation_matches_closed_form() {
        for model in [
            Model::flat_u1(1.0, 0.3, 0.0),
            Model::flat_u1(1.0, 0.3, 0.4),
            Model::flat_su2(0.25, 0.2),
        ] {
            for m in [1, 3] {
                let window = (-30.0, 30.0);
                let exact = flat_spectrum(&model, m, window, 1000).unwrap();
                let num = generic_spectrum_1d(&model, m, window, 121).unwrap();
                let (a, b) = (exact.expanded(), num.expanded());
                assert_eq!(a.len(), b.len());
                for (x, y) in a.iter().zip(&b) {
                    assert!((x - y).abs() < 1e-8 * x.abs().max(1.0), "{x} {y}");
                }
            }
        }
    }

    #[test]
    fn variable_lapse_spectral_convergence() {
        let model = Model::variable_lapse_u1(1.0, 0.1);
        let window = (0.0, 8.0);
        let a = generic_spectrum_1d_with(&model, 4, window, &CollocationOptions { grid: 15, certify: false }).unwrap();
        let b = generic_spectrum_1d_with(&model, 4, window, &CollocationOptions { grid: 31, certify: false }).unwrap();
        let c = generic_spectrum_1d_with(&model, 4, window, &CollocationOptions { grid: 63, certify: false }).unwrap();
        let (a, b, c) = (a.expanded(), b.expanded(), c.expanded());
        assert_eq!(a.len(), c.len());
        let e1 = a.iter().zip(&c).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let e2 = b.iter().zip(&c).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(e2 < 1e-12 || e1 / e2 > 100.0, "{e1} {e2}");
    }

    #[test]
    fn symmetric_spectrum_without_shift() {
        let model = Model::variable_lapse_u1(1.0, 0.2);
        let t = generic_spectrum_1d(&model, 2, (-12.0, 12.0), 41).unwrap();
        let v = t.expanded();
        for (x, y) in v.iter().zip(v.iter().rev()) {
            assert!((x + y).abs() < 1e-9);
        }
    }

    #[test]
    fn energy_form_flat_closed_form() {
        let model = Model::flat_u1(1.0, 0.0, 0.0);
        // v = e^{ikx}: Q = pi (lambda^2 + k^2 + c) on L = 2 pi.
        let k = 33;
        let kk = 3.0;
        let values: Vec<Complex64> = (0..k)
            .map(|j| Complex64::from_polar(1.0, kk * 2.0 * PI * j as f64 / k as f64))
            .collect();
        let lambda = (kk * kk + 4.0f64).sqrt();
        let mode = ModeFunction {
            m: 2,
            k: 0,
            lambda: Complex64::new(lambda, 0.0),
            values,
        };
        let q = energy_form(&model, &mode).unwrap();
        assert_relative_eq!(q, PI * (lambda * lambda + kk * kk + 4.0), max_relative = 1e-12);
        let zero = ModeFunction {
            values: vec![Complex64::new(0.0, 0.0); k],
            ..mode
        };
        assert_eq!(energy_form(&model, &zero).unwrap(), 0.0);
    }

    #[test]
    fn energy_form_positive_and_normalized() {
        let model = Model::variable_lapse_u1(1.0, 0.1);
        let mut count = 0;
        for m in 1..=4 {
            for mode in generic_modes(&model, m, 51).unwrap() {
                let q = energy_form(&model, &mode).unwrap();
                assert_relative_eq!(q, 1.0, epsilon = 1e-9);
                count += 1;
            }
        }
        assert!(count >= 200);
    }

    #[test]
    fn threshold_with_negative_well() {
        let mut g = BaseGeometry::flat(0.0);
        g.potential = TrigSeries::constant(-10.0);
        let u1 = Model::new(g.clone(), ConnectionSpec::zero(1), GroupData::u1(), vec![1.0]).unwrap();
        let r = positivity_threshold(&u1, 8, 21).unwrap();
        // Oracle: the k = 0 mode is real iff c_m > 10.
        let oracle = (1..=8).find(|&m| (m * m) as f64 > 10.0).unwrap();
        assert_eq!(r.m0, oracle);
        assert!(r.witness().is_some());
        let su2 = Model::new(g, ConnectionSpec::zero(3), GroupData::su2(), vec![1.0]).unwrap();
        let r = positivity_threshold(&su2, 8, 21).unwrap();
        let oracle = (1..=8).find(|&m| (m * m) as f64 / 2.0 + m as f64 > 10.0).unwrap();
        assert_eq!(r.m0, oracle);
        assert!(matches!(
            positivity_threshold(&u1, 3, 21),
            Err(Error::ThresholdNotFound(_))
        ));
    }

    #[test]
    fn nonnegative_potential_threshold_is_one() {
        let model = Model::variable_lapse_u1(1.0, 0.1);
        assert_eq!(positivity_threshold(&model, 4, 21).unwrap().m0, 1);
    }

    #[test]
    fn factorization_su2() {
        let model = Model::flat_su2(0.0, 0.0);
        let r = factorization_check(&model, 3, (-20.0, 20.0), 61).unwrap();
        assert!(r.exact, "{:?}", r.offending);
        assert!(r.entries.iter().all(|e| e.isotypic % 4 == 0));
        let r = factorization_check(&model, 5, (-20.0, 20.0), 61).unwrap();
        let k0 = (25.0f64 / 2.0 + 5.0).sqrt();
        let e = r.entries.iter().find(|e| (e.lambda - k0).abs() < 1e-9).unwrap();
        assert_eq!((e.isotypic, e.bundle), (6, 1));
    }

    #[test]
    fn non_cartan_connection_rejected() {
        let model = Model::new(
            BaseGeometry::flat(0.0),
            ConnectionSpec::constant(&[0.1, 0.0, 0.0]),
            GroupData::su2(),
            vec![1.0],
        )
        .unwrap();
        assert!(matches!(
            generic_spectrum_1d(&model, 1, (-5.0, 5.0), 21),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn csv_export() {
        let t = flat_spectrum(&Model::flat_u1(1.0, 0.0, 0.0), 1, (-2.0, 2.0), 100).unwrap();
        let mut buf = Vec::new();
        write_spectrum_csv(&[t], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("m,lambda,multiplicity,method"));
        // +-1 and the doubly degenerate +-sqrt(2).
        assert_eq!(text.lines().count(), 5);
    }
}
