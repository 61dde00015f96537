//! Multiplicity distributions `mu(E, m, phi) = sum mult * phi^(lambda - mE)`,
//! their Weyl and periodic-orbit fits, and the generating function
//! `Y_r(theta) = sum_m mu(m) r^m e^{i m theta}`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::Model;
use crate::reduction::OrbitAtlas;
use crate::spectrum::{self, CollocationOptions, SpectrumTable};

/// Relative Gaussian level at which spectral windows are cut.
const WINDOW_LEVEL: f64 = 1e-12;
/// Certified bound on the omitted tail, relative to `max(|mu|, 1)`.
const TAIL_TOL: f64 = 1e-10;

/// `phi(t) = exp(-(t - t0)^2 / 2 sigma^2) e^{i omega0 t}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub t0: f64,
    pub sigma: f64,
    #[serde(default)]
    pub omega0: f64,
}

impl TestFunction {
    pub fn gaussian(t0: f64, sigma: f64) -> Self {
        Self {
            t0,
            sigma,
            omega0: 0.0,
        }
    }

    pub fn value(&self, t: f64) -> Complex64 {
        let g = (-(t - self.t0).powi(2) / (2.0 * self.sigma * self.sigma)).exp();
        Complex64::from_polar(g, self.omega0 * t)
    }

    /// `int phi(t) e^{-i t xi} dt`.
    pub fn hat(&self, xi: f64) -> Complex64 {
        let d = xi - self.omega0;
        let g = self.sigma * (2.0 * PI).sqrt() * (-(self.sigma * d).powi(2) / 2.0).exp();
        Complex64::from_polar(g, -self.t0 * d)
    }

    /// Effective support radius of `phi` around `t0`.
    pub fn support_radius(&self) -> f64 {
        6.0 * self.sigma
    }

    /// Half-width in `xi` outside which `|phi^|` is below `WINDOW_LEVEL` of its peak.
    pub fn spectral_radius(&self) -> f64 {
        (2.0 * (1.0 / WINDOW_LEVEL).ln()).sqrt() / self.sigma
    }

    /// Bound on `sum |phi^(lambda)|` over `|lambda - omega0| > radius` for
    /// eigenvalues of density at most `density`.
    fn tail_bound(&self, radius: f64, density: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        // int_R^inf e^{-s^2 x^2 / 2} dx <= e^{-s^2 R^2 / 2} / (s^2 R), plus one
        // extra term per side for the discrete sum.
        let edge = self.sigma * (2.0 * PI).sqrt() * (-(s2 * radius * radius) / 2.0).exp();
        2.0 * density * edge / (s2 * radius) + 2.0 * edge
    }
}

/// Spectral window needed for `mu(E, m, phi)`.
pub fn trace_window(e: f64, m: u32, phi: &TestFunction) -> (f64, f64) {
    let c = m as f64 * e + phi.omega0;
    let r = phi.spectral_radius();
    (c - r, c + r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSeries {
    pub energy: f64,
    pub ms: Vec<u32>,
    pub values: Vec<Complex64>,
    pub tail_bounds: Vec<f64>,
    pub n: usize,
    pub ell: usize,
    pub dim: usize,
    pub test_function: Option<TestFunction>,
}

impl TraceSeries {
    /// Series with given values and no spectral provenance.
    pub fn synthetic(ms: Vec<u32>, f: impl Fn(u32) -> Complex64) -> Self {
        let values = ms.iter().map(|&m| f(m)).collect();
        Self {
            energy: 0.0,
            tail_bounds: vec![0.0; ms.len()],
            ms,
            values,
            n: 1,
            ell: 0,
            dim: 1,
            test_function: None,
        }
    }

    /// Expected Weyl exponent `n + l - 1`.
    pub fn weyl_exponent(&self) -> f64 {
        (self.n + self.ell) as f64 - 1.0
    }

    pub fn len(&self) -> usize {
        self.ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ms.is_empty()
    }

    /// CSV rows `m, re, im, abs, tail_bound`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["m", "re", "im", "abs", "tail_bound"])?;
        for i in 0..self.len() {
            let v = self.values[i];
            w.write_record([
                self.ms[i].to_string(),
                format!("{:.17e}", v.re),
                format!("{:.17e}", v.im),
                format!("{:.17e}", v.norm()),
                format!("{:.3e}", self.tail_bounds[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `mu(E, m, phi)` for one spectrum table, with its tail bound.
pub fn mu_level(table: &SpectrumTable, e: f64, phi: &TestFunction) -> Result<(Complex64, f64)> {
    let (a, b) = trace_window(e, table.m, phi);
    if !table.covers(a, b) {
        return Err(Error::IncompleteWindow {
            m: table.m,
            detail: format!(
                "need [{a:.6}, {b:.6}], spectrum covers [{:.6}, {:.6}]",
                table.window.0, table.window.1
            ),
        });
    }
    let shift = table.m as f64 * e;
    let value: Complex64 = table
        .eigenvalues
        .iter()
        .map(|ev| phi.hat(ev.lambda - shift) * ev.multiplicity as f64)
        .sum();
    let width = (table.window.1 - table.window.0).max(1e-300);
    let density = 2.0 * table.total() as f64 / width + 1.0;
    let radius = (a - table.window.0).min(table.window.1 - b) + phi.spectral_radius();
    let tail = phi.tail_bound(radius, density);
    if tail > TAIL_TOL * value.norm().max(1.0) {
        return Err(Error::IncompleteWindow {
            m: table.m,
            detail: format!("tail bound {tail:.3e} exceeds tolerance"),
        });
    }
    Ok((value, tail))
}

/// `mu(E, m, phi)` over a list of spectrum tables.
pub fn mu(tables: &[SpectrumTable], e: f64, phi: &TestFunction, model: &Model) -> Result<TraceSeries> {
    let mut values = Vec::with_capacity(tables.len());
    let mut tails = Vec::with_capacity(tables.len());
    for t in tables {
        let (v, tail) = mu_level(t, e, phi)?;
        values.push(v);
        tails.push(tail);
    }
    Ok(TraceSeries {
        energy: e,
        ms: tables.iter().map(|t| t.m).collect(),
        values,
        tail_bounds: tails,
        n: 1,
        ell: model.orbit_half_dimension(),
        dim: model.group.dim,
        test_function: Some(*phi),
    })
}

/// Series from closed-form spectra of a flat model.
pub fn flat_series(model: &Model, e: f64, phi: &TestFunction, ms: &[u32]) -> Result<TraceSeries> {
    let tables = ms
        .par_iter()
        .map(|&m| spectrum::flat_spectrum(model, m, trace_window(e, m, phi), i64::MAX / 4))
        .collect::<Result<Vec<_>>>()?;
    mu(&tables, e, phi, model)
}

/// Series from discretized spectra; `grid(m)` picks the collocation size and
/// `certify(m)` whether that level is checked against the refined grid.
pub fn discretized_series(
    model: &Model,
    e: f64,
    phi: &TestFunction,
    ms: &[u32],
    grid: impl Fn(u32) -> usize + Sync,
    certify: impl Fn(u32) -> bool + Sync,
) -> Result<TraceSeries> {
    let tables = ms
        .par_iter()
        .map(|&m| {
            let opts = CollocationOptions {
                grid: grid(m),
                certify: certify(m),
            };
            spectrum::generic_spectrum_1d_with(model, m, trace_window(e, m, phi), &opts)
        })
        .collect::<Result<Vec<_>>>()?;
    mu(&tables, e, phi, model)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeylFit {
    pub exponent: f64,
    /// Two-sigma half-width of the exponent.
    pub exponent_half_width: f64,
    pub coefficient: f64,
    /// Relative RMS residual of the power law.
    pub residual: f64,
    pub reliable: bool,
}

/// Least-squares `log|mu| = log C + a log m` over the top half of the range.
pub fn weyl_fit(series: &TraceSeries) -> Result<WeylFit> {
    if series.len() < 20 {
        return Err(Error::Domain("Weyl fit needs at least 20 levels".into()));
    }
    let half = series.len() / 2;
    let xs: Vec<f64> = series.ms[half..].iter().map(|&m| (m as f64).ln()).collect();
    let ys: Vec<f64> = series.values[half..].iter().map(|v| v.norm().ln()).collect();
    let (slope, intercept, slope_se) = linear_fit(&xs, &ys);
    let rel: f64 = xs
        .iter()
        .zip(&series.values[half..])
        .map(|(x, v)| {
            let fit = (intercept + slope * x).exp();
            ((v.norm() - fit) / fit).powi(2)
        })
        .sum::<f64>()
        / xs.len() as f64;
    let residual = rel.sqrt();
    Ok(WeylFit {
        exponent: slope,
        exponent_half_width: 2.0 * slope_se,
        coefficient: intercept.exp(),
        residual,
        reliable: residual <= 0.5 && slope.is_finite(),
    })
}

/// Ordinary least squares; returns (slope, intercept, slope standard error).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let se = if n > 2.0 { (sse / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    (slope, intercept, se)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub c: f64,
    /// Relative spread of `mu / m^{n+l-1}` over the fitted levels.
    pub spread: f64,
}

/// `C = a0 / (|phi(0)| Vol)` with `a0` the mean of `|mu| / m^{n+l-1}` over the
/// top half of the range (exponent pinned to its predicted value).
pub fn calibrate_cnd(series: &TraceSeries, vol: f64, phi: &TestFunction) -> Result<Calibration> {
    let fit = weyl_fit(series)?;
    if !fit.reliable {
        return Err(Error::Domain(format!(
            "Weyl fit unreliable (residual {:.3})",
            fit.residual
        )));
    }
    let k = series.weyl_exponent();
    let half = series.len() / 2;
    let a: Vec<f64> = series.ms[half..]
        .iter()
        .zip(&series.values[half..])
        .map(|(&m, v)| v.norm() / (m as f64).powf(k))
        .collect();
    let mean = a.iter().sum::<f64>() / a.len() as f64;
    let sd = (a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / a.len() as f64).sqrt();
    Ok(Calibration {
        c: mean / (phi.value(0.0).norm() * vol),
        spread: sd / mean,
    })
}

/// Smooth part of the series: least-squares polynomial in `m` of the given degree.
pub fn smooth_part(series: &TraceSeries, degree: usize) -> Vec<Complex64> {
    let mmax = *series.ms.iter().max().unwrap_or(&1) as f64;
    let cols = degree + 1;
    let a = nalgebra::DMatrix::from_fn(series.len(), cols, |i, j| {
        (series.ms[i] as f64 / mmax).powi(j as i32)
    });
    let svd = a.clone().svd(true, true);
    let fit = |part: Vec<f64>| -> Vec<f64> {
        let b = nalgebra::DVector::from_vec(part);
        let coef = svd.solve(&b, 1e-14).expect("svd solve");
        (&a * coef).iter().copied().collect()
    };
    let re = fit(series.values.iter().map(|v| v.re).collect());
    let im = fit(series.values.iter().map(|v| v.im).collect());
    re.into_iter().zip(im).map(|(r, i)| Complex64::new(r, i)).collect()
}

/// `X(theta) = (1/M) sum r(m) e^{-i m theta}`; peaks at `theta = arg w` for `r ~ w^m`.
pub fn residual_dft(ms: &[u32], residual: &[Complex64], theta: f64) -> Complex64 {
    let n = ms.len() as f64;
    ms.iter()
        .zip(residual)
        .map(|(&m, r)| r * Complex64::from_polar(1.0, -(m as f64) * theta))
        .sum::<Complex64>()
        / n
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// Residual frequency `+arg Hol`.
    Plus,
    /// Residual frequency `-arg Hol`.
    Minus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub angle: f64,
    pub dft_amplitude: f64,
    pub matched_orbit: Option<usize>,
    pub orientation: Option<Orientation>,
    pub fitted_amplitude: Option<f64>,
    pub predicted_amplitude: Option<f64>,
    pub ratio: Option<f64>,
    /// Phase of the fitted coefficient (free Maslov-type constant).
    pub phase: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GutzwillerFit {
    pub bin_width: f64,
    pub peaks: Vec<Peak>,
    pub unmatched: usize,
}

impl GutzwillerFit {
    /// CSV rows `angle, amplitude, matched_orbit, predicted_amplitude, ratio`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["angle", "amplitude", "matched_orbit", "predicted_amplitude", "ratio"])?;
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.12e}")).unwrap_or_default();
        for p in &self.peaks {
            w.write_record([
                format!("{:.12e}", p.angle),
                format!("{:.12e}", p.fitted_amplitude.unwrap_or(p.dft_amplitude)),
                p.matched_orbit.map(|i| i.to_string()).unwrap_or_default(),
                opt(p.predicted_amplitude),
                opt(p.ratio),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Wraps an angle to `[0, 2 pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    a.rem_euclid(2.0 * PI)
}

fn angle_distance(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    d.min(2.0 * PI - d)
}

/// DFT peaks of `series - weyl`, matched to orbit holonomy angles.
///
/// Each peak is compared with `+arg Hol` and `-arg Hol` of every orbit;
/// matched peaks get a joint least-squares amplitude `|c|` for `c Hol^m` and
/// the prediction `T# |phi(T)| / |det(I - P)|^{1/2}`.
pub fn gutzwiller_fit(
    series: &TraceSeries,
    weyl: &[Complex64],
    atlas: &OrbitAtlas,
    rel_threshold: f64,
) -> Result<GutzwillerFit> {
    let phi = series
        .test_function
        .ok_or_else(|| Error::Domain("series carries no test function".into()))?;
    let residual: Vec<Complex64> = series.values.iter().zip(weyl).map(|(v, w)| v - w).collect();
    let bins = series.len();
    let bin_width = 2.0 * PI / bins as f64;
    // Zero-padded grid for peak location, 8 points per bin.
    let fine = 8 * bins;
    // Hann taper keeps rectangular-window sidelobes from posing as peaks.
    let taper: Vec<f64> = (0..bins)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * (i as f64 + 0.5) / bins as f64).cos())
        .collect();
    let mass = taper.iter().sum::<f64>() / bins as f64;
    let tapered: Vec<Complex64> = residual.iter().zip(&taper).map(|(r, w)| r * (w / mass)).collect();
    let spectrum: Vec<f64> = (0..fine)
        .into_par_iter()
        .map(|j| residual_dft(&series.ms, &tapered, 2.0 * PI * j as f64 / fine as f64).norm())
        .collect();
    let top = spectrum.iter().copied().fold(0.0, f64::max);
    let mut peaks = Vec::new();
    for j in 0..fine {
        let prev = spectrum[(j + fine - 1) % fine];
        let next = spectrum[(j + 1) % fine];
        let v = spectrum[j];
        if v >= prev && v > next && v >= rel_threshold * top && v > 0.0 {
            peaks.push(Peak {
                angle: 2.0 * PI * j as f64 / fine as f64,
                dft_amplitude: v,
                matched_orbit: None,
                orientation: None,
                fitted_amplitude: None,
                predicted_amplitude: None,
                ratio: None,
                phase: None,
            });
        }
    }
    // Match peaks to holonomy angles.
    let mut freqs: Vec<f64> = Vec::new();
    for peak in &mut peaks {
        let mut best: Option<(f64, usize, Orientation, f64)> = None;
        for (i, orbit) in atlas.orbits.iter().enumerate() {
            let h = orbit.holonomy.arg();
            for (o, target) in [(Orientation::Plus, h), (Orientation::Minus, -h)] {
                let d = angle_distance(peak.angle, target);
                if d <= bin_width && best.is_none_or(|b| d < b.0) {
                    best = Some((d, i, o, wrap_angle(target)));
                }
            }
        }
        if let Some((_, i, o, target)) = best {
            peak.matched_orbit = Some(i);
            peak.orientation = Some(o);
            freqs.push(target);
        }
    }
    let coeffs = harmonic_fit(&series.ms, &residual, &freqs);
    let mut c = coeffs.into_iter();
    for peak in peaks.iter_mut().filter(|p| p.matched_orbit.is_some()) {
        let coef = c.next().unwrap();
        let orbit = &atlas.orbits[peak.matched_orbit.unwrap()];
        let det = orbit.det_i_minus_p.abs().max(f64::MIN_POSITIVE);
        let predicted = orbit.primitive_period * phi.value(orbit.period).norm() / det.sqrt();
        peak.fitted_amplitude = Some(coef.norm());
        peak.phase = Some(coef.arg());
        peak.predicted_amplitude = Some(predicted);
        peak.ratio = Some(coef.norm() / predicted);
    }
    let unmatched = peaks.iter().filter(|p| p.matched_orbit.is_none()).count();
    Ok(GutzwillerFit {
        bin_width,
        peaks,
        unmatched,
    })
}

/// Least-squares coefficients `c_j` of `r(m) = sum_j c_j e^{i m w_j}`.
pub fn harmonic_fit(ms: &[u32], r: &[Complex64], freqs: &[f64]) -> Vec<Complex64> {
    if freqs.is_empty() {
        return Vec::new();
    }
    let n = ms.len();
    let k = freqs.len();
    // Real formulation: unknowns (re c_j, im c_j).
    let a = nalgebra::DMatrix::from_fn(2 * n, 2 * k, |row, col| {
        let i = row / 2;
        let j = col / 2;
        let ph = ms[i] as f64 * freqs[j];
        let (s, c) = ph.sin_cos();
        match (row % 2, col % 2) {
            (0, 0) => c,
            (0, 1) => -s,
            (1, 0) => s,
            _ => c,
        }
    });
    let b = nalgebra::DVector::from_fn(2 * n, |row, _| {
        if row % 2 == 0 {
            r[row / 2].re
        } else {
            r[row / 2].im
        }
    });
    let x = a.svd(true, true).solve(&b, 1e-12).expect("svd solve");
    (0..k).map(|j| Complex64::new(x[2 * j], x[2 * j + 1])).collect()
}

/// `Y_r(theta) = sum_m mu(m) r^m e^{i m theta}` on the given angles.
pub fn generating_function(series: &TraceSeries, thetas: &[f64], r: f64) -> Result<Vec<Complex64>> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Domain(format!("damping r = {r} outside (0, 1)")));
    }
    Ok(thetas
        .par_iter()
        .map(|&th| {
            series
                .ms
                .iter()
                .zip(&series.values)
                .map(|(&m, v)| v * Complex64::from_polar(r.powi(m as i32), m as f64 * th))
                .sum()
        })
        .collect())
}

/// `(1/2 pi) int Y_r(theta) e^{-i m theta} d theta` by the periodic rectangle rule.
pub fn fourier_coefficient(thetas: &[f64], samples: &[Complex64], m: i64) -> Complex64 {
    let n = thetas.len() as f64;
    thetas
        .iter()
        .zip(samples)
        .map(|(&th, s)| s * Complex64::from_polar(1.0, -(m as f64) * th))
        .sum::<Complex64>()
        / n
}

/// Uniform grid of `n` angles on `[0, 2 pi)`.
pub fn angle_grid(n: usize) -> Vec<f64> {
    (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Singularity {
    pub location: f64,
    pub degree: f64,
    pub leading_coefficient: f64,
    pub residual: f64,
    pub classical: bool,
}

/// Degree and leading coefficient of the singularity of `Y` at `s0`.
///
/// The windowed transform `T(xi) = (1/2 pi) int rho(theta - s0) Y_r(theta)
/// e^{-i xi theta} d theta / r^xi` (Gaussian `rho` of the given width with
/// `rho(0) = 1`) is fitted to `c0 xi^k` over `xis`. With this normalisation
/// `mu = 1` gives `k = 0`, `c0 = 1`.
pub fn extract_singularity(
    thetas: &[f64],
    samples: &[Complex64],
    r: f64,
    s0: f64,
    width: f64,
    xis: &[f64],
) -> Result<Singularity> {
    if xis.len() < 3 {
        return Err(Error::Domain("need at least three frequencies".into()));
    }
    let n = thetas.len() as f64;
    let transform = |xi: f64| -> f64 {
        let s: Complex64 = thetas
            .iter()
            .zip(samples)
            .map(|(&th, y)| {
                let d = angle_distance(th, s0);
                let rho = (-(d * d) / (2.0 * width * width)).exp();
                y * Complex64::from_polar(rho, -xi * th)
            })
            .sum();
        // The Gaussian window sums to one over integer shifts.
        (s / n).norm() / r.powf(xi)
    };
    let mags: Vec<f64> = xis.par_iter().map(|&x| transform(x)).collect();
    let lx: Vec<f64> = xis.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = mags.iter().map(|y| y.ln()).collect();
    let (k, intercept, _) = linear_fit(&lx, &ly);
    let residual = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - k * x).powi(2))
        .sum::<f64>()
        .sqrt()
        / (lx.len() as f64).sqrt();
    let last = *xis.last().unwrap();
    let c0 = mags.last().unwrap() / last.powf(k);
    Ok(Singularity {
        location: s0,
        degree: k,
        leading_coefficient: c0,
        residual,
        classical: residual <= 0.2,
    })
}

/// Growth exponent `k` from `|Y_r(s0)| ~ (1 - r)^{-(k+1)}` over the damping sweep.
pub fn r_sweep_exponent(series: &TraceSeries, s0: f64, rs: &[f64]) -> Result<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &r in rs {
        let y = generating_function(series, &[s0], r)?[0].norm();
        xs.push(-(1.0 - r).ln());
        ys.push(y.ln());
    }
    let (slope, _, _) = linear_fit(&xs, &ys);
    Ok(slope - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{Eigenvalue, Method, Resolution};
    use approx::assert_relative_eq;

    fn single(m: u32, lambda: f64, window: (f64, f64)) -> SpectrumTable {
        SpectrumTable {
            m,
            eigenvalues: vec![Eigenvalue {
                lambda,
                multiplicity: 1,
            }],
            window,
            method: Method::ClosedForm,
            resolution: Resolution::default(),
            non_real: vec![],
        }
    }

    #[test]
    fn hat_is_fourier_transform() {
        let phi = TestFunction {
            t0: 1.3,
            sigma: 0.7,
            omega0: 0.4,
        };
        let xi = 0.9;
        let h = 1e-3;
        let mut acc = Complex64::new(0.0, 0.0);
        let mut t = -12.0;
        while t < 14.0 {
            acc += phi.value(t) * Complex64::from_polar(1.0, -t * xi) * h;
            t += h;
        }
        assert!((acc - phi.hat(xi)).norm() < 1e-10);
    }

    #[test]
    fn single_eigenvalue_and_decay() {
        let phi = TestFunction::gaussian(0.0, 1.0);
        let t = single(3, 6.0, (-100.0, 100.0));
        let (v, _) = mu_level(&t, 2.0, &phi).unwrap();
        assert_relative_eq!(v.re, phi.hat(0.0).re, epsilon = 1e-15);
        let far = single(3, 60.0, (-100.0, 100.0));
        assert!(mu_level(&far, 2.0, &phi).unwrap().0.norm() < 1e-12);
        let narrow = single(3, 6.0, (5.0, 7.0));
        assert!(matches!(
            mu_level(&narrow, 2.0, &phi),
            Err(Error::IncompleteWindow { m: 3, .. })
        ));
    }

    #[test]
    fn flat_u1_plateau() {
        let model = Model::flat_u1(1.0, 0.0, 0.0);
        let phi = TestFunction::gaussian(0.0, 1.0);
        let ms: Vec<u32> = (50..=90).collect();
        let s = flat_series(&model, 2.0, &phi, &ms).unwrap();
        let vol = 8.0 * PI / 3f64.sqrt();
        for v in &s.values {
            assert!((v.re - vol).abs() < 1e-3 * vol, "{v}");
        }
    }

    #[test]
    fn linear_in_test_function() {
        let model = Model::flat_u1(1.0, 0.2, 0.1);
        let a = TestFunction::gaussian(0.0, 0.8);
        let b = TestFunction::gaussian(0.5, 1.1);
        let ms = [10u32, 20, 30];
        for &m in &ms {
            let w = (m as f64 * 2.0 - 20.0, m as f64 * 2.0 + 20.0);
            let t = spectrum::flat_spectrum(&model, m, w, 10_000).unwrap();
            let (va, _) = mu_level(&t, 2.0, &a).unwrap();
            let (vb, _) = mu_level(&t, 2.0, &b).unwrap();
            let direct: Complex64 = t
                .eigenvalues
                .iter()
                .map(|e| (a.hat(e.lambda - 2.0 * m as f64) * 0.3 - b.hat(e.lambda - 2.0 * m as f64) * 1.7) * e.multiplicity as f64)
                .sum();
            assert!((va * 0.3 - vb * 1.7 - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn synthetic_power_law() {
        let s = TraceSeries::synthetic((10..=60).collect(), |m| Complex64::new(7.0 * (m * m) as f64, 0.0));
        let f = weyl_fit(&s).unwrap();
        assert_relative_eq!(f.exponent, 2.0, epsilon = 1e-10);
        assert_relative_eq!(f.coefficient, 7.0, epsilon = 1e-8);
        assert!(f.residual < 1e-10);
        let short = TraceSeries::synthetic((1..=10).collect(), |_| Complex64::new(1.0, 0.0));
        assert!(weyl_fit(&short).is_err());
    }

    #[test]
    fn dft_identity_single_peak() {
        let th = 1.1;
        let ms: Vec<u32> = (1..=256).collect();
        let r: Vec<Complex64> = ms.iter().map(|&m| Complex64::new(0.8 * (m as f64 * th).cos(), 0.0)).collect();
        // A real cosine splits into +-theta, each with amplitude c/2.
        let x = residual_dft(&ms, &r, th);
        assert_relative_eq!(x.norm(), 0.4, epsilon = 5e-3);
        let c = harmonic_fit(&ms, &r, &[th, 2.0 * PI - th]);
        assert_relative_eq!(c[0].re, 0.4, epsilon = 1e-12);
        assert_relative_eq!(c[1].re, 0.4, epsilon = 1e-12);
    }

    #[test]
    fn geometric_series_generating_function() {
        let s = TraceSeries::synthetic((1..=4000).collect(), |_| Complex64::new(1.0, 0.0));
        let r = 0.9;
        let th = [0.0, 0.7];
        let y = generating_function(&s, &th, r).unwrap();
        for (t, v) in th.iter().zip(&y) {
            let z = Complex64::from_polar(r, *t);
            assert!((v - z / (1.0 - z)).norm() < 1e-10);
        }
        assert!(generating_function(&s, &th, 1.0).is_err());
    }

    #[test]
    fn fourier_coefficients_reproduce_series() {
        let s = TraceSeries::synthetic((1..=40).collect(), |m| Complex64::new(m as f64, 0.5));
        let grid = angle_grid(128);
        let y = generating_function(&s, &grid, 0.95).unwrap();
        for m in [1i64, 7, 40] {
            let c = fourier_coefficient(&grid, &y, m);
            let expect = Complex64::new(m as f64, 0.5) * 0.95f64.powi(m as i32);
            assert!((c - expect).norm() < 1e-12 * expect.norm().max(1.0));
        }
    }

    #[test]
    fn r_sweep_of_linear_series() {
        let s = TraceSeries::synthetic((1..=4000).collect(), |m| Complex64::new(m as f64, 0.0));
        let k = r_sweep_exponent(&s, 0.0, &[0.9, 0.95, 0.99]).unwrap();
        assert!((k - 1.0).abs() < 0.1, "{k}");
    }

    #[test]
    fn singularity_of_constant_and_power_series() {
        let grid = angle_grid(8192);
        let r = 0.999;
        let xis: Vec<f64> = (0..8).map(|i| 200.0 + 100.0 * i as f64).collect();
        let one = TraceSeries::synthetic((1..=3000).collect(), |_| Complex64::new(1.0, 0.0));
        let y = generating_function(&one, &grid, r).unwrap();
        let s = extract_singularity(&grid, &y, r, 0.0, 0.05, &xis).unwrap();
        assert!(s.degree.abs() < 0.05, "{s:?}");
        assert_relative_eq!(s.leading_coefficient, 1.0, max_relative = 0.05);
        let lin = TraceSeries::synthetic((1..=3000).collect(), |m| Complex64::new(m as f64, 0.0));
        let y = generating_function(&lin, &grid, r).unwrap();
        let s = extract_singularity(&grid, &y, r, 0.0, 0.05, &xis).unwrap();
        assert!((s.degree - 1.0).abs() < 0.1, "{s:?}");
        assert!(s.classical);
    }
}
