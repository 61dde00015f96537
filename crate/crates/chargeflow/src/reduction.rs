//! Periodic-orbit atlas of the reduced phase space `T*S^1 x O`: Newton
//! shooting for relative periodic orbits, the linearized Poincare determinant,
//! the Liouville volume of an energy surface and orbit holonomies.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::dynamics::{self, FiberDrift};
use crate::error::{Error, Result};
use crate::geometry::{Model, PhasePoint};
use crate::lie::{self, StabilizerElement};

/// The moment map of the fiber action: the charge slot of the point.
pub fn moment_map(pt: &PhasePoint) -> Vec<f64> {
    pt.q.clone()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentKind {
    IsolatedNondegenerate,
    Family,
    ZeroTime,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    #[serde(rename = "T")]
    pub period: f64,
    #[serde(rename = "T_primitive")]
    pub primitive_period: f64,
    pub energy: f64,
    pub winding: i32,
    pub start: PhasePoint,
    /// Stabilizer-torus angles of the forward drift `g` with `Phi_T(start) = start.g`.
    pub drift_angles: Vec<f64>,
    pub det_i_minus_p: f64,
    pub holonomy: Complex64,
    pub component_kind: ComponentKind,
    pub residual: f64,
    pub family_dimension: usize,
    pub warning: Option<String>,
}

impl PeriodicOrbit {
    /// The zero-time component through `start`.
    pub fn zero_time(model: &Model, start: PhasePoint) -> Self {
        Self {
            period: 0.0,
            primitive_period: 0.0,
            energy: model.hamiltonian(&start),
            winding: 0,
            drift_angles: vec![0.0; model.group.rank],
            start,
            det_i_minus_p: 1.0,
            holonomy: Complex64::new(1.0, 0.0),
            component_kind: ComponentKind::ZeroTime,
            residual: 0.0,
            family_dimension: 0,
            warning: None,
        }
    }

    /// Number of traversals of the primitive loop.
    pub fn repetitions(&self) -> u32 {
        if self.primitive_period <= 0.0 {
            return 0;
        }
        (self.period / self.primitive_period).round() as u32
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OrbitAtlas {
    pub energy: f64,
    pub orbits: Vec<PeriodicOrbit>,
}

impl OrbitAtlas {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShootingConfig {
    pub windings: Vec<i32>,
    #[serde(default)]
    pub seeds: Vec<PhasePoint>,
    pub newton_tol: f64,
    pub integrator_tol: f64,
    pub max_iterations: usize,
    /// Number of section positions in the coarse seed grid.
    pub section_grid: usize,
    /// Longest first-return time searched for a seed.
    pub t_max: f64,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self {
            windings: vec![-1, 1],
            seeds: Vec::new(),
            newton_tol: 1e-10,
            integrator_tol: 1e-12,
            max_iterations: 40,
            section_grid: 8,
            t_max: 200.0,
        }
    }
}

/// Momentum `p` on `H = E` at `(x, q)`; `upper` selects the larger root.
pub fn energy_momentum(model: &Model, x: f64, q: &[f64], e: f64, upper: bool) -> Option<f64> {
    let (lo, hi) = sublevel_interval(model, x, q, e)?;
    let a_q: f64 = model.connection_at(x).iter().zip(q).map(|(a, b)| a * b).sum();
    Some(if upper { hi } else { lo } + a_q)
}

/// Horizontal-momentum interval `{p~ : H <= e}` at `(x, |q|)`.
fn sublevel_interval(model: &Model, x: f64, q: &[f64], e: f64) -> Option<(f64, f64)> {
    let n = model.lapse(x);
    let h = model.metric(x);
    let beta = model.shift_vector(x);
    let r2: f64 = q.iter().map(|v| v * v).sum();
    // (N^2/h - beta^2) p~^2 + 2 E beta p~ + N^2 |q|^2 - E^2 = 0
    let a = n * n / h - beta * beta;
    let disc = n * n * (e * e / h - a * r2);
    if disc < 0.0 || e <= 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some(((-e * beta - s) / a, (-e * beta + s) / a))
}

fn speed_bound(model: &Model) -> f64 {
    model
        .geometry
        .grid_points()
        .iter()
        .map(|&x| model.lapse(x) / model.metric(x).sqrt() + model.shift_vector(x).abs())
        .fold(0.0, f64::max)
}

/// First time the unwrapped `x` crosses `level` moving in `direction`.
pub fn first_crossing(
    model: &Model,
    start: &PhasePoint,
    level: f64,
    direction: f64,
    t_max: f64,
    tol: f64,
) -> Result<Option<(f64, PhasePoint)>> {
    let dt = model.circumference() / (64.0 * speed_bound(model).max(1e-3));
    let steps = (t_max / dt).ceil() as usize;
    let times: Vec<f64> = (1..=steps).map(|i| i as f64 * dt).collect();
    let states = dynamics::sample_trajectory(model, start, &times, tol)?;
    let mut prev = (0.0, start.clone());
    for s in states {
        let a = (prev.1.x - level) * direction;
        let b = (s.point.x - level) * direction;
        if a < 0.0 && b >= 0.0 {
            // Newton on t from the bracketing sample.
            let mut t = prev.0;
            let mut pt = prev.1.clone();
            for _ in 0..20 {
                let xdot = model.wong_rhs(&pt).x;
                let dt_n = -(pt.x - level) / xdot;
                if !dt_n.is_finite() {
                    break;
                }
                let next = dynamics::integrate(model, &pt, dt_n, tol, false)?;
                t += dt_n;
                pt = next.state.point;
                if dt_n.abs() < 1e-13 * t.abs().max(1.0) {
                    break;
                }
            }
            return Ok(Some((t, pt)));
        }
        prev = (s.time, s.point);
    }
    Ok(None)
}

struct Shot {
    z0: Vec<f64>,
    period: f64,
    residual: f64,
    singular: Vec<f64>,
}

fn shooting_system(
    model: &Model,
    z0: &[f64],
    period: f64,
    winding: i32,
    e: f64,
    section: f64,
    charge: &[f64],
    tol: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let k = z0.len();
    let d = k - 2;
    let abelian = model.group.algebra.as_ref().is_some_and(|a| a.is_abelian());
    let rows = k + 2 + if abelian { d } else { 1 };
    let out = dynamics::integrate(model, &PhasePoint::from_slice(z0), period, tol, true)?;
    let zt = out.state.point.to_vec();
    let m = out.state.monodromy.unwrap();
    let f = model.wong_rhs_generic(&zt);
    let grad = model.gradient_generic(z0[0], z0[1], &z0[2..]);
    let mut r = DVector::zeros(rows);
    let mut j = DMatrix::zeros(rows, k + 1);
    for i in 0..k {
        r[i] = zt[i] - z0[i];
        for c in 0..k {
            j[(i, c)] = m[(i, c)] - if i == c { 1.0 } else { 0.0 };
        }
        j[(i, k)] = f[i];
    }
    r[0] -= winding as f64 * model.circumference();
    r[k] = model.hamiltonian_generic(z0[0], z0[1], &z0[2..]) - e;
    j[(k, 0)] = grad.dx;
    j[(k, 1)] = grad.dp;
    for c in 0..d {
        j[(k, 2 + c)] = grad.dq[c];
    }
    r[k + 1] = z0[0] - section;
    j[(k + 1, 0)] = 1.0;
    if abelian {
        for c in 0..d {
            r[k + 2 + c] = z0[2 + c] - charge[c];
            j[(k + 2 + c, 2 + c)] = 1.0;
        }
    } else {
        let r2: f64 = charge.iter().map(|v| v * v).sum();
        r[k + 2] = z0[2..].iter().map(|v| v * v).sum::<f64>() - r2;
        for c in 0..d {
            j[(k + 2, 2 + c)] = 2.0 * z0[2 + c];
        }
    }
    Ok((r, j))
}

fn shoot(
    model: &Model,
    seed: &PhasePoint,
    period: f64,
    winding: i32,
    e: f64,
    cfg: &ShootingConfig,
) -> Option<Shot> {
    let section = seed.x;
    let mut z = seed.to_vec();
    let mut t = period;
    let k = z.len();
    let charge = seed.q.clone();
    let (mut r, mut j) =
        shooting_system(model, &z, t, winding, e, section, &charge, cfg.integrator_tol).ok()?;
    for _ in 0..cfg.max_iterations {
        let norm = r.norm();
        if norm < cfg.newton_tol {
            let sv = j.clone().svd(false, false).singular_values;
            return Some(Shot {
                z0: z,
                period: t,
                residual: norm,
                singular: sv.iter().copied().collect(),
            });
        }
        let svd = j.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let step = svd.solve(&(-&r), 1e-12 * smax).ok()?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let zn: Vec<f64> = (0..k).map(|i| z[i] + alpha * step[i]).collect();
            let tn = t + alpha * step[k];
            if tn > 0.0 {
                if let Ok((rn, jn)) = shooting_system(
                    model,
                    &zn,
                    tn,
                    winding,
                    e,
                    section,
                    &charge,
                    cfg.integrator_tol,
                ) {
                    if rn.norm() < norm {
                        z = zn;
                        t = tn;
                        r = rn;
                        j = jn;
                        accepted = true;
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return None;
        }
    }
    None
}

/// Smallest period `T/j` (j <= 8) over which the orbit already closes.
fn primitive_period(model: &Model, start: &PhasePoint, period: f64, winding: i32, tol: f64) -> f64 {
    let l = model.circumference();
    let z0 = start.to_vec();
    for j in (2..=8).rev() {
        if winding % j != 0 {
            continue;
        }
        let Ok(out) = dynamics::integrate(model, start, period / j as f64, tol, false) else {
            continue;
        };
        let zt = out.state.point.to_vec();
        let mut err = (zt[0] - z0[0] - (winding / j) as f64 * l).abs();
        for i in 1..z0.len() {
            err = err.max((zt[i] - z0[i]).abs());
        }
        if err < 1e-7 {
            return period / j as f64;
        }
    }
    period
}

/// Seeds on the section grid (both momentum branches) plus user seeds.
fn seed_points(model: &Model, e: f64, cfg: &ShootingConfig) -> Vec<PhasePoint> {
    let l = model.circumference();
    let mut charges = Vec::new();
    let xi = model.charge_covector().unwrap_or_default();
    charges.push(xi.clone());
    if model.group.algebra.as_ref().is_some_and(|a| !a.is_abelian()) {
        charges.push(xi.iter().map(|v| -v).collect());
    }
    let mut seeds = cfg.seeds.clone();
    for i in 0..cfg.section_grid {
        let x = l * i as f64 / cfg.section_grid as f64;
        for q in &charges {
            for upper in [true, false] {
                if let Some(p) = energy_momentum(model, x, q, e, upper) {
                    seeds.push(PhasePoint::new(x, p, q.clone()));
                }
            }
        }
    }
    seeds
}

fn same_orbit(model: &Model, a: &PeriodicOrbit, b: &PeriodicOrbit, tol: f64) -> bool {
    if a.winding != b.winding || (a.primitive_period - b.primitive_period).abs() > 1e-6 {
        return false;
    }
    let l = model.circumference();
    let dir = model.wong_rhs(&a.start).x.signum();
    let shift = if a.winding == 0 {
        // Librating loops stay within one period of x.
        ((b.start.x - a.start.x) / l).round() * l
    } else {
        ((b.start.x - a.start.x) / l).floor() * l
    };
    let mut level = a.start.x + shift;
    if (b.start.x - level).abs() < 1e-9 {
        return close_mod(model, &a.start, &b.start);
    }
    // `level <= b.start.x` here; rightward motion needs the next copy up.
    if a.winding != 0 && dir > 0.0 && level < b.start.x {
        level += l;
    }
    let Ok(Some((_, pt))) = first_crossing(model, &b.start, level, dir, 1.5 * b.period, tol) else {
        return false;
    };
    close_mod(model, &a.start, &pt)
}

fn close_mod(model: &Model, a: &PhasePoint, b: &PhasePoint) -> bool {
    let l = model.circumference();
    let dx = (b.x - a.x) / l;
    let err = ((dx - dx.round()) * l).abs().max((a.p - b.p).abs());
    let qerr = a.q.iter().zip(&b.q).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    err.max(qerr) < 1e-6
}

/// Finds primitive periodic orbits on `H = E` for each requested winding.
///
/// Winding 0 requests librating loops; the section is the seed's `x`.
pub fn find_periodic_orbits(model: &Model, e: f64, cfg: &ShootingConfig) -> Result<Vec<PeriodicOrbit>> {
    if !(1e-13..=1e-6).contains(&cfg.integrator_tol) {
        return Err(Error::Config("integrator_tol outside [1e-13, 1e-6]".into()));
    }
    let l = model.circumference();
    let seeds = seed_points(model, e, cfg);
    let jobs: Vec<(PhasePoint, i32)> = seeds
        .iter()
        .flat_map(|s| cfg.windings.iter().map(move |&w| (s.clone(), w)))
        .collect();
    let found: Vec<Option<PeriodicOrbit>> = jobs
        .par_iter()
        .map(|(seed, w)| {
            let xdot = model.wong_rhs(seed).x;
            let dir = if *w != 0 { *w as f64 } else { xdot };
            // Librating loops are started on their rightward crossing.
            if xdot * dir <= 0.0 || (*w == 0 && xdot <= 0.0) {
                return None;
            }
            let level = seed.x + *w as f64 * l;
            let (t_guess, _) =
                first_crossing(model, seed, level, dir.signum(), cfg.t_max, cfg.integrator_tol)
                    .ok()??;
            let shot = shoot(model, seed, t_guess, *w, e, cfg)?;
            build_orbit(model, e, *w, shot, cfg).ok()
        })
        .collect();
    let mut orbits: Vec<PeriodicOrbit> = Vec::new();
    for orbit in found.into_iter().flatten() {
        if !orbits
            .iter()
            .any(|o| same_orbit(model, o, &orbit, cfg.integrator_tol))
        {
            orbits.push(orbit);
        }
    }
    orbits.sort_by(|a, b| {
        a.winding
            .cmp(&b.winding)
            .then(a.period.total_cmp(&b.period))
    });
    Ok(orbits)
}

fn build_orbit(
    model: &Model,
    e: f64,
    winding: i32,
    shot: Shot,
    cfg: &ShootingConfig,
) -> Result<PeriodicOrbit> {
    let start = PhasePoint::from_slice(&shot.z0);
    let grad = model.gradient(&start);
    let gnorm = (grad.dx * grad.dx + grad.dp * grad.dp + grad.dq.iter().map(|v| v * v).sum::<f64>())
        .sqrt();
    let mut warning = None;
    if gnorm < 1e-6 {
        warning = Some(format!("energy {e} is not regular along the orbit"));
    }
    let smax = shot.singular.iter().copied().fold(0.0, f64::max);
    let family_dimension = shot.singular.iter().filter(|&&s| s < 1e-6 * smax).count();
    let near = shot
        .singular
        .iter()
        .filter(|&&s| s >= 1e-6 * smax && s < 1e-3 * smax)
        .count();
    if near > 0 && warning.is_none() {
        warning = Some("shooting Jacobian is nearly rank deficient".into());
    }
    let primitive = primitive_period(model, &start, shot.period, winding, cfg.integrator_tol);
    let out = dynamics::integrate(model, &start, shot.period, cfg.integrator_tol, true)?;
    let angles = drift_angles(model, &out.state.fiber_drift, &start.q);
    let det = poincare_det_orbit(
        model,
        &start,
        out.state.monodromy.as_ref().unwrap(),
    )?;
    let mut orbit = PeriodicOrbit {
        period: shot.period,
        primitive_period: primitive,
        energy: e,
        winding,
        start,
        drift_angles: angles,
        det_i_minus_p: det.det,
        holonomy: Complex64::new(1.0, 0.0),
        component_kind: if family_dimension > 0 {
            ComponentKind::Family
        } else {
            ComponentKind::IsolatedNondegenerate
        },
        residual: shot.residual,
        family_dimension,
        warning,
    };
    if det.degenerate && family_dimension == 0 {
        orbit.warning.get_or_insert_with(|| "degenerate linearized return map".into());
    }
    orbit.holonomy = orbit_holonomy(model, &orbit, 1)?;
    Ok(orbit)
}

/// Stabilizer-torus angles of the drift `g` relative to the charge `q`.
pub fn drift_angles(model: &Model, drift: &FiberDrift, q: &[f64]) -> Vec<f64> {
    let r = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let s = model.group.inner_norm.sqrt();
    vec![s * drift.pairing_with(model, q) / r]
}

/// `conj(chi(g)) e^{i T E}` at level `m`; the drift acts on sections through `phi(x g^-1)`.
pub fn orbit_holonomy(model: &Model, orbit: &PeriodicOrbit, m: u32) -> Result<Complex64> {
    if orbit.component_kind == ComponentKind::ZeroTime {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let weight = model.weight.at_level(m);
    let chi = lie::stabilizer_character(
        &model.group,
        &weight,
        &StabilizerElement::Torus(orbit.drift_angles.clone()),
    )?;
    let phase = Complex64::from_polar(1.0, m as f64 * orbit.period * orbit.energy);
    Ok(chi.conj() * phase)
}

/// Checks that the integrated drift lies in the stabilizer of the start charge.
pub fn check_stabilizer(drift: &FiberDrift, q: &[f64]) -> Result<()> {
    let defect = drift.stabilizer_defect(q);
    if defect > 1e-6 {
        return Err(Error::Domain(format!(
            "drift is {defect:.3e} away from the stabilizer torus"
        )));
    }
    Ok(())
}

/// `det(I - P)` from two transversal constructions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoincareDet {
    pub det: f64,
    pub det_alternative: f64,
    pub degenerate: bool,
    pub quotient_dim: usize,
}

/// Linearized return map on `ker dH / span{Z}` for a leaf monodromy `m`.
///
/// `omega` is the symplectic form of the leaf, `flow` the Hamiltonian vector
/// and `grad` the differential of `H`, all in the same coordinates.
pub fn poincare_det(
    m: &DMatrix<f64>,
    omega: &DMatrix<f64>,
    flow: &DVector<f64>,
    grad: &DVector<f64>,
) -> Result<PoincareDet> {
    let n = m.nrows();
    if n <= 2 {
        return Ok(PoincareDet {
            det: 1.0,
            det_alternative: 1.0,
            degenerate: false,
            quotient_dim: 0,
        });
    }
    let cos = flow.dot(grad) / (flow.norm() * grad.norm());
    let sin = (1.0 - cos * cos).max(0.0).sqrt();
    if sin < 1e-8 || !sin.is_finite() {
        return Err(Error::Conditioning(format!(
            "flow and energy gradient nearly parallel (sin = {sin:.2e})"
        )));
    }
    // Transversal 1: symplectic complement of span{Z, grad H}.
    let mut c1 = DMatrix::zeros(2, n);
    c1.row_mut(0).copy_from(&(flow.transpose() * omega));
    c1.row_mut(1).copy_from(&(grad.transpose() * omega));
    let w1 = null_space(&c1)?;
    // Transversal 2: Euclidean complement of Z inside ker dH.
    let mut c2 = DMatrix::zeros(2, n);
    c2.row_mut(0).copy_from(&grad.transpose());
    c2.row_mut(1).copy_from(&flow.transpose());
    let w2 = null_space(&c2)?;
    let d1 = quotient_det(m, &w1, flow)?;
    let d2 = quotient_det(m, &w2, flow)?;
    let scale = 1.0 + m.amax();
    Ok(PoincareDet {
        det: d1,
        det_alternative: d2,
        degenerate: d1.abs() < 1e-8 * scale,
        quotient_dim: n - 2,
    })
}

fn null_space(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = c.ncols();
    let r = c.nrows();
    // Complete the row space with the SVD of the padded square matrix.
    let mut sq = DMatrix::zeros(n, n);
    sq.rows_mut(0, r).copy_from(c);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.unwrap();
    let sv = &svd.singular_values;
    let smax = sv.max();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    if sv[idx[r - 1]] < 1e-10 * smax {
        return Err(Error::Conditioning("transversal constraints are dependent".into()));
    }
    let mut w = DMatrix::zeros(n, n - r);
    for (j, &i) in idx[r..].iter().enumerate() {
        w.column_mut(j).copy_from(&vt.row(i).transpose());
    }
    Ok(w)
}

/// `det(I - P)` where `P` maps `W` to itself modulo the flow direction.
fn quotient_det(m: &DMatrix<f64>, w: &DMatrix<f64>, flow: &DVector<f64>) -> Result<f64> {
    let q = w.ncols();
    let mut basis = DMatrix::zeros(w.nrows(), q + 1);
    basis.columns_mut(0, q).copy_from(w);
    basis.column_mut(q).copy_from(flow);
    let image = m * w;
    let svd = basis.svd(true, true);
    let coeffs = svd
        .solve(&image, 1e-14)
        .map_err(|e| Error::Conditioning(e.to_string()))?;
    let p = coeffs.rows(0, q).into_owned();
    Ok((DMatrix::identity(q, q) - p).determinant())
}

/// Orthonormal tangent basis of the symplectic leaf through `z` (columns).
fn leaf_basis(model: &Model, z: &[f64]) -> DMatrix<f64> {
    let k = z.len();
    let abelian = model.group.algebra.as_ref().is_none_or(|a| a.is_abelian());
    if abelian {
        let mut u = DMatrix::zeros(k, 2);
        u[(0, 0)] = 1.0;
        u[(1, 1)] = 1.0;
        return u;
    }
    let d = k - 2;
    let q = DVector::from_column_slice(&z[2..]);
    let mut proj = DMatrix::<f64>::identity(d, d) - &q * q.transpose() / q.norm_squared();
    // Tangent plane of the sphere: top two left singular vectors of the projector.
    let svd = std::mem::take(&mut proj).svd(true, false);
    let uu = svd.u.unwrap();
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut u = DMatrix::zeros(k, 2 + d - 1);
    u[(0, 0)] = 1.0;
    u[(1, 1)] = 1.0;
    for (j, &i) in idx[..d - 1].iter().enumerate() {
        for r in 0..d {
            u[(2 + r, 2 + j)] = uu[(r, i)];
        }
    }
    u
}

/// `det(I - P)` of a closed orbit from its ambient monodromy.
pub fn poincare_det_orbit(model: &Model, start: &PhasePoint, m: &DMatrix<f64>) -> Result<PoincareDet> {
    let z = start.to_vec();
    let u = leaf_basis(model, &z);
    let ml = u.transpose() * m * &u;
    let b = dynamics::poisson_tensor(model, &z);
    let bl = u.transpose() * b * &u;
    let omega = bl
        .try_inverse()
        .ok_or_else(|| Error::Conditioning("leaf Poisson tensor is singular".into()))?;
    let f = DVector::from_vec(model.wong_rhs_generic(&z));
    let g = model.gradient(start);
    let mut grad = vec![g.dx, g.dp];
    grad.extend(g.dq);
    let flow = u.transpose() * f;
    let grad = u.transpose() * DVector::from_vec(grad);
    poincare_det(&ml, &omega, &flow, &grad)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub max_samples: usize,
    /// Target relative standard error.
    pub target_rel_error: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            batch_size: 4096,
            max_samples: 1 << 22,
            target_rel_error: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: u64,
    pub delta: f64,
}

/// Symplectic area of the coadjoint orbit (1 for a point orbit).
pub fn orbit_area(model: &Model) -> f64 {
    match &model.group.algebra {
        Some(a) if !a.is_abelian() && a.dim == 3 => {
            4.0 * PI * model.orbit_radius() / a.f(0, 1, 2)
        }
        _ => 1.0,
    }
}

/// Closed-form energy-surface volume for constant `N`, `h`, `beta`:
/// `L * orbit_area * dW/dE` with `W` the width of `{p~ : H <= E}`.
pub fn flat_volume(model: &Model, e: f64) -> Option<f64> {
    let g = &model.geometry;
    if !(g.lapse.is_constant() && g.metric.is_constant() && g.shift.is_constant()) {
        return None;
    }
    let n = g.lapse.a0;
    let h = g.metric.a0;
    let beta = g.shift.a0 / h;
    let r = model.orbit_radius();
    let a = n * n / h - beta * beta;
    let disc = e * e / h - a * r * r;
    if disc <= 0.0 {
        return None;
    }
    let dw = 2.0 * n * e / (h * a * disc.sqrt());
    Some(model.circumference() * orbit_area(model) * dw)
}

/// Liouville volume `d/dE vol{H <= E}` of the energy surface.
///
/// Thin shells `E <= H <= E + delta` (delta = 1e-3 E and delta/2, Richardson
/// combined) are estimated by Monte Carlo over the configuration `(x, q)`;
/// the momentum direction is integrated exactly because each fiber
/// `{p : H <= E}` is an interval with closed-form end points.
pub fn energy_surface_volume(model: &Model, e: f64, cfg: &SamplerConfig) -> Result<VolumeEstimate> {
    let l = model.circumference();
    let delta = 1e-3 * e;
    let area = orbit_area(model);
    let d = model.algebra_dim();
    let xi = model.charge_covector()?;
    let r = model.orbit_radius();
    let abelian = model.group.algebra.as_ref().is_none_or(|a| a.is_abelian());
    let width = |x: f64, q: &[f64], level: f64| {
        sublevel_interval(model, x, q, level).map_or(0.0, |(lo, hi)| hi - lo)
    };
    let sample = |rng: &mut ChaCha8Rng| {
        let x = rng.random::<f64>() * l;
        let q = if abelian {
            xi.clone()
        } else {
            let v: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            v.iter().map(|a| a * r / n).collect()
        };
        let w0 = width(x, &q, e);
        let full = (width(x, &q, e + delta) - w0) / delta;
        let half = (width(x, &q, e + 0.5 * delta) - w0) / (0.5 * delta);
        l * area * (2.0 * half - full)
    };
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    let mut n = 0u64;
    let mut batch = 0u64;
    // Batches are computed in fixed rounds but consumed in id order, so the
    // stopping point does not depend on the thread count.
    const ROUND: u64 = 8;
    loop {
        let ids: Vec<u64> = (batch..batch + ROUND).collect();
        let parts: Vec<(f64, f64)> = ids
            .par_iter()
            .map(|&id| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(id);
                let mut s = 0.0;
                let mut s2 = 0.0;
                for _ in 0..cfg.batch_size {
                    let v = sample(&mut rng);
                    s += v;
                    s2 += v * v;
                }
                (s, s2)
            })
            .collect();
        batch += ROUND;
        for (s, s2) in parts {
            sum += s;
            sum2 += s2;
            n += cfg.batch_size as u64;
            let mean = sum / n as f64;
            let var = (sum2 / n as f64 - mean * mean).max(0.0);
            let se = (var / n as f64).sqrt();
            if se <= cfg.target_rel_error * mean.abs() {
                return Ok(VolumeEstimate {
                    value: mean,
                    std_error: se,
                    samples: n,
                    delta,
                });
            }
            if n as usize >= cfg.max_samples {
                return Err(Error::PrecisionNotReached {
                    estimate: mean,
                    std_error: se,
                    samples: n,
                });
            }
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    fn rotation_block(a: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.7, 0.0, 0.0, //
                0.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, a.cos(), -a.sin(), //
                0.0, 0.0, a.sin(), a.cos(),
            ],
        )
    }

    fn standard_omega() -> DMatrix<f64> {
        DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 1.0, 0.0, 0.0, //
                -1.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, //
                0.0, 0.0, -1.0, 0.0,
            ],
        )
    }

    /// Random linear symplectomorphism: product of shears in canonical pairs.
    fn random_symplectic(seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = DMatrix::identity(4, 4);
        for _ in 0..6 {
            let mut sym = DMatrix::zeros(2, 2);
            sym[(0, 0)] = rng.random::<f64>() - 0.5;
            sym[(1, 1)] = rng.random::<f64>() - 0.5;
            sym[(0, 1)] = rng.random::<f64>() - 0.5;
            sym[(1, 0)] = sym[(0, 1)];
            // Shear (q, p) -> (q, p + S q) in the ordering (q1, p1, q2, p2).
            let mut lower = DMatrix::identity(4, 4);
            let mut upper = DMatrix::identity(4, 4);
            for i in 0..2 {
                for j in 0..2 {
                    lower[(2 * i + 1, 2 * j)] = sym[(i, j)];
                    upper[(2 * i, 2 * j + 1)] = 0.5 * sym[(i, j)];
                }
            }
            s = upper * lower * s;
        }
        s
    }

    #[test]
    fn synthetic_rotation_determinant() {
        for a in [PI / 3.0, PI / 2.0, 2.0] {
            let s = random_symplectic(7);
            let si = s.clone().try_inverse().unwrap();
            let omega = si.transpose() * standard_omega() * &si;
            let m = &s * rotation_block(a) * &si;
            let flow = &s * DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
            let grad = si.transpose() * DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0]);
            let det = poincare_det(&m, &omega, &flow, &grad).unwrap();
            assert_relative_eq!(det.det, 2.0 - 2.0 * a.cos(), epsilon = 1e-10);
            assert!((det.det - det.det_alternative).abs() < 1e-10);
        }
    }

    #[test]
    fn identity_monodromy_is_degenerate() {
        let m = DMatrix::identity(4, 4);
        let flow = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let grad = DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0]);
        let det = poincare_det(&m, &standard_omega(), &flow, &grad).unwrap();
        assert!(det.degenerate);
        assert!(det.det.abs() < 1e-14);
    }

    #[test]
    fn parallel_flow_and_gradient_rejected() {
        let m = DMatrix::identity(4, 4);
        let v = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let res = poincare_det(&m, &standard_omega(), &v, &v);
        assert!(matches!(res, Err(Error::Conditioning(_))));
    }

    #[test]
    fn two_dimensional_quotient_is_empty() {
        let m = DMatrix::identity(2, 2);
        let v = DVector::from_vec(vec![1.0, 0.0]);
        let g = DVector::from_vec(vec![0.0, 1.0]);
        let omega = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert_eq!(poincare_det(&m, &omega, &v, &g).unwrap().det, 1.0);
    }

    #[test]
    fn flat_u1_winding_orbit() {
        let model = Model::flat_u1(1.0, 1.0 / 3.0, 0.0);
        let e = 2.0;
        let cfg = ShootingConfig {
            windings: vec![1],
            section_grid: 2,
            ..Default::default()
        };
        let orbits = find_periodic_orbits(&model, e, &cfg).unwrap();
        assert_eq!(orbits.len(), 1);
        let o = &orbits[0];
        let pt = (e * e - 1.0f64).sqrt();
        // x' = p~/E, so T = 2 pi E / p~.
        assert_relative_eq!(o.period, 2.0 * PI * e / pt, epsilon = 1e-8);
        assert_relative_eq!(o.primitive_period, o.period, epsilon = 1e-12);
        assert_eq!(o.component_kind, ComponentKind::IsolatedNondegenerate);
        assert_eq!(o.det_i_minus_p, 1.0);
        assert_relative_eq!(o.holonomy.norm(), 1.0, epsilon = 1e-12);
        // Closed action: T E - q0 dtheta = 2 pi p on the forward orbit.
        let p = pt + 1.0 / 3.0;
        let expected = Complex64::from_polar(1.0, 2.0 * PI * p);
        assert!((o.holonomy - expected).norm() < 1e-8);
        // Drift oracle: dtheta = T q0 / E - T (x') A = T (q0 - A p~) / E.
        assert_relative_eq!(
            o.drift_angles[0],
            o.period * (1.0 - pt / 3.0) / e,
            epsilon = 1e-8
        );
    }

    #[test]
    fn holonomy_squares_on_doubling() {
        let model = Model::flat_u1(1.0, 1.0 / 3.0, 0.0);
        let cfg = ShootingConfig {
            windings: vec![1],
            section_grid: 1,
            ..Default::default()
        };
        let o = find_periodic_orbits(&model, 2.0, &cfg).unwrap().remove(0);
        let mut twice = o.clone();
        twice.period *= 2.0;
        twice.drift_angles = vec![2.0 * o.drift_angles[0]];
        let h2 = orbit_holonomy(&model, &twice, 1).unwrap();
        assert!((h2 - o.holonomy * o.holonomy).norm() < 1e-10);
        let zero = PeriodicOrbit::zero_time(&model, o.start.clone());
        assert_eq!(orbit_holonomy(&model, &zero, 3).unwrap(), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn librating_orbit_in_lapse_well() {
        let model = Model::variable_lapse_u1(1.0, 0.1);
        let cfg = ShootingConfig {
            windings: vec![0],
            section_grid: 4,
            ..Default::default()
        };
        let orbits = find_periodic_orbits(&model, 1.0, &cfg).unwrap();
        assert_eq!(orbits.len(), 1, "{orbits:?}");
        let o = &orbits[0];
        assert!(o.residual < 1e-8);
        assert_eq!(o.component_kind, ComponentKind::IsolatedNondegenerate);
        // Oracle: T = \oint dx / x' on the level set, by quadrature.
        let n = |x: f64| 1.0 + 0.1 * x.cos();
        let xdot = |x: f64| n(x) * (1.0 - n(x).powi(2)).max(0.0).sqrt();
        let turn = PI / 2.0;
        let (a, b) = (turn, 2.0 * PI - turn);
        // x' = N p / sqrt(p^2 + 1) = N sqrt(1 - N^2) on N sqrt(p^2 + 1) = 1.
        // Substitution x = mid + half sin(u) removes the endpoint singularity.
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        let k = 20000;
        let mut t = 0.0;
        for i in 0..k {
            let u = -PI / 2.0 + PI * (i as f64 + 0.5) / k as f64;
            let x = mid + half * u.sin();
            t += half * u.cos() / xdot(x) * PI / k as f64;
        }
        assert_relative_eq!(o.period, 2.0 * t, max_relative = 1e-5);
        // Non-flat lapse: no shorter sub-period.
        assert_relative_eq!(o.primitive_period, o.period);
    }

    #[test]
    fn empty_below_threshold() {
        let model = Model::flat_u1(1.0, 0.0, 0.0);
        let cfg = ShootingConfig {
            windings: vec![1],
            ..Default::default()
        };
        assert!(find_periodic_orbits(&model, 0.5, &cfg).unwrap().is_empty());
    }

    #[test]
    fn flat_volume_closed_form() {
        let model = Model::flat_u1(1.0, 0.2, 0.0);
        let v = energy_surface_volume(&model, 2.0, &SamplerConfig::default()).unwrap();
        assert_relative_eq!(v.value, 8.0 * PI / 3f64.sqrt(), max_relative = 1e-6);
        let su2 = Model::flat_su2(0.2, 0.0);
        let r = su2.orbit_radius();
        let v = energy_surface_volume(&su2, 2.0, &SamplerConfig::default()).unwrap();
        let u1 = 4.0 * PI * 2.0 / (4.0 - r * r).sqrt();
        assert_relative_eq!(v.value, u1 * 4.0 * PI * r / 2f64.sqrt(), max_relative = 1e-6);
    }

    #[test]
    fn volume_seeds_agree() {
        let model = Model::variable_lapse_u1(1.0, 0.1);
        let a = SamplerConfig {
            seed: 1,
            ..Default::default()
        };
        let b = SamplerConfig {
            seed: 2,
            ..Default::default()
        };
        let va = energy_surface_volume(&model, 1.5, &a).unwrap();
        let vb = energy_surface_volume(&model, 1.5, &b).unwrap();
        let se = (va.std_error.powi(2) + vb.std_error.powi(2)).sqrt();
        assert!((va.value - vb.value).abs() < 3.0 * se, "{va:?} {vb:?}");
        let again = energy_surface_volume(&model, 1.5, &a).unwrap();
        assert_eq!(va, again);
    }

    #[test]
    fn volume_precision_error() {
        let model = Model::variable_lapse_u1(1.0, 0.1);
        let cfg = SamplerConfig {
            max_samples: 1000,
            batch_size: 100,
            target_rel_error: 1e-12,
            seed: 0,
        };
        assert!(matches!(
            energy_surface_volume(&model, 1.5, &cfg),
            Err(Error::PrecisionNotReached { .. })
        ));
    }

    #[test]
    fn atlas_round_trip() {
        let model = Model::flat_u1(1.0, 0.0, 0.0);
        let orbit = PeriodicOrbit::zero_time(&model, PhasePoint::new(0.0, 1.0, vec![1.0]));
        let atlas = OrbitAtlas {
            energy: 2.0,
            orbits: vec![orbit],
        };
        let text = atlas.to_json().unwrap();
        assert!(text.contains("\"zero-time\""));
        assert_eq!(OrbitAtlas::from_json(&text).unwrap(), atlas);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn moment_map_conserved(x in 0.0..6.0f64, p in -2.0..2.0f64, th in 0.0..3.0f64) {
            let model = Model::flat_su2(0.3, 0.1);
            let r = model.orbit_radius();
            let q = vec![r * th.sin(), 0.0, r * th.cos()];
            let start = PhasePoint::new(x, p, q);
            let out = dynamics::integrate(&model, &start, 50.0, 1e-12, false).unwrap();
            let q1 = moment_map(&out.state.point);
            let n1 = q1.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((n1 - r).abs() < 1e-9);
        }
    }
}
