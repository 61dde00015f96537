//! Wong flow on the reduced phase space, its variational (monodromy) flow and
//! the fiber drift, integrated by Gragg-Bulirsch-Stoer extrapolation.
//!
//! State layout: `z = (x, p, q_1..q_d)`, then optionally the monodromy matrix
//! (column-major, `(2+d)^2` entries), then the drift: `d` angles for abelian
//! groups or a unit quaternion `(w, v1, v2, v3)` for SU(2).

use nalgebra::DMatrix;
use num_dual::Dual64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Model, PhasePoint};

/// Modified-midpoint substep counts of the extrapolation tableau.
const SEQUENCE: [usize; 8] = [2, 4, 6, 8, 10, 12, 14, 16];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FiberDrift {
    /// Integrated `dtheta = dH/dq` per algebra direction (abelian groups).
    Angles(Vec<f64>),
    /// Unit quaternion of the SU(2) element `g(t)`.
    Quaternion([f64; 4]),
}

impl FiberDrift {
    /// Lie-algebra element `X` with `exp X = g` (orthonormal coordinates).
    pub fn generator(&self, model: &Model) -> Vec<f64> {
        match self {
            FiberDrift::Angles(a) => a.clone(),
            FiberDrift::Quaternion(u) => {
                let c = bracket_constant(model);
                let vn = (u[1] * u[1] + u[2] * u[2] + u[3] * u[3]).sqrt();
                if vn < 1e-300 {
                    return vec![0.0; 3];
                }
                let half = vn.atan2(u[0]);
                let phi = 2.0 * half;
                (1..4).map(|i| phi / c * u[i] / vn).collect()
            }
        }
    }

    /// Rotation angle `theta` of `g` about the charge direction `q`, in the
    /// torus normalisation of the group (`chi(g) = exp(i <q, X>)` at level one).
    pub fn pairing_with(&self, model: &Model, q: &[f64]) -> f64 {
        match self {
            FiberDrift::Angles(a) => a.iter().zip(q).map(|(x, y)| x * y).sum(),
            FiberDrift::Quaternion(u) => {
                // Keep the SU(2) sheet: exp(i <q, X>) = cos(t) + i sin(t) with
                // t computed from the quaternion components along q.
                let c = bracket_constant(model);
                let r = q.iter().map(|v| v * v).sum::<f64>().sqrt();
                let along = (u[1] * q[0] + u[2] * q[1] + u[3] * q[2]) / r;
                let half = along.atan2(u[0]);
                2.0 * half * r / c
            }
        }
    }

    /// Distance of `g` from the stabilizer of `q` (zero when `X` is parallel to `q`).
    pub fn stabilizer_defect(&self, q: &[f64]) -> f64 {
        match self {
            FiberDrift::Angles(_) => 0.0,
            FiberDrift::Quaternion(u) => {
                let r = q.iter().map(|v| v * v).sum::<f64>().sqrt();
                let v = [u[1], u[2], u[3]];
                let along: f64 = v.iter().zip(q).map(|(a, b)| a * b / r).sum();
                let perp2: f64 = v.iter().map(|a| a * a).sum::<f64>() - along * along;
                perp2.max(0.0).sqrt()
            }
        }
    }
}

fn bracket_constant(model: &Model) -> f64 {
    model
        .group
        .algebra
        .as_ref()
        .filter(|a| a.dim == 3)
        .map(|a| a.f(0, 1, 2))
        .unwrap_or(1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub point: PhasePoint,
    pub time: f64,
    pub monodromy: Option<DMatrix<f64>>,
    pub fiber_drift: FiberDrift,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub energy_drift: f64,
    pub charge_drift: f64,
    pub bound: f64,
    pub within_bound: bool,
    pub steps: usize,
    pub rejected: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Integration {
    pub state: FlowState,
    pub report: DriftReport,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum DriftKind {
    Abelian,
    Su2,
}

/// Vector field of the extended state.
struct Extended<'a> {
    model: &'a Model,
    k: usize,
    track: bool,
    drift: DriftKind,
    c: f64,
}

impl<'a> Extended<'a> {
    fn new(model: &'a Model, track: bool) -> Result<Self> {
        let d = model.algebra_dim();
        let drift = match &model.group.algebra {
            Some(a) if a.is_abelian() => DriftKind::Abelian,
            Some(a) if a.dim == 3 => DriftKind::Su2,
            _ => {
                return Err(Error::Unsupported(format!(
                    "flows are implemented for abelian groups and SU(2), not {}",
                    model.group.name
                )))
            }
        };
        Ok(Self {
            model,
            k: 2 + d,
            track,
            drift,
            c: bracket_constant(model),
        })
    }

    fn len(&self) -> usize {
        let drift = match self.drift {
            DriftKind::Abelian => self.k - 2,
            DriftKind::Su2 => 4,
        };
        self.k + if self.track { self.k * self.k } else { 0 } + drift
    }

    fn drift_offset(&self) -> usize {
        self.k + if self.track { self.k * self.k } else { 0 }
    }

    fn pack(&self, z: &[f64], m: Option<&DMatrix<f64>>, drift: &FiberDrift) -> Vec<f64> {
        let mut y = z.to_vec();
        if self.track {
            match m {
                Some(m) => y.extend(m.iter()),
                None => y.extend(DMatrix::<f64>::identity(self.k, self.k).iter()),
            }
        }
        match drift {
            FiberDrift::Angles(a) => y.extend(a),
            FiberDrift::Quaternion(u) => y.extend(u),
        }
        y
    }

    fn unpack(&self, t: f64, y: &[f64]) -> FlowState {
        let k = self.k;
        let monodromy = self
            .track
            .then(|| DMatrix::from_column_slice(k, k, &y[k..k + k * k]));
        let off = self.drift_offset();
        let fiber_drift = match self.drift {
            DriftKind::Abelian => FiberDrift::Angles(y[off..].to_vec()),
            DriftKind::Su2 => FiberDrift::Quaternion([y[off], y[off + 1], y[off + 2], y[off + 3]]),
        };
        FlowState {
            point: PhasePoint::from_slice(&y[..k]),
            time: t,
            monodromy,
            fiber_drift,
        }
    }

    fn rhs(&self, y: &[f64], out: &mut [f64]) {
        let k = self.k;
        let z = &y[..k];
        let f = self.model.wong_rhs_generic(z);
        out[..k].copy_from_slice(&f);
        if self.track {
            let jac = jacobian(self.model, z);
            let m = DMatrix::from_column_slice(k, k, &y[k..k + k * k]);
            let dm = jac * m;
            out[k..k + k * k].copy_from_slice(dm.as_slice());
        }
        let omega = self.model.gradient_generic(z[0], z[1], &z[2..]).dq;
        let off = self.drift_offset();
        match self.drift {
            DriftKind::Abelian => out[off..off + omega.len()].copy_from_slice(&omega),
            DriftKind::Su2 => {
                let w = [self.c * omega[0], self.c * omega[1], self.c * omega[2]];
                let u = &y[off..off + 4];
                let v = [u[1], u[2], u[3]];
                out[off] = -0.5 * (w[0] * v[0] + w[1] * v[1] + w[2] * v[2]);
                out[off + 1] = 0.5 * (u[0] * w[0] + w[1] * v[2] - w[2] * v[1]);
                out[off + 2] = 0.5 * (u[0] * w[1] + w[2] * v[0] - w[0] * v[2]);
                out[off + 3] = 0.5 * (u[0] * w[2] + w[0] * v[1] - w[1] * v[0]);
            }
        }
    }

    fn project(&self, y: &mut [f64], radius: f64) {
        let k = self.k;
        if k > 3 {
            let r = y[2..k].iter().map(|v| v * v).sum::<f64>().sqrt();
            if r > 0.0 {
                for v in &mut y[2..k] {
                    *v *= radius / r;
                }
            }
        }
        if self.drift == DriftKind::Su2 {
            let off = self.drift_offset();
            let n = y[off..off + 4].iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in &mut y[off..off + 4] {
                *v /= n;
            }
        }
    }
}

/// Exact Jacobian of the Wong vector field by forward-mode differentiation.
pub fn jacobian(model: &Model, z: &[f64]) -> DMatrix<f64> {
    let k = z.len();
    let mut jac = DMatrix::zeros(k, k);
    for j in 0..k {
        let zd: Vec<Dual64> = z
            .iter()
            .enumerate()
            .map(|(i, v)| Dual64::new(*v, if i == j { 1.0 } else { 0.0 }))
            .collect();
        let f = model.wong_rhs_generic(&zd);
        for i in 0..k {
            jac[(i, j)] = f[i].eps;
        }
    }
    jac
}

/// Poisson tensor of the reduced phase space at `z` (canonical in `(x, p)`,
/// Lie-Poisson in `q`).
pub fn poisson_tensor(model: &Model, z: &[f64]) -> DMatrix<f64> {
    let k = z.len();
    let mut b = DMatrix::zeros(k, k);
    b[(0, 1)] = 1.0;
    b[(1, 0)] = -1.0;
    if let Some(alg) = &model.group.algebra {
        let d = k - 2;
        for bi in 0..d {
            for a in 0..d {
                let mut acc = 0.0;
                for c in 0..d {
                    acc -= z[2 + c] * alg.f(a, bi, c);
                }
                b[(2 + bi, 2 + a)] = acc;
            }
        }
    }
    b
}

/// `max |M B(z0) M^T - B(z1)|`, zero for an exact Poisson map.
pub fn symplectic_defect(model: &Model, z0: &[f64], z1: &[f64], m: &DMatrix<f64>) -> f64 {
    let lhs = m * poisson_tensor(model, z0) * m.transpose();
    (lhs - poisson_tensor(model, z1)).amax()
}

#[derive(Clone, Debug)]
pub struct IntegratorConfig {
    pub tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl IntegratorConfig {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            max_step: f64::INFINITY,
            max_steps: 2_000_000,
        }
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !(1e-13..=1e-6).contains(&tol) {
        return Err(Error::Config(format!("tol {tol} outside [1e-13, 1e-6]")));
    }
    Ok(())
}

struct Stepper<'a> {
    sys: Extended<'a>,
    cfg: IntegratorConfig,
    radius: f64,
    work: Vec<Vec<Vec<f64>>>,
    steps: usize,
    rejected: usize,
}

impl<'a> Stepper<'a> {
    fn error_norm(&self, a: &[f64], b: &[f64], y: &[f64]) -> f64 {
        let tol = self.cfg.tol;
        let mut worst: f64 = 0.0;
        for i in 0..a.len() {
            let sc = tol + tol * y[i].abs().max(a[i].abs());
            worst = worst.max(((a[i] - b[i]) / sc).abs());
        }
        worst
    }

    fn midpoint(&mut self, y: &[f64], big: f64, n: usize) -> Vec<f64> {
        let len = y.len();
        let h = big / n as f64;
        let mut f = vec![0.0; len];
        self.sys.rhs(y, &mut f);
        let mut z0 = y.to_vec();
        let mut z1: Vec<f64> = (0..len).map(|i| y[i] + h * f[i]).collect();
        for _ in 1..n {
            self.sys.rhs(&z1, &mut f);
            let z2: Vec<f64> = (0..len).map(|i| z0[i] + 2.0 * h * f[i]).collect();
            z0 = z1;
            z1 = z2;
        }
        self.sys.rhs(&z1, &mut f);
        (0..len).map(|i| 0.5 * (z0[i] + z1[i] + h * f[i])).collect()
    }

    /// One extrapolated step; returns (new state, error estimate, order row used).
    fn try_step(&mut self, y: &[f64], big: f64) -> (Vec<f64>, f64, usize) {
        self.work.clear();
        let mut best = (y.to_vec(), f64::INFINITY, 0usize);
        for (j, &nj) in SEQUENCE.iter().enumerate() {
            let mut row = vec![self.midpoint(y, big, nj)];
            for k in 1..=j {
                let ratio = (nj as f64 / SEQUENCE[j - k] as f64).powi(2) - 1.0;
                let prev = &self.work[j - 1][k - 1];
                let cur = &row[k - 1];
                let next: Vec<f64> = cur
                    .iter()
                    .zip(prev)
                    .map(|(c, p)| c + (c - p) / ratio)
                    .collect();
                row.push(next);
            }
            if j >= 2 {
                let err = self.error_norm(&row[j], &self.work[j - 1][j - 1], y);
                if err <= 1.0 {
                    return (row[j].clone(), err, j);
                }
                best = (row[j].clone(), err, j);
            }
            self.work.push(row);
        }
        best
    }

    fn advance(&mut self, y: &mut Vec<f64>, t0: f64, t1: f64, h: &mut f64) -> Result<()> {
        let dir = (t1 - t0).signum();
        let mut t = t0;
        while (t1 - t) * dir > 0.0 {
            if self.steps >= self.cfg.max_steps {
                return Err(Error::Integration {
                    time: t,
                    reason: "step budget exhausted".into(),
                });
            }
            let mut step = h.abs().min(self.cfg.max_step).min((t1 - t).abs()) * dir;
            if step.abs() < 1e-14 * t.abs().max(1.0) && (t1 - t).abs() > step.abs() {
                return Err(Error::Integration {
                    time: t,
                    reason: "step size underflow".into(),
                });
            }
            let last = (t1 - t).abs() <= step.abs() * (1.0 + 1e-12);
            if last {
                step = t1 - t;
            }
            let (next, err, order) = self.try_step(y, step);
            if !next.iter().all(|v| v.is_finite()) || err > 1.0 {
                self.rejected += 1;
                let factor = if err.is_finite() {
                    (0.9 * err.powf(-1.0 / (2.0 * order as f64 + 1.0))).clamp(0.1, 0.7)
                } else {
                    0.25
                };
                *h = step.abs() * factor;
                if *h < 1e-14 * t.abs().max(1.0) {
                    return Err(Error::Integration {
                        time: t,
                        reason: "step size underflow".into(),
                    });
                }
                continue;
            }
            *y = next;
            self.sys.project(y, self.radius);
            self.steps += 1;
            t = if last { t1 } else { t + step };
            let growth = if order + 1 < SEQUENCE.len() { 1.5 } else { 1.0 };
            let factor = (0.9 * err.max(1e-10).powf(-1.0 / (2.0 * order as f64 + 1.0)) * growth)
                .clamp(0.2, 4.0);
            if !last {
                *h = step.abs() * factor;
            }
        }
        Ok(())
    }
}

/// Integrates the Wong flow from `start` for time `t` (negative allowed).
pub fn integrate(
    model: &Model,
    start: &PhasePoint,
    t: f64,
    tol: f64,
    track_monodromy: bool,
) -> Result<Integration> {
    integrate_with(model, start, t, IntegratorConfig::new(tol), track_monodromy)
}

pub fn integrate_with(
    model: &Model,
    start: &PhasePoint,
    t: f64,
    cfg: IntegratorConfig,
    track_monodromy: bool,
) -> Result<Integration> {
    check_tol(cfg.tol)?;
    let mut samples = Vec::new();
    let out = run(model, start, &[t], cfg, track_monodromy, &mut samples)?;
    Ok(out)
}

fn initial_drift(model: &Model) -> FiberDrift {
    match &model.group.algebra {
        Some(a) if !a.is_abelian() => FiberDrift::Quaternion([1.0, 0.0, 0.0, 0.0]),
        _ => FiberDrift::Angles(vec![0.0; model.algebra_dim()]),
    }
}

fn run(
    model: &Model,
    start: &PhasePoint,
    times: &[f64],
    cfg: IntegratorConfig,
    track: bool,
    samples: &mut Vec<FlowState>,
) -> Result<Integration> {
    let sys = Extended::new(model, track)?;
    if start.q.len() + 2 != sys.k {
        return Err(Error::Config("phase point charge has wrong dimension".into()));
    }
    let radius = start.charge_radius();
    let mut y = sys.pack(&start.to_vec(), None, &initial_drift(model));
    debug_assert_eq!(y.len(), sys.len());
    let h0 = model.hamiltonian(start);
    let mut stepper = Stepper {
        sys,
        cfg,
        radius,
        work: Vec::new(),
        steps: 0,
        rejected: 0,
    };
    let mut h = 0.1;
    let mut t0 = 0.0;
    for &t1 in times {
        stepper.advance(&mut y, t0, t1, &mut h)?;
        samples.push(stepper.sys.unpack(t1, &y));
        t0 = t1;
    }
    let state = stepper.sys.unpack(t0, &y);
    let energy_drift = (model.hamiltonian(&state.point) - h0).abs();
    let charge_drift = (state.point.charge_radius() - radius).abs();
    let bound = 10.0 * stepper.cfg.tol * t0.abs().max(1.0);
    Ok(Integration {
        report: DriftReport {
            energy_drift,
            charge_drift,
            bound,
            within_bound: energy_drift <= bound && charge_drift <= bound,
            steps: stepper.steps,
            rejected: stepper.rejected,
        },
        state,
    })
}

/// States at the requested output times (monotone, same sign).
pub fn sample_trajectory(
    model: &Model,
    start: &PhasePoint,
    times: &[f64],
    tol: f64,
) -> Result<Vec<FlowState>> {
    check_tol(tol)?;
    let mut samples = Vec::new();
    run(model, start, times, IntegratorConfig::new(tol), false, &mut samples)?;
    Ok(samples)
}

/// Writes `t, x, p, q..., H, |q|` rows.
pub fn write_trajectory_csv<W: std::io::Write>(
    model: &Model,
    states: &[FlowState],
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = states.first().map(|s| s.point.q.len()).unwrap_or(0);
    let mut header = vec!["t".to_string(), "x".into(), "p".into()];
    header.extend((0..d).map(|i| format!("q{i}")));
    header.extend(["H".to_string(), "abs_q".into()]);
    w.write_record(&header)?;
    for s in states {
        let mut row = vec![s.time, s.point.x, s.point.p];
        row.extend(&s.point.q);
        row.push(model.hamiltonian(&s.point));
        row.push(s.point.charge_radius());
        w.write_record(row.iter().map(|v| format!("{v:.17e}")))?;
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
    use std::f64::consts::PI;

    fn wavy_su2() -> Model {
        let mut g = BaseGeometry::flat(0.1);
        g.lapse = TrigSeries::with_cos(1.2, vec![0.1]);
        g.metric = TrigSeries::with_cos(1.0, vec![0.0, 0.1]);
        let conn = ConnectionSpec {
            components: vec![
                TrigSeries::with_cos(0.1, vec![0.2]),
                TrigSeries {
                    a0: 0.0,
                    cos: vec![],
                    sin: vec![0.3],
                },
                TrigSeries::constant(0.4),
            ],
        };
        Model::new(g, conn, GroupData::su2(), vec![1.0]).unwrap()
    }

    #[test]
    fn free_motion_closed_form() {
        let m = Model::flat_u1(1.0, 0.0, 0.0);
        let start = PhasePoint::new(0.2, 3.0, vec![4.0]);
        let out = integrate(&m, &start, 100.0, 1e-12, true).unwrap();
        assert!(out.report.energy_drift < 1e-9);
        let xdot: f64 = 3.0 / 5.0;
        let expect = (0.2 + xdot * 100.0).rem_euclid(2.0 * PI);
        assert!((out.state.point.x.rem_euclid(2.0 * PI) - expect).abs() < 1e-9);
        let mono = out.state.monodromy.unwrap();
        let hpp = 16.0 / 125.0;
        assert_relative_eq!(mono[(0, 0)], 1.0, epsilon = 1e-9);
        assert_relative_eq!(mono[(1, 1)], 1.0, epsilon = 1e-9);
        assert_relative_eq!(mono[(0, 1)], 100.0 * hpp, epsilon = 1e-8);
        assert!(mono[(1, 0)].abs() < 1e-9);
        // Fiber drift: dtheta/dt = q/E.
        if let FiberDrift::Angles(a) = &out.state.fiber_drift {
            assert_relative_eq!(a[0], 100.0 * 4.0 / 5.0, epsilon = 1e-8);
        } else {
            panic!("U(1) drift should be an angle");
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = wavy_su2();
        let z = [0.7, 1.1, 0.3, -0.4, 0.5];
        let jac = jacobian(&m, &z);
        let h = 1e-6;
        for j in 0..5 {
            let mut a = z;
            let mut b = z;
            a[j] += h;
            b[j] -= h;
            let fa = m.wong_rhs_generic(&a);
            let fb = m.wong_rhs_generic(&b);
            for i in 0..5 {
                let fd = (fa[i] - fb[i]) / (2.0 * h);
                assert!((fd - jac[(i, j)]).abs() < 1e-7, "({i},{j})");
            }
        }
    }

    #[test]
    fn conservation_and_poisson_map() {
        let m = wavy_su2();
        let r = m.orbit_radius();
        let start = PhasePoint::new(0.3, 0.8, vec![0.6 * r, 0.0, 0.8 * r]);
        let out = integrate(&m, &start, 100.0, 1e-12, true).unwrap();
        assert!(out.report.energy_drift < 1e-9, "{:?}", out.report);
        assert!(out.report.charge_drift < 1e-9);
        let defect = symplectic_defect(
            &m,
            &start.to_vec(),
            &out.state.point.to_vec(),
            out.state.monodromy.as_ref().unwrap(),
        );
        assert!(defect < 1e-7, "{defect}");
    }

    #[test]
    fn time_reversal() {
        let m = wavy_su2();
        let r = m.orbit_radius();
        let start = PhasePoint::new(1.0, -0.5, vec![0.0, 0.6 * r, 0.8 * r]);
        let fwd = integrate(&m, &start, 100.0, 1e-12, false).unwrap();
        let back = integrate(&m, &fwd.state.point, -100.0, 1e-12, false).unwrap();
        let err = start
            .to_vec()
            .iter()
            .zip(back.state.point.to_vec())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn su2_drift_rotates_charge() {
        // q(t) must equal R(g(t)) q(0).
        let m = wavy_su2();
        let r = m.orbit_radius();
        let start = PhasePoint::new(0.3, 0.8, vec![0.6 * r, 0.0, 0.8 * r]);
        let out = integrate(&m, &start, 7.0, 1e-12, false).unwrap();
        let FiberDrift::Quaternion(u) = out.state.fiber_drift else {
            panic!()
        };
        let (w, v) = (u[0], [u[1], u[2], u[3]]);
        let q = &start.q;
        let cross = |a: [f64; 3], b: [f64; 3]| {
            [
                a[1] * b[2] - a[2] * b[1],
                a[2] * b[0] - a[0] * b[2],
                a[0] * b[1] - a[1] * b[0],
            ]
        };
        let q3 = [q[0], q[1], q[2]];
        let t = cross(v, q3).map(|c| 2.0 * c);
        let vt = cross(v, t);
        let rotated: Vec<f64> = (0..3).map(|i| q3[i] + w * t[i] + vt[i]).collect();
        for i in 0..3 {
            assert!((rotated[i] - out.state.point.q[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn tolerance_range_enforced() {
        let m = Model::flat_u1(1.0, 0.0, 0.0);
        let start = PhasePoint::new(0.0, 1.0, vec![1.0]);
        assert!(integrate(&m, &start, 1.0, 1e-3, false).is_err());
    }
}
