//! Root data for compact structure groups and the representation-theoretic
//! quantities built from it: Weyl dimensions, Casimir eigenvalues, characters
//! and the characters of the stabilizer of a dominant weight.
//!
//! Weights and roots are written in a fixed orthonormal (Euclidean) weight
//! basis. The invariant pairing is `inner_norm` times the Euclidean dot
//! product. `rho` is the sum of the positive roots, so the Weyl vector is
//! `rho / 2`.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const INTEGRALITY_TOL: f64 = 1e-9;
const DENOMINATOR_TOL: f64 = 1e-10;
const MAX_WEIGHTS: usize = 200_000;

/// Structure constants of the Lie algebra in an orthonormal basis
/// `e_1..e_d` of the invariant inner product.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AlgebraCoords {
    pub dim: usize,
    /// `[e_a, e_b] = sum_c structure[(a*dim + b)*dim + c] e_c`.
    pub structure: Vec<f64>,
    /// Basis directions spanning the Cartan subalgebra, one per weight coordinate.
    pub cartan_axes: Vec<usize>,
}

impl AlgebraCoords {
    pub fn f(&self, a: usize, b: usize, c: usize) -> f64 {
        self.structure[(a * self.dim + b) * self.dim + c]
    }

    pub fn is_abelian(&self) -> bool {
        self.structure.iter().all(|v| *v == 0.0)
    }

    /// Coadjoint action `ad*_X xi`, with `<ad*_X xi, Y> = -<xi, [X, Y]>`.
    pub fn ad_star(&self, x: &[f64], xi: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d];
        for (b, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for a in 0..d {
                for c in 0..d {
                    acc -= x[a] * xi[c] * self.f(a, b, c);
                }
            }
            *o = acc;
        }
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GroupData {
    pub name: String,
    pub rank: usize,
    pub positive_roots: Vec<Vec<f64>>,
    pub inner_norm: f64,
    pub dim: usize,
    #[serde(default)]
    pub algebra: Option<AlgebraCoords>,
}

/// On-disk root data: rank, positive roots and the inner product scale.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RootDataFile {
    #[serde(default)]
    pub name: Option<String>,
    pub rank: usize,
    pub roots: Vec<Vec<f64>>,
    pub inner_norm: f64,
    #[serde(default)]
    pub dim: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct OrbitWeight {
    pub lambda0: Vec<f64>,
    pub m: u32,
}

impl OrbitWeight {
    pub fn new(lambda0: Vec<f64>, m: u32) -> Self {
        Self { lambda0, m }
    }

    pub fn at_level(&self, m: u32) -> Self {
        Self {
            lambda0: self.lambda0.clone(),
            m,
        }
    }

    /// The highest weight `m * lambda0`.
    pub fn highest_weight(&self) -> Vec<f64> {
        self.lambda0.iter().map(|v| v * self.m as f64).collect()
    }
}

/// Element of the stabilizer of the charge covector.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub enum StabilizerElement {
    /// Torus angles, one per weight coordinate.
    Torus(Vec<f64>),
    /// A Lie-algebra element `X` (orthonormal coordinates); the group element is `exp X`.
    Generator(Vec<f64>),
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn epsilon(a: usize, b: usize, c: usize) -> f64 {
    match (a, b, c) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

impl GroupData {
    /// U(1) normalised so the charge-q representation has Casimir q^2.
    pub fn u1() -> Self {
        Self {
            name: "U(1)".into(),
            rank: 1,
            positive_roots: vec![],
            inner_norm: 1.0,
            dim: 1,
            algebra: Some(AlgebraCoords {
                dim: 1,
                structure: vec![0.0],
                cartan_axes: vec![0],
            }),
        }
    }

    /// SU(2) with `<alpha, alpha> = 2`: root `(2)`, inner_norm 1/2.
    pub fn su2() -> Self {
        let s = 0.5;
        let c = 2.0 * f64::sqrt(s);
        let mut structure = vec![0.0; 27];
        for a in 0..3 {
            for b in 0..3 {
                for k in 0..3 {
                    structure[(a * 3 + b) * 3 + k] = c * epsilon(a, b, k);
                }
            }
        }
        Self {
            name: "SU(2)".into(),
            rank: 1,
            positive_roots: vec![vec![2.0]],
            inner_norm: s,
            dim: 3,
            algebra: Some(AlgebraCoords {
                dim: 3,
                structure,
                cartan_axes: vec![2],
            }),
        }
    }

    /// SU(3) with all roots of squared length 2 in a planar orthonormal basis.
    pub fn su3() -> Self {
        let a1 = vec![f64::sqrt(2.0), 0.0];
        let a2 = vec![-1.0 / f64::sqrt(2.0), f64::sqrt(1.5)];
        let a12 = vec![a1[0] + a2[0], a1[1] + a2[1]];
        Self {
            name: "SU(3)".into(),
            rank: 2,
            positive_roots: vec![a1, a2, a12],
            inner_norm: 1.0,
            dim: 8,
            algebra: None,
        }
    }

    pub fn from_root_data(data: RootDataFile) -> Result<Self> {
        let dim = data
            .dim
            .unwrap_or(data.rank + 2 * data.roots.len());
        let g = Self {
            name: data.name.unwrap_or_else(|| "custom".into()),
            rank: data.rank,
            positive_roots: data.roots,
            inner_norm: data.inner_norm,
            dim,
            algebra: None,
        };
        g.validate()?;
        Ok(g)
    }

    /// Parses root data from JSON (text starting with `{`) or TOML.
    pub fn parse_root_data(text: &str) -> Result<Self> {
        let data: RootDataFile = if text.trim_start().starts_with('{') {
            serde_json::from_str(text)?
        } else {
            toml::from_str(text)?
        };
        Self::from_root_data(data)
    }

    pub fn load_root_data(path: &Path) -> Result<Self> {
        Self::parse_root_data(&std::fs::read_to_string(path)?)
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "u1" | "u(1)" => Some(Self::u1()),
            "su2" | "su(2)" => Some(Self::su2()),
            "su3" | "su(3)" => Some(Self::su3()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::InvalidGroup("rank must be positive".into()));
        }
        if !(self.inner_norm > 0.0) || !self.inner_norm.is_finite() {
            return Err(Error::InvalidGroup("inner_norm must be positive".into()));
        }
        for (i, r) in self.positive_roots.iter().enumerate() {
            if r.len() != self.rank {
                return Err(Error::InvalidGroup(format!(
                    "root {i} has {} coordinates, rank is {}",
                    r.len(),
                    self.rank
                )));
            }
            if dot(r, r) < 1e-24 {
                return Err(Error::InvalidGroup(format!("root {i} is zero")));
            }
        }
        if let Some(a) = &self.algebra {
            if a.structure.len() != a.dim.pow(3) || a.cartan_axes.len() != self.rank {
                return Err(Error::InvalidGroup("algebra coordinates inconsistent".into()));
            }
        }
        Ok(())
    }

    pub fn pairing(&self, a: &[f64], b: &[f64]) -> f64 {
        self.inner_norm * dot(a, b)
    }

    /// Sum of the positive roots.
    pub fn rho(&self) -> Vec<f64> {
        let mut rho = vec![0.0; self.rank];
        for r in &self.positive_roots {
            for (x, y) in rho.iter_mut().zip(r) {
                *x += y;
            }
        }
        rho
    }

    fn weyl_vector(&self) -> Vec<f64> {
        self.rho().iter().map(|v| 0.5 * v).collect()
    }

    /// Positive roots that are not the sum of two positive roots.
    pub fn simple_roots(&self) -> Vec<Vec<f64>> {
        let roots = &self.positive_roots;
        roots
            .iter()
            .filter(|r| {
                !roots.iter().any(|a| {
                    roots.iter().any(|b| {
                        r.iter()
                            .zip(a.iter().zip(b))
                            .all(|(x, (y, z))| (x - y - z).abs() < 1e-9)
                    })
                })
            })
            .cloned()
            .collect()
    }

    /// Weyl group as (Euclidean matrix in row-major order, determinant sign).
    pub fn weyl_group(&self) -> Vec<(Vec<f64>, f64)> {
        let n = self.rank;
        let mut id = vec![0.0; n * n];
        for i in 0..n {
            id[i * n + i] = 1.0;
        }
        let reflections: Vec<Vec<f64>> = self
            .simple_roots()
            .iter()
            .map(|a| {
                let aa = dot(a, a);
                let mut s = id.clone();
                for i in 0..n {
                    for j in 0..n {
                        s[i * n + j] -= 2.0 * a[i] * a[j] / aa;
                    }
                }
                s
            })
            .collect();
        let mut group = vec![(id, 1.0)];
        let mut frontier = vec![0usize];
        while let Some(idx) = frontier.pop() {
            for s in &reflections {
                let (g, sign) = &group[idx];
                let mut prod = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        prod[i * n + j] = (0..n).map(|k| s[i * n + k] * g[k * n + j]).sum();
                    }
                }
                let known = group
                    .iter()
                    .any(|(h, _)| h.iter().zip(&prod).all(|(a, b)| (a - b).abs() < 1e-9));
                if !known {
                    let sign = -sign;
                    group.push((prod, sign));
                    frontier.push(group.len() - 1);
                }
            }
        }
        group
    }

    /// Fundamental weights dual to the simple coroots (semisimple full-rank case).
    pub fn fundamental_weights(&self) -> Result<Vec<Vec<f64>>> {
        let simple = self.simple_roots();
        let n = self.rank;
        if simple.len() != n {
            return Err(Error::Unsupported(
                "fundamental weights need as many simple roots as the rank".into(),
            ));
        }
        // Rows: coroots 2 a / <a,a>; solve C w_j = e_j.
        let c = DMatrix::from_fn(n, n, |i, j| 2.0 * simple[i][j] / dot(&simple[i], &simple[i]));
        let inv = c
            .try_inverse()
            .ok_or_else(|| Error::InvalidGroup("simple coroots are dependent".into()))?;
        Ok((0..n)
            .map(|j| (0..n).map(|i| inv[(i, j)]).collect())
            .collect())
    }

    /// Weight with the given Dynkin labels.
    pub fn weight_from_dynkin(&self, labels: &[i64]) -> Result<Vec<f64>> {
        let fw = self.fundamental_weights()?;
        if labels.len() != fw.len() {
            return Err(Error::InvalidWeight("wrong number of Dynkin labels".into()));
        }
        let mut w = vec![0.0; self.rank];
        for (l, f) in labels.iter().zip(&fw) {
            for (x, y) in w.iter_mut().zip(f) {
                *x += *l as f64 * y;
            }
        }
        Ok(w)
    }

    /// Checks dominance and integrality of `w.lambda0`.
    pub fn check_weight(&self, w: &OrbitWeight) -> Result<()> {
        if w.lambda0.len() != self.rank {
            return Err(Error::InvalidWeight(format!(
                "weight has {} coordinates, rank is {}",
                w.lambda0.len(),
                self.rank
            )));
        }
        if w.lambda0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidWeight("non-finite weight".into()));
        }
        for a in &self.positive_roots {
            let pair = 2.0 * dot(&w.lambda0, a) / dot(a, a);
            if pair < -INTEGRALITY_TOL {
                return Err(Error::InvalidWeight(format!(
                    "weight is not dominant (coroot pairing {pair})"
                )));
            }
            if (pair - pair.round()).abs() > INTEGRALITY_TOL {
                return Err(Error::InvalidWeight(format!(
                    "weight is not integral (coroot pairing {pair})"
                )));
            }
        }
        Ok(())
    }

    /// Charge covector `xi_0` for level `w.m` in orthonormal algebra coordinates.
    pub fn charge_covector(&self, w: &OrbitWeight) -> Result<Vec<f64>> {
        let alg = self
            .algebra
            .as_ref()
            .ok_or_else(|| Error::Unsupported(format!("{} has no algebra coordinates", self.name)))?;
        let mut xi = vec![0.0; alg.dim];
        let s = self.inner_norm.sqrt();
        for (i, &axis) in alg.cartan_axes.iter().enumerate() {
            xi[axis] = s * w.lambda0[i] * w.m as f64;
        }
        Ok(xi)
    }

    /// Algebra element generating the torus element with the given angles.
    pub fn torus_generator(&self, angles: &[f64]) -> Result<Vec<f64>> {
        let alg = self
            .algebra
            .as_ref()
            .ok_or_else(|| Error::Unsupported(format!("{} has no algebra coordinates", self.name)))?;
        if angles.len() != self.rank {
            return Err(Error::Domain("torus angle count differs from rank".into()));
        }
        let mut x = vec![0.0; alg.dim];
        let s = self.inner_norm.sqrt();
        for (i, &axis) in alg.cartan_axes.iter().enumerate() {
            x[axis] = angles[i] / s;
        }
        Ok(x)
    }

    /// Torus angles of a Cartan-valued algebra element (inverse of [`Self::torus_generator`]).
    pub fn torus_angles(&self, x: &[f64]) -> Result<Vec<f64>> {
        let alg = self
            .algebra
            .as_ref()
            .ok_or_else(|| Error::Unsupported(format!("{} has no algebra coordinates", self.name)))?;
        let s = self.inner_norm.sqrt();
        Ok(alg.cartan_axes.iter().map(|&a| x[a] * s).collect())
    }
}

/// `d_m = prod <a, m L0 + rho/2> / prod <a, rho/2>`.
pub fn weyl_dimension(g: &GroupData, w: &OrbitWeight) -> Result<u64> {
    g.check_weight(w)?;
    let lam = w.highest_weight();
    let delta = g.weyl_vector();
    let mut ratio = 1.0;
    for a in &g.positive_roots {
        let shifted: Vec<f64> = lam.iter().zip(&delta).map(|(l, d)| l + d).collect();
        ratio *= dot(a, &shifted) / dot(a, &delta);
    }
    let rounded = ratio.round();
    if (ratio - rounded).abs() > 1e-6 * ratio.max(1.0) || rounded < 1.0 {
        return Err(Error::InvalidWeight(format!(
            "Weyl dimension formula gave non-integer {ratio}"
        )));
    }
    Ok(rounded as u64)
}

/// `<m L0, m L0 + rho>` under the configured inner product.
pub fn casimir_eigenvalue(g: &GroupData, w: &OrbitWeight) -> Result<f64> {
    g.check_weight(w)?;
    let lam = w.highest_weight();
    let rho = g.rho();
    let shifted: Vec<f64> = lam.iter().zip(&rho).map(|(l, r)| l + r).collect();
    Ok(g.pairing(&lam, &shifted))
}

/// Number of positive roots not orthogonal to `lambda0`; half the orbit dimension.
pub fn orbit_half_dimension(g: &GroupData, w: &OrbitWeight) -> Result<usize> {
    g.check_weight(w)?;
    Ok(g
        .positive_roots
        .iter()
        .filter(|a| dot(a, &w.lambda0).abs() > INTEGRALITY_TOL)
        .count())
}

/// Weights of the irreducible representation with highest weight `lambda`,
/// with multiplicities from Freudenthal's recursion.
pub fn weight_multiplicities(g: &GroupData, lambda: &[f64]) -> Result<Vec<(Vec<f64>, u64)>> {
    let simple = g.simple_roots();
    if simple.is_empty() {
        return Ok(vec![(lambda.to_vec(), 1)]);
    }
    let r = simple.len();
    let n = g.rank;
    let s = DMatrix::from_fn(n, r, |i, j| simple[j][i]);
    let pinv = s
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::InvalidGroup(e.to_string()))?;
    // Positive roots in simple-root coordinates.
    let mut root_coords = Vec::new();
    for a in &g.positive_roots {
        let c = &pinv * DVector::from_column_slice(a);
        let ci: Vec<i64> = c.iter().map(|v| v.round() as i64).collect();
        if c.iter().zip(&ci).any(|(v, k)| (v - *k as f64).abs() > 1e-6) {
            return Err(Error::InvalidGroup(
                "positive root is not an integer combination of simple roots".into(),
            ));
        }
        root_coords.push(ci);
    }
    let delta = g.weyl_vector();
    let weight_of = |nv: &[i64]| -> Vec<f64> {
        let mut mu = lambda.to_vec();
        for (k, sr) in nv.iter().zip(&simple) {
            for (x, y) in mu.iter_mut().zip(sr) {
                *x -= *k as f64 * y;
            }
        }
        mu
    };
    let lam_delta: Vec<f64> = lambda.iter().zip(&delta).map(|(a, b)| a + b).collect();
    let top = dot(&lam_delta, &lam_delta);

    let mut mult: HashMap<Vec<i64>, u64> = HashMap::new();
    let zero = vec![0i64; r];
    mult.insert(zero.clone(), 1);
    let mut level = vec![zero];
    while !level.is_empty() {
        let mut next: Vec<Vec<i64>> = Vec::new();
        for nv in &level {
            for i in 0..r {
                let mut cand = nv.clone();
                cand[i] += 1;
                if !next.contains(&cand) {
                    next.push(cand);
                }
            }
        }
        let mut kept = Vec::new();
        for nv in next {
            let mu = weight_of(&nv);
            let md: Vec<f64> = mu.iter().zip(&delta).map(|(a, b)| a + b).collect();
            let denom = top - dot(&md, &md);
            if denom <= 1e-9 {
                continue;
            }
            let mut acc = 0.0;
            for (a, ac) in g.positive_roots.iter().zip(&root_coords) {
                let mut k = 1i64;
                loop {
                    let shifted: Vec<i64> = nv.iter().zip(ac).map(|(x, y)| x - k * y).collect();
                    if shifted.iter().any(|v| *v < 0) {
                        break;
                    }
                    if let Some(&mm) = mult.get(&shifted) {
                        let w = weight_of(&shifted);
                        acc += mm as f64 * dot(&w, a);
                    }
                    k += 1;
                }
            }
            let value = 2.0 * acc / denom;
            let rounded = value.round();
            if (value - rounded).abs() > 1e-6 {
                return Err(Error::InvalidWeight(format!(
                    "Freudenthal recursion produced non-integer multiplicity {value}"
                )));
            }
            if rounded >= 1.0 {
                mult.insert(nv.clone(), rounded as u64);
                kept.push(nv);
            }
        }
        if mult.len() > MAX_WEIGHTS {
            return Err(Error::InvalidWeight("weight diagram too large".into()));
        }
        level = kept;
    }
    let mut out: Vec<(Vec<f64>, u64)> = mult.iter().map(|(k, v)| (weight_of(k), *v)).collect();
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    Ok(out)
}

fn weight_sum_character(weights: &[(Vec<f64>, u64)], angles: &[f64]) -> Complex64 {
    weights
        .iter()
        .map(|(mu, k)| Complex64::from_polar(*k as f64, dot(mu, angles)))
        .sum()
}

/// Character of the level-`m` representation at the torus element with the given angles.
pub fn character(g: &GroupData, w: &OrbitWeight, angles: &[f64]) -> Result<Complex64> {
    g.check_weight(w)?;
    if angles.len() != g.rank {
        return Err(Error::Domain("torus angle count differs from rank".into()));
    }
    let lam = w.highest_weight();
    if g.rank == 1 || g.positive_roots.is_empty() {
        return Ok(weight_sum_character(&weight_multiplicities(g, &lam)?, angles));
    }
    let delta = g.weyl_vector();
    let shifted: Vec<f64> = lam.iter().zip(&delta).map(|(a, b)| a + b).collect();
    let n = g.rank;
    let act = |mat: &[f64], v: &[f64]| -> Vec<f64> {
        (0..n).map(|i| (0..n).map(|j| mat[i * n + j] * v[j]).sum()).collect()
    };
    let mut num = Complex64::new(0.0, 0.0);
    let mut den = Complex64::new(0.0, 0.0);
    for (mat, sign) in g.weyl_group() {
        num += Complex64::from_polar(sign, dot(&act(&mat, &shifted), angles));
        den += Complex64::from_polar(sign, dot(&act(&mat, &delta), angles));
    }
    if den.norm() < DENOMINATOR_TOL {
        return Ok(weight_sum_character(&weight_multiplicities(g, &lam)?, angles));
    }
    Ok(num / den)
}

/// Density of the Weyl integration formula on the torus, normalised so that
/// `(2 pi)^-rank * integral over the torus` of `|chi|^2 * density` is 1.
pub fn weyl_measure(g: &GroupData, angles: &[f64]) -> f64 {
    let delta = g.weyl_vector();
    let group = g.weyl_group();
    let n = g.rank;
    let mut den = Complex64::new(0.0, 0.0);
    for (mat, sign) in &group {
        let v: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| mat[i * n + j] * delta[j]).sum())
            .collect();
        den += Complex64::from_polar(*sign, dot(&v, angles));
    }
    den.norm_sqr() / group.len() as f64
}

/// Character of the stabilizer of the level-`m` charge covector.
pub fn stabilizer_character(
    g: &GroupData,
    w: &OrbitWeight,
    element: &StabilizerElement,
) -> Result<Complex64> {
    g.check_weight(w)?;
    match element {
        StabilizerElement::Torus(angles) => {
            if angles.len() != g.rank {
                return Err(Error::Domain("torus angle count differs from rank".into()));
            }
            Ok(Complex64::from_polar(1.0, dot(&w.highest_weight(), angles)))
        }
        StabilizerElement::Generator(x) => {
            let alg = g.algebra.as_ref().ok_or_else(|| {
                Error::Unsupported(format!("{} has no algebra coordinates", g.name))
            })?;
            if x.len() != alg.dim {
                return Err(Error::Domain("generator length differs from dim".into()));
            }
            let xi = g.charge_covector(w)?;
            let drift = alg.ad_star(x, &xi);
            let size = dot(x, x).sqrt() * dot(&xi, &xi).sqrt();
            if dot(&drift, &drift).sqrt() > 1e-9 * (1.0 + size) {
                return Err(Error::Domain(
                    "element does not stabilize the charge covector".into(),
                ));
            }
            Ok(Complex64::from_polar(1.0, dot(&xi, x)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    /// Gelfand-Tsetlin patterns for SU(3) highest weight (p, q): top row
    /// (p+q, q, 0). Returns weights in the planar basis of `GroupData::su3`.
    fn su3_gt_weights(p: i64, q: i64) -> Vec<Vec<f64>> {
        let top = [p + q, q, 0];
        let mut out = Vec::new();
        for a in top[1]..=top[0] {
            for b in top[2]..=top[1] {
                for c in b..=a {
                    // Row sums give the diagonal weights (h1, h2, h3).
                    let s1 = c;
                    let s2 = a + b;
                    let s3 = top.iter().sum::<i64>();
                    let h = [s1 as f64, (s2 - s1) as f64, (s3 - s2) as f64];
                    // Project diag(h) onto the traceless plane, orthonormal basis matching su3().
                    let mean = (h[0] + h[1] + h[2]) / 3.0;
                    let e = [h[0] - mean, h[1] - mean, h[2] - mean];
                    let u1 = [1.0 / f64::sqrt(2.0), -1.0 / f64::sqrt(2.0), 0.0];
                    let u2 = [1.0 / f64::sqrt(6.0), 1.0 / f64::sqrt(6.0), -2.0 / f64::sqrt(6.0)];
                    out.push(vec![
                        e.iter().zip(&u1).map(|(x, y)| x * y).sum(),
                        e.iter().zip(&u2).map(|(x, y)| x * y).sum(),
                    ]);
                }
            }
        }
        out
    }

    #[test]
    fn builtin_invariants() {
        for g in [GroupData::u1(), GroupData::su2(), GroupData::su3()] {
            g.validate().unwrap();
        }
        assert_eq!(GroupData::u1().positive_roots.len(), 0);
        assert_eq!(GroupData::su2().dim, 3);
    }

    #[test]
    fn su3_roots_have_standard_length() {
        let g = GroupData::su3();
        for a in &g.positive_roots {
            assert_relative_eq!(g.pairing(a, a), 2.0, epsilon = 1e-12);
        }
        assert_eq!(g.simple_roots().len(), 2);
        assert_eq!(g.weyl_group().len(), 6);
    }

    #[test]
    fn dimensions_small_cases() {
        let u1 = GroupData::u1();
        for m in 1..10 {
            assert_eq!(weyl_dimension(&u1, &OrbitWeight::new(vec![1.7], m)).unwrap(), 1);
        }
        let su2 = GroupData::su2();
        for m in 0..13 {
            assert_eq!(weyl_dimension(&su2, &OrbitWeight::new(vec![1.0], m)).unwrap(), m as u64 + 1);
        }
        let su3 = GroupData::su3();
        let fund = su3.weight_from_dynkin(&[1, 0]).unwrap();
        assert_eq!(weyl_dimension(&su3, &OrbitWeight::new(fund, 1)).unwrap(), 3);
    }

    #[test]
    fn su3_against_gelfand_tsetlin() {
        let g = GroupData::su3();
        for (p, q) in [(1, 0), (0, 1), (1, 1), (2, 1)] {
            let l0 = g.weight_from_dynkin(&[p, q]).unwrap();
            for m in 1..=12u32 {
                let w = OrbitWeight::new(l0.clone(), m);
                let gt = su3_gt_weights(p * m as i64, q * m as i64);
                assert_eq!(weyl_dimension(&g, &w).unwrap() as usize, gt.len(), "({p},{q}) m={m}");
                let fr = weight_multiplicities(&g, &w.highest_weight()).unwrap();
                let total: u64 = fr.iter().map(|x| x.1).sum();
                assert_eq!(total as usize, gt.len());
                let theta = [0.37, -1.21];
                let brute: Complex64 = gt
                    .iter()
                    .map(|mu| Complex64::from_polar(1.0, mu[0] * theta[0] + mu[1] * theta[1]))
                    .sum();
                let ch = character(&g, &w, &theta).unwrap();
                assert!((ch - brute).norm() < 1e-8 * brute.norm().max(1.0), "m={m}");
            }
        }
    }

    #[test]
    fn su3_character_at_singular_angle_uses_limit() {
        let g = GroupData::su3();
        let w = OrbitWeight::new(g.weight_from_dynkin(&[1, 1]).unwrap(), 2);
        let ch = character(&g, &w, &[0.0, 0.0]).unwrap();
        assert_relative_eq!(ch.re, 27.0, epsilon = 1e-9);
        assert!(ch.im.abs() < 1e-9);
    }

    #[test]
    fn su3_orbit_dimensions() {
        let g = GroupData::su3();
        let regular = OrbitWeight::new(g.weight_from_dynkin(&[1, 1]).unwrap(), 1);
        assert_eq!(orbit_half_dimension(&g, &regular).unwrap(), 3);
        let fund = OrbitWeight::new(g.weight_from_dynkin(&[1, 0]).unwrap(), 1);
        assert_eq!(orbit_half_dimension(&g, &fund).unwrap(), 2);
    }

    #[test]
    fn su2_casimir_matches_spin() {
        let g = GroupData::su2();
        for m in 0..20u32 {
            let c = casimir_eigenvalue(&g, &OrbitWeight::new(vec![1.0], m)).unwrap();
            let j = m as f64 / 2.0;
            assert_relative_eq!(c, 2.0 * j * (j + 1.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn su2_character_closed_form() {
        let g = GroupData::su2();
        for m in 0..=12u32 {
            for &t in &[0.3, 1.1, 2.9, -0.7] {
                let ch = character(&g, &OrbitWeight::new(vec![1.0], m), &[t]).unwrap();
                let expect = ((m + 1) as f64 * t).sin() / t.sin();
                assert_relative_eq!(ch.re, expect, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn su2_orthogonality() {
        let g = GroupData::su2();
        let n = 256;
        for a in 0..=8u32 {
            for b in 0..=8u32 {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    let t = 2.0 * PI * k as f64 / n as f64;
                    let ca = character(&g, &OrbitWeight::new(vec![1.0], a), &[t]).unwrap();
                    let cb = character(&g, &OrbitWeight::new(vec![1.0], b), &[t]).unwrap();
                    acc += ca * cb.conj() * weyl_measure(&g, &[t]);
                }
                acc /= n as f64;
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((acc.re - target).abs() < 1e-8 && acc.im.abs() < 1e-8);
            }
        }
    }

    #[test]
    fn invalid_weights_rejected() {
        let g = GroupData::su2();
        assert!(matches!(
            weyl_dimension(&g, &OrbitWeight::new(vec![-1.0], 1)),
            Err(Error::InvalidWeight(_))
        ));
        assert!(matches!(
            weyl_dimension(&g, &OrbitWeight::new(vec![0.5], 1)),
            Err(Error::InvalidWeight(_))
        ));
    }

    #[test]
    fn stabilizer_characters() {
        let u1 = GroupData::u1();
        let w = OrbitWeight::new(vec![2.0], 1);
        let c = stabilizer_character(&u1, &w, &StabilizerElement::Torus(vec![0.4])).unwrap();
        assert_relative_eq!(c.arg(), 0.8, epsilon = 1e-14);
        let su2 = GroupData::su2();
        let w = OrbitWeight::new(vec![1.0], 1);
        let x = su2.torus_generator(&[0.3]).unwrap();
        let c = stabilizer_character(&su2, &w, &StabilizerElement::Generator(x)).unwrap();
        assert_relative_eq!(c.arg(), 0.3, epsilon = 1e-14);
        let off = StabilizerElement::Generator(vec![0.2, 0.0, 0.0]);
        assert!(matches!(stabilizer_character(&su2, &w, &off), Err(Error::Domain(_))));
        let short = StabilizerElement::Torus(vec![0.1, 0.2]);
        assert!(matches!(stabilizer_character(&su2, &w, &short), Err(Error::Domain(_))));
    }

    #[test]
    fn root_data_round_trip() {
        let text = "rank = 1\nroots = [[2.0]]\ninner_norm = 0.5\n";
        let g = GroupData::parse_root_data(text).unwrap();
        assert_eq!(g.dim, 3);
        let json = r#"{"rank": 2, "roots": [[1.0, 0.0]], "inner_norm": 0.0}"#;
        assert!(GroupData::parse_root_data(json).is_err());
    }
}
