//! Dense two-phase simplex and convex-hull geometry for sampled statistics.

use crate::error::{ErgmError, Result};
use crate::sample_matrix::SampleMatrix;

pub const TOL: f64 = 1e-9;
/// Multipliers this close to 1 count as on the boundary.
pub const BOUNDARY_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

/// max/min cᵀx subject to rows, 0 ≤ x ≤ upper.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub senses: Vec<Sense>,
    pub rhs: Vec<f64>,
    /// Per-variable upper bounds (`f64::INFINITY` for none).
    pub upper: Vec<f64>,
    pub maximize: bool,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>, maximize: bool) -> Self {
        let n = objective.len();
        LinearProgram { objective, rows: Vec::new(), senses: Vec::new(), rhs: Vec::new(), upper: vec![f64::INFINITY; n], maximize }
    }

    pub fn constraint(mut self, row: Vec<f64>, sense: Sense, rhs: f64) -> Self {
        self.rows.push(row);
        self.senses.push(sense);
        self.rhs.push(rhs);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpStatus {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    /// m rows of (ncols + 1) entries; the last is the right-hand side.
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
    ncols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let pv = self.a[r][c];
        self.a[r].iter_mut().for_each(|v| *v /= pv);
        let prow = self.a[r].clone();
        for (k, row) in self.a.iter_mut().enumerate() {
            if k != r {
                let f = row[c];
                if f != 0.0 {
                    for (v, p) in row.iter_mut().zip(&prow) {
                        *v -= f * p;
                    }
                }
            }
        }
        self.basis[r] = c;
    }

    /// Minimizes cost over the columns in `allowed` with Bland's rule.
    /// Returns false when unbounded.
    fn minimize(&mut self, cost: &[f64], allowed: &dyn Fn(usize) -> bool) -> bool {
        let m = self.a.len();
        loop {
            // Reduced costs d_j = c_j − c_Bᵀ B⁻¹ A_j.
            let mut enter = None;
            for j in 0..self.ncols {
                if !allowed(j) || self.basis.contains(&j) {
                    continue;
                }
                let mut d = cost[j];
                for r in 0..m {
                    d -= cost[self.basis[r]] * self.a[r][j];
                }
                if d < -TOL {
                    enter = Some(j);
                    break;
                }
            }
            let Some(c) = enter else { return true };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..m {
                let v = self.a[r][c];
                if v > TOL {
                    let ratio = self.a[r][self.ncols] / v;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - TOL || (ratio <= lratio + TOL && self.basis[r] < self.basis[lr]) {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    }
                }
            }
            let Some((r, _)) = leave else { return false };
            self.pivot(r, c);
        }
    }
}

/// Solves `lp` with a dense two-phase primal simplex.
pub fn simplex_solve(lp: &LinearProgram) -> Result<LpStatus> {
    let n = lp.objective.len();
    let m0 = lp.rows.len();
    if lp.senses.len() != m0 || lp.rhs.len() != m0 || lp.upper.len() != n || lp.rows.iter().any(|r| r.len() != n) {
        return Err(ErgmError::InvalidArgument("linear program dimensions do not match".into()));
    }
    // Upper bounds become rows.
    let mut rows = lp.rows.clone();
    let mut senses = lp.senses.clone();
    let mut rhs = lp.rhs.clone();
    for (j, &u) in lp.upper.iter().enumerate() {
        if u.is_finite() {
            let mut r = vec![0.0; n];
            r[j] = 1.0;
            rows.push(r);
            senses.push(Sense::Le);
            rhs.push(u);
        }
    }
    let m = rows.len();
    // Normalize to rhs ≥ 0.
    for k in 0..m {
        if rhs[k] < 0.0 {
            rhs[k] = -rhs[k];
            rows[k].iter_mut().for_each(|v| *v = -*v);
            senses[k] = match senses[k] {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
    }
    let n_slack = senses.iter().filter(|s| **s != Sense::Eq).count();
    let n_art = senses.iter().filter(|s| **s != Sense::Le).count();
    let ncols = n + n_slack + n_art;
    let mut a = vec![vec![0.0; ncols + 1]; m];
    let mut basis = vec![0; m];
    let (mut si, mut ai) = (n, n + n_slack);
    for k in 0..m {
        a[k][..n].copy_from_slice(&rows[k]);
        a[k][ncols] = rhs[k];
        match senses[k] {
            Sense::Le => {
                a[k][si] = 1.0;
                basis[k] = si;
                si += 1;
            }
            Sense::Ge => {
                a[k][si] = -1.0;
                si += 1;
                a[k][ai] = 1.0;
                basis[k] = ai;
                ai += 1;
            }
            Sense::Eq => {
                a[k][ai] = 1.0;
                basis[k] = ai;
                ai += 1;
            }
        }
    }
    let mut t = Tableau { a, basis, ncols };
    let art_start = n + n_slack;

    if n_art > 0 {
        let mut cost = vec![0.0; ncols];
        cost[art_start..].iter_mut().for_each(|c| *c = 1.0);
        t.minimize(&cost, &|_| true);
        let infeas: f64 = (0..m).filter(|&r| t.basis[r] >= art_start).map(|r| t.a[r][ncols]).sum();
        let scale = 1.0 + rhs.iter().cloned().fold(0.0, f64::max);
        if infeas > TOL * scale {
            return Ok(LpStatus::Infeasible);
        }
        // Drive remaining (zero-valued) artificials out of the basis.
        let mut r = 0;
        while r < t.a.len() {
            if t.basis[r] >= art_start {
                if let Some(c) = (0..art_start).find(|&c| t.a[r][c].abs() > TOL) {
                    t.pivot(r, c);
                } else {
                    t.a.remove(r);
                    t.basis.remove(r);
                    continue;
                }
            }
            r += 1;
        }
    }

    let mut cost = vec![0.0; ncols];
    for j in 0..n {
        cost[j] = if lp.maximize { -lp.objective[j] } else { lp.objective[j] };
    }
    if !t.minimize(&cost, &|j| j < art_start) {
        return Ok(LpStatus::Unbounded);
    }
    let mut x = vec![0.0; n];
    for (r, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] = t.a[r][ncols];
        }
    }
    let value = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
    Ok(LpStatus::Optimal { x, value })
}

/// Per-coordinate location and scale used to condition the hull LPs.
fn standardize(points: &SampleMatrix) -> (Vec<f64>, Vec<f64>) {
    let mean = points.mean();
    let p = points.p();
    let mut sd = vec![0.0; p];
    for r in points.rows() {
        for j in 0..p {
            sd[j] += (r[j] - mean[j]).powi(2);
        }
    }
    let s = points.nrows().max(1) as f64;
    for v in sd.iter_mut() {
        *v = (*v / s).sqrt();
        if !(*v > 0.0) {
            *v = 1.0;
        }
    }
    (mean, sd)
}

/// Largest t ≥ 0 with center + t(x − center) in the convex hull of the
/// rows of `points`. `center` defaults to the centroid. Returns +∞ when
/// x = center and 0 when no t is feasible.
pub fn boundary_multiplier(points: &SampleMatrix, x: &[f64], center: Option<&[f64]>) -> Result<f64> {
    let p = points.p();
    let s = points.nrows();
    if s == 0 || p == 0 || x.len() != p || center.is_some_and(|c| c.len() != p) {
        return Err(ErgmError::InvalidArgument("hull query dimensions do not match".into()));
    }
    let centroid;
    let c = match center {
        Some(c) => c,
        None => {
            centroid = points.mean();
            &centroid
        }
    };
    if x.iter().zip(c).all(|(a, b)| a == b) {
        return Ok(f64::INFINITY);
    }
    let (loc, sc) = standardize(points);
    let z = |v: f64, j: usize| (v - loc[j]) / sc[j];
    // Variables λ_1..λ_S, t. Rows: Σλ p_s − t(x − c) = c per coordinate, Σλ = 1.
    let mut obj = vec![0.0; s + 1];
    obj[s] = 1.0;
    let mut lp = LinearProgram::new(obj, true);
    for j in 0..p {
        let mut row: Vec<f64> = points.rows().map(|r| z(r[j], j)).collect();
        row.push(-(x[j] - c[j]) / sc[j]);
        lp = lp.constraint(row, Sense::Eq, z(c[j], j));
    }
    let mut ones = vec![1.0; s + 1];
    ones[s] = 0.0;
    lp = lp.constraint(ones, Sense::Eq, 1.0);
    match simplex_solve(&lp)? {
        LpStatus::Optimal { value, .. } => Ok(value),
        LpStatus::Unbounded => Ok(f64::INFINITY),
        LpStatus::Infeasible => Ok(0.0),
    }
}

/// Whether `x` lies in the hull (boundary inclusive).
pub fn in_hull(points: &SampleMatrix, x: &[f64]) -> Result<bool> {
    Ok(boundary_multiplier(points, x, None)? >= 1.0 - BOUNDARY_TOL)
}

/// Moves `x` toward `center` until its multiplier is at least 1/depth.
pub fn scale_into_hull(points: &SampleMatrix, x: &[f64], center: Option<&[f64]>, depth: f64) -> Result<Vec<f64>> {
    if !(depth > 0.0 && depth <= 1.0) {
        return Err(ErgmError::InvalidArgument("hull depth must lie in (0, 1]".into()));
    }
    let c = match center {
        Some(c) => c.to_vec(),
        None => points.mean(),
    };
    let g = boundary_multiplier(points, x, Some(&c))?;
    if g >= (1.0 - BOUNDARY_TOL) / depth {
        return Ok(x.to_vec());
    }
    let f = depth * g;
    Ok(x.iter().zip(&c).map(|(xi, ci)| ci + f * (xi - ci)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opt(s: LpStatus) -> f64 {
        match s {
            LpStatus::Optimal { value, .. } => value,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trivial_programs() {
        let lp = LinearProgram::new(vec![1.0], true).constraint(vec![1.0], Sense::Le, 3.0);
        assert!((opt(simplex_solve(&lp).unwrap()) - 3.0).abs() < 1e-12);
        let lp = LinearProgram::new(vec![1.0], true).constraint(vec![1.0], Sense::Le, -1.0);
        assert_eq!(simplex_solve(&lp).unwrap(), LpStatus::Infeasible);
        let lp = LinearProgram::new(vec![1.0], true).constraint(vec![-1.0], Sense::Le, 1.0);
        assert_eq!(simplex_solve(&lp).unwrap(), LpStatus::Unbounded);
        let mut lp = LinearProgram::new(vec![1.0, 2.0], false).constraint(vec![1.0, 1.0], Sense::Ge, 2.0);
        lp.upper = vec![1.5, f64::INFINITY];
        assert!((opt(simplex_solve(&lp).unwrap()) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn triangle_geometry() {
        let pts = SampleMatrix::from_rows(
            vec!["a".into(), "b".into()],
            &[vec![1.0, 0.0], vec![-1.0, 1.0], vec![-1.0, -1.0]],
        );
        let c = [-1.0 / 3.0, 0.0];
        assert!(boundary_multiplier(&pts, &[0.0, 0.0], Some(&c)).unwrap() > 1.0);
        let g = boundary_multiplier(&pts, &[1.0, 0.0], None).unwrap();
        assert!((g - 1.0).abs() < 1e-9);
        assert_eq!(boundary_multiplier(&pts, &c, Some(&c)).unwrap(), f64::INFINITY);
        // The ray toward (3, 0) meets the boundary at (1, 0).
        let g = boundary_multiplier(&pts, &[3.0, 0.0], Some(&c)).unwrap();
        assert!((g - 0.4).abs() < 1e-9, "{g}");
    }
}
