//! Row-major matrix of sampled statistics with per-chain segmentation.

use std::fmt::Write as _;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{ErgmError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    names: Vec<String>,
    data: Vec<f64>,
    /// Row index at which each chain starts.
    chain_starts: Vec<usize>,
    /// Thinning interval (MH steps between retained rows).
    pub interval: usize,
}

impl SampleMatrix {
    pub fn new(names: Vec<String>) -> Self {
        SampleMatrix { names, data: Vec::new(), chain_starts: vec![0], interval: 1 }
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Self {
        let mut m = SampleMatrix::new(names);
        for r in rows {
            m.push_row(r);
        }
        m
    }

    /// Single-column matrix.
    pub fn from_series(name: &str, xs: &[f64]) -> Self {
        SampleMatrix { names: vec![name.to_string()], data: xs.to_vec(), chain_starts: vec![0], interval: 1 }
    }

    pub fn p(&self) -> usize {
        self.names.len()
    }

    pub fn nrows(&self) -> usize {
        if self.names.is_empty() {
            0
        } else {
            self.data.len() / self.p()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.p(), "row length");
        self.data.extend_from_slice(row);
    }

    #[inline]
    pub fn row(&self, k: usize) -> &[f64] {
        let p = self.p();
        &self.data[k * p..(k + 1) * p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.p().max(1))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.p()];
        for r in self.rows() {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        let s = self.nrows().max(1) as f64;
        m.iter_mut().for_each(|a| *a /= s);
        m
    }

    /// Sample covariance (divisor S − 1).
    pub fn covariance(&self) -> DMatrix<f64> {
        let p = self.p();
        let s = self.nrows();
        let mean = self.mean();
        let mut c = DMatrix::zeros(p, p);
        let mut d = DVector::zeros(p);
        for r in self.rows() {
            for k in 0..p {
                d[k] = r[k] - mean[k];
            }
            c.ger(1.0, &d, &d, 1.0);
        }
        c / (s.saturating_sub(1).max(1) as f64)
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.nrows(), self.p(), &self.data)
    }

    /// Row ranges of each chain.
    pub fn chains(&self) -> Vec<Range<usize>> {
        let n = self.nrows();
        let mut out = Vec::new();
        for (k, &s) in self.chain_starts.iter().enumerate() {
            let e = self.chain_starts.get(k + 1).copied().unwrap_or(n);
            out.push(s..e);
        }
        out
    }

    pub fn n_chains(&self) -> usize {
        self.chain_starts.len()
    }

    /// Appends another chain's rows as a new segment.
    pub fn append_chain(&mut self, other: &SampleMatrix) {
        assert_eq!(self.names, other.names, "column names differ");
        if self.is_empty() {
            self.data.extend_from_slice(&other.data);
            self.chain_starts = other.chain_starts.clone();
            return;
        }
        let base = self.nrows();
        self.data.extend_from_slice(&other.data);
        self.chain_starts.extend(other.chain_starts.iter().map(|s| s + base));
    }

    /// Rows in `range` as a new single-chain matrix.
    pub fn slice(&self, range: Range<usize>) -> SampleMatrix {
        let p = self.p();
        SampleMatrix {
            names: self.names.clone(),
            data: self.data[range.start * p..range.end * p].to_vec(),
            chain_starts: vec![0],
            interval: self.interval,
        }
    }

    /// Keeps the given columns.
    pub fn select_columns(&self, cols: &[usize]) -> SampleMatrix {
        let names = cols.iter().map(|&c| self.names[c].clone()).collect();
        let mut data = Vec::with_capacity(self.nrows() * cols.len());
        for r in self.rows() {
            data.extend(cols.iter().map(|&c| r[c]));
        }
        SampleMatrix { names, data, chain_starts: self.chain_starts.clone(), interval: self.interval }
    }

    /// Indices of columns that are not constant.
    pub fn varying_columns(&self) -> Vec<usize> {
        if self.nrows() == 0 {
            return Vec::new();
        }
        let first = self.row(0).to_vec();
        (0..self.p()).filter(|&j| self.rows().any(|r| r[j] != first[j])).collect()
    }

    /// Drops every other row within each chain and doubles the interval.
    pub fn thin_half(&mut self) {
        let p = self.p();
        let mut data = Vec::with_capacity(self.data.len() / 2 + p);
        let mut starts = Vec::new();
        for ch in self.chains() {
            starts.push(data.len() / p.max(1));
            for k in ch.clone().step_by(2) {
                data.extend_from_slice(&self.data[k * p..(k + 1) * p]);
            }
        }
        self.data = data;
        self.chain_starts = starts;
        self.interval *= 2;
    }

    /// Adds `shift` to every row.
    pub fn shift(&mut self, shift: &[f64]) {
        let p = self.p();
        for (k, x) in self.data.iter_mut().enumerate() {
            *x += shift[k % p];
        }
    }

    /// TSV with a header of statistic names; a leading `chain` column is
    /// written when there is more than one chain.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let multi = self.n_chains() > 1;
        if multi {
            out.push_str("chain\t");
        }
        out.push_str(&self.names.join("\t"));
        out.push('\n');
        for (c, range) in self.chains().into_iter().enumerate() {
            for k in range {
                if multi {
                    write!(out, "{}\t", c + 1).unwrap();
                }
                let cells: Vec<String> = self.row(k).iter().map(|x| fmt_cell(*x)).collect();
                out.push_str(&cells.join("\t"));
                out.push('\n');
            }
        }
        out
    }

    pub fn from_tsv(text: &str, source: &str) -> Result<SampleMatrix> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| ErgmError::Format { path: source.into(), line: 1, msg: "empty file".into() })?;
        let mut names: Vec<String> = header.split('\t').map(|s| s.trim().to_string()).collect();
        let has_chain = names.first().is_some_and(|n| n == "chain");
        if has_chain {
            names.remove(0);
        }
        let mut m = SampleMatrix::new(names);
        let mut last_chain: Option<String> = None;
        m.chain_starts.clear();
        for (ln, line) in lines {
            let fmt = |msg: String| ErgmError::Format { path: source.into(), line: ln + 1, msg };
            let mut cells: Vec<&str> = line.split('\t').collect();
            if has_chain {
                let c = cells.remove(0).trim().to_string();
                if last_chain.as_ref() != Some(&c) {
                    m.chain_starts.push(m.nrows());
                    last_chain = Some(c);
                }
            } else if m.chain_starts.is_empty() {
                m.chain_starts.push(0);
            }
            if cells.len() != m.p() {
                return Err(fmt(format!("expected {} fields, found {}", m.p(), cells.len())));
            }
            let row: Vec<f64> = cells
                .iter()
                .map(|c| match c.trim() {
                    "NA" => Ok(f64::NAN),
                    t => t.parse::<f64>().map_err(|_| fmt(format!("not a number: '{t}'"))),
                })
                .collect::<Result<_>>()?;
            m.push_row(&row);
        }
        if m.chain_starts.is_empty() {
            m.chain_starts.push(0);
        }
        Ok(m)
    }
}

/// Formats a number for TSV output: `NA` for NaN, shortest round-trip otherwise.
pub fn fmt_cell(x: f64) -> String {
    if x.is_nan() {
        "NA".into()
    } else if x == f64::INFINITY {
        "Inf".into()
    } else if x == f64::NEG_INFINITY {
        "-Inf".into()
    } else {
        format!("{x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_round_trip_with_chains() {
        let mut a = SampleMatrix::from_rows(vec!["edges".into(), "triangle".into()], &[vec![1.0, 0.0], vec![2.0, 1.5]]);
        let b = SampleMatrix::from_rows(vec!["edges".into(), "triangle".into()], &[vec![3.0, 0.25]]);
        a.append_chain(&b);
        assert_eq!(a.n_chains(), 2);
        let text = a.to_tsv();
        assert!(text.starts_with("chain\tedges\ttriangle\n1\t1\t0\n"));
        let back = SampleMatrix::from_tsv(&text, "x").unwrap();
        assert_eq!(back.chains(), a.chains());
        assert_eq!(back.data, a.data);
    }

    #[test]
    fn thinning_keeps_every_other_row_per_chain() {
        let rows: Vec<Vec<f64>> = (0..5).map(|k| vec![k as f64]).collect();
        let mut a = SampleMatrix::from_rows(vec!["x".into()], &rows);
        a.append_chain(&SampleMatrix::from_rows(vec!["x".into()], &rows[..4]));
        a.thin_half();
        assert_eq!(a.column(0), vec![0.0, 2.0, 4.0, 0.0, 2.0]);
        assert_eq!(a.chains(), vec![0..3, 3..5]);
        assert_eq!(a.interval, 2);
    }

    #[test]
    fn covariance_and_constant_columns() {
        let m = SampleMatrix::from_rows(vec!["a".into(), "b".into()], &[vec![1.0, 5.0], vec![3.0, 5.0], vec![2.0, 5.0]]);
        assert_eq!(m.varying_columns(), vec![0]);
        let c = m.covariance();
        assert!((c[(0, 0)] - 1.0).abs() < 1e-15);
        assert_eq!(c[(1, 1)], 0.0);
    }
}
