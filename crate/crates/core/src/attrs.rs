//! Vertex attribute columns.

use std::path::Path;

use crate::error::{ErgmError, Result};

/// A single attribute column. Categorical levels are kept sorted
/// lexicographically; `codes[v]` indexes into `levels`.
#[derive(Debug, Clone, PartialEq)]
pub enum AttrColumn {
    Categorical { levels: Vec<String>, codes: Vec<usize> },
    Numeric(Vec<f64>),
}

impl AttrColumn {
    pub fn categorical<S: AsRef<str>>(values: &[S]) -> Self {
        let mut levels: Vec<String> = values.iter().map(|v| v.as_ref().to_string()).collect();
        levels.sort();
        levels.dedup();
        let codes = values
            .iter()
            .map(|v| levels.binary_search_by(|l| l.as_str().cmp(v.as_ref())).unwrap())
            .collect();
        AttrColumn::Categorical { levels, codes }
    }

    pub fn len(&self) -> usize {
        match self {
            AttrColumn::Categorical { codes, .. } => codes.len(),
            AttrColumn::Numeric(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn render(&self, v: usize) -> String {
        match self {
            AttrColumn::Categorical { levels, codes } => levels[codes[v]].clone(),
            AttrColumn::Numeric(x) => format!("{}", x[v]),
        }
    }
}

/// Named attribute columns, each with exactly `n` entries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VertexAttributes {
    n: usize,
    columns: Vec<(String, AttrColumn)>,
}

impl VertexAttributes {
    pub fn new(n: usize) -> Self {
        VertexAttributes { n, columns: Vec::new() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(k, _)| k.as_str())
    }

    /// Inserts or replaces a column.
    pub fn insert(&mut self, name: &str, column: AttrColumn) -> Result<()> {
        if column.len() != self.n {
            return Err(ErgmError::Attribute(format!(
                "column '{name}' has {} entries, expected {}",
                column.len(),
                self.n
            )));
        }
        match self.columns.iter_mut().find(|(k, _)| k == name) {
            Some(slot) => slot.1 = column,
            None => self.columns.push((name.to_string(), column)),
        }
        Ok(())
    }

    pub fn insert_categorical<S: AsRef<str>>(&mut self, name: &str, values: &[S]) -> Result<()> {
        self.insert(name, AttrColumn::categorical(values))
    }

    pub fn insert_numeric(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        self.insert(name, AttrColumn::Numeric(values))
    }

    pub fn get(&self, name: &str) -> Option<&AttrColumn> {
        self.columns.iter().find(|(k, _)| k == name).map(|(_, c)| c)
    }

    pub fn categorical(&self, name: &str) -> Result<(&[String], &[usize])> {
        match self.get(name) {
            Some(AttrColumn::Categorical { levels, codes }) => Ok((levels, codes)),
            Some(AttrColumn::Numeric(_)) => {
                Err(ErgmError::Attribute(format!("attribute '{name}' is numeric, expected categorical")))
            }
            None => Err(ErgmError::Attribute(format!("no attribute named '{name}'"))),
        }
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64]> {
        match self.get(name) {
            Some(AttrColumn::Numeric(v)) => Ok(v),
            Some(AttrColumn::Categorical { .. }) => {
                Err(ErgmError::Attribute(format!("attribute '{name}' is categorical, expected numeric")))
            }
            None => Err(ErgmError::Attribute(format!("no attribute named '{name}'"))),
        }
    }

    /// Cross-classification of several attributes. Numeric columns are
    /// treated as categorical on their rendered values. Returns sorted level
    /// labels (joined with `.`) and per-vertex codes.
    pub fn cross_classify(&self, names: &[String]) -> Result<(Vec<String>, Vec<usize>)> {
        if names.is_empty() {
            return Ok((vec!["all".to_string()], vec![0; self.n]));
        }
        let mut cols = Vec::with_capacity(names.len());
        for name in names {
            let col = self
                .get(name)
                .ok_or_else(|| ErgmError::Attribute(format!("no attribute named '{name}'")))?;
            cols.push(col);
        }
        let labels: Vec<String> = (0..self.n)
            .map(|v| cols.iter().map(|c| c.render(v)).collect::<Vec<_>>().join("."))
            .collect();
        match AttrColumn::categorical(&labels) {
            AttrColumn::Categorical { levels, codes } => Ok((levels, codes)),
            AttrColumn::Numeric(_) => unreachable!(),
        }
    }

    /// Reads a CSV whose first column is the 1-based `vertex` id. A column is
    /// numeric when every entry parses as a real number.
    pub fn read_csv(path: &Path, n: usize) -> Result<Self> {
        let display = path.display().to_string();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_err(&display, e))?;
        let headers = rdr.headers().map_err(|e| csv_err(&display, e))?.clone();
        if headers.get(0) != Some("vertex") {
            return Err(ErgmError::Format {
                path: display,
                line: 1,
                msg: "first column must be 'vertex'".into(),
            });
        }
        let ncol = headers.len() - 1;
        let mut raw: Vec<Vec<Option<String>>> = vec![vec![None; n]; ncol];
        for (row, rec) in rdr.records().enumerate() {
            let line = row + 2;
            let rec = rec.map_err(|e| csv_err(&display, e))?;
            let fmt = |msg: String| ErgmError::Format { path: display.clone(), line, msg };
            let v: usize = rec
                .get(0)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| fmt("bad vertex id".into()))?;
            if v == 0 || v > n {
                return Err(fmt(format!("vertex {v} out of range 1..={n}")));
            }
            for c in 0..ncol {
                let val = rec.get(c + 1).ok_or_else(|| fmt("missing field".into()))?;
                if raw[c][v - 1].replace(val.to_string()).is_some() {
                    return Err(fmt(format!("duplicate row for vertex {v}")));
                }
            }
        }
        let mut attrs = VertexAttributes::new(n);
        for (c, values) in raw.into_iter().enumerate() {
            let name = &headers[c + 1];
            let values: Vec<String> = values
                .into_iter()
                .enumerate()
                .map(|(v, x)| {
                    x.ok_or_else(|| ErgmError::Format {
                        path: display.clone(),
                        line: 0,
                        msg: format!("no value of '{name}' for vertex {}", v + 1),
                    })
                })
                .collect::<Result<_>>()?;
            let parsed: Option<Vec<f64>> = values.iter().map(|s| s.parse::<f64>().ok()).collect();
            match parsed {
                Some(nums) => attrs.insert_numeric(name, nums)?,
                None => attrs.insert_categorical(name, &values)?,
            }
        }
        Ok(attrs)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let display = path.display().to_string();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(&display, e))?;
        let mut header = vec!["vertex".to_string()];
        header.extend(self.columns.iter().map(|(k, _)| k.clone()));
        w.write_record(&header).map_err(|e| csv_err(&display, e))?;
        for v in 0..self.n {
            let mut rec = vec![(v + 1).to_string()];
            rec.extend(self.columns.iter().map(|(_, c)| c.render(v)));
            w.write_record(&rec).map_err(|e| csv_err(&display, e))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(path: &str, e: csv::Error) -> ErgmError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    ErgmError::Format { path: path.to_string(), line, msg: e.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_are_sorted() {
        let col = AttrColumn::categorical(&["M", "F", "M", "F"]);
        match col {
            AttrColumn::Categorical { levels, codes } => {
                assert_eq!(levels, vec!["F", "M"]);
                assert_eq!(codes, vec![1, 0, 1, 0]);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn wrong_length_rejected() {
        let mut a = VertexAttributes::new(3);
        assert!(a.insert_numeric("x", vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let mut a = VertexAttributes::new(4);
        a.insert_categorical("sex", &["M", "F", "M", "F"]).unwrap();
        a.insert_numeric("age", vec![20.5, 31.0, 44.0, 18.25]).unwrap();
        a.write_csv(&path).unwrap();
        let b = VertexAttributes::read_csv(&path, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cross_classification() {
        let mut a = VertexAttributes::new(4);
        a.insert_categorical("sex", &["M", "F", "M", "F"]).unwrap();
        a.insert_categorical("race", &["B", "B", "W", "W"]).unwrap();
        let (levels, codes) = a.cross_classify(&["race".into(), "sex".into()]).unwrap();
        assert_eq!(levels, vec!["B.F", "B.M", "W.F", "W.M"]);
        assert_eq!(codes, vec![1, 0, 3, 2]);
    }
}
