//! Datasets of fixed-width observation records with optional cluster and
//! panel structure, plus CSV ingestion and export.
//!
//! A row is laid out as `(y, x_1, ..., x_k)`; built-in models read the
//! outcome from column 0 and regressors from the remaining columns.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    width: usize,
    n: usize,
    column_names: Vec<String>,
    cluster_ids: Option<Vec<usize>>,
    clusters: Vec<Vec<usize>>,
    panel_shape: Option<(usize, usize)>,
}

impl Dataset {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Data("dataset must contain at least one row".into()));
        }
        let width = rows[0].len();
        if width == 0 {
            return Err(Error::Data("rows must have at least one column".into()));
        }
        let mut values = Vec::with_capacity(n * width);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::Data(format!(
                    "row {i} has width {} but row 0 has width {width}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::from_flat(values, width)
    }

    pub fn from_flat(values: Vec<f64>, width: usize) -> Result<Self> {
        if width == 0 || values.is_empty() || values.len() % width != 0 {
            return Err(Error::Data(format!(
                "{} values cannot be split into rows of width {width}",
                values.len()
            )));
        }
        let n = values.len() / width;
        let column_names = default_names(width);
        Ok(Self {
            values,
            width,
            n,
            column_names,
            cluster_ids: None,
            clusters: Vec::new(),
            panel_shape: None,
        })
    }

    /// Attach one cluster label per row. Labels may be arbitrary integers;
    /// they are compacted to `0..k` in order of first appearance.
    pub fn with_clusters(mut self, ids: Vec<usize>) -> Result<Self> {
        if ids.len() != self.n {
            return Err(Error::Data(format!(
                "cluster_ids has length {} but dataset has {} rows",
                ids.len(),
                self.n
            )));
        }
        let mut remap = BTreeMap::new();
        let mut order = Vec::new();
        let mut compact = Vec::with_capacity(ids.len());
        for &id in &ids {
            let next = remap.len();
            let c = *remap.entry(id).or_insert_with(|| {
                order.push(id);
                next
            });
            compact.push(c);
        }
        let mut clusters = vec![Vec::new(); remap.len()];
        for (row, &c) in compact.iter().enumerate() {
            clusters[c].push(row);
        }
        self.cluster_ids = Some(compact);
        self.clusters = clusters;
        Ok(self)
    }

    /// Declare a balanced panel stored unit-major: rows `u*T .. (u+1)*T`
    /// belong to unit `u`. Units double as clusters.
    pub fn with_panel(self, n_units: usize, periods: usize) -> Result<Self> {
        if n_units * periods != self.n || n_units == 0 || periods == 0 {
            return Err(Error::Data(format!(
                "panel shape ({n_units}, {periods}) does not match {} rows",
                self.n
            )));
        }
        let ids = (0..self.n).map(|i| i / periods).collect();
        let mut out = self.with_clusters(ids)?;
        out.panel_shape = Some((n_units, periods));
        Ok(out)
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.width {
            return Err(Error::Data(format!(
                "{} column names for width {}",
                names.len(),
                self.width
            )));
        }
        self.column_names = names;
        Ok(self)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.width)
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn cluster_ids(&self) -> Option<&[usize]> {
        self.cluster_ids.as_deref()
    }

    /// Row indices of each cluster, indexed by compacted cluster label.
    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn panel_shape(&self) -> Option<(usize, usize)> {
        self.panel_shape
    }

    /// Outcome column (column 0).
    pub fn outcome(&self) -> Vec<f64> {
        self.rows().map(|r| r[0]).collect()
    }

    /// Build the dataset made of the given time periods of every unit.
    pub fn panel_periods(&self, periods: std::ops::Range<usize>) -> Result<Dataset> {
        let (n_units, t) = self
            .panel_shape
            .ok_or_else(|| Error::Config("dataset has no panel_shape".into()))?;
        if periods.end > t || periods.is_empty() {
            return Err(Error::Config(format!(
                "period range {periods:?} outside 0..{t}"
            )));
        }
        let len = periods.len();
        let mut values = Vec::with_capacity(n_units * len * self.width);
        for u in 0..n_units {
            for p in periods.clone() {
                values.extend_from_slice(self.row(u * t + p));
            }
        }
        Dataset::from_flat(values, self.width)?
            .with_column_names(self.column_names.clone())?
            .with_panel(n_units, len)
    }
}

fn default_names(width: usize) -> Vec<String> {
    std::iter::once("y".to_string())
        .chain((1..width).map(|j| format!("x{j}")))
        .collect()
}

/// Column mapping for CSV ingestion.
///
/// Regressor entries are column names, `name^k` for an integer power of a
/// column, or `const`/`1` for an intercept.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct CsvSpec {
    pub outcome: String,
    pub regressors: Vec<String>,
    #[serde(default)]
    pub cluster: Option<String>,
    #[serde(default)]
    pub panel_unit: Option<String>,
    #[serde(default)]
    pub panel_time: Option<String>,
}

enum Term {
    Column(usize),
    Power(usize, i32),
    Constant,
}

fn parse_term(expr: &str, headers: &[String]) -> Result<Term> {
    let expr = expr.trim();
    if expr == "const" || expr == "1" {
        return Ok(Term::Constant);
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("column '{name}' not found in header")))
    };
    if let Ok(j) = find(expr) {
        return Ok(Term::Column(j));
    }
    if let Some((name, pow)) = expr.split_once('^') {
        let p: i32 = pow
            .trim()
            .parse()
            .map_err(|_| Error::Data(format!("bad power in regressor '{expr}'")))?;
        return Ok(Term::Power(find(name.trim())?, p));
    }
    Err(Error::Data(format!("column '{expr}' not found in header")))
}

fn parse_cell(raw: &str, line: usize, col: &str) -> Result<f64> {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        return Err(Error::Data(format!(
            "missing value in column '{col}' at data line {line}"
        )));
    }
    let v: f64 = s.parse().map_err(|_| {
        Error::Data(format!(
            "non-numeric value '{s}' in column '{col}' at data line {line}"
        ))
    })?;
    if !v.is_finite() {
        return Err(Error::Data(format!(
            "non-finite value in column '{col}' at data line {line}"
        )));
    }
    Ok(v)
}

/// Read a CSV with a header row into a [`Dataset`] laid out as `(y, x...)`.
///
/// Only the mapped columns are parsed; a missing value in any of them is an
/// error. Panel data are sorted unit-major by (unit, time) and must be balanced.
pub fn read_csv(path: impl AsRef<Path>, spec: &CsvSpec) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let y_col = parse_term(&spec.outcome, &headers)?;
    let terms = spec
        .regressors
        .iter()
        .map(|r| parse_term(r, &headers))
        .collect::<Result<Vec<_>>>()?;
    let label_col = |name: &Option<String>| -> Result<Option<usize>> {
        name.as_ref()
            .map(|c| match parse_term(c, &headers)? {
                Term::Column(j) => Ok(j),
                _ => Err(Error::Data(format!("'{c}' must be a plain column"))),
            })
            .transpose()
    };
    let cluster_col = label_col(&spec.cluster)?;
    let unit_col = label_col(&spec.panel_unit)?;
    let time_col = label_col(&spec.panel_time)?;
    if unit_col.is_some() != time_col.is_some() {
        return Err(Error::Config(
            "panel_unit and panel_time must be given together".into(),
        ));
    }

    let mut rows = Vec::new();
    let mut labels: Vec<(i64, i64, i64)> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let cell = |j: usize| parse_cell(record.get(j).unwrap_or(""), line + 1, &headers[j]);
        let eval = |t: &Term| -> Result<f64> {
            match *t {
                Term::Constant => Ok(1.0),
                Term::Column(j) => cell(j),
                Term::Power(j, p) => Ok(cell(j)?.powi(p)),
            }
        };
        let mut row = Vec::with_capacity(1 + terms.len());
        row.push(eval(&y_col)?);
        for t in &terms {
            row.push(eval(t)?);
        }
        let as_label = |c: Option<usize>| -> Result<i64> {
            match c {
                None => Ok(0),
                Some(j) => {
                    let v = cell(j)?;
                    if v.fract() != 0.0 {
                        return Err(Error::Data(format!(
                            "label column '{}' must hold integers",
                            headers[j]
                        )));
                    }
                    Ok(v as i64)
                }
            }
        };
        labels.push((
            as_label(cluster_col)?,
            as_label(unit_col)?,
            as_label(time_col)?,
        ));
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data("CSV contains no data rows".into()));
    }

    let mut names = vec![spec.outcome.clone()];
    names.extend(spec.regressors.iter().cloned());

    if unit_col.is_some() {
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by_key(|&i| (labels[i].1, labels[i].2));
        let units: Vec<i64> = {
            let mut u: Vec<i64> = labels.iter().map(|l| l.1).collect();
            u.sort_unstable();
            u.dedup();
            u
        };
        if rows.len() % units.len() != 0 {
            return Err(Error::Data("panel is unbalanced".into()));
        }
        let t = rows.len() / units.len();
        for (k, &i) in order.iter().enumerate() {
            if labels[i].1 != units[k / t] {
                return Err(Error::Data("panel is unbalanced".into()));
            }
        }
        let sorted: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
        return Dataset::from_rows(sorted)?
            .with_column_names(names)?
            .with_panel(units.len(), t);
    }

    let mut data = Dataset::from_rows(rows)?.with_column_names(names)?;
    if cluster_col.is_some() {
        let ids = labels.iter().map(|l| l.0).collect::<Vec<_>>();
        let mut uniq = ids.clone();
        uniq.sort_unstable();
        uniq.dedup();
        let compact = ids.iter().map(|v| uniq.binary_search(v).unwrap()).collect();
        data = data.with_clusters(compact)?;
    }
    Ok(data)
}

/// Write a dataset in the schema [`read_csv`] ingests: the data columns,
/// then `cluster` (if clustered) or `unit,time` (if a panel).
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    let mut header: Vec<String> = data.column_names().to_vec();
    if data.panel_shape().is_some() {
        header.push("unit".into());
        header.push("time".into());
    } else if data.cluster_ids().is_some() {
        header.push("cluster".into());
    }
    w.write_record(&header)?;
    for (i, row) in data.rows().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        if let Some((_, t)) = data.panel_shape() {
            rec.push((i / t).to_string());
            rec.push((i % t).to_string());
        } else if let Some(ids) = data.cluster_ids() {
            rec.push(ids[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// The [`CsvSpec`] that reads back a file produced by [`write_csv`].
pub fn export_spec(data: &Dataset) -> CsvSpec {
    let names = data.column_names();
    let (panel_unit, panel_time, cluster) = if data.panel_shape().is_some() {
        (Some("unit".to_string()), Some("time".to_string()), None)
    } else if data.cluster_ids().is_some() {
        (None, None, Some("cluster".to_string()))
    } else {
        (None, None, None)
    };
    CsvSpec {
        outcome: names[0].clone(),
        regressors: names[1..].to_vec(),
        cluster,
        panel_unit,
        panel_time,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn rejects_ragged_rows() {
        let err = Dataset::from_rows(vec![vec![1.0, 2.0], vec![1.0]]).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn cluster_labels_are_compacted() {
        let d = Dataset::from_rows(vec![vec![0.0]; 4])
            .unwrap()
            .with_clusters(vec![7, 3, 7, 9])
            .unwrap();
        assert_eq!(d.cluster_ids().unwrap(), &[0, 1, 0, 2]);
        assert_eq!(d.clusters(), &[vec![0, 2], vec![1], vec![3]]);
    }

    #[test]
    fn panel_shape_must_match() {
        let d = Dataset::from_rows(vec![vec![0.0]; 6]).unwrap();
        assert!(d.clone().with_panel(4, 2).is_err());
        let p = d.with_panel(3, 2).unwrap();
        assert_eq!(p.n_clusters(), 3);
    }

    #[test]
    fn panel_halves_keep_units() {
        let rows = (0..12).map(|i| vec![i as f64]).collect();
        let d = Dataset::from_rows(rows).unwrap().with_panel(3, 4).unwrap();
        let first = d.panel_periods(0..2).unwrap();
        let second = d.panel_periods(2..4).unwrap();
        assert_eq!(first.outcome(), vec![0.0, 1.0, 4.0, 5.0, 8.0, 9.0]);
        assert_eq!(second.outcome(), vec![2.0, 3.0, 6.0, 7.0, 10.0, 11.0]);
        assert_eq!(first.panel_shape(), Some((3, 2)));
    }

    #[test]
    fn csv_ingest_with_derived_columns() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "y,a,b,g").unwrap();
        writeln!(f, "1,2,3,10").unwrap();
        writeln!(f, "0,4,5,20").unwrap();
        f.flush().unwrap();
        let spec = CsvSpec {
            outcome: "y".into(),
            regressors: vec!["a".into(), "b^2".into(), "const".into()],
            cluster: Some("g".into()),
            ..Default::default()
        };
        let d = read_csv(f.path(), &spec).unwrap();
        assert_eq!(d.row(0), &[1.0, 2.0, 9.0, 1.0]);
        assert_eq!(d.row(1), &[0.0, 4.0, 25.0, 1.0]);
        assert_eq!(d.n_clusters(), 2);
    }

    #[test]
    fn csv_rejects_missing_values_in_mapped_columns() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "y,a,unused").unwrap();
        writeln!(f, "1,2,").unwrap();
        writeln!(f, "1,,3").unwrap();
        f.flush().unwrap();
        let spec = CsvSpec {
            outcome: "y".into(),
            regressors: vec!["a".into()],
            ..Default::default()
        };
        let err = read_csv(f.path(), &spec).unwrap_err();
        assert!(err.to_string().contains("missing value"), "{err}");
    }

    #[test]
    fn csv_panel_is_sorted_unit_major() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "y,x,id,t").unwrap();
        for (id, t, y) in [(2, 1, 4.0), (1, 0, 1.0), (2, 0, 3.0), (1, 1, 2.0)] {
            writeln!(f, "{y},0,{id},{t}").unwrap();
        }
        f.flush().unwrap();
        let spec = CsvSpec {
            outcome: "y".into(),
            regressors: vec!["x".into()],
            panel_unit: Some("id".into()),
            panel_time: Some("t".into()),
            ..Default::default()
        };
        let d = read_csv(f.path(), &spec).unwrap();
        assert_eq!(d.outcome(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(d.panel_shape(), Some((2, 2)));
    }

    #[test]
    fn export_round_trips() {
        let rows = (0..6)
            .map(|i| vec![i as f64 * 0.1, 1.0, (i * i) as f64 / 7.0])
            .collect();
        let d = Dataset::from_rows(rows).unwrap().with_panel(3, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_csv(&d, &path).unwrap();
        let back = read_csv(&path, &export_spec(&d)).unwrap();
        assert_eq!(back, d);
    }
}
