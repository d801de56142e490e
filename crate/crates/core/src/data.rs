//! Observed experiment data and the per-stratum bookkeeping shared by every
//! estimator.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Observed sample `{Y_i, D_i, A_i, S_i, X_i}`.
///
/// Strata are stored as dense indices `0..n_strata` into `labels`. The
/// dataset is immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    y: Vec<f64>,
    d: Vec<u8>,
    a: Vec<u8>,
    s: Vec<usize>,
    labels: Vec<String>,
    x: DMatrix<f64>,
    x_names: Vec<String>,
}

/// Raw, unvalidated input columns.
#[derive(Debug, Clone, Default)]
pub struct RawColumns {
    pub y: Vec<f64>,
    pub d: Vec<f64>,
    pub a: Vec<f64>,
    pub s: Vec<String>,
    /// Covariate columns, each of length n.
    pub x: Vec<Vec<f64>>,
    /// Optional covariate names; defaults to `x1..xk`.
    pub x_names: Vec<String>,
}

fn binary(values: &[f64], what: &'static str) -> Result<Vec<u8>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v == 0.0 {
                Ok(0)
            } else if v == 1.0 {
                Ok(1)
            } else {
                Err(Error::NonBinary {
                    what,
                    index: i,
                    value: v,
                })
            }
        })
        .collect()
}

fn compare_labels(a: &str, b: &str) -> Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.partial_cmp(&y).unwrap_or(Ordering::Equal).then(a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        _ => a.cmp(b),
    }
}

/// Maps free-form stratum labels to dense indices, ordered numerically when
/// a label parses as a number and lexicographically otherwise.
pub fn canonicalize_labels<S: AsRef<str>>(raw: &[S]) -> (Vec<usize>, Vec<String>) {
    let mut labels: Vec<String> = raw.iter().map(|l| l.as_ref().to_string()).collect();
    labels.sort_by(|a, b| compare_labels(a, b));
    labels.dedup();
    let lookup: BTreeMap<&str, usize> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let dense = raw.iter().map(|l| lookup[l.as_ref()]).collect();
    (dense, labels)
}

impl ExperimentData {
    /// Validates raw columns and canonicalizes stratum labels.
    pub fn build(raw: RawColumns) -> Result<Self> {
        let n = raw.y.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let check = |column: &str, len: usize| -> Result<()> {
            if len != n {
                Err(Error::LengthMismatch {
                    column: column.to_string(),
                    expected: n,
                    found: len,
                })
            } else {
                Ok(())
            }
        };
        check("d", raw.d.len())?;
        check("a", raw.a.len())?;
        check("s", raw.s.len())?;
        let k = raw.x.len();
        let names: Vec<String> = if raw.x_names.len() == k {
            raw.x_names.clone()
        } else {
            (1..=k).map(|j| format!("x{j}")).collect()
        };
        for (j, col) in raw.x.iter().enumerate() {
            check(&names[j], col.len())?;
        }
        let d = binary(&raw.d, "treatment")?;
        let a = binary(&raw.a, "assignment")?;
        let (s, labels) = canonicalize_labels(&raw.s);
        let x = DMatrix::from_fn(n, k, |i, j| raw.x[j][i]);
        Self::from_parts(raw.y, d, a, s, labels, x, names)
    }

    /// Builds a dataset from already-dense parts. Used by the simulation
    /// path, where strata come out of the generator as indices.
    pub fn from_parts(
        y: Vec<f64>,
        d: Vec<u8>,
        a: Vec<u8>,
        s: Vec<usize>,
        labels: Vec<String>,
        x: DMatrix<f64>,
        x_names: Vec<String>,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        for (column, len) in [("d", d.len()), ("a", a.len()), ("s", s.len()), ("x", x.nrows())] {
            if len != n {
                return Err(Error::LengthMismatch {
                    column: column.to_string(),
                    expected: n,
                    found: len,
                });
            }
        }
        if x_names.len() != x.ncols() {
            return Err(Error::InvalidConfig(format!(
                "{} covariate names for {} covariates",
                x_names.len(),
                x.ncols()
            )));
        }
        for (i, &v) in d.iter().enumerate() {
            if v > 1 {
                return Err(Error::NonBinary {
                    what: "treatment",
                    index: i,
                    value: v as f64,
                });
            }
        }
        for (i, &v) in a.iter().enumerate() {
            if v > 1 {
                return Err(Error::NonBinary {
                    what: "assignment",
                    index: i,
                    value: v as f64,
                });
            }
        }
        if let Some(&bad) = s.iter().find(|&&v| v >= labels.len()) {
            return Err(Error::InvalidConfig(format!(
                "stratum index {bad} out of range for {} labels",
                labels.len()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                column: "y".into(),
                index: i,
            });
        }
        for j in 0..x.ncols() {
            let col = x.column(j);
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    column: x_names[j].clone(),
                    index: i,
                });
            }
            let first = col[0];
            if col.iter().all(|&v| v == first) {
                return Err(Error::ConstantCovariate {
                    column: x_names[j].clone(),
                });
            }
        }
        Ok(Self {
            y,
            d,
            a,
            s,
            labels,
            x,
            x_names,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn d(&self) -> &[u8] {
        &self.d
    }

    pub fn a(&self) -> &[u8] {
        &self.a
    }

    /// Dense stratum index per unit.
    pub fn s(&self) -> &[usize] {
        &self.s
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_strata(&self) -> usize {
        self.labels.len()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn x_names(&self) -> &[String] {
        &self.x_names
    }

    pub fn n_covariates(&self) -> usize {
        self.x.ncols()
    }

    pub fn d_f64(&self, i: usize) -> f64 {
        self.d[i] as f64
    }

    pub fn a_f64(&self, i: usize) -> f64 {
        self.a[i] as f64
    }

    pub fn index_strata(&self) -> StrataIndex {
        StrataIndex::new(self)
    }

    /// Reads the `y,d,a,s,x1,...,xk` CSV layout. Covariate columns are every
    /// column other than the four named ones, in file order.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let find = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let (iy, id, ia, is) = (find("y")?, find("d")?, find("a")?, find("s")?);
        let xcols: Vec<usize> = (0..headers.len())
            .filter(|c| ![iy, id, ia, is].contains(c))
            .collect();
        let mut raw = RawColumns {
            x: vec![Vec::new(); xcols.len()],
            x_names: xcols.iter().map(|&c| headers[c].to_string()).collect(),
            ..Default::default()
        };
        for (row, record) in rdr.records().enumerate() {
            let line = row + 2;
            let record = record.map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            let num = |c: usize| -> Result<f64> {
                let field = record.get(c).unwrap_or("");
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("column `{}`: cannot parse `{field}` as a number", &headers[c]),
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Parse {
                        line,
                        message: format!("column `{}`: non-finite value", &headers[c]),
                    })
                }
            };
            raw.y.push(num(iy)?);
            let d = num(id)?;
            let a = num(ia)?;
            for (what, v) in [("d", d), ("a", a)] {
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Parse {
                        line,
                        message: format!("column `{what}` must be 0 or 1, found {v}"),
                    });
                }
            }
            raw.d.push(d);
            raw.a.push(a);
            let s = record.get(is).unwrap_or("");
            if s.is_empty() {
                return Err(Error::Parse {
                    line,
                    message: "missing stratum label".into(),
                });
            }
            raw.s.push(s.to_string());
            for (j, &c) in xcols.iter().enumerate() {
                raw.x[j].push(num(c)?);
            }
        }
        Self::build(raw)
    }

    /// Writes the same layout `read_csv` accepts, with full precision.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(e.to_string());
        let mut header = vec!["y".to_string(), "d".into(), "a".into(), "s".into()];
        header.extend(self.x_names.iter().cloned());
        w.write_record(&header).map_err(io)?;
        for i in 0..self.n() {
            let mut rec = vec![
                format!("{}", self.y[i]),
                self.d[i].to_string(),
                self.a[i].to_string(),
                self.labels[self.s[i]].clone(),
            ];
            rec.extend((0..self.x.ncols()).map(|j| format!("{}", self.x[(i, j)])));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

/// Per-stratum counts and index sets.
#[derive(Debug, Clone, PartialEq)]
pub struct StrataIndex {
    pub strata: Vec<String>,
    pub n: usize,
    pub n_of: Vec<usize>,
    pub n1_of: Vec<usize>,
    pub n0_of: Vec<usize>,
    pub i1_of: Vec<Vec<usize>>,
    pub i0_of: Vec<Vec<usize>>,
    pub pi_hat: Vec<f64>,
    pub p_hat: Vec<f64>,
}

impl StrataIndex {
    pub fn new(data: &ExperimentData) -> Self {
        let k = data.n_strata();
        let mut i1_of = vec![Vec::new(); k];
        let mut i0_of = vec![Vec::new(); k];
        for (i, (&s, &a)) in data.s().iter().zip(data.a()).enumerate() {
            if a == 1 {
                i1_of[s].push(i);
            } else {
                i0_of[s].push(i);
            }
        }
        let n1_of: Vec<usize> = i1_of.iter().map(Vec::len).collect();
        let n0_of: Vec<usize> = i0_of.iter().map(Vec::len).collect();
        let n_of: Vec<usize> = n1_of.iter().zip(&n0_of).map(|(a, b)| a + b).collect();
        let n = data.n();
        let pi_hat = n1_of
            .iter()
            .zip(&n_of)
            .map(|(&n1, &ns)| if ns == 0 { f64::NAN } else { n1 as f64 / ns as f64 })
            .collect();
        let p_hat = n_of.iter().map(|&ns| ns as f64 / n as f64).collect();
        Self {
            strata: data.labels().to_vec(),
            n,
            n_of,
            n1_of,
            n0_of,
            i1_of,
            i0_of,
            pi_hat,
            p_hat,
        }
    }

    pub fn n_strata(&self) -> usize {
        self.strata.len()
    }

    /// Units of stratum `s` in arm `arm`.
    pub fn cell(&self, arm: u8, s: usize) -> &[usize] {
        if arm == 1 {
            &self.i1_of[s]
        } else {
            &self.i0_of[s]
        }
    }

    /// All units of stratum `s`, treated first.
    pub fn members(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        self.i1_of[s].iter().chain(&self.i0_of[s]).copied()
    }

    /// Checks `0 < pi_hat(s) < 1` for every stratum that has units.
    pub fn require_interior(&self) -> Result<()> {
        for (s, &pi) in self.pi_hat.iter().enumerate() {
            if self.n_of[s] == 0 {
                continue;
            }
            if !(pi > 0.0 && pi < 1.0) {
                return Err(Error::DegenerateAssignment {
                    stratum: self.strata[s].clone(),
                    pi_hat: pi,
                });
            }
        }
        Ok(())
    }
}
