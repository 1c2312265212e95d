use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Right-censored survival data: `n` rows of `p` features with observed
/// times and event indicators. Features are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    n: usize,
    p: usize,
    features: Vec<f64>,
    times: Vec<f64>,
    events: Vec<bool>,
}

impl SurvivalDataset {
    pub fn new(rows: Vec<Vec<f64>>, times: Vec<f64>, events: Vec<bool>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("dataset has no rows"));
        }
        let p = rows[0].len();
        let mut features = Vec::with_capacity(n * p);
        for row in &rows {
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: row.len(),
                });
            }
            features.extend_from_slice(row);
        }
        Self::from_flat(n, p, features, times, events)
    }

    pub fn from_flat(
        n: usize,
        p: usize,
        features: Vec<f64>,
        times: Vec<f64>,
        events: Vec<bool>,
    ) -> Result<Self> {
        if features.len() != n * p {
            return Err(Error::DimensionMismatch {
                expected: n * p,
                got: features.len(),
            });
        }
        if times.len() != n || events.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: times.len().min(events.len()),
            });
        }
        if let Some(&v) = features.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "feature matrix",
                value: v,
            });
        }
        if let Some(&t) = times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(Error::invalid(format!("observed time {t} is not a finite value >= 0")));
        }
        if !events.iter().any(|&e| e) {
            return Err(Error::invalid("dataset contains no events"));
        }
        Ok(SurvivalDataset {
            n,
            p,
            features,
            times,
            events,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.features.chunks_exact(self.p.max(1)).take(self.n)
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn events(&self) -> &[bool] {
        &self.events
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().filter(|&&e| e).count()
    }

    /// Rows at the given indices, in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(idx.len() * self.p);
        let mut times = Vec::with_capacity(idx.len());
        let mut events = Vec::with_capacity(idx.len());
        for &i in idx {
            if i >= self.n {
                return Err(Error::invalid(format!("row index {i} out of range")));
            }
            features.extend_from_slice(self.row(i));
            times.push(self.times[i]);
            events.push(self.events[i]);
        }
        Self::from_flat(idx.len(), self.p, features, times, events)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.p).map(|j| format!("x{j}")).collect();
        header.push("time".into());
        header.push("event".into());
        w.write_record(&header)?;
        for i in 0..self.n {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.times[i].to_string());
            rec.push(if self.events[i] { "1" } else { "0" }.into());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let cols = header.len();
        if cols < 2 || &header[cols - 2] != "time" || &header[cols - 1] != "event" {
            return Err(Error::Parse(
                "dataset header must end with `time,event`".into(),
            ));
        }
        let p = cols - 2;
        let mut features = Vec::new();
        let mut times = Vec::new();
        let mut events = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            for field in rec.iter().take(p) {
                features.push(parse_f64(field)?);
            }
            times.push(parse_f64(&rec[p])?);
            events.push(match rec[p + 1].trim() {
                "1" => true,
                "0" => false,
                other => return Err(Error::Parse(format!("event must be 0 or 1, got {other:?}"))),
            });
        }
        Self::from_flat(times.len(), p, features, times, events)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("not a number: {s:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SurvivalDataset {
        SurvivalDataset::new(
            vec![vec![0.5, -1.25], vec![2.0, 3.0], vec![-0.1, 0.0]],
            vec![1.5, 70.0, 3.25],
            vec![true, false, true],
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let d = small();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2,time,event\n"));
        assert_eq!(SurvivalDataset::read_csv(&buf[..]).unwrap(), d);
    }

    #[test]
    fn invariants_enforced() {
        assert!(SurvivalDataset::new(vec![vec![1.0]], vec![1.0], vec![false]).is_err());
        assert!(SurvivalDataset::new(vec![vec![f64::NAN]], vec![1.0], vec![true]).is_err());
        assert!(SurvivalDataset::new(vec![vec![1.0]], vec![-1.0], vec![true]).is_err());
        assert!(SurvivalDataset::new(vec![vec![1.0], vec![1.0, 2.0]], vec![1.0; 2], vec![true; 2]).is_err());
    }

    #[test]
    fn bad_event_field() {
        let text = "x1,time,event\n1.0,2.0,2\n";
        assert!(SurvivalDataset::read_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn subset_keeps_order() {
        let d = small().subset(&[2, 0]).unwrap();
        assert_eq!(d.row(0), &[-0.1, 0.0]);
        assert_eq!(d.times(), &[3.25, 1.5]);
    }
}
