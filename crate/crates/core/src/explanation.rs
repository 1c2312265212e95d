use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::coalition::Coalition;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Which survival quantity a prediction function returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionTarget {
    LogHazard,
    Hazard,
    Survival,
}

impl PredictionTarget {
    pub const ALL: [PredictionTarget; 3] = [
        PredictionTarget::LogHazard,
        PredictionTarget::Hazard,
        PredictionTarget::Survival,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PredictionTarget::LogHazard => "loghazard",
            PredictionTarget::Hazard => "hazard",
            PredictionTarget::Survival => "survival",
        }
    }
}

impl fmt::Display for PredictionTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PredictionTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "loghazard" | "log-hazard" | "log_hazard" => Ok(PredictionTarget::LogHazard),
            "hazard" => Ok(PredictionTarget::Hazard),
            "survival" => Ok(PredictionTarget::Survival),
            other => Err(Error::Parse(format!("unknown prediction target {other:?}"))),
        }
    }
}

/// Per-coalition attribution curves of order at most `order`, plus the
/// baseline curve (the mean prediction over the reference data).
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionExplanation {
    order: usize,
    target: PredictionTarget,
    grid: TimeGrid,
    baseline: Vec<f64>,
    values: BTreeMap<Coalition, Vec<f64>>,
}

impl InteractionExplanation {
    pub fn new(
        order: usize,
        target: PredictionTarget,
        grid: TimeGrid,
        baseline: Vec<f64>,
        values: BTreeMap<Coalition, Vec<f64>>,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("explanation order must be at least 1"));
        }
        if baseline.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: baseline.len(),
            });
        }
        for (c, v) in &values {
            if c.is_empty() || c.len() > order {
                return Err(Error::invalid(format!(
                    "coalition {{{c}}} does not fit order {order}"
                )));
            }
            if v.len() != grid.len() {
                return Err(Error::DimensionMismatch {
                    expected: grid.len(),
                    got: v.len(),
                });
            }
        }
        Ok(InteractionExplanation {
            order,
            target,
            grid,
            baseline,
            values,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn target(&self) -> PredictionTarget {
        self.target
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn baseline(&self) -> &[f64] {
        &self.baseline
    }

    pub fn values(&self) -> &BTreeMap<Coalition, Vec<f64>> {
        &self.values
    }

    pub fn curve(&self, c: Coalition) -> Option<&[f64]> {
        self.values.get(&c).map(Vec::as_slice)
    }

    /// Sum of all non-baseline attributions at each timepoint.
    pub fn attribution_sum(&self) -> Vec<f64> {
        let mut sum = vec![0.0; self.grid.len()];
        for v in self.values.values() {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
        }
        sum
    }

    /// Applies `f` to every attribution curve; the baseline is kept.
    pub fn map_curves(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        let values = self.values.iter().map(|(c, v)| (*c, f(v))).collect();
        Self::new(
            self.order,
            self.target,
            self.grid.clone(),
            self.baseline.clone(),
            values,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Long format: `coalition,t,value`, baseline rows first.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["coalition", "t", "value"])?;
        for (t, b) in self.grid.points().iter().zip(&self.baseline) {
            w.write_record(["baseline", &t.to_string(), &b.to_string()])?;
        }
        for (c, curve) in &self.values {
            let key = c.to_string();
            for (t, v) in self.grid.points().iter().zip(curve) {
                w.write_record([key.as_str(), &t.to_string(), &v.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Reads the long CSV format back. The file carries no order, target or
    /// `t_max`, so those are supplied by the caller.
    pub fn read_csv<R: Read>(reader: R, order: usize, target: PredictionTarget, t_max: f64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut times: Vec<f64> = Vec::new();
        let mut baseline: Vec<(f64, f64)> = Vec::new();
        let mut values: BTreeMap<Coalition, Vec<(f64, f64)>> = BTreeMap::new();
        for rec in r.records() {
            let rec = rec?;
            let t: f64 = rec[1].parse().map_err(|_| Error::Parse(format!("bad time {:?}", &rec[1])))?;
            let v: f64 = rec[2].parse().map_err(|_| Error::Parse(format!("bad value {:?}", &rec[2])))?;
            if &rec[0] == "baseline" {
                times.push(t);
                baseline.push((t, v));
            } else {
                values.entry(rec[0].parse()?).or_default().push((t, v));
            }
        }
        let grid = TimeGrid::new(times, t_max)?;
        let align = |pairs: Vec<(f64, f64)>| -> Result<Vec<f64>> {
            if pairs.len() != grid.len() || pairs.iter().zip(grid.points()).any(|((t, _), g)| t != g) {
                return Err(Error::Parse("curve timepoints do not match the baseline rows".into()));
            }
            Ok(pairs.into_iter().map(|(_, v)| v).collect())
        };
        let baseline = align(baseline)?;
        let values = values
            .into_iter()
            .map(|(c, pairs)| Ok((c, align(pairs)?)))
            .collect::<Result<_>>()?;
        Self::new(order, target, grid, baseline, values)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

struct CurveMap<'a>(&'a BTreeMap<Coalition, Vec<f64>>);

impl Serialize for CurveMap<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (c, v) in self.0 {
            map.serialize_entry(&c.to_string(), v)?;
        }
        map.end()
    }
}

impl Serialize for InteractionExplanation {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(5))?;
        map.serialize_entry("order", &self.order)?;
        map.serialize_entry("target", &self.target)?;
        map.serialize_entry("grid", &self.grid)?;
        map.serialize_entry("baseline", &self.baseline)?;
        map.serialize_entry("values", &CurveMap(&self.values))?;
        map.end()
    }
}

#[derive(Deserialize)]
struct RawExplanation {
    order: usize,
    target: PredictionTarget,
    grid: TimeGrid,
    baseline: Vec<f64>,
    values: HashMap<String, Vec<f64>>,
}

impl<'de> Deserialize<'de> for InteractionExplanation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = RawExplanation::deserialize(d)?;
        let values = raw
            .values
            .into_iter()
            .map(|(k, v)| Ok((k.parse::<Coalition>()?, v)))
            .collect::<Result<BTreeMap<_, _>>>()
            .map_err(D::Error::custom)?;
        InteractionExplanation::new(raw.order, raw.target, raw.grid, raw.baseline, values)
            .map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(order: usize, vals: &[f64]) -> InteractionExplanation {
        let grid = TimeGrid::new(vec![10.0, 20.0], 20.0).unwrap();
        let mut values = BTreeMap::new();
        values.insert("1".parse().unwrap(), vec![vals[0], vals[1]]);
        values.insert("2".parse().unwrap(), vec![vals[2], vals[3]]);
        if order >= 2 {
            values.insert("1+2".parse().unwrap(), vec![vals[4], vals[5]]);
        }
        InteractionExplanation::new(order, PredictionTarget::Hazard, grid, vec![0.1, 0.2], values)
            .unwrap()
    }

    #[test]
    fn rejects_out_of_order_keys() {
        let grid = TimeGrid::new(vec![1.0], 1.0).unwrap();
        let mut values = BTreeMap::new();
        values.insert("1+2".parse().unwrap(), vec![0.0]);
        assert!(InteractionExplanation::new(1, PredictionTarget::Hazard, grid.clone(), vec![0.0], values.clone()).is_err());
        values.clear();
        values.insert(Coalition::EMPTY, vec![0.0]);
        assert!(InteractionExplanation::new(1, PredictionTarget::Hazard, grid.clone(), vec![0.0], values.clone()).is_err());
        values.clear();
        values.insert("1".parse().unwrap(), vec![0.0, 1.0]);
        assert!(InteractionExplanation::new(1, PredictionTarget::Hazard, grid, vec![0.0], values).is_err());
    }

    #[test]
    fn csv_layout() {
        let e = sample(2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "coalition,t,value");
        assert_eq!(lines[1], "baseline,10,0.1");
        assert_eq!(lines[3], "1,10,1");
        assert_eq!(lines[7], "1+2,10,5");
    }

    #[test]
    fn json_shape() {
        let e = sample(2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let v: serde_json::Value = serde_json::from_str(&e.to_json().unwrap()).unwrap();
        assert_eq!(v["order"], 2);
        assert_eq!(v["target"], "hazard");
        assert_eq!(v["values"]["1+2"][1], 6.0);
        assert_eq!(v["baseline"][0], 0.1);
    }

    proptest! {
        #[test]
        fn file_round_trips_are_value_identical(vals in proptest::collection::vec(-1e6f64..1e6, 6)) {
            let e = sample(2, &vals);
            let back = InteractionExplanation::from_json(&e.to_json().unwrap()).unwrap();
            prop_assert_eq!(&back, &e);
            let mut buf = Vec::new();
            e.write_csv(&mut buf).unwrap();
            let back = InteractionExplanation::read_csv(&buf[..], 2, PredictionTarget::Hazard, 20.0).unwrap();
            prop_assert_eq!(&back, &e);
        }
    }
}
