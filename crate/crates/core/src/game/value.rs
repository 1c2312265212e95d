use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rayon::prelude::*;

use super::imputer::Imputer;
use super::predictor::Predictor;
use crate::coalition::{Coalition, MAX_EXACT_PLAYERS};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// A cooperative game whose value is a curve over a fixed set of timepoints.
pub trait TimeGame: Sync {
    fn n_players(&self) -> usize;

    fn n_times(&self) -> usize;

    /// `ν(t|M)` at every timepoint.
    fn value_curve(&self, coalition: Coalition) -> Result<Vec<f64>>;
}

/// Predictor, imputer and the reference curve `E[F(t|X)]` shared by every
/// explained instance.
pub struct GameSetup {
    predictor: Arc<dyn Predictor>,
    imputer: Arc<Imputer>,
    baseline: Vec<f64>,
}

impl GameSetup {
    pub fn new(predictor: Arc<dyn Predictor>, imputer: Arc<Imputer>) -> Result<Self> {
        if predictor.p() != imputer.p() {
            return Err(Error::DimensionMismatch {
                expected: predictor.p(),
                got: imputer.p(),
            });
        }
        let mut baseline = vec![0.0; predictor.grid().len()];
        predictor.mean_into(&imputer.reference_rows(), &mut baseline)?;
        Ok(GameSetup {
            predictor,
            imputer,
            baseline,
        })
    }

    pub fn p(&self) -> usize {
        self.predictor.p()
    }

    pub fn grid(&self) -> &TimeGrid {
        self.predictor.grid()
    }

    pub fn predictor(&self) -> &Arc<dyn Predictor> {
        &self.predictor
    }

    pub fn imputer(&self) -> &Arc<Imputer> {
        &self.imputer
    }

    /// `E[F(t|X)]` under the imputer's reference distribution.
    pub fn baseline(&self) -> &[f64] {
        &self.baseline
    }

    pub fn game(&self, instance: &[f64]) -> Result<SurvivalGame<'_>> {
        if instance.len() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                got: instance.len(),
            });
        }
        if let Some(&v) = instance.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "instance",
                value: v,
            });
        }
        Ok(SurvivalGame {
            setup: self,
            instance: instance.to_vec(),
        })
    }
}

/// The centered game `ν(t|M) = E[F(t | x_M, X_{M̄})] − E[F(t|X)]` for one
/// instance.
pub struct SurvivalGame<'a> {
    setup: &'a GameSetup,
    instance: Vec<f64>,
}

impl SurvivalGame<'_> {
    pub fn instance(&self) -> &[f64] {
        &self.instance
    }

    pub fn setup(&self) -> &GameSetup {
        self.setup
    }

    pub fn grid(&self) -> &TimeGrid {
        self.setup.grid()
    }

    pub fn baseline(&self) -> &[f64] {
        self.setup.baseline()
    }

    /// `F(t|x)` on the grid.
    pub fn prediction(&self) -> Result<Vec<f64>> {
        self.setup.predictor.predict(&self.instance)
    }

    /// `ν(t|M)` at a single grid point.
    pub fn value(&self, coalition: Coalition, t: f64) -> Result<f64> {
        let i = self
            .grid()
            .index_of(t)
            .ok_or_else(|| Error::invalid(format!("t = {t} is not a grid point")))?;
        Ok(self.value_curve(coalition)?[i])
    }
}

impl TimeGame for SurvivalGame<'_> {
    fn n_players(&self) -> usize {
        self.setup.p()
    }

    fn n_times(&self) -> usize {
        self.setup.grid().len()
    }

    fn value_curve(&self, coalition: Coalition) -> Result<Vec<f64>> {
        let p = self.setup.p();
        if !coalition.fits(p) {
            return Err(Error::invalid(format!("coalition {{{coalition}}} exceeds p = {p}")));
        }
        let mut out = vec![0.0; self.n_times()];
        if coalition.is_empty() {
            return Ok(out);
        }
        let wrap = |e| Error::Prediction {
            coalition,
            source: Box::new(e),
        };
        let mut rows = Vec::new();
        self.setup
            .imputer
            .impute(&self.instance, coalition, &mut rows)
            .map_err(wrap)?;
        self.setup.predictor.mean_into(&rows, &mut out).map_err(wrap)?;
        for (o, b) in out.iter_mut().zip(&self.setup.baseline) {
            *o -= b;
        }
        Ok(out)
    }
}

/// Complete table of `ν(t|M)` for all `2^p` coalitions, stored per coalition
/// as contiguous curves indexed by the coalition bits.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    p: usize,
    n_times: usize,
    values: Vec<f64>,
}

impl ValueTable {
    pub fn new(p: usize, n_times: usize, values: Vec<f64>) -> Result<Self> {
        if p > MAX_EXACT_PLAYERS {
            return Err(Error::invalid(format!("exact tables support at most {MAX_EXACT_PLAYERS} players")));
        }
        let expected = (1usize << p) * n_times;
        if values.len() != expected {
            return Err(Error::IncompleteTable(format!(
                "{} values for {} coalitions × {n_times} timepoints",
                values.len(),
                1usize << p
            )));
        }
        if values[..n_times].iter().any(|&v| v != 0.0) {
            return Err(Error::invalid("the empty coalition must have value 0"));
        }
        Ok(ValueTable { p, n_times, values })
    }

    /// Builds a table by evaluating `f` on every non-empty coalition.
    pub fn from_fn(p: usize, n_times: usize, mut f: impl FnMut(Coalition) -> Vec<f64>) -> Result<Self> {
        let mut values = vec![0.0; (1usize << p) * n_times];
        for bits in 1..(1u64 << p) {
            let curve = f(Coalition::from_bits(bits));
            if curve.len() != n_times {
                return Err(Error::DimensionMismatch {
                    expected: n_times,
                    got: curve.len(),
                });
            }
            let i = bits as usize * n_times;
            values[i..i + n_times].copy_from_slice(&curve);
        }
        Self::new(p, n_times, values)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn curve(&self, c: Coalition) -> &[f64] {
        let i = c.bits() as usize * self.n_times;
        &self.values[i..i + self.n_times]
    }

    pub fn get(&self, c: Coalition, ti: usize) -> f64 {
        self.values[c.bits() as usize * self.n_times + ti]
    }

    /// Values of every coalition (indexed by bits) at timepoint `ti`.
    pub fn slice_at(&self, ti: usize) -> Vec<f64> {
        self.values.iter().skip(ti).step_by(self.n_times).copied().collect()
    }

    pub fn raw(&self) -> &[f64] {
        &self.values
    }

    /// Debug dump with header `t,coalition,value`; the empty coalition is
    /// written as an empty field.
    pub fn write_csv<W: Write>(&self, grid: &TimeGrid, writer: W) -> Result<()> {
        if grid.len() != self.n_times {
            return Err(Error::DimensionMismatch {
                expected: self.n_times,
                got: grid.len(),
            });
        }
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "coalition", "value"])?;
        let mut all: Vec<Coalition> = (0..1u64 << self.p).map(Coalition::from_bits).collect();
        all.sort();
        for (ti, t) in grid.points().iter().enumerate() {
            for c in &all {
                w.write_record([t.to_string(), c.to_string(), self.get(*c, ti).to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Default cap on the memory an exact evaluation may allocate.
pub const DEFAULT_MEMORY_BUDGET: u128 = 4 << 30;

/// Bytes needed to hold a table and its Möbius transform.
pub fn exact_memory_estimate(p: usize, n_times: usize) -> u128 {
    (1u128 << p) * n_times as u128 * 8 * 2
}

/// Evaluates `ν` on all `2^p` coalitions. Coalitions are processed in
/// parallel; each is evaluated exactly once.
pub fn evaluate_all_coalitions(game: &dyn TimeGame, memory_budget: u128) -> Result<ValueTable> {
    let p = game.n_players();
    if p > MAX_EXACT_PLAYERS {
        return Err(Error::invalid(format!(
            "exact evaluation supports at most {MAX_EXACT_PLAYERS} players, got {p}"
        )));
    }
    let n_t = game.n_times();
    let required = exact_memory_estimate(p, n_t);
    if required > memory_budget {
        return Err(Error::MemoryBudget {
            required,
            budget: memory_budget,
        });
    }
    let mut values = vec![0.0; (1usize << p) * n_t];
    values
        .par_chunks_mut(n_t.max(1))
        .enumerate()
        .skip(1)
        .try_for_each(|(bits, chunk)| -> Result<()> {
            let curve = game.value_curve(Coalition::from_bits(bits as u64))?;
            if curve.len() != n_t {
                return Err(Error::DimensionMismatch {
                    expected: n_t,
                    got: curve.len(),
                });
            }
            chunk.copy_from_slice(&curve);
            Ok(())
        })?;
    ValueTable::new(p, n_t, values)
}

/// A precomputed table served as a game.
pub struct TableGame {
    table: Arc<ValueTable>,
}

impl TableGame {
    pub fn new(table: Arc<ValueTable>) -> Self {
        TableGame { table }
    }
}

impl TimeGame for TableGame {
    fn n_players(&self) -> usize {
        self.table.p()
    }

    fn n_times(&self) -> usize {
        self.table.n_times()
    }

    fn value_curve(&self, coalition: Coalition) -> Result<Vec<f64>> {
        if !coalition.fits(self.table.p()) {
            return Err(Error::invalid(format!("coalition {{{coalition}}} out of range")));
        }
        Ok(self.table.curve(coalition).to_vec())
    }
}

/// A game defined by a closure; the closure's value at the empty coalition
/// is subtracted so the game is centered.
pub struct FnGame<F> {
    p: usize,
    n_times: usize,
    f: F,
    empty: Vec<f64>,
}

impl<F: Fn(Coalition) -> Vec<f64> + Sync> FnGame<F> {
    pub fn new(p: usize, n_times: usize, f: F) -> Self {
        let empty = f(Coalition::EMPTY);
        FnGame { p, n_times, f, empty }
    }
}

impl<F: Fn(Coalition) -> Vec<f64> + Sync> TimeGame for FnGame<F> {
    fn n_players(&self) -> usize {
        self.p
    }

    fn n_times(&self) -> usize {
        self.n_times
    }

    fn value_curve(&self, coalition: Coalition) -> Result<Vec<f64>> {
        let v = (self.f)(coalition);
        if v.len() != self.n_times {
            return Err(Error::DimensionMismatch {
                expected: self.n_times,
                got: v.len(),
            });
        }
        Ok(v.iter().zip(&self.empty).map(|(a, b)| a - b).collect())
    }
}

/// Counts coalition evaluations of the wrapped game.
pub struct CountingGame<'a> {
    inner: &'a dyn TimeGame,
    calls: AtomicUsize,
}

impl<'a> CountingGame<'a> {
    pub fn new(inner: &'a dyn TimeGame) -> Self {
        CountingGame {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl TimeGame for CountingGame<'_> {
    fn n_players(&self) -> usize {
        self.inner.n_players()
    }

    fn n_times(&self) -> usize {
        self.inner.n_times()
    }

    fn value_curve(&self, coalition: Coalition) -> Result<Vec<f64>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.value_curve(coalition)
    }
}
